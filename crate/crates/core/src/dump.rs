//! Canonical text dumps.
//!
//! Voxel dump: one line per voxel, `ix iy iz <payload fields>`, sorted by
//! `(ix, iy, iz)`. Tile dump: `ix iy hits height_sum height_weight navigable`,
//! sorted by `(ix, iy)`. Both are byte-identical for equal maps, which makes
//! them the reference for determinism tests.

use std::fmt::Write as _;

use crate::fusion::{write_sig9, FusionError, Payload};
use crate::map::{MapConfig, MapError, SkiMap, TileData, VoxelKey};

#[derive(Debug, thiserror::Error)]
pub enum DumpError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate entry {what}")]
    Duplicate { line: usize, what: String },
    #[error(transparent)]
    Map(#[from] MapError),
}

fn malformed(line: usize, message: impl Into<String>) -> DumpError {
    DumpError::Malformed {
        line,
        message: message.into(),
    }
}

/// Appends one voxel dump line, newline included.
pub fn write_voxel_line<V: Payload>(out: &mut String, key: VoxelKey, payload: &V) {
    let _ = write!(out, "{} {} {} ", key.ix, key.iy, key.iz);
    payload.write_fields(out);
    out.push('\n');
}

pub fn voxel_dump<V: Payload>(map: &SkiMap<V>) -> String {
    let mut out = String::with_capacity(map.len() * 32);
    for (key, payload) in map.voxels() {
        write_voxel_line(&mut out, key, payload);
    }
    out
}

pub fn tile_dump<V>(map: &SkiMap<V>) -> String {
    let mut out = String::with_capacity(map.tile_count() * 40);
    for (ix, iy, tile) in map.tiles() {
        let _ = write!(out, "{ix} {iy} {} ", tile.hits);
        write_sig9(&mut out, tile.height_sum);
        out.push(' ');
        write_sig9(&mut out, tile.height_weight);
        let _ = writeln!(out, " {}", u8::from(tile.navigable));
    }
    out
}

fn parse_index(token: &str, line: usize) -> Result<i16, DumpError> {
    token
        .parse::<i16>()
        .map_err(|e| malformed(line, format!("bad index {token:?}: {e}")))
}

fn lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split_whitespace().collect::<Vec<_>>()))
        .filter(|(_, fields)| !fields.is_empty())
}

/// Parses a voxel dump into `(key, payload)` pairs, in file order.
pub fn parse_voxels<V: Payload>(text: &str) -> Result<Vec<(VoxelKey, V)>, DumpError> {
    lines(text)
        .map(|(line, fields)| {
            if fields.len() < 3 {
                return Err(malformed(line, "expected `ix iy iz <payload>`"));
            }
            let key = VoxelKey::new(
                parse_index(fields[0], line)?,
                parse_index(fields[1], line)?,
                parse_index(fields[2], line)?,
            );
            let payload = V::parse_fields(&fields[3..]).map_err(|e: FusionError| malformed(line, e.to_string()))?;
            Ok((key, payload))
        })
        .collect()
}

pub fn parse_tiles(text: &str) -> Result<Vec<(i16, i16, TileData)>, DumpError> {
    lines(text)
        .map(|(line, fields)| {
            let [ix, iy, hits, sum, weight, navigable] = fields[..] else {
                return Err(malformed(
                    line,
                    "expected `ix iy hits height_sum height_weight navigable`",
                ));
            };
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| malformed(line, format!("bad number {s:?}: {e}")))
            };
            let tile = TileData {
                hits: hits
                    .parse()
                    .map_err(|e| malformed(line, format!("bad hit count {hits:?}: {e}")))?,
                height_sum: num(sum)?,
                height_weight: num(weight)?,
                navigable: match navigable {
                    "0" => false,
                    "1" => true,
                    other => return Err(malformed(line, format!("bad navigable flag {other:?}"))),
                },
            };
            if tile.navigable && tile.hits == 0 {
                return Err(malformed(line, "navigable tile without hits"));
            }
            Ok((parse_index(ix, line)?, parse_index(iy, line)?, tile))
        })
        .collect()
}

/// Rebuilds a map from its dumps. Payloads are stored verbatim.
pub fn load<V: Payload>(config: MapConfig, voxels: &str, tiles: Option<&str>) -> Result<SkiMap<V>, DumpError> {
    let mut map = SkiMap::new(config)?;
    for (i, (key, payload)) in parse_voxels::<V>(voxels)?.into_iter().enumerate() {
        if map.insert_voxel(key, payload).is_some() {
            return Err(DumpError::Duplicate {
                line: i + 1,
                what: format!("voxel {key}"),
            });
        }
    }
    if let Some(tiles) = tiles {
        for (i, (ix, iy, tile)) in parse_tiles(tiles)?.into_iter().enumerate() {
            if map.set_tile(ix, iy, tile).is_some() {
                return Err(DumpError::Duplicate {
                    line: i + 1,
                    what: format!("tile ({ix}, {iy})"),
                });
            }
        }
    }
    Ok(map)
}
