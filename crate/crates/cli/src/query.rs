//! Point queries against a loaded map. Hits are printed in dump format.

use skimap::dump::write_voxel_line;
use skimap::{Point, SkiMap, VoxelKey};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Query {
    /// Voxels whose center lies within `radius` meters of `center`.
    Radius { center: Point, radius: f64 },
    /// Voxels in `center ± half` (indices).
    Box { center: VoxelKey, half: [u32; 3] },
    /// One voxel.
    Cell { key: VoxelKey },
}

pub fn run(map: &SkiMap, query: &Query) -> Result<String, CliError> {
    let mut out = String::new();
    match query {
        Query::Radius { center, radius } => {
            let mut hits = map
                .radius_search(center, *radius)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            hits.sort_by_key(|(k, _)| *k);
            for (key, v) in &hits {
                write_voxel_line(&mut out, *key, v);
            }
        }
        Query::Box { center, half } => {
            let mut hits = map.box_search(*center, *half);
            if hits.clamped {
                eprintln!("warning: box clipped to the index range");
            }
            hits.voxels.sort_by_key(|(k, _)| *k);
            for (key, v) in &hits.voxels {
                write_voxel_line(&mut out, *key, v);
            }
        }
        Query::Cell { key } => match map.get_voxel(*key) {
            Some(v) => write_voxel_line(&mut out, *key, v),
            None => out.push_str("miss\n"),
        },
    }
    Ok(out)
}
