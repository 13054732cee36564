//! 2D navigability grid: 255 free, 0 occupied, 127 unknown.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Mutex;

use serde::Serialize;
use skimap::{Payload, SkiMap, TileData};

use crate::config::RunConfig;

pub const FREE: u8 = 255;
pub const OCCUPIED: u8 = 0;
pub const UNKNOWN: u8 = 127;

/// Any voxel in the column makes it an obstacle; otherwise a navigable
/// ground tile makes it free.
pub fn cell_value(voxel_count: usize, tile: Option<&TileData>) -> u8 {
    if voxel_count > 0 {
        OCCUPIED
    } else if tile.is_some_and(|t| t.navigable) {
        FREE
    } else {
        UNKNOWN
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid2D {
    /// Index of the lower-left cell.
    pub min_ix: i16,
    pub min_iy: i16,
    pub width: usize,
    pub height: usize,
    /// Row-major, row 0 at `min_iy`.
    cells: Vec<u8>,
}

impl Grid2D {
    fn from_cells(cells: &BTreeMap<(i16, i16), u8>) -> Self {
        let Some(first) = cells.keys().next() else {
            return Self {
                min_ix: 0,
                min_iy: 0,
                width: 0,
                height: 0,
                cells: Vec::new(),
            };
        };
        let (mut lo, mut hi) = (*first, *first);
        for &(x, y) in cells.keys() {
            lo = (lo.0.min(x), lo.1.min(y));
            hi = (hi.0.max(x), hi.1.max(y));
        }
        let width = (i32::from(hi.0) - i32::from(lo.0) + 1) as usize;
        let height = (i32::from(hi.1) - i32::from(lo.1) + 1) as usize;
        let mut grid = Self {
            min_ix: lo.0,
            min_iy: lo.1,
            width,
            height,
            cells: vec![UNKNOWN; width * height],
        };
        for (&(x, y), &v) in cells {
            let i = grid.offset(x, y).expect("inside bounds");
            grid.cells[i] = v;
        }
        grid
    }

    fn offset(&self, ix: i16, iy: i16) -> Option<usize> {
        let dx = i32::from(ix) - i32::from(self.min_ix);
        let dy = i32::from(iy) - i32::from(self.min_iy);
        (dx >= 0 && dy >= 0 && (dx as usize) < self.width && (dy as usize) < self.height)
            .then(|| dy as usize * self.width + dx as usize)
    }

    /// Cell value; outside the grid everything is unknown.
    pub fn get(&self, ix: i16, iy: i16) -> u8 {
        self.offset(ix, iy).map_or(UNKNOWN, |i| self.cells[i])
    }

    /// Built from the depth-2 walk only; voxel lists are never opened.
    pub fn from_visit_2d<V: Sync>(map: &SkiMap<V>) -> Self {
        let cells = Mutex::new(BTreeMap::new());
        map.visit_2d(|cell| {
            let v = cell_value(cell.voxel_count, cell.tile);
            cells.lock().unwrap().insert((cell.ix, cell.iy), v);
        });
        Self::from_cells(&cells.into_inner().unwrap())
    }

    /// Reference grid from a full 3D walk: project every voxel onto its
    /// column, then overlay the tiles of voxel-free columns.
    pub fn projection_oracle<V: Payload>(map: &SkiMap<V>) -> Self {
        let mut cells = BTreeMap::new();
        for (key, _) in map.voxels() {
            cells.insert((key.ix, key.iy), OCCUPIED);
        }
        for (ix, iy, tile) in map.tiles() {
            cells.entry((ix, iy)).or_insert_with(|| cell_value(0, Some(tile)));
        }
        Self::from_cells(&cells)
    }

    /// Plain (ASCII) PGM, top row at the largest y index.
    pub fn to_pgm(&self) -> String {
        let mut out = format!("P2\n{} {}\n255\n", self.width, self.height);
        for row in self.cells.chunks(self.width.max(1)).rev() {
            let line: Vec<String> = row.iter().map(u8::to_string).collect();
            writeln!(out, "{}", line.join(" ")).unwrap();
        }
        out
    }

    pub fn metadata(&self, image: &str, config: &RunConfig) -> GridMetadata {
        let r = config.resolution;
        GridMetadata {
            image: image.to_owned(),
            resolution: r,
            origin: [f64::from(self.min_ix) * r, f64::from(self.min_iy) * r],
            origin_index: [self.min_ix, self.min_iy],
            width: self.width,
            height: self.height,
            free: FREE,
            occupied: OCCUPIED,
            unknown: UNKNOWN,
            config: config.clone(),
        }
    }
}

/// Sidecar describing where the grid sits in the world.
#[derive(Debug, Clone, Serialize)]
pub struct GridMetadata {
    pub image: String,
    pub resolution: f64,
    /// Metric position of the lower-left corner of the lower-left cell.
    pub origin: [f64; 2],
    pub origin_index: [i16; 2],
    pub width: usize,
    pub height: usize,
    pub free: u8,
    pub occupied: u8,
    pub unknown: u8,
    pub config: RunConfig,
}
