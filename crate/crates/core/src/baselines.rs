//! Comparison structures and oracles: a dense voxel grid, a plain pointer
//! octree, brute-force radius search, and closed-form memory models for
//! dense grids, octrees and multi-level surface maps.

use std::collections::BTreeSet;
use std::mem::size_of;

use crate::fusion::{FusionError, Payload};
use crate::map::{Footprint, NodeLayout, Point, SkiMap, VoxelKey};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BaselineError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("voxel {0} lies outside the grid")]
    OutsideGrid(VoxelKey),
    #[error(transparent)]
    Fusion(#[from] FusionError),
}

/// Flat 3D array of optional payloads over an axis-aligned block of keys.
///
/// Flat index is `((x * ey) + y) * ez + z` relative to the origin, so walking
/// the array front to back visits keys in lexicographic order.
#[derive(Debug, Clone)]
pub struct DenseGrid<V> {
    origin: VoxelKey,
    extent: [usize; 3],
    cells: Vec<Option<V>>,
}

impl<V> DenseGrid<V> {
    pub fn new(origin: VoxelKey, extent: [usize; 3]) -> Result<Self, BaselineError> {
        if extent.contains(&0) {
            return Err(BaselineError::InvalidArgument(format!(
                "grid extent must be positive, got {extent:?}"
            )));
        }
        let axes = [origin.ix, origin.iy, origin.iz];
        for (o, e) in axes.iter().zip(extent) {
            if i64::from(*o) + e as i64 - 1 > i64::from(i16::MAX) {
                return Err(BaselineError::InvalidArgument(format!(
                    "grid from {origin} with extent {extent:?} leaves the index range"
                )));
            }
        }
        let len = extent
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .ok_or_else(|| BaselineError::InvalidArgument("grid too large".into()))?;
        let mut cells = Vec::new();
        cells.resize_with(len, || None);
        Ok(Self {
            origin,
            extent,
            cells,
        })
    }

    /// Origin and extent of the smallest block holding every key.
    pub fn covering_extent<I: IntoIterator<Item = VoxelKey>>(keys: I) -> Option<(VoxelKey, [usize; 3])> {
        let mut it = keys.into_iter();
        let first = it.next()?;
        let (mut lo, mut hi) = (first, first);
        for k in it {
            lo = VoxelKey::new(lo.ix.min(k.ix), lo.iy.min(k.iy), lo.iz.min(k.iz));
            hi = VoxelKey::new(hi.ix.max(k.ix), hi.iy.max(k.iy), hi.iz.max(k.iz));
        }
        let span = |a: i16, b: i16| (i32::from(b) - i32::from(a) + 1) as usize;
        Some((lo, [span(lo.ix, hi.ix), span(lo.iy, hi.iy), span(lo.iz, hi.iz)]))
    }

    /// Smallest grid holding every key, or `None` for an empty input.
    pub fn covering<I: IntoIterator<Item = VoxelKey>>(keys: I) -> Option<Result<Self, BaselineError>> {
        Self::covering_extent(keys).map(|(origin, extent)| Self::new(origin, extent))
    }

    pub fn origin(&self) -> VoxelKey {
        self.origin
    }

    pub fn extent(&self) -> [usize; 3] {
        self.extent
    }

    /// Number of cells, occupied or not.
    pub fn capacity(&self) -> usize {
        self.cells.len()
    }

    pub fn index_of(&self, key: VoxelKey) -> Option<usize> {
        let rel = [
            i32::from(key.ix) - i32::from(self.origin.ix),
            i32::from(key.iy) - i32::from(self.origin.iy),
            i32::from(key.iz) - i32::from(self.origin.iz),
        ];
        if rel.iter().zip(self.extent).any(|(&d, e)| d < 0 || d as usize >= e) {
            return None;
        }
        let [x, y, z] = rel.map(|d| d as usize);
        Some((x * self.extent[1] + y) * self.extent[2] + z)
    }

    pub fn key_of(&self, index: usize) -> Option<VoxelKey> {
        if index >= self.cells.len() {
            return None;
        }
        let z = index % self.extent[2];
        let y = (index / self.extent[2]) % self.extent[1];
        let x = index / (self.extent[1] * self.extent[2]);
        Some(VoxelKey::new(
            (i32::from(self.origin.ix) + x as i32) as i16,
            (i32::from(self.origin.iy) + y as i32) as i16,
            (i32::from(self.origin.iz) + z as i32) as i16,
        ))
    }

    pub fn get(&self, key: VoxelKey) -> Option<&V> {
        self.index_of(key).and_then(|i| self.cells[i].as_ref())
    }

    pub fn set(&mut self, key: VoxelKey, value: V) -> Result<Option<V>, BaselineError> {
        let i = self.index_of(key).ok_or(BaselineError::OutsideGrid(key))?;
        Ok(self.cells[i].replace(value))
    }

    /// Occupied cells in lexicographic key order.
    pub fn occupied(&self) -> impl Iterator<Item = (VoxelKey, &V)> + '_ {
        self.cells.iter().enumerate().filter_map(|(i, c)| {
            c.as_ref()
                .map(|v| (self.key_of(i).expect("index within grid"), v))
        })
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// Heap bytes held by the cell array.
    pub fn bytes(&self) -> usize {
        self.cells.len() * size_of::<Option<V>>()
    }
}

impl<V: Payload> DenseGrid<V> {
    pub fn integrate(&mut self, key: VoxelKey, sample: &V::Sample) -> Result<(), BaselineError> {
        let i = self.index_of(key).ok_or(BaselineError::OutsideGrid(key))?;
        self.cells[i].get_or_insert_with(V::empty).fuse(sample);
        Ok(())
    }
}

const OCTREE_DEPTH: u32 = 16;
const KEY_OFFSET: i32 = 1 << 15;

enum Child<V> {
    Inner(Box<Inner<V>>),
    Leaf(Box<V>),
}

struct Inner<V> {
    children: [Option<Child<V>>; 8],
}

impl<V> Inner<V> {
    fn new() -> Self {
        Self {
            children: std::array::from_fn(|_| None),
        }
    }
}

/// Pointer octree over the full 16-bit index cube; leaves are single voxels.
///
/// Every inner node is one heap allocation with eight child slots and every
/// leaf is one heap allocation holding its payload. Nothing is pooled or
/// pruned, which keeps the memory accounting honest.
pub struct ReferenceOctree<V> {
    root: Inner<V>,
    leaves: usize,
    inner: usize,
}

impl<V> Default for ReferenceOctree<V> {
    fn default() -> Self {
        Self::new()
    }
}

fn unsigned(key: VoxelKey) -> [u32; 3] {
    [key.ix, key.iy, key.iz].map(|k| (i32::from(k) + KEY_OFFSET) as u32)
}

fn octant(coords: [u32; 3], level: u32) -> usize {
    let bit = |c: u32| ((c >> level) & 1) as usize;
    bit(coords[0]) << 2 | bit(coords[1]) << 1 | bit(coords[2])
}

impl<V> ReferenceOctree<V> {
    pub fn new() -> Self {
        Self {
            root: Inner::new(),
            leaves: 0,
            inner: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.leaves
    }

    pub fn is_empty(&self) -> bool {
        self.leaves == 0
    }

    /// Inner nodes, root included.
    pub fn inner_count(&self) -> usize {
        self.inner
    }

    pub const fn inner_node_bytes() -> usize {
        size_of::<Inner<V>>()
    }

    pub const fn leaf_bytes() -> usize {
        size_of::<V>()
    }

    /// `n_leaf * B_leaf + n_inner * B_inner` from the live counts.
    pub fn bytes(&self) -> usize {
        self.leaves * Self::leaf_bytes() + self.inner * Self::inner_node_bytes()
    }

    pub fn get(&self, key: VoxelKey) -> Option<&V> {
        let c = unsigned(key);
        let mut node = &self.root;
        for level in (1..OCTREE_DEPTH).rev() {
            match node.children[octant(c, level)].as_ref()? {
                Child::Inner(next) => node = next,
                Child::Leaf(_) => unreachable!("leaf above the bottom level"),
            }
        }
        match node.children[octant(c, 0)].as_ref()? {
            Child::Leaf(v) => Some(v),
            Child::Inner(_) => unreachable!("inner node at the bottom level"),
        }
    }

    /// Leaf for `key`, created with `make` if missing.
    pub fn entry<F: FnOnce() -> V>(&mut self, key: VoxelKey, make: F) -> &mut V {
        let c = unsigned(key);
        let mut node = &mut self.root;
        for level in (1..OCTREE_DEPTH).rev() {
            let slot = &mut node.children[octant(c, level)];
            if slot.is_none() {
                *slot = Some(Child::Inner(Box::new(Inner::new())));
                self.inner += 1;
            }
            match slot.as_mut() {
                Some(Child::Inner(next)) => node = next,
                _ => unreachable!("leaf above the bottom level"),
            }
        }
        let slot = &mut node.children[octant(c, 0)];
        if slot.is_none() {
            *slot = Some(Child::Leaf(Box::new(make())));
            self.leaves += 1;
        }
        match slot.as_mut() {
            Some(Child::Leaf(v)) => v,
            _ => unreachable!("inner node at the bottom level"),
        }
    }

    pub fn insert(&mut self, key: VoxelKey, value: V) {
        let mut value = Some(value);
        let leaf = self.entry(key, || value.take().expect("fresh value"));
        if let Some(v) = value {
            *leaf = v;
        }
    }

    /// Depth-first visit of every leaf, in Morton (bit-interleaved) order.
    pub fn visit<F: FnMut(VoxelKey, &V)>(&self, mut f: F) {
        fn walk<V, F: FnMut(VoxelKey, &V)>(node: &Inner<V>, base: [u32; 3], level: u32, f: &mut F) {
            for (i, child) in node.children.iter().enumerate() {
                let Some(child) = child else { continue };
                let at = [
                    base[0] | ((i as u32 >> 2) & 1) << level,
                    base[1] | ((i as u32 >> 1) & 1) << level,
                    base[2] | (i as u32 & 1) << level,
                ];
                match child {
                    Child::Inner(next) => walk(next, at, level - 1, f),
                    Child::Leaf(v) => {
                        let [x, y, z] = at.map(|c| (c as i32 - KEY_OFFSET) as i16);
                        f(VoxelKey::new(x, y, z), v);
                    }
                }
            }
        }
        walk(&self.root, [0; 3], OCTREE_DEPTH - 1, &mut f);
    }

    /// Leaf keys in lexicographic order.
    pub fn keys(&self) -> Vec<VoxelKey> {
        let mut out = Vec::with_capacity(self.leaves);
        self.visit(|k, _| out.push(k));
        out.sort_unstable();
        out
    }

    /// Leaves whose voxel center lies within `radius` of `center`, pruning
    /// octants whose bounding cube is out of reach.
    pub fn radius_search(&self, center: &Point, radius: f64, resolution: f64) -> Vec<VoxelKey> {
        let c = [center.x, center.y, center.z].map(|v| v / resolution + f64::from(KEY_OFFSET));
        let reach = radius / resolution;
        let reach2 = reach * reach;
        let mut out = Vec::new();
        let mut stack = vec![(&self.root, [0u32; 3], OCTREE_DEPTH - 1)];
        while let Some((node, base, level)) = stack.pop() {
            let side = f64::from(1u32 << level);
            for (i, child) in node.children.iter().enumerate() {
                let Some(child) = child else { continue };
                let at = [
                    base[0] | ((i as u32 >> 2) & 1) << level,
                    base[1] | ((i as u32 >> 1) & 1) << level,
                    base[2] | (i as u32 & 1) << level,
                ];
                match child {
                    Child::Inner(next) => {
                        // Gap from the query to the cube, in index units.
                        let gap2: f64 = (0..3)
                            .map(|a| {
                                let lo = f64::from(at[a]);
                                let d = (lo - c[a]).max(c[a] - lo - side).max(0.0);
                                d * d
                            })
                            .sum();
                        if gap2 <= reach2 {
                            stack.push((next, at, level - 1));
                        }
                    }
                    Child::Leaf(_) => {
                        let [x, y, z] = at.map(|v| (v as i32 - KEY_OFFSET) as i16);
                        let key = VoxelKey::new(x, y, z);
                        if (key.center(resolution) - center).norm_squared() <= radius * radius {
                            out.push(key);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

impl<V: Payload> ReferenceOctree<V> {
    pub fn integrate(&mut self, key: VoxelKey, sample: &V::Sample) {
        self.entry(key, V::empty).fuse(sample);
    }
}

/// Exhaustive radius filter over voxel centers.
pub fn brute_radius<I>(keys: I, center: &Point, radius: f64, resolution: f64) -> BTreeSet<VoxelKey>
where
    I: IntoIterator<Item = VoxelKey>,
{
    let r2 = radius * radius;
    keys.into_iter()
        .filter(|k| (k.center(resolution) - center).norm_squared() <= r2)
        .collect()
}

/// Inputs of the closed-form memory models. Unused fields may stay zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MemoryModel {
    /// Workspace dimensions in meters.
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Voxel side in meters.
    pub r: f64,
    pub b_leaf: f64,
    pub b_inner: f64,
    pub b_tile: f64,
    pub b_voxel: f64,
    pub n_leaf: u64,
    pub n_inner: u64,
    pub n_voxels: u64,
}

/// Bytes per cell assumed for a dense occupancy grid.
pub const DENSE_CELL_BYTES: f64 = 4.0;

fn positive(name: &str, v: f64) -> Result<(), BaselineError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(BaselineError::InvalidArgument(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

fn non_negative(name: &str, v: f64) -> Result<(), BaselineError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(BaselineError::InvalidArgument(format!(
            "{name} must be non-negative, got {v}"
        )))
    }
}

impl MemoryModel {
    pub fn workspace(x: f64, y: f64, z: f64, r: f64) -> Self {
        Self {
            x,
            y,
            z,
            r,
            ..Self::default()
        }
    }

    /// Dense grid: `(x * y * z) / r^3 * 4` bytes.
    pub fn dense_grid(&self) -> Result<f64, BaselineError> {
        positive("x", self.x)?;
        positive("y", self.y)?;
        positive("z", self.z)?;
        positive("r", self.r)?;
        Ok(self.x * self.y * self.z / self.r.powi(3) * DENSE_CELL_BYTES)
    }

    /// Octree: `n_leaf * B_leaf + n_inner * B_inner` bytes.
    pub fn octree(&self) -> Result<f64, BaselineError> {
        non_negative("B_leaf", self.b_leaf)?;
        non_negative("B_inner", self.b_inner)?;
        Ok(self.n_leaf as f64 * self.b_leaf + self.n_inner as f64 * self.b_inner)
    }

    /// Multi-level surface map: `(x * y) / r^2 * B_tile + n_voxels * B_voxel`.
    pub fn mls(&self) -> Result<f64, BaselineError> {
        positive("x", self.x)?;
        positive("y", self.y)?;
        positive("r", self.r)?;
        non_negative("B_tile", self.b_tile)?;
        non_negative("B_voxel", self.b_voxel)?;
        Ok(self.x * self.y / self.r.powi(2) * self.b_tile + self.n_voxels as f64 * self.b_voxel)
    }
}

/// Measured footprint of a map with the byte sizes used to price it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryReport {
    pub footprint: Footprint,
    pub layout: NodeLayout,
    pub bytes: usize,
}

impl MemoryReport {
    /// `1 - bytes / dense_bytes`, as a fraction.
    pub fn savings_vs(&self, dense_bytes: f64) -> f64 {
        1.0 - self.bytes as f64 / dense_bytes
    }
}

pub fn measure_skimap_memory<V>(map: &SkiMap<V>) -> MemoryReport {
    let footprint = map.footprint();
    let layout = SkiMap::<V>::layout();
    MemoryReport {
        footprint,
        layout,
        bytes: layout.bytes(&footprint),
    }
}
