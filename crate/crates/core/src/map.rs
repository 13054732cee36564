//! The map: a skip list of x-indices whose entries are skip lists of
//! y-indices, whose entries carry optional 2D tile data and a skip list of
//! z-indexed voxels.
//!
//! Writers are partitioned by x-index. Batch operations group their input by
//! `ix` (stable, so per-voxel sample order matches sequential input order),
//! allocate the needed x-branches sequentially, then hand each branch to one
//! worker. No two workers ever touch the same branch, and the result does not
//! depend on the worker count.

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;

use nalgebra::Point3;

use crate::fusion::{Erosion, FusionError, OccupancyVoxel, Payload};
use crate::par;
use crate::skiplist::{SkipList, DEFAULT_MAX_LEVEL, MAX_LEVEL_CAP};

pub type Point = Point3<f64>;

/// Smallest representable index along any axis.
pub const INDEX_MIN: i64 = i16::MIN as i64;
/// Largest representable index along any axis.
pub const INDEX_MAX: i64 = i16::MAX as i64;

/// Quantized address of one voxel. Ordering is lexicographic on
/// `(ix, iy, iz)`, which is the canonical dump order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelKey {
    pub ix: i16,
    pub iy: i16,
    pub iz: i16,
}

impl VoxelKey {
    pub const fn new(ix: i16, iy: i16, iz: i16) -> Self {
        Self { ix, iy, iz }
    }

    /// Center of the voxel in meters: `(k + 0.5) * r` per axis.
    pub fn center(&self, resolution: f64) -> Point {
        Point::new(
            (f64::from(self.ix) + 0.5) * resolution,
            (f64::from(self.iy) + 0.5) * resolution,
            (f64::from(self.iz) + 0.5) * resolution,
        )
    }
}

impl fmt::Display for VoxelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.ix, self.iy, self.iz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MapError {
    #[error("coordinate {coordinate} on the {axis} axis is outside the workspace (index {index})")]
    OutOfBounds {
        axis: Axis,
        coordinate: f64,
        index: f64,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid map configuration: {0}")]
    InvalidConfig(String),
    #[error("erosion failed at voxel {key}: {source}")]
    Erosion {
        key: VoxelKey,
        #[source]
        source: FusionError,
    },
}

/// `floor(value / step)`, treating a quotient within a few ulps of an integer
/// as that integer. Without the snap, `0.30 / 0.05` evaluates to
/// `5.999999999999999` and a point on a voxel face lands one voxel low.
pub fn floor_div(value: f64, step: f64) -> f64 {
    let q = value / step;
    let nearest = q.round();
    if (q - nearest).abs() <= 8.0 * f64::EPSILON * q.abs().max(1.0) {
        nearest
    } else {
        q.floor()
    }
}

/// Index of `coordinate` along one axis: `floor(coordinate / resolution)`.
pub fn quantize_axis(coordinate: f64, resolution: f64, axis: Axis) -> Result<i16, MapError> {
    let index = floor_div(coordinate, resolution);
    if index.is_finite() && (INDEX_MIN as f64..=INDEX_MAX as f64).contains(&index) {
        Ok(index as i16)
    } else {
        Err(MapError::OutOfBounds {
            axis,
            coordinate,
            index,
        })
    }
}

/// Maps a metric point to its voxel key. Rounds toward negative infinity, so
/// `-0.07` at `r = 0.05` lands in index `-2`.
pub fn quantize(p: &Point, resolution: f64) -> Result<VoxelKey, MapError> {
    Ok(VoxelKey {
        ix: quantize_axis(p.x, resolution, Axis::X)?,
        iy: quantize_axis(p.y, resolution, Axis::Y)?,
        iz: quantize_axis(p.z, resolution, Axis::Z)?,
    })
}

/// Discrete radius `floor(radius / resolution)` used to open a search window
/// `I ± h` around a center index.
pub fn discrete_radius(radius: f64, resolution: f64) -> i64 {
    floor_div(radius, resolution) as i64
}

/// Skip list depth for each of the three nesting levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxisLevels {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl AxisLevels {
    pub const fn uniform(levels: usize) -> Self {
        Self {
            x: levels,
            y: levels,
            z: levels,
        }
    }
}

impl Default for AxisLevels {
    fn default() -> Self {
        Self::uniform(DEFAULT_MAX_LEVEL)
    }
}

/// What batch integration does with points outside the addressable range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundsPolicy {
    /// Fail the whole batch before touching the map.
    #[default]
    Reject,
    /// Drop the point and count it in the report.
    Skip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapConfig {
    /// Voxel side in meters.
    pub resolution: f64,
    pub levels: AxisLevels,
    /// Worker threads for batch operations.
    pub workers: usize,
    /// Seed for tower heights. Nested lists derive their seed from this and
    /// their own keys, so the structure is reproducible.
    pub seed: u64,
    pub bounds_policy: BoundsPolicy,
    /// Ground hits needed before a tile counts as navigable.
    pub navigable_min_hits: u32,
}

impl MapConfig {
    pub fn new(resolution: f64) -> Self {
        Self {
            resolution,
            levels: AxisLevels::default(),
            workers: par::default_workers(),
            seed: 0,
            bounds_policy: BoundsPolicy::Reject,
            navigable_min_hits: 3,
        }
    }

    pub fn with_levels(mut self, levels: AxisLevels) -> Self {
        self.levels = levels;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_bounds_policy(mut self, policy: BoundsPolicy) -> Self {
        self.bounds_policy = policy;
        self
    }

    /// Metric extent addressable along each axis (65536 voxels).
    pub fn axis_extent(&self) -> f64 {
        (INDEX_MAX - INDEX_MIN + 1) as f64 * self.resolution
    }

    pub fn validate(&self) -> Result<(), MapError> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(MapError::InvalidConfig(format!(
                "resolution must be positive, got {}",
                self.resolution
            )));
        }
        for (axis, levels) in [
            (Axis::X, self.levels.x),
            (Axis::Y, self.levels.y),
            (Axis::Z, self.levels.z),
        ] {
            if !(1..=MAX_LEVEL_CAP).contains(&levels) {
                return Err(MapError::InvalidConfig(format!(
                    "{axis} skip list depth must be in 1..={MAX_LEVEL_CAP}, got {levels}"
                )));
            }
        }
        if self.workers == 0 {
            return Err(MapError::InvalidConfig("worker count must be positive".into()));
        }
        Ok(())
    }
}

/// Ground evidence attached to a column.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TileData {
    pub hits: u32,
    /// Weighted sum of ground heights, meters.
    pub height_sum: f64,
    pub height_weight: f64,
    pub navigable: bool,
}

impl TileData {
    pub fn record(&mut self, height: f64, weight: f64, navigable_min_hits: u32) {
        self.hits = self.hits.saturating_add(1);
        self.height_sum += height * weight;
        self.height_weight += weight;
        self.navigable = self.hits >= navigable_min_hits.max(1);
    }

    pub fn mean_height(&self) -> Option<f64> {
        (self.height_weight > 0.0).then(|| self.height_sum / self.height_weight)
    }
}

/// Access counters for the 2D and 3D levels. They only count with the
/// `access-stats` feature (or in this crate's unit tests).
#[derive(Debug, Default)]
pub struct AccessStats {
    #[cfg(feature = "access-stats")]
    column_visits: std::sync::atomic::AtomicU64,
    #[cfg(feature = "access-stats")]
    voxel_list_reads: std::sync::atomic::AtomicU64,
    #[cfg(feature = "access-stats")]
    voxel_list_writes: std::sync::atomic::AtomicU64,
}

/// Snapshot of [`AccessStats`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AccessCounts {
    /// yNodes visited by 2D queries.
    pub column_visits: u64,
    /// Times a z-level list was searched or iterated.
    pub voxel_list_reads: u64,
    /// Times a z-level list was searched for insertion.
    pub voxel_list_writes: u64,
}

impl AccessStats {
    #[inline]
    fn column(&self) {
        #[cfg(feature = "access-stats")]
        self.column_visits
            .fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    }

    #[inline]
    fn read(&self) {
        #[cfg(feature = "access-stats")]
        self.voxel_list_reads
            .fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    }

    #[inline]
    fn write(&self) {
        #[cfg(feature = "access-stats")]
        self.voxel_list_writes
            .fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> AccessCounts {
        #[cfg(feature = "access-stats")]
        {
            use std::sync::atomic::Ordering::Relaxed;
            AccessCounts {
                column_visits: self.column_visits.load(Relaxed),
                voxel_list_reads: self.voxel_list_reads.load(Relaxed),
                voxel_list_writes: self.voxel_list_writes.load(Relaxed),
            }
        }
        #[cfg(not(any(test, feature = "access-stats")))]
        AccessCounts::default()
    }

    pub fn reset(&self) {
        #[cfg(feature = "access-stats")]
        {
            use std::sync::atomic::Ordering::Relaxed;
            self.column_visits.store(0, Relaxed);
            self.voxel_list_reads.store(0, Relaxed);
            self.voxel_list_writes.store(0, Relaxed);
        }
    }
}

/// Second-level node: one (ix, iy) column.
pub struct YNode<V> {
    tile: Option<TileData>,
    voxels: SkipList<i16, V>,
}

impl<V> YNode<V> {
    fn new(ctx: &Ctx, ix: i16, iy: i16) -> Self {
        Self {
            tile: None,
            voxels: SkipList::with_seed(ctx.levels.z, derive_seed(ctx.seed, 2, ix, iy)),
        }
    }

    fn is_empty(&self) -> bool {
        self.tile.is_none() && self.voxels.is_empty()
    }
}

/// First-level node: every column sharing one x-index.
pub struct XNode<V> {
    columns: SkipList<i16, YNode<V>>,
}

impl<V> XNode<V> {
    fn new(ctx: &Ctx, ix: i16) -> Self {
        Self {
            columns: SkipList::with_seed(ctx.levels.y, derive_seed(ctx.seed, 1, ix, 0)),
        }
    }
}

/// What branch workers need from the map configuration.
#[derive(Clone, Copy)]
struct Ctx {
    levels: AxisLevels,
    seed: u64,
    navigable_min_hits: u32,
}

fn derive_seed(seed: u64, tag: u64, a: i16, b: i16) -> u64 {
    // splitmix64 finalizer over the parent seed and the node address
    let mut z = seed
        ^ (tag << 32)
        ^ (u64::from(a as u16) << 16)
        ^ u64::from(b as u16);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Outcome of a fusion batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IntegrationReport {
    /// Points fused into voxels.
    pub points: usize,
    /// Points dropped by [`BoundsPolicy::Skip`].
    pub skipped: usize,
    pub voxels_created: usize,
    /// Fusions into voxels that already existed.
    pub voxels_updated: usize,
    pub tiles_created: usize,
    pub tiles_updated: usize,
    /// Distinct x-branches written by the batch.
    pub partitions: usize,
}

impl std::ops::AddAssign for IntegrationReport {
    fn add_assign(&mut self, o: Self) {
        self.points += o.points;
        self.skipped += o.skipped;
        self.voxels_created += o.voxels_created;
        self.voxels_updated += o.voxels_updated;
        self.tiles_created += o.tiles_created;
        self.tiles_updated += o.tiles_updated;
        self.partitions += o.partitions;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ErosionReport {
    pub points: usize,
    pub voxels_removed: usize,
}

/// Column summary handed to 2D visitors.
#[derive(Debug, Clone, Copy)]
pub struct Cell2D<'a> {
    pub ix: i16,
    pub iy: i16,
    pub tile: Option<&'a TileData>,
    /// Number of voxels in the column, read from the list header.
    pub voxel_count: usize,
}

/// Column summary with vertical extent, for height maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Column {
    pub ix: i16,
    pub iy: i16,
    pub tile: Option<TileData>,
    /// Lowest and highest occupied z-index.
    pub z_extent: Option<(i16, i16)>,
    pub voxel_count: usize,
}

/// Result of a box search.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxHits<V> {
    pub voxels: Vec<(VoxelKey, V)>,
    /// The requested box crossed the key range and was clipped.
    pub clamped: bool,
}

/// Node and link counts of the whole tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Footprint {
    pub x_nodes: usize,
    pub y_nodes: usize,
    pub voxels: usize,
    pub tiles: usize,
    /// Forward links over every skip list, head sentinels included.
    pub tower_links: usize,
    /// Number of skip lists (root, one per xNode, one per yNode).
    pub lists: usize,
}

/// Per-node byte sizes taken from the in-memory type layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeLayout {
    /// Root list header.
    pub root: usize,
    /// One xNode arena slot, including its nested list header.
    pub x_node: usize,
    /// One yNode arena slot, including tile data and its voxel list header.
    pub y_node: usize,
    /// One voxel arena slot, including the payload.
    pub voxel: usize,
    /// One forward link.
    pub link: usize,
}

impl NodeLayout {
    pub fn bytes(&self, fp: &Footprint) -> usize {
        self.root
            + fp.x_nodes * self.x_node
            + fp.y_nodes * self.y_node
            + fp.voxels * self.voxel
            + fp.tower_links * self.link
    }
}

/// Sparse voxel map over a tree of skip lists.
pub struct SkiMap<V = OccupancyVoxel> {
    config: MapConfig,
    root: SkipList<i16, XNode<V>>,
    voxel_count: usize,
    tile_count: usize,
    stats: AccessStats,
}

impl<V> fmt::Debug for SkiMap<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SkiMap")
            .field("config", &self.config)
            .field("x_nodes", &self.root.len())
            .field("voxels", &self.voxel_count)
            .field("tiles", &self.tile_count)
            .finish()
    }
}

type Sampled<S> = (VoxelKey, S);

#[derive(Default)]
struct BranchDelta {
    created: usize,
    updated: usize,
    tiles_created: usize,
    tiles_updated: usize,
}

/// Contiguous runs sharing the same x-index in an `ix`-sorted slice.
fn runs<T>(items: &[T], ix: impl Fn(&T) -> i16) -> Vec<(i16, Range<usize>)> {
    let mut out: Vec<(i16, Range<usize>)> = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let k = ix(item);
        match out.last_mut() {
            Some((last, range)) if *last == k => range.end = i + 1,
            _ => out.push((k, i..i + 1)),
        }
    }
    out
}

/// Disjoint mutable references to the branches with the given (sorted,
/// unique, present) keys, in key order.
fn branches_mut<'a, V>(root: &'a mut SkipList<i16, XNode<V>>, wanted: &[i16]) -> Vec<&'a mut XNode<V>> {
    let mut found: Vec<Option<&'a mut XNode<V>>> = wanted.iter().map(|_| None).collect();
    for (key, branch) in root.iter_mut_unordered() {
        if let Ok(i) = wanted.binary_search(&key) {
            found[i] = Some(branch);
        }
    }
    found
        .into_iter()
        .map(|b| b.expect("branch allocated before partitioning"))
        .collect()
}

fn fuse_branch<V: Payload>(
    ix: i16,
    branch: &mut XNode<V>,
    items: &[Sampled<V::Sample>],
    ctx: &Ctx,
    stats: &AccessStats,
) -> BranchDelta {
    let mut delta = BranchDelta::default();
    for (key, sample) in items {
        let (column, _) = branch
            .columns
            .insert_or_get(key.iy, || YNode::new(ctx, ix, key.iy));
        stats.write();
        let (voxel, created) = column.voxels.insert_or_get(key.iz, V::empty);
        voxel.fuse(sample);
        if created {
            delta.created += 1;
        } else {
            delta.updated += 1;
        }
    }
    delta
}

fn tile_branch<V>(
    ix: i16,
    branch: &mut XNode<V>,
    items: &[(VoxelKey, f64, f64)],
    ctx: &Ctx,
) -> BranchDelta {
    let mut delta = BranchDelta::default();
    for &(key, height, weight) in items {
        let (column, _) = branch
            .columns
            .insert_or_get(key.iy, || YNode::new(ctx, ix, key.iy));
        if column.tile.is_none() {
            delta.tiles_created += 1;
        } else {
            delta.tiles_updated += 1;
        }
        column
            .tile
            .get_or_insert_with(TileData::default)
            .record(height, weight, ctx.navigable_min_hits);
    }
    delta
}

/// Replays the erosion on copies; fails without side effects.
fn erosion_dry_run<V: Payload>(
    branch: Option<&XNode<V>>,
    items: &[Sampled<V::Sample>],
    stats: &AccessStats,
) -> Result<(), MapError> {
    let mut state: HashMap<VoxelKey, Option<V>> = HashMap::new();
    for (key, sample) in items {
        let voxel = state.entry(*key).or_insert_with(|| {
            stats.read();
            branch
                .and_then(|b| b.columns.get(&key.iy))
                .and_then(|c| c.voxels.get(&key.iz))
                .cloned()
        });
        let Some(v) = voxel else {
            return Err(MapError::Erosion {
                key: *key,
                source: FusionError::MissingVoxel,
            });
        };
        match v.erode(sample) {
            Ok(Erosion::Kept) => {}
            Ok(Erosion::Drained) => *voxel = None,
            Err(source) => return Err(MapError::Erosion { key: *key, source }),
        }
    }
    Ok(())
}

/// Returns the number of voxels removed; items were validated by a dry run.
fn erode_branch<V: Payload>(
    branch: &mut XNode<V>,
    items: &[Sampled<V::Sample>],
    stats: &AccessStats,
) -> usize {
    let mut removed = 0;
    for (key, sample) in items {
        let column = branch.columns.get_mut(&key.iy).expect("validated column");
        stats.write();
        let voxel = column.voxels.get_mut(&key.iz).expect("validated voxel");
        if voxel.erode(sample).expect("validated erosion") == Erosion::Drained {
            column.voxels.remove(&key.iz);
            removed += 1;
            if column.is_empty() {
                branch.columns.remove(&key.iy);
            }
        }
    }
    removed
}

impl<V> SkiMap<V> {
    pub fn new(config: MapConfig) -> Result<Self, MapError> {
        config.validate()?;
        Ok(Self {
            root: SkipList::with_seed(config.levels.x, derive_seed(config.seed, 0, 0, 0)),
            config,
            voxel_count: 0,
            tile_count: 0,
            stats: AccessStats::default(),
        })
    }

    /// Map at `resolution` with every other setting at its default.
    pub fn with_resolution(resolution: f64) -> Result<Self, MapError> {
        Self::new(MapConfig::new(resolution))
    }

    pub fn config(&self) -> &MapConfig {
        &self.config
    }

    pub fn resolution(&self) -> f64 {
        self.config.resolution
    }

    pub fn set_workers(&mut self, workers: usize) {
        self.config.workers = workers.max(1);
    }

    /// Number of voxels.
    pub fn len(&self) -> usize {
        self.voxel_count
    }

    pub fn is_empty(&self) -> bool {
        self.voxel_count == 0 && self.tile_count == 0
    }

    pub fn tile_count(&self) -> usize {
        self.tile_count
    }

    pub fn x_node_count(&self) -> usize {
        self.root.len()
    }

    pub fn access_stats(&self) -> &AccessStats {
        &self.stats
    }

    pub fn quantize(&self, p: &Point) -> Result<VoxelKey, MapError> {
        quantize(p, self.config.resolution)
    }

    pub fn voxel_center(&self, key: VoxelKey) -> Point {
        key.center(self.config.resolution)
    }

    fn ctx(&self) -> Ctx {
        Ctx {
            levels: self.config.levels,
            seed: self.config.seed,
            navigable_min_hits: self.config.navigable_min_hits,
        }
    }

    fn column(&self, ix: i16, iy: i16) -> Option<&YNode<V>> {
        self.root.get(&ix)?.columns.get(&iy)
    }

    fn column_or_insert(&mut self, ix: i16, iy: i16) -> &mut YNode<V> {
        let ctx = self.ctx();
        let (branch, _) = self.root.insert_or_get(ix, || XNode::new(&ctx, ix));
        branch
            .columns
            .insert_or_get(iy, || YNode::new(&ctx, ix, iy))
            .0
    }

    /// Three nested lookups; a miss at any level is a miss.
    pub fn get_voxel(&self, key: VoxelKey) -> Option<&V> {
        let column = self.column(key.ix, key.iy)?;
        self.stats.read();
        column.voxels.get(&key.iz)
    }

    pub fn contains(&self, key: VoxelKey) -> bool {
        self.get_voxel(key).is_some()
    }

    pub fn tile(&self, ix: i16, iy: i16) -> Option<&TileData> {
        self.column(ix, iy)?.tile.as_ref()
    }

    /// Stores `payload` at `key` as is, replacing any existing payload.
    pub fn insert_voxel(&mut self, key: VoxelKey, payload: V) -> Option<V> {
        let column = self.column_or_insert(key.ix, key.iy);
        let previous = column.voxels.insert(key.iz, payload);
        if previous.is_none() {
            self.voxel_count += 1;
        }
        previous
    }

    pub fn set_tile(&mut self, ix: i16, iy: i16, tile: TileData) -> Option<TileData> {
        let column = self.column_or_insert(ix, iy);
        let previous = column.tile.replace(tile);
        if previous.is_none() {
            self.tile_count += 1;
        }
        previous
    }

    /// Drops the column at (ix, iy) and the branch above it when they end up
    /// with no voxels and no tile.
    fn prune(&mut self, ix: i16, iy: i16) {
        let Some(branch) = self.root.get_mut(&ix) else {
            return;
        };
        if branch.columns.get(&iy).is_some_and(YNode::is_empty) {
            branch.columns.remove(&iy);
        }
        if branch.columns.is_empty() {
            self.root.remove(&ix);
        }
    }

    /// Removes the voxel, pruning empty ancestors. True iff it existed.
    pub fn remove_voxel(&mut self, key: VoxelKey) -> bool {
        let removed = self
            .root
            .get_mut(&key.ix)
            .and_then(|b| b.columns.get_mut(&key.iy))
            .and_then(|c| c.voxels.remove(&key.iz))
            .is_some();
        if removed {
            self.voxel_count -= 1;
            self.prune(key.ix, key.iy);
        }
        removed
    }

    pub fn remove_tile(&mut self, ix: i16, iy: i16) -> Option<TileData> {
        let tile = self
            .root
            .get_mut(&ix)
            .and_then(|b| b.columns.get_mut(&iy))
            .and_then(|c| c.tile.take());
        if tile.is_some() {
            self.tile_count -= 1;
            self.prune(ix, iy);
        }
        tile
    }

    /// Every voxel in canonical `(ix, iy, iz)` order.
    pub fn voxels(&self) -> impl Iterator<Item = (VoxelKey, &V)> + '_ {
        self.root.iter().flat_map(move |(ix, branch)| {
            branch.columns.iter().flat_map(move |(iy, column)| {
                self.stats.read();
                column
                    .voxels
                    .iter()
                    .map(move |(iz, v)| (VoxelKey::new(ix, iy, iz), v))
            })
        })
    }

    /// Every tile in `(ix, iy)` order. Never reads voxel lists.
    pub fn tiles(&self) -> impl Iterator<Item = (i16, i16, &TileData)> + '_ {
        self.root.iter().flat_map(|(ix, branch)| {
            branch
                .columns
                .iter()
                .filter_map(move |(iy, c)| c.tile.as_ref().map(|t| (ix, iy, t)))
        })
    }

    /// Columns with their vertical extent, for height maps.
    pub fn columns(&self) -> impl Iterator<Item = Column> + '_ {
        self.root.iter().flat_map(move |(ix, branch)| {
            branch.columns.iter().map(move |(iy, c)| {
                self.stats.read();
                let z_extent = c
                    .voxels
                    .first()
                    .zip(c.voxels.last())
                    .map(|((lo, _), (hi, _))| (lo, hi));
                Column {
                    ix,
                    iy,
                    tile: c.tile,
                    z_extent,
                    voxel_count: c.voxels.len(),
                }
            })
        })
    }

    /// Visits every voxel, one task per x-branch, and returns the count.
    pub fn visit_all<F>(&self, visitor: F) -> usize
    where
        V: Sync,
        F: Fn(VoxelKey, &V) + Sync + Send,
    {
        let branches: Vec<(i16, &XNode<V>)> = self.root.iter().collect();
        let stats = &self.stats;
        par::map_collect(branches, self.config.workers, |(ix, branch)| {
            let mut count = 0;
            for (iy, column) in &branch.columns {
                stats.read();
                for (iz, v) in &column.voxels {
                    visitor(VoxelKey::new(ix, iy, iz), v);
                    count += 1;
                }
            }
            count
        })
        .into_iter()
        .sum()
    }

    /// Visits every column down to depth 2 only; voxel lists are never read.
    pub fn visit_2d<F>(&self, visitor: F) -> usize
    where
        V: Sync,
        F: Fn(Cell2D<'_>) + Sync + Send,
    {
        let branches: Vec<(i16, &XNode<V>)> = self.root.iter().collect();
        let stats = &self.stats;
        par::map_collect(branches, self.config.workers, |(ix, branch)| {
            let mut count = 0;
            for (iy, column) in &branch.columns {
                stats.column();
                visitor(Cell2D {
                    ix,
                    iy,
                    tile: column.tile.as_ref(),
                    voxel_count: column.voxels.len(),
                });
                count += 1;
            }
            count
        })
        .into_iter()
        .sum()
    }

    fn collect_box<F>(&self, lo: [i16; 3], hi: [i16; 3], keep: F) -> Vec<(VoxelKey, V)>
    where
        V: Clone + Send + Sync,
        F: Fn(VoxelKey) -> bool + Sync + Send,
    {
        let branches: Vec<(i16, &XNode<V>)> = self
            .root
            .range(lo[0], hi[0])
            .map(Iterator::collect)
            .unwrap_or_default();
        let stats = &self.stats;
        par::map_collect(branches, self.config.workers, |(ix, branch)| {
            let mut found = Vec::new();
            for (iy, column) in branch.columns.range(lo[1], hi[1]).into_iter().flatten() {
                stats.read();
                for (iz, v) in column.voxels.range(lo[2], hi[2]).into_iter().flatten() {
                    let key = VoxelKey::new(ix, iy, iz);
                    if keep(key) {
                        found.push((key, v.clone()));
                    }
                }
            }
            found
        })
        .into_iter()
        .flatten()
        .collect()
    }

    /// Voxels with `|i - c| <= h` on every axis, by nested range scans.
    /// A box reaching past the key range is clipped and flagged.
    pub fn box_search(&self, center: VoxelKey, half_extents: [u32; 3]) -> BoxHits<V>
    where
        V: Clone + Send + Sync,
    {
        let c = [center.ix, center.iy, center.iz];
        let mut lo = [0i16; 3];
        let mut hi = [0i16; 3];
        let mut clamped = false;
        for axis in 0..3 {
            let l = i64::from(c[axis]) - i64::from(half_extents[axis]);
            let h = i64::from(c[axis]) + i64::from(half_extents[axis]);
            clamped |= l < INDEX_MIN || h > INDEX_MAX;
            lo[axis] = l.max(INDEX_MIN) as i16;
            hi[axis] = h.min(INDEX_MAX) as i16;
        }
        BoxHits {
            voxels: self.collect_box(lo, hi, |_| true),
            clamped,
        }
    }

    /// Voxels whose center lies within `radius` of `center`.
    ///
    /// The candidate box is `I ± (floor(radius / r) + 1)`: one voxel wider
    /// than the discrete radius, because a center near a voxel face can reach
    /// a voxel center just beyond `I ± floor(radius / r)`. Candidates are then
    /// filtered by exact center distance.
    pub fn radius_search(&self, center: &Point, radius: f64) -> Result<Vec<(VoxelKey, V)>, MapError>
    where
        V: Clone + Send + Sync,
    {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(MapError::InvalidArgument(format!(
                "radius must be finite and non-negative, got {radius}"
            )));
        }
        if !(center.x.is_finite() && center.y.is_finite() && center.z.is_finite()) {
            return Err(MapError::InvalidArgument(format!(
                "search center must be finite, got {center}"
            )));
        }
        let r = self.config.resolution;
        let reach = discrete_radius(radius, r) + 1;
        let mut lo = [0i16; 3];
        let mut hi = [0i16; 3];
        for (axis, coord) in [center.x, center.y, center.z].into_iter().enumerate() {
            let index = floor_div(coord, r);
            let l = (index - reach as f64).max(INDEX_MIN as f64);
            let h = (index + reach as f64).min(INDEX_MAX as f64);
            if l > h {
                return Ok(Vec::new());
            }
            lo[axis] = l as i16;
            hi[axis] = h as i16;
        }
        let r2 = radius * radius;
        Ok(self.collect_box(lo, hi, |key| {
            (key.center(r) - center).norm_squared() <= r2
        }))
    }

    pub fn layout() -> NodeLayout {
        NodeLayout {
            root: SkipList::<i16, XNode<V>>::header_bytes(),
            x_node: SkipList::<i16, XNode<V>>::slot_bytes(),
            y_node: SkipList::<i16, YNode<V>>::slot_bytes(),
            voxel: SkipList::<i16, V>::slot_bytes(),
            link: SkipList::<i16, V>::LINK_BYTES,
        }
    }

    /// Node and link counts, from a full walk.
    pub fn footprint(&self) -> Footprint {
        let mut fp = Footprint {
            x_nodes: self.root.len(),
            tower_links: self.root.tower_links(),
            lists: 1,
            ..Footprint::default()
        };
        for (_, branch) in &self.root {
            fp.y_nodes += branch.columns.len();
            fp.tower_links += branch.columns.tower_links();
            fp.lists += 1;
            for (_, column) in &branch.columns {
                fp.voxels += column.voxels.len();
                fp.tiles += usize::from(column.tile.is_some());
                fp.tower_links += column.voxels.tower_links();
                fp.lists += 1;
            }
        }
        fp
    }

    /// Full structural check of every list plus the tree invariants.
    pub fn validate(&self) -> Result<(), String> {
        self.root.validate().map_err(|e| format!("root: {e}"))?;
        let (mut voxels, mut tiles) = (0, 0);
        for (ix, branch) in &self.root {
            branch
                .columns
                .validate()
                .map_err(|e| format!("x={ix}: {e}"))?;
            if branch.columns.is_empty() {
                return Err(format!("empty xNode {ix} was not pruned"));
            }
            for (iy, column) in &branch.columns {
                column
                    .voxels
                    .validate()
                    .map_err(|e| format!("({ix}, {iy}): {e}"))?;
                if column.is_empty() {
                    return Err(format!("empty yNode ({ix}, {iy}) was not pruned"));
                }
                if let Some(t) = column.tile {
                    if t.navigable && t.hits == 0 {
                        return Err(format!("tile ({ix}, {iy}) navigable without hits"));
                    }
                    tiles += 1;
                }
                voxels += column.voxels.len();
            }
        }
        if voxels != self.voxel_count || tiles != self.tile_count {
            return Err(format!(
                "counted {voxels} voxels / {tiles} tiles, map records {} / {}",
                self.voxel_count, self.tile_count
            ));
        }
        Ok(())
    }

    /// Tile update for ground points, reaching depth 2 only. Each item is a
    /// key (its `iz` is ignored), a height in meters and a weight.
    pub fn integrate_tiles(&mut self, items: Vec<(VoxelKey, f64, f64)>, workers: usize) -> IntegrationReport
    where
        V: Send,
    {
        let workers = workers.max(1);
        let mut items = items;
        par::stable_sort_by_key(&mut items, workers, |item| item.0.ix);
        let groups = runs(&items, |item| item.0.ix);
        let ctx = self.ctx();
        for (ix, _) in &groups {
            self.root.insert_or_get(*ix, || XNode::new(&ctx, *ix));
        }
        let wanted: Vec<i16> = groups.iter().map(|g| g.0).collect();
        let work: Vec<_> = branches_mut(&mut self.root, &wanted)
            .into_iter()
            .zip(&groups)
            .map(|(branch, (ix, range))| (*ix, branch, &items[range.clone()]))
            .collect();
        let deltas = par::map_collect(work, workers, |(ix, branch, slice)| {
            tile_branch(ix, branch, slice, &ctx)
        });
        let mut report = IntegrationReport {
            points: items.len(),
            partitions: groups.len(),
            ..Default::default()
        };
        for d in deltas {
            report.tiles_created += d.tiles_created;
            report.tiles_updated += d.tiles_updated;
        }
        self.tile_count += report.tiles_created;
        report
    }
}

impl<V: Payload> SkiMap<V> {
    /// Fuses one sample at the voxel containing `p`.
    pub fn integrate_point(&mut self, p: &Point, sample: &V::Sample) -> Result<VoxelKey, MapError> {
        let key = self.quantize(p)?;
        self.integrate_key(key, sample);
        Ok(key)
    }

    /// Fuses one sample at `key`; true if the voxel was created.
    pub fn integrate_key(&mut self, key: VoxelKey, sample: &V::Sample) -> bool {
        self.stats.write();
        let column = self.column_or_insert(key.ix, key.iy);
        let (voxel, created) = column.voxels.insert_or_get(key.iz, V::empty);
        voxel.fuse(sample);
        if created {
            self.voxel_count += 1;
        }
        created
    }

    /// Quantizes a point cloud and applies the bounds policy. The order of
    /// the surviving points is preserved.
    fn quantize_cloud(
        &self,
        cloud: &[(Point, V::Sample)],
        workers: usize,
    ) -> Result<(Vec<Sampled<V::Sample>>, usize), MapError> {
        let r = self.config.resolution;
        let keys = par::map_slice(cloud, workers, |(p, _)| quantize(p, r));
        let mut items = Vec::with_capacity(cloud.len());
        let mut skipped = 0;
        for (key, (_, sample)) in keys.into_iter().zip(cloud) {
            match key {
                Ok(key) => items.push((key, *sample)),
                Err(e) if self.config.bounds_policy == BoundsPolicy::Reject => return Err(e),
                Err(_) => skipped += 1,
            }
        }
        Ok((items, skipped))
    }

    /// Integrates a point cloud with one worker per x-branch.
    ///
    /// The final map does not depend on `workers`: points are grouped by `ix`
    /// with a stable sort, so each voxel receives its samples in input order
    /// whatever the partition schedule.
    pub fn integrate_batch(
        &mut self,
        cloud: &[(Point, V::Sample)],
        workers: usize,
    ) -> Result<IntegrationReport, MapError> {
        let workers = workers.max(1);
        let (items, skipped) = self.quantize_cloud(cloud, workers)?;
        let mut report = self.integrate_keys(items, workers);
        report.skipped = skipped;
        Ok(report)
    }

    /// Batch fusion of pre-quantized samples.
    pub fn integrate_keys(&mut self, mut items: Vec<Sampled<V::Sample>>, workers: usize) -> IntegrationReport {
        let workers = workers.max(1);
        par::stable_sort_by_key(&mut items, workers, |item| item.0.ix);
        let groups = runs(&items, |item| item.0.ix);
        let ctx = self.ctx();
        for (ix, _) in &groups {
            self.root.insert_or_get(*ix, || XNode::new(&ctx, *ix));
        }
        let wanted: Vec<i16> = groups.iter().map(|g| g.0).collect();
        let stats = &self.stats;
        let work: Vec<_> = branches_mut(&mut self.root, &wanted)
            .into_iter()
            .zip(&groups)
            .map(|(branch, (ix, range))| (*ix, branch, &items[range.clone()]))
            .collect();
        let deltas = par::map_collect(work, workers, |(ix, branch, slice)| {
            fuse_branch(ix, branch, slice, &ctx, stats)
        });
        let mut report = IntegrationReport {
            points: items.len(),
            partitions: groups.len(),
            ..Default::default()
        };
        for d in deltas {
            report.voxels_created += d.created;
            report.voxels_updated += d.updated;
        }
        self.voxel_count += report.voxels_created;
        report
    }

    /// Erodes one sample from the voxel containing `p`.
    pub fn erode_point(&mut self, p: &Point, sample: &V::Sample) -> Result<Erosion, MapError> {
        let key = self.quantize(p)?;
        let report = self.erode_keys(vec![(key, *sample)], 1)?;
        Ok(if report.voxels_removed > 0 {
            Erosion::Drained
        } else {
            Erosion::Kept
        })
    }

    /// Erodes a point cloud previously fused with the same samples.
    /// All-or-nothing: any failing voxel leaves the map untouched.
    pub fn erode_batch(
        &mut self,
        cloud: &[(Point, V::Sample)],
        workers: usize,
    ) -> Result<ErosionReport, MapError> {
        let workers = workers.max(1);
        let r = self.config.resolution;
        let items = cloud
            .iter()
            .map(|(p, s)| quantize(p, r).map(|k| (k, *s)))
            .collect::<Result<Vec<_>, _>>()?;
        self.erode_keys(items, workers)
    }

    /// Batch erosion of pre-quantized samples; drained voxels are removed and
    /// empty ancestors pruned. Validated in full before the first write.
    pub fn erode_keys(
        &mut self,
        mut items: Vec<Sampled<V::Sample>>,
        workers: usize,
    ) -> Result<ErosionReport, MapError> {
        let workers = workers.max(1);
        par::stable_sort_by_key(&mut items, workers, |item| item.0.ix);
        let groups = runs(&items, |item| item.0.ix);
        let stats = &self.stats;

        let checks: Vec<_> = groups
            .iter()
            .map(|(ix, range)| (self.root.get(ix), &items[range.clone()]))
            .collect();
        par::map_collect(checks, workers, |(branch, slice)| {
            erosion_dry_run(branch, slice, stats)
        })
        .into_iter()
        .collect::<Result<Vec<()>, MapError>>()?;

        let wanted: Vec<i16> = groups.iter().map(|g| g.0).collect();
        let work: Vec<_> = branches_mut(&mut self.root, &wanted)
            .into_iter()
            .zip(&groups)
            .map(|(branch, (_, range))| (branch, &items[range.clone()]))
            .collect();
        let removed: usize = par::map_collect(work, workers, |(branch, slice)| {
            erode_branch(branch, slice, stats)
        })
        .into_iter()
        .sum();
        for ix in wanted {
            if self.root.get(&ix).is_some_and(|b| b.columns.is_empty()) {
                self.root.remove(&ix);
            }
        }
        self.voxel_count -= removed;
        Ok(ErosionReport {
            points: items.len(),
            voxels_removed: removed,
        })
    }
}
