//! Sparse voxel mapping on a tree of skip lists.
//!
//! A [`SkiMap`] nests three skip lists: x-indices, then y-indices (columns,
//! which may carry 2D ground tiles), then z-indexed voxels. Updates are
//! partitioned by x-branch and run in parallel; full, 2D-only, box and radius
//! queries walk the same tree. Voxel payloads follow the [`Payload`]
//! fuse/erode contract, which lets the [`posegraph`] integrator move a frame's
//! contribution when its pose is optimized.

pub mod baselines;
pub mod dump;
pub mod fusion;
pub mod ground;
pub mod map;
pub mod par;
pub mod posegraph;
pub mod skiplist;

pub use fusion::{Erosion, FusionError, OccupancyVoxel, Payload, Sample};
pub use map::{
    quantize, AxisLevels, BoundsPolicy, Cell2D, IntegrationReport, MapConfig, MapError, Point,
    SkiMap, TileData, VoxelKey,
};
pub use skiplist::SkipList;
