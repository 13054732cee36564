use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use skimap::ground::GroundConfig;
use skimap::posegraph::IntegratorConfig;
use skimap::skiplist::{DEFAULT_MAX_LEVEL, MAX_LEVEL_CAP};
use skimap::{AxisLevels, BoundsPolicy, MapConfig};

use crate::error::CliError;

/// Everything that determines a run. Serialized into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Voxel side, meters.
    pub resolution: f64,
    /// Skip list depth per nesting level: x, y, z.
    pub depths: [usize; 3],
    pub workers: usize,
    /// Frames (re-)integrated per cycle.
    pub batch_bound: usize,
    /// Detect the floor in the first frame and route ground points to tiles.
    pub ground_tracking: bool,
    /// Obstacles above this height (zero frame, meters) are dropped.
    pub ceiling: Option<f64>,
    pub ground_threshold: f64,
    pub ground_min_inliers: usize,
    /// Drop out-of-range points instead of failing the batch.
    pub skip_out_of_bounds: bool,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            resolution: 0.05,
            depths: [DEFAULT_MAX_LEVEL; 3],
            workers: skimap::par::default_workers(),
            batch_bound: IntegratorConfig::default().batch_bound,
            ground_tracking: false,
            ceiling: None,
            ground_threshold: GroundConfig::default().inlier_threshold,
            ground_min_inliers: GroundConfig::default().min_inliers,
            skip_out_of_bounds: false,
            input: None,
            output: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("bad config file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Usage(msg));
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return bad(format!("resolution must be positive, got {}", self.resolution));
        }
        if let Some(d) = self.depths.iter().find(|d| !(1..=MAX_LEVEL_CAP).contains(*d)) {
            return bad(format!("depths must be in 1..={MAX_LEVEL_CAP}, got {d}"));
        }
        if self.workers == 0 {
            return bad("workers must be positive".into());
        }
        if self.batch_bound == 0 {
            return bad("batch_bound must be positive".into());
        }
        if !(self.ground_threshold > 0.0) {
            return bad(format!("ground_threshold must be positive, got {}", self.ground_threshold));
        }
        if self.ceiling.is_some_and(|c| !c.is_finite()) {
            return bad("ceiling must be finite".into());
        }
        Ok(())
    }

    pub fn map_config(&self) -> MapConfig {
        let [x, y, z] = self.depths;
        MapConfig::new(self.resolution)
            .with_levels(AxisLevels { x, y, z })
            .with_workers(self.workers)
            .with_seed(self.seed)
            .with_bounds_policy(if self.skip_out_of_bounds {
                BoundsPolicy::Skip
            } else {
                BoundsPolicy::Reject
            })
    }

    pub fn integrator_config(&self) -> IntegratorConfig {
        IntegratorConfig {
            batch_bound: self.batch_bound,
            workers: self.workers,
            ..IntegratorConfig::default()
        }
    }

    pub fn ground_config(&self) -> GroundConfig {
        GroundConfig {
            inlier_threshold: self.ground_threshold,
            min_inliers: self.ground_min_inliers,
            seed: self.seed,
            ..GroundConfig::for_resolution(self.resolution)
        }
    }

    /// Compact JSON, used for report headers.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
