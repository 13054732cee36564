//! Ground plane from the first frame, zero reference frame, and
//! ground/obstacle integration.
//!
//! The dominant plane of the first frame is found by random-consensus
//! fitting and refined by least squares on its inliers. The zero reference
//! frame puts that plane at `z = 0`, with the origin at the inlier centroid
//! and `+z` pointing toward the sensor. Ground points then only update
//! depth-2 tiles; obstacle points become voxels.

use nalgebra::{Matrix3, SymmetricEigen, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::fusion::Payload;
use crate::map::{BoundsPolicy, IntegrationReport, MapError, Point, SkiMap};
use crate::posegraph::Pose;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GroundError {
    #[error("no plane with at least {required} inliers (best had {found})")]
    NoPlane { found: usize, required: usize },
    #[error("invalid ground configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointLabel {
    Ground,
    Obstacle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundConfig {
    /// Point-to-plane distance for a consensus inlier, meters.
    pub inlier_threshold: f64,
    pub min_inliers: usize,
    /// Probability of drawing at least one all-inlier triple.
    pub confidence: f64,
    pub max_iterations: usize,
    pub seed: u64,
    /// Half-width of the ground band around `z = 0`, meters.
    pub band: f64,
}

impl GroundConfig {
    /// Defaults with the classification band tied to the map resolution.
    pub fn for_resolution(resolution: f64) -> Self {
        Self {
            band: 2.0 * resolution,
            ..Self::default()
        }
    }
}

impl Default for GroundConfig {
    fn default() -> Self {
        Self {
            inlier_threshold: 0.02,
            min_inliers: 500,
            confidence: 0.99,
            max_iterations: 1000,
            seed: 0,
            band: 0.1,
        }
    }
}

/// Detected ground plane `normal · x = offset` and the frame aligned with it.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundModel {
    pub normal: Vector3<f64>,
    pub offset: f64,
    /// Sensor frame to zero reference frame.
    pub zero_frame: Pose,
    pub inlier_threshold: f64,
    pub inliers: usize,
    pub band: f64,
}

fn plane_through(a: &Point, b: &Point, c: &Point) -> Option<(Vector3<f64>, f64)> {
    let n = (b - a).cross(&(c - a));
    let len = n.norm();
    (len > 1e-12).then(|| {
        let n = n / len;
        (n, n.dot(&a.coords))
    })
}

fn count_inliers(points: &[Point], normal: &Vector3<f64>, offset: f64, threshold: f64) -> usize {
    points
        .iter()
        .filter(|p| (normal.dot(&p.coords) - offset).abs() <= threshold)
        .count()
}

/// Least-squares plane through the inliers: normal is the covariance
/// eigenvector of the smallest eigenvalue.
fn refine(points: &[Point], normal: &Vector3<f64>, offset: f64, threshold: f64) -> Option<(Vector3<f64>, f64, Point)> {
    let inliers: Vec<&Point> = points
        .iter()
        .filter(|p| (normal.dot(&p.coords) - offset).abs() <= threshold)
        .collect();
    if inliers.len() < 3 {
        return None;
    }
    let n = inliers.len() as f64;
    let centroid = inliers.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n;
    let cov = inliers.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p.coords - centroid;
        acc + d * d.transpose()
    }) / n;
    let eig = SymmetricEigen::new(cov);
    let (i, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let mut refined = eig.eigenvectors.column(i).into_owned();
    if refined.dot(normal) < 0.0 {
        refined = -refined;
    }
    Some((refined, refined.dot(&centroid), Point::from(centroid)))
}

fn iterations_needed(inlier_ratio: f64, confidence: f64, cap: usize) -> usize {
    let all_inliers = inlier_ratio.powi(3);
    if all_inliers >= 1.0 {
        return 1;
    }
    if all_inliers <= 0.0 {
        return cap;
    }
    let n = (1.0 - confidence).ln() / (1.0 - all_inliers).ln();
    (n.ceil() as usize).clamp(1, cap)
}

/// Finds the dominant plane of `points` (sensor frame, sensor at the origin).
pub fn detect_ground(points: &[Point], config: &GroundConfig) -> Result<GroundModel, GroundError> {
    if !(config.inlier_threshold > 0.0) || !(0.0..1.0).contains(&config.confidence) || config.band < 0.0 {
        return Err(GroundError::InvalidConfig(format!("{config:?}")));
    }
    let required = config.min_inliers.max(3);
    if points.len() < required {
        return Err(GroundError::NoPlane {
            found: 0,
            required,
        });
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(config.seed);
    let mut best: Option<(Vector3<f64>, f64, usize)> = None;
    let mut budget = config.max_iterations;
    let mut iteration = 0;
    while iteration < budget {
        iteration += 1;
        let i = rng.random_range(0..points.len());
        let j = rng.random_range(0..points.len());
        let k = rng.random_range(0..points.len());
        if i == j || j == k || i == k {
            continue;
        }
        let Some((normal, offset)) = plane_through(&points[i], &points[j], &points[k]) else {
            continue;
        };
        let inliers = count_inliers(points, &normal, offset, config.inlier_threshold);
        if best.is_none_or(|b| inliers > b.2) {
            best = Some((normal, offset, inliers));
            let ratio = inliers as f64 / points.len() as f64;
            budget = iterations_needed(ratio, config.confidence, config.max_iterations);
        }
    }
    let found = best.map_or(0, |b| b.2);
    let Some((normal, offset, _)) = best.filter(|b| b.2 >= required) else {
        return Err(GroundError::NoPlane { found, required });
    };
    let (mut normal, mut offset, centroid) =
        refine(points, &normal, offset, config.inlier_threshold).ok_or(GroundError::NoPlane { found, required })?;
    // +z toward the sensor at the origin: its signed distance -offset must be positive
    if offset > 0.0 || (offset == 0.0 && normal.z < 0.0) {
        normal = -normal;
        offset = -offset;
    }
    let inliers = count_inliers(points, &normal, offset, config.inlier_threshold);
    let rotation = UnitQuaternion::rotation_between(&normal, &Vector3::z())
        .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI));
    let origin = centroid - normal * (normal.dot(&centroid.coords) - offset);
    let zero_frame = Pose::new(-(rotation * origin.coords), rotation);
    Ok(GroundModel {
        normal,
        offset,
        zero_frame,
        inlier_threshold: config.inlier_threshold,
        inliers,
        band: config.band,
    })
}

impl GroundModel {
    /// Sensor-frame point expressed in the zero reference frame.
    pub fn to_zero_frame(&self, p: &Point) -> Point {
        self.zero_frame.transform_point(p)
    }

    /// Labels a point given in the zero reference frame.
    pub fn classify_map_point(&self, p: &Point) -> PointLabel {
        classify_height(p.z, self.band)
    }

    /// Labels a point given in the sensor frame the model was detected in.
    pub fn classify(&self, p: &Point) -> PointLabel {
        self.classify_map_point(&self.to_zero_frame(p))
    }

    pub fn with_band(mut self, band: f64) -> Self {
        self.band = band;
        self
    }
}

/// Ground iff `|z| <= band`.
pub fn classify_height(z: f64, band: f64) -> PointLabel {
    if z.abs() <= band {
        PointLabel::Ground
    } else {
        PointLabel::Obstacle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassifiedReport {
    pub integration: IntegrationReport,
    pub ground_points: usize,
    pub obstacle_points: usize,
    /// Obstacles above the ceiling, not integrated.
    pub above_ceiling: usize,
}

/// Integrates labelled points (zero reference frame). Ground points update
/// tiles at depth 2 only; obstacles are fused as voxels unless their height
/// exceeds `ceiling`.
pub fn integrate_classified<V: Payload>(
    map: &mut SkiMap<V>,
    cloud: &[(Point, PointLabel)],
    obstacle_sample: V::Sample,
    ceiling: Option<f64>,
    workers: usize,
) -> Result<ClassifiedReport, MapError> {
    let mut report = ClassifiedReport::default();
    let skip = map.config().bounds_policy == BoundsPolicy::Skip;
    let mut tiles = Vec::new();
    let mut voxels = Vec::new();
    for (p, label) in cloud {
        match label {
            PointLabel::Ground => report.ground_points += 1,
            PointLabel::Obstacle => {
                report.obstacle_points += 1;
                if ceiling.is_some_and(|c| p.z > c) {
                    report.above_ceiling += 1;
                    continue;
                }
            }
        }
        let key = match map.quantize(p) {
            Ok(key) => key,
            Err(_) if skip => {
                report.integration.skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        match label {
            PointLabel::Ground => tiles.push((key, p.z, 1.0)),
            PointLabel::Obstacle => voxels.push((key, obstacle_sample)),
        }
    }
    let skipped = report.integration.skipped;
    report.integration = map.integrate_tiles(tiles, workers);
    report.integration += map.integrate_keys(voxels, workers);
    report.integration.skipped = skipped;
    Ok(report)
}
