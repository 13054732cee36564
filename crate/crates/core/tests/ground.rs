use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use skimap::posegraph::Pose;
use std::collections::BTreeSet;

use rand_distr::{Distribution, Normal};

use skimap::ground::*;
use skimap::*;
use skimap::fusion::{OccupancyVoxel, Sample};
use skimap::map::MapConfig;

fn gaussian(rng: &mut impl Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).unwrap().sample(rng)
}

fn plane_cloud(rng: &mut impl Rng, n: usize, z: f64, sigma: f64) -> Vec<Point> {
    (0..n)
        .map(|_| Point::new(rng.random_range(-3.0..3.0), rng.random_range(0.5..5.0), z + gaussian(rng, sigma)))
        .collect()
}

#[test]
fn recovers_noisy_floor() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(1);
    let cloud = plane_cloud(&mut rng, 5000, -1.0, 0.005);
    let model = detect_ground(&cloud, &GroundConfig::default()).unwrap();
    let angle = model.normal.angle(&Vector3::z());
    assert!(angle.to_degrees() < 1.0, "normal off by {} deg", angle.to_degrees());
    assert!((model.offset + 1.0).abs() < 0.01, "offset {}", model.offset);
}

#[test]
fn planar_cloud_is_all_inliers() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(2);
    let cloud = plane_cloud(&mut rng, 1000, -0.8, 0.0);
    let model = detect_ground(&cloud, &GroundConfig::default()).unwrap();
    assert_eq!(model.inliers, cloud.len());
    let centroid = cloud.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / cloud.len() as f64;
    let c = model.to_zero_frame(&Point::from(centroid));
    assert!(c.coords.norm() < 1e-9);
    for p in &cloud {
        assert!(model.to_zero_frame(p).z.abs() <= model.inlier_threshold);
    }
}

#[test]
fn majority_plane_wins() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
    let mut cloud = plane_cloud(&mut rng, 1400, -1.0, 0.003);
    // wall x = 2, 30% of the points
    cloud.extend((0..600).map(|_| Point::new(2.0 + gaussian(&mut rng, 0.003), rng.random_range(0.5..5.0), rng.random_range(-1.0..1.5))));
    let model = detect_ground(&cloud, &GroundConfig::default()).unwrap();
    assert!(model.normal.angle(&Vector3::z()).to_degrees() < 1.0);
}

#[test]
fn too_few_inliers_fails() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(4);
    let cloud: Vec<Point> = (0..800)
        .map(|_| Point::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
        .collect();
    assert!(matches!(detect_ground(&cloud, &GroundConfig::default()), Err(GroundError::NoPlane { .. })));
    assert!(matches!(detect_ground(&cloud[..10], &GroundConfig::default()), Err(GroundError::NoPlane { .. })));
}

#[test]
fn zero_frame_inverse_is_identity() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
    let tilted: Vec<Point> = plane_cloud(&mut rng, 2000, -1.2, 0.002)
        .into_iter()
        .map(|p| Pose::new(Vector3::zeros(), UnitQuaternion::from_euler_angles(0.3, -0.1, 0.7)).transform_point(&p))
        .collect();
    let model = detect_ground(&tilted, &GroundConfig::default()).unwrap();
    let round = model.zero_frame.compose(&model.zero_frame.inverse());
    assert!(round.translation().norm() <= 1e-9);
    assert!(round.0.rotation.angle() <= 1e-9);
    // sensor sits above the ground in the zero frame
    assert!(model.to_zero_frame(&Point::origin()).z > 1.0);
}

#[test]
fn classification_examples() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(6);
    let cloud = plane_cloud(&mut rng, 1000, -1.0, 0.0);
    let model = detect_ground(&cloud, &GroundConfig::for_resolution(0.05)).unwrap();
    assert_eq!(model.classify(&Point::new(0.3, 2.0, -1.0)), PointLabel::Ground);
    assert_eq!(model.classify(&Point::new(0.3, 2.0, 0.0)), PointLabel::Obstacle);
}

#[test]
fn band_sweep_on_stairs() {
    // steps 0.1 m high: step k has 100 points at z = 0.1 k
    let heights: Vec<f64> = (0..6).flat_map(|k| std::iter::repeat_n(0.1 * k as f64, 100)).collect();
    for (band, expected) in [(0.05, 100), (0.15, 200), (0.25, 300), (0.55, 600)] {
        let ground = heights.iter().filter(|&&z| classify_height(z, band) == PointLabel::Ground).count();
        assert_eq!(ground, expected, "band {band}");
    }
    // band-monotone
    let mut prev = 0;
    for band in (0..70).map(|b| b as f64 * 0.01) {
        let n = heights.iter().filter(|&&z| classify_height(z, band) == PointLabel::Ground).count();
        assert!(n >= prev);
        prev = n;
    }
}

fn map() -> SkiMap {
    SkiMap::new(MapConfig::new(0.05).with_workers(2)).unwrap()
}

#[test]
fn all_ground_creates_tiles_only() {
    let mut m = map();
    let cloud: Vec<_> = (0..50).map(|i| (Point::new(i as f64 * 0.02, 0.0, 0.01), PointLabel::Ground)).collect();
    m.access_stats().reset();
    let report = integrate_classified(&mut m, &cloud, Sample::hit(), None, 2).unwrap();
    assert_eq!(m.len(), 0);
    assert_eq!(report.integration.voxels_created, 0);
    assert_eq!(m.tile_count(), 20);
    assert_eq!(m.access_stats().snapshot().voxel_list_writes, 0);
}

#[test]
fn mixed_cloud_counts() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(7);
    let cloud: Vec<(Point, PointLabel)> = (0..3000)
        .map(|_| {
            let p = Point::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.1..1.0));
            (p, classify_height(p.z, 0.1))
        })
        .collect();
    let mut m = map();
    integrate_classified(&mut m, &cloud, Sample::hit(), None, 3).unwrap();
    let obstacle_keys: BTreeSet<_> = cloud.iter().filter(|c| c.1 == PointLabel::Obstacle).map(|c| quantize_key(&c.0)).collect();
    let ground_cells: BTreeSet<_> = cloud.iter().filter(|c| c.1 == PointLabel::Ground).map(|c| { let k = quantize_key(&c.0); (k.ix, k.iy) }).collect();
    assert_eq!(m.len(), obstacle_keys.len());
    assert_eq!(m.tile_count(), ground_cells.len());
    m.validate().unwrap();
}

fn quantize_key(p: &Point) -> skimap::map::VoxelKey {
    skimap::map::quantize(p, 0.05).unwrap()
}

#[test]
fn ceiling_drops_roof() {
    let mut cloud: Vec<_> = (0..40).map(|i| (Point::new(i as f64 * 0.05, 0.0, 1.0), PointLabel::Obstacle)).collect();
    cloud.extend((0..40).map(|i| (Point::new(i as f64 * 0.05, 0.0, 2.5), PointLabel::Obstacle)));
    let mut m: SkiMap<OccupancyVoxel> = map();
    let report = integrate_classified(&mut m, &cloud, Sample::hit(), Some(2.0), 2).unwrap();
    assert_eq!(report.above_ceiling, 40);
    assert_eq!(m.len(), 40);
    assert!(m.voxels().all(|(k, _)| m.voxel_center(k).z < 2.0));
}
