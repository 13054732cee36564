use proptest::prelude::*;

use skimap::fusion::*;

fn sig9(v: f64) -> String {
    let mut s = String::new();
    write_sig9(&mut s, v);
    s
}

#[test]
fn fuse_arithmetic() {
    let v = OccupancyVoxel::new(0.5, 1.0).fused(&Sample::new(1.0, 1.0).unwrap());
    assert_eq!(v, OccupancyVoxel::new(0.75, 2.0));
    let v = OccupancyVoxel::empty().fused(&Sample::new(0.8, 2.0).unwrap());
    assert_eq!(v, OccupancyVoxel::new(0.8, 2.0));
}

#[test]
fn erode_inverts_fuse() {
    let s = Sample::new(1.0, 1.0).unwrap();
    let mut v = OccupancyVoxel::new(0.5, 1.0).fused(&s);
    assert_eq!(v.erode(&s), Ok(Erosion::Kept));
    assert!((v.probability - 0.5).abs() <= 1e-9);
    assert!((v.weight - 1.0).abs() <= 1e-9);
}

#[test]
fn full_drain_signals_delete() {
    let mut v = OccupancyVoxel::new(0.8, 2.0);
    assert_eq!(v.erode(&Sample::new(0.8, 2.0).unwrap()), Ok(Erosion::Drained));
}

#[test]
fn eroding_unfused_weight_underflows() {
    let mut v = OccupancyVoxel::new(0.8, 1.0);
    let err = v.erode(&Sample::new(0.8, 2.0).unwrap()).unwrap_err();
    assert!(matches!(err, FusionError::ErosionUnderflow { .. }));
    assert_eq!(v, OccupancyVoxel::new(0.8, 1.0));
}

#[test]
fn sample_validation() {
    assert!(Sample::new(1.1, 1.0).is_err());
    assert!(Sample::new(0.5, 0.0).is_err());
    assert!(Sample::new(0.5, f64::NAN).is_err());
}

#[test]
fn sig9_formatting() {
    assert_eq!(sig9(0.0), "0");
    assert_eq!(sig9(1.0), "1");
    assert_eq!(sig9(0.75), "0.75");
    assert_eq!(sig9(2.0 / 3.0), "0.666666667");
    assert_eq!(sig9(123456.0), "123456");
    assert_eq!(sig9(1e-7), "1e-7");
    assert_eq!(sig9(0.9999999999), "1");
    assert_eq!(sig9(1.5e12), "1.5e12");
}

#[test]
fn parse_rejects_garbage() {
    assert!(OccupancyVoxel::parse_fields(&["0.5"]).is_err());
    assert!(OccupancyVoxel::parse_fields(&["x", "1"]).is_err());
    assert!(OccupancyVoxel::parse_fields(&["1.5", "1"]).is_err());
}

fn sample() -> impl Strategy<Value = Sample> {
    (0.0f64..=1.0, 0.05f64..5.0).prop_map(|(p, w)| Sample::new(p, w).unwrap())
}

proptest! {
    #[test]
    fn fused_probability_is_weighted_mean(samples in prop::collection::vec(sample(), 1..64)) {
        let mut v = OccupancyVoxel::empty();
        for s in &samples {
            v.fuse(s);
        }
        let w: f64 = samples.iter().map(|s| s.weight).sum();
        let pw: f64 = samples.iter().map(|s| s.probability * s.weight).sum();
        prop_assert!((v.probability - pw / w).abs() <= 1e-9);
        prop_assert!((v.weight - w).abs() <= 1e-9 * samples.len() as f64);
        prop_assert!((0.0..=1.0).contains(&v.probability));
    }

    #[test]
    fn fusion_is_order_independent(mut samples in prop::collection::vec(sample(), 1..32), seed: u64) {
        let fuse_all = |ss: &[Sample]| ss.iter().fold(OccupancyVoxel::empty(), |v, s| v.fused(s));
        let a = fuse_all(&samples);
        // deterministic shuffle
        let n = samples.len();
        for i in (1..n).rev() {
            let j = (seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) >> 33) as usize % (i + 1);
            samples.swap(i, j);
        }
        let b = fuse_all(&samples);
        prop_assert!((a.probability - b.probability).abs() <= 1e-9);
        prop_assert!((a.weight - b.weight).abs() <= 1e-9);
    }

    #[test]
    fn erode_fuse_is_identity(p in 0.0f64..=1.0, w in 0.01f64..10.0, s in sample()) {
        let start = OccupancyVoxel::new(p, w);
        let mut v = start.fused(&s);
        prop_assert_eq!(v.erode(&s), Ok(Erosion::Kept));
        prop_assert!((v.probability - start.probability).abs() <= 1e-9);
        prop_assert!((v.weight - start.weight).abs() <= 1e-9);
    }

    #[test]
    fn dump_fields_round_trip(p in 0.0f64..=1.0, w in 0.0f64..1e6) {
        let mut text = String::new();
        OccupancyVoxel::new(p, w).write_fields(&mut text);
        let fields: Vec<&str> = text.split(' ').collect();
        let back = OccupancyVoxel::parse_fields(&fields).unwrap();
        let mut again = String::new();
        back.write_fields(&mut again);
        prop_assert_eq!(text, again);
    }
}
