use std::collections::BTreeSet;

use skimap::baselines::*;
use skimap::*;
use skimap::fusion::{OccupancyVoxel, Sample};
use skimap::map::MapConfig;
use proptest::prelude::*;

fn k(x: i16, y: i16, z: i16) -> VoxelKey {
    VoxelKey::new(x, y, z)
}

#[test]
fn dense_grid_unit_cube() {
    let m = MemoryModel::workspace(1.0, 1.0, 1.0, 0.5);
    assert_eq!(m.dense_grid().unwrap(), 32.0);
}

#[test]
fn dense_grid_campus_dimensions() {
    // 292 * 167 * 28 m^3 at 5 cm: 8000 voxels per m^3.
    let m = MemoryModel::workspace(292.0, 167.0, 28.0, 0.05);
    let expected = (292u64 * 167 * 28 * 8000 * 4) as f64;
    let got = m.dense_grid().unwrap();
    assert!(((got - expected) / expected).abs() < 1e-12);
}

#[test]
fn dense_grid_cubic_law() {
    let a = MemoryModel::workspace(10.0, 20.0, 3.0, 0.1).dense_grid().unwrap();
    let b = MemoryModel::workspace(10.0, 20.0, 3.0, 0.2).dense_grid().unwrap();
    assert!((a / b - 8.0).abs() < 1e-12);
}

#[test]
fn dense_grid_rejects_non_positive() {
    assert!(MemoryModel::workspace(0.0, 1.0, 1.0, 0.1).dense_grid().is_err());
    assert!(MemoryModel::workspace(1.0, 1.0, 1.0, -0.1).dense_grid().is_err());
    assert!(MemoryModel::workspace(1.0, 1.0, 1.0, f64::NAN).dense_grid().is_err());
}

#[test]
fn octree_linear_form() {
    assert_eq!(MemoryModel::default().octree().unwrap(), 0.0);
    let m = MemoryModel {
        n_leaf: 100,
        b_leaf: 16.0,
        n_inner: 20,
        b_inner: 64.0,
        ..MemoryModel::default()
    };
    assert_eq!(m.octree().unwrap(), 2880.0);
}

#[test]
fn mls_form() {
    let m = MemoryModel {
        x: 10.0,
        y: 4.0,
        r: 0.5,
        b_tile: 8.0,
        n_voxels: 7,
        b_voxel: 16.0,
        ..MemoryModel::default()
    };
    assert_eq!(m.mls().unwrap(), 160.0 * 8.0 + 7.0 * 16.0);
    assert!(MemoryModel { r: 0.0, ..m }.mls().is_err());
}

#[test]
fn empty_map_costs_only_the_root() {
    let map: SkiMap = SkiMap::with_resolution(0.1).unwrap();
    let rep = measure_skimap_memory(&map);
    assert_eq!(rep.footprint.voxels, 0);
    assert_eq!(rep.footprint.x_nodes, 0);
    assert_eq!(
        rep.bytes,
        rep.layout.root + rep.footprint.tower_links * rep.layout.link
    );
}

#[test]
fn one_voxel_costs_one_node_per_level() {
    let mut map: SkiMap = SkiMap::with_resolution(0.1).unwrap();
    map.integrate_key(k(1, 2, 3), &Sample::hit());
    let rep = measure_skimap_memory(&map);
    assert_eq!((rep.footprint.x_nodes, rep.footprint.y_nodes, rep.footprint.voxels), (1, 1, 1));
    let l = rep.layout;
    assert_eq!(
        rep.bytes,
        l.root + l.x_node + l.y_node + l.voxel + rep.footprint.tower_links * l.link
    );
}

#[test]
fn grid_index_round_trip() {
    let g: DenseGrid<u8> = DenseGrid::new(k(-3, 5, -7), [4, 3, 5]).unwrap();
    for i in 0..g.capacity() {
        let key = g.key_of(i).unwrap();
        assert_eq!(g.index_of(key), Some(i));
    }
    assert_eq!(g.index_of(k(-4, 5, -7)), None);
    assert_eq!(g.index_of(k(1, 5, -7)), None);
    assert!(DenseGrid::<u8>::new(k(0, 0, 0), [0, 1, 1]).is_err());
    assert!(DenseGrid::<u8>::new(k(i16::MAX, 0, 0), [2, 1, 1]).is_err());
}

#[test]
fn octree_get_and_counts() {
    let mut t = ReferenceOctree::new();
    t.insert(k(0, 0, 0), 1u32);
    t.insert(k(-1, 0, 0), 2);
    t.insert(k(0, 0, 0), 3);
    assert_eq!(t.len(), 2);
    assert_eq!(t.get(k(0, 0, 0)), Some(&3));
    assert_eq!(t.get(k(-1, 0, 0)), Some(&2));
    assert_eq!(t.get(k(1, 0, 0)), None);
    // Root plus two disjoint 15-node paths below the top split.
    assert_eq!(t.inner_count(), 1 + 2 * 15);
    assert_eq!(t.keys(), vec![k(-1, 0, 0), k(0, 0, 0)]);
}

#[test]
fn brute_radius_single_voxel() {
    let keys = [k(0, 0, 0), k(5, 5, 5)];
    let c = Point::new(0.05, 0.05, 0.05);
    assert_eq!(brute_radius(keys, &c, 0.01, 0.1), BTreeSet::from([k(0, 0, 0)]));
    let off = Point::new(0.09, 0.09, 0.09);
    assert!(brute_radius(keys, &off, 0.02, 0.1).is_empty());
}

fn keys_strategy() -> impl Strategy<Value = Vec<(i16, i16, i16)>> {
    prop::collection::vec((-20i16..20, -20i16..20, -5i16..5), 0..300)
}

proptest! {
    #[test]
    fn grid_octree_and_map_agree(raw in keys_strategy(), weights in prop::collection::vec(0.1f64..3.0, 300)) {
        let mut map: SkiMap = SkiMap::new(MapConfig::new(0.1).with_workers(1)).unwrap();
        let mut grid: DenseGrid<OccupancyVoxel> = DenseGrid::new(k(-20, -20, -5), [40, 40, 10]).unwrap();
        let mut tree = ReferenceOctree::<OccupancyVoxel>::new();
        for (i, &(x, y, z)) in raw.iter().enumerate() {
            let s = Sample::new((i % 7) as f64 / 6.0, weights[i]).unwrap();
            map.integrate_key(k(x, y, z), &s);
            grid.integrate(k(x, y, z), &s).unwrap();
            tree.integrate(k(x, y, z), &s);
        }
        let from_map: Vec<_> = map.voxels().map(|(key, v)| (key, *v)).collect();
        let from_grid: Vec<_> = grid.occupied().map(|(key, v)| (key, *v)).collect();
        prop_assert_eq!(from_map.len(), from_grid.len());
        for ((ka, va), (kb, vb)) in from_map.iter().zip(&from_grid) {
            prop_assert_eq!(ka, kb);
            prop_assert!((va.probability - vb.probability).abs() <= 1e-9);
            prop_assert!((va.weight - vb.weight).abs() <= 1e-9);
        }
        let map_keys: Vec<_> = from_map.iter().map(|(key, _)| *key).collect();
        prop_assert_eq!(tree.keys(), map_keys);
    }

    #[test]
    fn octree_radius_matches_brute(raw in keys_strategy(), c in (-2.0f64..2.0, -2.0f64..2.0, -0.5f64..0.5), radius in 0.0f64..1.0) {
        let mut tree = ReferenceOctree::new();
        for &(x, y, z) in &raw {
            tree.insert(k(x, y, z), ());
        }
        let center = Point::new(c.0, c.1, c.2);
        let got: BTreeSet<_> = tree.radius_search(&center, radius, 0.1).into_iter().collect();
        let keys = raw.iter().map(|&(x, y, z)| k(x, y, z));
        prop_assert_eq!(got, brute_radius(keys, &center, radius, 0.1));
    }
}
