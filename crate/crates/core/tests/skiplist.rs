use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use skimap::skiplist::*;

fn list_of(keys: &[i32]) -> SkipList<i32, i32> {
    let mut list = SkipList::with_seed(DEFAULT_MAX_LEVEL, 7);
    for &k in keys {
        list.insert(k, k.wrapping_mul(10));
    }
    list
}

#[test]
fn insert_into_empty() {
    let mut list = SkipList::<i32, ()>::new(8);
    let (_, created) = list.insert_or_get(5, || ());
    assert!(created);
    assert_eq!(list.len(), 1);
}

#[test]
fn insert_or_get_is_idempotent() {
    let mut list = SkipList::<i32, u8>::new(8);
    *list.insert_or_get(5, || 1).0 = 9;
    let (value, created) = list.insert_or_get(5, || 2);
    assert!(!created);
    assert_eq!(*value, 9);
    assert_eq!(list.len(), 1);
}

#[test]
fn base_level_is_ordered() {
    for order in [[3, -1, 7], [7, 3, -1], [-1, 7, 3]] {
        let list = list_of(&order);
        assert_eq!(list.keys().collect::<Vec<_>>(), vec![-1, 3, 7]);
    }
}

#[test]
fn find_hits_and_misses() {
    let list = list_of(&[3, 7]);
    assert_eq!(list.get(&7), Some(&70));
    assert_eq!(list.get(&5), None);
}

#[test]
fn neighbors() {
    let list = list_of(&[3, 7]);
    let (p, s) = list.find_neighbors(&5);
    assert_eq!((p.map(|e| e.0), s.map(|e| e.0)), (Some(3), Some(7)));
    let (p, s) = list.find_neighbors(&1);
    assert_eq!((p.map(|e| e.0), s.map(|e| e.0)), (None, Some(3)));
    let (p, s) = list.find_neighbors(&3);
    assert_eq!((p.map(|e| e.0), s.map(|e| e.0)), (None, Some(7)));
    let (p, s) = list.find_neighbors(&9);
    assert_eq!((p.map(|e| e.0), s.map(|e| e.0)), (Some(7), None));
}

#[test]
fn range_visits() {
    let list = list_of(&[1, 2, 5, 9]);
    let mut seen = Vec::new();
    assert_eq!(list.range_visit(2, 5, |k, _| seen.push(k)), Ok(2));
    assert_eq!(seen, vec![2, 5]);
    assert_eq!(list.range_visit(6, 8, |_, _| {}), Ok(0));
    assert_eq!(list.range_visit(5, 2, |_, _| {}), Err(SkipListError::EmptyRange));
}

#[test]
fn remove_present_and_missing() {
    let mut list = list_of(&[3]);
    assert_eq!(list.remove(&4), None);
    assert_eq!(list.remove(&3), Some(30));
    assert!(list.is_empty());
    list.validate().unwrap();
}

#[test]
fn first_and_last() {
    let list = list_of(&[4, -8, 15, 16, 23, 42]);
    assert_eq!(list.first().map(|e| e.0), Some(-8));
    assert_eq!(list.last().map(|e| e.0), Some(42));
    assert!(SkipList::<i32, ()>::new(4).last().is_none());
}

#[test]
fn extreme_keys() {
    let list = list_of(&[i32::MIN, 0, i32::MAX]);
    assert_eq!(list.keys().collect::<Vec<_>>(), vec![i32::MIN, 0, i32::MAX]);
    assert_eq!(list.range(i32::MIN, i32::MAX).unwrap().count(), 3);
}

#[test]
fn ten_thousand_inserts_match_btreemap() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
    let mut list = SkipList::with_seed(DEFAULT_MAX_LEVEL, 3);
    let mut oracle = BTreeMap::new();
    for _ in 0..10_000 {
        let k: i32 = rng.random_range(-50_000..50_000);
        let v: u32 = rng.random();
        list.insert(k, v);
        oracle.insert(k, v);
    }
    list.validate().unwrap();
    for (k, v) in &oracle {
        assert_eq!(list.get(k), Some(v));
    }
    assert!(list.iter().map(|(k, v)| (k, *v)).eq(oracle.iter().map(|(k, v)| (*k, *v))));
}

#[test]
fn mixed_fuzz_matches_btreemap() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(99);
    let mut list = SkipList::with_seed(6, 5);
    let mut oracle = BTreeMap::new();
    for _ in 0..10_000 {
        let k: i16 = rng.random_range(-300..300);
        if rng.random_bool(0.45) {
            assert_eq!(list.remove(&k), oracle.remove(&k));
        } else {
            assert_eq!(list.insert(k, k as i64), oracle.insert(k, k as i64));
        }
    }
    list.validate().unwrap();
    assert_eq!(list.len(), oracle.len());
    assert!(list.keys().eq(oracle.keys().copied()));
}

#[test]
fn fixed_seed_gives_identical_towers() {
    let build = |seed| {
        let mut list = SkipList::<i32, ()>::with_seed(16, seed);
        for k in 0..2000 {
            list.insert((k * 7919) % 2003, ());
        }
        list.heights()
    };
    assert_eq!(build(42), build(42));
    assert_ne!(build(42), build(43));
}

#[test]
fn larger_cap_never_lowers_towers() {
    let heights = |cap| {
        let mut list = SkipList::<i32, ()>::with_seed(cap, 8);
        for k in 0..5000 {
            list.insert(k, ());
        }
        (list.heights(), list.tower_links())
    };
    let (h4, l4) = heights(4);
    let (h8, l8) = heights(8);
    assert!(h4.iter().zip(&h8).all(|(a, b)| a == &(*b).min(4)));
    assert!(l4 < l8);
}

#[test]
fn promotion_roughly_halves_levels() {
    let mut list = SkipList::<u32, ()>::with_seed(16, 1);
    for k in 0..20_000 {
        list.insert(k, ());
    }
    let heights = list.heights();
    let at_least = |h: usize| heights.iter().filter(|&&x| x >= h).count() as f64;
    for h in 2..6 {
        let ratio = at_least(h) / at_least(h - 1);
        assert!((ratio - 0.5).abs() < 0.05, "level {h} ratio {ratio}");
    }
}

#[test]
fn retain_and_clear() {
    let mut list = list_of(&(0..100).collect::<Vec<_>>());
    list.retain(|k, _| k % 3 == 0);
    list.validate().unwrap();
    assert_eq!(list.len(), 34);
    list.clear();
    assert!(list.is_empty());
    list.validate().unwrap();
}

#[test]
#[should_panic(expected = "max_level")]
fn zero_levels_rejected() {
    let _ = SkipList::<i32, ()>::new(0);
}

#[derive(Debug, Clone)]
enum Op {
    Insert(i16),
    Remove(i16),
    Find(i16),
    Neighbors(i16),
    Range(i16, i16),
}

fn op() -> impl Strategy<Value = Op> {
    let key = -64i16..64;
    prop_oneof![
        3 => key.clone().prop_map(Op::Insert),
        2 => key.clone().prop_map(Op::Remove),
        1 => key.clone().prop_map(Op::Find),
        1 => key.clone().prop_map(Op::Neighbors),
        1 => (key.clone(), key).prop_map(|(a, b)| Op::Range(a.min(b), a.max(b))),
    ]
}

proptest! {
    #[test]
    fn behaves_like_btreemap(ops in prop::collection::vec(op(), 0..400), seed: u64, cap in 1usize..12) {
        let mut list = SkipList::with_seed(cap, seed);
        let mut oracle = BTreeMap::new();
        for op in ops {
            match op {
                Op::Insert(k) => prop_assert_eq!(list.insert(k, k), oracle.insert(k, k)),
                Op::Remove(k) => prop_assert_eq!(list.remove(&k), oracle.remove(&k)),
                Op::Find(k) => prop_assert_eq!(list.get(&k), oracle.get(&k)),
                Op::Neighbors(k) => {
                    let (p, s) = list.find_neighbors(&k);
                    prop_assert_eq!(p.map(|e| e.0), oracle.range(..k).next_back().map(|e| *e.0));
                    prop_assert_eq!(s.map(|e| e.0), oracle.range(k + 1..).next().map(|e| *e.0));
                }
                Op::Range(lo, hi) => {
                    let got: Vec<_> = list.range(lo, hi).unwrap().map(|e| e.0).collect();
                    let want: Vec<_> = oracle.range(lo..=hi).map(|e| *e.0).collect();
                    prop_assert_eq!(got, want);
                }
            }
        }
        prop_assert!(list.validate().is_ok());
        prop_assert_eq!(list.len(), oracle.len());
    }
}
