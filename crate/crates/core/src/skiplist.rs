//! Ordered key/value skip list with probabilistic tower heights.
//!
//! Nodes live in an arena (`Vec`) and link to each other through `u32`
//! indices, so the list is plain safe Rust and can be sent between threads.
//! A freed slot is recycled by the next insertion.
//!
//! Tower heights are drawn with a single uniform sample per created node:
//! `height = 1 + floor(ln(1 - u) / ln(p))`, capped at `max_level`. Because each
//! node consumes exactly one draw, two lists fed the same seed and the same
//! insertion sequence produce identical towers regardless of `max_level`,
//! except that heights are clamped at the smaller cap.

use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

/// Default number of levels, the best integration-time/memory trade-off in
/// depth sweeps.
pub const DEFAULT_MAX_LEVEL: usize = 8;

/// Upper bound accepted for `max_level`.
pub const MAX_LEVEL_CAP: usize = 64;

/// Classic promotion probability: level `i` holds about half of level `i - 1`.
pub const DEFAULT_PROMOTION: f64 = 0.5;

const NIL: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SkipListError {
    #[error("empty range: lower bound is greater than upper bound")]
    EmptyRange,
}

/// Structural invariant violation reported by [`SkipList::validate`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("skip list invariant violated: {0}")]
pub struct InvariantViolation(pub String);

struct Node<K, V> {
    key: K,
    value: V,
    next: Box<[u32]>,
}

/// An ordered map from `K` to `V` backed by a skip list.
///
/// One writer at a time: the list has no internal synchronisation. Shared
/// references may be read from many threads while no writer is active.
pub struct SkipList<K, V, R = SplitMix64> {
    head: Box<[u32]>,
    nodes: Vec<Option<Node<K, V>>>,
    free: Vec<u32>,
    len: usize,
    level: usize,
    promotion: f64,
    rng: R,
}

impl<K: Copy + Ord, V> Default for SkipList<K, V> {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_LEVEL)
    }
}

impl<K: Copy + Ord, V> SkipList<K, V> {
    /// Empty list with `max_level` levels, promotion 0.5 and seed 0.
    pub fn new(max_level: usize) -> Self {
        Self::with_seed(max_level, 0)
    }

    pub fn with_seed(max_level: usize, seed: u64) -> Self {
        Self::with_rng(max_level, DEFAULT_PROMOTION, SplitMix64::seed_from_u64(seed))
    }
}

impl<K: Copy + Ord, V, R: RngCore> SkipList<K, V, R> {
    /// Builds an empty list drawing tower heights from `rng`.
    ///
    /// # Panics
    ///
    /// If `max_level` is outside `1..=MAX_LEVEL_CAP` or `promotion` is not in
    /// the open interval (0, 1).
    pub fn with_rng(max_level: usize, promotion: f64, rng: R) -> Self {
        assert!(
            (1..=MAX_LEVEL_CAP).contains(&max_level),
            "max_level must be in 1..={MAX_LEVEL_CAP}, got {max_level}"
        );
        assert!(
            promotion > 0.0 && promotion < 1.0,
            "promotion probability must be in (0, 1), got {promotion}"
        );
        Self {
            head: vec![NIL; max_level].into_boxed_slice(),
            nodes: Vec::new(),
            free: Vec::new(),
            len: 0,
            level: 1,
            promotion,
            rng,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn max_level(&self) -> usize {
        self.head.len()
    }

    /// Highest level currently holding at least one node (1 when empty).
    pub fn current_level(&self) -> usize {
        self.level
    }

    pub fn promotion(&self) -> f64 {
        self.promotion
    }

    #[inline]
    fn node(&self, at: u32) -> &Node<K, V> {
        self.nodes[at as usize].as_ref().expect("link to a freed slot")
    }

    #[inline]
    fn node_mut(&mut self, at: u32) -> &mut Node<K, V> {
        self.nodes[at as usize].as_mut().expect("link to a freed slot")
    }

    /// Successor of `at` on `level`; `at == NIL` stands for the head.
    #[inline]
    fn next_of(&self, at: u32, level: usize) -> u32 {
        if at == NIL {
            self.head[level]
        } else {
            self.node(at).next[level]
        }
    }

    #[inline]
    fn set_next(&mut self, at: u32, level: usize, to: u32) {
        if at == NIL {
            self.head[level] = to;
        } else {
            self.node_mut(at).next[level] = to;
        }
    }

    /// Last node with key < `key` on every active level (`NIL` = head).
    fn predecessors(&self, key: &K) -> [u32; MAX_LEVEL_CAP] {
        let mut update = [NIL; MAX_LEVEL_CAP];
        let mut at = NIL;
        for level in (0..self.level).rev() {
            loop {
                let next = self.next_of(at, level);
                if next != NIL && self.node(next).key < *key {
                    at = next;
                } else {
                    break;
                }
            }
            update[level] = at;
        }
        update
    }

    /// Last node with key < `key` on level 0, searching top-down.
    fn predecessor(&self, key: &K) -> u32 {
        let mut at = NIL;
        for level in (0..self.level).rev() {
            loop {
                let next = self.next_of(at, level);
                if next != NIL && self.node(next).key < *key {
                    at = next;
                } else {
                    break;
                }
            }
        }
        at
    }

    fn locate(&self, key: &K) -> Option<u32> {
        let candidate = self.next_of(self.predecessor(key), 0);
        (candidate != NIL && self.node(candidate).key == *key).then_some(candidate)
    }

    fn random_height(&mut self) -> usize {
        let u: f64 = self.rng.random();
        // 1 - u lies in (0, 1], so the logarithm is finite and non-positive.
        let extra = ((1.0 - u).ln() / self.promotion.ln()).floor();
        let cap = self.head.len();
        if extra >= (cap - 1) as f64 {
            cap
        } else {
            1 + extra as usize
        }
    }

    fn allocate(&mut self, node: Node<K, V>) -> u32 {
        match self.free.pop() {
            Some(slot) => {
                self.nodes[slot as usize] = Some(node);
                slot
            }
            None => {
                let slot = u32::try_from(self.nodes.len()).expect("skip list arena exhausted");
                assert!(slot != NIL, "skip list arena exhausted");
                self.nodes.push(Some(node));
                slot
            }
        }
    }

    /// Returns the value stored under `key`, creating it with `make` if absent.
    /// The flag is `true` when a new entry was created.
    pub fn insert_or_get<F>(&mut self, key: K, make: F) -> (&mut V, bool)
    where
        F: FnOnce() -> V,
    {
        let mut update = self.predecessors(&key);
        let candidate = self.next_of(update[0], 0);
        if candidate != NIL && self.node(candidate).key == key {
            return (&mut self.node_mut(candidate).value, false);
        }

        let height = self.random_height();
        if height > self.level {
            for slot in update.iter_mut().take(height).skip(self.level) {
                *slot = NIL;
            }
            self.level = height;
        }
        let next: Box<[u32]> = (0..height).map(|l| self.next_of(update[l], l)).collect();
        let at = self.allocate(Node {
            key,
            value: make(),
            next,
        });
        for (level, &pred) in update.iter().enumerate().take(height) {
            self.set_next(pred, level, at);
        }
        self.len += 1;
        (&mut self.node_mut(at).value, true)
    }

    /// Inserts or replaces; returns the previous value if there was one.
    pub fn insert(&mut self, key: K, value: V) -> Option<V> {
        let mut value = Some(value);
        let (slot, created) = self.insert_or_get(key, || value.take().expect("fresh value"));
        if created {
            None
        } else {
            Some(std::mem::replace(slot, value.take().expect("fresh value")))
        }
    }

    pub fn get(&self, key: &K) -> Option<&V> {
        self.locate(key).map(|at| &self.node(at).value)
    }

    pub fn get_mut(&mut self, key: &K) -> Option<&mut V> {
        self.locate(key).map(|at| &mut self.node_mut(at).value)
    }

    pub fn contains_key(&self, key: &K) -> bool {
        self.locate(key).is_some()
    }

    /// Greatest entry with a key strictly below `key` and least entry with a
    /// key strictly above it. Either side is `None` at the extremes. The
    /// entry equal to `key`, if present, is reported by [`get`](Self::get).
    pub fn find_neighbors(&self, key: &K) -> (Option<(K, &V)>, Option<(K, &V)>) {
        let pred = self.predecessor(key);
        let mut succ = self.next_of(pred, 0);
        if succ != NIL && self.node(succ).key == *key {
            succ = self.node(succ).next[0];
        }
        let entry = |at: u32| {
            (at != NIL).then(|| {
                let node = self.node(at);
                (node.key, &node.value)
            })
        };
        (entry(pred), entry(succ))
    }

    /// Removes `key`, returning its value if it was present.
    pub fn remove(&mut self, key: &K) -> Option<V> {
        let update = self.predecessors(key);
        let target = self.next_of(update[0], 0);
        if target == NIL || self.node(target).key != *key {
            return None;
        }
        let node = self.nodes[target as usize].take().expect("live target");
        for (level, &next) in node.next.iter().enumerate() {
            if self.next_of(update[level], level) == target {
                self.set_next(update[level], level, next);
            }
        }
        self.free.push(target);
        self.len -= 1;
        while self.level > 1 && self.head[self.level - 1] == NIL {
            self.level -= 1;
        }
        if self.len == 0 {
            self.nodes.clear();
            self.free.clear();
        }
        Some(node.value)
    }

    /// Entries with `lo <= key <= hi` in ascending order.
    pub fn range(&self, lo: K, hi: K) -> Result<Iter<'_, K, V, R>, SkipListError> {
        if lo > hi {
            return Err(SkipListError::EmptyRange);
        }
        Ok(Iter {
            list: self,
            at: self.next_of(self.predecessor(&lo), 0),
            hi: Some(hi),
        })
    }

    /// Calls `visitor` once per entry in `[lo, hi]`, ascending, and returns
    /// how many entries were visited.
    pub fn range_visit<F>(&self, lo: K, hi: K, mut visitor: F) -> Result<usize, SkipListError>
    where
        F: FnMut(K, &V),
    {
        let mut count = 0;
        for (key, value) in self.range(lo, hi)? {
            visitor(key, value);
            count += 1;
        }
        Ok(count)
    }

    /// Ascending iteration over every entry.
    pub fn iter(&self) -> Iter<'_, K, V, R> {
        Iter {
            list: self,
            at: self.head[0],
            hi: None,
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = K> + '_ {
        self.iter().map(|(k, _)| k)
    }

    /// Mutable access to every entry in arena order (not key order).
    pub fn iter_mut_unordered(&mut self) -> impl Iterator<Item = (K, &mut V)> {
        self.nodes
            .iter_mut()
            .flatten()
            .map(|node| (node.key, &mut node.value))
    }

    pub fn first(&self) -> Option<(K, &V)> {
        self.iter().next()
    }

    pub fn last(&self) -> Option<(K, &V)> {
        let mut at = NIL;
        for level in (0..self.level).rev() {
            while self.next_of(at, level) != NIL {
                at = self.next_of(at, level);
            }
        }
        (at != NIL).then(|| {
            let node = self.node(at);
            (node.key, &node.value)
        })
    }

    /// Removes every entry. Tower configuration and the random stream are kept.
    pub fn clear(&mut self) {
        self.head.iter_mut().for_each(|h| *h = NIL);
        self.nodes.clear();
        self.free.clear();
        self.len = 0;
        self.level = 1;
    }

    /// Removes every entry for which `keep` returns false.
    pub fn retain<F>(&mut self, mut keep: F)
    where
        F: FnMut(K, &mut V) -> bool,
    {
        let doomed: Vec<K> = self
            .iter_mut_unordered()
            .filter_map(|(k, v)| (!keep(k, v)).then_some(k))
            .collect();
        for key in doomed {
            self.remove(&key);
        }
    }

    /// Tower heights in ascending key order.
    pub fn heights(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len);
        let mut at = self.head[0];
        while at != NIL {
            let node = self.node(at);
            out.push(node.next.len());
            at = node.next[0];
        }
        out
    }

    /// Bytes of one arena slot (key, value and tower pointer, links excluded).
    pub const fn slot_bytes() -> usize {
        std::mem::size_of::<Option<Node<K, V>>>()
    }

    /// Bytes of the list header itself.
    pub const fn header_bytes() -> usize {
        std::mem::size_of::<Self>()
    }

    /// Bytes of one forward link.
    pub const LINK_BYTES: usize = std::mem::size_of::<u32>();

    /// Number of forward links, head sentinel included.
    pub fn tower_links(&self) -> usize {
        self.head.len() + self.nodes.iter().flatten().map(|n| n.next.len()).sum::<usize>()
    }

    /// Full structural check: ascending base chain, subset property across
    /// levels, and `len` equal to the base-chain length.
    pub fn validate(&self) -> Result<(), InvariantViolation> {
        let fail = |msg: String| Err(InvariantViolation(msg));
        let live = self.nodes.iter().flatten().count();
        if live != self.len {
            return fail(format!("{live} live slots but len is {}", self.len));
        }
        if self.level == 0 || self.level > self.head.len() {
            return fail(format!("current level {} out of range", self.level));
        }
        for level in 0..self.head.len() {
            let mut at = self.head[level];
            let mut prev: Option<K> = None;
            let mut chain = 0usize;
            while at != NIL {
                let Some(node) = self.nodes.get(at as usize).and_then(Option::as_ref) else {
                    return fail(format!("level {level} links to freed slot {at}"));
                };
                if node.next.len() <= level {
                    return fail(format!(
                        "node of height {} linked on level {level}",
                        node.next.len()
                    ));
                }
                if prev.is_some_and(|p| p >= node.key) {
                    return fail(format!("level {level} is not strictly ascending"));
                }
                if level >= self.level {
                    return fail(format!("level {level} above current level is populated"));
                }
                prev = Some(node.key);
                chain += 1;
                at = node.next[level];
            }
            let tall = self
                .nodes
                .iter()
                .flatten()
                .filter(|n| n.next.len() > level)
                .count();
            if chain != tall {
                return fail(format!(
                    "level {level} chain has {chain} nodes, {tall} towers reach it"
                ));
            }
            if level == 0 && chain != self.len {
                return fail(format!("base chain has {chain} nodes, len is {}", self.len));
            }
        }
        Ok(())
    }
}

impl<K: Copy + Ord + fmt::Debug, V: fmt::Debug, R: RngCore> fmt::Debug for SkipList<K, V, R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.iter()).finish()
    }
}

/// Ascending iterator, optionally bounded above.
pub struct Iter<'a, K, V, R> {
    list: &'a SkipList<K, V, R>,
    at: u32,
    hi: Option<K>,
}

impl<'a, K: Copy + Ord, V, R: RngCore> Iterator for Iter<'a, K, V, R> {
    type Item = (K, &'a V);

    fn next(&mut self) -> Option<Self::Item> {
        if self.at == NIL {
            return None;
        }
        let node = self.list.node(self.at);
        if self.hi.is_some_and(|hi| node.key > hi) {
            self.at = NIL;
            return None;
        }
        self.at = node.next[0];
        Some((node.key, &node.value))
    }
}

impl<'a, K: Copy + Ord, V, R: RngCore> IntoIterator for &'a SkipList<K, V, R> {
    type Item = (K, &'a V);
    type IntoIter = Iter<'a, K, V, R>;

    fn into_iter(self) -> Self::IntoIter {
        self.iter()
    }
}
