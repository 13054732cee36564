//! Partition-parallel execution. With the `parallel` feature, work runs on a
//! rayon pool sized to the requested worker count; without it, or with a
//! single worker, it runs in order on the calling thread. Results always come
//! back in input order.

#[cfg(feature = "parallel")]
mod imp {
    use std::collections::HashMap;
    use std::sync::{Arc, Mutex, OnceLock};

    use rayon::prelude::*;
    use rayon::{ThreadPool, ThreadPoolBuilder};

    fn pool(workers: usize) -> Arc<ThreadPool> {
        static POOLS: OnceLock<Mutex<HashMap<usize, Arc<ThreadPool>>>> = OnceLock::new();
        let mut pools = POOLS
            .get_or_init(Default::default)
            .lock()
            .unwrap_or_else(|e| e.into_inner());
        pools
            .entry(workers)
            .or_insert_with(|| {
                Arc::new(
                    ThreadPoolBuilder::new()
                        .num_threads(workers)
                        .thread_name(move |i| format!("skimap-{workers}-{i}"))
                        .build()
                        .expect("failed to build worker pool"),
                )
            })
            .clone()
    }

    pub fn map_collect<T, R, F>(items: Vec<T>, workers: usize, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        if workers <= 1 || items.len() <= 1 {
            return items.into_iter().map(f).collect();
        }
        pool(workers).install(|| items.into_par_iter().map(f).collect())
    }

    pub fn stable_sort_by_key<T, K, F>(items: &mut [T], workers: usize, key: F)
    where
        T: Send,
        K: Ord,
        F: Fn(&T) -> K + Sync + Send,
    {
        if workers <= 1 {
            items.sort_by_key(key);
        } else {
            pool(workers).install(|| items.par_sort_by_key(key));
        }
    }

    pub fn map_slice<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        if workers <= 1 {
            return items.iter().map(f).collect();
        }
        pool(workers).install(|| items.par_iter().map(f).collect())
    }
}

#[cfg(not(feature = "parallel"))]
mod imp {
    pub fn map_collect<T, R, F>(items: Vec<T>, _workers: usize, f: F) -> Vec<R>
    where
        F: Fn(T) -> R,
    {
        items.into_iter().map(f).collect()
    }

    pub fn stable_sort_by_key<T, K, F>(items: &mut [T], _workers: usize, key: F)
    where
        K: Ord,
        F: Fn(&T) -> K,
    {
        items.sort_by_key(key);
    }

    pub fn map_slice<T, R, F>(items: &[T], _workers: usize, f: F) -> Vec<R>
    where
        F: Fn(&T) -> R,
    {
        items.iter().map(f).collect()
    }
}

pub(crate) use imp::{map_collect, map_slice, stable_sort_by_key};

/// Whether this build runs batch operations on multiple threads.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Worker count matching the machine's available parallelism.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}
