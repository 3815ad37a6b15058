//! Worker-pool configuration. `EDGENET_THREADS` caps the number of rayon
//! workers; `0` selects the single-threaded reference path.

use std::sync::OnceLock;

use rayon::prelude::*;

pub const THREADS_ENV: &str = "EDGENET_THREADS";

fn configured_threads() -> Option<usize> {
    static THREADS: OnceLock<Option<usize>> = OnceLock::new();
    *THREADS.get_or_init(|| {
        let n = std::env::var(THREADS_ENV).ok()?.trim().parse::<usize>().ok()?;
        if n > 0 {
            // Fails only if a global pool already exists; keep that one.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        Some(n)
    })
}

pub fn is_sequential() -> bool {
    configured_threads() == Some(0)
}

/// Order-preserving map over `items`, parallel unless running in
/// single-threaded mode. Output order never depends on scheduling.
pub fn map_ordered<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    if is_sequential() || items.len() < 2 {
        items.iter().map(f).collect()
    } else {
        items.par_iter().map(f).collect()
    }
}
