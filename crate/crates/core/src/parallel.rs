//! Data-parallel helpers for the per-sample inner loops.
//!
//! With the `parallel` feature (default) the map fans out over rayon;
//! without it, or when [`set_sequential`] is flipped at runtime, the same
//! closure runs on a plain iterator. Results come back in input order, so
//! reductions over them are bit-identical in both modes.

use std::sync::atomic::{AtomicBool, Ordering};

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Force the sequential path even when the `parallel` feature is compiled
/// in. Used by the benches to compare both lanes in one binary.
pub fn set_sequential(force: bool) {
    FORCE_SEQUENTIAL.store(force, Ordering::SeqCst);
}

pub fn is_sequential() -> bool {
    cfg!(not(feature = "parallel")) || FORCE_SEQUENTIAL.load(Ordering::SeqCst)
}

/// Apply `f` to every index in `0..n`, collecting results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if !is_sequential() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Apply `f` to every item of a slice, collecting results in input order.
pub fn map_slice<I, T, F>(items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if !is_sequential() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
    }
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_indexed_preserves_order() {
        let out = map_indexed(100, |i| i * i);
        assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn sequential_override_matches_parallel() {
        let par = map_indexed(64, |i| (i as f32).sin());
        set_sequential(true);
        let seq = map_indexed(64, |i| (i as f32).sin());
        set_sequential(false);
        assert_eq!(par, seq);
    }
}
