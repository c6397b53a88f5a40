//! Data-parallel execution shim.
//!
//! Every hot loop in the crate funnels through the helpers here. With the
//! `parallel` feature (default) they dispatch to rayon; without it, or after
//! [`force_sequential`]`(true)`, they run serially. The runtime switch exists
//! so benchmarks can compare both paths inside one binary.

use std::sync::atomic::{AtomicBool, Ordering};

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Force the sequential fallback at runtime, regardless of the feature flag.
pub fn force_sequential(on: bool) {
    FORCE_SEQUENTIAL.store(on, Ordering::Relaxed);
}

/// True when work will actually be distributed across threads.
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.load(Ordering::Relaxed)
}

/// Map `f` over `0..n` and collect the results in index order.
pub fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Map `f` over a slice and collect.
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}

/// Sum `f(i)` over `0..n` with a monoid fold.
pub fn sum_indexed<U, F>(n: usize, zero: impl Fn() -> U + Sync + Send, f: F) -> U
where
    U: Send + std::ops::Add<Output = U>,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        use rayon::prelude::*;
        return (0..n)
            .into_par_iter()
            .fold(&zero, |acc, i| acc + f(i))
            .reduce(&zero, |a, b| a + b);
    }
    (0..n).fold(zero(), |acc, i| acc + f(i))
}
