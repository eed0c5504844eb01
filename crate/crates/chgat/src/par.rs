//! Data-parallel helpers. With the `parallel` feature (default) the hot
//! loops fan out over rayon; without it they run sequentially. Both paths
//! collect results in input order, so floating-point reductions downstream
//! see the same operand order and outputs stay bit-identical.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map over a slice, in parallel when the feature is enabled.
pub fn map_slice<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Always-sequential map, kept public so benchmarks can compare both paths.
pub fn map_slice_seq<T, U>(items: &[T], f: impl Fn(&T) -> U) -> Vec<U> {
    items.iter().map(f).collect()
}

/// Parallel map, available only with the feature. Benchmarks call this
/// directly against [`map_slice_seq`].
#[cfg(feature = "parallel")]
pub fn map_slice_par<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.par_iter().map(f).collect()
}
