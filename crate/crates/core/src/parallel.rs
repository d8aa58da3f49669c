//! Data-parallel map helpers with a sequential fallback.
//!
//! With the `parallel` feature (default), [`map_collect`] fans the closure
//! out over rayon's thread pool; without it the same call runs on the
//! current thread. Results are collected in input order either way, and
//! reductions downstream always run in that fixed order, so outputs are
//! bit-identical across both modes and any thread count.
//!
//! [`map_collect_seq`] is always sequential; the bench suite uses it to
//! compare the two paths inside one binary.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, in parallel when the `parallel` feature is on.
pub fn map_collect<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Maps `f` over indices `0..n`, in parallel when the feature is on.
pub fn map_collect_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sequential twin of [`map_collect`], available regardless of features.
pub fn map_collect_seq<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 * 0.1).collect();
        let a = map_collect(&xs, |x| x.sin() * x.cos());
        let b = map_collect_seq(&xs, |x| x.sin() * x.cos());
        assert_eq!(a, b);
    }

    #[test]
    fn indexed_preserves_order() {
        let v = map_collect_indexed(100, |i| i * i);
        assert!(v.iter().enumerate().all(|(i, &x)| x == i * i));
    }
}
