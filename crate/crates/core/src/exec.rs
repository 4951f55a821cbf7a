//! Order-preserving data-parallel map helpers.
//!
//! The `parallel` feature (default on) routes [`indexed_map`] through rayon;
//! without it the same call is a plain sequential loop. [`indexed_map_serial`]
//! is compiled unconditionally so benchmarks and determinism checks can pit
//! the two against each other within one build.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, collecting results in index order.
pub fn indexed_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
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

/// Sequential twin of [`indexed_map`].
pub fn indexed_map_serial<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_serial_agree_in_order() {
        let f = |i: usize| (i * i) as u64;
        assert_eq!(indexed_map(1000, f), indexed_map_serial(1000, f));
    }
}
