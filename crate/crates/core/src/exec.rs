//! Data-parallel execution helpers.
//!
//! The coordination loop has three embarrassingly parallel inner stages:
//! independent DSO subproblem solves, zonal solves under end-of-sweep
//! anchor propagation, and batch work in the oracle (commitment patterns,
//! Monte Carlo samples). All of them funnel through [`map_maybe_parallel`]
//! so the `parallel` feature switches the whole crate between rayon and a
//! plain sequential loop. Results are collected in input order, so output
//! is identical in both modes.

/// Map `f` over `items`, in parallel when `parallel` is true and the
/// `parallel` feature is enabled. Collection order always matches input
/// order.
pub fn map_maybe_parallel<T, U, F>(items: Vec<T>, parallel: bool, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if parallel {
            use rayon::prelude::*;
            return items.into_par_iter().map(f).collect();
        }
    }
    let _ = parallel;
    items.into_iter().map(f).collect()
}

/// True when this build can actually run the parallel path.
pub fn parallel_available() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_in_both_modes() {
        let xs: Vec<u64> = (0..1000).collect();
        let seq = map_maybe_parallel(xs.clone(), false, |x| x * 3 + 1);
        let par = map_maybe_parallel(xs, true, |x| x * 3 + 1);
        assert_eq!(seq, par);
    }
}
