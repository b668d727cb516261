use ou_timing_core::mc_oracle::PathExecutor;
use rayon::prelude::*;

/// Runs paths on the rayon pool. Results come back in path order, so
/// estimates match [`ou_timing_core::mc_oracle::Serial`] bit for bit.
#[derive(Debug, Clone, Copy, Default)]
pub struct Parallel;

impl PathExecutor for Parallel {
    fn run<T, F>(&self, n: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        (0..n).into_par_iter().map(f).collect()
    }
}
