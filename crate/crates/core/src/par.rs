//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) work is dispatched to rayon; without
//! it, or when [`set_execution`] selects [`Execution::Sequential`], every
//! helper runs on the calling thread. Results are identical either way: each
//! row or task is computed by the same code in isolation and collected in
//! index order.

use std::sync::atomic::{AtomicBool, Ordering};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

static SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Minimum multiply-adds before a matrix kernel is split across threads.
pub const ROW_PAR_THRESHOLD: usize = 1 << 16;

pub fn set_execution(mode: Execution) {
    SEQUENTIAL.store(mode == Execution::Sequential, Ordering::Relaxed);
}

pub fn execution() -> Execution {
    if cfg!(feature = "parallel") && !SEQUENTIAL.load(Ordering::Relaxed) {
        Execution::Parallel
    } else {
        Execution::Sequential
    }
}

/// Parallel mode with a pool of one thread would only add hand-off cost.
#[cfg(feature = "parallel")]
fn use_pool() -> bool {
    execution() == Execution::Parallel && rayon::current_num_threads() > 1
}

/// Apply `f(row_index, row)` to every `row_len`-wide row of `out`.
pub fn rows_mut<F>(out: &mut [f64], row_len: usize, work: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Send + Sync,
{
    if row_len == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if work >= ROW_PAR_THRESHOLD && use_pool() {
        use rayon::prelude::*;
        out.par_chunks_mut(row_len).enumerate().for_each(|(i, row)| f(i, row));
        return;
    }
    let _ = work;
    out.chunks_mut(row_len).enumerate().for_each(|(i, row)| f(i, row));
}

/// Run `n` independent tasks and collect their results in index order.
pub fn map_tasks<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if use_pool() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_tasks_preserves_order() {
        let v = map_tasks(100, |i| i * i);
        assert_eq!(v, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn rows_mut_visits_each_row() {
        let mut out = vec![0.0; 12];
        rows_mut(&mut out, 3, usize::MAX, |i, row| row.fill(i as f64));
        assert_eq!(out, vec![0., 0., 0., 1., 1., 1., 2., 2., 2., 3., 3., 3.]);
    }
}
