//! Execution-mode dispatch between the rayon data-parallel path and the
//! sequential fallback.
//!
//! Without the `parallel` feature both modes run sequentially. Results are
//! always merged in input index order, so the two modes are observationally
//! identical and the choice only affects throughput.

/// How embarrassingly parallel loops execute.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    /// Rayon work-stealing when the `parallel` feature is enabled; falls
    /// back to sequential otherwise.
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

#[cfg(feature = "parallel")]
pub(crate) fn map_collect<T, U, F>(mode: ExecMode, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    match mode {
        ExecMode::Sequential => items.iter().map(f).collect(),
        ExecMode::Parallel => items.par_iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_collect<T, U, F>(_mode: ExecMode, items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

pub(crate) fn try_map_collect<T, U, F>(
    mode: ExecMode,
    items: &[T],
    f: F,
) -> crate::error::Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> crate::error::Result<U> + Sync + Send,
{
    map_collect(mode, items, f).into_iter().collect()
}
