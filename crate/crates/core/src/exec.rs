//! Sequential or data-parallel execution of independent batch items.
//!
//! Sweeps and batch runs (one simulation per grid point, one NE solve per
//! game) are embarrassingly parallel; individual runs stay sequential in
//! time either way, so results are identical across modes and thread
//! counts. With the `parallel` feature (default) the parallel mode maps
//! over a rayon pool; without it every mode degrades to the sequential
//! path and rayon is not compiled in.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
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

/// Map `f` over `items`, in order. The output order is the input order in
/// both modes; aggregation is deterministic.
pub fn map_items<T, U, F>(mode: ExecMode, items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Send + Sync,
{
    match mode {
        ExecMode::Sequential => items.into_iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => items.into_par_iter().map(f).collect(),
        #[cfg(not(feature = "parallel"))]
        ExecMode::Parallel => items.into_iter().map(f).collect(),
    }
}

/// Cap the global worker pool (used by the CLI `--jobs` flag). Only the
/// first call can take effect; later calls are ignored by rayon, which is
/// fine for a single-shot CLI process.
#[cfg(feature = "parallel")]
pub fn configure_threads(threads: usize) {
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
}

#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_threads: usize) {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_in_both_modes() {
        let items: Vec<u64> = (0..100).collect();
        let seq = map_items(ExecMode::Sequential, items.clone(), |v| v * v);
        let par = map_items(ExecMode::Parallel, items, |v| v * v);
        assert_eq!(seq, par);
    }
}
