//! Data-parallel execution with a sequential fallback.
//!
//! Every parallel loop in this crate maps independent work items to a vector
//! in index order and reduces sequentially, so results are bit-identical
//! across modes and thread counts. Building with `--no-default-features`
//! removes the rayon dependency entirely and leaves only
//! [`ExecMode::Sequential`].

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for ExecMode {
    #[cfg(feature = "parallel")]
    fn default() -> Self {
        ExecMode::Parallel
    }

    #[cfg(not(feature = "parallel"))]
    fn default() -> Self {
        ExecMode::Sequential
    }
}

/// `(0..len).map(f)` collected in index order.
pub(crate) fn map_indexed<T, F>(len: usize, mode: ExecMode, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        ExecMode::Sequential => (0..len).map(f).collect(),
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => (0..len).into_par_iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let seq = map_indexed(100, ExecMode::Sequential, |i| i * i);
        let def = map_indexed(100, ExecMode::default(), |i| i * i);
        assert_eq!(seq, def);
    }
}
