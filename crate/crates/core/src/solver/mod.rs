//! Linearized ratio systems, non-negative least squares, block pruning and
//! conversion of continuous solutions to integer execution counts.

mod nnls;
mod system;

pub use nnls::{kkt_violation, nnls, nnls_dense, NnlsSolution};
pub use system::{assemble_incremental_system, assemble_initial_system, LinearSystem, BUDGET_LABEL};

use crate::blockgen::BlockLibrary;
use crate::error::{Error, Result};

/// Default pruning threshold: `1e-6 * max_j x_j`.
pub fn default_prune_eps(solution: &NnlsSolution) -> f64 {
    1e-6 * solution.x.iter().copied().fold(0.0, f64::max)
}

/// Keeps exactly the blocks with `x_j > eps`.
pub fn select_blocks(solution: &NnlsSolution, library: &BlockLibrary, eps: f64) -> Result<BlockLibrary> {
    if solution.x.len() != library.len() {
        return Err(Error::InvalidParameter(format!(
            "solution has {} components for a library of {} blocks",
            solution.x.len(),
            library.len()
        )));
    }
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::InvalidParameter(format!("eps must be >= 0, got {eps}")));
    }
    let keep: Vec<bool> = solution.x.iter().map(|&v| v > eps).collect();
    if !keep.iter().any(|k| *k) {
        return Err(Error::EmptySelection { eps });
    }
    Ok(library.subset(&keep))
}

/// `N_j = round(x_j * n0)`, halves rounding up.
pub fn counts_from_solution(solution: &NnlsSolution, n0: u64) -> Vec<u64> {
    solution.x.iter().map(|&v| (v.max(0.0) * n0 as f64).round() as u64).collect()
}
