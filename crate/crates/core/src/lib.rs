//! Proxy benchmark synthesis: calibrated basic blocks are combined linearly so that
//! the resulting program reproduces a target vector of micro-architectural ratios.
//!
//! The pipeline is [`blockgen`] (block library and C rendering), [`solver`] (the
//! linear system and NNLS), [`measure`] (simulated machine and counts import),
//! [`align`] (the iterative loop) and [`evaluate`] (accuracy reports).

pub mod align;
pub mod blockgen;
pub mod cli;

mod error;
pub mod evaluate;
pub mod io;
pub mod measure;
pub mod model;
pub mod solver;

pub use align::{align, AlignConfig, AlignmentTrace, RoundRecord};
pub use error::{Error, Result};
pub use evaluate::{accuracy, build_report, category_accuracy, mean_abs_rel_error, pearson, AccuracyReport};
pub use measure::{Measurer, NoiseModel, SimulatedMeasurer};
