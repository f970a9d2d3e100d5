use std::fmt::Write;

use nalgebra::{DMatrix, DVector};

use crate::blockgen::BlockLibrary;
use crate::error::{Error, Result};
use crate::model::{EventId, MeasurementResult, MetricDefinition, TargetMetrics};

pub const BUDGET_LABEL: &str = "budget";

/// Coefficients smaller than this fraction of their terms are rounding residue.
const CANCELLATION: f64 = 8.0 * f64::EPSILON;

/// Linearized ratio constraints plus one instruction-budget row.
///
/// Unknowns are `x_j = N_j / n0`, so coefficients are per-`n0` profile counts.
/// Metric row `i` reads `sum_j (f_A(P_j) - target_i * f_B(P_j)) x_j = rhs_i`; the last
/// row reads `sum_j instructions(P_j) x_j = budget`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub row_weights: Vec<f64>,
}

impl LinearSystem {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (r, c) = self.matrix.shape();
        if self.rhs.len() != r || self.row_labels.len() != r || self.row_weights.len() != r || self.col_labels.len() != c {
            return Err(Error::InvalidSystem(format!("inconsistent dimensions for a {r}x{c} system")));
        }
        if self.matrix.iter().chain(self.rhs.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSystem("non-finite entry".into()));
        }
        if self.row_weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidSystem("row weights must be positive and finite".into()));
        }
        Ok(())
    }

    /// `(W A, W b)` with `W = diag(row_weights)`.
    pub fn weighted(&self) -> (DMatrix<f64>, DVector<f64>) {
        let w = DVector::from_column_slice(&self.row_weights);
        let mut a = self.matrix.clone();
        for (i, mut row) in a.row_iter_mut().enumerate() {
            row *= w[i];
        }
        (a, self.rhs.component_mul(&w))
    }

    /// `||W (A x - b)||_2`.
    pub fn weighted_residual(&self, x: &[f64]) -> f64 {
        let (a, b) = self.weighted();
        (a * DVector::from_column_slice(x) - b).norm()
    }

    /// Rows whose right-hand side cannot be approached from `x = 0` with `x >= 0`:
    /// a positive rhs with no positive coefficient, or a negative rhs with no negative one.
    pub fn unreachable_rows(&self) -> Vec<String> {
        (0..self.rows())
            .filter(|&i| {
                let row = self.matrix.row(i);
                let b = self.rhs[i];
                (b > 0.0 && row.iter().all(|v| *v <= 0.0)) || (b < 0.0 && row.iter().all(|v| *v >= 0.0))
            })
            .map(|i| self.row_labels[i].clone())
            .collect()
    }

    /// Debug dump: one line per row, `label<TAB>coefficients...<TAB>rhs<TAB>weight`,
    /// preceded by a `#` header listing the column labels.
    pub fn to_matrix_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# row\t{}\trhs\tweight", self.col_labels.join("\t")).unwrap();
        for i in 0..self.rows() {
            s.push_str(&self.row_labels[i]);
            for v in self.matrix.row(i).iter() {
                write!(s, "\t{v:e}").unwrap();
            }
            writeln!(s, "\t{:e}\t{:e}", self.rhs[i], self.row_weights[i]).unwrap();
        }
        s
    }
}

fn profile_count(library: &BlockLibrary, j: usize, event: EventId) -> Result<f64> {
    let b = &library.blocks()[j];
    let p = b.profile.as_ref().ok_or_else(|| Error::Uncalibrated(b.id.clone()))?;
    p.counts.get(event).ok_or_else(|| Error::IncompleteProfile { block: b.id.clone(), event })
}

/// Coefficient rows (metric rows then the budget row) shared by both systems.
fn coefficient_rows(
    library: &BlockLibrary,
    targets: &[(&MetricDefinition, f64)],
) -> Result<(DMatrix<f64>, Vec<String>, Vec<f64>)> {
    let (q, m) = (targets.len(), library.len());
    let mut a = DMatrix::zeros(q + 1, m);
    let mut labels = Vec::with_capacity(q + 1);
    let mut weights = Vec::with_capacity(q + 1);
    for (i, (def, target)) in targets.iter().enumerate() {
        for j in 0..m {
            let fa = profile_count(library, j, def.numerator)?;
            let fb = profile_count(library, j, def.denominator)?;
            // a block already at the target ratio leaves only rounding residue, which
            // the row normalization below would otherwise blow up to order one
            let v = fa - target * fb;
            a[(i, j)] = if v.abs() <= CANCELLATION * (fa.abs() + (target * fb).abs()) { 0.0 } else { v };
        }
        let scale = a.row(i).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        labels.push(def.id.clone());
        weights.push(if scale > 0.0 { 1.0 / scale } else { 1.0 });
    }
    for j in 0..m {
        a[(q, j)] = profile_count(library, j, EventId::Instructions)?;
    }
    labels.push(BUDGET_LABEL.to_owned());
    weights.push(0.0);
    Ok((a, labels, weights))
}

/// Budget-row weight: normalizes by the budget and multiplies by the metric count,
/// so the homogeneous metric rows cannot be satisfied by shrinking toward zero.
fn budget_weight(q: usize, budget: f64, row: &[f64]) -> f64 {
    let base = if budget > 0.0 { budget } else { row.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0) };
    q.max(1) as f64 / base
}

/// The initial system: homogeneous ratio rows and a budget of `ins1` instructions.
pub fn assemble_initial_system(
    library: &BlockLibrary,
    targets: &TargetMetrics,
    defs: &[MetricDefinition],
    ins1: f64,
) -> Result<LinearSystem> {
    if !(ins1.is_finite() && ins1 > 0.0) {
        return Err(Error::InvalidParameter(format!("ins1 must be positive, got {ins1}")));
    }
    let resolved = targets.resolve(defs)?;
    let q = resolved.len();
    let (matrix, row_labels, mut row_weights) = coefficient_rows(library, &resolved)?;
    let mut rhs = DVector::zeros(q + 1);
    rhs[q] = ins1;
    let budget_row: Vec<f64> = matrix.row(q).iter().copied().collect();
    row_weights[q] = budget_weight(q, ins1, &budget_row);
    let col_labels = library.ids().map(str::to_owned).collect();
    Ok(LinearSystem { matrix, rhs, row_labels, col_labels, row_weights })
}

/// The incremental system for increments `x_j = dN_j / n0` on top of a measured program:
/// `rhs_i = target_i * f_B(measured) - f_A(measured)`, budget `delta_ins`.
///
/// Metric rows are weighted by `1 / (target_i * f_B)` with `f_B` extrapolated to the
/// grown program, so each weighted residual approximates that metric's relative
/// error after the round. Rows whose denominator was measured as zero keep the
/// max-abs normalization.
pub fn assemble_incremental_system(
    library: &BlockLibrary,
    targets: &TargetMetrics,
    defs: &[MetricDefinition],
    measured: &MeasurementResult,
    delta_ins: f64,
) -> Result<LinearSystem> {
    if !(delta_ins.is_finite() && delta_ins >= 0.0) {
        return Err(Error::InvalidParameter(format!("delta_ins must be >= 0, got {delta_ins}")));
    }
    let resolved = targets.resolve(defs)?;
    let q = resolved.len();
    let (matrix, row_labels, mut row_weights) = coefficient_rows(library, &resolved)?;
    let ins = measured.get(EventId::Instructions).unwrap_or(0.0);
    let growth = if ins > 0.0 { 1.0 + delta_ins / ins } else { 1.0 };
    let mut rhs = DVector::zeros(q + 1);
    for (i, (def, target)) in resolved.iter().enumerate() {
        let get = |event| measured.get(event).ok_or_else(|| Error::MissingEvent { metric: def.id.clone(), event });
        let denominator = get(def.denominator)?;
        rhs[i] = target * denominator - get(def.numerator)?;
        // residual of this row relative to the expected grown total = relative metric error
        let expected = target * denominator * growth;
        if expected > 0.0 {
            row_weights[i] = 1.0 / expected;
        }
    }
    rhs[q] = delta_ins;
    let budget_row: Vec<f64> = matrix.row(q).iter().copied().collect();
    row_weights[q] = budget_weight(q, delta_ins, &budget_row);
    let col_labels = library.ids().map(str::to_owned).collect();
    Ok(LinearSystem { matrix, rhs, row_labels, col_labels, row_weights })
}
