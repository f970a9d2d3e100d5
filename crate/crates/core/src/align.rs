//! The closed alignment loop: an initial solve sizes the proxy, then each round
//! measures it and grows execution counts toward the targets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::blockgen::BlockLibrary;
use crate::error::{Error, Result};
use crate::evaluate::accuracy;
use crate::measure::Measurer;
use crate::model::{compute_metric, EventId, MeasurementResult, MetricDefinition, ProxyProgram, TargetMetrics};
use crate::solver::{
    assemble_incremental_system, assemble_initial_system, counts_from_solution, default_prune_eps, nnls,
    select_blocks, LinearSystem, NnlsSolution,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignConfig {
    pub rounds: usize,
    /// Instruction growth per round, as a fraction of the measured total.
    pub growth: f64,
    /// Instruction budget of the round-1 program.
    pub ins1: f64,
    /// Relative KKT tolerance for the solver.
    pub tol: f64,
    pub max_iter: usize,
    /// Pruning threshold; `None` means `1e-6` of the largest pre-solve component.
    pub eps: Option<f64>,
    /// Stop once every metric accuracy reaches this value.
    pub early_stop: Option<f64>,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self { rounds: 10, growth: 0.2, ins1: 5e8, tol: 1e-14, max_iter: 1000, eps: None, early_stop: None }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.rounds == 0 {
            return bad("rounds must be >= 1".into());
        }
        if !(self.growth.is_finite() && self.growth > 0.0) {
            return bad(format!("growth must be > 0, got {}", self.growth));
        }
        if !(self.ins1.is_finite() && self.ins1 > 0.0) {
            return bad(format!("ins1 must be > 0, got {}", self.ins1));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return bad(format!("tol must be > 0, got {}", self.tol));
        }
        if let Some(eps) = self.eps {
            if !(eps.is_finite() && eps >= 0.0) {
                return bad(format!("eps must be >= 0, got {eps}"));
            }
        }
        if let Some(t) = self.early_stop {
            if !(t.is_finite() && t <= 1.0) {
                return bad(format!("early-stop threshold must be <= 1, got {t}"));
            }
        }
        Ok(())
    }

    /// Parses a config document; absent fields take their defaults.
    pub fn from_json(text: &str) -> Result<Self> {
        let c: AlignConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        crate::io::to_json_string(self)
    }
}

/// One executed round: the program after the round's update and what was measured on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundRecord {
    pub round: usize,
    /// Instruction budget handed to the solver: `ins1`, then the per-round increment.
    pub budget: f64,
    pub program: ProxyProgram,
    pub measurement: MeasurementResult,
    pub metrics: BTreeMap<String, f64>,
    pub accuracy: BTreeMap<String, f64>,
    /// Weighted residual norm of the round's system at the solution.
    pub residual_norm: f64,
    pub certified: bool,
    /// Rows whose right-hand side no nonnegative increment can approach.
    pub unreachable_rows: Vec<String>,
}

impl RoundRecord {
    pub fn instructions(&self) -> Option<f64> {
        self.measurement.get(EventId::Instructions)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentTrace {
    /// Blocks kept by the full-library pre-solve, in library order.
    pub selected: Vec<String>,
    pub prune_eps: f64,
    pub rounds: Vec<RoundRecord>,
}

impl AlignmentTrace {
    pub fn last(&self) -> Option<&RoundRecord> {
        self.rounds.last()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        crate::io::to_json_string(self)
    }
}

/// Runs the alignment loop and returns the final program with the full trace.
pub fn align(
    library: &BlockLibrary,
    targets: &TargetMetrics,
    defs: &[MetricDefinition],
    config: &AlignConfig,
    measurer: &dyn Measurer,
) -> Result<(ProxyProgram, AlignmentTrace)> {
    config.validate()?;
    targets.validate(defs)?;
    if targets.is_empty() {
        return Err(Error::InvalidParameter("no target metrics".into()));
    }
    let resolved = targets.resolve(defs)?;

    // round 1: full-library pre-solve picks the blocks, then a solve on the subset
    let (sub, eps, program, sol, system) = initial_round(library, targets, defs, config).map_err(|e| e.in_round(1))?;
    let mut trace = AlignmentTrace { selected: sub.ids().map(str::to_owned).collect(), prune_eps: eps, rounds: Vec::new() };
    let first = record(1, config.ins1, program, &sol, &system, library, &resolved, measurer).map_err(|e| e.in_round(1))?;
    trace.rounds.push(first);

    for round in 2..=config.rounds {
        let prev = trace.rounds.last().expect("round 1 recorded");
        if let Some(t) = config.early_stop {
            if prev.accuracy.values().all(|a| *a >= t) {
                break;
            }
        }
        let next = grow_round(round, prev, &sub, targets, defs, config, library, &resolved, measurer)
            .map_err(|e| e.in_round(round))?;
        trace.rounds.push(next);
    }
    let program = trace.rounds.last().expect("nonempty").program.clone();
    Ok((program, trace))
}

type Initial = (BlockLibrary, f64, ProxyProgram, NnlsSolution, LinearSystem);

fn initial_round(library: &BlockLibrary, targets: &TargetMetrics, defs: &[MetricDefinition], config: &AlignConfig) -> Result<Initial> {
    let full = assemble_initial_system(library, targets, defs, config.ins1)?;
    let pre = nnls(&full, config.tol, config.max_iter)?;
    let eps = config.eps.unwrap_or_else(|| default_prune_eps(&pre));
    let sub = select_blocks(&pre, library, eps)?;
    let system = assemble_initial_system(&sub, targets, defs, config.ins1)?;
    let sol = nnls(&system, config.tol, config.max_iter)?;
    let counts = counts_from_solution(&sol, sub.n0());
    let program = ProxyProgram::from_entries(sub.ids().zip(counts).filter(|(_, n)| *n > 0));
    if program.is_empty() {
        return Err(Error::Invariant("initial solve assigned no executions to any block".into()));
    }
    Ok((sub, eps, program, sol, system))
}

#[allow(clippy::too_many_arguments)]
fn grow_round(
    round: usize,
    prev: &RoundRecord,
    sub: &BlockLibrary,
    targets: &TargetMetrics,
    defs: &[MetricDefinition],
    config: &AlignConfig,
    library: &BlockLibrary,
    resolved: &[(&MetricDefinition, f64)],
    measurer: &dyn Measurer,
) -> Result<RoundRecord> {
    let measured_ins = prev.instructions().ok_or_else(|| Error::Invariant("measurement lacks instructions".into()))?;
    let delta = config.growth * measured_ins;
    let system = assemble_incremental_system(sub, targets, defs, &prev.measurement, delta)?;
    let sol = nnls(&system, config.tol, config.max_iter)?;
    let mut program = prev.program.clone();
    for (id, dn) in sub.ids().zip(counts_from_solution(&sol, sub.n0())) {
        if dn > 0 {
            program.push(id, dn);
        }
    }
    record(round, delta, program, &sol, &system, library, resolved, measurer)
}

#[allow(clippy::too_many_arguments)]
fn record(
    round: usize,
    budget: f64,
    program: ProxyProgram,
    sol: &NnlsSolution,
    system: &LinearSystem,
    library: &BlockLibrary,
    resolved: &[(&MetricDefinition, f64)],
    measurer: &dyn Measurer,
) -> Result<RoundRecord> {
    let measurement = measurer.measure(&program, library)?;
    let mut metrics = BTreeMap::new();
    let mut acc = BTreeMap::new();
    for (def, target) in resolved {
        let value = compute_metric(&measurement, def)?;
        let a = accuracy(*target, value).map_err(|_| Error::UndefinedAccuracy { metric: def.id.clone() })?;
        acc.insert(def.id.clone(), a);
        metrics.insert(def.id.clone(), value);
    }
    Ok(RoundRecord {
        round,
        budget,
        program,
        measurement,
        metrics,
        accuracy: acc,
        residual_norm: sol.residual_norm,
        certified: sol.certified,
        unreachable_rows: system.unreachable_rows(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockgen::default_library;
    use crate::measure::{NoiseModel, SimulatedMeasurer};
    use crate::model::{builtin_metrics, predict_events, compute_all_metrics};

    fn hidden_targets(lib: &BlockLibrary) -> (TargetMetrics, f64) {
        let p = ProxyProgram::from_entries([
            ("mem_s64_b67108864", 2_000_000),
            ("fn_s256_c512", 1_000_000),
            ("br_t384", 3_000_000),
            ("ar_int_add8_mul8", 2_500_000),
            ("ar_fp_add8_sub4_div4", 1_500_000),
        ]);
        let r = predict_events(&p, lib).unwrap();
        let m = compute_all_metrics(&r, &builtin_metrics()).unwrap();
        (TargetMetrics::new(m), r.get(EventId::Instructions).unwrap())
    }

    #[test]
    fn noiseless_round_one_hits_targets() {
        let lib = default_library();
        let (targets, ins) = hidden_targets(&lib);
        let config = AlignConfig { rounds: 3, ins1: ins, ..AlignConfig::default() };
        let m = SimulatedMeasurer::new(NoiseModel::none());
        let (program, trace) = align(&lib, &targets, &builtin_metrics(), &config, &m).unwrap();
        assert_eq!(trace.rounds.len(), 3);
        for r in &trace.rounds {
            for (id, a) in &r.accuracy {
                assert!(*a >= 0.999, "round {} {id}: {a}", r.round);
            }
        }
        assert_eq!(&program, &trace.rounds[2].program);
        let ins: Vec<f64> = trace.rounds.iter().map(|r| r.instructions().unwrap()).collect();
        assert!((ins[0] / config.ins1 - 1.0).abs() < 0.01);
        for w in ins.windows(2) {
            assert!((w[1] / w[0] - 1.2).abs() < 1e-3, "{w:?}");
        }
    }

    #[test]
    fn one_round_and_early_stop() {
        let lib = default_library();
        let (targets, ins) = hidden_targets(&lib);
        let m = SimulatedMeasurer::new(NoiseModel::none());
        let one = AlignConfig { rounds: 1, ins1: ins, ..AlignConfig::default() };
        assert_eq!(align(&lib, &targets, &builtin_metrics(), &one, &m).unwrap().1.rounds.len(), 1);
        let early = AlignConfig { ins1: ins, early_stop: Some(0.99), ..AlignConfig::default() };
        assert_eq!(align(&lib, &targets, &builtin_metrics(), &early, &m).unwrap().1.rounds.len(), 1);
    }

    #[test]
    fn bad_config_rejected() {
        for c in [
            AlignConfig { rounds: 0, ..AlignConfig::default() },
            AlignConfig { growth: 0.0, ..AlignConfig::default() },
            AlignConfig { ins1: -1.0, ..AlignConfig::default() },
            AlignConfig { eps: Some(f64::NAN), ..AlignConfig::default() },
        ] {
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn errors_carry_round() {
        let lib = default_library();
        let (targets, ins) = hidden_targets(&lib);
        let config = AlignConfig { ins1: ins, eps: Some(f64::MAX), ..AlignConfig::default() };
        let m = SimulatedMeasurer::new(NoiseModel::none());
        let e = align(&lib, &targets, &builtin_metrics(), &config, &m).unwrap_err();
        assert!(matches!(e, Error::Round { round: 1, .. }), "{e}");
    }
}
