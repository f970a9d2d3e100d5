use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::events::{EventCounts, EventId, MeasurementResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    ProcessorPerformance,
    BranchPrediction,
    CacheBehavior,
    TlbBehavior,
    InstructionMix,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::ProcessorPerformance,
        Category::BranchPrediction,
        Category::CacheBehavior,
        Category::TlbBehavior,
        Category::InstructionMix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::ProcessorPerformance => "processor_performance",
            Category::BranchPrediction => "branch_prediction",
            Category::CacheBehavior => "cache_behavior",
            Category::TlbBehavior => "tlb_behavior",
            Category::InstructionMix => "instruction_mix",
        }
    }

    /// Whether metrics in this category are fractions bounded by one.
    pub fn is_fraction(self) -> bool {
        self != Category::ProcessorPerformance
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A ratio metric: `numerator / denominator` over whole-program event counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricDefinition {
    pub id: String,
    pub numerator: EventId,
    pub denominator: EventId,
    pub category: Category,
}

impl MetricDefinition {
    pub fn new(id: impl Into<String>, numerator: EventId, denominator: EventId, category: Category) -> Result<Self> {
        if numerator == denominator {
            return Err(Error::InvalidParameter("metric numerator and denominator must differ".into()));
        }
        Ok(Self { id: id.into(), numerator, denominator, category })
    }
}

/// The fourteen built-in metrics. Cache miss rates are local (misses over accesses at
/// the same level); instruction-mix ratios are over retired instructions.
pub fn builtin_metrics() -> Vec<MetricDefinition> {
    use Category::*;
    use EventId::*;
    let table: [(&str, EventId, EventId, Category); 14] = [
        ("cpi", Cycles, Instructions, ProcessorPerformance),
        ("branch_miss_rate", BranchMisses, BranchInsts, BranchPrediction),
        ("l1d_miss_rate", L1dMisses, L1dAccesses, CacheBehavior),
        ("l1i_miss_rate", L1iMisses, L1iAccesses, CacheBehavior),
        ("l2_miss_rate", L2Misses, L2Accesses, CacheBehavior),
        ("l3_miss_rate", L3Misses, L3Accesses, CacheBehavior),
        ("dtlb_miss_rate", DtlbMisses, DtlbAccesses, TlbBehavior),
        ("itlb_miss_rate", ItlbMisses, ItlbAccesses, TlbBehavior),
        ("load_ratio", LoadInsts, Instructions, InstructionMix),
        ("store_ratio", StoreInsts, Instructions, InstructionMix),
        ("branch_ratio", BranchInsts, Instructions, InstructionMix),
        ("fp_ratio", FpInsts, Instructions, InstructionMix),
        ("int_ratio", IntInsts, Instructions, InstructionMix),
        ("vec_ratio", VecInsts, Instructions, InstructionMix),
    ];
    table
        .into_iter()
        .map(|(id, n, d, c)| MetricDefinition { id: id.to_owned(), numerator: n, denominator: d, category: c })
        .collect()
}

pub fn find_metric<'a>(defs: &'a [MetricDefinition], id: &str) -> Result<&'a MetricDefinition> {
    defs.iter().find(|d| d.id == id).ok_or_else(|| Error::UnknownMetric(id.to_owned()))
}

/// Target metric values, keyed by metric id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetMetrics {
    pub metrics: BTreeMap<String, f64>,
}

impl TargetMetrics {
    pub fn new(metrics: BTreeMap<String, f64>) -> Self {
        Self { metrics }
    }

    pub fn len(&self) -> usize {
        self.metrics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metrics.is_empty()
    }

    /// Pairs each target with its definition, in target-id order.
    pub fn resolve<'a>(&'a self, defs: &'a [MetricDefinition]) -> Result<Vec<(&'a MetricDefinition, f64)>> {
        self.metrics.iter().map(|(id, v)| Ok((find_metric(defs, id)?, *v))).collect()
    }

    pub fn validate(&self, defs: &[MetricDefinition]) -> Result<()> {
        for (def, v) in self.resolve(defs)? {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Invariant(format!("target `{}` must be a positive finite value, got {v}", def.id)));
            }
            if def.category.is_fraction() && v > 1.0 {
                return Err(Error::Invariant(format!("target `{}` is a fraction and must be <= 1, got {v}", def.id)));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str, defs: &[MetricDefinition]) -> Result<Self> {
        let t: TargetMetrics = serde_json::from_str(text)?;
        t.validate(defs)?;
        Ok(t)
    }

    pub fn to_json(&self) -> String {
        crate::io::to_json_string(self)
    }
}

fn ratio(counts: &EventCounts, def: &MetricDefinition) -> Result<f64> {
    let missing = |event| Error::MissingEvent { metric: def.id.clone(), event };
    let den = counts.get(def.denominator).ok_or_else(|| missing(def.denominator))?;
    let num = counts.get(def.numerator).ok_or_else(|| missing(def.numerator))?;
    if den <= 0.0 {
        return Err(Error::UndefinedMetric { metric: def.id.clone(), denominator: def.denominator });
    }
    Ok(num / den)
}

pub fn compute_metric(counts: &MeasurementResult, def: &MetricDefinition) -> Result<f64> {
    ratio(&counts.counts, def)
}

pub fn compute_all_metrics(counts: &MeasurementResult, defs: &[MetricDefinition]) -> Result<BTreeMap<String, f64>> {
    defs.iter().map(|d| Ok((d.id.clone(), compute_metric(counts, d)?))).collect()
}
