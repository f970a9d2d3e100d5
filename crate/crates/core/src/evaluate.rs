//! Accuracy arithmetic and report generation.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::align::{AlignConfig, AlignmentTrace};
use crate::error::{Error, Result};
use crate::model::{find_metric, Category, MetricDefinition, Provenance, TargetMetrics};

/// `1 - |real - proxy| / |real|`; 1 is a perfect match and values can go negative.
pub fn accuracy(real: f64, proxy: f64) -> Result<f64> {
    if real == 0.0 {
        return Err(Error::UndefinedAccuracy { metric: String::new() });
    }
    Ok(1.0 - (real - proxy).abs() / real.abs())
}

/// Per-category accuracy: the lowest accuracy among the category's metrics.
/// Categories with no metric in `accuracies` are omitted.
pub fn category_accuracy(accuracies: &BTreeMap<String, f64>, defs: &[MetricDefinition]) -> Result<BTreeMap<Category, f64>> {
    let mut out: BTreeMap<Category, f64> = BTreeMap::new();
    for (id, a) in accuracies {
        let cat = find_metric(defs, id)?.category;
        out.entry(cat).and_modify(|m| *m = m.min(*a)).or_insert(*a);
    }
    Ok(out)
}

/// Pearson product-moment correlation of two equal-length series.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidParameter(format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!("need at least 2 pairs, got {}", x.len())));
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("a series has zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Mean of `|x_i - y_i| / |x_i|`, with `x` as the reference series.
pub fn mean_abs_rel_error(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidParameter(format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(Error::InvalidParameter("series are empty".into()));
    }
    let mut sum = 0.0;
    for (i, (a, b)) in x.iter().zip(y).enumerate() {
        if *a == 0.0 {
            return Err(Error::UndefinedError { index: i });
        }
        sum += (a - b).abs() / a.abs();
    }
    Ok(sum / x.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricRow {
    pub metric: String,
    pub category: Category,
    pub target: f64,
    pub measured: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportMetadata {
    pub library_hash: Option<String>,
    pub config: Option<AlignConfig>,
    pub provenance: Option<Provenance>,
    pub rounds: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccuracyReport {
    pub metrics: Vec<MetricRow>,
    pub categories: BTreeMap<Category, f64>,
    pub metadata: ReportMetadata,
}

impl AccuracyReport {
    /// Builds a report from target and measured values keyed by metric id.
    pub fn from_values(targets: &TargetMetrics, measured: &BTreeMap<String, f64>, defs: &[MetricDefinition]) -> Result<Self> {
        let mut metrics = Vec::with_capacity(targets.len());
        let mut acc = BTreeMap::new();
        for (def, target) in targets.resolve(defs)? {
            let value = *measured.get(&def.id).ok_or_else(|| Error::IncompleteReport(def.id.clone()))?;
            let a = accuracy(target, value).map_err(|_| Error::UndefinedAccuracy { metric: def.id.clone() })?;
            acc.insert(def.id.clone(), a);
            metrics.push(MetricRow { metric: def.id.clone(), category: def.category, target, measured: value, accuracy: a });
        }
        let categories = category_accuracy(&acc, defs)?;
        Ok(Self { metrics, categories, metadata: ReportMetadata::default() })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        crate::io::to_json_string(self)
    }

    /// Tab-separated table, one metric per line after a header.
    pub fn to_table(&self) -> String {
        let mut s = String::from("metric\ttarget\tmeasured\taccuracy\tcategory\n");
        for r in &self.metrics {
            writeln!(s, "{}\t{}\t{}\t{}\t{}", r.metric, r.target, r.measured, r.accuracy, r.category).unwrap();
        }
        s
    }
}

/// Report over the final round of `trace`.
pub fn build_report(targets: &TargetMetrics, trace: &AlignmentTrace, defs: &[MetricDefinition]) -> Result<AccuracyReport> {
    let last = trace.last().ok_or_else(|| Error::InvalidParameter("trace has no rounds".into()))?;
    let mut report = AccuracyReport::from_values(targets, &last.metrics, defs)?;
    report.metadata.provenance = Some(last.measurement.provenance);
    report.metadata.rounds = Some(trace.rounds.len());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_metrics;

    #[test]
    fn accuracy_basics() {
        assert_eq!(accuracy(1.0, 0.95).unwrap(), 0.95);
        assert_eq!(accuracy(2.0, 2.0).unwrap(), 1.0);
        assert_eq!(accuracy(1.0, 3.0).unwrap(), -1.0);
        assert!(matches!(accuracy(0.0, 1.0), Err(Error::UndefinedAccuracy { .. })));
    }

    #[test]
    fn category_minimum() {
        let defs = builtin_metrics();
        let acc: BTreeMap<String, f64> =
            [("l1d_miss_rate", 0.95), ("l2_miss_rate", 0.859), ("cpi", 0.99)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let c = category_accuracy(&acc, &defs).unwrap();
        assert_eq!(c[&Category::CacheBehavior], 0.859);
        assert_eq!(c[&Category::ProcessorPerformance], 0.99);
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn pearson_cases() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::UndefinedCorrelation(_))));
        assert!(matches!(pearson(&[1.0], &[1.0]), Err(Error::UndefinedCorrelation(_))));
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn mare_cases() {
        assert!((mean_abs_rel_error(&[10.0, 20.0], &[11.0, 18.0]).unwrap() - 0.1).abs() < 1e-15);
        assert!(matches!(mean_abs_rel_error(&[1.0, 0.0], &[1.0, 1.0]), Err(Error::UndefinedError { index: 1 })));
    }

    #[test]
    fn report_table_and_json() {
        let defs = builtin_metrics();
        let targets = TargetMetrics::new([("cpi".to_string(), 1.0), ("branch_miss_rate".to_string(), 0.05)].into());
        let measured = [("cpi".to_string(), 1.1), ("branch_miss_rate".to_string(), 0.05)].into();
        let r = AccuracyReport::from_values(&targets, &measured, &defs).unwrap();
        let table = r.to_table();
        assert_eq!(table.lines().count(), 3);
        assert!(table.contains("branch_miss_rate\t0.05\t0.05\t1\tbranch_prediction"));
        assert_eq!(AccuracyReport::from_json(&r.to_json()).unwrap(), r);
        let missing = TargetMetrics::new([("l1d_miss_rate".to_string(), 0.1)].into());
        assert!(matches!(AccuracyReport::from_values(&missing, &measured, &defs), Err(Error::IncompleteReport(_))));
    }
}
