use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::events::{EventCounts, EventId, MeasurementResult, Provenance};
use crate::blockgen::BlockLibrary;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramEntry {
    pub block: String,
    pub executions: u64,
}

/// An ordered list of blocks with their execution counts. Block ids are unique;
/// duplicate entries are merged by summing counts at the first occurrence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ProxyProgram {
    entries: Vec<ProgramEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProgramDoc {
    entries: Vec<ProgramEntry>,
}

impl<'de> Deserialize<'de> for ProxyProgram {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = ProgramDoc::deserialize(d)?;
        Ok(ProxyProgram::from_entries(doc.entries.into_iter().map(|e| (e.block, e.executions))))
    }
}

impl ProxyProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries<S: Into<String>>(entries: impl IntoIterator<Item = (S, u64)>) -> Self {
        let mut p = ProxyProgram::new();
        for (id, n) in entries {
            p.push(id, n);
        }
        p
    }

    /// Appends `n` executions of `block`, merging into an existing entry if present.
    pub fn push(&mut self, block: impl Into<String>, n: u64) {
        let block = block.into();
        match self.entries.iter_mut().find(|e| e.block == block) {
            Some(e) => e.executions += n,
            None => self.entries.push(ProgramEntry { block, executions: n }),
        }
    }

    pub fn entries(&self) -> &[ProgramEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn executions(&self, block: &str) -> Option<u64> {
        self.entries.iter().find(|e| e.block == block).map(|e| e.executions)
    }

    /// Connection: `self` followed by `other`.
    pub fn concat(&self, other: &ProxyProgram) -> ProxyProgram {
        let mut out = self.clone();
        for e in &other.entries {
            out.push(e.block.clone(), e.executions);
        }
        out
    }

    /// Scaling: every execution count multiplied by `k`.
    pub fn scale(&self, k: u64) -> ProxyProgram {
        ProxyProgram {
            entries: self
                .entries
                .iter()
                .map(|e| ProgramEntry { block: e.block.clone(), executions: e.executions * k })
                .collect(),
        }
    }

    pub fn is_runnable(&self) -> bool {
        self.entries.iter().any(|e| e.executions > 0)
    }

    pub fn validate(&self, library: &BlockLibrary) -> Result<()> {
        for e in &self.entries {
            library.get(&e.block).ok_or_else(|| Error::UnresolvedBlock(e.block.clone()))?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        crate::io::to_json_string(self)
    }
}

/// Predicted whole-program event counts: `sum_j profile_j[e] * N_j / n0`.
///
/// When every contributing profile count is integral the sum `sum_j profile_j[e] * N_j`
/// is accumulated exactly and divided once, so integer-valued predictions are exact.
/// Only events reported by every referenced profile appear in the result.
pub fn predict_events(program: &ProxyProgram, library: &BlockLibrary) -> Result<MeasurementResult> {
    let mut terms = Vec::with_capacity(program.len());
    for e in program.entries() {
        let spec = library.get(&e.block).ok_or_else(|| Error::UnresolvedBlock(e.block.clone()))?;
        let profile = spec.profile.as_ref().ok_or_else(|| Error::Uncalibrated(e.block.clone()))?;
        terms.push((&profile.counts, e.executions));
    }
    let present: BTreeSet<EventId> = EventId::ALL
        .into_iter()
        .filter(|ev| terms.iter().all(|(c, _)| c.contains(*ev)))
        .collect();
    let n0 = library.n0();
    let counts: EventCounts = present
        .into_iter()
        .map(|ev| {
            let pairs = terms.iter().map(|(c, n)| (c.get_or_zero(ev), *n));
            (ev, weighted_sum(pairs, n0))
        })
        .collect();
    Ok(MeasurementResult::new(counts, Provenance::Simulated))
}

const EXACT_LIMIT: f64 = 9.223_372_036_854_775e18; // 2^63

fn weighted_sum(pairs: impl Iterator<Item = (f64, u64)> + Clone, n0: u64) -> f64 {
    if let Some(v) = exact_weighted_sum(pairs.clone(), n0) {
        return v;
    }
    // Neumaier-compensated fallback for fractional profiles.
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for (c, n) in pairs {
        let t = c * n as f64;
        let s = sum + t;
        comp += if sum.abs() >= t.abs() { (sum - s) + t } else { (t - s) + sum };
        sum = s;
    }
    (sum + comp) / n0 as f64
}

fn exact_weighted_sum(pairs: impl Iterator<Item = (f64, u64)>, n0: u64) -> Option<f64> {
    let mut acc: u128 = 0;
    for (c, n) in pairs {
        if c.fract() != 0.0 || !(0.0..EXACT_LIMIT).contains(&c) {
            return None;
        }
        acc = acc.checked_add((c as u128).checked_mul(n as u128)?)?;
    }
    Some(div_round(acc, n0))
}

/// `acc / d` rounded once to the nearest `f64`.
fn div_round(acc: u128, d: u64) -> f64 {
    if acc == 0 {
        return 0.0;
    }
    // widen so the quotient carries well over 53 significant bits, then fold the
    // remainder into a sticky bit so the single u128 -> f64 conversion rounds correctly
    let shift = acc.leading_zeros() - 1;
    let wide = acc << shift;
    let (q, r) = (wide / d as u128, wide % d as u128);
    let q = if r == 0 { q } else { q | 1 };
    q as f64 * 2f64.powi(-(shift as i32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockgen::{make_arith_block, ArithOp, BlockLibrary};
    use crate::model::{EventProfile, DEFAULT_N0};

    fn lib(profiles: &[(&str, f64)]) -> BlockLibrary {
        let blocks = profiles
            .iter()
            .map(|(id, cycles)| {
                let mut b = make_arith_block(&[(ArithOp::Add, 1)]).unwrap();
                b.id = (*id).to_owned();
                let counts = [(EventId::Cycles, *cycles), (EventId::Instructions, 50.0)].into_iter().collect();
                b.profile = Some(EventProfile::new(DEFAULT_N0, counts));
                b
            })
            .collect();
        BlockLibrary::new(DEFAULT_N0, blocks).unwrap()
    }

    #[test]
    fn predict_identity_scaling_and_sum() {
        let l = lib(&[("b1", 500.0), ("b2", 300.0)]);
        let p = ProxyProgram::from_entries([("b1", DEFAULT_N0)]);
        assert_eq!(predict_events(&p, &l).unwrap().get(EventId::Cycles), Some(500.0));
        let p = ProxyProgram::from_entries([("b1", 2 * DEFAULT_N0)]);
        assert_eq!(predict_events(&p, &l).unwrap().get(EventId::Cycles), Some(1000.0));
        let p = ProxyProgram::from_entries([("b1", DEFAULT_N0), ("b2", DEFAULT_N0)]);
        let r = predict_events(&p, &l).unwrap();
        assert_eq!(r.get(EventId::Cycles), Some(800.0));
        assert_eq!(r.provenance, Provenance::Simulated);
    }

    #[test]
    fn unresolved_block() {
        let l = lib(&[("b1", 500.0)]);
        let p = ProxyProgram::from_entries([("zz", 1)]);
        assert!(matches!(predict_events(&p, &l), Err(Error::UnresolvedBlock(id)) if id == "zz"));
    }

    #[test]
    fn duplicates_merge() {
        let p = ProxyProgram::from_json(r#"{"entries": [{"block": "a", "executions": 2}, {"block": "b", "executions": 1}, {"block": "a", "executions": 3}]}"#).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.executions("a"), Some(5));
        assert_eq!(p.entries()[0].block, "a");
    }

    #[test]
    fn division_rounds_once() {
        assert_eq!(div_round(0, 7), 0.0);
        assert_eq!(div_round(10, 4), 2.5);
        assert_eq!(div_round(1, 3), 1.0 / 3.0);
        assert_eq!(div_round(2, 3), 2.0 / 3.0);
        assert_eq!(div_round(u128::from(u64::MAX), 1), u64::MAX as f64);
        let big = (1u128 << 100) + 12345;
        assert_eq!(div_round(big * 10_000_000, 10_000_000), big as f64);
        assert_eq!(div_round(1_000_000_000_000_000_001, 10), 100_000_000_000_000_000.1);
    }

    #[test]
    fn fractional_profiles_use_float_path() {
        let mut l = lib(&[("b1", 0.0)]);
        l.blocks_mut()[0].profile.as_mut().unwrap().counts.insert(EventId::Cycles, 0.5);
        let p = ProxyProgram::from_entries([("b1", 3 * DEFAULT_N0)]);
        assert_eq!(predict_events(&p, &l).unwrap().get(EventId::Cycles), Some(1.5));
    }
}
