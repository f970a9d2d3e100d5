use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default calibration base: profiles hold event counts per this many block executions.
pub const DEFAULT_N0: u64 = 10_000_000;

/// The canonical hardware-event vocabulary.
///
/// Declaration order is the canonical order used by every serialized document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventId {
    Cycles,
    Instructions,
    BranchInsts,
    BranchMisses,
    L1dAccesses,
    L1dMisses,
    L1iAccesses,
    L1iMisses,
    L2Accesses,
    L2Misses,
    L3Accesses,
    L3Misses,
    DtlbAccesses,
    DtlbMisses,
    ItlbAccesses,
    ItlbMisses,
    LoadInsts,
    StoreInsts,
    FpInsts,
    IntInsts,
    VecInsts,
}

impl EventId {
    pub const ALL: [EventId; 21] = [
        EventId::Cycles,
        EventId::Instructions,
        EventId::BranchInsts,
        EventId::BranchMisses,
        EventId::L1dAccesses,
        EventId::L1dMisses,
        EventId::L1iAccesses,
        EventId::L1iMisses,
        EventId::L2Accesses,
        EventId::L2Misses,
        EventId::L3Accesses,
        EventId::L3Misses,
        EventId::DtlbAccesses,
        EventId::DtlbMisses,
        EventId::ItlbAccesses,
        EventId::ItlbMisses,
        EventId::LoadInsts,
        EventId::StoreInsts,
        EventId::FpInsts,
        EventId::IntInsts,
        EventId::VecInsts,
    ];

    /// (miss, access) pairs; the miss count may never exceed the access count.
    pub const MISS_ACCESS_PAIRS: [(EventId, EventId); 7] = [
        (EventId::BranchMisses, EventId::BranchInsts),
        (EventId::L1dMisses, EventId::L1dAccesses),
        (EventId::L1iMisses, EventId::L1iAccesses),
        (EventId::L2Misses, EventId::L2Accesses),
        (EventId::L3Misses, EventId::L3Accesses),
        (EventId::DtlbMisses, EventId::DtlbAccesses),
        (EventId::ItlbMisses, EventId::ItlbAccesses),
    ];

    pub fn name(self) -> &'static str {
        match self {
            EventId::Cycles => "cycles",
            EventId::Instructions => "instructions",
            EventId::BranchInsts => "branch_insts",
            EventId::BranchMisses => "branch_misses",
            EventId::L1dAccesses => "l1d_accesses",
            EventId::L1dMisses => "l1d_misses",
            EventId::L1iAccesses => "l1i_accesses",
            EventId::L1iMisses => "l1i_misses",
            EventId::L2Accesses => "l2_accesses",
            EventId::L2Misses => "l2_misses",
            EventId::L3Accesses => "l3_accesses",
            EventId::L3Misses => "l3_misses",
            EventId::DtlbAccesses => "dtlb_accesses",
            EventId::DtlbMisses => "dtlb_misses",
            EventId::ItlbAccesses => "itlb_accesses",
            EventId::ItlbMisses => "itlb_misses",
            EventId::LoadInsts => "load_insts",
            EventId::StoreInsts => "store_insts",
            EventId::FpInsts => "fp_insts",
            EventId::IntInsts => "int_insts",
            EventId::VecInsts => "vec_insts",
        }
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EventId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EventId::ALL
            .iter()
            .copied()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::UnknownEvent(s.to_owned()))
    }
}

/// Event occurrence counts keyed by event. Absent events are distinct from zero counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventCounts(BTreeMap<EventId, f64>);

impl EventCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, event: EventId) -> Option<f64> {
        self.0.get(&event).copied()
    }

    /// Count for `event`, treating an absent event as zero.
    pub fn get_or_zero(&self, event: EventId) -> f64 {
        self.get(event).unwrap_or(0.0)
    }

    pub fn insert(&mut self, event: EventId, value: f64) -> Option<f64> {
        self.0.insert(event, value)
    }

    pub fn contains(&self, event: EventId) -> bool {
        self.0.contains_key(&event)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (EventId, f64)> + '_ {
        self.0.iter().map(|(e, v)| (*e, *v))
    }

    pub fn events(&self) -> impl Iterator<Item = EventId> + '_ {
        self.0.keys().copied()
    }

    /// True when every canonical event is present.
    pub fn is_complete(&self) -> bool {
        self.0.len() == EventId::ALL.len()
    }

    /// Event-wise sum; an event present on either side is present in the result.
    pub fn add(&self, other: &EventCounts) -> EventCounts {
        let mut out = self.clone();
        for (e, v) in other.iter() {
            *out.0.entry(e).or_insert(0.0) += v;
        }
        out
    }

    pub fn scale(&self, k: f64) -> EventCounts {
        EventCounts(self.0.iter().map(|(e, v)| (*e, v * k)).collect())
    }

    /// Checks nonnegativity, finiteness and that misses never exceed accesses.
    pub fn validate(&self) -> Result<()> {
        for (e, v) in self.iter() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Invariant(format!("count for `{e}` must be finite and >= 0, got {v}")));
            }
        }
        for (miss, access) in EventId::MISS_ACCESS_PAIRS {
            if let (Some(m), Some(a)) = (self.get(miss), self.get(access)) {
                if m > a {
                    return Err(Error::Invariant(format!("`{miss}` ({m}) exceeds `{access}` ({a})")));
                }
            }
        }
        Ok(())
    }
}

impl FromIterator<(EventId, f64)> for EventCounts {
    fn from_iter<I: IntoIterator<Item = (EventId, f64)>>(iter: I) -> Self {
        EventCounts(iter.into_iter().collect())
    }
}

/// Per-block event counts, normalized to `n0` block executions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventProfile {
    pub n0: u64,
    pub counts: EventCounts,
}

impl EventProfile {
    pub fn new(n0: u64, counts: EventCounts) -> Self {
        Self { n0, counts }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n0 == 0 {
            return Err(Error::Invariant("profile n0 must be positive".into()));
        }
        self.counts.validate()?;
        match self.counts.get(EventId::Instructions) {
            Some(i) if i > 0.0 => Ok(()),
            _ => Err(Error::Invariant("profile must report instructions > 0".into())),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: EventProfile = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        crate::io::to_json_string(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Simulated,
    Imported,
}

/// Event counts observed (or predicted) for one run of a whole program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementResult {
    pub counts: EventCounts,
    pub provenance: Provenance,
}

impl MeasurementResult {
    pub fn new(counts: EventCounts, provenance: Provenance) -> Self {
        Self { counts, provenance }
    }

    pub fn get(&self, event: EventId) -> Option<f64> {
        self.counts.get(event)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for e in EventId::ALL {
            assert_eq!(e.name().parse::<EventId>().unwrap(), e);
            assert_eq!(serde_json::to_string(&e).unwrap(), format!("\"{}\"", e.name()));
        }
        assert!(matches!("l4_misses".parse::<EventId>(), Err(Error::UnknownEvent(_))));
    }

    #[test]
    fn validate_rejects_misses_above_accesses() {
        let c: EventCounts = [(EventId::L1dMisses, 6.0), (EventId::L1dAccesses, 5.0)].into_iter().collect();
        assert!(c.validate().is_err());
        let c: EventCounts = [(EventId::Cycles, -1.0)].into_iter().collect();
        assert!(c.validate().is_err());
    }

    #[test]
    fn profile_rejects_unknown_keys_and_events() {
        assert!(EventProfile::from_json(r#"{"n0": 10, "counts": {"instructions": 5}, "extra": 1}"#).is_err());
        assert!(EventProfile::from_json(r#"{"n0": 10, "counts": {"instructions": 5, "bogus": 1}}"#).is_err());
        let p = EventProfile::from_json(r#"{"n0": 10, "counts": {"instructions": 5}}"#).unwrap();
        assert_eq!(p.counts.get(EventId::Instructions), Some(5.0));
        assert!(EventProfile::from_json(r#"{"n0": 10, "counts": {"cycles": 5}}"#).is_err());
    }
}
