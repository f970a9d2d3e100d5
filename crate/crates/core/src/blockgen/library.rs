use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::synth::synthetic_profile;
use super::{
    make_arith_block_with, make_branch_block, make_function_block, make_memory_block, ArithKind, ArithOp,
    ArithParams, BlockParams, BlockSpec, BranchParams, Family, FunctionParams, MemoryParams,
};
use crate::error::{Error, Result};
use crate::model::{EventProfile, DEFAULT_N0};

/// The default parameter sweep.
pub const MEMORY_STRIDES: [u64; 9] = [8, 16, 32, 64, 128, 256, 512, 1024, 4096];
pub const MEMORY_BUFFER: u64 = 64 << 20;
pub const FUNCTION_STRIDES: [u64; 4] = [64, 256, 1024, 4096];
pub const FUNCTION_COUNT: u32 = 512;
pub const BRANCH_THRESHOLDS: [u32; 6] = [0, 128, 256, 384, 448, 512];

pub fn arithmetic_mixes() -> [Vec<(ArithOp, u32)>; 4] {
    use ArithOp::*;
    [vec![(Add, 16)], vec![(Add, 8), (Mul, 8)], vec![(Add, 8), (Sub, 4), (Div, 4)], vec![(Div, 8)]]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LibraryOptions {
    /// Include double-precision variants of the arithmetic mixes (the only blocks
    /// that retire fp and packed-vector instructions).
    pub fp_variants: bool,
}

impl Default for LibraryOptions {
    fn default() -> Self {
        Self { fp_variants: true }
    }
}

/// A set of uniquely named blocks sharing one calibration base `n0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockLibrary {
    n0: u64,
    blocks: Vec<BlockSpec>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockRecord {
    id: String,
    family: Family,
    params: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    profile: Option<EventProfile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LibraryDoc {
    n0: u64,
    blocks: Vec<BlockRecord>,
}

impl BlockRecord {
    fn into_spec(self) -> Result<BlockSpec> {
        let params = match self.family {
            Family::MemoryAccess => BlockParams::Memory(serde_json::from_value::<MemoryParams>(self.params)?),
            Family::FunctionAccess => BlockParams::Function(serde_json::from_value::<FunctionParams>(self.params)?),
            Family::BranchPredict => BlockParams::Branch(serde_json::from_value::<BranchParams>(self.params)?),
            Family::Arithmetic => BlockParams::Arith(serde_json::from_value::<ArithParams>(self.params)?),
        };
        Ok(BlockSpec { id: self.id, params, profile: self.profile })
    }

    fn from_spec(spec: &BlockSpec) -> Self {
        let params = match &spec.params {
            BlockParams::Memory(p) => serde_json::to_value(p),
            BlockParams::Function(p) => serde_json::to_value(p),
            BlockParams::Branch(p) => serde_json::to_value(p),
            BlockParams::Arith(p) => serde_json::to_value(p),
        }
        .expect("block params serialize");
        BlockRecord { id: spec.id.clone(), family: spec.family(), params, profile: spec.profile.clone() }
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

impl BlockLibrary {
    /// Builds a library and checks every invariant.
    pub fn new(n0: u64, blocks: Vec<BlockSpec>) -> Result<Self> {
        let lib = BlockLibrary { n0, blocks };
        match lib.violations().into_iter().next() {
            Some(v) => Err(Error::Invariant(v)),
            None => Ok(lib),
        }
    }

    /// Builds a library without checking invariants; see [`BlockLibrary::violations`].
    pub fn new_unchecked(n0: u64, blocks: Vec<BlockSpec>) -> Self {
        BlockLibrary { n0, blocks }
    }

    pub fn n0(&self) -> u64 {
        self.n0
    }

    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    pub(crate) fn blocks_mut(&mut self) -> &mut [BlockSpec] {
        &mut self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&BlockSpec> {
        self.blocks.iter().find(|b| b.id == id)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.blocks.iter().map(|b| b.id.as_str())
    }

    /// Sub-library of the blocks whose `keep` flag is set, in library order.
    pub fn subset(&self, keep: &[bool]) -> BlockLibrary {
        let blocks = self.blocks.iter().zip(keep).filter(|(_, k)| **k).map(|(b, _)| b.clone()).collect();
        BlockLibrary { n0: self.n0, blocks }
    }

    /// Every invariant violation, one human-readable line each, naming the block.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n0 == 0 {
            out.push("library n0 must be positive".to_owned());
        }
        let mut seen = HashSet::new();
        for b in &self.blocks {
            if !valid_id(&b.id) {
                out.push(format!("block `{}`: id must be nonempty and use only [A-Za-z0-9_]", b.id));
            }
            if !seen.insert(b.id.as_str()) {
                out.push(format!("block `{}`: duplicate id", b.id));
            }
            if let Err(e) = b.params.validate() {
                out.push(format!("block `{}`: {e}", b.id));
            }
            if let Some(p) = &b.profile {
                if p.n0 != self.n0 {
                    out.push(format!("block `{}`: profile n0 {} differs from library n0 {}", b.id, p.n0, self.n0));
                }
                if let Err(e) = p.validate() {
                    out.push(format!("block `{}`: {e}", b.id));
                }
            }
        }
        out
    }

    pub fn is_calibrated(&self) -> bool {
        self.blocks.iter().all(|b| b.profile.is_some())
    }

    /// Parses a library document without checking invariants.
    pub fn from_json_unchecked(text: &str) -> Result<Self> {
        let doc: LibraryDoc = serde_json::from_str(text)?;
        let blocks = doc.blocks.into_iter().map(BlockRecord::into_spec).collect::<Result<_>>()?;
        Ok(BlockLibrary { n0: doc.n0, blocks })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let lib = Self::from_json_unchecked(text)?;
        BlockLibrary::new(lib.n0, lib.blocks)
    }

    pub fn to_json(&self) -> String {
        let doc = LibraryDoc { n0: self.n0, blocks: self.blocks.iter().map(BlockRecord::from_spec).collect() };
        crate::io::to_json_string(&doc)
    }

    /// SHA-256 of the canonical JSON document, hex encoded.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn default_library() -> BlockLibrary {
    default_library_with(LibraryOptions::default())
}

/// The fixed default sweep, each block carrying its synthetic analytic profile.
pub fn default_library_with(opts: LibraryOptions) -> BlockLibrary {
    let mut specs = Vec::new();
    specs.extend(MEMORY_STRIDES.iter().map(|&s| make_memory_block(s, MEMORY_BUFFER)));
    specs.extend(FUNCTION_STRIDES.iter().map(|&s| make_function_block(s, FUNCTION_COUNT)));
    specs.extend(BRANCH_THRESHOLDS.iter().map(|&t| make_branch_block(t)));
    let mut kinds = vec![ArithKind::Int];
    if opts.fp_variants {
        kinds.push(ArithKind::Fp);
    }
    for kind in kinds {
        specs.extend(arithmetic_mixes().iter().map(|mix| make_arith_block_with(kind, mix)));
    }
    let blocks = specs
        .into_iter()
        .map(|s| {
            let s = s.expect("default sweep parameters are valid");
            let profile = synthetic_profile(&s.params, DEFAULT_N0);
            s.with_profile(profile)
        })
        .collect();
    BlockLibrary::new(DEFAULT_N0, blocks).expect("default library satisfies its invariants")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EventId;

    fn rate(lib: &BlockLibrary, id: &str, num: EventId, den: EventId) -> f64 {
        let c = &lib.get(id).unwrap().profile.as_ref().unwrap().counts;
        c.get(num).unwrap() / c.get(den).unwrap()
    }

    #[test]
    fn default_sweep_shape() {
        let lib = default_library();
        assert!(lib.len() >= 23);
        assert_eq!(lib.len(), 9 + 4 + 6 + 8);
        assert_eq!(default_library_with(LibraryOptions { fp_variants: false }).len(), 23);
        assert!(lib.violations().is_empty());
        assert!(lib.is_calibrated());
    }

    #[test]
    fn analytic_model_monotone_in_parameters() {
        let lib = default_library();
        let l1d = |s: u64| rate(&lib, &format!("mem_s{s}_b{MEMORY_BUFFER}"), EventId::L1dMisses, EventId::L1dAccesses);
        assert!(l1d(8) < l1d(4096));
        for w in MEMORY_STRIDES.windows(2) {
            let id = |s: u64| format!("mem_s{s}_b{MEMORY_BUFFER}");
            for (num, den) in [
                (EventId::L1dMisses, EventId::L1dAccesses),
                (EventId::L2Misses, EventId::L2Accesses),
                (EventId::L3Misses, EventId::L3Accesses),
                (EventId::DtlbMisses, EventId::DtlbAccesses),
            ] {
                assert!(rate(&lib, &id(w[0]), num, den) <= rate(&lib, &id(w[1]), num, den), "{num} {w:?}");
            }
        }
        for w in FUNCTION_STRIDES.windows(2) {
            let id = |s: u64| format!("fn_s{s}_c{FUNCTION_COUNT}");
            for (num, den) in [(EventId::L1iMisses, EventId::L1iAccesses), (EventId::ItlbMisses, EventId::ItlbAccesses)] {
                assert!(rate(&lib, &id(w[0]), num, den) <= rate(&lib, &id(w[1]), num, den));
            }
        }
        // unimodal with the peak at 512
        let br: Vec<f64> = BRANCH_THRESHOLDS
            .iter()
            .map(|t| rate(&lib, &format!("br_t{t}"), EventId::BranchMisses, EventId::BranchInsts))
            .collect();
        assert!(br.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(rate(&lib, "br_t512", EventId::BranchMisses, EventId::BranchInsts), 0.5);
        // cpi nondecreasing in div fraction
        let cpi = |id: &str| rate(&lib, id, EventId::Cycles, EventId::Instructions);
        let add = cpi("ar_int_add16");
        let mid = cpi("ar_int_add8_mul8");
        let div = cpi("ar_int_div8");
        assert!(add < mid && mid < div);
        assert!(cpi("ar_int_add8_mul8") <= cpi("ar_int_add8_sub4_div4"));
    }

    #[test]
    fn json_round_trip_and_strictness() {
        let lib = default_library();
        let text = lib.to_json();
        let back = BlockLibrary::from_json(&text).unwrap();
        assert_eq!(back, lib);
        assert_eq!(back.to_json(), text);
        assert!(BlockLibrary::from_json(r#"{"n0": 10, "blocks": [], "x": 1}"#).is_err());
        let bad = r#"{"n0": 10, "blocks": [{"id": "a", "family": "branch_predict", "params": {"threshold": 3, "stride": 1}}]}"#;
        assert!(BlockLibrary::from_json(bad).is_err());
        let wrong_family = r#"{"n0": 10, "blocks": [{"id": "a", "family": "memory_access", "params": {"threshold": 3}}]}"#;
        assert!(BlockLibrary::from_json(wrong_family).is_err());
    }

    #[test]
    fn violations_name_the_block() {
        let mut lib = default_library();
        let c = &mut lib.blocks_mut()[0].profile.as_mut().unwrap().counts;
        let acc = c.get(EventId::L1dAccesses).unwrap();
        c.insert(EventId::L1dMisses, acc + 1.0);
        let v = lib.violations();
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("mem_s8_b67108864") && v[0].contains("l1d_misses") && v[0].contains("l1d_accesses"));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let a = make_branch_block(3).unwrap();
        assert!(BlockLibrary::new(10, vec![a.clone(), a]).is_err());
    }
}
