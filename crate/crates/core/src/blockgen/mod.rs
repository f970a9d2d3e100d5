//! Parameterized basic blocks: an interior instruction pattern wrapped in a counted
//! exterior loop. Four families cover memory locality, instruction-fetch locality,
//! branch predictability and arithmetic latency.

mod library;
mod render;
pub mod synth;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EventProfile;

pub use library::{default_library, default_library_with, BlockLibrary, LibraryOptions};
pub use render::{render_block, render_program};

pub const MAX_MEMORY_STRIDE: u64 = 1 << 20;
pub const MIN_FUNCTION_COUNT: u32 = 2;
pub const MAX_FUNCTION_COUNT: u32 = 65_536;
/// Upper end of the pseudo-random draw in branch blocks (inclusive).
pub const BRANCH_RANGE: u32 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    MemoryAccess,
    FunctionAccess,
    BranchPredict,
    Arithmetic,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::MemoryAccess => "memory_access",
            Family::FunctionAccess => "function_access",
            Family::BranchPredict => "branch_predict",
            Family::Arithmetic => "arithmetic",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn name(self) -> &'static str {
        match self {
            ArithOp::Add => "add",
            ArithOp::Sub => "sub",
            ArithOp::Mul => "mul",
            ArithOp::Div => "div",
        }
    }
}

/// Operand type of an arithmetic block. `Fp` is an extension beyond the integer
/// families: scalar double-precision ops plus one packed two-lane add per iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArithKind {
    #[default]
    Int,
    Fp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixTerm {
    pub op: ArithOp,
    pub reps: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryParams {
    pub stride: u64,
    pub buffer_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionParams {
    pub stride: u64,
    pub function_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchParams {
    pub threshold: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArithParams {
    pub kind: ArithKind,
    pub mix: Vec<MixTerm>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlockParams {
    Memory(MemoryParams),
    Function(FunctionParams),
    Branch(BranchParams),
    Arith(ArithParams),
}

impl BlockParams {
    pub fn family(&self) -> Family {
        match self {
            BlockParams::Memory(_) => Family::MemoryAccess,
            BlockParams::Function(_) => Family::FunctionAccess,
            BlockParams::Branch(_) => Family::BranchPredict,
            BlockParams::Arith(_) => Family::Arithmetic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match self {
            BlockParams::Memory(p) => {
                if !(1..=MAX_MEMORY_STRIDE).contains(&p.stride) {
                    return bad(format!("memory stride {} outside [1, {MAX_MEMORY_STRIDE}]", p.stride));
                }
                if p.buffer_bytes < p.stride {
                    return bad(format!("memory stride {} exceeds buffer {}", p.stride, p.buffer_bytes));
                }
            }
            BlockParams::Function(p) => {
                // functions are placed with an alignment attribute, which must be a power of two
                if p.stride == 0 || !p.stride.is_power_of_two() {
                    return bad(format!("function stride {} must be a power of two >= 1", p.stride));
                }
                if !(MIN_FUNCTION_COUNT..=MAX_FUNCTION_COUNT).contains(&p.function_count) {
                    return bad(format!(
                        "function count {} outside [{MIN_FUNCTION_COUNT}, {MAX_FUNCTION_COUNT}]",
                        p.function_count
                    ));
                }
            }
            BlockParams::Branch(p) => {
                if p.threshold > BRANCH_RANGE {
                    return bad(format!("branch threshold {} outside [0, {BRANCH_RANGE}]", p.threshold));
                }
            }
            BlockParams::Arith(p) => {
                if p.mix.is_empty() {
                    return bad("arithmetic mix is empty".into());
                }
                if let Some(t) = p.mix.iter().find(|t| t.reps == 0) {
                    return bad(format!("arithmetic op `{}` has zero repetitions", t.op.name()));
                }
            }
        }
        Ok(())
    }

    /// Human-readable `key=value` parameter summary.
    pub fn describe(&self) -> String {
        match self {
            BlockParams::Memory(p) => format!("stride={} buffer_bytes={}", p.stride, p.buffer_bytes),
            BlockParams::Function(p) => format!("stride={} function_count={}", p.stride, p.function_count),
            BlockParams::Branch(p) => format!("threshold={}", p.threshold),
            BlockParams::Arith(p) => {
                let kind = match p.kind {
                    ArithKind::Int => "int",
                    ArithKind::Fp => "fp",
                };
                let mix: Vec<String> = p.mix.iter().map(|t| format!("{}x{}", t.op.name(), t.reps)).collect();
                format!("kind={kind} mix={}", mix.join(","))
            }
        }
    }

    fn default_id(&self) -> String {
        match self {
            BlockParams::Memory(p) => format!("mem_s{}_b{}", p.stride, p.buffer_bytes),
            BlockParams::Function(p) => format!("fn_s{}_c{}", p.stride, p.function_count),
            BlockParams::Branch(p) => format!("br_t{}", p.threshold),
            BlockParams::Arith(p) => {
                let kind = match p.kind {
                    ArithKind::Int => "int",
                    ArithKind::Fp => "fp",
                };
                let mix: String = p.mix.iter().map(|t| format!("_{}{}", t.op.name(), t.reps)).collect();
                format!("ar_{kind}{mix}")
            }
        }
    }
}

/// A basic block: identity, family parameters and (once calibrated) its event profile.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    pub id: String,
    pub params: BlockParams,
    pub profile: Option<EventProfile>,
}

impl BlockSpec {
    pub fn new(params: BlockParams) -> Result<Self> {
        params.validate()?;
        Ok(BlockSpec { id: params.default_id(), params, profile: None })
    }

    pub fn family(&self) -> Family {
        self.params.family()
    }

    pub fn with_profile(mut self, profile: EventProfile) -> Self {
        self.profile = Some(profile);
        self
    }
}

pub fn make_memory_block(stride: u64, buffer_bytes: u64) -> Result<BlockSpec> {
    BlockSpec::new(BlockParams::Memory(MemoryParams { stride, buffer_bytes }))
}

pub fn make_function_block(stride: u64, function_count: u32) -> Result<BlockSpec> {
    BlockSpec::new(BlockParams::Function(FunctionParams { stride, function_count }))
}

pub fn make_branch_block(threshold: u32) -> Result<BlockSpec> {
    BlockSpec::new(BlockParams::Branch(BranchParams { threshold }))
}

pub fn make_arith_block(mix: &[(ArithOp, u32)]) -> Result<BlockSpec> {
    make_arith_block_with(ArithKind::Int, mix)
}

pub fn make_arith_block_with(kind: ArithKind, mix: &[(ArithOp, u32)]) -> Result<BlockSpec> {
    let mix = mix.iter().map(|&(op, reps)| MixTerm { op, reps }).collect();
    BlockSpec::new(BlockParams::Arith(ArithParams { kind, mix }))
}
