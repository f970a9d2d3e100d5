//! Analytic stand-in for hardware calibration.
//!
//! Each family gets a closed-form model of one exterior-loop iteration on a
//! Westmere-class core (32 KiB L1D/L1I, 256 KiB L2, 12 MiB L3, 64 B lines, 4 KiB
//! pages, 64-entry TLBs). Per-iteration expectations are multiplied by `n0` and
//! rounded to whole event counts. Every miss rate is capped at [`MAX_RATE`].
//!
//! Instruction classes partition the instruction count:
//! `instructions = load + store + branch + fp + int + vec`.
//!
//! Miss models (`lg(s) = log2(s)`, clamped to the cap and the resident floors):
//!
//! | family   | event        | per-access miss probability                         |
//! |----------|--------------|-----------------------------------------------------|
//! | memory   | L1D          | `min(s, 64) / 64` when the buffer exceeds L1D        |
//! | memory   | L2 (local)   | `0.15 + 0.75 * lg(s) / 12` when the buffer exceeds L2 |
//! | memory   | L3 (local)   | `0.30 + 0.60 * lg(s) / 12` when the buffer exceeds L3 |
//! | memory   | DTLB         | `min(s, 4096) / 4096` when the buffer exceeds TLB reach |
//! | function | L1I per call | `F / (F + 32 KiB) * min(s, 64) / 64`, `F = s * count` |
//! | function | L2 (local)   | `F / (F + 256 KiB)`                                  |
//! | function | L3 (local)   | `F / (F + 12 MiB)`                                   |
//! | function | ITLB per call| `min(s, 4096) / 4096 * P / (P + 64)`, `P` = pages of F |
//! | branch   | branch miss  | `min(t, 1024 - t) / 1024` over all block branches    |
//!
//! Cycles are `0.4 * instructions` (or the arithmetic dependence-chain latency, if
//! larger) plus fixed penalties per miss event.

use crate::model::{EventCounts, EventId, EventProfile};

use super::{ArithKind, ArithOp, BlockParams};

pub const MAX_RATE: f64 = 0.9;

const L1_BYTES: f64 = 32.0 * 1024.0;
const L2_BYTES: f64 = 256.0 * 1024.0;
const L3_BYTES: f64 = 12.0 * 1024.0 * 1024.0;
const LINE: f64 = 64.0;
const PAGE: f64 = 4096.0;
const TLB_ENTRIES: f64 = 64.0;

// miss probabilities for resident working sets
const HOT_L1D: f64 = 0.0005;
const HOT_L1I: f64 = 0.0002;
const HOT_L2: f64 = 0.05;
const HOT_L3: f64 = 0.02;
const HOT_DTLB: f64 = 0.00005;
const HOT_ITLB: f64 = 0.00002;
const LOOP_BRANCH_MISS: f64 = 0.002;
const CALL_BRANCH_MISS: f64 = 0.01;

const BASE_CPI: f64 = 0.4;
const PENALTY_L1D: f64 = 5.0;
const PENALTY_L1I: f64 = 10.0;
const PENALTY_L2: f64 = 12.0;
const PENALTY_L3: f64 = 50.0;
const PENALTY_DTLB: f64 = 10.0;
const PENALTY_ITLB: f64 = 20.0;
const PENALTY_BRANCH: f64 = 15.0;

/// Expected events for one execution of a block.
#[derive(Debug, Clone, Default)]
struct Iteration {
    loads: f64,
    stores: f64,
    branches: f64,
    fp: f64,
    int: f64,
    vec: f64,
    branch_misses: f64,
    l1d_misses: f64,
    l1i_misses: f64,
    l2_misses: f64,
    l3_misses: f64,
    dtlb_misses: f64,
    itlb_misses: f64,
    chain_cycles: f64,
}

impl Iteration {
    fn instructions(&self) -> f64 {
        self.loads + self.stores + self.branches + self.fp + self.int + self.vec
    }

    fn l1d_accesses(&self) -> f64 {
        self.loads + self.stores
    }

    /// Fetch blocks of four instructions.
    fn l1i_accesses(&self) -> f64 {
        (self.instructions() / 4.0).ceil()
    }

    fn l2_accesses(&self) -> f64 {
        self.l1d_misses + self.l1i_misses
    }

    fn cycles(&self) -> f64 {
        let issue = (BASE_CPI * self.instructions()).max(self.chain_cycles);
        issue
            + PENALTY_L1D * self.l1d_misses
            + PENALTY_L1I * self.l1i_misses
            + PENALTY_L2 * self.l2_misses
            + PENALTY_L3 * self.l3_misses
            + PENALTY_DTLB * self.dtlb_misses
            + PENALTY_ITLB * self.itlb_misses
            + PENALTY_BRANCH * self.branch_misses
    }

    /// Fills in the instruction-side and data-side misses of a hot, resident loop.
    fn resident(mut self) -> Self {
        self.l1d_misses = HOT_L1D * self.l1d_accesses();
        self.l1i_misses = HOT_L1I * self.l1i_accesses();
        self.dtlb_misses = HOT_DTLB * self.l1d_accesses();
        self.itlb_misses = HOT_ITLB * self.l1i_accesses();
        self.l2_misses = HOT_L2 * self.l2_accesses();
        self.l3_misses = HOT_L3 * self.l2_misses;
        self
    }

    fn into_profile(self, n0: u64) -> EventProfile {
        let n = n0 as f64;
        let whole = |v: f64| (v * n).round();
        let rows = [
            (EventId::Cycles, self.cycles()),
            (EventId::Instructions, self.instructions()),
            (EventId::BranchInsts, self.branches),
            (EventId::BranchMisses, self.branch_misses),
            (EventId::L1dAccesses, self.l1d_accesses()),
            (EventId::L1dMisses, self.l1d_misses),
            (EventId::L1iAccesses, self.l1i_accesses()),
            (EventId::L1iMisses, self.l1i_misses),
            (EventId::L2Accesses, self.l2_accesses()),
            (EventId::L2Misses, self.l2_misses),
            (EventId::L3Accesses, self.l2_misses),
            (EventId::L3Misses, self.l3_misses),
            (EventId::DtlbAccesses, self.l1d_accesses()),
            (EventId::DtlbMisses, self.dtlb_misses),
            (EventId::ItlbAccesses, self.l1i_accesses()),
            (EventId::ItlbMisses, self.itlb_misses),
            (EventId::LoadInsts, self.loads),
            (EventId::StoreInsts, self.stores),
            (EventId::FpInsts, self.fp),
            (EventId::IntInsts, self.int),
            (EventId::VecInsts, self.vec),
        ];
        EventProfile::new(n0, rows.into_iter().map(|(e, v)| (e, whole(v))).collect::<EventCounts>())
    }
}

fn cap(p: f64) -> f64 {
    p.min(MAX_RATE)
}

fn lg(stride: u64) -> f64 {
    (stride.max(1) as f64).log2().min(12.0)
}

fn memory(stride: u64, buffer: u64) -> Iteration {
    const ACCESSES: f64 = 4.0;
    let b = buffer as f64;
    let mut it = Iteration { loads: ACCESSES, stores: 1.0, branches: 1.0, int: 7.0, ..Default::default() }.resident();
    let p_l1 = if b > L1_BYTES { cap(stride.min(64) as f64 / LINE).max(HOT_L1D) } else { HOT_L1D };
    let r_l2 = if b > L2_BYTES { cap(0.15 + 0.75 * lg(stride) / 12.0) } else { HOT_L2 };
    let r_l3 = if b > L3_BYTES { cap(0.30 + 0.60 * lg(stride) / 12.0) } else { HOT_L3 };
    let p_tlb = if b > TLB_ENTRIES * PAGE { cap(stride.min(4096) as f64 / PAGE).max(HOT_DTLB) } else { HOT_DTLB };
    let stream_misses = ACCESSES * p_l1;
    let other_misses = it.stores * HOT_L1D;
    it.l1d_misses = stream_misses + other_misses;
    it.l2_misses = stream_misses * r_l2 + (other_misses + it.l1i_misses) * HOT_L2;
    it.l3_misses = it.l2_misses * r_l3;
    it.dtlb_misses = ACCESSES * p_tlb + it.stores * HOT_DTLB;
    it.branch_misses = LOOP_BRANCH_MISS * it.branches;
    it
}

fn function(stride: u64, count: u32) -> Iteration {
    let footprint = stride as f64 * count as f64;
    let pages = (footprint / PAGE).ceil();
    let mut it = Iteration { loads: 1.0, stores: 1.0, branches: 3.0, int: 8.0, ..Default::default() }.resident();
    let p_call = cap(footprint / (footprint + L1_BYTES) * (stride.min(64) as f64 / LINE)).max(HOT_L1I);
    let r_l2 = cap(footprint / (footprint + L2_BYTES)).max(HOT_L2);
    let r_l3 = cap(footprint / (footprint + L3_BYTES)).max(HOT_L3);
    let p_itlb = cap(stride.min(4096) as f64 / PAGE * pages / (pages + TLB_ENTRIES)).max(HOT_ITLB);
    let rest = it.l1i_accesses() - 1.0;
    let call_misses = p_call;
    it.l1i_misses = call_misses + rest * HOT_L1I;
    it.l2_misses = call_misses * r_l2 + (it.l1d_misses + rest * HOT_L1I) * HOT_L2;
    it.l3_misses = it.l2_misses * r_l3;
    it.itlb_misses = p_itlb + rest * HOT_ITLB;
    it.branch_misses = CALL_BRANCH_MISS * it.branches;
    it
}

/// Block-level misprediction rate of a branch block with the given threshold.
pub fn branch_miss_rate(threshold: u32) -> f64 {
    threshold.min(1024 - threshold.min(1024)) as f64 / 1024.0
}

fn branch(threshold: u32) -> Iteration {
    let mut it = Iteration { stores: 1.0, branches: 2.0, int: 9.0, ..Default::default() }.resident();
    it.branch_misses = it.branches * branch_miss_rate(threshold);
    it
}

/// Dependent-chain latency in cycles.
pub fn op_latency(kind: ArithKind, op: ArithOp) -> f64 {
    match (kind, op) {
        (ArithKind::Int, ArithOp::Add | ArithOp::Sub) => 1.0,
        (ArithKind::Int, ArithOp::Mul) => 3.0,
        (ArithKind::Int, ArithOp::Div) => 26.0,
        (ArithKind::Fp, ArithOp::Add | ArithOp::Sub) => 3.0,
        (ArithKind::Fp, ArithOp::Mul) => 5.0,
        (ArithKind::Fp, ArithOp::Div) => 22.0,
    }
}

fn arith(kind: ArithKind, mix: &[super::MixTerm]) -> Iteration {
    let ops: f64 = mix.iter().map(|t| t.reps as f64).sum();
    let chain: f64 = mix.iter().map(|t| t.reps as f64 * op_latency(kind, t.op)).sum();
    let (fp, int, vec) = match kind {
        ArithKind::Int => (0.0, ops + 2.0, 0.0),
        ArithKind::Fp => (ops, 2.0, 1.0),
    };
    let mut it = Iteration { stores: 1.0, branches: 1.0, fp, int, vec, chain_cycles: chain, ..Default::default() }.resident();
    it.branch_misses = LOOP_BRANCH_MISS * it.branches;
    it
}

/// Synthetic calibrated profile for a block, per `n0` executions.
pub fn synthetic_profile(params: &BlockParams, n0: u64) -> EventProfile {
    let it = match params {
        BlockParams::Memory(p) => memory(p.stride, p.buffer_bytes),
        BlockParams::Function(p) => function(p.stride, p.function_count),
        BlockParams::Branch(p) => branch(p.threshold),
        BlockParams::Arith(p) => arith(p.kind, &p.mix),
    };
    it.into_profile(n0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockgen::{make_arith_block, make_branch_block, make_function_block, make_memory_block};
    use crate::model::DEFAULT_N0;

    fn rate(p: &EventProfile, num: EventId, den: EventId) -> f64 {
        p.counts.get(num).unwrap() / p.counts.get(den).unwrap()
    }

    #[test]
    fn branch_midpoint_is_half() {
        let p = synthetic_profile(&make_branch_block(512).unwrap().params, DEFAULT_N0);
        assert_eq!(rate(&p, EventId::BranchMisses, EventId::BranchInsts), 0.5);
        let p = synthetic_profile(&make_branch_block(0).unwrap().params, DEFAULT_N0);
        assert_eq!(p.counts.get(EventId::BranchMisses), Some(0.0));
    }

    #[test]
    fn profiles_are_valid_and_integral() {
        for b in [
            make_memory_block(4096, 64 << 20).unwrap(),
            make_function_block(4096, 512).unwrap(),
            make_branch_block(448).unwrap(),
            make_arith_block(&[(ArithOp::Div, 8)]).unwrap(),
        ] {
            let p = synthetic_profile(&b.params, DEFAULT_N0);
            p.validate().unwrap();
            assert!(p.counts.is_complete());
            assert!(p.counts.iter().all(|(_, v)| v.fract() == 0.0));
            let classes: f64 = [
                EventId::LoadInsts,
                EventId::StoreInsts,
                EventId::BranchInsts,
                EventId::FpInsts,
                EventId::IntInsts,
                EventId::VecInsts,
            ]
            .iter()
            .map(|e| p.counts.get(*e).unwrap())
            .sum();
            assert_eq!(classes, p.counts.get(EventId::Instructions).unwrap());
        }
    }

    #[test]
    fn small_buffers_stay_resident() {
        let small = synthetic_profile(&make_memory_block(64, 16 * 1024).unwrap().params, DEFAULT_N0);
        let big = synthetic_profile(&make_memory_block(64, 64 << 20).unwrap().params, DEFAULT_N0);
        assert!(rate(&small, EventId::L1dMisses, EventId::L1dAccesses) < 0.01);
        assert!(rate(&big, EventId::L1dMisses, EventId::L1dAccesses) > 0.5);
    }
}
