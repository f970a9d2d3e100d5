//! C source emission. Block interiors are kept alive with empty `asm volatile`
//! barriers and volatile sinks, so the output stays meaningful under any
//! optimization level while remaining plain C for gcc and clang.

use std::fmt::Write;

use super::{ArithKind, ArithOp, ArithParams, BlockLibrary, BlockParams, BlockSpec, FunctionParams};
use crate::error::{Error, Result};
use crate::model::ProxyProgram;

/// Seed of the in-source linear-congruential generator used by branch blocks.
pub const LCG_SEED: u64 = 0x2545_F491_4F6C_DD1D;
pub const LCG_MUL: u64 = 6_364_136_223_846_793_005;
pub const LCG_INC: u64 = 1_442_695_040_888_963_407;

const PRELUDE: &str = "\
#define _POSIX_C_SOURCE 199309L
#include <stdint.h>
#include <stdio.h>
#include <time.h>

#define PS_KEEP(x) __asm__ volatile(\"\" : \"+r\"(x))
#define PS_KEEP_MEM(x) __asm__ volatile(\"\" : \"+m\"(x))

typedef double ps_v2df __attribute__((vector_size(16)));

static volatile uint64_t ps_sink;
static volatile double ps_fsink;
static volatile uint64_t ps_divisor = 3;
static volatile uint64_t ps_seed = 0x9E3779B97F4A7C15ULL;
static volatile double ps_fdivisor = 1.0000001;
static volatile double ps_fseed = 1.5;
static uint64_t ps_fn_acc;
";

/// Renders one block: a scoped exterior loop running `iterations` times around the
/// family's interior. Globals it references are emitted by [`render_program`].
pub fn render_block(spec: &BlockSpec, iterations: u64) -> Result<String> {
    spec.params.validate()?;
    let mut s = String::new();
    let id = &spec.id;
    writeln!(s, "    /* block {id}: {} {} */", spec.family(), spec.params.describe()).unwrap();
    s.push_str("    {\n");
    match &spec.params {
        BlockParams::Memory(p) => {
            s.push_str("        volatile uint8_t *buf = ps_buffer;\n");
            s.push_str("        uint64_t off = 0;\n        uint64_t acc = 0;\n");
            open_loop(&mut s, iterations);
            for _ in 0..4 {
                writeln!(
                    s,
                    "            acc += buf[off]; off += {}ULL; if (off >= {}ULL) off -= {}ULL;",
                    p.stride, p.buffer_bytes, p.buffer_bytes
                )
                .unwrap();
            }
            s.push_str("            ps_sink = acc;\n");
            close_loop(&mut s);
        }
        BlockParams::Function(p) => {
            s.push_str("        uint32_t k = 0;\n");
            open_loop(&mut s, iterations);
            writeln!(s, "            ps_fnt_{id}[k]();").unwrap();
            writeln!(s, "            if (++k == {}u) k = 0;", p.function_count).unwrap();
            s.push_str("            ps_sink = k;\n");
            close_loop(&mut s);
        }
        BlockParams::Branch(p) => {
            writeln!(s, "        uint64_t lcg = 0x{LCG_SEED:016X}ULL;").unwrap();
            s.push_str("        uint64_t taken = 0, not_taken = 0;\n");
            open_loop(&mut s, iterations);
            writeln!(s, "            lcg = lcg * {LCG_MUL}ULL + {LCG_INC}ULL;").unwrap();
            s.push_str("            uint64_t r = (lcg >> 33) % 1025ULL;\n");
            writeln!(
                s,
                "            if (r > {}ULL) {{ __asm__ volatile(\"\"); taken += 1; }} else {{ __asm__ volatile(\"\"); not_taken += 1; }}",
                p.threshold
            )
            .unwrap();
            s.push_str("            ps_sink = taken ^ not_taken;\n");
            close_loop(&mut s);
        }
        BlockParams::Arith(p) => render_arith(&mut s, p, iterations),
    }
    s.push_str("    }\n");
    Ok(s)
}

fn open_loop(s: &mut String, iterations: u64) {
    writeln!(s, "        for (uint64_t ps_iter = 0; ps_iter < {iterations}ULL; ++ps_iter) {{").unwrap();
}

fn close_loop(s: &mut String) {
    s.push_str("        }\n");
}

fn render_arith(s: &mut String, p: &ArithParams, iterations: u64) {
    match p.kind {
        ArithKind::Int => {
            s.push_str("        uint64_t acc = ps_seed;\n        uint64_t dv = ps_divisor;\n");
            open_loop(s, iterations);
            for t in &p.mix {
                let stmt = match t.op {
                    ArithOp::Add => "acc = acc + 0x9E3779B9ULL;",
                    ArithOp::Sub => "acc = acc - 0x7F4A7C15ULL;",
                    ArithOp::Mul => "acc = acc * 0x2545F491ULL;",
                    ArithOp::Div => "acc = acc / dv;",
                };
                for _ in 0..t.reps {
                    writeln!(s, "            {stmt} PS_KEEP(acc);").unwrap();
                }
            }
            s.push_str("            ps_sink = acc;\n");
            close_loop(s);
        }
        ArithKind::Fp => {
            s.push_str("        double acc = ps_fseed;\n        double dv = ps_fdivisor;\n");
            s.push_str("        ps_v2df vacc = {0.0, 0.0};\n        const ps_v2df vstep = {0.5, 0.25};\n");
            open_loop(s, iterations);
            for t in &p.mix {
                let stmt = match t.op {
                    ArithOp::Add => "acc = acc + 1.25;",
                    ArithOp::Sub => "acc = acc - 0.75;",
                    ArithOp::Mul => "acc = acc * 1.0000001;",
                    ArithOp::Div => "acc = acc / dv;",
                };
                for _ in 0..t.reps {
                    writeln!(s, "            {stmt} PS_KEEP_MEM(acc);").unwrap();
                }
            }
            s.push_str("            vacc = vacc + vstep; PS_KEEP_MEM(vacc);\n");
            s.push_str("            ps_fsink = acc;\n");
            close_loop(s);
            s.push_str("        ps_fsink = vacc[0] + vacc[1];\n");
        }
    }
}

/// Function definitions and call table for a function-access block: `count`
/// functions, each aligned to `stride` bytes, listed in address order.
fn render_functions(s: &mut String, id: &str, p: &FunctionParams) {
    writeln!(s, "/* {id}: {} functions at {}-byte stride */", p.function_count, p.stride).unwrap();
    for k in 0..p.function_count {
        writeln!(
            s,
            "__attribute__((noinline, aligned({}))) static void ps_fn_{id}_{k}(void) {{ ps_fn_acc += 1; ps_fn_acc ^= {k}u; ps_fn_acc += 3; ps_fn_acc ^= 5; }}",
            p.stride
        )
        .unwrap();
    }
    writeln!(s, "static void (*const ps_fnt_{id}[{}])(void) = {{", p.function_count).unwrap();
    for k in 0..p.function_count {
        writeln!(s, "    ps_fn_{id}_{k},").unwrap();
    }
    s.push_str("};\n\n");
}

/// Renders a whole proxy program as one C translation unit: globals, function
/// blocks' definitions, then `main` running every block in entry order between
/// two clock reads.
pub fn render_program(program: &ProxyProgram, library: &BlockLibrary) -> Result<String> {
    let specs = program
        .entries()
        .iter()
        .map(|e| library.get(&e.block).map(|b| (b, e.executions)).ok_or_else(|| Error::UnresolvedBlock(e.block.clone())))
        .collect::<Result<Vec<_>>>()?;

    let mut s = String::new();
    s.push_str("/* proxy benchmark generated by proxysynth */\n");
    s.push_str(PRELUDE);
    let buffer = specs
        .iter()
        .filter_map(|(b, _)| match &b.params {
            BlockParams::Memory(p) => Some(p.buffer_bytes),
            _ => None,
        })
        .max();
    if let Some(bytes) = buffer {
        writeln!(s, "static uint8_t ps_buffer[{bytes}ULL];").unwrap();
    }
    s.push('\n');
    for (b, _) in &specs {
        if let BlockParams::Function(p) = &b.params {
            render_functions(&mut s, &b.id, p);
        }
    }
    s.push_str("static double ps_now(void) {\n");
    s.push_str("    struct timespec ts;\n    clock_gettime(CLOCK_MONOTONIC, &ts);\n");
    s.push_str("    return (double)ts.tv_sec + (double)ts.tv_nsec * 1e-9;\n}\n\n");
    s.push_str("int main(void) {\n    double ps_t0 = ps_now();\n");
    for (b, n) in &specs {
        s.push_str(&render_block(b, *n)?);
    }
    s.push_str("    double ps_t1 = ps_now();\n");
    s.push_str("    printf(\"elapsed_seconds=%.6f\\n\", ps_t1 - ps_t0);\n");
    s.push_str("    return 0;\n}\n");
    Ok(s)
}
