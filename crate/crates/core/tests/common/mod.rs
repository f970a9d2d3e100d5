#![allow(dead_code)]

use proxysynth::blockgen::BlockLibrary;
use proxysynth::model::{builtin_metrics, compute_all_metrics, predict_events, EventId, ProxyProgram, TargetMetrics};
use rand::seq::SliceRandom;
use rand::Rng;

/// A random program over `lib`: 2 to 8 distinct blocks, counts in `[lo, hi]`.
pub fn random_program(rng: &mut impl Rng, lib: &BlockLibrary, lo: u64, hi: u64) -> ProxyProgram {
    let mut ids: Vec<&str> = lib.ids().collect();
    ids.shuffle(rng);
    let k = rng.random_range(2..=8);
    ProxyProgram::from_entries(ids[..k].iter().map(|id| (*id, rng.random_range(lo..=hi))))
}

/// A hidden reference program whose 14 metrics are all strictly positive, together
/// with those metrics as targets and its predicted instruction total.
pub fn hidden_reference(rng: &mut impl Rng, lib: &BlockLibrary) -> (ProxyProgram, TargetMetrics, f64) {
    let defs = builtin_metrics();
    loop {
        let p = random_program(rng, lib, 100_000, 5_000_000);
        let r = predict_events(&p, lib).unwrap();
        let Ok(m) = compute_all_metrics(&r, &defs) else { continue };
        if m.values().all(|v| *v > 0.0) {
            let ins = r.get(EventId::Instructions).unwrap();
            return (p, TargetMetrics::new(m), ins);
        }
    }
}

/// Distance in units in the last place between two nonnegative finite doubles.
pub fn ulps(a: f64, b: f64) -> u64 {
    assert!(a >= 0.0 && b >= 0.0, "{a} {b}");
    a.to_bits().abs_diff(b.to_bits())
}
