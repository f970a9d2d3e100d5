//! Measurement back ends: a deterministic simulated machine and `.counts` import.

mod counts;

pub use counts::{export_counts, import_counts};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blockgen::BlockLibrary;
use crate::error::{Error, Result};
use crate::model::{predict_events, EventId, MeasurementResult, ProxyProgram};

/// Seed used when the caller does not choose one.
pub const DEFAULT_SEED: u64 = 0x5E_ED0F_C0DE;

/// How simulated counts deviate from the linear prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Noise {
    None,
    /// Each event scaled by `1 + d`, `d` uniform on `[-epsilon, epsilon]`.
    Uniform { epsilon: f64 },
    /// Each event scaled by `max(1 + d, 0)`, `d ~ N(0, sigma^2)`.
    Gaussian { sigma: f64 },
    /// Block `j`'s contribution scaled by `1 + sum_k matrix[j][k] * share_k`, where
    /// `share_k` is block `k`'s share of predicted instructions. Indices follow
    /// library order.
    Interaction { matrix: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub noise: Noise,
    pub seed: u64,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self { noise: Noise::None, seed: DEFAULT_SEED }
    }

    pub fn uniform(epsilon: f64, seed: u64) -> Self {
        Self { noise: Noise::Uniform { epsilon }, seed }
    }

    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        Self { noise: Noise::Gaussian { sigma }, seed }
    }

    pub fn interaction(matrix: Vec<Vec<f64>>) -> Self {
        Self { noise: Noise::Interaction { matrix }, seed: DEFAULT_SEED }
    }

    /// Parses and validates a noise model document.
    pub fn from_json(text: &str) -> Result<Self> {
        let m: NoiseModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        crate::io::to_json_string(self)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.noise {
            Noise::None => Ok(()),
            Noise::Uniform { epsilon } if epsilon.is_finite() && (0.0..1.0).contains(epsilon) => Ok(()),
            Noise::Uniform { epsilon } => Err(Error::InvalidParameter(format!("uniform noise bound must be in [0, 1), got {epsilon}"))),
            Noise::Gaussian { sigma } if sigma.is_finite() && *sigma >= 0.0 => Ok(()),
            Noise::Gaussian { sigma } => Err(Error::InvalidParameter(format!("gaussian sigma must be >= 0, got {sigma}"))),
            Noise::Interaction { matrix } => {
                if matrix.iter().flatten().any(|v| !v.is_finite() || *v < -0.5) {
                    return Err(Error::InvalidParameter("interaction entries must be finite and >= -0.5".into()));
                }
                Ok(())
            }
        }
    }

    /// Simulated counts of `program`. Pure: the same program, library and model
    /// always give the same counts; the random stream is keyed by the seed and the
    /// program's content.
    pub fn simulate(&self, program: &ProxyProgram, library: &BlockLibrary) -> Result<MeasurementResult> {
        self.validate()?;
        let mut result = match &self.noise {
            Noise::None => return predict_events(program, library),
            Noise::Interaction { matrix } => return interact(program, library, matrix),
            _ => predict_events(program, library)?,
        };
        let mut rng = self.rng_for(program);
        let gaussian = match self.noise {
            Noise::Gaussian { sigma } => Some(Normal::new(0.0, sigma).expect("validated sigma")),
            _ => None,
        };
        for event in EventId::ALL {
            let factor = match (&self.noise, &gaussian) {
                (Noise::Uniform { epsilon }, _) => 1.0 + rng.random_range(-1.0..=1.0) * epsilon,
                (_, Some(normal)) => (1.0 + normal.sample(&mut rng)).max(0.0),
                _ => unreachable!(),
            };
            if let Some(v) = result.counts.get(event) {
                result.counts.insert(event, v * factor);
            }
        }
        clamp_misses(&mut result);
        Ok(result)
    }

    fn rng_for(&self, program: &ProxyProgram) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(program.to_json().as_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::uniform(0.03, DEFAULT_SEED)
    }
}

fn clamp_misses(result: &mut MeasurementResult) {
    for (miss, access) in EventId::MISS_ACCESS_PAIRS {
        if let (Some(m), Some(a)) = (result.get(miss), result.get(access)) {
            if m > a {
                result.counts.insert(miss, a);
            }
        }
    }
}

fn interact(program: &ProxyProgram, library: &BlockLibrary, matrix: &[Vec<f64>]) -> Result<MeasurementResult> {
    let m = library.len();
    if matrix.len() != m || matrix.iter().any(|r| r.len() != m) {
        return Err(Error::InvalidParameter(format!("interaction matrix must be {m}x{m}")));
    }
    let mut share = vec![0.0; m];
    for e in program.entries() {
        let j = library.index_of(&e.block).ok_or_else(|| Error::UnresolvedBlock(e.block.clone()))?;
        let p = library.blocks()[j].profile.as_ref().ok_or_else(|| Error::Uncalibrated(e.block.clone()))?;
        share[j] += p.counts.get_or_zero(EventId::Instructions) * e.executions as f64;
    }
    let total: f64 = share.iter().sum();
    if total > 0.0 {
        share.iter_mut().for_each(|s| *s /= total);
    }
    let mut scaled = library.clone();
    for e in program.entries() {
        let j = library.index_of(&e.block).expect("resolved above");
        let k: f64 = matrix[j].iter().zip(&share).map(|(a, s)| a * s).sum();
        if k != 0.0 {
            let p = scaled.blocks_mut()[j].profile.as_mut().expect("checked above");
            p.counts = p.counts.scale(1.0 + k);
        }
    }
    let mut result = predict_events(program, &scaled)?;
    clamp_misses(&mut result);
    Ok(result)
}

/// A source of whole-program event counts.
pub trait Measurer {
    /// Events this back end can report.
    fn events(&self) -> &[EventId];

    fn measure(&self, program: &ProxyProgram, library: &BlockLibrary) -> Result<MeasurementResult>;
}

/// The simulated machine: linear prediction perturbed by a [`NoiseModel`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulatedMeasurer {
    pub model: NoiseModel,
}

impl SimulatedMeasurer {
    pub fn new(model: NoiseModel) -> Self {
        Self { model }
    }
}

impl Measurer for SimulatedMeasurer {
    fn events(&self) -> &[EventId] {
        &EventId::ALL
    }

    fn measure(&self, program: &ProxyProgram, library: &BlockLibrary) -> Result<MeasurementResult> {
        self.model.simulate(program, library)
    }
}
