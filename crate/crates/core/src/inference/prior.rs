use rand::RngCore;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PriorDistribution {
    /// Shape/rate parameterisation: density ∝ θ^(shape−1) e^(−rate·θ).
    Gamma { shape: f64, rate: f64 },
    Uniform { low: f64, high: f64 },
}

/// Map from the unconstrained line onto the prior support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// θ = e^u, for positive supports.
    Log,
    /// θ = low + (high − low)·σ(u), for bounded supports.
    LogitAffine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorEntry {
    pub name: String,
    pub distribution: PriorDistribution,
    pub transform: Transform,
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `log σ(u)` without overflow.
fn log_sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        -(-u).exp().ln_1p()
    } else {
        u - u.exp().ln_1p()
    }
}

impl PriorEntry {
    pub fn gamma(name: &str, shape: f64, rate: f64) -> Self {
        PriorEntry {
            name: name.to_string(),
            distribution: PriorDistribution::Gamma { shape, rate },
            transform: Transform::Log,
        }
    }

    pub fn uniform(name: &str, low: f64, high: f64) -> Self {
        PriorEntry {
            name: name.to_string(),
            distribution: PriorDistribution::Uniform { low, high },
            transform: Transform::LogitAffine,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.distribution, self.transform) {
            (PriorDistribution::Gamma { shape, rate }, Transform::Log) => {
                if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
                    return Err(Error::Config(format!(
                        "prior {}: gamma parameters must be positive",
                        self.name
                    )));
                }
            }
            (PriorDistribution::Uniform { low, high }, Transform::LogitAffine) => {
                if !(low < high && low.is_finite() && high.is_finite()) {
                    return Err(Error::Config(format!(
                        "prior {}: uniform bounds must satisfy low < high",
                        self.name
                    )));
                }
            }
            _ => {
                return Err(Error::Config(format!(
                    "prior {}: transform {:?} does not map onto the support of {:?}",
                    self.name, self.transform, self.distribution
                )))
            }
        }
        Ok(())
    }

    pub fn constrain(&self, u: f64) -> f64 {
        match (self.transform, self.distribution) {
            (Transform::LogitAffine, PriorDistribution::Uniform { low, high }) => {
                low + (high - low) * sigmoid(u)
            }
            _ => u.exp(),
        }
    }

    pub fn unconstrain(&self, theta: f64) -> f64 {
        match (self.transform, self.distribution) {
            (Transform::LogitAffine, PriorDistribution::Uniform { low, high }) => {
                let p = (theta - low) / (high - low);
                (p / (1.0 - p)).ln()
            }
            _ => theta.ln(),
        }
    }

    /// `dθ/du`.
    pub fn dconstrain(&self, u: f64) -> f64 {
        match (self.transform, self.distribution) {
            (Transform::LogitAffine, PriorDistribution::Uniform { low, high }) => {
                let s = sigmoid(u);
                (high - low) * s * (1.0 - s)
            }
            _ => u.exp(),
        }
    }

    /// `log |dθ/du|`.
    pub fn log_jacobian(&self, u: f64) -> f64 {
        match (self.transform, self.distribution) {
            (Transform::LogitAffine, PriorDistribution::Uniform { low, high }) => {
                (high - low).ln() + log_sigmoid(u) + log_sigmoid(-u)
            }
            _ => u,
        }
    }

    /// `d/du log |dθ/du|`.
    pub fn dlog_jacobian(&self, u: f64) -> f64 {
        match self.transform {
            Transform::LogitAffine => 1.0 - 2.0 * sigmoid(u),
            Transform::Log => 1.0,
        }
    }

    /// Prior log density at a constrained value; `-∞` outside the support.
    pub fn log_pdf(&self, theta: f64) -> f64 {
        match self.distribution {
            PriorDistribution::Gamma { shape, rate } => {
                if theta <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * theta.ln() - rate * theta
            }
            PriorDistribution::Uniform { low, high } => {
                if theta < low || theta > high {
                    f64::NEG_INFINITY
                } else {
                    -(high - low).ln()
                }
            }
        }
    }

    pub fn dlog_pdf(&self, theta: f64) -> f64 {
        match self.distribution {
            PriorDistribution::Gamma { shape, rate } => (shape - 1.0) / theta - rate,
            PriorDistribution::Uniform { .. } => 0.0,
        }
    }

    pub fn in_support(&self, theta: f64) -> bool {
        match self.distribution {
            PriorDistribution::Gamma { .. } => theta > 0.0 && theta.is_finite(),
            PriorDistribution::Uniform { low, high } => theta > low && theta < high,
        }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        match self.distribution {
            PriorDistribution::Gamma { shape, rate } => Gamma::new(shape, 1.0 / rate)
                .expect("validated gamma parameters")
                .sample(rng),
            PriorDistribution::Uniform { low, high } => {
                low + (high - low) * rand::Rng::random::<f64>(rng)
            }
        }
    }
}

/// Independent priors over the kernel hyperparameters `[variance, ℓ₁, …]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub entries: Vec<PriorEntry>,
}

impl PriorSpec {
    pub fn new(entries: Vec<PriorEntry>) -> Result<Self> {
        let spec = PriorSpec { entries };
        spec.validate()?;
        Ok(spec)
    }

    /// Priors of the two-input activity-coefficient surrogate: variance,
    /// composition length scale and temperature length scale.
    pub fn case_study() -> Self {
        PriorSpec {
            entries: vec![
                PriorEntry::gamma("theta1", 2.0, 1.0),
                PriorEntry::uniform("theta2", 0.1, 50.0),
                PriorEntry::gamma("theta3", 4.0, 2.0),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Config("prior specification is empty".into()));
        }
        self.entries.iter().try_for_each(PriorEntry::validate)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name.as_str()).collect()
    }

    pub fn constrain(&self, u: &[f64]) -> Vec<f64> {
        self.entries.iter().zip(u).map(|(e, &ui)| e.constrain(ui)).collect()
    }

    pub fn unconstrain(&self, theta: &[f64]) -> Vec<f64> {
        self.entries.iter().zip(theta).map(|(e, &t)| e.unconstrain(t)).collect()
    }

    /// Independent draw from the priors, returned in unconstrained space.
    pub fn sample_unconstrained(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| {
                let mut theta = e.sample(rng);
                // A draw exactly on a bound has no finite preimage.
                while !e.in_support(theta) {
                    theta = e.sample(rng);
                }
                e.unconstrain(theta)
            })
            .collect()
    }
}
