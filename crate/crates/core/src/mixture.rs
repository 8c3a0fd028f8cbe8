//! The hyperparameter-marginalised predictive posterior as a uniform mixture
//! of conditioned GPs.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::entropy::MixtureAtPoint;
use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::gp::{Dataset, GpState};
use crate::kernels::KernelSpec;
use crate::seeding::derive_seed;

pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct MixturePosterior {
    components: Vec<GpState>,
}

impl MixturePosterior {
    pub fn new(components: Vec<GpState>) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(Error::Input("a mixture needs at least one component".into()));
        };
        if components
            .iter()
            .any(|c| c.dataset() != first.dataset() || c.noise_var() != first.noise_var())
        {
            return Err(Error::Input(
                "mixture components must share the dataset and noise variance".into(),
            ));
        }
        Ok(MixturePosterior { components })
    }

    /// Conditions one GP per hyperparameter vector `[variance, ℓ₁, …]`.
    pub fn from_draws(
        dataset: &Dataset,
        template: &KernelSpec,
        noise_var: f64,
        mean_const: f64,
        draws: &[Vec<f64>],
    ) -> Result<Self> {
        let components = draws
            .iter()
            .map(|theta| {
                GpState::condition(
                    dataset.clone(),
                    template.with_hyperparameters(theta)?,
                    noise_var,
                    mean_const,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(components)
    }

    pub fn components(&self) -> &[GpState] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Component predictive means and variances at `x`.
    pub fn predictions(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut means = Vec::with_capacity(self.len());
        let mut vars = Vec::with_capacity(self.len());
        for c in &self.components {
            let (m, v) = c.predict(x)?;
            means.push(m);
            vars.push(v);
        }
        Ok((means, vars))
    }

    /// The mixture at `x` in the form the entropy estimators take. Variances
    /// are floored at [`VARIANCE_FLOOR`] so noise-free interpolation at a
    /// training input still has a finite entropy.
    pub fn at_point(&self, x: &[f64]) -> Result<MixtureAtPoint> {
        let (m, mut v) = self.predictions(x)?;
        v.iter_mut().for_each(|s| *s = s.max(VARIANCE_FLOOR));
        MixtureAtPoint::new(m, v)
    }

    /// Mean and variance of the mixture at `x`.
    pub fn moments(&self, x: &[f64]) -> Result<(f64, f64)> {
        let (m, v) = self.predictions(x)?;
        Ok(moments_of(&m, &v))
    }

    /// `q` independent draws from the mixture at `x`.
    pub fn sample(&self, x: &[f64], q: usize, seed: u64) -> Result<Vec<f64>> {
        let (m, v) = self.predictions(x)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(sample_from(&m, &v, q, &mut rng))
    }

    /// Pointwise empirical credible band at level `alpha`.
    pub fn credible_region(
        &self,
        test_points: &[Vec<f64>],
        q: usize,
        alpha: f64,
        seed: u64,
    ) -> Result<CredibleBand> {
        let (lo_idx, hi_idx) = percentile_indices(q, alpha)?;
        let mut band = CredibleBand {
            points: test_points.to_vec(),
            mean: Vec::with_capacity(test_points.len()),
            lower: Vec::with_capacity(test_points.len()),
            upper: Vec::with_capacity(test_points.len()),
            alpha,
            samples_per_point: q,
        };
        for (w, x) in test_points.iter().enumerate() {
            let mut draws = self.sample(x, q, derive_seed(seed, w as u64))?;
            draws.sort_by(f64::total_cmp);
            band.mean.push(self.moments(x)?.0);
            band.lower.push(draws[lo_idx - 1]);
            band.upper.push(draws[hi_idx - 1]);
        }
        Ok(band)
    }
}

/// `(1/S) Σ μ_s` and `(1/S) Σ σ_s² + (1/S) Σ (μ_s − mean)²`.
pub fn moments_of(means: &[f64], vars: &[f64]) -> (f64, f64) {
    let s = means.len() as f64;
    let mean = means.iter().sum::<f64>() / s;
    let within = vars.iter().sum::<f64>() / s;
    let spread = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / s;
    (mean, within + spread)
}

/// Draws a component uniformly, then a Gaussian value from it.
pub fn sample_from(means: &[f64], vars: &[f64], q: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..q)
        .map(|_| {
            let s = rng.random_range(0..means.len());
            let u: f64 = StandardNormal.sample(rng);
            means[s] + vars[s].sqrt() * u
        })
        .collect()
}

/// One-based order-statistic indices `⌈(α/2)Q⌉` and `⌈(1−α/2)Q⌉`.
pub fn percentile_indices(q: usize, alpha: f64) -> Result<(usize, usize)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Input(format!("credible level alpha must lie in (0, 1), got {alpha}")));
    }
    let qf = q as f64;
    if q == 0 || 0.5 * alpha * qf < 1.0 {
        return Err(Error::Input(format!(
            "{q} samples per point are too few for alpha = {alpha}; need at least {}",
            (2.0 / alpha).ceil()
        )));
    }
    let lo = ((0.5 * alpha * qf).ceil() as usize).clamp(1, q);
    let hi = (((1.0 - 0.5 * alpha) * qf).ceil() as usize).clamp(1, q);
    Ok((lo, hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CredibleBand {
    pub points: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub alpha: f64,
    pub samples_per_point: usize,
}

impl CredibleBand {
    /// Writes `x1,x2,…,mean,lower,upper` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let dim = self.points.first().map_or(0, Vec::len);
        let mut out = String::new();
        let mut header: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
        header.extend(["mean", "lower", "upper"].map(String::from));
        out.push_str(&header.join(","));
        out.push('\n');
        for (i, x) in self.points.iter().enumerate() {
            let mut row: Vec<String> = x.iter().map(|&v| fmt_f64(v)).collect();
            row.extend([self.mean[i], self.lower[i], self.upper[i]].map(fmt_f64));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}
