//! Differential entropy of uniformly weighted univariate Gaussian mixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// `½ log(2πe σ²)`.
pub fn gaussian_entropy(var: f64) -> Result<f64> {
    if !(var > 0.0 && var.is_finite()) {
        return Err(Error::Domain(format!("variance must be positive, got {var}")));
    }
    Ok(0.5 * (LN_2PI + 1.0 + var.ln()))
}

/// A mixture `(1/S) Σ N(μ_s, σ_s²)` at one input location.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureAtPoint {
    means: Vec<f64>,
    variances: Vec<f64>,
}

impl MixtureAtPoint {
    pub fn new(means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if means.is_empty() || means.len() != variances.len() {
            return Err(Error::Input(format!(
                "mixture needs matching, nonempty means and variances ({} vs {})",
                means.len(),
                variances.len()
            )));
        }
        if let Some(v) = variances.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Domain(format!("component variance must be positive, got {v}")));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::Domain("component means must be finite".into()));
        }
        Ok(MixtureAtPoint { means, variances })
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// `log p(x)`, evaluated with a log-sum-exp over components.
    pub fn log_density(&self, x: f64) -> f64 {
        let logs = self
            .means
            .iter()
            .zip(&self.variances)
            .map(|(m, v)| log_normal(x, *m, *v));
        log_sum_exp(logs) - (self.len() as f64).ln()
    }
}

fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Derivatives of `log p` at `x` up to fourth order, from the Hermite form of
/// the component derivatives: `N⁽ʳ⁾ = (−1)ʳ Heᵣ(z) N / σʳ`.
fn log_density_derivatives(mix: &MixtureAtPoint, x: f64) -> (f64, [f64; 4]) {
    let logs: Vec<f64> = mix
        .means
        .iter()
        .zip(&mix.variances)
        .map(|(m, v)| log_normal(x, *m, *v))
        .collect();
    let lse = log_sum_exp(logs.iter().copied());
    let mut m = [0.0; 4];
    for ((mean, var), l) in mix.means.iter().zip(&mix.variances).zip(&logs) {
        let w = (l - lse).exp();
        if w == 0.0 {
            continue;
        }
        let sd = var.sqrt();
        let z = (x - mean) / sd;
        let z2 = z * z;
        m[0] -= w * z / sd;
        m[1] += w * (z2 - 1.0) / var;
        m[2] -= w * (z2 * z - 3.0 * z) / (var * sd);
        m[3] += w * (z2 * z2 - 6.0 * z2 + 3.0) / (var * var);
    }
    let [m1, m2, m3, m4] = m;
    let g = [
        m1,
        m2 - m1 * m1,
        m3 - 3.0 * m1 * m2 + 2.0 * m1.powi(3),
        m4 - 4.0 * m1 * m3 - 3.0 * m2 * m2 + 12.0 * m1 * m1 * m2 - 6.0 * m1.powi(4),
    ];
    (lse - (mix.len() as f64).ln(), g)
}

/// Entropy from a Taylor expansion of `log p` about every component mean,
/// truncated at even order `2` or `4`.
pub fn taylor_entropy(mix: &MixtureAtPoint, order: usize) -> Result<f64> {
    if order != 2 && order != 4 {
        return Err(Error::Config(format!(
            "Taylor order {order} is not supported; use 2 or 4"
        )));
    }
    let total: f64 = mix
        .means
        .iter()
        .zip(&mix.variances)
        .map(|(&mean, &var)| {
            let (logp, g) = log_density_derivatives(mix, mean);
            let mut term = logp + 0.5 * g[1] * var;
            if order == 4 {
                term += g[3] * 3.0 * var * var / 24.0;
            }
            term
        })
        .sum();
    Ok(-total / mix.len() as f64)
}

/// Lower bound `−(1/S) Σ_s log[(1/S) Σ_s' N(μ_s; μ_s', σ_s² + σ_s'²)]`.
pub fn entropy_lower_bound(mix: &MixtureAtPoint) -> f64 {
    let s = mix.len() as f64;
    let total: f64 = mix
        .means
        .iter()
        .zip(&mix.variances)
        .map(|(&mi, &vi)| {
            let overlaps = mix
                .means
                .iter()
                .zip(&mix.variances)
                .map(move |(&mj, &vj)| log_normal(mi, mj, vi + vj));
            log_sum_exp(overlaps) - s.ln()
        })
        .sum();
    -total / s
}

/// Monte Carlo entropy estimate and its standard error.
pub fn mc_entropy(mix: &MixtureAtPoint, n_draws: usize, seed: u64) -> Result<(f64, f64)> {
    if n_draws < 1000 {
        return Err(Error::Input(format!(
            "at least 1000 draws are required, got {n_draws}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sds: Vec<f64> = mix.variances.iter().map(|v| v.sqrt()).collect();
    let consts: Vec<f64> = mix
        .variances
        .iter()
        .map(|v| -0.5 * (LN_2PI + v.ln()))
        .collect();
    let inv2v: Vec<f64> = mix.variances.iter().map(|v| 0.5 / v).collect();
    let ln_s = (mix.len() as f64).ln();
    let mut logs = vec![0.0; mix.len()];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n_draws {
        let k = rng.random_range(0..mix.len());
        let z: f64 = StandardNormal.sample(&mut rng);
        let x = mix.means[k] + sds[k] * z;
        let mut max = f64::NEG_INFINITY;
        for (j, l) in logs.iter_mut().enumerate() {
            let d = x - mix.means[j];
            *l = consts[j] - d * d * inv2v[j];
            max = max.max(*l);
        }
        let acc: f64 = logs.iter().map(|l| (l - max).exp()).sum();
        let neg_logp = -(max + acc.ln() - ln_s);
        sum += neg_logp;
        sum_sq += neg_logp * neg_logp;
    }
    let n = n_draws as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok((mean, (var / n).sqrt()))
}

/// Negative second-order Taylor entropy.
pub fn information(mix: &MixtureAtPoint) -> f64 {
    -taylor_entropy(mix, 2).expect("order 2 is supported")
}

/// The entropy estimator used by the acquisition step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyEstimator {
    #[default]
    Taylor2,
    Taylor4,
    LowerBound,
}

impl EntropyEstimator {
    pub fn evaluate(self, mix: &MixtureAtPoint) -> f64 {
        match self {
            EntropyEstimator::Taylor2 => taylor_entropy(mix, 2).expect("supported order"),
            EntropyEstimator::Taylor4 => taylor_entropy(mix, 4).expect("supported order"),
            EntropyEstimator::LowerBound => entropy_lower_bound(mix),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mix(means: &[f64], vars: &[f64]) -> MixtureAtPoint {
        MixtureAtPoint::new(means.to_vec(), vars.to_vec()).unwrap()
    }

    #[test]
    fn gaussian_entropy_values() {
        assert_relative_eq!(gaussian_entropy(1.0).unwrap(), 1.418939, epsilon = 1e-6);
        let e = std::f64::consts::E;
        assert_relative_eq!(
            gaussian_entropy(e * e).unwrap(),
            gaussian_entropy(1.0).unwrap() + 1.0,
            epsilon = 1e-14
        );
        let zero = 1.0 / (2.0 * std::f64::consts::PI * e);
        assert!(gaussian_entropy(zero).unwrap().abs() < 1e-15);
        assert!(matches!(gaussian_entropy(0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn single_component_taylor_is_exact() {
        for var in [1e-4, 0.3, 1.0, 17.0] {
            let m = mix(&[2.5], &[var]);
            let exact = gaussian_entropy(var).unwrap();
            assert!((taylor_entropy(&m, 2).unwrap() - exact).abs() < 1e-12);
            assert!((taylor_entropy(&m, 4).unwrap() - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicate_components_collapse() {
        let one = mix(&[0.4], &[0.7]);
        let two = mix(&[0.4, 0.4], &[0.7, 0.7]);
        assert_relative_eq!(taylor_entropy(&one, 2).unwrap(), taylor_entropy(&two, 2).unwrap(), epsilon = 1e-12);
        assert_relative_eq!(entropy_lower_bound(&one), entropy_lower_bound(&two), epsilon = 1e-12);
    }

    #[test]
    fn far_separated_pair() {
        let m = mix(&[0.0, 100.0], &[1.0, 1.0]);
        let expected = 1.418939 + 2f64.ln();
        assert!((taylor_entropy(&m, 2).unwrap() - expected).abs() < 0.01);
        let (mc, _) = mc_entropy(&m, 200_000, 3).unwrap();
        assert!((mc - 2.1121).abs() < 0.01);
    }

    #[test]
    fn lower_bound_self_overlap() {
        let var = 0.6;
        let expected = 0.5 * (4.0 * std::f64::consts::PI * var).ln();
        assert_relative_eq!(entropy_lower_bound(&mix(&[3.0], &[var])), expected, epsilon = 1e-14);
    }

    #[test]
    fn mc_matches_single_gaussian() {
        let m = mix(&[0.0], &[2.0]);
        let (est, se) = mc_entropy(&m, 100_000, 9).unwrap();
        assert!((est - gaussian_entropy(2.0).unwrap()).abs() < 3.0 * se);
        assert!(mc_entropy(&m, 10, 0).is_err());
    }

    #[test]
    fn information_is_negative_entropy() {
        assert_relative_eq!(information(&mix(&[0.0], &[1.0])), -1.418939, epsilon = 1e-6);
        let m = mix(&[0.0, 1.0, -0.5], &[0.3, 0.8, 1.1]);
        assert_eq!(information(&m), -taylor_entropy(&m, 2).unwrap());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let m = mix(&[0.0, 1.3, -0.7], &[0.5, 0.2, 1.4]);
        let x = 0.35;
        let (_, g) = log_density_derivatives(&m, x);
        let f = |t: f64| m.log_density(t);
        let h = 1e-4;
        let d1 = (f(x + h) - f(x - h)) / (2.0 * h);
        let d2 = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
        let h = 1e-2;
        let d3 = (f(x + 2.0 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2.0 * h)) / (2.0 * h.powi(3));
        let d4 = (f(x + 2.0 * h) - 4.0 * f(x + h) + 6.0 * f(x) - 4.0 * f(x - h) + f(x - 2.0 * h)) / h.powi(4);
        assert_relative_eq!(g[0], d1, max_relative = 1e-5);
        assert_relative_eq!(g[1], d2, max_relative = 1e-4);
        assert_relative_eq!(g[2], d3, max_relative = 1e-3);
        assert_relative_eq!(g[3], d4, max_relative = 1e-2);
    }

    #[test]
    fn unsupported_order() {
        assert!(matches!(taylor_entropy(&mix(&[0.0], &[1.0]), 3), Err(Error::Config(_))));
    }

    #[test]
    fn underflow_safe() {
        let m = mix(&[0.0, 1e4], &[1e-6, 1e-6]);
        assert!(taylor_entropy(&m, 2).unwrap().is_finite());
        assert!(entropy_lower_bound(&m).is_finite());
    }
}
