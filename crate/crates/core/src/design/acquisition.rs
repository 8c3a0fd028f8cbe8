use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sobol::params::JoeKuoD6;
use sobol::Sobol;

use super::space::DesignSpace;
use crate::entropy::EntropyEstimator;
use crate::error::{Error, Result};
use crate::mixture::MixturePosterior;

/// Predictive entropy of the mixture at each point (surrogate coordinates).
pub fn entropy_field(
    mix: &MixturePosterior,
    points: &[Vec<f64>],
    estimator: EntropyEstimator,
) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::Input("entropy field needs at least one point".into()));
    }
    points
        .iter()
        .map(|x| Ok(estimator.evaluate(&mix.at_point(x)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionConfig {
    /// Local ascents, started from the best screening points.
    pub restarts: usize,
    /// Sobol points evaluated to choose the starts, in addition to the box
    /// vertices.
    pub screening: usize,
    pub estimator: EntropyEstimator,
    pub max_ascent_iters: usize,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            restarts: 15,
            screening: 1024,
            estimator: EntropyEstimator::default(),
            max_ascent_iters: 200,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::Config("acquisition: restarts must be at least 1".into()));
        }
        if self.max_ascent_iters == 0 {
            return Err(Error::Config("acquisition: max_ascent_iters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Acquisition {
    /// Maximiser in raw units.
    pub x: Vec<f64>,
    pub value: f64,
    /// Best value among the start points.
    pub best_start: f64,
}

/// Randomly shifted Sobol points in the unit cube.
pub fn shifted_sobol(dim: usize, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let params = JoeKuoD6::minimal();
    if dim == 0 || dim > params.max_dims {
        return Err(Error::Config(format!(
            "Sobol sequences are available for 1..={} dimensions, not {dim}",
            params.max_dims
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    Ok(Sobol::<f64>::new(dim, &params)
        .take(n)
        .map(|p| p.iter().zip(&shift).map(|(v, s)| (v + s).fract()).collect())
        .collect())
}

/// Multi-start bounded ascent of the predictive entropy.
///
/// Starts are the `restarts` best of a shifted Sobol screen plus the box
/// vertices, where predictive variance tends to peak. Each start is
/// refined by projected gradient ascent with central-difference gradients in
/// unit-cube coordinates, accepting only improving steps.
pub fn maximize_entropy(
    mix: &MixturePosterior,
    space: &DesignSpace,
    config: &AcquisitionConfig,
    seed: u64,
) -> Result<Acquisition> {
    config.validate()?;
    space.validate()?;
    let objective = |u: &[f64]| -> f64 {
        let x = space.to_model(&space.from_unit(u));
        match mix.at_point(&x) {
            Ok(m) => config.estimator.evaluate(&m),
            Err(_) => f64::NAN,
        }
    };
    let n_screen = config.screening.max(config.restarts);
    let mut screened: Vec<(Vec<f64>, f64)> = shifted_sobol(space.dim(), n_screen, seed)?
        .into_iter()
        .chain(vertices(space.dim()))
        .map(|u| {
            let v = objective(&u);
            (u, v)
        })
        .filter(|(_, v)| v.is_finite())
        .collect();
    screened.sort_by(|a, b| b.1.total_cmp(&a.1));
    screened.truncate(config.restarts);
    let Some(best_start) = screened.first().map(|s| s.1) else {
        return Err(Error::Numerical(
            "entropy is non-finite at every start point".into(),
        ));
    };

    let mut best: Option<(Vec<f64>, f64)> = None;
    for (k, (u0, f0)) in screened.into_iter().enumerate() {
        let (u, f) = ascend(&objective, u0, f0, config.max_ascent_iters);
        if !f.is_finite() {
            log::warn!("acquisition start {k} skipped: non-finite objective");
            continue;
        }
        if best.as_ref().is_none_or(|b| f > b.1) {
            best = Some((u, f));
        }
    }
    let (u, value) = best.ok_or_else(|| Error::Numerical("all acquisition starts failed".into()))?;
    Ok(Acquisition {
        x: space.from_unit(&u),
        value,
        best_start,
    })
}

fn vertices(dim: usize) -> impl Iterator<Item = Vec<f64>> {
    (0..1usize << dim.min(16)).map(move |mask| {
        (0..dim)
            .map(|j| if mask >> j & 1 == 1 { 1.0 } else { 0.0 })
            .collect()
    })
}

fn gradient(f: &impl Fn(&[f64]) -> f64, u: &[f64], fu: f64) -> Vec<f64> {
    const H: f64 = 1e-6;
    let mut g = vec![0.0; u.len()];
    let mut probe = u.to_vec();
    for j in 0..u.len() {
        let lo = (u[j] - H).max(0.0);
        let hi = (u[j] + H).min(1.0);
        probe[j] = hi;
        let fh = if hi > u[j] { f(&probe) } else { fu };
        probe[j] = lo;
        let fl = if lo < u[j] { f(&probe) } else { fu };
        probe[j] = u[j];
        g[j] = (fh - fl) / (hi - lo);
        // At an active bound, drop the component pointing outwards.
        if (u[j] <= 0.0 && g[j] < 0.0) || (u[j] >= 1.0 && g[j] > 0.0) {
            g[j] = 0.0;
        }
    }
    g
}

fn ascend(
    f: &impl Fn(&[f64]) -> f64,
    mut u: Vec<f64>,
    mut fu: f64,
    max_iters: usize,
) -> (Vec<f64>, f64) {
    let mut step = 0.05;
    for _ in 0..max_iters {
        let g = gradient(f, &u, fu);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm < 1e-12 {
            break;
        }
        let mut improved = false;
        while step > 1e-12 {
            let cand: Vec<f64> = u
                .iter()
                .zip(&g)
                .map(|(ui, gi)| (ui + step * gi / norm).clamp(0.0, 1.0))
                .collect();
            let fc = f(&cand);
            if fc > fu {
                u = cand;
                fu = fc;
                improved = true;
                step = (step * 2.0).min(0.5);
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (u, fu)
}
