use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::posterior::LogDensity;
use crate::error::{Error, Result};
use crate::seeding::stream_rng;

const MAX_INIT_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HmcConfig {
    pub step_size: f64,
    pub leapfrog_steps: usize,
    /// Total transitions per chain, burn-in included.
    pub num_samples: usize,
    pub burn_in: usize,
    pub num_chains: usize,
    pub adapt_steps: usize,
    pub adapt_rate: f64,
    pub target_accept: f64,
    pub seed: u64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        HmcConfig {
            step_size: 0.05,
            leapfrog_steps: 5,
            num_samples: 5000,
            burn_in: 3000,
            num_chains: 4,
            adapt_steps: 5,
            adapt_rate: 0.1,
            target_accept: 0.9,
            seed: 0,
        }
    }
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("hmc: {msg}")));
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad("step_size must be positive");
        }
        if self.leapfrog_steps == 0 {
            return bad("leapfrog_steps must be positive");
        }
        if self.num_samples == 0 || self.burn_in >= self.num_samples {
            return bad("burn_in must be smaller than num_samples");
        }
        if self.num_chains == 0 {
            return bad("num_chains must be positive");
        }
        if !(self.adapt_rate > 0.0 && self.adapt_rate.is_finite()) {
            return bad("adapt_rate must be positive");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn kept_per_chain(&self) -> usize {
        self.num_samples - self.burn_in
    }
}

/// Post-burn-in draws of every chain, in constrained coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSet {
    /// `draws[chain][iteration][parameter]`.
    pub draws: Vec<Vec<Vec<f64>>>,
    /// Metropolis acceptance probability of each kept transition.
    pub accept_probs: Vec<Vec<f64>>,
    /// Number of accepted proposals among the kept transitions.
    pub accepted: Vec<usize>,
    /// Step size after adaptation.
    pub step_sizes: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl ChainSet {
    pub fn num_chains(&self) -> usize {
        self.draws.len()
    }

    pub fn chain_len(&self) -> usize {
        self.draws.first().map_or(0, Vec::len)
    }

    pub fn dim(&self) -> usize {
        self.draws
            .first()
            .and_then(|c| c.first())
            .map_or(0, Vec::len)
    }

    pub fn total_draws(&self) -> usize {
        self.draws.iter().map(Vec::len).sum()
    }

    /// Fraction of accepted proposals per chain.
    pub fn acceptance_rates(&self) -> Vec<f64> {
        self.accepted
            .iter()
            .zip(&self.draws)
            .map(|(&a, c)| if c.is_empty() { 0.0 } else { a as f64 / c.len() as f64 })
            .collect()
    }

    /// Per-chain trace of parameter `j`.
    pub fn parameter(&self, j: usize) -> Vec<Vec<f64>> {
        self.draws
            .iter()
            .map(|c| c.iter().map(|d| d[j]).collect())
            .collect()
    }

    /// All draws with chains concatenated in order.
    pub fn concatenated(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.draws.iter().flatten()
    }
}

/// One leapfrog trajectory. Returns the final position, momentum, log density
/// and gradient, or `None` if the density became non-finite along the way.
pub fn leapfrog(
    target: &dyn LogDensity,
    q: &[f64],
    p: &[f64],
    grad: &[f64],
    step: f64,
    steps: usize,
) -> Option<(Vec<f64>, Vec<f64>, f64, Vec<f64>)> {
    let mut q = q.to_vec();
    let mut p = p.to_vec();
    let mut g = grad.to_vec();
    let mut logp = f64::NAN;
    for _ in 0..steps {
        for (pi, gi) in p.iter_mut().zip(&g) {
            *pi += 0.5 * step * gi;
        }
        for (qi, pi) in q.iter_mut().zip(&p) {
            *qi += step * pi;
        }
        let (lp, gn) = target.log_density_and_gradient(&q);
        if !lp.is_finite() || gn.iter().any(|v| !v.is_finite()) {
            return None;
        }
        logp = lp;
        g = gn;
        for (pi, gi) in p.iter_mut().zip(&g) {
            *pi += 0.5 * step * gi;
        }
    }
    Some((q, p, logp, g))
}

fn kinetic(p: &[f64]) -> f64 {
    0.5 * p.iter().map(|v| v * v).sum::<f64>()
}

fn initial_state(
    target: &dyn LogDensity,
    rng: &mut dyn RngCore,
    given: Option<&Vec<f64>>,
    chain: usize,
) -> Result<(Vec<f64>, f64, Vec<f64>)> {
    if let Some(q) = given {
        if q.len() != target.dim() {
            return Err(Error::Input(format!(
                "chain {chain}: initial point has dimension {}, target has {}",
                q.len(),
                target.dim()
            )));
        }
        let (lp, g) = target.log_density_and_gradient(q);
        if !lp.is_finite() {
            return Err(Error::Input(format!(
                "chain {chain}: target is not finite at the initial point"
            )));
        }
        return Ok((q.clone(), lp, g));
    }
    for _ in 0..MAX_INIT_ATTEMPTS {
        let q = target.initial_point(rng);
        let (lp, g) = target.log_density_and_gradient(&q);
        if lp.is_finite() {
            return Ok((q, lp, g));
        }
    }
    Err(Error::Numerical(format!(
        "chain {chain}: no finite starting point in {MAX_INIT_ATTEMPTS} prior draws"
    )))
}

fn run_chain(
    target: &dyn LogDensity,
    config: &HmcConfig,
    chain: usize,
    init: Option<&Vec<f64>>,
) -> Result<(Vec<Vec<f64>>, Vec<f64>, usize, f64, u64)> {
    let seed = crate::seeding::derive_seed(config.seed, chain as u64);
    let mut rng = stream_rng(config.seed, chain as u64);
    let (mut q, mut logp, mut grad) = initial_state(target, &mut rng, init, chain)?;
    let mut log_step = config.step_size.ln();
    let kept = config.kept_per_chain();
    let mut draws = Vec::with_capacity(kept);
    let mut probs = Vec::with_capacity(kept);
    let mut accepted = 0;

    for it in 0..config.num_samples {
        let step = log_step.exp();
        let p0: Vec<f64> = (0..q.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let h0 = -logp + kinetic(&p0);
        let proposal = leapfrog(target, &q, &p0, &grad, step, config.leapfrog_steps);
        let accept_prob = match &proposal {
            Some((_, p1, lp1, _)) => {
                let h1 = -lp1 + kinetic(p1);
                let a = (h0 - h1).exp().min(1.0);
                if a.is_nan() {
                    0.0
                } else {
                    a
                }
            }
            None => 0.0,
        };
        let u: f64 = rng.random();
        let accept = u < accept_prob;
        if accept {
            let (q1, _, lp1, g1) = proposal.expect("accepted proposals exist");
            q = q1;
            logp = lp1;
            grad = g1;
        }
        if it < config.adapt_steps {
            log_step += config.adapt_rate * (accept_prob - config.target_accept);
        }
        if it >= config.burn_in {
            draws.push(target.constrain(&q));
            probs.push(accept_prob);
            accepted += usize::from(accept);
        }
    }
    if accepted == 0 {
        return Err(Error::Diagnostic(format!(
            "chain {chain} rejected every proposal after warm-up (step size {:.3e}); \
             reduce the step size",
            log_step.exp()
        )));
    }
    Ok((draws, probs, accepted, log_step.exp(), seed))
}

/// Runs `config.num_chains` independent HMC chains.
///
/// Each chain draws its own RNG stream from `config.seed`. When `inits` is
/// `None`, starting points come from [`LogDensity::initial_point`].
pub fn hmc_run(
    target: &dyn LogDensity,
    config: &HmcConfig,
    inits: Option<&[Vec<f64>]>,
) -> Result<ChainSet> {
    config.validate()?;
    if let Some(inits) = inits {
        if inits.len() != config.num_chains {
            return Err(Error::Input(format!(
                "{} initial points for {} chains",
                inits.len(),
                config.num_chains
            )));
        }
    }
    let mut set = ChainSet {
        draws: Vec::with_capacity(config.num_chains),
        accept_probs: Vec::with_capacity(config.num_chains),
        accepted: Vec::with_capacity(config.num_chains),
        step_sizes: Vec::with_capacity(config.num_chains),
        seeds: Vec::with_capacity(config.num_chains),
    };
    for chain in 0..config.num_chains {
        let init = inits.map(|i| &i[chain]);
        let (draws, probs, accepted, step, seed) = run_chain(target, config, chain, init)?;
        set.draws.push(draws);
        set.accept_probs.push(probs);
        set.accepted.push(accepted);
        set.step_sizes.push(step);
        set.seeds.push(seed);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::posterior::GaussianTarget;

    fn moments(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, var)
    }

    #[test]
    fn leapfrog_conserves_energy() {
        let t = GaussianTarget::standard(1);
        let q = [1.3];
        let p = [-0.4];
        let (lp0, g0) = t.log_density_and_gradient(&q);
        let (q1, p1, lp1, _) = leapfrog(&t, &q, &p, &g0, 0.01, 5).unwrap();
        let dh = (-lp1 + kinetic(&p1)) - (-lp0 + kinetic(&p));
        assert!(dh.abs() < 1e-4, "drift {dh}");
        assert!(q1[0] != q[0]);
    }

    #[test]
    fn shifted_gaussian_moments() {
        let t = GaussianTarget {
            mean: vec![3.0],
            variance: 4.0,
        };
        let cfg = HmcConfig {
            seed: 12,
            step_size: 0.5,
            ..HmcConfig::default()
        };
        let set = hmc_run(&t, &cfg, None).unwrap();
        let all: Vec<f64> = set.concatenated().map(|d| d[0]).collect();
        let (m, v) = moments(&all);
        assert!((m - 3.0).abs() < 0.1, "mean {m}");
        assert!((v - 4.0).abs() < 0.4, "var {v}");
    }

    #[test]
    fn reproducible_for_fixed_seed() {
        let t = GaussianTarget::standard(2);
        let cfg = HmcConfig {
            num_samples: 300,
            burn_in: 100,
            seed: 5,
            ..HmcConfig::default()
        };
        let a = hmc_run(&t, &cfg, None).unwrap();
        let b = hmc_run(&t, &cfg, None).unwrap();
        assert_eq!(a, b);
        let c = hmc_run(&t, &HmcConfig { seed: 6, ..cfg }, None).unwrap();
        assert_ne!(a.draws, c.draws);
    }

    #[test]
    fn adaptation_only_in_first_steps() {
        let t = GaussianTarget::standard(1);
        let cfg = HmcConfig {
            num_samples: 50,
            burn_in: 10,
            adapt_steps: 0,
            ..HmcConfig::default()
        };
        let set = hmc_run(&t, &cfg, None).unwrap();
        assert!(set.step_sizes.iter().all(|&s| (s - 0.05).abs() < 1e-15));
    }

    struct Cliff;

    impl LogDensity for Cliff {
        fn dim(&self) -> usize {
            1
        }
        fn log_density_and_gradient(&self, u: &[f64]) -> (f64, Vec<f64>) {
            if u[0] == 0.0 {
                (0.0, vec![0.0])
            } else {
                (f64::NEG_INFINITY, vec![0.0])
            }
        }
        fn initial_point(&self, _rng: &mut dyn RngCore) -> Vec<f64> {
            vec![0.0]
        }
    }

    #[test]
    fn all_rejected_chain_is_diagnostic_error() {
        let cfg = HmcConfig {
            num_samples: 20,
            burn_in: 5,
            num_chains: 2,
            ..HmcConfig::default()
        };
        assert!(matches!(hmc_run(&Cliff, &cfg, None), Err(Error::Diagnostic(_))));
    }

    #[test]
    fn invalid_config() {
        let cfg = HmcConfig {
            burn_in: 5000,
            ..HmcConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn explicit_inits_are_checked() {
        let t = GaussianTarget::standard(1);
        let cfg = HmcConfig {
            num_chains: 2,
            num_samples: 10,
            burn_in: 2,
            ..HmcConfig::default()
        };
        assert!(hmc_run(&t, &cfg, Some(&[vec![0.0]])).is_err());
        assert!(hmc_run(&t, &cfg, Some(&[vec![0.0], vec![1.0]])).is_ok());
    }
}
