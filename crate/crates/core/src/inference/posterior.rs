use rand::RngCore;

use super::prior::PriorSpec;
use crate::error::{Error, Result};
use crate::gp::{log_marginal_likelihood, log_marginal_likelihood_with_gradient, Dataset};
use crate::kernels::KernelSpec;

/// A differentiable log density on an unconstrained parameter space.
///
/// Implementations must be callable concurrently (`Sync`), since chains may
/// share one target.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Log density and its gradient; `-∞` outside the support.
    fn log_density_and_gradient(&self, u: &[f64]) -> (f64, Vec<f64>);

    fn log_density(&self, u: &[f64]) -> f64 {
        self.log_density_and_gradient(u).0
    }

    /// Map an unconstrained point to the reported parameter values.
    fn constrain(&self, u: &[f64]) -> Vec<f64> {
        u.to_vec()
    }

    /// Starting point for one chain, in unconstrained coordinates.
    fn initial_point(&self, rng: &mut dyn RngCore) -> Vec<f64>;
}

/// Posterior over GP kernel hyperparameters `[variance, ℓ₁, …]` in
/// unconstrained coordinates, including the Jacobian of the transforms.
#[derive(Debug, Clone)]
pub struct GpHyperPosterior {
    dataset: Dataset,
    template: KernelSpec,
    noise_var: f64,
    mean_const: f64,
    priors: PriorSpec,
}

impl GpHyperPosterior {
    pub fn new(
        dataset: Dataset,
        template: KernelSpec,
        noise_var: f64,
        mean_const: f64,
        priors: PriorSpec,
    ) -> Result<Self> {
        priors.validate()?;
        if priors.len() != template.num_hyperparameters() {
            return Err(Error::Config(format!(
                "{} priors supplied for {} kernel hyperparameters",
                priors.len(),
                template.num_hyperparameters()
            )));
        }
        if let Some(d) = dataset.dim() {
            template.check_dim(d)?;
        }
        Ok(GpHyperPosterior {
            dataset,
            template,
            noise_var,
            mean_const,
            priors,
        })
    }

    pub fn priors(&self) -> &PriorSpec {
        &self.priors
    }

    pub fn kernel_at(&self, theta: &[f64]) -> Result<KernelSpec> {
        self.template.with_hyperparameters(theta)
    }

    fn prior_terms(&self, u: &[f64], theta: &[f64]) -> f64 {
        self.priors
            .entries
            .iter()
            .zip(u.iter().zip(theta))
            .map(|(e, (&ui, &t))| e.log_pdf(t) + e.log_jacobian(ui))
            .sum()
    }

    /// `log p(y | θ(u)) + log p(θ(u)) + log |∂θ/∂u|`.
    pub fn log_posterior_unconstrained(&self, u: &[f64]) -> f64 {
        if u.len() != self.priors.len() || u.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let theta = self.priors.constrain(u);
        let prior = self.prior_terms(u, &theta);
        if !prior.is_finite() {
            return f64::NEG_INFINITY;
        }
        let Ok(kernel) = self.kernel_at(&theta) else {
            return f64::NEG_INFINITY;
        };
        match log_marginal_likelihood(&self.dataset, &kernel, self.noise_var, self.mean_const) {
            Ok(ll) => ll + prior,
            Err(e) => {
                log::warn!("likelihood rejected at theta = {theta:?}: {e}");
                f64::NEG_INFINITY
            }
        }
    }

    /// Gradient of [`log_posterior_unconstrained`](Self::log_posterior_unconstrained).
    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        self.log_density_and_gradient(u).1
    }
}

impl LogDensity for GpHyperPosterior {
    fn dim(&self) -> usize {
        self.priors.len()
    }

    fn log_density_and_gradient(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let p = self.priors.len();
        let rejected = (f64::NEG_INFINITY, vec![0.0; p]);
        if u.len() != p || u.iter().any(|v| !v.is_finite()) {
            return rejected;
        }
        let theta = self.priors.constrain(u);
        let prior = self.prior_terms(u, &theta);
        if !prior.is_finite() {
            return rejected;
        }
        let Ok(kernel) = self.kernel_at(&theta) else {
            return rejected;
        };
        let (ll, dll) = match log_marginal_likelihood_with_gradient(
            &self.dataset,
            &kernel,
            self.noise_var,
            self.mean_const,
        ) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("likelihood rejected at theta = {theta:?}: {e}");
                return rejected;
            }
        };
        let grad = self
            .priors
            .entries
            .iter()
            .enumerate()
            .map(|(j, e)| {
                (dll[j] + e.dlog_pdf(theta[j])) * e.dconstrain(u[j]) + e.dlog_jacobian(u[j])
            })
            .collect();
        (ll + prior, grad)
    }

    fn log_density(&self, u: &[f64]) -> f64 {
        self.log_posterior_unconstrained(u)
    }

    fn constrain(&self, u: &[f64]) -> Vec<f64> {
        self.priors.constrain(u)
    }

    fn initial_point(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.priors.sample_unconstrained(rng)
    }
}

/// Isotropic Gaussian target, mostly useful for checking samplers.
#[derive(Debug, Clone)]
pub struct GaussianTarget {
    pub mean: Vec<f64>,
    pub variance: f64,
}

impl GaussianTarget {
    pub fn standard(dim: usize) -> Self {
        GaussianTarget {
            mean: vec![0.0; dim],
            variance: 1.0,
        }
    }
}

impl LogDensity for GaussianTarget {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density_and_gradient(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let grad: Vec<f64> = u
            .iter()
            .zip(&self.mean)
            .map(|(x, m)| -(x - m) / self.variance)
            .collect();
        let value = -0.5
            * u.iter()
                .zip(&self.mean)
                .map(|(x, m)| (x - m) * (x - m))
                .sum::<f64>()
            / self.variance;
        (value, grad)
    }

    fn initial_point(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        use rand_distr::{Distribution, StandardNormal};
        let sd = self.variance.sqrt();
        self.mean
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(rng);
                m + sd * z
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::prior::PriorEntry;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{Continuous, Gamma as GammaDist};

    fn five_point_posterior() -> GpHyperPosterior {
        let inputs = vec![
            vec![0.00, 0.10],
            vec![0.02, 0.85],
            vec![0.05, 0.40],
            vec![0.07, 0.95],
            vec![0.10, 0.20],
        ];
        let outputs = vec![1.9, 1.1, 0.5, 0.2, 0.0];
        let ds = Dataset::new(inputs, outputs).unwrap();
        let k = KernelSpec::squared_exponential(1.0, vec![1.0, 1.0]).unwrap();
        GpHyperPosterior::new(ds, k, 0.01, 0.0, PriorSpec::case_study()).unwrap()
    }

    #[test]
    fn quadratic_target_gradient() {
        let t = GaussianTarget::standard(3);
        let u = [0.3, -1.2, 2.0];
        assert_eq!(t.log_density_and_gradient(&u).1, vec![-0.3, 1.2, -2.0]);
    }

    #[test]
    fn matches_term_by_term_oracle() {
        let post = five_point_posterior();
        let u = [0.2, -1.0, 0.4];
        let theta = [0.2f64.exp(), 0.1 + 49.9 / (1.0 + 1.0f64.exp()), 0.4f64.exp()];
        let k = KernelSpec::squared_exponential(1.0 / theta[0], vec![theta[1], theta[2]]).unwrap();
        let ll = log_marginal_likelihood(&post.dataset, &k, 0.01, 0.0).unwrap();
        let g1 = GammaDist::new(2.0, 1.0).unwrap().ln_pdf(theta[0]);
        let g3 = GammaDist::new(4.0, 2.0).unwrap().ln_pdf(theta[2]);
        let unif = -(49.9f64).ln();
        let s = 1.0 / (1.0 + 1.0f64.exp());
        let jac = 0.2 + (49.9 * s * (1.0 - s)).ln() + 0.4;
        let expected = ll + g1 + unif + g3 + jac;
        assert_relative_eq!(post.log_posterior_unconstrained(&u), expected, epsilon = 1e-9);
        assert_relative_eq!(post.log_density_and_gradient(&u).0, expected, epsilon = 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let post = five_point_posterior();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let u: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let g = post.gradient(&u);
            for j in 0..3 {
                let h = 1e-5;
                let mut up = u.clone();
                up[j] += h;
                let mut dn = u.clone();
                dn[j] -= h;
                let fd = (post.log_posterior_unconstrained(&up)
                    - post.log_posterior_unconstrained(&dn))
                    / (2.0 * h);
                assert_relative_eq!(g[j], fd, max_relative = 1e-4, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn wrong_prior_count_is_config_error() {
        let ds = Dataset::default();
        let k = KernelSpec::squared_exponential(1.0, vec![1.0]).unwrap();
        let priors = PriorSpec::new(vec![PriorEntry::gamma("v", 2.0, 1.0)]).unwrap();
        assert!(matches!(
            GpHyperPosterior::new(ds, k, 0.01, 0.0, priors),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn non_finite_point_is_rejected() {
        let post = five_point_posterior();
        assert_eq!(post.log_posterior_unconstrained(&[f64::NAN, 0.0, 0.0]), f64::NEG_INFINITY);
    }
}
