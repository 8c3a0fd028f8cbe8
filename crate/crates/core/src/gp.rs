//! Exact Gaussian-process conditioning with fixed hyperparameters.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::kernels::{build_cov, KernelSpec};

/// Default observation-noise variance on log-transformed outputs.
pub const DEFAULT_NOISE_VAR: f64 = 0.01;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Training inputs and (log-transformed) outputs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, outputs: Vec<f64>) -> Result<Self> {
        if inputs.len() != outputs.len() {
            return Err(Error::Input(format!(
                "{} inputs but {} outputs",
                inputs.len(),
                outputs.len()
            )));
        }
        if let Some(first) = inputs.first() {
            if inputs.iter().any(|x| x.len() != first.len()) {
                return Err(Error::Input("inputs have inconsistent dimensions".into()));
            }
        }
        if inputs.iter().flatten().chain(&outputs).any(|v| !v.is_finite()) {
            return Err(Error::Input("dataset contains non-finite values".into()));
        }
        Ok(Dataset { inputs, outputs })
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.inputs.first().map(Vec::len)
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        if let Some(d) = self.dim() {
            if x.len() != d {
                return Err(Error::Input(format!("expected a {d}-dimensional input, got {}", x.len())));
            }
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite observation".into()));
        }
        self.inputs.push(x);
        self.outputs.push(y);
        Ok(())
    }
}

fn validate(dataset: &Dataset, kernel: &KernelSpec, noise_var: f64) -> Result<()> {
    if !(noise_var >= 0.0 && noise_var.is_finite()) {
        return Err(Error::Domain(format!("noise variance must be nonnegative, got {noise_var}")));
    }
    if let Some(d) = dataset.dim() {
        kernel.check_dim(d)?;
    }
    Ok(())
}

fn factorise(
    dataset: &Dataset,
    kernel: &KernelSpec,
    noise_var: f64,
) -> Result<Cholesky<f64, Dyn>> {
    build_cov(&dataset.inputs, kernel, noise_var)?.cholesky()
}

fn residuals(dataset: &Dataset, mean_const: f64) -> DVector<f64> {
    DVector::from_iterator(dataset.len(), dataset.outputs.iter().map(|y| y - mean_const))
}

/// A conditioned GP with cached Cholesky factor and weights.
#[derive(Debug, Clone)]
pub struct GpState {
    dataset: Dataset,
    kernel: KernelSpec,
    noise_var: f64,
    mean_const: f64,
    chol: Option<Cholesky<f64, Dyn>>,
    weights: DVector<f64>,
}

impl GpState {
    pub fn condition(
        dataset: Dataset,
        kernel: KernelSpec,
        noise_var: f64,
        mean_const: f64,
    ) -> Result<Self> {
        validate(&dataset, &kernel, noise_var)?;
        if !mean_const.is_finite() {
            return Err(Error::Domain("prior mean must be finite".into()));
        }
        if dataset.is_empty() {
            return Ok(GpState {
                dataset,
                kernel,
                noise_var,
                mean_const,
                chol: None,
                weights: DVector::zeros(0),
            });
        }
        let chol = factorise(&dataset, &kernel, noise_var)?;
        let weights = chol.solve(&residuals(&dataset, mean_const));
        Ok(GpState {
            dataset,
            kernel,
            noise_var,
            mean_const,
            chol: Some(chol),
            weights,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn mean_const(&self) -> f64 {
        self.mean_const
    }

    /// `(K + σ²I)⁻¹ (y − m)`.
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// Lower-triangular factor of `K + σ²I`, if there is any data.
    pub fn cholesky_factor(&self) -> Option<DMatrix<f64>> {
        self.chol.as_ref().map(|c| c.l())
    }

    /// Predictive mean and variance of the latent function at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        self.check_input(x)?;
        Ok(self.predict_unchecked(x))
    }

    /// Predictive mean alone, skipping the variance solve.
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        if self.chol.is_none() {
            return Ok(self.mean_const);
        }
        Ok(self.mean_const
            + self
                .dataset
                .inputs
                .iter()
                .zip(self.weights.iter())
                .map(|(xi, w)| self.kernel.eval_unchecked(x, xi) * w)
                .sum::<f64>())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("prediction input must be finite".into()));
        }
        match self.dataset.dim() {
            Some(d) if d != x.len() => {
                return Err(Error::Input(format!(
                    "prediction input has dimension {}, training inputs have {d}",
                    x.len()
                )))
            }
            None => self.kernel.check_dim(x.len())?,
            _ => {}
        }
        Ok(())
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> (f64, f64) {
        let prior_var = self.kernel.variance();
        let Some(chol) = &self.chol else {
            return (self.mean_const, prior_var);
        };
        let kstar = DVector::from_iterator(
            self.dataset.len(),
            self.dataset.inputs.iter().map(|xi| self.kernel.eval_unchecked(x, xi)),
        );
        let mean = self.mean_const + kstar.dot(&self.weights);
        let mut v = kstar;
        chol.l_dirty().solve_lower_triangular_mut(&mut v);
        let raw = prior_var - v.norm_squared();
        if raw < -1e-8 {
            log::warn!("predictive variance {raw:e} clamped to zero");
        }
        (mean, raw.clamp(0.0, prior_var))
    }
}

/// Gaussian log evidence `log p(y | θ)` of the dataset.
pub fn log_marginal_likelihood(
    dataset: &Dataset,
    kernel: &KernelSpec,
    noise_var: f64,
    mean_const: f64,
) -> Result<f64> {
    validate(dataset, kernel, noise_var)?;
    if dataset.is_empty() {
        return Ok(0.0);
    }
    let chol = factorise(dataset, kernel, noise_var)?;
    let r = residuals(dataset, mean_const);
    let alpha = chol.solve(&r);
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(-0.5 * r.dot(&alpha) - 0.5 * log_det - 0.5 * dataset.len() as f64 * LN_2PI)
}

/// Log evidence and its gradient with respect to `[variance, ℓ₁, …]`.
pub fn log_marginal_likelihood_with_gradient(
    dataset: &Dataset,
    kernel: &KernelSpec,
    noise_var: f64,
    mean_const: f64,
) -> Result<(f64, Vec<f64>)> {
    validate(dataset, kernel, noise_var)?;
    let p = kernel.num_hyperparameters();
    let n = dataset.len();
    if n == 0 {
        return Ok((0.0, vec![0.0; p]));
    }
    let chol = factorise(dataset, kernel, noise_var)?;
    let r = residuals(dataset, mean_const);
    let alpha = chol.solve(&r);
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let value = -0.5 * r.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * LN_2PI;

    // ½ tr((ααᵀ − K⁻¹) ∂K/∂θ), accumulated over the symmetric entries.
    let kinv = chol.inverse();
    let mut grad = vec![0.0; p];
    let mut dk = vec![0.0; p];
    let xs = &dataset.inputs;
    for i in 0..n {
        for j in 0..=i {
            kernel.hyper_gradient(&xs[i], &xs[j], &mut dk);
            let w = alpha[i] * alpha[j] - kinv[(i, j)];
            let factor = if i == j { 0.5 } else { 1.0 };
            for (g, d) in grad.iter_mut().zip(&dk) {
                *g += factor * w * d;
            }
        }
    }
    Ok((value, grad))
}
