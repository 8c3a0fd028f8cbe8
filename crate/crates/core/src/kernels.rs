//! Stationary covariance functions and covariance-matrix assembly.
//!
//! All kernels are written in terms of the scaled squared distance
//! `r2 = dᵀ L⁻¹ d`, where `L` is diagonal and holds *squared* length scales.
//! A one-dimensional squared-exponential kernel therefore reads
//! `τ⁻¹ exp(-d² / (2ℓ))`.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smoothness values of the Matérn family that have closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaternNu {
    Half,
    ThreeHalves,
    FiveHalves,
}

impl MaternNu {
    pub fn value(self) -> f64 {
        match self {
            MaternNu::Half => 0.5,
            MaternNu::ThreeHalves => 1.5,
            MaternNu::FiveHalves => 2.5,
        }
    }
}

impl TryFrom<f64> for MaternNu {
    type Error = Error;

    fn try_from(nu: f64) -> Result<Self> {
        if nu == 0.5 {
            Ok(MaternNu::Half)
        } else if nu == 1.5 {
            Ok(MaternNu::ThreeHalves)
        } else if nu == 2.5 {
            Ok(MaternNu::FiveHalves)
        } else {
            Err(Error::Config(format!(
                "Matérn smoothness nu = {nu} is not supported; use 0.5, 1.5 or 2.5"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelFamily {
    SquaredExponential,
    RationalQuadratic { alpha: f64 },
    Matern { nu: MaternNu },
}

/// A stationary kernel: family, process precision `τ` and the diagonal of
/// `L` (one entry for an isotropic kernel, one per input dimension for ARD).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    family: KernelFamily,
    precision: f64,
    length_scales: Vec<f64>,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, precision: f64, length_scales: Vec<f64>) -> Result<Self> {
        if !(precision > 0.0 && precision.is_finite()) {
            return Err(Error::Domain(format!(
                "kernel precision must be positive and finite, got {precision}"
            )));
        }
        if length_scales.is_empty() {
            return Err(Error::Input("kernel needs at least one length scale".into()));
        }
        if let Some(bad) = length_scales.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Domain(format!(
                "length scales must be positive and finite, got {bad}"
            )));
        }
        if let KernelFamily::RationalQuadratic { alpha } = family {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(Error::Domain(format!(
                    "rational-quadratic alpha must be positive, got {alpha}"
                )));
            }
        }
        Ok(KernelSpec {
            family,
            precision,
            length_scales,
        })
    }

    pub fn squared_exponential(precision: f64, length_scales: Vec<f64>) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential, precision, length_scales)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn precision(&self) -> f64 {
        self.precision
    }

    /// Prior variance `k(x, x) = τ⁻¹`.
    pub fn variance(&self) -> f64 {
        1.0 / self.precision
    }

    pub fn length_scales(&self) -> &[f64] {
        &self.length_scales
    }

    pub fn is_isotropic(&self) -> bool {
        self.length_scales.len() == 1
    }

    /// Number of free hyperparameters: the variance plus every length scale.
    pub fn num_hyperparameters(&self) -> usize {
        1 + self.length_scales.len()
    }

    /// Hyperparameters in the order `[variance, ℓ₁, …, ℓ_m]`.
    pub fn hyperparameters(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.num_hyperparameters());
        theta.push(self.variance());
        theta.extend_from_slice(&self.length_scales);
        theta
    }

    /// Same family with a new `[variance, ℓ₁, …]` vector.
    pub fn with_hyperparameters(&self, theta: &[f64]) -> Result<Self> {
        if theta.len() != self.num_hyperparameters() {
            return Err(Error::Input(format!(
                "expected {} hyperparameters, got {}",
                self.num_hyperparameters(),
                theta.len()
            )));
        }
        if !(theta[0] > 0.0 && theta[0].is_finite()) {
            return Err(Error::Domain(format!(
                "kernel variance must be positive and finite, got {}",
                theta[0]
            )));
        }
        Self::new(self.family, 1.0 / theta[0], theta[1..].to_vec())
    }

    /// Checks that inputs of dimension `dim` are compatible with the length scales.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if self.is_isotropic() || self.length_scales.len() == dim {
            Ok(())
        } else {
            Err(Error::Input(format!(
                "input dimension {dim} does not match {} length scales",
                self.length_scales.len()
            )))
        }
    }

    #[inline]
    fn length_scale(&self, k: usize) -> f64 {
        if self.is_isotropic() {
            self.length_scales[0]
        } else {
            self.length_scales[k]
        }
    }

    /// `dᵀ L⁻¹ d` without dimension checks.
    #[inline]
    pub(crate) fn scaled_sq_dist(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(k, (ai, bi))| {
                let d = ai - bi;
                d * d / self.length_scale(k)
            })
            .sum()
    }

    /// Kernel value as a function of the scaled squared distance.
    #[inline]
    pub(crate) fn profile(&self, r2: f64) -> f64 {
        let var = self.variance();
        match self.family {
            KernelFamily::SquaredExponential => var * (-0.5 * r2).exp(),
            KernelFamily::RationalQuadratic { alpha } => {
                var * (1.0 + r2 / (2.0 * alpha)).powf(-alpha)
            }
            KernelFamily::Matern { nu } => {
                let r = r2.max(0.0).sqrt();
                match nu {
                    MaternNu::Half => var * (-r).exp(),
                    MaternNu::ThreeHalves => {
                        let s = 3f64.sqrt() * r;
                        var * (1.0 + s) * (-s).exp()
                    }
                    MaternNu::FiveHalves => {
                        let s = 5f64.sqrt() * r;
                        var * (1.0 + s + s * s / 3.0) * (-s).exp()
                    }
                }
            }
        }
    }

    /// Derivative of [`profile`](Self::profile) with respect to `r2`.
    ///
    /// For the Matérn-1/2 kernel this is unbounded at `r2 = 0`; callers only
    /// use it multiplied by `∂r2/∂ℓ`, which vanishes there, so zero is returned.
    #[inline]
    pub(crate) fn profile_derivative(&self, r2: f64) -> f64 {
        let var = self.variance();
        match self.family {
            KernelFamily::SquaredExponential => -0.5 * var * (-0.5 * r2).exp(),
            KernelFamily::RationalQuadratic { alpha } => {
                -0.5 * var * (1.0 + r2 / (2.0 * alpha)).powf(-alpha - 1.0)
            }
            KernelFamily::Matern { nu } => {
                let r = r2.max(0.0).sqrt();
                match nu {
                    MaternNu::Half => {
                        if r == 0.0 {
                            0.0
                        } else {
                            -var * (-r).exp() / (2.0 * r)
                        }
                    }
                    MaternNu::ThreeHalves => -1.5 * var * (-(3f64.sqrt()) * r).exp(),
                    MaternNu::FiveHalves => {
                        let s = 5f64.sqrt() * r;
                        -(5.0 / 6.0) * var * (1.0 + s) * (-s).exp()
                    }
                }
            }
        }
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        self.profile(self.scaled_sq_dist(a, b))
    }

    /// Evaluates `k(a, b)`.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::Input(format!(
                "input vectors have different lengths ({} vs {})",
                a.len(),
                b.len()
            )));
        }
        self.check_dim(a.len())?;
        Ok(self.eval_unchecked(a, b))
    }

    /// Partial derivatives of `k(a, b)` with respect to `[variance, ℓ₁, …]`.
    pub(crate) fn hyper_gradient(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        let r2 = self.scaled_sq_dist(a, b);
        out[0] = self.profile(r2) / self.variance();
        let dk = self.profile_derivative(r2);
        if self.is_isotropic() {
            let l = self.length_scales[0];
            out[1] = dk * (-r2 / l);
        } else {
            for (k, (ai, bi)) in a.iter().zip(b).enumerate() {
                let d = ai - bi;
                let l = self.length_scales[k];
                out[1 + k] = dk * (-d * d / (l * l));
            }
        }
    }
}

fn expect_family(spec: &KernelSpec, want: &str, ok: bool) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "expected a {want} kernel, got {:?}",
            spec.family()
        )))
    }
}

/// Squared-exponential kernel `τ⁻¹ exp(-½ dᵀL⁻¹d)`.
pub fn eval_se(xi: &[f64], xj: &[f64], spec: &KernelSpec) -> Result<f64> {
    expect_family(
        spec,
        "squared-exponential",
        matches!(spec.family, KernelFamily::SquaredExponential),
    )?;
    spec.eval(xi, xj)
}

/// Rational-quadratic kernel `τ⁻¹ (1 + dᵀL⁻¹d / 2α)^(-α)`.
pub fn eval_rq(xi: &[f64], xj: &[f64], spec: &KernelSpec) -> Result<f64> {
    expect_family(
        spec,
        "rational-quadratic",
        matches!(spec.family, KernelFamily::RationalQuadratic { .. }),
    )?;
    spec.eval(xi, xj)
}

/// Matérn kernel with one of the closed-form smoothness values.
pub fn eval_matern(xi: &[f64], xj: &[f64], spec: &KernelSpec) -> Result<f64> {
    expect_family(spec, "Matérn", matches!(spec.family, KernelFamily::Matern { .. }))?;
    spec.eval(xi, xj)
}

/// Symmetric covariance matrix with jitter already added to the diagonal.
#[derive(Debug, Clone)]
pub struct CovMatrix {
    pub entries: DMatrix<f64>,
    pub jitter: f64,
}

impl CovMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim() == 0 {
            return f64::INFINITY;
        }
        SymmetricEigen::new(self.entries.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Cholesky factorisation; on failure the error reports the minimum eigenvalue.
    pub fn cholesky(&self) -> Result<Cholesky<f64, Dyn>> {
        Cholesky::new(self.entries.clone()).ok_or_else(|| {
            Error::Numerical(format!(
                "covariance matrix ({n}x{n}, jitter {j:e}) is not positive definite; \
                 minimum eigenvalue {e:e}; increase the jitter",
                n = self.dim(),
                j = self.jitter,
                e = self.min_eigenvalue()
            ))
        })
    }
}

/// Assembles `K + jitter·I` for the given points.
pub fn build_cov(points: &[Vec<f64>], spec: &KernelSpec, jitter: f64) -> Result<CovMatrix> {
    if !(jitter >= 0.0 && jitter.is_finite()) {
        return Err(Error::Domain(format!("jitter must be nonnegative, got {jitter}")));
    }
    let n = points.len();
    if let Some(first) = points.first() {
        spec.check_dim(first.len())?;
        if points.iter().any(|p| p.len() != first.len()) {
            return Err(Error::Input("points have inconsistent dimensions".into()));
        }
    }
    let mut entries = DMatrix::zeros(n, n);
    for i in 0..n {
        entries[(i, i)] = spec.variance() + jitter;
        for j in 0..i {
            let v = spec.eval_unchecked(&points[i], &points[j]);
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
    }
    Ok(CovMatrix { entries, jitter })
}
