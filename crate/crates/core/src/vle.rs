//! Binary vapour-liquid equilibrium: Wilson activity coefficients, Antoine
//! vapour pressures, modified-Raoult bubble and dew points, and the
//! Gibbs-Duhem closure for the second component.

use std::cell::RefCell;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt_f64;

pub const R_GAS: f64 = 8.314_462_618;

/// Default truncation of the Gibbs-Duhem integral below `z₁ = 1`.
pub const GIBBS_DUHEM_EPS: f64 = 1e-4;

const BISECTION_TOL_K: f64 = 1e-9;
const DEW_DAMPING: f64 = 0.5;
const DEW_MAX_ITERS: usize = 200;
const DEW_TOL: f64 = 1e-9;
const DEW_BRACKET_MARGIN_K: f64 = 0.01;

/// `log10(P / Pa) = a − b / (T / K + c)`, valid on `[t_min_k, t_max_k]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Antoine {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub t_min_k: f64,
    pub t_max_k: f64,
}

impl Antoine {
    pub fn pressure(&self, t: f64) -> f64 {
        10f64.powf(self.a - self.b / (t + self.c))
    }

    /// Temperature at which the vapour pressure equals `p`.
    pub fn saturation_temperature(&self, p: f64) -> f64 {
        self.b / (self.a - p.log10()) - self.c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilsonParams {
    /// Liquid molar volumes of components 1 and 2.
    pub molar_volumes_m3_per_mol: [f64; 2],
    pub lambda12_j_per_mol: f64,
    pub lambda21_j_per_mol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySystem {
    pub schema_version: u32,
    pub components: [String; 2],
    pub pressure_pa: f64,
    pub antoine: [Antoine; 2],
    #[serde(default)]
    pub antoine_convention: String,
    pub wilson: WilsonParams,
    /// Temperature bracket searched by the bubble and dew solvers.
    pub bubble_bracket_k: [f64; 2],
}

impl BinarySystem {
    pub fn from_json_str(text: &str, origin: &Path) -> Result<Self> {
        let sys: BinarySystem =
            serde_json::from_str(text).map_err(|e| Error::parse(origin, e.to_string()))?;
        sys.validate()?;
        Ok(sys)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("system: {m}")));
        if self.schema_version != 1 {
            return bad(format!("unsupported schema_version {}", self.schema_version));
        }
        if !(self.pressure_pa > 0.0 && self.pressure_pa.is_finite()) {
            return bad("pressure must be positive".into());
        }
        let [lo, hi] = self.bubble_bracket_k;
        if !(lo < hi && lo > 0.0) {
            return bad("bubble bracket must satisfy 0 < low < high".into());
        }
        for (i, a) in self.antoine.iter().enumerate() {
            if !(a.b > 0.0 && a.t_min_k < a.t_max_k) {
                return bad(format!("antoine[{i}] needs b > 0 and t_min_k < t_max_k"));
            }
            if a.t_min_k > lo || a.t_max_k < hi {
                return bad(format!(
                    "antoine[{i}] validity [{}, {}] K does not cover the bracket [{lo}, {hi}] K",
                    a.t_min_k, a.t_max_k
                ));
            }
            if lo + a.c <= 0.0 {
                return bad(format!("antoine[{i}] is singular inside the bracket"));
            }
        }
        if self.wilson.molar_volumes_m3_per_mol.iter().any(|v| !(*v > 0.0)) {
            return bad("molar volumes must be positive".into());
        }
        Ok(())
    }

    /// Pure-component vapour pressure in Pa; `component` is 0 or 1.
    pub fn vapor_pressure(&self, t: f64, component: usize) -> Result<f64> {
        let a = self.antoine.get(component).ok_or_else(|| {
            Error::Input(format!("component index {component} out of range"))
        })?;
        if !(t >= a.t_min_k && t <= a.t_max_k) {
            return Err(Error::Domain(format!(
                "T = {t} K is outside the vapour-pressure validity range [{}, {}] K of {}",
                a.t_min_k, a.t_max_k, self.components[component]
            )));
        }
        Ok(a.pressure(t))
    }

    /// `(Λ₁₂, Λ₂₁)` with `Λᵢⱼ = (Vⱼ/Vᵢ) exp(−λᵢⱼ / RT)`.
    pub fn wilson_lambdas(&self, t: f64) -> (f64, f64) {
        let [v1, v2] = self.wilson.molar_volumes_m3_per_mol;
        let rt = R_GAS * t;
        (
            v2 / v1 * (-self.wilson.lambda12_j_per_mol / rt).exp(),
            v1 / v2 * (-self.wilson.lambda21_j_per_mol / rt).exp(),
        )
    }

    /// `(ln γ₁, ln γ₂)` from the Wilson equation.
    pub fn wilson_ln_gamma(&self, z1: f64, t: f64) -> (f64, f64) {
        let (l12, l21) = self.wilson_lambdas(t);
        let z2 = 1.0 - z1;
        let d1 = z1 + l12 * z2;
        let d2 = z2 + l21 * z1;
        let common = l12 / d1 - l21 / d2;
        (-d1.ln() + z2 * common, -d2.ln() - z1 * common)
    }

    pub fn wilson_gamma(&self, z1: f64, t: f64) -> Result<(f64, f64)> {
        if !(0.0..=1.0).contains(&z1) {
            return Err(Error::Domain(format!("mole fraction {z1} outside [0, 1]")));
        }
        let (g1, g2) = self.wilson_ln_gamma(z1, t);
        Ok((g1.exp(), g2.exp()))
    }
}

/// Source of activity coefficients `(γ₁, γ₂)` at `(z₁, T)`.
pub trait GammaProvider {
    fn gammas(&self, z1: f64, t: f64) -> Result<(f64, f64)>;
}

/// Ideal liquid, `γ ≡ 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Ideal;

impl GammaProvider for Ideal {
    fn gammas(&self, _z1: f64, _t: f64) -> Result<(f64, f64)> {
        Ok((1.0, 1.0))
    }
}

/// Wilson activity coefficients of a [`BinarySystem`].
#[derive(Debug, Clone, Copy)]
pub struct Wilson<'a>(pub &'a BinarySystem);

impl GammaProvider for Wilson<'_> {
    fn gammas(&self, z1: f64, t: f64) -> Result<(f64, f64)> {
        self.0.wilson_gamma(z1, t)
    }
}

/// Activity coefficients from a model of `ln γ₁(z₁, T)` alone; `γ₂` follows
/// from the Gibbs-Duhem integral at the same temperature.
///
/// The integral is tabulated on `[0, 1 − ε]` once per temperature and
/// interpolated linearly in `z₁`, so repeated calls at one temperature (as
/// in the dew-point inner iteration) evaluate the model only once each.
pub struct GibbsDuhemClosure<F> {
    ln_gamma1: F,
    /// Grid points per unit of mole fraction used for the integral.
    pub density: usize,
    pub eps: f64,
    cache: RefCell<Option<(f64, Vec<f64>, Vec<f64>)>>,
}

impl<F: Fn(f64, f64) -> f64> GibbsDuhemClosure<F> {
    pub fn new(ln_gamma1: F) -> Self {
        GibbsDuhemClosure {
            ln_gamma1,
            density: 400,
            eps: GIBBS_DUHEM_EPS,
            cache: RefCell::new(None),
        }
    }

    fn ln_gamma2(&self, z1: f64, t: f64) -> Result<f64> {
        let mut cache = self.cache.borrow_mut();
        if cache.as_ref().is_none_or(|c| c.0 != t) {
            let top = 1.0 - self.eps;
            let n = ((top * self.density as f64).ceil() as usize).max(1) + 1;
            let z: Vec<f64> = (0..n).map(|i| top * i as f64 / (n - 1) as f64).collect();
            let ln_g1: Vec<f64> = z.iter().map(|&zi| (self.ln_gamma1)(zi, t)).collect();
            let curve = GammaCurve {
                z,
                ln_gamma1: ln_g1,
                temperature: t,
            };
            let ln_g2 = gibbs_duhem_gamma2(&curve, self.eps)?;
            *cache = Some((t, curve.z, ln_g2));
        }
        let (_, z, g2) = cache.as_ref().expect("cache filled above");
        let top = z[z.len() - 1];
        if z1 >= top {
            return Ok(g2[g2.len() - 1]);
        }
        let i = z.partition_point(|&v| v <= z1).saturating_sub(1);
        let w = (z1 - z[i]) / (z[i + 1] - z[i]);
        Ok(g2[i] + w * (g2[i + 1] - g2[i]))
    }
}

impl<F: Fn(f64, f64) -> f64> GammaProvider for GibbsDuhemClosure<F> {
    fn gammas(&self, z1: f64, t: f64) -> Result<(f64, f64)> {
        if !(0.0..=1.0).contains(&z1) {
            return Err(Error::Domain(format!("mole fraction {z1} outside [0, 1]")));
        }
        let g1 = (self.ln_gamma1)(z1, t);
        Ok((g1.exp(), self.ln_gamma2(z1, t)?.exp()))
    }
}

/// `ln γ₁` tabulated on an increasing composition grid starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaCurve {
    pub z: Vec<f64>,
    pub ln_gamma1: Vec<f64>,
    pub temperature: f64,
}

/// `ln γ₂(z₁) = −∫₀^{z₁} z/(1−z) d ln γ₁`, by the trapezoid rule on the grid.
pub fn gibbs_duhem_gamma2(curve: &GammaCurve, eps: f64) -> Result<Vec<f64>> {
    let z = &curve.z;
    if z.is_empty() || z.len() != curve.ln_gamma1.len() {
        return Err(Error::Input("composition grid and ln gamma values must match".into()));
    }
    if z[0] != 0.0 {
        return Err(Error::Input("the grid must start at the reference state z1 = 0".into()));
    }
    if z.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Input("composition grid must be strictly increasing".into()));
    }
    let last = z[z.len() - 1];
    if last > 1.0 - eps {
        return Err(Error::Input(format!(
            "grid reaches z1 = {last}, beyond 1 - eps = {}; the integrand is singular at z1 = 1",
            1.0 - eps
        )));
    }
    if curve.ln_gamma1.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("ln gamma1 values must be finite".into()));
    }
    let f = |x: f64| x / (1.0 - x);
    let mut out = Vec::with_capacity(z.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 0..z.len() - 1 {
        let dlng = curve.ln_gamma1[i + 1] - curve.ln_gamma1[i];
        acc -= 0.5 * (f(z[i]) + f(z[i + 1])) * dlng;
        out.push(acc);
    }
    Ok(out)
}

fn bisect(lo: f64, hi: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let fa = f(a)?;
    let fb = f(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Numerical(format!(
            "no sign change on [{lo}, {hi}] K: residuals {fa:e} and {fb:e}"
        )));
    }
    let mut fa = fa;
    while b - a > BISECTION_TOL_K {
        let m = 0.5 * (a + b);
        let fm = f(m)?;
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

fn check_fraction(v: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} = {v} is outside [0, 1]")))
    }
}

/// Bubble temperature and vapour composition of liquid `z₁` at pressure `p`.
pub fn bubble_point(
    z1: f64,
    p: f64,
    provider: &dyn GammaProvider,
    sys: &BinarySystem,
) -> Result<(f64, f64)> {
    check_fraction(z1, "liquid mole fraction")?;
    let z2 = 1.0 - z1;
    let partials = |t: f64| -> Result<(f64, f64)> {
        let (g1, g2) = provider.gammas(z1, t)?;
        Ok((
            z1 * g1 * sys.vapor_pressure(t, 0)?,
            z2 * g2 * sys.vapor_pressure(t, 1)?,
        ))
    };
    let [lo, hi] = sys.bubble_bracket_k;
    let t = bisect(lo, hi, |t| {
        let (a, b) = partials(t)?;
        Ok(a + b - p)
    })
    .map_err(|e| match e {
        Error::Numerical(m) => Error::Numerical(format!("bubble point at z1 = {z1}: {m}")),
        other => other,
    })?;
    let (a, _) = partials(t)?;
    Ok((t, (a / p).clamp(0.0, 1.0)))
}

/// Liquid composition in equilibrium with vapour `y₁` at `t`, by damped
/// fixed-point iteration. Returns `(x₁, Σ y P / (γ P*) − 1)`.
fn dew_inner(
    y1: f64,
    p: f64,
    t: f64,
    provider: &dyn GammaProvider,
    sys: &BinarySystem,
    x_start: f64,
) -> Result<(f64, f64)> {
    let p1 = sys.vapor_pressure(t, 0)?;
    let p2 = sys.vapor_pressure(t, 1)?;
    let y2 = 1.0 - y1;
    let mut x = x_start;
    for _ in 0..DEW_MAX_ITERS {
        let (g1, g2) = provider.gammas(x, t)?;
        let a = y1 * p / (g1 * p1);
        let b = y2 * p / (g2 * p2);
        let target = a / (a + b);
        let next = (1.0 - DEW_DAMPING) * x + DEW_DAMPING * target;
        if (next - x).abs() < DEW_TOL {
            let (g1, g2) = provider.gammas(next, t)?;
            return Ok((next, y1 * p / (g1 * p1) + y2 * p / (g2 * p2) - 1.0));
        }
        x = next;
    }
    Err(Error::Numerical(format!(
        "dew-point liquid composition did not converge in {DEW_MAX_ITERS} iterations \
         at T = {t} K (last iterate x1 = {x})"
    )))
}

/// Dew temperature and liquid composition of vapour `y₁` at pressure `p`.
pub fn dew_point(
    y1: f64,
    p: f64,
    provider: &dyn GammaProvider,
    sys: &BinarySystem,
) -> Result<(f64, f64)> {
    check_fraction(y1, "vapour mole fraction")?;
    // At a fixed composition the dew temperature is never below the bubble
    // temperature, and the inner iteration is only reliable near equilibrium.
    // The margin keeps a sign change when the two coincide at a pure component.
    let (t_bubble, _) = bubble_point(y1, p, provider, sys)?;
    let [bracket_lo, hi] = sys.bubble_bracket_k;
    let lo = (t_bubble - DEW_BRACKET_MARGIN_K).max(bracket_lo);
    // Successive bisection temperatures are close, so each inner solve
    // starts from the previous liquid composition.
    let mut guess = y1;
    let t = bisect(lo, hi, |t| {
        let (x, resid) = dew_inner(y1, p, t, provider, sys, guess)?;
        guess = x;
        Ok(resid)
    })
    .map_err(|e| match e {
        Error::Numerical(m) => Error::Numerical(format!("dew point at y1 = {y1}: {m}")),
        other => other,
    })?;
    let (x, _) = dew_inner(y1, p, t, provider, sys, guess)?;
    Ok((t, x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseRow {
    pub x: f64,
    pub t: f64,
    pub y: f64,
}

pub const PHASE_HEADER: [&str; 3] = ["x (mol frac)", "T (K)", "y (mol frac)"];

/// Bubble-point rows `(x, T, y)` for every composition in `grid`.
pub fn phase_table(
    grid: &[f64],
    provider: &dyn GammaProvider,
    sys: &BinarySystem,
) -> Result<Vec<PhaseRow>> {
    grid.iter()
        .map(|&x| {
            let (t, y) = bubble_point(x, sys.pressure_pa, provider, sys)?;
            Ok(PhaseRow { x, t, y })
        })
        .collect()
}

pub fn phase_csv(rows: &[PhaseRow]) -> String {
    let mut out = PHASE_HEADER.join(",");
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{}", fmt_f64(r.x), fmt_f64(r.t), fmt_f64(r.y));
    }
    out
}

pub fn write_phase_csv(path: &Path, rows: &[PhaseRow]) -> Result<()> {
    std::fs::write(path, phase_csv(rows)).map_err(|e| Error::io(path, e))
}

pub fn read_phase_csv(path: &Path) -> Result<Vec<PhaseRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader.headers().map_err(|e| Error::parse(path, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != PHASE_HEADER {
        return Err(Error::parse(
            path,
            format!("expected header {:?}", PHASE_HEADER.join(",")),
        ));
    }
    reader
        .records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
            let num = |k: usize| {
                rec.get(k)
                    .and_then(|s| s.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(path, format!("row {}: bad number", i + 2)))
            };
            Ok(PhaseRow {
                x: num(0)?,
                t: num(1)?,
                y: num(2)?,
            })
        })
        .collect()
}
