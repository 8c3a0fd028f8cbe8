use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a raw input is mapped into the coordinates the surrogate sees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AxisTransform {
    /// `x · factor`.
    Scale { factor: f64 },
    /// `(x − lower) / (upper − lower)`.
    MinMax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub transform: AxisTransform,
}

/// Box-bounded input space in raw units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpace {
    pub axes: Vec<Axis>,
}

impl Default for DesignSpace {
    /// Liquid mole fraction of the first component and temperature in K.
    fn default() -> Self {
        DesignSpace {
            axes: vec![
                Axis {
                    name: "z".into(),
                    lower: 0.0,
                    upper: 1.0,
                    transform: AxisTransform::Scale { factor: 0.1 },
                },
                Axis {
                    name: "T".into(),
                    lower: 350.0,
                    upper: 367.0,
                    transform: AxisTransform::MinMax,
                },
            ],
        }
    }
}

impl DesignSpace {
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::Config("design space has no axes".into()));
        }
        for a in &self.axes {
            if !(a.lower.is_finite() && a.upper.is_finite() && a.lower < a.upper) {
                return Err(Error::Config(format!(
                    "axis {}: bounds [{}, {}] are not an interval",
                    a.name, a.lower, a.upper
                )));
            }
            if let AxisTransform::Scale { factor } = a.transform {
                if !(factor.is_finite() && factor != 0.0) {
                    return Err(Error::Config(format!(
                        "axis {}: scale factor must be finite and non-zero",
                        a.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn names(&self) -> Vec<&str> {
        self.axes.iter().map(|a| a.name.as_str()).collect()
    }

    pub fn contains(&self, raw: &[f64]) -> bool {
        raw.len() == self.dim()
            && raw
                .iter()
                .zip(&self.axes)
                .all(|(&v, a)| a.lower <= v && v <= a.upper)
    }

    /// Nearest point of the box.
    pub fn clamp(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(&self.axes)
            .map(|(&v, a)| v.clamp(a.lower, a.upper))
            .collect()
    }

    pub fn to_model(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(&self.axes)
            .map(|(&v, a)| match a.transform {
                AxisTransform::Scale { factor } => v * factor,
                AxisTransform::MinMax => (v - a.lower) / (a.upper - a.lower),
            })
            .collect()
    }

    pub fn from_model(&self, model: &[f64]) -> Vec<f64> {
        model
            .iter()
            .zip(&self.axes)
            .map(|(&v, a)| match a.transform {
                AxisTransform::Scale { factor } => v / factor,
                AxisTransform::MinMax => a.lower + v * (a.upper - a.lower),
            })
            .collect()
    }

    /// Maps the unit cube affinely onto the raw box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.axes)
            .map(|(&t, a)| (a.lower + t * (a.upper - a.lower)).clamp(a.lower, a.upper))
            .collect()
    }

    pub fn to_unit(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(&self.axes)
            .map(|(&v, a)| (v - a.lower) / (a.upper - a.lower))
            .collect()
    }

    /// Regular `n × n × …` grid over the box in raw units, last axis fastest.
    pub fn grid(&self, n: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let ticks = |a: &Axis| -> Vec<f64> {
            if n == 1 {
                return vec![0.5 * (a.lower + a.upper)];
            }
            (0..n)
                .map(|i| a.lower + (a.upper - a.lower) * i as f64 / (n - 1) as f64)
                .collect()
        };
        let per_axis: Vec<Vec<f64>> = self.axes.iter().map(ticks).collect();
        let total = n.pow(d as u32);
        (0..total)
            .map(|mut k| {
                let mut p = vec![0.0; d];
                for j in (0..d).rev() {
                    p[j] = per_axis[j][k % n];
                    k /= n;
                }
                p
            })
            .collect()
    }
}

/// Latin hypercube design of `n` points in raw units.
pub fn lhs_init(n: usize, space: &DesignSpace, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::Input("a Latin hypercube needs at least one point".into()));
    }
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unit = vec![vec![0.0; space.dim()]; n];
    for j in 0..space.dim() {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        for (i, s) in strata.into_iter().enumerate() {
            unit[i][j] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    Ok(unit.iter().map(|u| space.from_unit(u)).collect())
}

/// Random partition into `(train, test)` index sets; the odd point goes to
/// train.
pub fn split_train_test(n: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::Input(format!("cannot split {n} points into train and test")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = idx.split_off(n.div_ceil(2));
    Ok((idx, test))
}
