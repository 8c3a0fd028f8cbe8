//! McCabe-Thiele stage stepping for a binary column under constant molar
//! overflow.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::vle::PhaseRow;

pub const MAX_STAGES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnSpec {
    pub n_stages: usize,
    pub reflux_ratio: f64,
    pub x_d: f64,
    pub x_w: f64,
    pub x_f: f64,
    /// Feed flow, mol/s.
    pub feed: f64,
    /// Feed stage, counted from the top starting at 1.
    pub feed_stage: usize,
    /// Feed quality: liquid fraction of the feed.
    pub q: f64,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        ColumnSpec {
            n_stages: 3,
            reflux_ratio: 1.0,
            x_d: 0.42,
            x_w: 0.01,
            x_f: 0.10,
            feed: 100.0,
            feed_stage: 2,
            q: 1.0,
        }
    }
}

impl ColumnSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Specification(m));
        if !(0.0 <= self.x_w && self.x_w < self.x_f && self.x_f < self.x_d && self.x_d <= 1.0) {
            return bad(format!(
                "compositions must satisfy 0 <= x_W < x_F < x_D <= 1 (got x_W = {}, x_F = {}, x_D = {})",
                self.x_w, self.x_f, self.x_d
            ));
        }
        if !(self.reflux_ratio > 0.0 && self.reflux_ratio.is_finite()) {
            return bad(format!("reflux ratio must be positive, got {}", self.reflux_ratio));
        }
        if !(self.feed > 0.0 && self.feed.is_finite()) {
            return bad(format!("feed flow must be positive, got {}", self.feed));
        }
        if self.n_stages == 0 || self.feed_stage == 0 || self.feed_stage > self.n_stages {
            return bad(format!(
                "feed stage {} must lie in 1..={}",
                self.feed_stage, self.n_stages
            ));
        }
        if !self.q.is_finite() {
            return bad("feed quality must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
}

impl Line {
    pub fn at(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum QLine {
    Vertical { x: f64 },
    Sloped { slope: f64, intercept: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingLines {
    pub enriching: Line,
    pub stripping: Line,
    pub q_line: QLine,
    /// Where the three lines meet.
    pub intersection: (f64, f64),
}

pub fn operating_lines(spec: &ColumnSpec) -> Result<OperatingLines> {
    spec.validate()?;
    let r = spec.reflux_ratio;
    let enriching = Line {
        slope: r / (r + 1.0),
        intercept: spec.x_d / (r + 1.0),
    };
    let (q_line, xi) = if spec.q == 1.0 {
        (QLine::Vertical { x: spec.x_f }, spec.x_f)
    } else {
        let slope = spec.q / (spec.q - 1.0);
        let intercept = -spec.x_f / (spec.q - 1.0);
        if (slope - enriching.slope).abs() < 1e-12 {
            return Err(Error::Specification(
                "q-line is parallel to the enriching line".into(),
            ));
        }
        (
            QLine::Sloped { slope, intercept },
            (enriching.intercept - intercept) / (slope - enriching.slope),
        )
    };
    let yi = enriching.at(xi);
    if !((0.0..=1.0).contains(&xi) && (0.0..=1.0).contains(&yi)) || xi <= spec.x_w {
        return Err(Error::Specification(format!(
            "operating lines meet at ({xi}, {yi}), outside the feasible region"
        )));
    }
    let slope = (yi - spec.x_w) / (xi - spec.x_w);
    let stripping = Line {
        slope,
        intercept: spec.x_w - slope * spec.x_w,
    };
    Ok(OperatingLines {
        enriching,
        stripping,
        q_line,
        intersection: (xi, yi),
    })
}

/// Monotone piecewise-cubic (Fritsch-Carlson) interpolant of tabulated
/// equilibrium data.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumCurve {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl EquilibriumCurve {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::Input(
                "an equilibrium curve needs at least two (x, y) pairs".into(),
            ));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::Input("equilibrium data must be finite".into()));
        }
        if let Some(w) = xs.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Input(format!(
                "equilibrium x values must be strictly increasing (found {} then {})",
                w[0], w[1]
            )));
        }
        let slopes = fritsch_carlson(&xs, &ys);
        Ok(EquilibriumCurve { xs, ys, slopes })
    }

    pub fn from_rows(rows: &[PhaseRow]) -> Result<Self> {
        Self::new(rows.iter().map(|r| r.x).collect(), rows.iter().map(|r| r.y).collect())
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    fn segment(&self, x: f64) -> usize {
        match self.xs.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.xs.len() - 2),
        }
    }

    fn eval_segment(&self, i: usize, x: f64) -> f64 {
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.ys[i]
            + (t3 - 2.0 * t2 + t) * h * self.slopes[i]
            + (-2.0 * t3 + 3.0 * t2) * self.ys[i + 1]
            + (t3 - t2) * h * self.slopes[i + 1]
    }

    /// φ(x), clamped to the tabulated range.
    pub fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(self.xs[0], self.xs[self.xs.len() - 1]);
        self.eval_segment(self.segment(x), x)
    }

    /// Smallest `x ≤ upper` with `φ(x) = y`, or `None` if there is none.
    ///
    /// Each segment of the interpolant is monotone, so roots are bracketed
    /// segment by segment and refined by bisection.
    pub fn inverse(&self, y: f64, upper: f64) -> Option<f64> {
        for i in 0..self.xs.len() - 1 {
            let a = self.xs[i];
            if a > upper {
                break;
            }
            let b = self.xs[i + 1].min(upper);
            let fa = self.eval_segment(i, a) - y;
            let fb = self.eval_segment(i, b) - y;
            if fa == 0.0 {
                return Some(a);
            }
            if fa.signum() == fb.signum() && fb != 0.0 {
                continue;
            }
            let (mut lo, mut hi, mut flo) = (a, b, fa);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let fm = self.eval_segment(i, mid) - y;
                if fm == 0.0 {
                    return Some(mid);
                }
                if fm.signum() == flo.signum() {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-15 {
                    break;
                }
            }
            return Some(0.5 * (lo + hi));
        }
        None
    }

    /// Number of segments below `upper` on which `φ − y` changes sign.
    pub fn root_count(&self, y: f64, upper: f64) -> usize {
        (0..self.xs.len() - 1)
            .take_while(|&i| self.xs[i] <= upper)
            .filter(|&i| {
                let b = self.xs[i + 1].min(upper);
                let fa = self.eval_segment(i, self.xs[i]) - y;
                let fb = self.eval_segment(i, b) - y;
                fa == 0.0 || fa.signum() != fb.signum()
            })
            .count()
    }
}

fn fritsch_carlson(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let delta: Vec<f64> = (0..n - 1)
        .map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]))
        .collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    let mut m = vec![0.0; n];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] > 0.0 {
            let h0 = xs[i] - xs[i - 1];
            let h1 = xs[i + 1] - xs[i];
            let w1 = 2.0 * h1 + h0;
            let w2 = h1 + 2.0 * h0;
            m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    m[0] = end_slope(xs[1] - xs[0], xs[2] - xs[1], delta[0], delta[1]);
    m[n - 1] = end_slope(
        xs[n - 1] - xs[n - 2],
        xs[n - 2] - xs[n - 3],
        delta[n - 2],
        delta[n - 3],
    );
    m
}

/// One-sided three-point end slope, limited to preserve monotonicity.
fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub x: f64,
    pub y: f64,
    /// Liquid leaving the stage, mol/s.
    pub liquid: f64,
    /// Vapour leaving the stage, mol/s.
    pub vapour: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flows {
    pub distillate: f64,
    pub bottoms: f64,
    /// Reflux returned from the condenser.
    pub l0: f64,
    /// Vapour leaving the top stage.
    pub v1: f64,
    /// Boil-up entering the bottom stage.
    pub v_reboiler: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageProfile {
    pub stages: Vec<Stage>,
    pub flows: Flows,
    /// Liquid composition of the last stepped stage.
    pub bottoms_composition: f64,
    /// False when the stage cap stopped the stepping before `x ≤ x_W`.
    pub reached_bottoms: bool,
}

impl StageProfile {
    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }
}

/// Condenser, reboiler and per-stage flows for `n` stages.
pub fn flow_profiles(spec: &ColumnSpec, n: usize) -> Result<(Flows, Vec<(f64, f64)>)> {
    spec.validate()?;
    let d = spec.feed * (spec.x_f - spec.x_w) / (spec.x_d - spec.x_w);
    let w = spec.feed - d;
    let l0 = spec.reflux_ratio * d;
    let v1 = l0 + d;
    let per_stage: Vec<(f64, f64)> = (1..=n)
        .map(|i| {
            let l = if i >= spec.feed_stage { l0 + spec.q * spec.feed } else { l0 };
            let v = if i > spec.feed_stage {
                v1 - (1.0 - spec.q) * spec.feed
            } else {
                v1
            };
            (l, v)
        })
        .collect();
    let l_last = per_stage.last().map_or(l0 + spec.q * spec.feed, |s| s.0);
    let flows = Flows {
        distillate: d,
        bottoms: w,
        l0,
        v1,
        v_reboiler: l_last - w,
    };
    if flows.v_reboiler <= 0.0 {
        return Err(Error::Specification(format!(
            "negative boil-up {} mol/s; raise the reflux ratio",
            flows.v_reboiler
        )));
    }
    Ok((flows, per_stage))
}

/// Steps off equilibrium stages from the distillate down.
pub fn step_stages(spec: &ColumnSpec, curve: &EquilibriumCurve) -> Result<StageProfile> {
    let lines = operating_lines(spec)?;
    let mut points = Vec::new();
    let mut y = spec.x_d;
    let mut bound = 1.0;
    let mut reached = false;
    for i in 1..=MAX_STAGES {
        let x = curve.inverse(y, bound).ok_or_else(|| {
            Error::Specification(format!(
                "stage {i}: vapour composition {y} is not reachable on the equilibrium curve \
                 below x = {bound}"
            ))
        })?;
        if curve.root_count(y, bound) > 1 {
            log::debug!("stage {i}: y = {y} has several equilibrium roots; taking x = {x}");
        }
        points.push((x, y));
        if x <= spec.x_w {
            reached = true;
            break;
        }
        if x >= bound && i > 1 {
            return Err(Error::Specification(format!(
                "stage {i}: stepping stalled at x = {x}; the column is pinched"
            )));
        }
        bound = x;
        y = if i < spec.feed_stage {
            lines.enriching.at(x)
        } else {
            lines.stripping.at(x)
        };
    }
    if !reached {
        log::warn!("stage stepping stopped at the {MAX_STAGES}-stage cap");
    }
    let (flows, per_stage) = flow_profiles(spec, points.len())?;
    let stages = points
        .iter()
        .zip(&per_stage)
        .map(|(&(x, y), &(l, v))| Stage {
            x,
            y,
            liquid: l,
            vapour: v,
        })
        .collect();
    Ok(StageProfile {
        stages,
        flows,
        bottoms_composition: points.last().map_or(spec.x_d, |p| p.0),
        reached_bottoms: reached,
    })
}

/// Stage table with one column pair per curve: `stage,x_<name>…,y_<name>…`.
pub fn stage_table_csv(profiles: &[(&str, &StageProfile)]) -> String {
    let rows = profiles.iter().map(|(_, p)| p.len()).max().unwrap_or(0);
    let mut header = vec!["stage".to_string()];
    header.extend(profiles.iter().map(|(n, _)| format!("x_{n}")));
    header.extend(profiles.iter().map(|(n, _)| format!("y_{n}")));
    let mut out = header.join(",");
    out.push('\n');
    let cell = |p: &StageProfile, i: usize, f: fn(&Stage) -> f64| {
        p.stages.get(i).map_or(String::new(), |s| fmt_f64(f(s)))
    };
    for i in 0..rows {
        let mut row = vec![(i + 1).to_string()];
        row.extend(profiles.iter().map(|(_, p)| cell(p, i, |s| s.x)));
        row.extend(profiles.iter().map(|(_, p)| cell(p, i, |s| s.y)));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// End points of the diagonal, operating lines and q-line as `line,x,y` rows.
pub fn operating_lines_csv(spec: &ColumnSpec, lines: &OperatingLines) -> String {
    let (xi, yi) = lines.intersection;
    let mut out = String::from("line,x,y\n");
    let mut push = |name: &str, x: f64, y: f64| {
        let _ = writeln!(out, "{name},{},{}", fmt_f64(x), fmt_f64(y));
    };
    push("diagonal", 0.0, 0.0);
    push("diagonal", 1.0, 1.0);
    push("enriching", xi, yi);
    push("enriching", spec.x_d, lines.enriching.at(spec.x_d));
    push("stripping", spec.x_w, lines.stripping.at(spec.x_w));
    push("stripping", xi, yi);
    push("q_line", spec.x_f, spec.x_f);
    push("q_line", xi, yi);
    out
}
