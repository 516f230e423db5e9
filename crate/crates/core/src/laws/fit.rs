use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::trainer::LossCurve;

/// `L = a C^b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerLawFit {
    pub a: f64,
    pub b: f64,
    /// Sum of squared residuals in natural-log space.
    pub residual: f64,
}

impl PowerLawFit {
    pub fn predict(&self, c: f64) -> f64 {
        predict_loss(self, c)
    }
}

impl fmt::Display for PowerLawFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a={:e} b={} residual={:e}", self.a, self.b, self.residual)
    }
}

pub fn predict_loss(fit: &PowerLawFit, c: f64) -> f64 {
    fit.a * libm::pow(c, fit.b)
}

/// Least-squares line `y = intercept + slope x`, with the sum of squared
/// residuals. Inputs are centred first.
fn line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    (intercept, slope, residual)
}

fn require_distinct(xs: &[f64], what: &str) -> Result<()> {
    let mut sorted: Vec<f64> = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::input(alloc::format!("{what} values must be distinct")));
    }
    Ok(())
}

/// Fits `L = a C^b` by linear regression of `ln L` on `ln C`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 2 {
        return Err(Error::input("a power-law fit needs at least 2 points"));
    }
    if points.iter().any(|&(c, l)| !(c > 0.0 && l > 0.0 && c.is_finite() && l.is_finite())) {
        return Err(Error::input("power-law points must have positive, finite C and L"));
    }
    let xs: Vec<f64> = points.iter().map(|p| libm::log(p.0)).collect();
    let ys: Vec<f64> = points.iter().map(|p| libm::log(p.1)).collect();
    require_distinct(&xs, "C")?;
    let (ln_a, b, residual) = line(&xs, &ys);
    Ok(PowerLawFit { a: libm::exp(ln_a), b, residual })
}

/// `loss = p x^2 + q x + r` with `x = log10(d)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IsoFlopFit {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    /// Sum of squared residuals.
    pub residual: f64,
    /// `10^(-q / 2p)`, or `None` when the parabola opens downward (no
    /// interior minimum).
    pub optimal_d: Option<f64>,
}

impl IsoFlopFit {
    pub fn has_minimum(&self) -> bool {
        self.optimal_d.is_some()
    }

    pub fn predict(&self, d: f64) -> f64 {
        let x = libm::log10(d);
        self.p * x * x + self.q * x + self.r
    }
}

impl fmt::Display for IsoFlopFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p={} q={} r={} residual={:e} ", self.p, self.q, self.r, self.residual)?;
        match self.optimal_d {
            Some(d) => write!(f, "optimal_d={d:e}"),
            None => f.write_str("optimal_d=none"),
        }
    }
}

/// Least-squares parabola of loss against `log10(d)`.
pub fn fit_isoflop(points: &[(f64, f64)]) -> Result<IsoFlopFit> {
    if points.len() < 3 {
        return Err(Error::input("an IsoFLOP fit needs at least 3 points"));
    }
    if points.iter().any(|&(d, l)| !(d > 0.0 && d.is_finite() && l.is_finite())) {
        return Err(Error::input("IsoFLOP points must have positive, finite d and finite loss"));
    }
    let xs: Vec<f64> = points.iter().map(|p| libm::log10(p.0)).collect();
    require_distinct(&xs, "d")?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    // Normal equations in centred coordinates u = x - mx, v = y - my, where
    // the fit is v = p u^2 + s u + t.
    let (mut s2, mut s3, mut s4, mut sv, mut suv, mut su2v) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, &(_, y)) in xs.iter().zip(points) {
        let (u, v) = (x - mx, y - my);
        let u2 = u * u;
        s2 += u2;
        s3 += u2 * u;
        s4 += u2 * u2;
        sv += v;
        suv += u * v;
        su2v += u2 * v;
    }
    let m = [[s4, s3, s2], [s3, s2, 0.0], [s2, 0.0, n]];
    let [p, s, t] = solve3(m, [su2v, suv, sv]).ok_or_else(|| Error::input("IsoFLOP points are degenerate"))?;
    let q = s - 2.0 * p * mx;
    let r = p * mx * mx - s * mx + t + my;
    let residual = xs
        .iter()
        .zip(points)
        .map(|(x, &(_, y))| {
            let u = x - mx;
            let e = y - my - (p * u * u + s * u + t);
            e * e
        })
        .sum();
    let optimal_d = (p > 0.0).then(|| libm::pow(10.0, mx - s / (2.0 * p)));
    Ok(IsoFlopFit { p, q, r, residual, optimal_d })
}

fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col] == 0.0 {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / m[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// `ΔL(tokens) = alpha + beta ln(tokens)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossGapFit {
    pub alpha: f64,
    pub beta: f64,
    /// Number of scratch-grid points used.
    pub points: usize,
    pub residual: f64,
}

impl LossGapFit {
    pub fn extrapolate(&self, tokens: f64) -> f64 {
        self.alpha + self.beta * libm::log(tokens)
    }
}

impl fmt::Display for LossGapFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "alpha={} beta={} points={} residual={:e}", self.alpha, self.beta, self.points, self.residual)
    }
}

/// Fits the loss difference `scratch - grown` against `ln(tokens)`. The
/// grown curve is linearly interpolated onto the scratch samples inside the
/// shared token range.
pub fn fit_loss_gap(scratch: &LossCurve, grown: &LossCurve) -> Result<LossGapFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in scratch.samples() {
        let t = s.tokens as f64;
        if t <= 0.0 {
            continue;
        }
        if let Some(lg) = grown.loss_at_tokens(t) {
            xs.push(libm::log(t));
            ys.push(s.loss - lg);
        }
    }
    if xs.len() < 2 {
        return Err(Error::input("the two curves share fewer than 2 token positions"));
    }
    require_distinct(&xs, "token")?;
    let (alpha, beta, residual) = line(&xs, &ys);
    Ok(LossGapFit { alpha, beta, points: xs.len(), residual })
}
