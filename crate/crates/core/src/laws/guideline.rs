use core::fmt;

use crate::error::{Error, Result};
use crate::trainer::FLOPS_PER_PARAM_TOKEN;

/// Coefficients of `10^(a log10 N + b / log10 C + c)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GuidelineCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Base-model training tokens for stacking.
pub const STACKING_D: GuidelineCoeffs = GuidelineCoeffs { a: 0.88, b: 163.27, c: -5.74 };
/// Growth factor for stacking.
pub const STACKING_G: GuidelineCoeffs = GuidelineCoeffs { a: 1.01, b: -29.88, c: -7.36 };

/// The growth factor recommended regardless of scale.
const RECOMMENDED_G: u32 = 4;

impl GuidelineCoeffs {
    /// Evaluates the guideline at `n` parameters and `c` FLOPs.
    pub fn eval(&self, n: f64, c: f64) -> Result<f64> {
        if !(n > 0.0 && c > 0.0) {
            return Err(Error::input("guideline inputs must be positive"));
        }
        if libm::log10(c) == 0.0 {
            return Err(Error::input("guideline is undefined at C=1"));
        }
        let v = libm::pow(10.0, self.a * libm::log10(n) + self.b / libm::log10(c) + self.c);
        if !v.is_finite() {
            return Err(Error::input(alloc::format!("guideline is undefined at N={n:e}, C={c:e}")));
        }
        Ok(v)
    }
}

/// Training budget of the target model, as tokens or as FLOPs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Budget {
    Tokens(f64),
    Flops(f64),
}

impl Budget {
    /// FLOPs for `n` parameters (`6 N D` for a token budget).
    pub fn flops(self, n: f64) -> Result<f64> {
        match self {
            Budget::Tokens(d) if d > 0.0 => Ok(FLOPS_PER_PARAM_TOKEN as f64 * n * d),
            Budget::Flops(c) if c > 0.0 => Ok(c),
            _ => Err(Error::input("budget must be positive")),
        }
    }
}

/// Tokens to train the base model on before stacking into a model of `n`
/// parameters with the given budget.
pub fn guideline_d(n: f64, budget: Budget) -> Result<f64> {
    if !(n > 0.0) {
        return Err(Error::input("parameter count must be positive"));
    }
    STACKING_D.eval(n, budget.flops(n)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthGuideline {
    /// Value of the fitted equation.
    pub raw: f64,
    /// Factor to actually use.
    pub recommended: u32,
}

impl fmt::Display for GrowthGuideline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g={} g_raw={:.4}", self.recommended, self.raw)
    }
}

/// Growth factor for a model of `n` parameters trained with `c` FLOPs. The
/// fitted optimum is reported as `raw`; the recommendation is always 4.
pub fn guideline_g(n: f64, c: f64) -> Result<GrowthGuideline> {
    Ok(GrowthGuideline { raw: STACKING_G.eval(n, c)?, recommended: RECOMMENDED_G })
}
