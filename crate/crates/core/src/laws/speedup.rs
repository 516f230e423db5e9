use alloc::string::String;

use crate::error::{Error, Result};
use crate::trainer::LossCurve;

/// FLOPs at which `curve` first reaches `target`, linearly interpolated
/// between the bracketing samples.
pub fn crossing_flops(curve: &LossCurve, target: f64) -> Option<f64> {
    let s = curve.samples();
    let i = s.iter().position(|x| x.loss <= target)?;
    if i == 0 {
        return Some(s[0].flops);
    }
    let (a, b) = (&s[i - 1], &s[i]);
    Some(a.flops + (b.flops - a.flops) * (a.loss - target) / (a.loss - b.loss))
}

/// `FLOPs_scratch / FLOPs_grown - 1` at the first crossing of `target`.
/// The grown curve's FLOPs must include the base model's training.
pub fn speedup(scratch: &LossCurve, grown: &LossCurve, target: f64) -> Result<f64> {
    let at = |c: &LossCurve, name: &str| {
        crossing_flops(c, target).ok_or_else(|| Error::Unreachable { curve: String::from(name), target })
    };
    let fs = at(scratch, "scratch")?;
    let fg = at(grown, "grown")?;
    if !(fg > 0.0) {
        return Err(Error::input("grown curve reaches the target at zero FLOPs"));
    }
    Ok(fs / fg - 1.0)
}
