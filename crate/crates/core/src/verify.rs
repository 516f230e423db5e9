//! Function-preservation and gradient checks.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::model::{accumulate_gradients, forward_batch, lm_loss, ModelConfig, ParameterSet};
use crate::rng;
use crate::tensor::Scalar;

/// Floor on the denominator of relative deviations.
pub const REL_FLOOR: f64 = 1e-8;

/// Largest model `grad_check` accepts; the check costs two forwards per entry.
pub const GRAD_CHECK_LIMIT: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Preserving,
    NonPreserving,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Preserving => "preserving",
            Verdict::NonPreserving => "non-preserving",
        }
    }
}

/// Outcome of comparing a grown model against its base on random inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct FpReport {
    pub operator: String,
    pub n_batches: usize,
    /// Max over batches/positions/logits of `|grown - base| / (|base| + 1e-8)`.
    pub max_deviation: f64,
    pub mean_deviation: f64,
    /// Same statistic with the roles of the two models swapped.
    pub max_deviation_reverse: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

impl fmt::Display for FpReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "operator={} batches={} max_rel_dev={:e} mean_rel_dev={:e} max_rel_dev_reverse={:e} tol={:e} verdict={}",
            self.operator,
            self.n_batches,
            self.max_deviation,
            self.mean_deviation,
            self.max_deviation_reverse,
            self.tolerance,
            self.verdict.as_str()
        )
    }
}

/// Settings for [`fp_deviation`].
#[derive(Clone, Debug)]
pub struct FpCheck {
    pub label: String,
    pub batches: usize,
    /// Sequences per batch.
    pub batch_size: usize,
    /// Capped at both models' `max_seq_len`.
    pub seq_len: usize,
    pub seed: u64,
    pub tolerance: f64,
}

impl FpCheck {
    pub fn new(label: impl Into<String>, batches: usize, seed: u64, tolerance: f64) -> Self {
        FpCheck { label: label.into(), batches, batch_size: 2, seq_len: 16, seed, tolerance }
    }
}

/// Compares logits of `grown` and `base` on random token batches.
///
/// Both models are evaluated in `f64` so the comparison measures the
/// operator, not accumulated single-precision rounding.
pub fn fp_deviation<T: Scalar>(
    base: &ParameterSet<T>,
    base_config: &ModelConfig,
    grown: &ParameterSet<T>,
    grown_config: &ModelConfig,
    check: &FpCheck,
) -> Result<FpReport> {
    if base_config.vocab_size != grown_config.vocab_size {
        return Err(Error::input(format!(
            "vocabulary sizes differ: base {} vs grown {}",
            base_config.vocab_size, grown_config.vocab_size
        )));
    }
    if check.batches == 0 || check.batch_size == 0 {
        return Err(Error::input("at least one batch of one sequence is required"));
    }
    let base64 = base.cast::<f64>();
    let grown64 = grown.cast::<f64>();
    let seq_len = check.seq_len.min(base_config.max_seq_len).min(grown_config.max_seq_len).max(1);
    let mut r = rng::rng(check.seed, 7);
    let (mut max, mut max_rev, mut sum, mut count) = (0.0f64, 0.0f64, 0.0f64, 0usize);
    for _ in 0..check.batches {
        let tokens: Vec<u32> =
            (0..seq_len * check.batch_size).map(|_| r.random_range(0..base_config.vocab_size as u32)).collect();
        let lb = forward_batch(&base64, base_config, &tokens, seq_len)?;
        let lg = forward_batch(&grown64, grown_config, &tokens, seq_len)?;
        for (&b, &g) in lb.as_slice().iter().zip(lg.as_slice()) {
            let diff = (g - b).abs();
            let dev = diff / (b.abs() + REL_FLOOR);
            let rev = diff / (g.abs() + REL_FLOOR);
            max = max.max(dev);
            max_rev = max_rev.max(rev);
            sum += dev;
            count += 1;
        }
    }
    let verdict = if max <= check.tolerance { Verdict::Preserving } else { Verdict::NonPreserving };
    Ok(FpReport {
        operator: check.label.clone(),
        n_batches: check.batches,
        max_deviation: max,
        mean_deviation: sum / count as f64,
        max_deviation_reverse: max_rev,
        tolerance: check.tolerance,
        verdict,
    })
}

/// Random parameters at unit activation scale for gradient checks.
///
/// Embedding entries are standard normal, every linear map has standard
/// deviation `1/sqrt(fan_in)` and norm gains are uniform in `[0.5, 1.5]`.
/// At the 0.02 training-init scale a finite-difference step of `1e-3` is a
/// few percent of a typical embedding entry, and the truncation error of the
/// difference quotient dominates the comparison.
pub fn unit_scale_params(config: &ModelConfig, seed: u64) -> Result<ParameterSet<f64>> {
    let mut p = crate::model::init_params::<f64>(config, seed)?;
    let mut r = rng::rng(seed, 11);
    p.for_each_mut(|_, kind, data| {
        use crate::model::TensorKind::*;
        let std = match kind {
            Embedding => 1.0,
            Attention | AttentionOut | Head => 1.0 / libm::sqrt(config.d_model as f64),
            FfnIn => 1.0 / libm::sqrt(config.d_model as f64),
            FfnOut => 1.0 / libm::sqrt(config.d_ffn as f64),
            Norm => 0.0,
        };
        for x in data.iter_mut() {
            *x = if kind == Norm { rng::uniform(&mut r, 0.5, 1.5) } else { rng::normal(&mut r, std) };
        }
    });
    Ok(p)
}

/// Result of a finite-difference gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Tensor name and flat index where the maximum occurred.
    pub worst: (String, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub entries: usize,
}

/// Compares backward against central differences on every parameter entry.
///
/// Runs in `f64`. Relative error per entry is
/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<T: Scalar>(
    params: &ParameterSet<T>,
    config: &ModelConfig,
    tokens: &[u32],
    targets: &[u32],
    seq_len: usize,
    epsilon: f64,
) -> Result<GradCheck> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::input(format!("epsilon must be positive and finite, got {epsilon}")));
    }
    let n = params.num_params();
    if n > GRAD_CHECK_LIMIT {
        return Err(Error::TooLarge { params: n, limit: GRAD_CHECK_LIMIT });
    }
    let mut p = params.cast::<f64>();
    let mut grads = p.zeros_like();
    let positions = targets.len().max(1) as f64;
    accumulate_gradients(&p, config, tokens, targets, seq_len, None, 1.0 / positions, &mut grads)?;

    let loss = |p: &ParameterSet<f64>| -> Result<f64> { lm_loss(&forward_batch(p, config, tokens, seq_len)?, targets) };
    let mut names = Vec::new();
    params.for_each(|name, _, _| names.push(String::from(name)));
    let analytic: Vec<Vec<f64>> = {
        let mut v = Vec::new();
        grads.for_each(|_, _, d| v.push(d.to_vec()));
        v
    };

    let mut out = GradCheck { max_rel_error: 0.0, worst: (String::new(), 0), analytic: 0.0, numeric: 0.0, entries: 0 };
    for (ti, a_tensor) in analytic.iter().enumerate() {
        for (e, &a) in a_tensor.iter().enumerate() {
            let orig = p.slices_mut()[ti][e];
            p.slices_mut()[ti][e] = orig + epsilon;
            let plus = loss(&p)?;
            p.slices_mut()[ti][e] = orig - epsilon;
            let minus = loss(&p)?;
            p.slices_mut()[ti][e] = orig;
            let num = (plus - minus) / (2.0 * epsilon);
            let rel = (a - num).abs() / a.abs().max(num.abs()).max(REL_FLOOR);
            out.entries += 1;
            if rel > out.max_rel_error || out.worst.0.is_empty() {
                out.max_rel_error = rel.max(out.max_rel_error);
                out.worst = (names[ti].clone(), e);
                out.analytic = a;
                out.numeric = num;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    fn tiny() -> ModelConfig {
        ModelConfig { vocab_size: 11, d_model: 8, d_ffn: 16, n_heads: 2, head_dim: 4, n_layers: 2, max_seq_len: 5 }
    }

    #[test]
    fn identical_models_deviate_by_nothing() {
        let c = tiny();
        let p = init_params::<f32>(&c, 3).unwrap();
        let q = p.clone();
        let r = fp_deviation(&p, &c, &q, &c, &FpCheck::new("copy", 4, 1, 1e-4)).unwrap();
        assert!(r.max_deviation <= 1e-7);
        assert_eq!(r.verdict, Verdict::Preserving);
        assert!(r.max_deviation >= r.mean_deviation && r.mean_deviation >= 0.0);
    }

    #[test]
    fn vocab_mismatch_is_rejected() {
        let c = tiny();
        let c2 = ModelConfig { vocab_size: 12, ..c };
        let p = init_params::<f32>(&c, 3).unwrap();
        let q = init_params::<f32>(&c2, 3).unwrap();
        assert!(fp_deviation(&p, &c, &q, &c2, &FpCheck::new("x", 1, 1, 1e-4)).is_err());
    }

    #[test]
    fn report_is_one_key_value_line() {
        let c = tiny();
        let p = init_params::<f32>(&c, 3).unwrap();
        let line = fp_deviation(&p, &c, &p, &c, &FpCheck::new("copy", 2, 1, 1e-4)).unwrap().to_string();
        assert!(!line.contains('\n'));
        assert!(line.contains("verdict=preserving"));
        assert!(line.split(' ').all(|kv| kv.contains('=')));
    }

    #[test]
    fn zero_epsilon_is_rejected() {
        let c = tiny();
        let p = init_params::<f32>(&c, 3).unwrap();
        assert!(matches!(grad_check(&p, &c, &[1, 2], &[2, 3], 2, 0.0), Err(Error::Input(_))));
    }

    #[test]
    fn large_models_are_refused() {
        let c = ModelConfig {
            vocab_size: 256,
            d_model: 64,
            d_ffn: 256,
            n_heads: 4,
            head_dim: 16,
            n_layers: 2,
            max_seq_len: 4,
        };
        let p = init_params::<f32>(&c, 3).unwrap();
        assert!(matches!(grad_check(&p, &c, &[1], &[2], 1, 1e-3), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn smallest_model_passes_grad_check() {
        let c =
            ModelConfig { vocab_size: 2, d_model: 2, d_ffn: 2, n_heads: 1, head_dim: 2, n_layers: 1, max_seq_len: 3 };
        let p = unit_scale_params(&c, 5).unwrap();
        let r = grad_check(&p, &c, &[0, 1, 1], &[1, 1, 0], 3, 1e-3).unwrap();
        assert!(r.max_rel_error <= 1e-3, "{r:?}");
    }

    #[test]
    fn dead_coordinate_gain_has_zero_gradient_both_ways() {
        // A zero embedding column keeps that residual coordinate at zero in
        // front of the first norm, so its first gain does not affect the loss.
        let c =
            ModelConfig { vocab_size: 5, d_model: 4, d_ffn: 4, n_heads: 2, head_dim: 2, n_layers: 1, max_seq_len: 3 };
        let mut p = unit_scale_params(&c, 5).unwrap();
        for r in 0..5 {
            p.embedding.set(r, 3, 0.0);
        }
        let mut g = p.zeros_like();
        accumulate_gradients(&p, &c, &[1, 2, 3], &[2, 3, 4], 3, None, 1.0 / 3.0, &mut g).unwrap();
        assert_eq!(g.layers[0].norm_attn[3], 0.0);
        let r = grad_check(&p, &c, &[1, 2, 3], &[2, 3, 4], 3, 1e-3).unwrap();
        assert!(r.max_rel_error <= 1e-3, "{r:?}");
    }
}
