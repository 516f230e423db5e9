//! Noise injection `(1 − α) W + α ε` after growth.

use super::SEED_NOISE;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ParameterSet, TensorKind};
use crate::rng;
use crate::tensor::Scalar;

/// Standard deviation of the noise mixed into a tensor of `kind`, or `None`
/// for tensors left untouched (norm gains).
pub fn noise_std(kind: TensorKind, config: &ModelConfig) -> Option<f64> {
    let d = config.d_model as f64;
    let l = config.n_layers.max(1) as f64;
    match kind {
        TensorKind::AttentionOut | TensorKind::FfnOut => Some(libm::sqrt(1.0 / (d * l * l))),
        TensorKind::Embedding | TensorKind::Attention | TensorKind::FfnIn | TensorKind::Head => {
            Some(libm::sqrt(2.0 / (5.0 * d)))
        }
        TensorKind::Norm => None,
    }
}

/// Replaces every weight matrix by `(1 − α) W + α ε` with
/// `ε ~ N(0, 1 / (d l²))` for the attention output and SwiGLU down
/// projections and `ε ~ N(0, 2 / (5 d))` for all other matrices. Norm gains
/// are kept.
pub fn inject_noise<T: Scalar>(
    params: &ParameterSet<T>,
    config: &ModelConfig,
    alpha: f64,
    seed: u64,
) -> Result<ParameterSet<T>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::input(alloc::format!("noise ratio {alpha} is outside [0, 1]")));
    }
    params.check_shapes(config)?;
    let mut out = params.clone();
    if alpha == 0.0 {
        return Ok(out);
    }
    let mut r = rng::rng(seed, SEED_NOISE);
    out.for_each_mut(|_, kind, data| {
        let Some(std) = noise_std(kind, config) else { return };
        for w in data.iter_mut() {
            let eps: f64 = rng::normal(&mut r, std);
            *w = T::lift((1.0 - alpha) * w.as_f64() + alpha * eps);
        }
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    fn cfg(d: usize) -> ModelConfig {
        ModelConfig { vocab_size: 8, d_model: d, d_ffn: 8, n_heads: 2, head_dim: d / 2, n_layers: 2, max_seq_len: 4 }
    }

    #[test]
    fn zero_ratio_is_identity() {
        let p = init_params::<f32>(&cfg(8), 1).unwrap();
        assert_eq!(inject_noise(&p, &cfg(8), 0.0, 5).unwrap(), p);
    }

    #[test]
    fn ratio_out_of_range_is_rejected() {
        let p = init_params::<f32>(&cfg(8), 1).unwrap();
        assert!(inject_noise(&p, &cfg(8), 1.5, 5).is_err());
        assert!(inject_noise(&p, &cfg(8), -0.1, 5).is_err());
        assert!(inject_noise(&p, &cfg(8), f64::NAN, 5).is_err());
    }

    #[test]
    fn full_noise_has_declared_variance() {
        let c = cfg(320);
        let p = init_params::<f64>(&c, 1).unwrap();
        let q = inject_noise(&p, &c, 1.0, 9).unwrap();
        let w = q.layers[0].wo.as_slice();
        assert!(w.len() >= 100_000);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (w.len() - 1) as f64;
        let want = 1.0 / (320.0 * 4.0);
        assert!((var / want - 1.0).abs() < 0.1, "variance {var} vs {want}");
        assert_eq!(q.layers[0].norm_attn, p.layers[0].norm_attn);
    }

    #[test]
    fn noise_is_seeded() {
        let p = init_params::<f32>(&cfg(8), 1).unwrap();
        let a = inject_noise(&p, &cfg(8), 0.2, 5).unwrap();
        assert_eq!(a, inject_noise(&p, &cfg(8), 0.2, 5).unwrap());
        assert_ne!(a, inject_noise(&p, &cfg(8), 0.2, 6).unwrap());
    }
}
