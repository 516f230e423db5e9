//! AdamW with decoupled weight decay on weight matrices.

use alloc::vec::Vec;

use super::TrainConfig;
use crate::model::{ParameterSet, TensorKind};
use crate::tensor::Scalar;

/// First and second moment estimates for every parameter.
#[derive(Clone, Debug)]
pub struct AdamW<T> {
    m: ParameterSet<T>,
    v: ParameterSet<T>,
    t: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
}

impl<T: Scalar> AdamW<T> {
    /// Fresh state shaped like `params`.
    pub fn new(params: &ParameterSet<T>, config: &TrainConfig) -> Self {
        AdamW {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.adam_eps,
            weight_decay: config.weight_decay,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// One update with learning rate `lr`; `grads` are used as given.
    /// Norm gains are not decayed.
    pub fn step(&mut self, params: &mut ParameterSet<T>, grads: &ParameterSet<T>, lr: f64) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - libm::pow(b1, f64::from(self.t));
        let c2 = 1.0 - libm::pow(b2, f64::from(self.t));
        let mut kinds = Vec::new();
        let mut g_slices = Vec::new();
        grads.for_each(|_, kind, g| {
            kinds.push(kind);
            g_slices.push(g);
        });
        let ms = self.m.slices_mut();
        let vs = self.v.slices_mut();
        let ps = params.slices_mut();
        for ((((p, m), v), g), kind) in ps.into_iter().zip(ms).zip(vs).zip(g_slices).zip(kinds) {
            let decay = if kind == TensorKind::Norm { 0.0 } else { lr * self.weight_decay };
            for i in 0..p.len() {
                let gi = g[i].as_f64();
                let mi = b1 * m[i].as_f64() + (1.0 - b1) * gi;
                let vi = b2 * v[i].as_f64() + (1.0 - b2) * gi * gi;
                m[i] = T::lift(mi);
                v[i] = T::lift(vi);
                let update = (mi / c1) / (libm::sqrt(vi / c2) + self.eps);
                let pi = p[i].as_f64();
                p[i] = T::lift(pi - decay * pi - lr * update);
            }
        }
    }
}

/// Scales `grads` so their global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_grad_norm<T: Scalar>(grads: &mut ParameterSet<T>, max_norm: f64) -> f64 {
    let norm = libm::sqrt(grads.sq_norm());
    if norm > max_norm && norm.is_finite() {
        let s = T::lift(max_norm / norm);
        grads.for_each_mut(|_, _, g| g.iter_mut().for_each(|x| *x = *x * s));
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ModelConfig};

    fn cfg() -> ModelConfig {
        ModelConfig { vocab_size: 4, d_model: 4, d_ffn: 4, n_heads: 1, head_dim: 4, n_layers: 1, max_seq_len: 4 }
    }

    #[test]
    fn first_step_moves_by_lr() {
        let tc = TrainConfig { weight_decay: 0.0, ..Default::default() };
        let mut p = init_params::<f64>(&cfg(), 1).unwrap();
        let before = p.clone();
        let mut g = p.zeros_like();
        g.for_each_mut(|_, _, s| s.iter_mut().for_each(|x| *x = 0.5));
        let mut opt = AdamW::new(&p, &tc);
        opt.step(&mut p, &g, 0.01);
        // m̂ = g, v̂ = g², so every entry moves by lr * g / (|g| + eps).
        let d = before.embedding.get(0, 0) - p.embedding.get(0, 0);
        assert!((d - 0.01).abs() < 1e-9);
    }

    #[test]
    fn decay_skips_norm_gains() {
        let tc = TrainConfig { weight_decay: 0.5, ..Default::default() };
        let mut p = init_params::<f64>(&cfg(), 1).unwrap();
        let before = p.clone();
        let g = p.zeros_like();
        AdamW::new(&p, &tc).step(&mut p, &g, 0.1);
        assert_eq!(p.norm_final, before.norm_final);
        assert!((p.head.get(1, 1) - 0.95 * before.head.get(1, 1)).abs() < 1e-15);
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let p = init_params::<f64>(&cfg(), 1).unwrap();
        let mut g = p.clone();
        let before = clip_grad_norm(&mut g, 1e-3);
        assert!(before > 1e-3);
        assert!((libm::sqrt(g.sq_norm()) - 1e-3).abs() < 1e-12);
    }
}
