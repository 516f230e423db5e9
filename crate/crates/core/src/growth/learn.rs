//! Learned growth: the grown weights are linear functions of the base
//! weights, and the linear maps are trained on the language-model loss.
//!
//! Width maps are `D x d` matrices shared by all layers. A base weight `W`
//! (outputs by inputs) expands to `B_out W B_inᵀ`; embedding and head
//! expand along their width only and norm gains to `B_norm μ`. Depth maps
//! are `L x l` matrices, one per per-layer tensor kind, mixing the
//! width-expanded base layers: `Θ_j = Σ_i D[j, i] W̃_i`.
//!
//! The maps start at the direct-growth solution (copy-and-split width maps,
//! one-hot whole-model stacking depth maps), so zero training steps return
//! exactly `grow_depth_stack(grow_width_direct(θ))`.

use alloc::vec;
use alloc::vec::Vec;

use super::pattern::OriginMap;
use super::prepare;
use super::width::{width_factor, DirectMaps};
use crate::error::{Error, Result};
use crate::model::{accumulate_gradients, forward_batch, lm_loss, LayerParams, ModelConfig, ParameterSet};
use crate::tensor::{gemm, Matrix, Scalar, View};
use crate::trainer::{Batch, TokenStream};

const EMB_OUT: usize = 0;
const EMB_IN: usize = 1;
const MAP_Q: usize = 2;
const MAP_K: usize = 3;
const MAP_V: usize = 4;
const ATTN_IN: usize = 5;
const MLP_OUT: usize = 6;
const MLP_IN: usize = 7;
const NORM: usize = 8;

/// Per-layer matrices in depth-map order with their (fan-out, fan-in) width maps.
const MATS: [(usize, usize); 7] = [
    (MAP_Q, EMB_IN),
    (MAP_K, EMB_IN),
    (MAP_V, EMB_IN),
    (EMB_OUT, ATTN_IN),
    (MLP_OUT, EMB_IN),
    (MLP_OUT, EMB_IN),
    (EMB_OUT, MLP_IN),
];
const KINDS: usize = 9;

/// Sequences per meta step.
const META_ROWS: usize = 4;
/// Global norm limit of the mapping gradient.
const META_CLIP: f64 = 1.0;

fn mat<T>(lp: &LayerParams<T>, m: usize) -> &Matrix<T> {
    match m {
        0 => &lp.wq,
        1 => &lp.wk,
        2 => &lp.wv,
        3 => &lp.wo,
        4 => &lp.w_up,
        5 => &lp.w_gate,
        _ => &lp.w_down,
    }
}

fn mat_mut<T>(lp: &mut LayerParams<T>, m: usize) -> &mut Matrix<T> {
    match m {
        0 => &mut lp.wq,
        1 => &mut lp.wk,
        2 => &mut lp.wv,
        3 => &mut lp.wo,
        4 => &mut lp.w_up,
        5 => &mut lp.w_gate,
        _ => &mut lp.w_down,
    }
}

fn gain<T>(lp: &LayerParams<T>, n: usize) -> &[T] {
    if n == 0 {
        &lp.norm_attn
    } else {
        &lp.norm_ffn
    }
}

fn gain_mut<T>(lp: &mut LayerParams<T>, n: usize) -> &mut Vec<T> {
    if n == 0 {
        &mut lp.norm_attn
    } else {
        &mut lp.norm_ffn
    }
}

fn prod<T: Scalar>(a: View<'_, T>, b: View<'_, T>) -> Matrix<T> {
    let mut c = Matrix::zeros(a.rows(), b.cols());
    gemm(T::one(), a, b, T::zero(), c.view_mut());
    c
}

fn add_prod<T: Scalar>(a: View<'_, T>, b: View<'_, T>, c: &mut Matrix<T>) {
    gemm(T::one(), a, b, T::one(), c.view_mut());
}

fn mat_vec<T: Scalar>(b: &Matrix<T>, v: &[T]) -> Vec<T> {
    let col = View::new(v, 0, v.len(), 1, 1, 1);
    prod(b.view(), col).into_vec()
}

/// Trainable mapping from base to grown parameters.
#[derive(Clone, Debug)]
struct Mapping<T> {
    width: [Matrix<T>; 9],
    depth: [Matrix<T>; KINDS],
}

impl<T: Scalar> Mapping<T> {
    fn warm_start(small: &ModelConfig, large: &ModelConfig, g_w: usize, origin: &OriginMap, seed: u64) -> Self {
        let maps = DirectMaps::draw(small, g_w, seed);
        let scale = T::lift(libm::sqrt(small.d_model as f64 / large.d_model as f64));
        let norm = maps.resid.copies().to_matrix::<T>().map(|x| x * scale);
        let width = [
            maps.resid.copies().to_matrix(),
            maps.resid.to_matrix(),
            maps.attn.copies().to_matrix(),
            maps.attn.copies().to_matrix(),
            maps.attn.copies().to_matrix(),
            maps.attn.to_matrix(),
            maps.ffn.copies().to_matrix(),
            maps.ffn.to_matrix(),
            norm,
        ];
        let mut one_hot = Matrix::zeros(large.n_layers, small.n_layers);
        for (j, &o) in origin.as_slice().iter().enumerate() {
            one_hot.set(j, o - 1, T::one());
        }
        Mapping { width, depth: core::array::from_fn(|_| one_hot.clone()) }
    }

    fn zeros_like(&self) -> Self {
        let z = |m: &Matrix<T>| Matrix::zeros(m.rows(), m.cols());
        Mapping {
            width: core::array::from_fn(|i| z(&self.width[i])),
            depth: core::array::from_fn(|i| z(&self.depth[i])),
        }
    }

    fn all(&self) -> impl Iterator<Item = &Matrix<T>> {
        self.width.iter().chain(self.depth.iter())
    }

    fn all_mut(&mut self) -> impl Iterator<Item = &mut Matrix<T>> {
        self.width.iter_mut().chain(self.depth.iter_mut())
    }

    /// `B_out W B_inᵀ` for per-layer matrix kind `m`.
    fn expand(&self, w: &Matrix<T>, m: usize) -> Matrix<T> {
        let (o, i) = MATS[m];
        let mid = prod(w.view(), self.width[i].t());
        prod(self.width[o].view(), mid.view())
    }
}

/// Width-expanded base layers, kept for the depth-map gradients.
struct Expanded<T> {
    mats: Vec<[Matrix<T>; 7]>,
    gains: Vec<[Vec<T>; 2]>,
}

fn expand_layers<T: Scalar>(map: &Mapping<T>, small: &ParameterSet<T>) -> Expanded<T> {
    let mats = small.layers.iter().map(|lp| core::array::from_fn(|m| map.expand(mat(lp, m), m))).collect();
    let gains =
        small.layers.iter().map(|lp| core::array::from_fn(|n| mat_vec(&map.width[NORM], gain(lp, n)))).collect();
    Expanded { mats, gains }
}

fn reconstruct<T: Scalar>(
    map: &Mapping<T>,
    small: &ParameterSet<T>,
    large: &ModelConfig,
) -> (ParameterSet<T>, Expanded<T>) {
    let ex = expand_layers(map, small);
    let mut out = ParameterSet::zeros(large);
    for (j, lp) in out.layers.iter_mut().enumerate() {
        for m in 0..7 {
            let dst = mat_mut(lp, m).as_mut_slice();
            for (i, src) in ex.mats.iter().enumerate() {
                let c = map.depth[m].get(j, i);
                dst.iter_mut().zip(src[m].as_slice()).for_each(|(d, &s)| *d = *d + c * s);
            }
        }
        for n in 0..2 {
            let dst = gain_mut(lp, n);
            for (i, src) in ex.gains.iter().enumerate() {
                let c = map.depth[7 + n].get(j, i);
                dst.iter_mut().zip(&src[n]).for_each(|(d, &s)| *d = *d + c * s);
            }
        }
    }
    out.embedding = prod(small.embedding.view(), map.width[EMB_OUT].t());
    out.head = prod(small.head.view(), map.width[EMB_IN].t());
    out.norm_final = mat_vec(&map.width[NORM], &small.norm_final);
    (out, ex)
}

/// Mapping gradient from the gradient of the reconstructed parameters.
fn pull_back<T: Scalar>(
    map: &Mapping<T>,
    small: &ParameterSet<T>,
    ex: &Expanded<T>,
    grads: &ParameterSet<T>,
) -> Mapping<T> {
    let mut dm = map.zeros_like();
    let l_small = small.layers.len();
    for (i, lp) in small.layers.iter().enumerate() {
        for m in 0..7 {
            let mut dw = Matrix::zeros(ex.mats[i][m].rows(), ex.mats[i][m].cols());
            for (j, gl) in grads.layers.iter().enumerate() {
                let g = mat(gl, m);
                let dot: f64 =
                    g.as_slice().iter().zip(ex.mats[i][m].as_slice()).map(|(a, b)| a.as_f64() * b.as_f64()).sum();
                dm.depth[m].set(j, i, T::lift(dot));
                let c = map.depth[m].get(j, i);
                dw.as_mut_slice().iter_mut().zip(g.as_slice()).for_each(|(d, &s)| *d = *d + c * s);
            }
            let (o, inp) = MATS[m];
            let w = mat(lp, m);
            let mid = prod(w.view(), map.width[inp].t());
            add_prod(dw.view(), mid.t(), &mut dm.width[o]);
            let left = prod(map.width[o].view(), w.view());
            add_prod(dw.t(), left.view(), &mut dm.width[inp]);
        }
        for n in 0..2 {
            let mut dg = vec![T::zero(); ex.gains[i][n].len()];
            for (j, gl) in grads.layers.iter().enumerate() {
                let g = gain(gl, n);
                let dot: f64 = g.iter().zip(&ex.gains[i][n]).map(|(a, b)| a.as_f64() * b.as_f64()).sum();
                dm.depth[7 + n].set(j, i, T::lift(dot));
                let c = map.depth[7 + n].get(j, i);
                dg.iter_mut().zip(g).for_each(|(d, &s)| *d = *d + c * s);
            }
            add_outer(&dg, gain(lp, n), &mut dm.width[NORM]);
        }
    }
    debug_assert_eq!(l_small, map.depth[0].cols());
    add_outer(&grads.norm_final, &small.norm_final, &mut dm.width[NORM]);
    add_prod(grads.embedding.t(), small.embedding.view(), &mut dm.width[EMB_OUT]);
    add_prod(grads.head.t(), small.head.view(), &mut dm.width[EMB_IN]);
    dm
}

fn add_outer<T: Scalar>(a: &[T], b: &[T], out: &mut Matrix<T>) {
    for (r, &x) in a.iter().enumerate() {
        out.row_mut(r).iter_mut().zip(b).for_each(|(o, &y)| *o = *o + x * y);
    }
}

fn batch_loss<T: Scalar>(params: &ParameterSet<T>, config: &ModelConfig, batch: &Batch) -> Result<f64> {
    let logits = forward_batch(params, config, &batch.inputs, batch.seq)?;
    lm_loss(&logits, &batch.targets)
}

/// Result of [`grow_learn`].
#[derive(Clone, Debug)]
pub struct LearnOutcome<T> {
    pub params: ParameterSet<T>,
    pub config: ModelConfig,
    /// LM loss of the reconstructed model on a fixed evaluation batch before
    /// the first step and after every step (`meta_steps + 1` entries).
    pub losses: Vec<f64>,
}

/// Grows `params_small` to `config_large` through trained linear maps.
///
/// `config_large` may be wider (every width dimension the same integer
/// multiple, equal head size) and/or deeper (an integer multiple of layers).
/// The maps are trained with gradient descent (global gradient norm clipped
/// to 1) for `meta_steps` steps of `meta_lr` on batches of `corpus`.
pub fn grow_learn<T: Scalar>(
    params_small: &ParameterSet<T>,
    config_small: &ModelConfig,
    config_large: &ModelConfig,
    corpus: &TokenStream,
    meta_steps: usize,
    meta_lr: f64,
    seed: u64,
) -> Result<LearnOutcome<T>> {
    let small = prepare(params_small, config_small)?;
    config_large.validate()?;
    let g_w = width_factor(config_small, config_large)?;
    if config_large.n_layers % config_small.n_layers != 0 {
        return Err(Error::input(alloc::format!(
            "grown depth {} is not a multiple of base depth {}",
            config_large.n_layers,
            config_small.n_layers
        )));
    }
    if !(meta_lr.is_finite() && meta_lr >= 0.0) {
        return Err(Error::input("meta learning rate must be finite and non-negative"));
    }
    let g_d = config_large.n_layers / config_small.n_layers;
    let origin = OriginMap::repeated(config_small.n_layers, g_d);
    let mut map = Mapping::warm_start(config_small, config_large, g_w, &origin, seed);

    let rows = META_ROWS.min(corpus.windows());
    let mut cursor = corpus.cursor();
    let eval = corpus.next_batch(&mut corpus.cursor(), rows);
    let (mut theta, mut ex) = reconstruct(&map, &small, config_large);
    let mut losses = vec![batch_loss(&theta, config_large, &eval)?];
    for _ in 0..meta_steps {
        let batch = corpus.next_batch(&mut cursor, rows);
        let mut grads = theta.zeros_like();
        let n = batch.targets.len() as f64;
        accumulate_gradients(
            &theta,
            config_large,
            &batch.inputs,
            &batch.targets,
            batch.seq,
            None,
            1.0 / n,
            &mut grads,
        )?;
        let dm = pull_back(&map, &small, &ex, &grads);
        let norm = libm::sqrt(dm.all().flat_map(|m| m.as_slice()).map(|x| x.as_f64() * x.as_f64()).sum::<f64>());
        let step = meta_lr * if norm > META_CLIP { META_CLIP / norm } else { 1.0 };
        let step = T::lift(step);
        for (p, g) in map.all_mut().zip(dm.all()) {
            p.as_mut_slice().iter_mut().zip(g.as_slice()).for_each(|(p, &g)| *p = *p - step * g);
        }
        (theta, ex) = reconstruct(&map, &small, config_large);
        losses.push(batch_loss(&theta, config_large, &eval)?);
    }
    Ok(LearnOutcome { params: theta, config: *config_large, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth::depth::{grow_depth_stack, stack_by_pattern};
    use crate::growth::width::grow_width_direct;
    use crate::model::init_params;

    fn small() -> ModelConfig {
        ModelConfig { vocab_size: 12, d_model: 8, d_ffn: 8, n_heads: 2, head_dim: 4, n_layers: 2, max_seq_len: 8 }
    }

    fn corpus() -> TokenStream {
        let tokens = (0..400u32).map(|i| (i * 7 + i / 3) % 12).collect();
        TokenStream::new(tokens, 9, 1).unwrap()
    }

    #[test]
    fn zero_steps_reproduce_direct_growth() {
        let p = init_params::<f32>(&small(), 3).unwrap();
        let large = small().widened(2).with_layers(4);
        let out = grow_learn(&p, &small(), &large, &corpus(), 0, 0.1, 17).unwrap();
        let (w, wc) = grow_width_direct(&p, &small(), 2, 17).unwrap();
        let (s, sc, _) = grow_depth_stack(&w, &wc, 2).unwrap();
        assert_eq!(sc, large);
        assert_eq!(out.params, s);
        assert_eq!(out.losses.len(), 1);
    }

    #[test]
    fn one_hot_depth_maps_reproduce_pattern_stacking() {
        let p = init_params::<f64>(&small(), 3).unwrap();
        let large = small().with_layers(6);
        let origin = OriginMap::new(alloc::vec![1, 2, 1, 2, 1, 2], 2).unwrap();
        let mut map = Mapping::warm_start(&small(), &large, 1, &origin, 0);
        map.depth.iter_mut().for_each(|d| {
            d.fill(0.0);
            for (j, &o) in [2, 1, 1, 2, 2, 2].iter().enumerate() {
                d.set(j, o - 1, 1.0);
            }
        });
        let (theta, _) = reconstruct(&map, &p, &large);
        let custom = OriginMap::new(alloc::vec![2, 1, 1, 2, 2, 2], 2).unwrap();
        assert_eq!(theta, stack_by_pattern(&p, &small(), &custom).unwrap().0);
    }

    #[test]
    fn mapping_gradient_matches_finite_differences() {
        let p = init_params::<f64>(&small(), 5).unwrap();
        let large = small().widened(2).with_layers(4);
        let origin = OriginMap::repeated(2, 2);
        let mut map = Mapping::warm_start(&small(), &large, 2, &origin, 4);
        // Move away from the one-hot start so every map entry matters.
        for (k, m) in map.all_mut().enumerate() {
            m.as_mut_slice()
                .iter_mut()
                .enumerate()
                .for_each(|(i, x)| *x += 0.01 * (((i * 31 + k * 7) % 13) as f64 - 6.0) / 6.0);
        }
        let batch = corpus().next_batch(&mut corpus().cursor(), 2);
        let loss = |m: &Mapping<f64>| batch_loss(&reconstruct(m, &p, &large).0, &large, &batch).unwrap();
        let (theta, ex) = reconstruct(&map, &p, &large);
        let mut grads = theta.zeros_like();
        let n = batch.targets.len() as f64;
        accumulate_gradients(&theta, &large, &batch.inputs, &batch.targets, batch.seq, None, 1.0 / n, &mut grads)
            .unwrap();
        let dm = pull_back(&map, &p, &ex, &grads);
        let eps = 1e-5;
        for k in [EMB_OUT, EMB_IN, MAP_Q, ATTN_IN, MLP_IN, NORM, 9, 12, 16, 17] {
            for idx in [0usize, 5, 9] {
                let mut plus = map.clone();
                let mut minus = map.clone();
                fn pick(m: &mut Mapping<f64>, k: usize) -> &mut Matrix<f64> {
                    if k < 9 {
                        &mut m.width[k]
                    } else {
                        &mut m.depth[k - 9]
                    }
                }
                let len = pick(&mut plus, k).as_slice().len();
                let idx = idx % len;
                pick(&mut plus, k).as_mut_slice()[idx] += eps;
                pick(&mut minus, k).as_mut_slice()[idx] -= eps;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
                let analytic = if k < 9 { dm.width[k].as_slice()[idx] } else { dm.depth[k - 9].as_slice()[idx] };
                let err = (numeric - analytic).abs();
                assert!(
                    err <= 1e-4 * numeric.abs().max(analytic.abs()) + 1e-10,
                    "map {k} entry {idx}: analytic {analytic} numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn meta_training_lowers_loss() {
        let p = init_params::<f32>(&small(), 3).unwrap();
        let large = small().widened(2).with_layers(4);
        let out = grow_learn(&p, &small(), &large, &corpus(), 50, 0.05, 2).unwrap();
        assert_eq!(out.losses.len(), 51);
        assert!(out.losses[50] <= out.losses[0], "{:?}", out.losses);
        out.params.validate(&large).unwrap();
    }

    #[test]
    fn non_multiple_dimensions_are_rejected() {
        let p = init_params::<f32>(&small(), 3).unwrap();
        assert!(grow_learn(&p, &small(), &small().widened(3), &corpus(), 0, 0.1, 0).is_ok());
        let bad = ModelConfig { d_model: 12, n_heads: 3, ..small() };
        assert!(grow_learn(&p, &small(), &bad, &corpus(), 0, 0.1, 0).is_err());
        assert!(grow_learn(&p, &small(), &small().with_layers(3), &corpus(), 0, 0.1, 0).is_err());
    }
}
