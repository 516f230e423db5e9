//! Random initialization behind multiplicative masks.

use alloc::vec;
use alloc::vec::Vec;

use super::plan::{Direction, GrowthPlan};
use super::width::{embed_block, extend_gain};
use super::{prepare, SEED_RANDOM};
use crate::error::Result;
use crate::model::{random_layer, Gates, LayerParams, ModelConfig, ParameterSet};
use crate::rng;
use crate::tensor::{Matrix, Scalar};

/// Gate values of a masked model and their ramp horizon.
pub type MaskSet<T> = Gates<T>;

/// Linear ramp `min(step / horizon, 1)`; a zero horizon is already open.
pub fn mask_schedule(step: usize, horizon: usize) -> f64 {
    if horizon == 0 || step >= horizon {
        1.0
    } else {
        step as f64 / horizon as f64
    }
}

/// Sets every gate of `params` to `mask_schedule(step, horizon)`. Returns the
/// value applied, or `None` when the model has no gates.
pub fn apply_schedule<T: Scalar>(params: &mut ParameterSet<T>, step: usize, horizon: usize) -> Option<f64> {
    let gates = params.gates.as_mut()?;
    let v = mask_schedule(step, horizon);
    gates.set_all(T::lift(v));
    Some(v)
}

/// Multiplies every gate into the weights it scales and drops the gates.
/// The result computes the same function up to rounding.
pub fn fold_gates<T: Scalar>(params: &mut ParameterSet<T>) {
    let Some(g) = params.gates.take() else { return };
    scale_cols(&mut params.embedding, g.base_d_model, g.embed);
    for (i, lp) in params.layers.iter_mut().enumerate() {
        let w = g.width[i];
        let b = g.block[i].unwrap_or(T::one());
        for m in [&mut lp.wq, &mut lp.wk, &mut lp.wv] {
            scale_rows(m, g.base_d_model, w);
        }
        for m in [&mut lp.w_up, &mut lp.w_gate] {
            scale_rows(m, g.base_d_ffn, w);
        }
        for m in [&mut lp.wo, &mut lp.w_down] {
            scale_rows(m, g.base_d_model, w);
            scale_rows(m, 0, b);
        }
    }
}

fn scale_rows<T: Scalar>(m: &mut Matrix<T>, start: usize, s: T) {
    if s == T::one() {
        return;
    }
    for r in start..m.rows() {
        m.row_mut(r).iter_mut().for_each(|x| *x = *x * s);
    }
}

fn scale_cols<T: Scalar>(m: &mut Matrix<T>, start: usize, s: T) {
    if s == T::one() {
        return;
    }
    for r in 0..m.rows() {
        m.row_mut(r)[start..].iter_mut().for_each(|x| *x = *x * s);
    }
}

/// Random growth with masks, in width or depth as the plan says.
///
/// Width: the base weights sit in the top-left block and every new entry is
/// drawn from `N(0, 0.02²)`; existing norm gains are scaled by `sqrt(d / D)`;
/// the outputs of new coordinates are multiplied by width gates.
/// Depth: `g - 1` random layers are inserted after every base layer, each with
/// a block gate scaling both of its residual branches.
/// All gates start at 0, where the grown model computes the base function.
pub fn grow_random_masked<T: Scalar>(
    params: &ParameterSet<T>,
    config: &ModelConfig,
    plan: &GrowthPlan,
) -> Result<(ParameterSet<T>, ModelConfig, MaskSet<T>)> {
    plan.validate()?;
    let params = prepare(params, config)?;
    let mut r = rng::rng(plan.seed, SEED_RANDOM);
    let (mut out, grown) = match plan.direction {
        Direction::Width => widen_random(&params, config, plan.width_factor()?, &mut r),
        Direction::Depth => deepen_random(&params, config, plan.growth_factor, &mut r),
    };
    let n = grown.n_layers;
    let new_layer = |j: usize| plan.direction == Direction::Depth && j % plan.growth_factor != 0;
    let gates = Gates {
        base_d_model: config.d_model,
        base_d_ffn: config.d_ffn,
        embed: T::zero(),
        width: vec![T::zero(); n],
        block: (0..n).map(|j| new_layer(j).then_some(T::zero())).collect(),
        horizon: None,
    };
    out.gates = Some(gates.clone());
    Ok((out, grown, gates))
}

fn widen_random<T: Scalar>(
    params: &ParameterSet<T>,
    config: &ModelConfig,
    g: usize,
    r: &mut rng::Rng,
) -> (ParameterSet<T>, ModelConfig) {
    let grown = config.widened(g);
    let (dd, ff) = (grown.d_model, grown.d_ffn);
    let mut fill = |m: &Matrix<T>, rows: usize, cols: usize| embed_block(m, rows, cols, |_, _| rng::normal(r, 0.02));
    let mut layers = Vec::with_capacity(params.layers.len());
    for lp in &params.layers {
        layers.push(LayerParams {
            wq: fill(&lp.wq, dd, dd),
            wk: fill(&lp.wk, dd, dd),
            wv: fill(&lp.wv, dd, dd),
            wo: fill(&lp.wo, dd, dd),
            w_up: fill(&lp.w_up, ff, dd),
            w_gate: fill(&lp.w_gate, ff, dd),
            w_down: fill(&lp.w_down, dd, ff),
            norm_attn: extend_gain(&lp.norm_attn, dd),
            norm_ffn: extend_gain(&lp.norm_ffn, dd),
        });
    }
    let v = config.vocab_size;
    let out = ParameterSet {
        embedding: fill(&params.embedding, v, dd),
        layers,
        norm_final: extend_gain(&params.norm_final, dd),
        head: fill(&params.head, v, dd),
        gates: None,
    };
    (out, grown)
}

fn deepen_random<T: Scalar>(
    params: &ParameterSet<T>,
    config: &ModelConfig,
    g: usize,
    r: &mut rng::Rng,
) -> (ParameterSet<T>, ModelConfig) {
    let grown = config.with_layers(config.n_layers * g);
    let mut layers = Vec::with_capacity(grown.n_layers);
    for lp in &params.layers {
        layers.push(lp.clone());
        for _ in 1..g {
            layers.push(random_layer(&grown, r, 0.02));
        }
    }
    let out = ParameterSet { layers, gates: None, ..params.clone() };
    (out, grown)
}
