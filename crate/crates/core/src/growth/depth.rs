//! Depth growth: stacking, pattern stacking, zero-initialized interleaving
//! and the gradual train-stack schedule.

use alloc::vec::Vec;

use super::pattern::OriginMap;
use super::prepare;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ParameterSet};
use crate::tensor::Scalar;

/// Stacks the whole base model `g` times: grown layer `j` is a copy of base
/// layer `(j mod l) + 1`. Embedding, head and final norm are copied once.
pub fn grow_depth_stack<T: Scalar>(
    params: &ParameterSet<T>,
    config: &ModelConfig,
    g: usize,
) -> Result<(ParameterSet<T>, ModelConfig, OriginMap)> {
    if g == 0 {
        return Err(Error::input("growth factor must be at least 1"));
    }
    let origin = OriginMap::repeated(config.n_layers, g);
    let (p, c) = stack_by_pattern(params, config, &origin)?;
    Ok((p, c, origin))
}

/// Builds the grown model whose layer `j` is a deep copy of base layer
/// `origin[j]`.
pub fn stack_by_pattern<T: Scalar>(
    params: &ParameterSet<T>,
    config: &ModelConfig,
    origin: &OriginMap,
) -> Result<(ParameterSet<T>, ModelConfig)> {
    let params = prepare(params, config)?;
    let origin = OriginMap::new(origin.as_slice().to_vec(), config.n_layers)?;
    let layers = origin.as_slice().iter().map(|&o| params.layers[o - 1].clone()).collect();
    let out = ParameterSet {
        embedding: params.embedding.clone(),
        layers,
        norm_final: params.norm_final.clone(),
        head: params.head.clone(),
        gates: None,
    };
    Ok((out, config.with_layers(origin.len())))
}

/// Zero-initialized depth growth: after every base layer, `g - 1` copies of it
/// are inserted with their attention output and SwiGLU down projections
/// zeroed, so each new block adds nothing to the residual stream.
pub fn grow_depth_zero<T: Scalar>(
    params: &ParameterSet<T>,
    config: &ModelConfig,
    g: usize,
) -> Result<(ParameterSet<T>, ModelConfig)> {
    if g == 0 {
        return Err(Error::input("growth factor must be at least 1"));
    }
    let (mut out, grown) = stack_by_pattern(params, config, &OriginMap::interleaved(config.n_layers, g))?;
    for (j, lp) in out.layers.iter_mut().enumerate() {
        if j % g != 0 {
            lp.wo.fill(T::zero());
            lp.w_down.fill(T::zero());
        }
    }
    Ok((out, grown))
}

/// One stage of gradual stacking: train for `train_tokens`, then stack the
/// current model `stack_factor` times.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stage {
    pub train_tokens: u64,
    pub stack_factor: usize,
}

/// Train-stack schedule from `base_layers` to `target_layers`, doubling the
/// depth at each stage. The ratio must be a power of two of at least 2.
pub fn gradual_plan(base_layers: usize, target_layers: usize, tokens_per_stage: u64) -> Result<Vec<Stage>> {
    if base_layers == 0 || target_layers % base_layers != 0 {
        return Err(Error::input(alloc::format!(
            "target depth {target_layers} is not a multiple of base depth {base_layers}"
        )));
    }
    let ratio = target_layers / base_layers;
    if ratio < 2 || !ratio.is_power_of_two() {
        return Err(Error::input(alloc::format!("depth ratio {ratio} is not a power of two of at least 2")));
    }
    let stages = ratio.trailing_zeros() as usize;
    Ok(alloc::vec![Stage { train_tokens: tokens_per_stage, stack_factor: 2 }; stages])
}
