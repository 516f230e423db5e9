//! Growth operators in width and depth, stacking variants, connection rate
//! and noise injection.

use alloc::borrow::Cow;
use alloc::vec::Vec;

mod depth;
mod learn;
mod masked;
mod noise;
mod pattern;
mod plan;
mod width;

pub use depth::{gradual_plan, grow_depth_stack, grow_depth_zero, stack_by_pattern, Stage};
pub use learn::{grow_learn, LearnOutcome};
pub use masked::{apply_schedule, fold_gates, grow_random_masked, mask_schedule, MaskSet};
pub use noise::{inject_noise, noise_std};
pub use pattern::{connection_rate, parse_stack_pattern, OriginMap};
pub use plan::{Direction, GrowthPlan, Operator};
pub use width::{expand_linear, grow_width_direct, grow_width_zero, WidthMap};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ParameterSet};
use crate::tensor::Scalar;
use crate::trainer::TokenStream;

const SEED_SPLIT: u64 = 11;
const SEED_ZERO: u64 = 12;
const SEED_RANDOM: u64 = 13;
const SEED_NOISE: u64 = 14;

/// Validates the base model and folds any gates into its weights.
fn prepare<'a, T: Scalar>(params: &'a ParameterSet<T>, config: &ModelConfig) -> Result<Cow<'a, ParameterSet<T>>> {
    params.validate(config)?;
    if params.gates.is_none() {
        return Ok(Cow::Borrowed(params));
    }
    let mut p = params.clone();
    fold_gates(&mut p);
    Ok(Cow::Owned(p))
}

/// A grown model and what the operator reports alongside it.
#[derive(Clone, Debug)]
pub struct Grown<T> {
    pub params: ParameterSet<T>,
    pub config: ModelConfig,
    /// Layer provenance for copy-based depth growth.
    pub origin: Option<OriginMap>,
    pub masks: Option<MaskSet<T>>,
    /// Evaluation losses of the learned operator.
    pub meta_losses: Vec<f64>,
}

/// Applies `plan` to a base model, then mixes in noise if
/// `plan.noise_ratio > 0`. The learned operator needs a `corpus`.
pub fn apply_plan<T: Scalar>(
    params: &ParameterSet<T>,
    config: &ModelConfig,
    plan: &GrowthPlan,
    corpus: Option<&TokenStream>,
) -> Result<Grown<T>> {
    plan.validate()?;
    let g = plan.growth_factor;
    let mut origin = None;
    let mut masks = None;
    let mut meta_losses = Vec::new();
    let (params, config) = match (plan.operator, plan.direction) {
        (Operator::Direct, Direction::Width) => grow_width_direct(params, config, plan.width_factor()?, plan.seed)?,
        (Operator::Direct, Direction::Depth) => {
            let o = plan.origin(config.n_layers)?.expect("stacking plans have an origin");
            let grown = stack_by_pattern(params, config, &o)?;
            origin = Some(o);
            grown
        }
        (Operator::Zero, Direction::Width) => grow_width_zero(params, config, plan.width_factor()?, plan.seed)?,
        (Operator::Zero, Direction::Depth) => {
            origin = Some(OriginMap::interleaved(config.n_layers, g));
            grow_depth_zero(params, config, g)?
        }
        (Operator::Random, _) => {
            let (p, c, m) = grow_random_masked(params, config, plan)?;
            masks = Some(m);
            (p, c)
        }
        (Operator::Learn, _) => {
            let corpus = corpus.ok_or_else(|| Error::input("the learned operator needs a corpus"))?;
            let target = plan.target_config(config)?;
            let out = grow_learn(params, config, &target, corpus, plan.meta_steps, plan.meta_lr, plan.seed)?;
            meta_losses = out.losses;
            (out.params, out.config)
        }
    };
    let params =
        if plan.noise_ratio > 0.0 { inject_noise(&params, &config, plan.noise_ratio, plan.seed)? } else { params };
    Ok(Grown { params, config, origin, masks, meta_losses })
}
