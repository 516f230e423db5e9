//! Grow-then-train runs and their FLOPs-matched scratch baselines.

use alloc::vec::Vec;

use super::cost::{nonembed_params, tokens_for_flops};
use super::curve::{LossCurve, Sample};
use super::data::TokenStream;
use super::schedule::TrainConfig;
use super::train::{train, Progress, TrainError, TrainOptions};
use crate::growth::{apply_plan, gradual_plan, GrowthPlan, OriginMap};
use crate::model::{init_params, ModelConfig, ParameterSet};
use crate::tensor::Scalar;

/// One step of a multi-phase run.
#[derive(Clone, Debug, PartialEq)]
pub enum Phase {
    /// Train the current model for this many tokens (fresh optimizer state and
    /// schedule).
    Train(u64),
    /// Grow the current model.
    Grow(GrowthPlan),
}

/// Where a growth happened on the global axes of a curve.
#[derive(Clone, Debug, PartialEq)]
pub struct GrowthEvent {
    pub step: u64,
    pub tokens: u64,
    pub flops: f64,
    pub from: ModelConfig,
    pub to: ModelConfig,
    pub origin: Option<OriginMap>,
    /// Last emitted loss before growing, if any.
    pub loss_before: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct PhasedRun<T> {
    pub params: ParameterSet<T>,
    pub config: ModelConfig,
    pub curve: LossCurve,
    pub events: Vec<GrowthEvent>,
    pub progress: Progress,
}

/// Run-level options shared by every training phase.
pub struct ExperimentOptions<'a> {
    pub emit_every: usize,
    /// Called with `(run label, sample)` for every emitted sample.
    pub on_sample: Option<&'a mut dyn FnMut(&str, &Sample)>,
}

impl Default for ExperimentOptions<'_> {
    fn default() -> Self {
        ExperimentOptions { emit_every: 10, on_sample: None }
    }
}

/// Trains and grows `params` phase by phase. Steps, tokens and FLOPs keep
/// counting across phases, so the curve's FLOPs axis of a grown model
/// includes what its smaller ancestors spent.
pub fn run_phases<T: Scalar>(
    label: &str,
    params: ParameterSet<T>,
    config: &ModelConfig,
    phases: &[Phase],
    train_config: &TrainConfig,
    corpus: &TokenStream,
    options: &mut ExperimentOptions<'_>,
) -> Result<PhasedRun<T>, TrainError<T>> {
    let mut run = PhasedRun {
        params,
        config: *config,
        curve: LossCurve::new(),
        events: Vec::new(),
        progress: Progress::default(),
    };
    let mut cursor = None;
    for phase in phases {
        match phase {
            Phase::Train(tokens) => {
                let tc = TrainConfig { total_tokens: *tokens, ..*train_config };
                let mut forward = |s: &Sample| {
                    if let Some(cb) = options.on_sample.as_mut() {
                        cb(label, s)
                    }
                };
                let opts = TrainOptions {
                    emit_every: options.emit_every,
                    checkpoint_every: None,
                    start: run.progress,
                    cursor: cursor.take(),
                    on_sample: Some(&mut forward),
                };
                let out = train(run.params, &run.config, &tc, corpus, opts)?;
                run.curve.extend(&out.curve)?;
                run.params = out.params;
                run.progress = out.progress;
                cursor = Some(out.cursor);
            }
            Phase::Grow(plan) => {
                let grown = apply_plan(&run.params, &run.config, plan, Some(corpus))?;
                run.events.push(GrowthEvent {
                    step: run.progress.step,
                    tokens: run.progress.ledger.tokens(),
                    flops: run.progress.ledger.total(),
                    from: run.config,
                    to: grown.config,
                    origin: grown.origin,
                    loss_before: run.curve.last().map(|s| s.loss),
                });
                run.params = grown.params;
                run.config = grown.config;
            }
        }
    }
    Ok(run)
}

/// Curves of a grown run and of the same target model trained from scratch
/// with the same total FLOPs.
#[derive(Clone, Debug)]
pub struct Experiment<T> {
    pub grown: PhasedRun<T>,
    pub scratch: PhasedRun<T>,
    /// Tokens given to the scratch run.
    pub scratch_tokens: u64,
}

impl<T> Experiment<T> {
    /// First sample emitted after the (last) growth, and the last sample
    /// before it.
    pub fn spike(&self) -> Option<(f64, f64)> {
        let ev = self.grown.events.last()?;
        let before = ev.loss_before?;
        let after = self.grown.curve.samples().iter().find(|s| s.step > ev.step)?;
        Some((before, after.loss))
    }
}

/// Base training for `d_tokens`, growth by `plan`, continued training for
/// `big_d_tokens`, plus a scratch run of the target model matched on combined
/// FLOPs (`6 n d + 6 N D` spent as `6 N D_scratch`).
#[allow(clippy::too_many_arguments)]
pub fn run_growth_experiment<T: Scalar>(
    base: &ModelConfig,
    plan: &GrowthPlan,
    d_tokens: u64,
    big_d_tokens: u64,
    train_config: &TrainConfig,
    corpus: &TokenStream,
    options: &mut ExperimentOptions<'_>,
) -> Result<Experiment<T>, TrainError<T>> {
    let phases = [Phase::Train(d_tokens), Phase::Grow(plan.clone()), Phase::Train(big_d_tokens)];
    run_with_scratch(base, &phases, train_config, corpus, options)
}

/// Gradual stacking: `train, stack x2` repeated until `target_layers`, each
/// stage on `tokens_per_stage`, then `big_d_tokens` on the target model; the
/// scratch run is matched on combined FLOPs.
pub fn run_gradual_experiment<T: Scalar>(
    base: &ModelConfig,
    target_layers: usize,
    tokens_per_stage: u64,
    big_d_tokens: u64,
    train_config: &TrainConfig,
    corpus: &TokenStream,
    options: &mut ExperimentOptions<'_>,
) -> Result<Experiment<T>, TrainError<T>> {
    let stages = gradual_plan(base.n_layers, target_layers, tokens_per_stage)?;
    let mut phases = Vec::new();
    for st in stages {
        phases.push(Phase::Train(st.train_tokens));
        phases.push(Phase::Grow(GrowthPlan { seed: train_config.seed, ..GrowthPlan::stack(st.stack_factor) }));
    }
    phases.push(Phase::Train(big_d_tokens));
    run_with_scratch(base, &phases, train_config, corpus, options)
}

fn run_with_scratch<T: Scalar>(
    base: &ModelConfig,
    phases: &[Phase],
    train_config: &TrainConfig,
    corpus: &TokenStream,
    options: &mut ExperimentOptions<'_>,
) -> Result<Experiment<T>, TrainError<T>> {
    let init = init_params(base, train_config.seed)?;
    let grown = run_phases("grown", init, base, phases, train_config, corpus, options)?;
    let target = grown.config;
    let scratch_tokens = tokens_for_flops(grown.progress.ledger.total_exact(), nonembed_params(&target));
    let init = init_params(&target, train_config.seed)?;
    let scratch = run_phases("scratch", init, &target, &[Phase::Train(scratch_tokens)], train_config, corpus, options)?;
    Ok(Experiment { grown, scratch, scratch_tokens })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ModelConfig {
        ModelConfig { vocab_size: 16, d_model: 16, d_ffn: 32, n_heads: 2, head_dim: 8, n_layers: 1, max_seq_len: 16 }
    }

    fn corpus() -> TokenStream {
        let tokens = (0..8192u32).map(|i| (i % 5) * 3 + (i / 5) % 3).collect();
        TokenStream::new(tokens, 17, 2).unwrap()
    }

    fn tc() -> TrainConfig {
        TrainConfig {
            tokens_per_batch: 68,
            seq_len: 17,
            warmup_steps: 5,
            max_lr: 1e-2,
            min_lr: 1e-3,
            ..Default::default()
        }
    }

    #[test]
    fn grown_flops_include_base_cost_and_scratch_matches() {
        let plan = GrowthPlan::stack(4);
        let mut opts = ExperimentOptions { emit_every: 2, on_sample: None };
        let ex = run_growth_experiment::<f32>(&base(), &plan, 68 * 8, 68 * 10, &tc(), &corpus(), &mut opts).unwrap();
        let (n, big_n) = (base().nonembed_params() as f64, base().with_layers(4).nonembed_params() as f64);
        let last = ex.grown.curve.last().unwrap();
        assert_eq!(last.flops, 6.0 * n * 544.0 + 6.0 * big_n * 680.0);
        assert_eq!(ex.grown.events.len(), 1);
        assert_eq!(ex.grown.events[0].step, 8);
        let scratch_last = ex.scratch.curve.last().unwrap();
        assert!(scratch_last.flops <= last.flops);
        assert!(last.flops - scratch_last.flops < 6.0 * big_n * 68.0);
        assert_eq!(ex.scratch.config, ex.grown.config);
    }

    #[test]
    fn untrained_base_is_stacked_directly() {
        let mut opts = ExperimentOptions::default();
        let ex = run_growth_experiment::<f32>(&base(), &GrowthPlan::stack(2), 0, 68 * 3, &tc(), &corpus(), &mut opts)
            .unwrap();
        assert_eq!(ex.grown.events[0].step, 0);
        assert_eq!(ex.grown.events[0].loss_before, None);
        assert_eq!(ex.grown.curve.samples()[0].step, 3);
    }

    #[test]
    fn gradual_run_records_each_stack() {
        let mut labels = Vec::new();
        let mut cb = |l: &str, _: &Sample| labels.push(l.to_owned());
        let mut opts = ExperimentOptions { emit_every: 1, on_sample: Some(&mut cb) };
        let ex = run_gradual_experiment::<f32>(&base(), 4, 68 * 2, 68 * 2, &tc(), &corpus(), &mut opts).unwrap();
        assert_eq!(ex.grown.events.len(), 2);
        assert_eq!(ex.grown.events[1].from.n_layers, 2);
        assert_eq!(ex.grown.config.n_layers, 4);
        assert!(ex.spike().is_some());
        assert!(labels.iter().any(|l| l == "scratch"));
    }
}
