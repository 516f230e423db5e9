use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;

use super::cost::{nonembed_params, FlopsLedger};
use super::curve::{LossCurve, Sample};
use super::data::{Cursor, TokenStream};
use super::optim::{clip_grad_norm, AdamW};
use super::schedule::{lr_at, TrainConfig};
use crate::error::{Error, Result};
use crate::growth::{apply_schedule, fold_gates};
use crate::model::{accumulate_gradients, ModelConfig, ParameterSet};
use crate::tensor::Scalar;

/// Where a run starts on the global axes: steps already taken and FLOPs
/// already spent (e.g. by the base model before growth).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Progress {
    pub step: u64,
    pub ledger: FlopsLedger,
}

/// Per-run knobs that are not hyperparameters.
pub struct TrainOptions<'a> {
    /// Steps per emitted sample.
    pub emit_every: usize,
    /// Keep a parameter snapshot every this many steps.
    pub checkpoint_every: Option<usize>,
    pub start: Progress,
    /// Data position to continue from; `None` starts at epoch 0.
    pub cursor: Option<Cursor>,
    /// Called with every emitted sample.
    pub on_sample: Option<&'a mut dyn FnMut(&Sample)>,
}

impl Default for TrainOptions<'_> {
    fn default() -> Self {
        TrainOptions {
            emit_every: 10,
            checkpoint_every: None,
            start: Progress::default(),
            cursor: None,
            on_sample: None,
        }
    }
}

impl fmt::Debug for TrainOptions<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrainOptions")
            .field("emit_every", &self.emit_every)
            .field("checkpoint_every", &self.checkpoint_every)
            .field("start", &self.start)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub params: ParameterSet<T>,
    pub curve: LossCurve,
    /// `(global step, parameters)` snapshots.
    pub checkpoints: Vec<(u64, ParameterSet<T>)>,
    pub progress: Progress,
    pub cursor: Cursor,
}

/// A run stopped on a non-finite loss or gradient.
#[derive(Clone, Debug)]
pub struct Diverged<T> {
    /// Global step whose loss or gradient was not finite.
    pub step: u64,
    /// Parameters before that step.
    pub last_good: ParameterSet<T>,
    pub curve: LossCurve,
}

#[derive(Clone, Debug)]
pub enum TrainError<T> {
    Invalid(Error),
    Diverged(Box<Diverged<T>>),
}

impl<T> From<Error> for TrainError<T> {
    fn from(e: Error) -> Self {
        TrainError::Invalid(e)
    }
}

impl<T> fmt::Display for TrainError<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Invalid(e) => e.fmt(f),
            TrainError::Diverged(d) => write!(f, "training diverged at step {} (non-finite loss or gradient)", d.step),
        }
    }
}

impl<T: fmt::Debug> core::error::Error for TrainError<T> {}

/// Trains `params` on `corpus` with AdamW and the warmup-cosine schedule for
/// `config.total_steps()` steps.
///
/// One sample is emitted every `emit_every` steps and after the last step;
/// its loss is the mean batch loss since the previous sample. Models with
/// gates have them raised by the linear mask schedule (horizon from the
/// gates, else the warmup length) and folded into the weights once open.
pub fn train<T: Scalar>(
    mut params: ParameterSet<T>,
    model: &ModelConfig,
    config: &TrainConfig,
    corpus: &TokenStream,
    mut options: TrainOptions<'_>,
) -> core::result::Result<TrainOutcome<T>, TrainError<T>> {
    config.validate(model)?;
    params.validate(model)?;
    check_corpus(corpus, model, config)?;
    let emit_every = options.emit_every.max(1);
    let steps = config.total_steps();
    let rows = config.rows();
    let n = nonembed_params(model);
    let horizon = params.gates.as_ref().map(|g| g.horizon.unwrap_or(config.warmup_steps));

    let mut progress = options.start;
    let mut cursor = options.cursor.take().unwrap_or_else(|| corpus.cursor());
    let mut curve = LossCurve::new();
    let mut checkpoints = Vec::new();
    let mut opt = AdamW::new(&params, config);
    let mut grads = params.zeros_like();
    let (mut interval_loss, mut interval_steps) = (0.0, 0usize);

    for s in 1..=steps {
        if let Some(h) = horizon {
            if apply_schedule(&mut params, s, h) == Some(1.0) {
                fold_gates(&mut params);
            }
        }
        let lr = lr_at(s, config);
        let batch = corpus.next_batch(&mut cursor, rows);
        grads.for_each_mut(|_, _, g| g.fill(T::zero()));
        let preds = batch.targets.len() as f64;
        let mut loss_sum = 0.0;
        let mut start = 0;
        while start < rows {
            let end = (start + config.micro_rows).min(rows);
            let mb = batch.slice(start, end);
            loss_sum +=
                accumulate_gradients(&params, model, &mb.inputs, &mb.targets, mb.seq, None, 1.0 / preds, &mut grads)?;
            start = end;
        }
        let loss = loss_sum / preds;
        let norm = clip_grad_norm(&mut grads, config.grad_clip);
        if !loss.is_finite() || !norm.is_finite() {
            return Err(TrainError::Diverged(Box::new(Diverged { step: progress.step + 1, last_good: params, curve })));
        }
        opt.step(&mut params, &grads, lr);
        progress.step += 1;
        progress.ledger.charge(n, config.tokens_per_batch as u64);
        interval_loss += loss;
        interval_steps += 1;
        if s % emit_every == 0 || s == steps {
            let sample = Sample {
                step: progress.step,
                tokens: progress.ledger.tokens(),
                flops: progress.ledger.total(),
                loss: interval_loss / interval_steps as f64,
                lr,
            };
            curve.push(sample)?;
            if let Some(cb) = options.on_sample.as_mut() {
                cb(&sample);
            }
            (interval_loss, interval_steps) = (0.0, 0);
        }
        if options.checkpoint_every.is_some_and(|k| k > 0 && s % k == 0) {
            checkpoints.push((progress.step, params.clone()));
        }
    }
    Ok(TrainOutcome { params, curve, checkpoints, progress, cursor })
}

fn check_corpus(corpus: &TokenStream, model: &ModelConfig, config: &TrainConfig) -> Result<()> {
    if corpus.seq_len() != config.seq_len {
        return Err(Error::Config(alloc::format!(
            "corpus windows of {} tokens do not match the configured window length {}",
            corpus.seq_len(),
            config.seq_len
        )));
    }
    if corpus.vocab_needed() > model.vocab_size {
        return Err(Error::input(alloc::format!(
            "corpus uses token ids up to {} but the vocabulary has {} entries",
            corpus.vocab_needed() - 1,
            model.vocab_size
        )));
    }
    Ok(())
}
