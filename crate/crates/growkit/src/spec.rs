//! Experiment specs: a [`kv`](crate::kv) document describing one plain
//! training run or one grown-versus-scratch comparison.
//!
//! ```text
//! [model]
//! d_model = 32
//! d_ffn = 64
//! n_heads = 4
//! n_layers = 1
//!
//! [train]
//! seq_len = 65
//! tokens_per_batch = 1040
//! total_tokens = 104000      # plain runs only
//!
//! [growth]                   # optional
//! operator = stack
//! g = 4
//! d_tokens = 52000
//! D_tokens = 208000
//!
//! [run]
//! synthetic_bytes = 1000000  # or: corpus = data.txt
//! output = out
//! seed = 1
//! ```
//!
//! With a `[growth]` section the `[model]` section is the base model.
//! Relative paths resolve against the directory of the spec file, and the
//! `GROWKIT_SEED` environment variable replaces `seed`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use growkit_core::growth::{Direction, GrowthPlan, Operator};
use growkit_core::laws::speedup;
use growkit_core::model::{init_params, ModelConfig};
use growkit_core::trainer::{
    run_growth_experiment, train, ExperimentOptions, LossCurve, Sample, TokenStream, TrainConfig, TrainError,
    TrainOptions,
};

use crate::checkpoint::{Checkpoint, GrowthRecord};
use crate::corpus::{synthetic_corpus, BYTE_VOCAB};
use crate::curves::write_curve;
use crate::error::{Error, Result};
use crate::kv::{Document, Section};

pub const SEED_ENV: &str = "GROWKIT_SEED";

#[derive(Clone, Debug, PartialEq)]
pub enum CorpusSource {
    File(PathBuf),
    /// Generated text of this many bytes.
    Synthetic(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrowthSpec {
    pub plan: GrowthPlan,
    /// Tokens for the base model.
    pub d_tokens: u64,
    /// Tokens for the grown model.
    pub big_d_tokens: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub growth: Option<GrowthSpec>,
    pub corpus: CorpusSource,
    pub output: PathBuf,
    pub seed: u64,
    pub emit_every: usize,
    /// Loss at which the speedup is measured; defaults to the higher of the
    /// two final losses.
    pub target_loss: Option<f64>,
}

const MODEL_KEYS: &[&str] = &["vocab_size", "d_model", "d_ffn", "n_heads", "head_dim", "n_layers", "max_seq_len"];
const TRAIN_KEYS: &[&str] = &[
    "tokens_per_batch",
    "seq_len",
    "max_lr",
    "min_lr",
    "warmup_steps",
    "total_tokens",
    "beta1",
    "beta2",
    "adam_eps",
    "weight_decay",
    "grad_clip",
    "micro_rows",
];
const GROWTH_KEYS: &[&str] =
    &["operator", "direction", "g", "pattern", "noise", "meta_steps", "meta_lr", "d_tokens", "D_tokens"];
const RUN_KEYS: &[&str] = &["corpus", "synthetic_bytes", "output", "seed", "emit_every", "target_loss"];

fn or<T: FromStr>(s: &Section, key: &str, default: T) -> Result<T>
where
    T::Err: fmt::Display,
{
    Ok(s.parse(key)?.unwrap_or(default))
}

impl ExperimentSpec {
    /// Reads a spec file; relative paths inside it are taken relative to its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let doc: Document = text.parse()?;
        doc.expect_sections(&["model", "train", "growth", "run"])?;
        let (m, t, r) = (doc.require("model")?, doc.require("train")?, doc.require("run")?);
        m.expect_keys(MODEL_KEYS)?;
        t.expect_keys(TRAIN_KEYS)?;
        r.expect_keys(RUN_KEYS)?;

        let d = TrainConfig::default();
        let seq_len: usize = t.parse_required("seq_len")?;
        let d_model: usize = m.parse_required("d_model")?;
        let n_heads: usize = m.parse_required("n_heads")?;
        if n_heads == 0 {
            return Err(Error::Format("[model] n_heads must be positive".into()));
        }
        let model = ModelConfig {
            vocab_size: or(m, "vocab_size", BYTE_VOCAB)?,
            d_model,
            d_ffn: m.parse_required("d_ffn")?,
            n_heads,
            head_dim: or(m, "head_dim", d_model / n_heads)?,
            n_layers: m.parse_required("n_layers")?,
            max_seq_len: or(m, "max_seq_len", seq_len.saturating_sub(1))?,
        };
        model.validate()?;

        let mut train = TrainConfig {
            tokens_per_batch: t.parse_required("tokens_per_batch")?,
            seq_len,
            max_lr: or(t, "max_lr", d.max_lr)?,
            min_lr: or(t, "min_lr", d.min_lr)?,
            warmup_steps: or(t, "warmup_steps", d.warmup_steps)?,
            total_tokens: or(t, "total_tokens", 0)?,
            beta1: or(t, "beta1", d.beta1)?,
            beta2: or(t, "beta2", d.beta2)?,
            adam_eps: or(t, "adam_eps", d.adam_eps)?,
            weight_decay: or(t, "weight_decay", d.weight_decay)?,
            grad_clip: or(t, "grad_clip", d.grad_clip)?,
            micro_rows: or(t, "micro_rows", d.micro_rows)?,
            seed: 0,
        };
        train.validate(&model)?;

        let seed = match std::env::var(SEED_ENV) {
            Ok(v) => {
                v.trim().parse().map_err(|_| Error::Format(format!("{SEED_ENV}={v} is not an unsigned integer")))?
            }
            Err(_) => or(r, "seed", 0u64)?,
        };
        train.seed = seed;

        let growth = match doc.section("growth") {
            Some(g) => Some(parse_growth(g, seed, &model)?),
            None => {
                if t.get("total_tokens").is_none() {
                    return Err(Error::Format("[train] needs total_tokens when there is no [growth] section".into()));
                }
                None
            }
        };

        let corpus = match (r.get("corpus"), r.parse::<usize>("synthetic_bytes")?) {
            (Some(p), None) => CorpusSource::File(base_dir.join(p)),
            (None, Some(n)) if n > 0 => CorpusSource::Synthetic(n),
            (None, Some(_)) => return Err(Error::Format("[run] synthetic_bytes must be positive".into())),
            _ => return Err(Error::Format("[run] needs exactly one of `corpus` and `synthetic_bytes`".into())),
        };
        let emit_every = or(r, "emit_every", 10usize)?;
        if emit_every == 0 {
            return Err(Error::Format("[run] emit_every must be positive".into()));
        }
        Ok(ExperimentSpec {
            model,
            train,
            growth,
            corpus,
            output: base_dir.join(r.require("output")?),
            seed,
            emit_every,
            target_loss: r.parse("target_loss")?,
        })
    }

    pub fn load_corpus(&self) -> Result<TokenStream> {
        let bytes = match &self.corpus {
            CorpusSource::File(p) => std::fs::read(p).map_err(|e| Error::io(p, e))?,
            CorpusSource::Synthetic(n) => synthetic_corpus(*n, self.seed),
        };
        Ok(TokenStream::from_bytes(&bytes, self.train.seq_len, self.seed)?)
    }
}

fn parse_growth(g: &Section, seed: u64, base: &ModelConfig) -> Result<GrowthSpec> {
    g.expect_keys(GROWTH_KEYS)?;
    let defaults = GrowthPlan::new(Operator::Direct);
    let plan = GrowthPlan {
        operator: g.parse_required("operator")?,
        direction: or(g, "direction", Direction::Depth)?,
        growth_factor: or(g, "g", defaults.growth_factor)?,
        stack_pattern: g.get("pattern").map(str::to_owned),
        noise_ratio: or(g, "noise", 0.0)?,
        seed,
        meta_steps: or(g, "meta_steps", defaults.meta_steps)?,
        meta_lr: or(g, "meta_lr", defaults.meta_lr)?,
    };
    plan.target_config(base)?;
    let spec =
        GrowthSpec { plan, d_tokens: g.parse_required("d_tokens")?, big_d_tokens: g.parse_required("D_tokens")? };
    if spec.big_d_tokens == 0 {
        return Err(Error::Format("[growth] D_tokens must be positive".into()));
    }
    Ok(spec)
}

/// Ordered `key=value` results of a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunReport {
    pub entries: Vec<(String, String)>,
}

impl RunReport {
    fn push(&mut self, key: &str, value: impl fmt::Display) {
        self.entries.push((key.to_owned(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.entries.iter().try_for_each(|(k, v)| writeln!(f, "{k}={v}"))
    }
}

fn final_loss(curve: &LossCurve) -> String {
    curve.last().map_or_else(|| "-".to_owned(), |s| s.loss.to_string())
}

fn train_error<T>(e: TrainError<T>) -> Error {
    match e {
        TrainError::Invalid(e) => Error::Core(e),
        d @ TrainError::Diverged(_) => Error::Train(d.to_string()),
    }
}

/// Runs `spec`, writing curves, checkpoints and `report.txt` into its output
/// directory. `progress` sees every emitted sample with its run label.
pub fn run_spec(spec: &ExperimentSpec, progress: &mut dyn FnMut(&str, &Sample)) -> Result<RunReport> {
    let corpus = spec.load_corpus()?;
    std::fs::create_dir_all(&spec.output).map_err(|e| Error::io(&spec.output, e))?;
    let out = |name: &str| spec.output.join(name);
    let mut report = RunReport::default();
    report.push("seed", spec.seed);
    match &spec.growth {
        None => {
            let params = init_params::<f32>(&spec.model, spec.seed)?;
            let mut forward = |s: &Sample| progress("train", s);
            let opts =
                TrainOptions { emit_every: spec.emit_every, on_sample: Some(&mut forward), ..Default::default() };
            let run = train(params, &spec.model, &spec.train, &corpus, opts).map_err(train_error)?;
            write_curve(&out("curve.csv"), &run.curve)?;
            let mut ckpt = Checkpoint::new(spec.model, run.params);
            ckpt.meta =
                progress_meta(run.progress.step, run.progress.ledger.tokens(), run.progress.ledger.total(), spec.seed);
            ckpt.write(&out("final.ckpt"))?;
            report.push("mode", "train");
            report.push("steps", run.progress.step);
            report.push("tokens", run.progress.ledger.tokens());
            report.push("flops", run.progress.ledger.total());
            report.push("final_loss", final_loss(&run.curve));
            report.push("curve", out("curve.csv").display());
        }
        Some(g) => {
            let mut opts = ExperimentOptions { emit_every: spec.emit_every, on_sample: Some(progress) };
            let ex = run_growth_experiment::<f32>(
                &spec.model,
                &g.plan,
                g.d_tokens,
                g.big_d_tokens,
                &spec.train,
                &corpus,
                &mut opts,
            )
            .map_err(train_error)?;
            write_curve(&out("grown.csv"), &ex.grown.curve)?;
            write_curve(&out("scratch.csv"), &ex.scratch.curve)?;

            let mut grown = Checkpoint::new(ex.grown.config, ex.grown.params.clone());
            grown.history = ex
                .grown
                .events
                .iter()
                .map(|ev| GrowthRecord {
                    plan: g.plan.to_string(),
                    from_layers: ev.from.n_layers,
                    origin: ev.origin.clone(),
                })
                .collect();
            let p = ex.grown.progress;
            grown.meta = progress_meta(p.step, p.ledger.tokens(), p.ledger.total(), spec.seed);
            grown.write(&out("grown.ckpt"))?;
            let mut scratch = Checkpoint::new(ex.scratch.config, ex.scratch.params.clone());
            let p = ex.scratch.progress;
            scratch.meta = progress_meta(p.step, p.ledger.tokens(), p.ledger.total(), spec.seed);
            scratch.write(&out("scratch.ckpt"))?;

            report.push("mode", "growth");
            report.push("plan", &g.plan);
            report.push("base_layers", spec.model.n_layers);
            report.push("target_layers", ex.grown.config.n_layers);
            if let Some(o) = ex.grown.events.first().and_then(|e| e.origin.as_ref()) {
                report.push("origin", o);
            }
            report.push("grown_tokens", ex.grown.progress.ledger.tokens());
            report.push("grown_flops", ex.grown.progress.ledger.total());
            report.push("scratch_tokens", ex.scratch_tokens);
            report.push("scratch_flops", ex.scratch.progress.ledger.total());
            report.push("grown_final_loss", final_loss(&ex.grown.curve));
            report.push("scratch_final_loss", final_loss(&ex.scratch.curve));
            if let Some((before, after)) = ex.spike() {
                report.push("loss_before_growth", before);
                report.push("loss_after_growth", after);
            }
            let target = spec.target_loss.or_else(|| {
                let (a, b) = (ex.grown.curve.last()?.loss, ex.scratch.curve.last()?.loss);
                Some(a.max(b))
            });
            if let Some(target) = target {
                report.push("target_loss", target);
                match speedup(&ex.scratch.curve, &ex.grown.curve, target) {
                    Ok(s) => report.push("speedup", s),
                    Err(growkit_core::Error::Unreachable { curve, .. }) => {
                        report.push("speedup", format!("unreachable:{curve}"))
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            report.push("grown_curve", out("grown.csv").display());
            report.push("scratch_curve", out("scratch.csv").display());
        }
    }
    crate::checkpoint::write_atomic(&out("report.txt"), report.to_string().as_bytes())?;
    Ok(report)
}

fn progress_meta(step: u64, tokens: u64, flops: f64, seed: u64) -> Vec<(String, String)> {
    vec![
        ("step".into(), step.to_string()),
        ("tokens".into(), tokens.to_string()),
        ("flops".into(), flops.to_string()),
        ("seed".into(), seed.to_string()),
    ]
}
