//! The `growkit` command line.
//!
//! Every command prints its results as `key=value` lines on standard output
//! and diagnostics on standard error. Exit status: 0 success, 1 a verdict or
//! assertion did not hold, 2 bad usage or input, 3 I/O failure.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use growkit_core::growth::{apply_plan, connection_rate, Direction, GrowthPlan, Operator};
use growkit_core::laws::{fit_isoflop, fit_loss_gap, fit_power_law, guideline_d, guideline_g, speedup, Budget};
use growkit_core::model::{init_params, ModelConfig};
use growkit_core::trainer::{nonembed_params, Sample};
use growkit_core::verify::{fp_deviation, FpCheck, Verdict};

use crate::checkpoint::{Checkpoint, GrowthRecord};
use crate::corpus::{load_corpus, synthetic_corpus, BYTE_VOCAB};
use crate::curves::{read_curve, read_points};
use crate::error::{Error, Result};
use crate::spec::{run_spec, ExperimentSpec};

#[derive(Debug, Parser)]
#[command(name = "growkit", version, about = "Grow small transformers, verify the growth and compare training runs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a randomly initialized checkpoint.
    Init(InitArgs),
    /// Grow a checkpoint.
    Grow(GrowArgs),
    /// Compare the logits of a base and a grown checkpoint.
    Verify(VerifyArgs),
    /// Run an experiment spec.
    Train(TrainArgs),
    /// Scaling-law fits and guidelines.
    #[command(subcommand)]
    Law(LawCommand),
    /// Write a synthetic text corpus.
    Corpus(CorpusArgs),
    /// Print the header of a checkpoint.
    Info { checkpoint: PathBuf },
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long, default_value_t = BYTE_VOCAB)]
    pub vocab: usize,
    #[arg(long, default_value_t = 32)]
    pub d_model: usize,
    #[arg(long, default_value_t = 64)]
    pub d_ffn: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    /// Defaults to d_model / heads.
    #[arg(long)]
    pub head_dim: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 64)]
    pub max_seq_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Expect {
    Fp,
    Nonfp,
}

#[derive(Debug, Args)]
pub struct GrowArgs {
    /// direct (alias stack), zero, random or learn.
    #[arg(long)]
    pub op: Operator,
    #[arg(long = "dir", default_value = "depth")]
    pub direction: Direction,
    /// Growth factor in non-embedding parameters; width growth needs a square.
    #[arg(long, default_value_t = 4)]
    pub g: usize,
    /// Stack pattern such as "12*3" or "123*7-456". Bases deeper than nine
    /// layers use comma-separated indices, e.g. "1,2-3,4,10*5".
    #[arg(long)]
    pub pattern: Option<String>,
    /// Fraction of each tensor replaced by noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Training steps of the learned operator.
    #[arg(long, default_value_t = 100)]
    pub meta_steps: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub meta_lr: f64,
    /// Byte corpus for the learned operator.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    pub input: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 16)]
    pub batches: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Verdict required for exit status 0.
    #[arg(long, value_enum)]
    pub expect: Option<Expect>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    pub base: PathBuf,
    pub grown: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub spec: PathBuf,
    /// Output directory, replacing the one in the spec.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Do not print progress to standard error.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum LawCommand {
    /// Fit L = a C^b to `compute,loss` points.
    Fit { points: PathBuf },
    /// Fit a parabola of loss against log10(tokens) to `tokens,loss` points.
    Isoflop { points: PathBuf },
    /// Base-training tokens and growth factor for a target model.
    Guideline(GuidelineArgs),
    /// FLOPs saved by the grown run at a target loss.
    Speedup {
        #[arg(long)]
        target: f64,
        scratch: PathBuf,
        grown: PathBuf,
    },
    /// Fit the loss gap between two curves against ln(tokens).
    Lossgap { scratch: PathBuf, grown: PathBuf },
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("budget").required(true).args(["tokens", "flops"]))]
pub struct GuidelineArgs {
    /// Target model size (parameters).
    #[arg(long = "N")]
    pub n: f64,
    /// Training tokens of the target model.
    #[arg(long = "D")]
    pub tokens: Option<f64>,
    /// Training FLOPs of the target model.
    #[arg(long = "C")]
    pub flops: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    #[arg(long, default_value_t = 10 << 20)]
    pub bytes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    pub output: PathBuf,
}

/// Results to print, and whether the command's verdict held.
struct Outcome {
    lines: Vec<String>,
    ok: bool,
}

impl Outcome {
    fn new() -> Self {
        Outcome { lines: Vec::new(), ok: true }
    }

    fn kv(&mut self, key: &str, value: impl std::fmt::Display) {
        self.lines.push(format!("{key}={value}"));
    }

    /// Splits a space-separated `key=value` record into lines.
    fn record(&mut self, record: impl std::fmt::Display) {
        self.lines.extend(record.to_string().split_whitespace().map(str::to_owned));
    }
}

pub fn run(cli: Cli) -> ExitCode {
    match dispatch(cli.command) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            for l in &out.lines {
                let _ = writeln!(stdout, "{l}");
            }
            ExitCode::from(if out.ok { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("growkit: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(command: Command) -> Result<Outcome> {
    match command {
        Command::Init(a) => init(a),
        Command::Grow(a) => grow(a),
        Command::Verify(a) => verify(a),
        Command::Train(a) => train(a),
        Command::Law(c) => law(c),
        Command::Corpus(a) => {
            crate::checkpoint::write_atomic(&a.output, &synthetic_corpus(a.bytes, a.seed))?;
            let mut out = Outcome::new();
            out.kv("bytes", a.bytes);
            out.kv("path", a.output.display());
            Ok(out)
        }
        Command::Info { checkpoint } => info(&checkpoint),
    }
}

fn init(a: InitArgs) -> Result<Outcome> {
    if a.heads == 0 {
        return Err(Error::Format("--heads must be positive".into()));
    }
    let config = ModelConfig {
        vocab_size: a.vocab,
        d_model: a.d_model,
        d_ffn: a.d_ffn,
        n_heads: a.heads,
        head_dim: a.head_dim.unwrap_or(a.d_model / a.heads),
        n_layers: a.layers,
        max_seq_len: a.max_seq_len,
    };
    let mut ckpt = Checkpoint::new(config, init_params(&config, a.seed)?);
    ckpt.meta.push(("seed".into(), a.seed.to_string()));
    ckpt.write(&a.output)?;
    let mut out = Outcome::new();
    describe(&mut out, &config);
    Ok(out)
}

fn describe(out: &mut Outcome, c: &ModelConfig) {
    out.kv("layers", c.n_layers);
    out.kv("d_model", c.d_model);
    out.kv("d_ffn", c.d_ffn);
    out.kv("heads", c.n_heads);
    out.kv("nonembed_params", nonembed_params(c));
}

fn grow(a: GrowArgs) -> Result<Outcome> {
    let base = Checkpoint::read(&a.input)?;
    let plan = GrowthPlan {
        operator: a.op,
        direction: a.direction,
        growth_factor: a.g,
        stack_pattern: a.pattern,
        noise_ratio: a.noise,
        seed: a.seed,
        meta_steps: a.meta_steps,
        meta_lr: a.meta_lr,
    };
    let corpus = match &a.corpus {
        Some(p) => Some(load_corpus(p, base.config.max_seq_len + 1, a.seed)?),
        None => None,
    };
    let grown = apply_plan(&base.params, &base.config, &plan, corpus.as_ref())?;
    let mut out = Outcome::new();
    out.kv("from_layers", base.config.n_layers);
    describe(&mut out, &grown.config);
    if let Some(o) = &grown.origin {
        out.kv("origin", o);
        out.kv("connection_rate", format!("{:.3}", connection_rate(o)?));
    }
    if let Some(l) = grown.meta_losses.last() {
        out.kv("meta_loss", l);
    }
    let mut ckpt = Checkpoint::new(grown.config, grown.params);
    ckpt.meta = base.meta;
    ckpt.history = base.history;
    ckpt.history.push(GrowthRecord { plan: plan.to_string(), from_layers: base.config.n_layers, origin: grown.origin });
    ckpt.write(&a.output)?;
    Ok(out)
}

fn verify(a: VerifyArgs) -> Result<Outcome> {
    let base = Checkpoint::read(&a.base)?;
    let grown = Checkpoint::read(&a.grown)?;
    let check = FpCheck::new(a.grown.display().to_string(), a.batches, a.seed, a.tol);
    let report = fp_deviation(&base.params, &base.config, &grown.params, &grown.config, &check)?;
    let mut out = Outcome::new();
    out.record(format!(
        "batches={} max_rel_dev={:e} mean_rel_dev={:e} max_rel_dev_reverse={:e} tol={:e} verdict={}",
        report.n_batches,
        report.max_deviation,
        report.mean_deviation,
        report.max_deviation_reverse,
        report.tolerance,
        report.verdict.as_str()
    ));
    if let Some(e) = a.expect {
        let want = match e {
            Expect::Fp => Verdict::Preserving,
            Expect::Nonfp => Verdict::NonPreserving,
        };
        out.ok = report.verdict == want;
        out.kv("expected", want.as_str());
    }
    Ok(out)
}

fn train(a: TrainArgs) -> Result<Outcome> {
    let mut spec = ExperimentSpec::load(&a.spec)?;
    if let Some(o) = a.out {
        spec.output = o;
    }
    let quiet = a.quiet;
    let mut progress = |label: &str, s: &Sample| {
        if !quiet {
            eprintln!(
                "{label} step={} tokens={} flops={:e} loss={:.4} lr={:.3e}",
                s.step, s.tokens, s.flops, s.loss, s.lr
            );
        }
    };
    let report = run_spec(&spec, &mut progress)?;
    let mut out = Outcome::new();
    for (k, v) in &report.entries {
        out.kv(k, v);
    }
    Ok(out)
}

fn law(c: LawCommand) -> Result<Outcome> {
    let mut out = Outcome::new();
    match c {
        LawCommand::Fit { points } => out.record(fit_power_law(&read_points(&points)?)?),
        LawCommand::Isoflop { points } => out.record(fit_isoflop(&read_points(&points)?)?),
        LawCommand::Guideline(g) => {
            let budget = match (g.tokens, g.flops) {
                (Some(d), _) => Budget::Tokens(d),
                (None, Some(c)) => Budget::Flops(c),
                (None, None) => unreachable!("clap requires one budget"),
            };
            let c = budget.flops(g.n)?;
            out.kv("C", format!("{c:e}"));
            out.kv("d", format!("{:e}", guideline_d(g.n, budget)?));
            out.record(guideline_g(g.n, c)?);
        }
        LawCommand::Speedup { target, scratch, grown } => {
            match speedup(&read_curve(&scratch)?, &read_curve(&grown)?, target) {
                Ok(s) => out.kv("speedup", s),
                Err(e @ growkit_core::Error::Unreachable { .. }) => {
                    eprintln!("growkit: {e}");
                    out.kv("speedup", "unreachable");
                    out.ok = false;
                }
                Err(e) => return Err(e.into()),
            }
        }
        LawCommand::Lossgap { scratch, grown } => {
            out.record(fit_loss_gap(&read_curve(&scratch)?, &read_curve(&grown)?)?)
        }
    }
    Ok(out)
}

fn info(path: &Path) -> Result<Outcome> {
    let c = Checkpoint::read(path)?;
    let mut out = Outcome::new();
    describe(&mut out, &c.config);
    out.kv("vocab", c.config.vocab_size);
    out.kv("gated", c.params.gates.is_some());
    for (k, v) in &c.meta {
        out.kv(&format!("meta.{k}"), v);
    }
    for (i, h) in c.history.iter().enumerate() {
        out.kv(&format!("growth.{i}.from_layers"), h.from_layers);
        out.kv(&format!("growth.{i}.plan"), h.plan.replace(' ', ","));
        if let Some(o) = &h.origin {
            out.kv(&format!("growth.{i}.origin"), o);
        }
    }
    Ok(out)
}
