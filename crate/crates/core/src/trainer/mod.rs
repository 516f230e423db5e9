//! Desk-scale pre-training: token stream, schedule, AdamW, FLOPs ledger,
//! loss curves and grow-then-train experiments.

mod cost;
mod curve;
mod data;
mod experiment;
mod optim;
mod schedule;
mod train;

pub use cost::{
    combined_flops, flops, flops_exact, nonembed_params, tokens_for_flops, FlopsLedger, FLOPS_PER_PARAM_TOKEN,
};
pub use curve::{LossCurve, Sample};
pub use data::{Batch, Cursor, TokenStream};
pub use experiment::{
    run_gradual_experiment, run_growth_experiment, run_phases, Experiment, ExperimentOptions, GrowthEvent, Phase,
    PhasedRun,
};
pub use optim::{clip_grad_norm, AdamW};
pub use schedule::{lr_at, TrainConfig};
pub use train::{train, Diverged, Progress, TrainError, TrainOptions, TrainOutcome};

const SEED_DATA: u64 = 21;
