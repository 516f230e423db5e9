//! FLOPs accounting `C = 6 N D` over non-embedding parameters.

use crate::model::ModelConfig;

/// Training FLOPs per parameter per token.
pub const FLOPS_PER_PARAM_TOKEN: u64 = 6;

/// Non-embedding parameter count of `config`.
pub fn nonembed_params(config: &ModelConfig) -> u64 {
    config.nonembed_params() as u64
}

/// Exact `6 N tokens`.
pub fn flops_exact(n: u64, tokens: u64) -> u128 {
    u128::from(FLOPS_PER_PARAM_TOKEN) * u128::from(n) * u128::from(tokens)
}

/// `6 N tokens` as a real.
pub fn flops(n: u64, tokens: u64) -> f64 {
    flops_exact(n, tokens) as f64
}

/// Running FLOPs total of a run that may change model size (growth).
/// Every segment is accumulated exactly, so the total of a grow-then-train
/// run is `C1 + C2` without rounding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FlopsLedger {
    total: u128,
    tokens: u64,
}

impl FlopsLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Charges `tokens` processed by a model with `n` non-embedding parameters.
    pub fn charge(&mut self, n: u64, tokens: u64) {
        self.total += flops_exact(n, tokens);
        self.tokens += tokens;
    }

    pub fn total_exact(&self) -> u128 {
        self.total
    }

    pub fn total(&self) -> f64 {
        self.total as f64
    }

    pub fn tokens(&self) -> u64 {
        self.tokens
    }
}

/// Combined cost of training a base model (`n` parameters) for `d` tokens and
/// the grown model (`big_n` parameters) for `big_d` tokens.
pub fn combined_flops(n: u64, d: u64, big_n: u64, big_d: u64) -> u128 {
    flops_exact(n, d) + flops_exact(big_n, big_d)
}

/// Tokens a model of `big_n` parameters can train on for the FLOPs of
/// `flops`, rounded down.
pub fn tokens_for_flops(flops: u128, big_n: u64) -> u64 {
    (flops / (u128::from(FLOPS_PER_PARAM_TOKEN) * u128::from(big_n))) as u64
}
