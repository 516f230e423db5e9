use std::f64::consts::PI;

use growkit_core::growth::GrowthPlan;
use growkit_core::model::ModelConfig;
use growkit_core::trainer::{
    combined_flops, flops_exact, lr_at, run_growth_experiment, tokens_for_flops, ExperimentOptions, TokenStream,
    TrainConfig,
};
use proptest::prelude::*;

proptest! {
    #[test]
    fn schedule_has_bounded_jumps(
        warmup in 1usize..200,
        extra in 1u64..2000,
        max_lr in 1e-5f64..1e-1,
        ratio in 0.0f64..1.0,
    ) {
        let tc = TrainConfig {
            tokens_per_batch: 10,
            seq_len: 10,
            warmup_steps: warmup,
            total_tokens: (warmup as u64 + extra) * 10,
            max_lr,
            min_lr: max_lr * ratio,
            ..Default::default()
        };
        let total = tc.total_steps();
        let decay = (total - warmup) as f64;
        let bound = max_lr * PI / (2.0 * decay) + max_lr / warmup as f64;
        for s in 0..total + 3 {
            let (a, b) = (lr_at(s, &tc), lr_at(s + 1, &tc));
            prop_assert!((b - a).abs() <= bound * (1.0 + 1e-12), "step {s}: {a} -> {b} (bound {bound})");
            prop_assert!(b >= 0.0 && b <= max_lr * (1.0 + 1e-12));
        }
        prop_assert!((lr_at(total, &tc) - tc.min_lr).abs() <= 1e-12 * max_lr);
    }

    #[test]
    fn combined_cost_matches_shortened_large_run(n in 1u64..1_000_000_000, d4 in 0u64..1_000_000_000_000, big_d in 0u64..10_000_000_000_000) {
        let g = 4;
        let d = 4 * d4;
        prop_assert_eq!(combined_flops(n, d, g * n, big_d), 6 * u128::from(g * n) * u128::from(d / g + big_d));
        prop_assert_eq!(tokens_for_flops(combined_flops(n, d, g * n, big_d), g * n), d / g + big_d);
    }
}

#[test]
fn ten_billion_token_base_costs_two_and_a_half_billion_large_tokens() {
    let n = 1_750_000_000u64;
    assert_eq!(flops_exact(n, 10_000_000_000), flops_exact(4 * n, 2_500_000_000));
}

#[test]
fn grown_curve_carries_base_cost_and_runs_repeat_bitwise() {
    let base =
        ModelConfig { vocab_size: 16, d_model: 16, d_ffn: 32, n_heads: 2, head_dim: 8, n_layers: 1, max_seq_len: 16 };
    let corpus = TokenStream::new((0..6000u32).map(|i| (i * 7 + i / 13) % 16).collect(), 17, 3).unwrap();
    let tc = TrainConfig {
        tokens_per_batch: 68,
        seq_len: 17,
        warmup_steps: 4,
        max_lr: 5e-3,
        min_lr: 5e-4,
        seed: 9,
        ..Default::default()
    };
    let run = || {
        let mut opts = ExperimentOptions { emit_every: 3, on_sample: None };
        run_growth_experiment::<f32>(&base, &GrowthPlan::stack(4), 68 * 6, 68 * 9, &tc, &corpus, &mut opts).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.grown.params, b.grown.params);
    assert_eq!(a.scratch.params, b.scratch.params);
    assert_eq!(a.grown.curve, b.grown.curve);
    let n = base.nonembed_params() as u128;
    let big_n = base.with_layers(4).nonembed_params() as u128;
    for s in a.grown.curve.samples() {
        let base_tokens = u128::from(s.tokens.min(68 * 6));
        let post = u128::from(s.tokens) - base_tokens;
        assert_eq!(s.flops, (6 * n * base_tokens + 6 * big_n * post) as f64);
    }
    for w in a.grown.curve.samples().windows(2) {
        assert!(w[0].step < w[1].step && w[0].tokens <= w[1].tokens && w[0].flops <= w[1].flops);
    }
}
