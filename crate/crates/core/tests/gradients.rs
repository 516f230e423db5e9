use growkit_core::model::{init_params, ModelConfig};
use growkit_core::verify::{grad_check, unit_scale_params};

fn tiny() -> ModelConfig {
    ModelConfig { vocab_size: 11, d_model: 8, d_ffn: 16, n_heads: 2, head_dim: 4, n_layers: 2, max_seq_len: 5 }
}

#[test]
fn backward_matches_central_differences() {
    let c = tiny();
    for seed in [11, 12, 13] {
        let p = unit_scale_params(&c, seed).unwrap();
        let r = grad_check(&p, &c, &[3, 1, 4, 1, 5], &[1, 4, 1, 5, 9], 5, 1e-3).unwrap();
        assert_eq!(r.entries, p.num_params());
        assert!(r.max_rel_error <= 1e-3, "seed {seed}: {r:?}");
    }
}

#[test]
fn training_init_matches_with_a_finer_step() {
    let c = tiny();
    let p = init_params::<f64>(&c, 11).unwrap();
    let r = grad_check(&p, &c, &[3, 1, 4, 1, 5], &[1, 4, 1, 5, 9], 5, 1e-4).unwrap();
    assert!(r.max_rel_error <= 1e-3, "{r:?}");
}

#[test]
fn batched_sequences_check_out() {
    let c = tiny();
    let p = unit_scale_params(&c, 2).unwrap();
    let tokens = [0, 1, 2, 3, 10, 9, 8, 7];
    let targets = [1, 2, 3, 4, 9, 8, 7, 6];
    let r = grad_check(&p, &c, &tokens, &targets, 4, 1e-4).unwrap();
    assert!(r.max_rel_error <= 1e-3, "{r:?}");
}
