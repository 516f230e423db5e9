//! Times one forward/backward pass at the desk-scale target size.

use std::time::Instant;

use growkit_core::model::{accumulate_gradients, init_params, ModelConfig};

fn main() {
    let c = ModelConfig {
        vocab_size: 256,
        d_model: 128,
        d_ffn: 256,
        n_heads: 8,
        head_dim: 16,
        n_layers: 6,
        max_seq_len: 256,
    };
    let p = init_params::<f32>(&c, 1).unwrap();
    for micro in [4usize, 8, 16] {
        let seq = 255;
        let tokens: Vec<u32> = (0..micro * seq).map(|i| (i * 7 % 256) as u32).collect();
        let mut g = p.zeros_like();
        let start = Instant::now();
        let reps = 3;
        for _ in 0..reps {
            accumulate_gradients(&p, &c, &tokens, &tokens, seq, None, 1.0, &mut g).unwrap();
        }
        let dt = start.elapsed().as_secs_f64() / reps as f64;
        let toks = (micro * seq) as f64;
        let flops = 6.0 * c.total_params() as f64 * toks;
        println!("micro={micro} {:.3}s/pass {:.0} tok/s {:.1} GFLOP/s (6N)", dt, toks / dt, flops / dt / 1e9);
    }
}
