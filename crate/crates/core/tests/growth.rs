use growkit_core::growth::{
    apply_plan, connection_rate, expand_linear, inject_noise, parse_stack_pattern, Direction, GrowthPlan, Operator,
    OriginMap, WidthMap,
};
use growkit_core::model::{init_params, ModelConfig, ParameterSet, TensorKind};
use growkit_core::rng::rng;
use growkit_core::verify::{fp_deviation, FpCheck, Verdict};
use growkit_core::Matrix;

fn base() -> ModelConfig {
    ModelConfig { vocab_size: 256, d_model: 32, d_ffn: 64, n_heads: 4, head_dim: 8, n_layers: 2, max_seq_len: 32 }
}

fn plan(op: Operator, dir: Direction, g: usize) -> GrowthPlan {
    GrowthPlan { direction: dir, growth_factor: g, seed: 5, ..GrowthPlan::new(op) }
}

fn check<T: growkit_core::Scalar>(
    label: &str,
    p: &ParameterSet<T>,
    grown: &growkit_core::growth::Grown<T>,
) -> growkit_core::verify::FpReport {
    fp_deviation(p, &base(), &grown.params, &grown.config, &FpCheck::new(label, 16, 9, 1e-4)).unwrap()
}

#[test]
fn expected_verdicts() {
    let p = init_params::<f64>(&base(), 3).unwrap();
    let cases = [
        ("zero-width", plan(Operator::Zero, Direction::Width, 4), Verdict::Preserving),
        ("zero-depth", plan(Operator::Zero, Direction::Depth, 2), Verdict::Preserving),
        ("random-width", plan(Operator::Random, Direction::Width, 4), Verdict::Preserving),
        ("random-depth", plan(Operator::Random, Direction::Depth, 2), Verdict::Preserving),
        ("direct-width", plan(Operator::Direct, Direction::Width, 4), Verdict::NonPreserving),
        ("stack", GrowthPlan { seed: 5, ..GrowthPlan::stack(2) }, Verdict::NonPreserving),
        (
            "zero-width-noise",
            GrowthPlan { noise_ratio: 0.2, ..plan(Operator::Zero, Direction::Width, 4) },
            Verdict::NonPreserving,
        ),
    ];
    for (label, plan, want) in cases {
        let grown = apply_plan(&p, &base(), &plan, None).unwrap();
        let r = check(label, &p, &grown);
        assert_eq!(r.verdict, want, "{r}");
        if want == Verdict::NonPreserving {
            assert!(r.max_deviation > 1e-3, "{r}");
        }
    }
}

#[test]
fn depth_operators_preserve_single_precision_models() {
    // Depth growth leaves every surviving weight untouched, so the f32 model
    // keeps its function as well.
    let p = init_params::<f32>(&base(), 3).unwrap();
    for plan in [plan(Operator::Zero, Direction::Depth, 2), plan(Operator::Random, Direction::Depth, 3)] {
        let grown = apply_plan(&p, &base(), &plan, None).unwrap();
        let r = check("depth", &p, &grown);
        assert!(r.max_deviation <= 1e-6, "{r}");
    }
}

#[test]
fn deviation_is_roughly_symmetric() {
    // Near-identical models: the two denominators differ by little, so the
    // maxima sit on the same logit.
    let c = FpCheck::new("pair", 4, 2, 1e-4);
    let swap = |a: &ParameterSet<f64>, ca: &ModelConfig, b: &ParameterSet<f64>, cb: &ModelConfig| {
        let ab = fp_deviation(a, ca, b, cb, &c).unwrap();
        let ba = fp_deviation(b, cb, a, ca, &c).unwrap();
        assert_eq!(ab.max_deviation, ba.max_deviation_reverse);
        for (x, y) in [(ab.max_deviation, ba.max_deviation), (ab.mean_deviation, ba.mean_deviation)] {
            assert!(x <= 2.0 * y && y <= 2.0 * x, "{ab} / {ba}");
        }
    };
    for seed in 0..4 {
        let a = init_params::<f64>(&base(), seed).unwrap();
        let b = inject_noise(&a, &base(), 1e-9, seed).unwrap();
        swap(&a, &base(), &b, &base());
        for plan in [plan(Operator::Zero, Direction::Width, 4), plan(Operator::Random, Direction::Depth, 2)] {
            let g = apply_plan(&a, &base(), &plan, None).unwrap();
            swap(&a, &base(), &g.params, &g.config);
        }
    }
}

#[test]
fn depth_growth_multiplies_block_params_exactly() {
    // The final norm is shared, so the exact ratio holds for the blocks.
    let p = init_params::<f32>(&base(), 1).unwrap();
    let d = base().d_model;
    for (plan, g) in [
        (GrowthPlan::stack(4), 4),
        (plan(Operator::Zero, Direction::Depth, 3), 3),
        (plan(Operator::Random, Direction::Depth, 2), 2),
    ] {
        let grown = apply_plan(&p, &base(), &plan, None).unwrap();
        assert_eq!(grown.config.nonembed_params() - d, g * (base().nonembed_params() - d));
    }
}

#[test]
fn stacked_layers_equal_their_origin() {
    let c = base().with_layers(3);
    let p = init_params::<f32>(&c, 2).unwrap();
    for pattern in ["123*2", "1-23*3", "12*3-3"] {
        let grown = apply_plan(&p, &c, &GrowthPlan::pattern(pattern), None).unwrap();
        let origin = grown.origin.unwrap();
        assert_eq!(grown.params.layers.len(), origin.len());
        for (j, &o) in origin.as_slice().iter().enumerate() {
            assert_eq!(grown.params.layers[j], p.layers[o - 1], "{pattern} layer {j}");
        }
        assert_eq!(grown.params.embedding, p.embedding);
        assert_eq!(grown.params.head, p.head);
    }
}

#[test]
fn connection_rates_of_the_pattern_table() {
    // Retained adjacent pairs counted by hand out of 23.
    let rows = [
        ("123456*4", 20),
        ("12-3456*5-56", 18),
        ("12-345*7-6", 17),
        ("123-456*7", 17),
        ("1234-56*10", 14),
        ("12-34*10-56", 14),
        ("1-234*7-56", 17),
        ("123*7-456", 17),
    ];
    for (pattern, retained) in rows {
        let o = parse_stack_pattern(pattern, 6).unwrap();
        assert_eq!(o.len(), 24, "{pattern}");
        assert_eq!(connection_rate(&o).unwrap(), retained as f64 / 23.0, "{pattern}");
    }
    assert_eq!(connection_rate(&OriginMap::repeated(8, 3)).unwrap(), 21.0 / 23.0);
    assert_eq!(connection_rate(&OriginMap::interleaved(8, 3)).unwrap(), 7.0 / 23.0);
}

#[test]
fn noise_touches_every_listed_tensor() {
    let c = base();
    let p = init_params::<f32>(&c, 4).unwrap();
    for alpha in [0.01, 0.5, 1.0] {
        let q = inject_noise(&p, &c, alpha, 6).unwrap();
        let before = p.tensors();
        let after = q.tensors();
        for (a, b) in before.iter().zip(&after) {
            let changed = a.data.iter().zip(b.data).any(|(x, y)| x != y);
            assert_eq!(changed, a.kind != TensorKind::Norm, "{} at alpha {alpha}", a.name);
        }
    }
    assert_eq!(inject_noise(&p, &c, 0.0, 6).unwrap(), p);
}

#[test]
fn split_keeps_a_norm_free_linear_path() {
    let mut r = rng(3, 0);
    let (d_in, h, d_out) = (6, 5, 4);
    let w1 = Matrix::<f64>::from_fn(h, d_in, |_, _| growkit_core::rng::normal(&mut r, 1.0));
    let w2 = Matrix::<f64>::from_fn(d_out, h, |_, _| growkit_core::rng::normal(&mut r, 1.0));
    let x: Vec<f64> = (0..d_in).map(|i| (i as f64 * 0.7).sin()).collect();
    let apply = |w: &Matrix<f64>, v: &[f64]| -> Vec<f64> {
        (0..w.rows()).map(|i| (0..w.cols()).map(|j| w.get(i, j) * v[j]).sum()).collect()
    };
    let y = apply(&w2, &apply(&w1, &x));
    for g in [2, 3, 4] {
        let hidden = WidthMap::tiled(h, g, &mut r);
        let id_in = WidthMap::identity(d_in);
        let id_out = WidthMap::identity(d_out);
        let w1g = expand_linear(&w1, &hidden, &id_in);
        let w2g = expand_linear(&w2, &id_out, &hidden);
        let yg = apply(&w2g, &apply(&w1g, &x));
        for (a, b) in y.iter().zip(&yg) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "g={g}: {a} vs {b}");
        }
    }
}

#[test]
fn repeat_group_pattern() {
    let o = parse_stack_pattern("12*3", 2).unwrap();
    assert_eq!(o.as_slice(), [1, 2, 1, 2, 1, 2]);
    assert_eq!(o, OriginMap::repeated(2, 3));
    assert_eq!(o.to_string(), "1,2,1,2,1,2");
    assert_eq!(connection_rate(&o).unwrap(), 0.6);
}
