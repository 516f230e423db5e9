use growkit_core::laws::{fit_isoflop, fit_power_law, speedup};
use growkit_core::trainer::{LossCurve, Sample};
use proptest::prelude::*;

fn curve(points: &[(f64, f64)]) -> LossCurve {
    LossCurve::from_samples(
        points
            .iter()
            .enumerate()
            .map(|(i, &(flops, loss))| Sample { step: i as u64 + 1, tokens: i as u64, flops, loss, lr: 0.0 })
            .collect(),
    )
    .unwrap()
}

/// A decreasing loss curve over increasing FLOPs.
fn arb_curve() -> impl Strategy<Value = LossCurve> {
    (prop::collection::vec((0.1f64..10.0, 0.01f64..0.5), 2..20), 1e15f64..1e18, 3.0f64..6.0).prop_map(
        |(steps, f0, l0)| {
            let (mut f, mut l) = (f0, l0);
            let pts: Vec<(f64, f64)> = steps
                .into_iter()
                .map(|(df, dl)| {
                    f += df * f0;
                    l -= dl;
                    (f, l)
                })
                .collect();
            curve(&pts)
        },
    )
}

proptest! {
    #[test]
    fn power_law_fit_is_scale_equivariant(
        pts in prop::collection::vec((1e10f64..1e20, 1.0f64..10.0), 3..12),
        k in 1e-3f64..1e3,
    ) {
        let mut cs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        cs.sort_by(f64::total_cmp);
        prop_assume!(cs.windows(2).all(|w| w[1] > w[0] * (1.0 + 1e-6)));
        let a = fit_power_law(&pts).unwrap();
        let scaled: Vec<(f64, f64)> = pts.iter().map(|&(c, l)| (c * k, l)).collect();
        let b = fit_power_law(&scaled).unwrap();
        prop_assert!((b.b - a.b).abs() <= 1e-9, "{} vs {}", a.b, b.b);
        let want = a.a * k.powf(-a.b);
        prop_assert!((b.a - want).abs() <= 1e-9 * want, "{} vs {}", b.a, want);
    }

    #[test]
    fn isoflop_vertex_ignores_loss_offsets(
        xs in prop::collection::vec(8.0f64..11.0, 3..10),
        p in 0.05f64..2.0,
        vertex in 8.5f64..10.5,
        noise in prop::collection::vec(-0.01f64..0.01, 10),
        offset in -5.0f64..5.0,
    ) {
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assume!(sorted.windows(2).all(|w| w[1] - w[0] > 1e-3));
        let pts: Vec<(f64, f64)> =
            xs.iter().zip(&noise).map(|(&x, e)| (10f64.powf(x), p * (x - vertex).powi(2) + 3.0 + e)).collect();
        let shifted: Vec<(f64, f64)> = pts.iter().map(|&(d, l)| (d, l + offset)).collect();
        let a = fit_isoflop(&pts).unwrap();
        let b = fit_isoflop(&shifted).unwrap();
        match (a.optimal_d, b.optimal_d) {
            (Some(x), Some(y)) => prop_assert!((x.log10() - y.log10()).abs() <= 1e-9, "{x} vs {y}"),
            (x, y) => prop_assert_eq!(x.is_some(), y.is_some()),
        }
    }

    #[test]
    fn speedup_is_antisymmetric(a in arb_curve(), b in arb_curve(), q in 0.0f64..1.0) {
        let lo = a.last().unwrap().loss.max(b.last().unwrap().loss);
        let hi = a.samples()[0].loss.min(b.samples()[0].loss);
        prop_assume!(hi > lo);
        let target = lo + q * (hi - lo);
        let ab = speedup(&a, &b, target).unwrap();
        let ba = speedup(&b, &a, target).unwrap();
        prop_assert!((ab + 1.0 - 1.0 / (ba + 1.0)).abs() <= 1e-12 * (ab + 1.0).max(1.0));
    }
}
