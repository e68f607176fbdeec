use proptest::prelude::*;
use qnewton::schrodinger::{solve_pair, PhysParams, PotentialModel, TabulatedPotential};

fn unit(e: f64) -> PhysParams {
    PhysParams::new(1.0, 1.0, e).unwrap()
}

fn catalog() -> Vec<(PotentialModel, f64, (f64, f64))> {
    let xs: Vec<f64> = (0..=200).map(|i| -5.0 + 0.05 * i as f64).collect();
    let vs = xs.iter().map(|x| 0.3 * x * x + 0.1 * x).collect();
    vec![
        (PotentialModel::Free, 0.5, (-10.0, 10.0)),
        (PotentialModel::Linear { slope: 0.5 }, 1.0, (-4.0, 4.0)),
        (PotentialModel::Harmonic { stiffness: 1.0 }, 0.5, (-4.0, 4.0)),
        (PotentialModel::Harmonic { stiffness: 2.0 }, 1.7, (-3.0, 3.0)),
        (PotentialModel::Tabulated(TabulatedPotential::new(xs, vs).unwrap()), 0.9, (-4.0, 4.0)),
    ]
}

#[test]
fn wronskian_is_constant_for_every_numerov_pair() {
    for (pot, e, dom) in catalog() {
        let pair = solve_pair(&pot, unit(e), dom, 0.0, 1e-3).unwrap();
        let drift = pair.wronskian_drift(1000).unwrap();
        assert!(drift <= 1e-6, "{}: {drift}", pot.name());
    }
}

#[test]
fn stencil_and_recursion_residuals_are_small() {
    for (pot, e, dom) in catalog() {
        let pair = solve_pair(&pot, unit(e), dom, 0.0, 1e-3).unwrap();
        let c = pair.params().coupling();
        for i in 0..200 {
            let x = dom.0 + 0.05 + (dom.1 - dom.0 - 0.1) * i as f64 / 199.0;
            // analytic pairs have no grid
            if let Some(r) = pair.stencil_residual(x) {
                assert!(r <= 1e-7, "{} x={x}: {r}", pot.name());
            }
            let (p1, _) = pair.eval_phi(x, 2).unwrap();
            let v = pot.value(x);
            assert!((p1.deriv(2) - c * (v - e) * p1.value()).abs() <= 1e-12 * (1.0 + p1.value().abs()));
        }
    }
}

#[test]
fn numerov_free_matches_analytic_pair() {
    let p = unit(0.5);
    let num = qnewton::schrodinger::solve_pair_numerov(&PotentialModel::Free, p, (0.0, 10.0), 0.0, 1e-3).unwrap();
    let worst = (0..=2000)
        .map(|i| {
            let x = 10.0 * i as f64 / 2000.0;
            let (p1, p2) = num.eval_phi(x, 0).unwrap();
            (p1.value() - x.sin()).abs().max((p2.value() - x.cos()).abs())
        })
        .fold(0.0, f64::max);
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn analytic_wronskian_examples() {
    let pair = solve_pair(&PotentialModel::Free, unit(0.5), (-10.0, 10.0), 0.0, 1e-3).unwrap();
    assert!((pair.wronskian(0.7).unwrap() - 1.0).abs() < 1e-15);
    let pair = solve_pair(&PotentialModel::Free, unit(2.0), (-10.0, 10.0), 0.0, 1e-3).unwrap();
    for x in [-3.0, 0.1, 2.2] {
        assert!((pair.wronskian(x).unwrap() - 2.0).abs() < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn free_pair_is_sine_and_cosine(e in 0.05f64..5.0, x in -10.0f64..10.0) {
        let pair = solve_pair(&PotentialModel::Free, unit(e), (-10.0, 10.0), 0.0, 1e-3).unwrap();
        let k = (2.0 * e).sqrt();
        let (p1, p2) = pair.eval_phi(x, 3).unwrap();
        prop_assert!((p1.value() - (k * x).sin()).abs() < 1e-12);
        prop_assert!((p2.deriv(1) + k * (k * x).sin()).abs() < 1e-12);
        prop_assert!((p1.deriv(3) + k.powi(3) * (k * x).cos()).abs() < 1e-10 * (1.0 + k.powi(3)));
        prop_assert!((pair.wronskian_ref() - k).abs() < 1e-15 * k);
    }

    #[test]
    fn harmonic_wronskian_constant_for_any_energy(e in 0.2f64..3.0, kappa in 0.3f64..2.0) {
        let pair = solve_pair(&PotentialModel::Harmonic { stiffness: kappa }, unit(e), (-3.0, 3.0), 0.0, 1e-3).unwrap();
        prop_assert!(pair.wronskian_drift(1000).unwrap() <= 1e-6);
    }
}
