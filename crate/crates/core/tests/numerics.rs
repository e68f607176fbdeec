use std::f64::consts::PI;

use proptest::prelude::*;
use qnewton::numerics::{integrate_ivp, invert_monotone, jet_apply, IntegratorSettings, Jet, JetOp};

fn central(f: &dyn Fn(f64) -> f64, x: f64, m: usize, h: f64) -> f64 {
    match m {
        1 => (f(x + h) - f(x - h)) / (2.0 * h),
        2 => (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h),
        3 => (f(x + 2.0 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2.0 * h)) / (2.0 * h * h * h),
        _ => unreachable!(),
    }
}

fn composite(t: f64) -> f64 {
    (t.sin() * t.exp()).atan() + (1.0 + t * t).sqrt() / (2.0 + t.cos()) + (3.0 + t).ln() * t.powi(3)
}

fn composite_jet(t: Jet) -> Jet {
    let one = Jet::constant(1.0, t.order());
    let two = Jet::constant(2.0, t.order());
    let three = Jet::constant(3.0, t.order());
    let a = jet_apply(JetOp::Mul, &[t.sin(), t.exp()]).unwrap().atan();
    let b = jet_apply(JetOp::Div, &[(one + t * t).sqrt(), two + t.cos()]).unwrap();
    a + b + (three + t).ln() * t.powi(3)
}

#[test]
fn ode_examples() {
    let s = IntegratorSettings::default();
    let e = integrate_ivp(
        |_, y, d| {
            d[0] = y[0];
            Ok(())
        },
        &[1.0],
        (0.0, 1.0),
        &s,
    )
    .unwrap();
    assert!((e.final_state()[0] - std::f64::consts::E).abs() <= 1e-10 * std::f64::consts::E * 10.0);

    let tight = IntegratorSettings::with_tolerances(1e-12, 1e-14);
    let sine = integrate_ivp(
        |_, y, d| {
            d[0] = y[1];
            d[1] = -y[0];
            Ok(())
        },
        &[0.0, 1.0],
        (0.0, PI),
        &tight,
    )
    .unwrap();
    assert!(sine.final_state()[0].abs() < 1e-9);

    let line = integrate_ivp(
        |_, _, d| {
            d[0] = 1.0;
            Ok(())
        },
        &[0.0],
        (0.0, 5.0),
        &s,
    )
    .unwrap();
    assert!((line.final_state()[0] - 5.0).abs() < 1e-12);
}

#[test]
fn oscillator_invariant_grows_at_most_linearly() {
    // global drift of a locally controlled pair accumulates with the number of
    // periods; the bound is 10 rel_tol per period integrated
    let s = IntegratorSettings::default();
    for periods in [1.0, 100.0] {
        let t1 = 2.0 * PI * periods;
        let sol = integrate_ivp(
            |_, y, d| {
                d[0] = y[1];
                d[1] = -y[0];
                Ok(())
            },
            &[1.0, 0.0],
            (0.0, t1),
            &s,
        )
        .unwrap();
        let mut worst = 0.0f64;
        for k in 0..=4000 {
            let y = sol.eval(t1 * k as f64 / 4000.0).unwrap();
            worst = worst.max((y[0] * y[0] + y[1] * y[1] - 1.0).abs());
        }
        assert!(worst <= 10.0 * s.rel_tol * periods, "{periods} periods: {worst}");
    }
}

#[test]
fn invert_examples() {
    let r = invert_monotone(|x| x * x * x, 8.0, (0.0, 3.0), 1e-14).unwrap();
    assert!((r - 2.0).abs() < 1e-12);
    let r = invert_monotone(|x| x - x.sin(), 0.0, (-1.0, 1.0), 1e-14).unwrap();
    assert!((r - r.sin()).abs() <= 1e-14);
    // free time equation with a=2, b=0, k=1
    let f = |x: f64| 0.5 * (5.0 * x - 1.5 * (2.0 * x).sin());
    let r = invert_monotone(f, 1.25 * PI * 2.0, (0.0, 4.0), 1e-14).unwrap();
    assert!((r - PI).abs() < 1e-10, "{r}");
}

#[test]
fn jet_examples() {
    let t = Jet::from_derivs(&[1.0, 1.0, 0.0]);
    assert_eq!(jet_apply(JetOp::Mul, &[t, t]).unwrap().derivs(), &[1.0, 2.0, 2.0]);
    let s = jet_apply(JetOp::Sin, &[Jet::from_derivs(&[0.0, 1.0, 0.0, 0.0])]).unwrap();
    assert_eq!(s.derivs(), &[0.0, 1.0, 0.0, -1.0]);
    let q = jet_apply(JetOp::Div, &[Jet::from_derivs(&[1.0, 0.0, 0.0]), t]).unwrap();
    assert_eq!(q.derivs(), &[1.0, -1.0, 2.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn jets_agree_with_finite_differences(x in -0.8f64..1.5) {
        let j = composite_jet(Jet::variable(x, 3));
        prop_assert!((j.value() - composite(x)).abs() < 1e-13 * (1.0 + composite(x).abs()));
        for (m, h) in [(1usize, 1e-5), (2, 1e-4), (3, 1e-3)] {
            let fd = central(&composite, x, m, h);
            let d = j.deriv(m);
            prop_assert!((fd - d).abs() <= 1e-4 * (1.0 + d.abs()), "order {}: {} vs {}", m, d, fd);
        }
    }

    #[test]
    fn unequal_orders_truncate(a in prop::collection::vec(-2.0f64..2.0, 7), n in 0usize..6) {
        let hi = Jet::from_derivs(&a);
        let lo = Jet::from_derivs(&a[..=n]);
        let p = hi * lo;
        prop_assert_eq!(p.order(), n);
        let sq = lo * lo;
        prop_assert_eq!(p.derivs(), sq.derivs());
    }

    #[test]
    fn inversion_reproduces_target(target in -20.0f64..20.0, c in 0.1f64..0.99) {
        let f = |x: f64| x + c * x.sin();
        let r = invert_monotone(f, target, (-30.0, 30.0), 1e-12).unwrap();
        prop_assert!((f(r) - target).abs() <= 1e-12 * target.abs().max(1.0));
    }
}
