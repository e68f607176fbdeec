use proptest::prelude::*;
use qnewton::kinetic_series::*;
use qnewton::numerics::Jet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_lattice(seed: u64, n_max: u32, k_max: u32) -> KineticCoefficients {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = KineticCoefficients::zero((4, 4));
    for n in 0..=n_max {
        for k in 0..=k_max {
            c.set(n, k, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).unwrap();
        }
    }
    c
}

/// Random time jet with |ẍ| kept away from zero so negative ẍ powers of
/// arbitrary lattices stay moderate.
fn regular_jet(s: &mut JetSampler) -> Jet {
    let j = s.sample();
    let mut d = j.derivs().to_vec();
    if d[2].abs() < 0.3 {
        d[2] = 0.3f64.copysign(d[2]) + d[2];
    }
    Jet::from_derivs(&d)
}

/// Each component of the phase point as a first-order jet in time.
fn time_point(j: &Jet) -> PhasePoint<Jet> {
    let c = |m: usize| Jet::from_derivs(&[j.deriv(m), j.deriv(m + 1)]);
    PhasePoint { x: c(0), xd: c(1), xdd: c(2), xddd: c(3), x4: c(4), x5: c(5) }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn second_and_third_action_derivatives_match_time_differentiation() {
    // d/dx = (1/ẋ) d/dt along any path, so differentiating the series for
    // S₀' (resp. S₀'') in time must give the series for S₀'' (resp. S₀''')
    let mut s = JetSampler::new(11);
    for seed in 0..20 {
        let c = random_lattice(seed, 3, 3);
        let t = ab_tables(&c);
        let (hbar, mu) = (0.8, 1.3);
        for _ in 0..25 {
            let j = regular_jet(&mut s);
            let tp = time_point(&j);
            let series = s0_derivatives_series(&t, 0.0, &tp, Jet::constant(hbar, 1), mu);
            let xd = j.deriv(1);
            let oracle2 = series[0].deriv(1) / xd;
            let oracle3 = series[1].deriv(1) / xd;
            assert!(close(series[1].value(), oracle2, 1e-9), "S'' {} vs {}", series[1].value(), oracle2);
            assert!(close(series[2].value(), oracle3, 1e-9), "S''' {} vs {}", series[2].value(), oracle3);
        }
    }
}

#[test]
fn ab_tables_equal_momentum_combination() {
    // dS₀/dx = P + Πẍ/ẋ + Ξx⃛/ẋ at λ = 0, for any lattice
    let mut s = JetSampler::new(12);
    for seed in 0..20 {
        let c = random_lattice(100 + seed, 4, 4);
        let sc = SeriesScale::new(0.6, 0.9).unwrap();
        for _ in 0..25 {
            let j = regular_jet(&mut s);
            let m = series_momenta(&c, &j, sc, 0.0).unwrap();
            let combo = m.p + m.pi * j.deriv(2) / j.deriv(1) + m.xi * j.deriv(3) / j.deriv(1);
            let s1 = ds0dx_series(&c, &j, sc).unwrap()[0];
            assert!(close(s1, combo, 1e-10), "{s1} vs {combo}");
        }
    }
}

#[test]
fn momentum_combination_is_bohm_momentum_for_canonical() {
    let c = KineticCoefficients::canonical();
    let mut s = JetSampler::new(13);
    for _ in 0..1000 {
        let j = s.sample();
        let sc = SeriesScale::new(1.0, 1.0).unwrap();
        let m = series_momenta(&c, &j, sc, 0.0).unwrap();
        let xd = j.deriv(1);
        let combo = m.p + m.pi * j.deriv(2) / xd + m.xi * j.deriv(3) / xd;
        let scale = m.p.abs() + (m.pi * j.deriv(2) / xd).abs() + (m.xi * j.deriv(3) / xd).abs();
        assert!((combo - xd).abs() <= 1e-12 * scale.max(xd.abs()));
    }
}

#[test]
fn canonical_momenta_match_hand_reduction() {
    let c = KineticCoefficients::canonical();
    let mut s = JetSampler::new(14);
    let (hbar, mu) = (0.7, 1.4);
    let q = hbar * hbar / (4.0 * mu);
    for _ in 0..200 {
        let j = s.sample();
        let (xd, xdd, xddd) = (j.deriv(1), j.deriv(2), j.deriv(3));
        let m = series_momenta(&c, &j, SeriesScale::new(hbar, mu).unwrap(), 0.0).unwrap();
        let p = mu * xd - q * (2.0 * xdd * xdd / xd.powi(5) - xddd / xd.powi(4));
        assert!(close(m.p, p, 1e-12));
        assert!(close(m.pi, 2.0 * q * xdd / xd.powi(4), 1e-12));
        assert!(close(m.xi, -q / xd.powi(3), 1e-12));
    }
}

#[test]
fn lambda_terms_enter_momenta_linearly() {
    let c = KineticCoefficients::canonical();
    let j = Jet::from_derivs(&[0.1, 0.9, 0.3, -0.2, 0.7, -0.4, 0.0]);
    let sc = SeriesScale::new(1.0, 1.0).unwrap();
    let m0 = series_momenta(&c, &j, sc, 0.0).unwrap();
    let m1 = series_momenta(&c, &j, sc, 0.3).unwrap();
    assert!(close(m1.p - m0.p, 0.3 * -0.4, 1e-14));
    assert!(close(m1.pi - m0.pi, -0.3 * 0.7, 1e-14));
    assert!(close(m1.xi - m0.xi, 0.3 * -0.2, 1e-14));
}

#[test]
fn canonical_series_reduce_to_bohm_forms() {
    let c = KineticCoefficients::canonical();
    let mut s = JetSampler::new(15);
    for _ in 0..200 {
        let j = s.sample();
        let mu = 1.7;
        let d = ds0dx_series(&c, &j, SeriesScale::new(0.9, mu).unwrap()).unwrap();
        let (xd, xdd, xddd) = (j.deriv(1), j.deriv(2), j.deriv(3));
        assert!(close(d[0], mu * xd, 1e-13));
        assert!(close(d[1], mu * xdd / xd, 1e-13));
        assert!(close(d[2], mu * (xddd * xd - xdd * xdd) / xd.powi(3), 1e-12));
    }
}

#[test]
fn canonical_master_relation_holds_at_random_jets() {
    let c = KineticCoefficients::canonical();
    let mut s = JetSampler::new(16);
    for _ in 0..1000 {
        let r = master_residual(&c, &s.sample(), SeriesScale::new(1.0, 1.0).unwrap()).unwrap();
        assert!(r.relative() <= 1e-10, "{r:?}");
    }
}

#[test]
fn every_single_entry_perturbation_is_detected() {
    // the relation must vanish order by order in ħ; a 1e-6 change of any
    // entry shows up above the canonical rounding floor of some level
    let base = KineticCoefficients::canonical();
    let mut s = JetSampler::new(17);
    let jets: Vec<Jet> = (0..1000).map(|_| s.sample()).collect();
    let levels = |c: &KineticCoefficients, j: &Jet| master_level_residuals(c, j, 1.0, 6).unwrap();
    let base_levels: Vec<Vec<MasterResidual>> = jets.iter().map(|j| levels(&base, j)).collect();
    for n in 0..=4 {
        for k in 0..=4 {
            for fam in [Family::Alpha, Family::Beta] {
                let mut c = base.clone();
                c.set_coefficient(fam, n, k, base.coefficient(fam, n, k) + 1e-6).unwrap();
                let hits = jets
                    .iter()
                    .zip(&base_levels)
                    .filter(|(j, b)| {
                        levels(&c, j).iter().zip(b.iter()).any(|(p, q)| {
                            let floor = 64.0 * f64::EPSILON * q.scale;
                            p.value.abs() > floor.max(q.value.abs() * 4.0)
                        })
                    })
                    .count();
                assert!(hits >= 990, "{fam}_{n}{k}: detected at {hits}/1000 jets");
            }
        }
    }
}

#[test]
fn canonical_levels_beyond_two_are_exactly_zero() {
    let mut s = JetSampler::new(18);
    for _ in 0..100 {
        let lv = master_level_residuals(&KineticCoefficients::canonical(), &s.sample(), 1.3, 6).unwrap();
        for l in &lv[..3] {
            assert!(l.relative() <= 1e-12, "{l:?}");
        }
        for l in &lv[3..] {
            assert_eq!(l.value, 0.0);
        }
    }
}

#[test]
fn determination_recovers_canonical_lattice_through_level_four() {
    let r = determine_coefficients(4, DEFAULT_TRUNCATION, &mut JetSampler::new(3)).unwrap();
    assert_eq!(r.coefficients, KineticCoefficients::canonical());
    let l0 = r.level0.as_ref().unwrap();
    assert_eq!(l0.roots, vec![0.0, 0.5]);
    assert_eq!(l0.selected, 0.5);
    assert_eq!(r.levels.len(), 5);
    for l in &r.levels {
        assert!(l.samples >= 3 * l.unknowns);
        assert!(l.check_residual <= 1e-9, "{l:?}");
    }
}

#[test]
fn determination_level_one_and_two() {
    let r1 = determine_coefficients(1, DEFAULT_TRUNCATION, &mut JetSampler::new(4)).unwrap();
    assert_eq!(r1.coefficients.entries().count(), 1);
    let r2 = determine_coefficients(2, DEFAULT_TRUNCATION, &mut JetSampler::new(5)).unwrap();
    assert_eq!(r2.coefficients, KineticCoefficients::canonical());
    let lvl2 = &r2.levels[2];
    let alpha20 = lvl2.solved.iter().find(|(f, k, _)| *f == Family::Alpha && *k == 0).unwrap().2;
    assert!((alpha20 - 0.625).abs() < 1e-10);
}

#[test]
fn determination_rejects_bad_requests() {
    assert!(determine_coefficients(5, DEFAULT_TRUNCATION, &mut JetSampler::new(1)).is_err());
    assert!(determine_coefficients(2, (4, 1), &mut JetSampler::new(1)).is_err());
}

fn kinetic_scaled(c: &KineticCoefficients, j: &[f64; 4], hbar: f64, mu: f64) -> f64 {
    let p = PhasePoint { x: j[0], xd: j[1], xdd: j[2], xddd: j[3], x4: 0.0, x5: 0.0 };
    kinetic(c, &p, hbar, mu)
}

proptest! {
    #[test]
    fn kinetic_energy_has_energy_dimension(
        seed in any::<u64>(),
        ll in 0.5f64..2.0, lt in 0.5f64..2.0, lm in 0.5f64..2.0,
        x in -1.0f64..1.0, xd in 0.5f64..2.0, xdd in 0.3f64..1.0, xddd in -1.0f64..1.0,
    ) {
        let c = random_lattice(seed, 3, 3);
        let (hbar, mu) = (0.7, 1.2);
        let t = kinetic_scaled(&c, &[x, xd, xdd, xddd], hbar, mu);
        let ts = kinetic_scaled(
            &c,
            &[ll * x, ll / lt * xd, ll / lt.powi(2) * xdd, ll / lt.powi(3) * xddd],
            lm * ll * ll / lt * hbar,
            lm * mu,
        );
        let factor = lm * ll * ll / (lt * lt);
        prop_assert!((ts - factor * t).abs() <= 1e-9 * (ts.abs() + (factor * t).abs() + 1.0));
    }

    #[test]
    fn each_monomial_has_the_lattice_exponents(
        n in 0u32..=4, k in 0u32..=4, beta in any::<bool>(),
        s1 in 0.5f64..2.0, s2 in 0.5f64..2.0, s3 in 0.5f64..2.0,
    ) {
        let mut c = KineticCoefficients::zero((4, 4));
        if beta { c.set(n, k, 0.0, 1.0).unwrap() } else { c.set(n, k, 1.0, 0.0).unwrap() }
        let base = [0.4, 1.1, 0.8, 0.6];
        let t0 = kinetic_scaled(&c, &base, 1.0, 1.0);
        let t1 = kinetic_scaled(&c, &[base[0], s1 * base[1], s2 * base[2], s3 * base[3]], 1.0, 1.0);
        let (n, k) = (n as i32, k as i32);
        let expect = if beta {
            s1.powi(-(3 * n + 2 * k - 3)) * s2.powi(n + k - 2) * s3
        } else {
            s1.powi(-(3 * n + 2 * k - 2)) * s2.powi(n + k)
        };
        prop_assert!((t1 / t0 - expect).abs() <= 1e-12 * expect.abs());
    }

    #[test]
    fn canonical_master_relation_is_an_identity(seed in any::<u64>(), hbar in 0.1f64..3.0, mu in 0.2f64..5.0) {
        let mut s = JetSampler::new(seed);
        let r = master_residual(&KineticCoefficients::canonical(), &s.sample(), SeriesScale::new(hbar, mu).unwrap()).unwrap();
        prop_assert!(r.relative() <= 1e-10);
    }

    #[test]
    fn lattice_json_round_trips(seed in any::<u64>()) {
        let c = random_lattice(seed, 4, 4).with_x_offset(0.5);
        prop_assert_eq!(KineticCoefficients::from_json(&c.to_json()).unwrap(), c);
    }
}

#[test]
fn x_offset_shifts_the_expansion_point() {
    let mut c = KineticCoefficients::zero((4, 4));
    c.set(1, 2, 0.3, 0.0).unwrap();
    let shifted = c.clone().with_x_offset(0.5);
    let p = |x: f64| PhasePoint { x, xd: 1.2, xdd: 0.4, xddd: 0.1, x4: 0.0, x5: 0.0 };
    let a = kinetic(&c, &p(0.2), 1.0, 1.0);
    let b = kinetic(&shifted, &p(0.7), 1.0, 1.0);
    assert!((a - b).abs() < 1e-15);
}
