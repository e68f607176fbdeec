//! Reduced action `S₀ = ħ arctan(aφ₁/φ₂ + b) + ħκ` built on a solution pair,
//! its `x`-derivatives, the stationary quantum Hamilton–Jacobi residual and
//! the wave function in unified form.
//!
//! `S₀' = ħaW/D` with `D = (aφ₁ + bφ₂)² + φ₂²`. It carries the sign of `aW`.
//! The wave function amplitude uses `|S₀'|^(-1/2)` so it stays real for
//! either sign.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{Jet, MAX_ORDER};
use crate::schrodinger::SolutionPair;

/// `D` below this is treated as a breakdown of pair independence.
pub const MIN_DENOMINATOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantumStateParams {
    pub a: f64,
    pub b: f64,
    pub kappa: f64,
}

impl QuantumStateParams {
    pub fn new(a: f64, b: f64, kappa: f64) -> Result<Self> {
        let q = QuantumStateParams { a, b, kappa };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.a == 0.0 || !self.a.is_finite() || !self.b.is_finite() || !self.kappa.is_finite() {
            return Err(Error::Contract(format!("need finite a != 0, b, kappa; got {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveCoefficients {
    pub alpha: Complex64,
    pub beta: Complex64,
}

impl WaveCoefficients {
    pub fn new(alpha: Complex64, beta: Complex64) -> Result<Self> {
        if alpha == Complex64::new(0.0, 0.0) && beta == Complex64::new(0.0, 0.0) {
            return Err(Error::Contract("alpha and beta cannot both vanish".into()));
        }
        Ok(WaveCoefficients { alpha, beta })
    }
}

/// `(aφ₁/φ₂ + b)` numerator and denominator: `tan(S₀/ħ − κ) = num/φ₂`.
fn phase_components(pair: &SolutionPair, q: &QuantumStateParams, x: f64) -> Result<(f64, f64, f64)> {
    let (p1, p2) = pair.eval_phi(x, 1)?;
    let num = q.a * p1.value() + q.b * p2.value();
    let w = p2.value() * p1.deriv(1) - p1.value() * p2.deriv(1);
    Ok((num, p2.value(), w / (p1.value().powi(2) + p2.value().powi(2))))
}

/// Principal branch of `arctan(aφ₁/φ₂ + b)`, with the `φ₂ = 0` limit.
fn principal(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        std::f64::consts::FRAC_PI_2.copysign(num)
    } else {
        (num / den).atan()
    }
}

/// Continuous phase `S₀/ħ − κ` at `x`, equal to the principal branch at the
/// pair's anchor.
///
/// The argument of `φ₂ + i(aφ₁ + bφ₂)` is tracked from the anchor in steps
/// over which the `(φ₁, φ₂)` vector turns by under half a radian. A linear
/// image of a vector turning by less than π also turns by less than π, so
/// each wrapped increment is exact.
fn unwrapped_phase(pair: &SolutionPair, q: &QuantumStateParams, x: f64) -> Result<f64> {
    let x0 = pair.anchor();
    let (num0, den0, _) = phase_components(pair, q, x0)?;
    let start = principal(num0, den0);
    if x == x0 {
        return Ok(start);
    }
    let dir = (x - x0).signum();
    let span = (x - x0).abs();
    let mut s = x0;
    let mut z = (den0, num0);
    let mut phi_angle = {
        let (p1, p2) = pair.eval_phi(x0, 0)?;
        p2.value().atan2(p1.value())
    };
    let mut acc = 0.0;
    let mut step = span.min(1e-2);
    let mut guard = 0usize;
    while (s - x0).abs() < span {
        guard += 1;
        if guard > 10_000_000 {
            return Err(Error::Domain(format!("phase tracking stalled near x = {s}")));
        }
        let h = step.min(span - (s - x0).abs());
        let next = if h >= span - (s - x0).abs() { x } else { s + dir * h };
        let (p1, p2) = pair.eval_phi(next, 0)?;
        let next_angle = p2.value().atan2(p1.value());
        let turn = wrap(next_angle - phi_angle).abs();
        if turn > 0.5 && h > 1e-14 * span.max(1.0) {
            step = h * 0.25;
            continue;
        }
        let zn = (p2.value(), q.a * p1.value() + q.b * p2.value());
        acc += (z.0 * zn.1 - z.1 * zn.0).atan2(z.0 * zn.0 + z.1 * zn.1);
        z = zn;
        phi_angle = next_angle;
        s = next;
        let (_, _, rate) = phase_components(pair, q, s)?;
        step = (0.2 / rate.abs().max(1e-300)).min(2.0 * h.max(1e-3)).min(span);
    }
    let (num, den, _) = phase_components(pair, q, x)?;
    let p = principal(num, den);
    let n = ((start + acc - p) / std::f64::consts::PI).round();
    Ok(p + n * std::f64::consts::PI)
}

fn wrap(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let r = (a + PI).rem_euclid(TAU) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

/// Branch-continued `S₀(x)`; the principal branch holds at the pair's anchor.
pub fn s0_eval(pair: &SolutionPair, q: &QuantumStateParams, x: f64) -> Result<f64> {
    q.validate()?;
    let hbar = pair.params().hbar;
    Ok(hbar * (unwrapped_phase(pair, q, x)? + q.kappa))
}

/// `S₀'` and its `x`-derivatives up to `order` as a jet in `x`.
pub fn ds0_jet(pair: &SolutionPair, q: &QuantumStateParams, x: f64, order: usize) -> Result<Jet> {
    q.validate()?;
    if order > MAX_ORDER {
        return Err(Error::Contract(format!("order {order} exceeds {MAX_ORDER}")));
    }
    let (p1, p2) = pair.eval_phi(x, order.max(1))?;
    // pointwise Wronskian: the recursion makes it exactly stationary locally
    let w = p2.value() * p1.deriv(1) - p1.value() * p2.deriv(1);
    let (p1, p2) = (p1.truncate(order), p2.truncate(order));
    let lin = p1 * q.a + p2 * q.b;
    let d = lin * lin + p2 * p2;
    if !(d.value() > MIN_DENOMINATOR) {
        return Err(Error::Singular(format!("D = {} at x = {x}", d.value())));
    }
    Ok(Jet::constant(pair.params().hbar * q.a * w, order) / d)
}

/// `(S₀', S₀'', S₀''')` at `x`.
pub fn ds0_derivs(pair: &SolutionPair, q: &QuantumStateParams, x: f64) -> Result<[f64; 3]> {
    let j = ds0_jet(pair, q, x, 2)?;
    Ok([j.value(), j.deriv(1), j.deriv(2)])
}

/// Normalized residual of the stationary quantum Hamilton–Jacobi equation
/// `(1/2μ)S₀'² + V − E = (ħ²/4μ)[(3/2)(S₀''/S₀')² − S₀'''/S₀']`.
pub fn qshje_residual(pair: &SolutionPair, q: &QuantumStateParams, x: f64) -> Result<f64> {
    let [s1, s2, s3] = ds0_derivs(pair, q, x)?;
    let p = pair.params();
    let v = pair.potential().value(x);
    let kinetic = s1 * s1 / (2.0 * p.mu);
    let lhs = kinetic + v - p.energy;
    let rhs = p.hbar * p.hbar / (4.0 * p.mu) * (1.5 * (s2 / s1).powi(2) - s3 / s1);
    Ok((lhs - rhs) / (p.energy.abs() + v.abs() + kinetic))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveValue {
    pub psi: Complex64,
    /// `|ψ'' + (2μ/ħ²)(E − V)ψ|` over `(2μ/ħ²)(|V| + |E|)|ψ| + 1`
    pub residual: f64,
}

/// `ψ = |S₀'|^(-1/2) [α e^{iS₀/ħ} + β e^{−iS₀/ħ}]` and its Schrödinger residual.
pub fn wavefunction(pair: &SolutionPair, q: &QuantumStateParams, w: &WaveCoefficients, x: f64) -> Result<WaveValue> {
    let p = pair.params();
    let s0 = s0_eval(pair, q, x)?;
    let sp = ds0_jet(pair, q, x, 2)?;
    let mut theta = [0.0; 3];
    theta[0] = s0 / p.hbar;
    theta[1] = sp.value() / p.hbar;
    theta[2] = sp.deriv(1) / p.hbar;
    let theta = Jet::from_derivs(&theta);
    let amp = (sp * sp.value().signum()).powf(-0.5);
    let (sn, cs) = (theta.sin(), theta.cos());
    // α e^{iθ} + β e^{-iθ} = (α+β) cos θ + i(α−β) sin θ
    let c1 = w.alpha + w.beta;
    let c2 = Complex64::i() * (w.alpha - w.beta);
    let re = amp * (cs * c1.re + sn * c2.re);
    let im = amp * (cs * c1.im + sn * c2.im);
    let psi = Complex64::new(re.value(), im.value());
    let d2 = Complex64::new(re.deriv(2), im.deriv(2));
    let c = p.coupling();
    let v = pair.potential().value(x);
    let r = (d2 + psi * (c * (p.energy - v))).norm();
    Ok(WaveValue { psi, residual: r / (c * (v.abs() + p.energy.abs()) * psi.norm() + 1.0) })
}

/// Finds `(ã, b̃)` for `new` (a recombination of `old`'s solutions) that
/// reproduce `old`'s `S₀'` with parameters `q`.
///
/// Uses `ħW/S₀' = ãθ₁² + 2b̃θ₁θ₂ + ((1+b̃²)/ã)θ₂²`, linear in
/// `(ã, b̃, (1+b̃²)/ã)`, solved by least squares at the sample points.
/// Returns the parameters and the violation of `ã·w̃ − b̃² = 1`.
pub fn compensate_pair_change(
    old: &SolutionPair,
    q: &QuantumStateParams,
    new: &SolutionPair,
    samples: &[f64],
) -> Result<(QuantumStateParams, f64)> {
    if samples.len() < 3 {
        return Err(Error::Contract("need at least three sample points".into()));
    }
    let hbar = new.params().hbar;
    let wn = new.wronskian_ref();
    let mut m = DMatrix::zeros(samples.len(), 3);
    let mut rhs = DVector::zeros(samples.len());
    for (i, &x) in samples.iter().enumerate() {
        let s1 = ds0_derivs(old, q, x)?[0];
        let (t1, t2) = new.eval_phi(x, 0)?;
        let (t1, t2) = (t1.value(), t2.value());
        let scale = (t1 * t1 + t2 * t2).max(f64::MIN_POSITIVE);
        m[(i, 0)] = t1 * t1 / scale;
        m[(i, 1)] = 2.0 * t1 * t2 / scale;
        m[(i, 2)] = t2 * t2 / scale;
        rhs[i] = hbar * wn / s1 / scale;
    }
    let svd = m.svd(true, true);
    let sol = svd.solve(&rhs, 1e-12).map_err(|e| Error::Singular(format!("pair-change fit: {e}")))?;
    if svd.singular_values.min() < 1e-10 * svd.singular_values.max() {
        return Err(Error::Singular("sample points do not separate the quadratic form".into()));
    }
    let (u, v, w) = (sol[0], sol[1], sol[2]);
    let fitted = QuantumStateParams::new(u, v, q.kappa)?;
    Ok((fitted, (u * w - v * v - 1.0).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schrodinger::{solve_pair, PhysParams, PotentialModel};
    use std::f64::consts::PI;

    fn free() -> SolutionPair {
        solve_pair(&PotentialModel::Free, PhysParams::new(1.0, 1.0, 0.5).unwrap(), (-20.0, 20.0), 0.0, 1e-3).unwrap()
    }

    fn q(a: f64, b: f64) -> QuantumStateParams {
        QuantumStateParams::new(a, b, 0.0).unwrap()
    }

    #[test]
    fn s0_is_x_for_unit_free_state() {
        let p = free();
        assert!((s0_eval(&p, &q(1.0, 0.0), 0.5).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(s0_eval(&p, &q(1.0, 0.0), 0.0).unwrap(), 0.0);
        for x in [1.6, PI / 2.0, 4.0, 10.0, -7.3] {
            assert!((s0_eval(&p, &q(1.0, 0.0), x).unwrap() - x).abs() < 1e-12, "{x}");
        }
    }

    #[test]
    fn kappa_shifts_by_hbar_kappa() {
        let qk = QuantumStateParams::new(1.0, 0.0, 2.0).unwrap();
        assert_eq!(s0_eval(&free(), &qk, 0.0).unwrap(), 2.0);
    }

    #[test]
    fn zero_a_rejected() {
        assert!(QuantumStateParams::new(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn derivative_examples() {
        let p = free();
        let d = ds0_derivs(&p, &q(1.0, 0.0), 1.234).unwrap();
        assert!((d[0] - 1.0).abs() < 1e-15 && d[1].abs() < 1e-15 && d[2].abs() < 1e-14);
        assert_eq!(ds0_derivs(&p, &q(2.0, 0.0), 0.0).unwrap()[0], 2.0);
        assert!((ds0_derivs(&p, &q(2.0, 0.0), PI / 2.0).unwrap()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn s0_is_continuous_and_monotone_for_extreme_a() {
        let p = free();
        for (a, b) in [(1e-3, 0.0), (50.0, -3.0), (-0.3, 0.7)] {
            let qq = q(a, b);
            let mut prev = s0_eval(&p, &qq, -9.0).unwrap();
            for i in 1..=360 {
                let x = -9.0 + 18.0 * i as f64 / 360.0;
                let s = s0_eval(&p, &qq, x).unwrap();
                assert!((s - prev) * a.signum() > 0.0, "a={a} x={x}");
                // S₀ rises by exactly π per half period of the pair
                assert!((s - prev).abs() < PI, "a={a} x={x}");
                prev = s;
            }
            let total = s0_eval(&p, &qq, 9.0).unwrap() - s0_eval(&p, &qq, -9.0).unwrap();
            // over 18 = 5.73 half-periods S₀ gains between 5 and 6 multiples of π
            assert!((total.abs() / PI - 18.0 / PI).abs() < 1.0, "{total}");
        }
    }

    #[test]
    fn qshje_free_unit_state_is_exact() {
        assert_eq!(qshje_residual(&free(), &q(1.0, 0.0), 0.77).unwrap(), 0.0);
    }

    #[test]
    fn qshje_free_general_state() {
        let p = free();
        for i in 0..100 {
            let x = -10.0 + 0.2 * i as f64 + 0.013;
            assert!(qshje_residual(&p, &q(2.0, 0.3), x).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn plane_wave_and_cosine() {
        let p = free();
        let qq = q(1.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let w = WaveCoefficients::new(one, zero).unwrap();
        let v = wavefunction(&p, &qq, &w, 0.9).unwrap();
        assert!((v.psi - Complex64::new(0.9f64.cos(), 0.9f64.sin())).norm() < 1e-14);
        assert!(v.residual < 1e-12);
        let half = Complex64::new(0.5, 0.0);
        let w = WaveCoefficients::new(half, half).unwrap();
        let v = wavefunction(&p, &qq, &w, 2.1).unwrap();
        assert!((v.psi.re - 2.1f64.cos()).abs() < 1e-14 && v.psi.im.abs() < 1e-15);
        assert!(v.residual < 1e-12);
    }

    #[test]
    fn pair_change_compensation_free() {
        let p = free();
        let qq = q(1.3, 0.4);
        let np = p.recombined([[1.0, 1.0], [0.0, 1.0]]).unwrap();
        let (fit, viol) = compensate_pair_change(&p, &qq, &np, &[-1.0, 0.3, 2.0]).unwrap();
        assert!((fit.a - 1.3).abs() < 1e-12 && (fit.b - (0.4 - 1.3)).abs() < 1e-12);
        assert!(viol < 1e-11);
        for x in [-5.0, 0.0, 0.7, 4.4] {
            let s_old = ds0_derivs(&p, &qq, x).unwrap()[0];
            let s_new = ds0_derivs(&np, &fit, x).unwrap()[0];
            assert!((s_old - s_new).abs() <= 1e-10 * s_old.abs());
        }
    }
}
