//! Mechanics of Lagrangians that depend on `(x, ẋ, ẍ, x⃛, t)`.
//!
//! A Lagrangian is any formula written against [`Scalar`]. Evaluating it on
//! dual numbers layered over time jets gives every partial derivative as a
//! function of time, which is all the generalized Euler–Lagrange equation,
//! the conjugate momenta and the Hamiltonian need.
//!
//! The module also carries the two consistency demonstrations for the
//! λ-regularized Hamiltonian formulation: linear Lagrangians of classical
//! type, and the canonical equations of the series Hamiltonian.

use crate::error::{Error, Result};
pub use crate::kinetic_series::MomentumTriple;
use crate::kinetic_series::{kinetic_parts, lagrangian, momenta_series, KineticCoefficients, PhasePoint, SeriesScale};
use crate::numerics::{integrate_ivp, Dual, IntegratorSettings, Jet, RhsError, Scalar};
use crate::schrodinger::PotentialModel;

/// A Lagrangian `L(x, ẋ, ẍ, x⃛, t)`.
///
/// Implementations must be pure: the same arguments always give the same
/// value, so evaluation can be repeated and shared across threads.
pub trait LagrangianEvaluator {
    fn eval<S: Scalar>(&self, x: S, xd: S, xdd: S, xddd: S, t: S) -> S;
}

/// `L = μẋ²/2 − V(x)`
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalLagrangian {
    pub mu: f64,
    pub potential: PotentialModel,
}

impl LagrangianEvaluator for ClassicalLagrangian {
    fn eval<S: Scalar>(&self, x: S, xd: S, _xdd: S, _xddd: S, _t: S) -> S {
        xd * xd * (0.5 * self.mu) - self.potential.eval(x)
    }
}

/// The quantum Lagrangian in closed form,
/// `L = μẋ²/2 + (ħ²/4μ)[(5/2)ẍ²/ẋ⁴ − x⃛/ẋ³] − V(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumLagrangian {
    pub hbar: f64,
    pub mu: f64,
    pub potential: PotentialModel,
}

impl LagrangianEvaluator for QuantumLagrangian {
    fn eval<S: Scalar>(&self, x: S, xd: S, xdd: S, xddd: S, _t: S) -> S {
        let q = self.hbar * self.hbar / (4.0 * self.mu);
        let bracket = xdd * xdd * 2.5 / xd.powi(4) - xddd / xd.powi(3);
        xd * xd * (0.5 * self.mu) + bracket * q - self.potential.eval(x)
    }
}

/// The series Lagrangian `T + (λ/2)x⃛² − V(x)` for an arbitrary lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesLagrangian {
    pub coeffs: KineticCoefficients,
    pub scale: SeriesScale,
    pub lambda: f64,
    pub potential: PotentialModel,
}

impl LagrangianEvaluator for SeriesLagrangian {
    fn eval<S: Scalar>(&self, x: S, xd: S, xdd: S, xddd: S, _t: S) -> S {
        let zero = x * 0.0;
        let p = PhasePoint { x, xd, xdd, xddd, x4: zero, x5: zero };
        lagrangian(&self.coeffs, &p, S::constant(self.scale.hbar), self.scale.mu, self.lambda, &self.potential)
    }
}

/// Polynomial `c₀ + c₁x + c₂x² + …`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial(pub Vec<f64>);

impl Polynomial {
    pub fn eval<S: Scalar>(&self, x: S) -> S {
        let mut acc = x * 0.0;
        for &c in self.0.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial(self.0.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect())
    }
}

/// `Lᵢ = (λ/2)ẋ² + f(x)ẋⁱ − V(x)`, the classical-type family with a linear
/// term at `i = 1`. `λ = 0` gives the unregularized form.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerLagrangian {
    pub power: i32,
    pub f: Polynomial,
    pub lambda: f64,
    pub potential: PotentialModel,
}

impl LagrangianEvaluator for PowerLagrangian {
    fn eval<S: Scalar>(&self, x: S, xd: S, _xdd: S, _xddd: S, _t: S) -> S {
        xd * xd * (0.5 * self.lambda) + self.f.eval(x) * xd.powi(self.power) - self.potential.eval(x)
    }
}

/// `L` and its four partial derivatives along a trajectory, as time jets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partials {
    pub l: Jet,
    pub dx: Jet,
    pub dxd: Jet,
    pub dxdd: Jet,
    pub dxddd: Jet,
}

/// Splits a time jet of `x` (order `N ≥ 3`) into the four slot jets
/// `x, ẋ, ẍ, x⃛`, each of order `N − 3`.
fn slot_jets(j: &Jet) -> Result<[Jet; 4]> {
    let n = j.order();
    if n < 3 {
        return Err(Error::Contract(format!("Lagrangian partials need jet order >= 3, got {n}")));
    }
    let m = n - 3;
    let d1 = j.differentiate();
    let d2 = d1.differentiate();
    let d3 = d2.differentiate();
    Ok([j.truncate(m), d1.truncate(m), d2.truncate(m), d3])
}

fn require_order(j: &Jet, min: usize, what: &str) -> Result<()> {
    if j.order() < min {
        return Err(Error::Contract(format!("{what} needs jet order >= {min}, got {}", j.order())));
    }
    Ok(())
}

/// Partial derivatives of `L` along the jet `j` at time `t`, one perturbation
/// channel per slot.
pub fn partials<L: LagrangianEvaluator>(lag: &L, j: &Jet, t: f64) -> Result<Partials> {
    let s = slot_jets(j)?;
    let m = s[0].order();
    let tj = Dual::passive(Jet::variable(t, m));
    let mut d = [Jet::constant(0.0, m); 4];
    let mut value = Jet::constant(0.0, m);
    for (slot, out) in d.iter_mut().enumerate() {
        let arg = |i: usize| if i == slot { Dual::seeded(s[i]) } else { Dual::passive(s[i]) };
        let r = lag.eval(arg(0), arg(1), arg(2), arg(3), tj);
        if r.eps.order() < m || r.re.order() < m {
            return Err(Error::Contract("Lagrangian evaluation lost jet order".into()));
        }
        *out = r.eps.truncate(m);
        value = r.re.truncate(m);
    }
    let [dx, dxd, dxdd, dxddd] = d;
    Ok(Partials { l: value, dx, dxd, dxdd, dxddd })
}

/// `d³/dt³ ∂L/∂x⃛ − d²/dt² ∂L/∂ẍ + d/dt ∂L/∂ẋ − ∂L/∂x`, zero on solutions.
pub fn el_residual<L: LagrangianEvaluator>(lag: &L, j: &Jet, t: f64) -> Result<f64> {
    require_order(j, 6, "Euler-Lagrange residual")?;
    let p = partials(lag, j, t)?;
    Ok(p.dxddd.deriv(3) - p.dxdd.deriv(2) + p.dxd.deriv(1) - p.dx.value())
}

/// `P = ∂L/∂ẋ − d/dt ∂L/∂ẍ + d²/dt² ∂L/∂x⃛`, `Π = ∂L/∂ẍ − d/dt ∂L/∂x⃛`,
/// `Ξ = ∂L/∂x⃛`.
pub fn momenta<L: LagrangianEvaluator>(lag: &L, j: &Jet, t: f64) -> Result<MomentumTriple> {
    require_order(j, 5, "conjugate momenta")?;
    let p = partials(lag, j, t)?;
    Ok(MomentumTriple {
        p: p.dxd.value() - p.dxdd.deriv(1) + p.dxddd.deriv(2),
        pi: p.dxdd.value() - p.dxddd.deriv(1),
        xi: p.dxddd.value(),
    })
}

/// `H = Pẋ + Πẍ + Ξx⃛ − L`.
pub fn hamiltonian<L: LagrangianEvaluator>(lag: &L, j: &Jet, t: f64) -> Result<f64> {
    require_order(j, 5, "Hamiltonian")?;
    let m = momenta(lag, j, t)?;
    let l = lag.eval(j.value(), j.deriv(1), j.deriv(2), j.deriv(3), t);
    Ok(m.p * j.deriv(1) + m.pi * j.deriv(2) + m.xi * j.deriv(3) - l)
}

/// Compares the dual-number partials at `probe = (x, ẋ, ẍ, x⃛, t)` with
/// central differences of step `h`, returning `|AD − FD|` per slot. The
/// differences shrink as `h²`.
pub fn partials_self_test<L: LagrangianEvaluator>(lag: &L, probe: [f64; 5], h: f64) -> [f64; 4] {
    let [x, xd, xdd, xddd, t] = probe;
    let mut out = [0.0; 4];
    for (slot, o) in out.iter_mut().enumerate() {
        let arg = |i: usize, v: f64| if i == slot { Dual::seeded(v) } else { Dual::passive(v) };
        let ad = lag.eval(arg(0, x), arg(1, xd), arg(2, xdd), arg(3, xddd), Dual::passive(t)).eps;
        let shifted = |delta: f64| {
            let mut a = [x, xd, xdd, xddd];
            a[slot] += delta;
            lag.eval(a[0], a[1], a[2], a[3], t)
        };
        let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
        *o = (ad - fd).abs();
    }
    out
}

/// Relative discrepancy with an explicit magnitude scale; an exact zero
/// against a zero scale counts as agreement.
fn relative(residual: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        residual.abs() / scale
    } else if residual == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// The series Hamiltonian in canonical variables,
/// `H = Pẋ + Πẍ − A + (1/2λ)[Ξ − B]² + V`,
/// where `T = A + B·x⃛`.
///
/// The momentum `Ξ` enters through its offset `η = Ξ − b0` from a fixed
/// reference value `b0` of `B`, so the bracket is `η + (b0 − B)`. At the
/// reference point `b0 − B` vanishes exactly and no cancellation against `λ`
/// occurs.
#[allow(clippy::too_many_arguments)]
fn canonical_hamiltonian<S: Scalar>(
    c: &KineticCoefficients,
    scale: SeriesScale,
    lambda: f64,
    potential: &PotentialModel,
    b0: f64,
    [x, pp, xd, pi, xdd, eta]: [S; 6],
) -> S {
    let zero = x * 0.0;
    let pt = PhasePoint { x, xd, xdd, xddd: zero, x4: zero, x5: zero };
    let (a, b) = kinetic_parts(c, &pt, S::constant(scale.hbar), scale.mu);
    let bracket = eta + (-b + b0);
    pp * xd + pi * xdd - a + bracket * bracket / (2.0 * lambda) + potential.eval(x)
}

/// The series Hamiltonian evaluated at plain canonical variables.
#[allow(clippy::too_many_arguments)]
pub fn series_hamiltonian(
    c: &KineticCoefficients,
    scale: SeriesScale,
    lambda: f64,
    potential: &PotentialModel,
    x: f64,
    p: f64,
    xd: f64,
    pi: f64,
    xdd: f64,
    xi: f64,
) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Contract(format!("the series Hamiltonian needs lambda > 0, got {lambda}")));
    }
    Ok(canonical_hamiltonian(c, scale, lambda, potential, 0.0, [x, p, xd, pi, xdd, xi]))
}

/// Largest relative discrepancies found by [`canonical_consistency`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyReport {
    pub lambda: f64,
    /// `ẋ = ∂H/∂P` and `ẍ = ∂H/∂Π`: identities without content.
    pub identities: [f64; 2],
    /// `x⃛ = ∂H/∂Ξ` reproduces the closed form of `Ξ`.
    pub xi: f64,
    /// `Ξ̇ = −∂H/∂ẍ` reproduces the closed form of `Π`.
    pub pi: f64,
    /// `Π̇ = −∂H/∂ẋ` reproduces the closed form of `P`.
    pub p: f64,
    /// `∂L/∂x = −∂H/∂x`.
    pub force: f64,
}

impl ConsistencyReport {
    /// The worst of the four substantive checks.
    pub fn max(&self) -> f64 {
        self.xi.max(self.pi).max(self.p).max(self.force)
    }
}

/// Time jets of `(x, ẋ, …, x⁽⁵⁾)` from an order-6 jet, all of order 1.
fn time_point(j: &Jet) -> PhasePoint<Jet> {
    let mut d = [*j; 6];
    for m in 1..6 {
        d[m] = d[m - 1].differentiate();
    }
    let t = |m: usize| d[m].truncate(1);
    PhasePoint { x: t(0), xd: t(1), xdd: t(2), xddd: t(3), x4: t(4), x5: t(5) }
}

/// Checks along the jet `j` (order 6) that the canonical equations of the
/// series Hamiltonian give back the closed-form momenta of the series
/// Lagrangian, and that `∂L/∂x = −∂H/∂x`.
///
/// `x⃛ = ∂H/∂Ξ` is checked multiplied through by `λ`. The other checks use it
/// to replace `Ξ − B` by `λx⃛`, after which `λ` cancels identically.
pub fn canonical_consistency(
    c: &KineticCoefficients,
    j: &Jet,
    scale: SeriesScale,
    potential: &PotentialModel,
    lambda: f64,
) -> Result<ConsistencyReport> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Contract(format!("canonical equations need lambda > 0, got {lambda}")));
    }
    require_order(j, 6, "canonical consistency")?;
    let pt = PhasePoint::from_jet(j, 6)?;
    let [p44, pi45, xi46] = momenta_series(c, &pt, scale.hbar, scale.mu, lambda);
    let (_, b0) = kinetic_parts(c, &pt, scale.hbar, scale.mu);

    let grad = |eta: f64| -> [f64; 6] {
        let z = [pt.x, p44, pt.xd, pi45, pt.xdd, eta];
        let mut g = [0.0; 6];
        for (slot, gi) in g.iter_mut().enumerate() {
            let arg: [Dual<f64>; 6] =
                std::array::from_fn(|i| if i == slot { Dual::seeded(z[i]) } else { Dual::passive(z[i]) });
            *gi = canonical_hamiltonian(c, scale, lambda, potential, b0, arg).eps;
        }
        g
    };

    // (i): λ·∂H/∂Ξ at the closed-form Ξ against λx⃛.
    let g46 = grad(xi46 - b0);
    let xi_res = lambda * g46[5] - lambda * pt.xddd;
    let xi = relative(xi_res, xi46.abs() + b0.abs() + (lambda * pt.xddd).abs());

    // With Ξ − B = λx⃛ substituted.
    let g = grad(lambda * pt.xddd);
    let [dh_dx, dh_dp, dh_dxd, dh_dpi, dh_dxdd, _] = g;
    let identities = [relative(dh_dp - pt.xd, pt.xd.abs()), relative(dh_dpi - pt.xdd, pt.xdd.abs())];

    let tp = time_point(j);
    let hbar_jet = Jet::constant(scale.hbar, 1);
    let [_, pi_jet, xi_jet] = momenta_series(c, &tp, hbar_jet, scale.mu, lambda);
    let xi_dot = xi_jet.deriv(1);
    let pi_dot = pi_jet.deriv(1);

    // (ii): Ξ̇ = −∂H/∂ẍ, with ∂H/∂ẍ = Π + (terms free of Π).
    let pi = relative(xi_dot + dh_dxdd, xi_dot.abs() + pi45.abs() + (dh_dxdd - pi45).abs());
    // (iii): Π̇ = −∂H/∂ẋ, with ∂H/∂ẋ = P + (terms free of P).
    let p = relative(pi_dot + dh_dxd, pi_dot.abs() + p44.abs() + (dh_dxd - p44).abs());

    // (iv): ∂L/∂x from the generic engine against −∂H/∂x.
    let lag = SeriesLagrangian { coeffs: c.clone(), scale, lambda, potential: potential.clone() };
    let dl_dx = partials(&lag, j, 0.0)?.dx.value();
    let dv = potential.dvdx(pt.x);
    let force = relative(dl_dx + dh_dx, dl_dx.abs() + dh_dx.abs() + dv.abs());

    Ok(ConsistencyReport { lambda, identities, xi, pi, p, force })
}

/// Outcome of the linear-term demonstration for `Lᵢ = f(x)ẋⁱ − V(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Appendix1Report {
    pub power: i32,
    /// The regularization used (`i = 1` only).
    pub lambda: Option<f64>,
    /// Sample points along the integrated trajectories.
    pub samples: usize,
    /// Generic Euler–Lagrange residual along the motion, relative to the
    /// force terms.
    pub el_residual: Option<f64>,
    /// `ẋ = ∂H/∂P`, relative.
    pub velocity_residual: Option<f64>,
    /// `Ṗ = −∂H/∂x` against `dP/dt` along the motion, relative.
    pub momentum_residual: Option<f64>,
    /// `i = 1` without regularization: the canonical equations contradict
    /// the Euler–Lagrange equation wherever `dV/dx ≠ 0`.
    pub naive_inconsistent: bool,
    /// Largest `|dV/dx|` on the probe grid.
    pub max_force: f64,
    pub notes: Vec<String>,
}

/// Initial `(x, ẋ)` of the demonstration trajectories.
const APPENDIX1_STARTS: [(f64, f64); 3] = [(0.0, 1.0), (0.4, -0.7), (-0.6, 1.3)];
const APPENDIX1_SPAN: f64 = 2.0;
const APPENDIX1_SAMPLES: usize = 20;

/// `dg/dx` of a potential at any scalar.
fn force<S: Scalar>(potential: &PotentialModel, x: S) -> S {
    potential.eval(Dual::seeded(x)).eps
}

/// `ẍ` from the Euler–Lagrange equation of `Lᵢ` (`λ = 0`, `i ≠ 1`) or of
/// its regularized form at `i = 1`: `λẍ + dV/dx = 0`.
fn power_accel<S: Scalar>(lag: &PowerLagrangian, x: S, v: S) -> S {
    let i = lag.power;
    let dv = force(&lag.potential, x);
    if i == 1 {
        return -dv / lag.lambda;
    }
    let fi = i as f64;
    let f = lag.f.eval(x);
    let df = lag.f.derivative().eval(x);
    -(dv + df * v.powi(i) * (fi - 1.0)) / (f * v.powi(i - 2) * (fi * (fi - 1.0)))
}

/// Real `(i−1)`-th root of `r = ẋ^(i−1)` on the branch of `ẋ`.
fn velocity_root(r: f64, i: i32, v: f64) -> f64 {
    let e = i - 1;
    let mag = r.abs().powf(1.0 / e as f64);
    if e % 2 == 0 {
        mag * v.signum()
    } else {
        mag * r.signum()
    }
}

/// Runs the linear-term demonstration: for `i ≠ 1` the canonical equations
/// of `Hᵢ` agree with the Euler–Lagrange equation along integrated motion;
/// for `i = 1` the naive canonical equations are inconsistent when
/// `dV/dx ≠ 0`, and with `λ > 0` the regularized Lagrangian
/// `(λ/2)ẋ² + fẋ − V` yields `λẍ + dV/dx = 0` with consistent canonical
/// equations.
pub fn appendix1_demo(power: i32, f: &Polynomial, potential: &PotentialModel, lambda: f64) -> Result<Appendix1Report> {
    if power == 0 {
        return Err(Error::Contract("the power of the velocity must be nonzero".into()));
    }
    let mut notes = Vec::new();
    let max_force = (0..=40).map(|k| potential.dvdx(-2.0 + 0.1 * k as f64).abs()).fold(0.0, f64::max);
    let naive_inconsistent = power == 1 && max_force > 0.0;
    let regularized = power == 1 && lambda > 0.0 && lambda.is_finite();
    if power == 1 {
        notes.push("naive: P = f(x) and H = V(x), so dx/dt = dH/dP = 0 and dP/dt = -dV/dx".into());
        if naive_inconsistent {
            notes.push(format!(
                "naive canonical equations are not compatible with the Euler-Lagrange equation, which demands dV/dx = 0 (max |dV/dx| = {max_force:e})"
            ));
        } else {
            notes.push(
                "dV/dx = 0 on the probe grid: the Euler-Lagrange equation is empty and the naive equations freeze x"
                    .into(),
            );
        }
        if !regularized {
            notes.push("no regularization requested (lambda <= 0): regularized checks skipped".into());
            return Ok(Appendix1Report {
                power,
                lambda: None,
                samples: 0,
                el_residual: None,
                velocity_residual: None,
                momentum_residual: None,
                naive_inconsistent,
                max_force,
                notes,
            });
        }
        notes.push(format!("regularized with lambda = {lambda:e}: equation of motion lambda*xddot + dV/dx = 0"));
    } else if lambda != 0.0 {
        notes.push("lambda is only used for i = 1 and was ignored".into());
    }

    let lag = PowerLagrangian {
        power,
        f: f.clone(),
        lambda: if regularized { lambda } else { 0.0 },
        potential: potential.clone(),
    };
    let df = f.derivative();
    let settings = IntegratorSettings::default();
    let (mut el, mut vel, mut mom) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut samples = 0;
    for &(x0, v0) in &APPENDIX1_STARTS {
        let sol = integrate_ivp(
            |_, y, dy| {
                let a = power_accel(&lag, y[0], y[1]);
                if !a.is_finite() {
                    return Err(RhsError(format!("acceleration not finite at x = {}", y[0])));
                }
                dy[0] = y[1];
                dy[1] = a;
                Ok(())
            },
            &[x0, v0],
            (0.0, APPENDIX1_SPAN),
            &settings,
        )?;
        for s in 0..=APPENDIX1_SAMPLES {
            let t = APPENDIX1_SPAN * s as f64 / APPENDIX1_SAMPLES as f64;
            let y = sol.eval(t)?;
            let (x, v) = (y[0], y[1]);
            let a = power_accel(&lag, x, v);
            let (fx, dfx, dv) = (f.eval(x), df.eval(x), potential.dvdx(x));

            let j = Jet::from_ode(&[x, v], 6, |s| Ok(power_accel(&lag, s[0], s[1])))?;
            let r = el_residual(&lag, &j, t)?;

            let (v_canon, pdot_canon, pdot, scale) = if power == 1 {
                // P = λẋ + f, H = (P − f)²/2λ + V
                let pp = lambda * v + fx;
                let vc = (pp - fx) / lambda;
                let scale = (lambda * a).abs() + (dfx * v).abs() + dv.abs();
                (vc, (pp - fx) * dfx / lambda - dv, lambda * a + dfx * v, scale)
            } else {
                let fi = power as f64;
                let pp = fi * fx * v.powi(power - 1);
                let vc = velocity_root(pp / (fi * fx), power, v);
                let pdot_c = vc.powi(power) * dfx - dv;
                let pdot = fi * (dfx * v.powi(power) + (fi - 1.0) * fx * v.powi(power - 2) * a);
                let scale = (fi * (fi - 1.0) * fx * v.powi(power - 2) * a).abs()
                    + ((fi - 1.0) * dfx * v.powi(power)).abs()
                    + dv.abs();
                (vc, pdot_c, pdot, scale)
            };
            el = el.max(relative(r, scale));
            vel = vel.max(relative(v_canon - v, v.abs()));
            mom = mom.max(relative(pdot_canon - pdot, pdot.abs() + pdot_canon.abs() + dv.abs()));
            samples += 1;
        }
    }
    Ok(Appendix1Report {
        power,
        lambda: regularized.then_some(lambda),
        samples,
        el_residual: Some(el),
        velocity_residual: Some(vel),
        momentum_residual: Some(mom),
        naive_inconsistent,
        max_force,
        notes,
    })
}
