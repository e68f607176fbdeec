//! Quantum trajectories.
//!
//! Three laws of motion are integrated: the first-order velocity law
//! `μẋ = ħaW/D` (equivalently `μẋ = S₀'`), the fourth-order quantum Newton
//! law, and the legacy first integral `ẋS₀' = 2(E − V)`, which stalls at
//! classical turning points. Samples carry the observables `H`, `P`, `Q`
//! and `S₀'` so conservation and the Bohm relation can be audited.

use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{integrate_ivp, invert_monotone, DenseSolution, IntegratorSettings, Jet, RhsError};
use crate::reduced_action::{ds0_jet, QuantumStateParams, MIN_DENOMINATOR};
use crate::schrodinger::{solve_pair, PhysParams, PotentialModel, SolutionPair};

/// `|ẋ|` below this aborts the Newton law: the theory forbids `ẋ = 0`, so
/// reaching it means the numerics broke down.
pub const VELOCITY_FLOOR: f64 = 1e-12;
/// The legacy law has stalled once `|ẋ|` stays below this fraction of its
/// initial value for [`STALL_RUN`] successive scan points.
pub const STALL_RATIO: f64 = 1e-6;
pub const STALL_RUN: usize = 3;
/// Dense-output points scanned for stall detection.
const STALL_SCAN: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Law {
    /// `μẋ = ħaW/D`
    Velocity,
    /// The fourth-order quantum Newton law.
    Newton,
    /// `ẋ S₀' = 2(E − V)`
    Legacy,
}

impl std::fmt::Display for Law {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Law::Velocity => "velocity",
            Law::Newton => "newton",
            Law::Legacy => "legacy",
        })
    }
}

/// Everything needed to run one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub potential: PotentialModel,
    pub params: PhysParams,
    pub q: QuantumStateParams,
    /// Domain of the solution pair; the trajectory must stay inside it.
    pub domain: (f64, f64),
    /// Reference point of the Numerov pair (ignored for the analytic pair).
    pub anchor: f64,
    pub grid_step: f64,
    pub x_start: f64,
    /// `t0` is the reference time of the free-particle time equation.
    pub t_span: (f64, f64),
    pub law: Law,
    pub integrator: IntegratorSettings,
    /// Overrides `(ẍ₀, x⃛₀)` for the Newton law. The energy then differs from
    /// `E` and is taken from the initial state instead.
    pub newton_init: Option<(f64, f64)>,
    pub samples: usize,
    pub output: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.q.validate()?;
        self.integrator.validate()?;
        if !(self.t_span.1 > self.t_span.0) {
            return Err(Error::Contract(format!("need t1 > t0, got {:?}", self.t_span)));
        }
        if !(self.x_start >= self.domain.0 && self.x_start <= self.domain.1) {
            return Err(Error::Domain(format!("x_start = {} outside pair domain {:?}", self.x_start, self.domain)));
        }
        if self.samples < 2 {
            return Err(Error::Contract(format!("need at least 2 samples, got {}", self.samples)));
        }
        Ok(())
    }

    pub fn build_pair(&self) -> Result<SolutionPair> {
        solve_pair(&self.potential, self.params, self.domain, self.anchor, self.grid_step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub x: f64,
    pub xdot: f64,
    pub xddot: f64,
    pub xdddot: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub s0p: f64,
}

/// `g(x) = ħaW/(μD)` and its `x`-derivatives up to `order`.
fn velocity_field(pair: &SolutionPair, q: &QuantumStateParams, x: f64, order: usize) -> Result<Jet> {
    Ok(ds0_jet(pair, q, x, order)? / pair.params().mu)
}

/// Time jet `(x, ẋ, ẍ, …)` of the velocity-law trajectory through `x`,
/// exact to `order` (≤ 6).
pub fn state_jet_from_x(pair: &SolutionPair, q: &QuantumStateParams, x: f64, order: usize) -> Result<Jet> {
    if !pair.contains(x) {
        return Err(Error::Domain(format!("x = {x} outside pair domain {:?}", pair.domain())));
    }
    let g = velocity_field(pair, q, x, order.saturating_sub(1))?;
    Jet::from_ode(&[x], order, |s| Ok(Jet::compose(&g, &s[0])))
}

/// `D = (aφ₁ + bφ₂)² + φ₂²` at `x`.
pub fn pair_denominator(pair: &SolutionPair, q: &QuantumStateParams, x: f64) -> Result<f64> {
    let (p1, p2) = pair.eval_phi(x, 0)?;
    let lin = q.a * p1.value() + q.b * p2.value();
    Ok(lin * lin + p2.value() * p2.value())
}

/// `H`, `P`, `Q` and `L` of the quantum Lagrangian on a time jet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub h: f64,
    pub p: f64,
    pub q: f64,
    pub l: f64,
}

/// Closed-form observables on a time jet (order ≥ 3):
/// `Q = −(ħ²/4μ)[(5/2)ẍ²/ẋ⁴ − x⃛/ẋ³]`, `L = μẋ²/2 − (Q + V)`,
/// `H = μẋ²/2 + (Q + V)`, `P = μẋ − (ħ²/4μ)(2ẍ²/ẋ⁵ − x⃛/ẋ⁴)`.
pub fn observables(j: &Jet, params: &PhysParams, potential: &PotentialModel) -> Result<Observables> {
    if j.order() < 3 {
        return Err(Error::Contract(format!("observables need jet order >= 3, got {}", j.order())));
    }
    let (x, xd, xdd, xddd) = (j.value(), j.deriv(1), j.deriv(2), j.deriv(3));
    if xd == 0.0 {
        return Err(Error::Singular(format!("xdot = 0 at x = {x}")));
    }
    let c = params.hbar * params.hbar / (4.0 * params.mu);
    let q = -c * (2.5 * xdd * xdd / xd.powi(4) - xddd / xd.powi(3));
    let v = potential.value(x);
    let kin = 0.5 * params.mu * xd * xd;
    let h = kin + (q + v);
    let l = kin - (q + v);
    let p = params.mu * xd - c * (2.0 * xdd * xdd / xd.powi(5) - xddd / xd.powi(4));
    debug_assert!((h + l - params.mu * xd * xd).abs() <= 1e-12 * (h.abs() + l.abs() + 2.0 * kin));
    Ok(Observables { h, p, q, l })
}

fn sample_from_jet(
    t: f64,
    j: &Jet,
    pair: &SolutionPair,
    q: &QuantumStateParams,
    potential: &PotentialModel,
) -> Result<TrajectorySample> {
    let params = pair.params();
    let o = observables(j, &params, potential)?;
    let s0p = ds0_jet(pair, q, j.value(), 0)?.value();
    Ok(TrajectorySample {
        t,
        x: j.value(),
        xdot: j.deriv(1),
        xddot: j.deriv(2),
        xdddot: j.deriv(3),
        h: o.h,
        p: o.p,
        q: o.q,
        s0p,
    })
}

fn sample_times(t_span: (f64, f64), n: usize) -> impl Iterator<Item = f64> {
    let (t0, t1) = t_span;
    (0..n).map(move |k| if k + 1 == n { t1 } else { t0 + (t1 - t0) * k as f64 / (n - 1) as f64 })
}

fn rhs_error(e: Error) -> RhsError {
    RhsError(e.to_string())
}

fn check_law(s: &ScenarioConfig, law: Law) -> Result<()> {
    if s.law != law {
        return Err(Error::Contract(format!("scenario law is {}, not {law}", s.law)));
    }
    s.validate()
}

/// Integrates `ẋ = ħaW/(μD)`.
pub fn integrate_velocity_law(s: &ScenarioConfig) -> Result<Vec<TrajectorySample>> {
    check_law(s, Law::Velocity)?;
    let pair = s.build_pair()?;
    integrate_velocity_on(&pair, s)
}

fn integrate_velocity_on(pair: &SolutionPair, s: &ScenarioConfig) -> Result<Vec<TrajectorySample>> {
    let sol = velocity_solution(pair, &s.q, s.x_start, s.t_span, &s.integrator)?;
    sample_times(s.t_span, s.samples)
        .map(|t| {
            let x = sol.eval(t)?[0];
            let j = state_jet_from_x(pair, &s.q, x, 3)?;
            sample_from_jet(t, &j, pair, &s.q, &s.potential)
        })
        .collect()
}

fn velocity_solution(
    pair: &SolutionPair,
    q: &QuantumStateParams,
    x0: f64,
    t_span: (f64, f64),
    settings: &IntegratorSettings,
) -> Result<DenseSolution> {
    integrate_ivp(
        |_, y, dy| {
            dy[0] = velocity_field(pair, q, y[0], 0).map_err(rhs_error)?.value();
            Ok(())
        },
        &[x0],
        t_span,
        settings,
    )
}

/// Time at which the velocity-law trajectory from `x0` (at `t = 0`)
/// reaches `x_target`, searched up to `t_max`.
pub fn velocity_arrival_time(
    pair: &SolutionPair,
    q: &QuantumStateParams,
    x0: f64,
    x_target: f64,
    t_max: f64,
    settings: &IntegratorSettings,
) -> Result<f64> {
    let sol = velocity_solution(pair, q, x0, (0.0, t_max), settings)?;
    invert_monotone(|t| sol.eval(t).map(|y| y[0]).unwrap_or(f64::NAN), x_target, (0.0, t_max), 1e-15)
}

/// `x⁽⁴⁾` from the quantum Newton law
/// `μẍ + (ħ²/μ)[(5/2)ẍ³/ẋ⁶ − 2ẍx⃛/ẋ⁵ + (1/4)x⁽⁴⁾/ẋ⁴] + dV/dx = 0`.
pub fn newton_fourth_derivative(params: &PhysParams, dvdx: f64, xd: f64, xdd: f64, xddd: f64) -> f64 {
    let (hbar, mu) = (params.hbar, params.mu);
    -(4.0 * mu * xd.powi(4) / (hbar * hbar)) * (mu * xdd + dvdx) - 10.0 * xdd.powi(3) / (xd * xd)
        + 8.0 * xdd * xddd / xd
}

/// Integrates the quantum Newton law as a first-order system in
/// `(x, ẋ, ẍ, x⃛)`, started from the velocity-law jet at `x_start` unless
/// [`ScenarioConfig::newton_init`] overrides `(ẍ₀, x⃛₀)`.
pub fn integrate_newton_law(s: &ScenarioConfig) -> Result<Vec<TrajectorySample>> {
    check_law(s, Law::Newton)?;
    let pair = s.build_pair()?;
    let sol = newton_solution(&pair, s)?;
    sample_times(s.t_span, s.samples)
        .map(|t| {
            let y = sol.eval(t)?;
            sample_from_jet(t, &Jet::from_derivs(&y), &pair, &s.q, &s.potential)
        })
        .collect()
}

fn newton_solution(pair: &SolutionPair, s: &ScenarioConfig) -> Result<DenseSolution> {
    let j0 = state_jet_from_x(pair, &s.q, s.x_start, 3)?;
    let (xdd0, xddd0) = s.newton_init.unwrap_or((j0.deriv(2), j0.deriv(3)));
    let params = s.params;
    let potential = &s.potential;
    integrate_ivp(
        |_, y, dy| {
            if !(y[1].abs() >= VELOCITY_FLOOR) {
                return Err(RhsError(format!(
                    "|xdot| = {:e} below floor {VELOCITY_FLOOR:e} at x = {}",
                    y[1].abs(),
                    y[0]
                )));
            }
            dy[0] = y[1];
            dy[1] = y[2];
            dy[2] = y[3];
            dy[3] = newton_fourth_derivative(&params, potential.dvdx(y[0]), y[1], y[2], y[3]);
            Ok(())
        },
        &[s.x_start, j0.deriv(1), xdd0, xddd0],
        s.t_span,
        &s.integrator,
    )
}

/// `ẋ = 2(E − V)/S₀'` at `x`.
pub fn legacy_velocity(pair: &SolutionPair, q: &QuantumStateParams, x: f64) -> Result<f64> {
    let p = pair.params();
    Ok(2.0 * (p.energy - pair.potential().value(x)) / ds0_jet(pair, q, x, 0)?.value())
}

/// Outcome of a legacy-law run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StallReport {
    pub stalled: bool,
    /// First classical turning point ahead of the start, if any.
    pub x_turn: Option<f64>,
    /// Time and position where the stall criterion first held.
    pub t_stall: Option<f64>,
    pub x_stall: Option<f64>,
    /// Smallest `|ẋ|/|ẋ₀|` seen.
    pub min_speed_ratio: f64,
    /// Ratios of successive distances to the turning point over the stall
    /// run; values below one show geometric approach.
    pub gap_ratios: Vec<f64>,
    /// Largest `|ẋ_legacy − ẋ_velocity|` at the sampled positions.
    pub max_gap_to_velocity_law: f64,
    /// Set when the integration stopped early; the samples end there.
    pub integration_note: Option<String>,
}

/// First `x` past `x_start` in direction `dir` where `V(x) = E`, searched
/// up to `limit`.
pub fn turning_point(potential: &PotentialModel, energy: f64, x_start: f64, dir: f64, limit: f64) -> Option<f64> {
    let span = (limit - x_start) * dir;
    if !(span > 0.0) {
        return None;
    }
    let n = 4000;
    let h = span / n as f64;
    let f = |x: f64| potential.value(x) - energy;
    let mut a = x_start;
    let mut fa = f(a);
    for k in 1..=n {
        let b = x_start + dir * h * k as f64;
        let fb = f(b);
        if fb == 0.0 {
            return Some(b);
        }
        if fa.signum() != fb.signum() && fa != 0.0 {
            return invert_monotone(|x| potential.value(x), energy, (a, b), 1e-14).ok();
        }
        a = b;
        fa = fb;
    }
    None
}

/// Integrates `ẋ = 2(E − V)/S₀'` and reports whether the motion stalls at
/// a turning point. A failed integration is folded into the report with
/// the samples computed up to the failure.
pub fn integrate_legacy_law(s: &ScenarioConfig) -> Result<(Vec<TrajectorySample>, StallReport)> {
    check_law(s, Law::Legacy)?;
    let pair = s.build_pair()?;
    let q = s.q;
    let v0 = legacy_velocity(&pair, &q, s.x_start)?;
    if v0 == 0.0 {
        return Err(Error::Singular(format!("legacy law starts at rest at x = {}", s.x_start)));
    }
    let dir = v0.signum();
    let limit = if dir > 0.0 { s.domain.1 } else { s.domain.0 };
    let x_turn = turning_point(&s.potential, s.params.energy, s.x_start, dir, limit);

    let result = integrate_ivp(
        |_, y, dy| {
            dy[0] = legacy_velocity(&pair, &q, y[0]).map_err(rhs_error)?;
            Ok(())
        },
        &[s.x_start],
        s.t_span,
        &s.integrator,
    );
    let (sol, note) = match result {
        Ok(sol) => (sol, None),
        Err(Error::Integration(f)) => {
            let note = f.to_string();
            (f.partial, Some(note))
        }
        Err(e) => return Err(e),
    };
    let t_end = sol.t_end();

    // stall scan on the dense output
    let mut run: Vec<(f64, f64)> = Vec::new();
    let (mut stall_at, mut min_ratio) = (None, f64::INFINITY);
    let mut gap_ratios = Vec::new();
    for k in 0..=STALL_SCAN {
        let t = s.t_span.0 + (t_end - s.t_span.0) * k as f64 / STALL_SCAN as f64;
        let x = sol.eval(t)?[0];
        let ratio = (legacy_velocity(&pair, &q, x)? / v0).abs();
        min_ratio = min_ratio.min(ratio);
        if stall_at.is_some() {
            continue;
        }
        let toward = match (x_turn, run.last()) {
            (Some(xt), Some(&(_, xp))) => (xt - x).abs() <= (xt - xp).abs(),
            (Some(_), None) => true,
            (None, _) => false,
        };
        if ratio < STALL_RATIO && toward {
            run.push((t, x));
            if run.len() >= STALL_RUN {
                let xt = x_turn.unwrap_or(x);
                gap_ratios = run.windows(2).map(|w| (xt - w[1].1).abs() / (xt - w[0].1).abs()).collect();
                stall_at = Some(run[0]);
            }
        } else {
            run.clear();
        }
    }

    let mut samples = Vec::with_capacity(s.samples);
    let mut max_gap = 0.0_f64;
    for t in sample_times((s.t_span.0, t_end), s.samples) {
        let x = sol.eval(t)?[0];
        let potential = s.potential.clone();
        let g = ds0_jet(&pair, &q, x, 2)?;
        let e = s.params.energy;
        let j = Jet::from_ode(&[x], 3, |sl| {
            let v = potential.eval(sl[0]);
            let s0p = Jet::compose(&g, &sl[0]);
            Ok((v * -1.0 + e) * 2.0 / s0p)
        })?;
        max_gap = max_gap.max((j.deriv(1) - velocity_field(&pair, &q, x, 0)?.value()).abs());
        samples.push(sample_from_jet(t, &j, &pair, &q, &s.potential)?);
    }

    Ok((
        samples,
        StallReport {
            stalled: stall_at.is_some(),
            x_turn,
            t_stall: stall_at.map(|p| p.0),
            x_stall: stall_at.map(|p| p.1),
            min_speed_ratio: min_ratio,
            gap_ratios,
            max_gap_to_velocity_law: max_gap,
            integration_note: note,
        },
    ))
}

/// Free-particle elapsed time `t − t₀` to reach `x` from `x = 0` on the
/// velocity law with the pair `(sin kx, cos kx)`:
/// `a√(2E/μ)(t − t₀) = ((a² + b² + 1)/2)x + ((1 + b² − a²)/4k) sin 2kx − (ab/2k) cos 2kx`,
/// minus the value of the right-hand side at `x = 0`.
pub fn free_time_of_x(params: &PhysParams, q: &QuantumStateParams, x: f64) -> Result<f64> {
    params.validate()?;
    q.validate()?;
    if !(params.energy > 0.0) {
        return Err(Error::Domain(format!("free time equation needs E > 0, got {}", params.energy)));
    }
    let (a, b) = (q.a, q.b);
    let k = (2.0 * params.mu * params.energy).sqrt() / params.hbar;
    let speed = (2.0 * params.energy / params.mu).sqrt();
    let rhs = 0.5 * (a * a + b * b + 1.0) * x + (1.0 + b * b - a * a) / (4.0 * k) * (2.0 * k * x).sin()
        - a * b / (2.0 * k) * ((2.0 * k * x).cos() - 1.0);
    Ok(rhs / (a * speed))
}

/// Inverse of [`free_time_of_x`]. The bracket starts around the mean-speed
/// estimate and widens geometrically until it encloses the root.
pub fn free_x_of_time(params: &PhysParams, q: &QuantumStateParams, elapsed: f64) -> Result<f64> {
    free_time_of_x(params, q, 0.0)?;
    let f = |x: f64| free_time_of_x(params, q, x).unwrap_or(f64::NAN);
    let mean_speed = (2.0 * params.energy / params.mu).sqrt() * free_speed_factor(q);
    let guess = elapsed * mean_speed;
    let mut width = 1.0 + guess.abs() * 0.5;
    let mut last = None;
    for _ in 0..60 {
        match invert_monotone(f, elapsed, (guess - width, guess + width), 1e-15) {
            Ok(x) => return Ok(x),
            Err(e @ Error::Bracket { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
        width *= 2.0;
    }
    Err(last.unwrap_or_else(|| Error::Domain("bracket widening exhausted".into())))
}

/// Mean free-particle speed in units of `√(2E/μ)`: `2a/(a² + b² + 1)`.
/// Equals one only for `(a, b) = (1, 0)` (and the sign of `a` sets the
/// direction).
pub fn free_speed_factor(q: &QuantumStateParams) -> f64 {
    2.0 * q.a / (q.a * q.a + q.b * q.b + 1.0)
}

/// Drift maxima and invariant verdicts of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub law: Law,
    pub samples: usize,
    /// Energy the drift is measured against: `E`, or `H(t₀)` for an
    /// overridden Newton start.
    pub reference_energy: f64,
    pub max_energy_drift: f64,
    pub max_bohm_gap: f64,
    /// Only for `V = 0`.
    pub max_momentum_drift: Option<f64>,
    pub min_speed: f64,
    pub min_denominator: f64,
    pub x_range: (f64, f64),
    /// Free particle only: `2a/(a² + b² + 1)`.
    pub free_speed_factor: Option<f64>,
    pub energy_ok: Option<bool>,
    pub bohm_ok: Option<bool>,
    pub momentum_ok: Option<bool>,
    pub no_node_ok: bool,
    pub stall: Option<StallReport>,
}

impl TrajectorySummary {
    /// Every verdict that applies holds.
    pub fn passed(&self) -> bool {
        [self.energy_ok, self.bohm_ok, self.momentum_ok].iter().all(|v| v.unwrap_or(true)) && self.no_node_ok
    }
}

/// Builds the summary; quantum-law invariants are only judged for the
/// velocity and Newton laws.
pub fn summarize(
    s: &ScenarioConfig,
    pair: &SolutionPair,
    samples: &[TrajectorySample],
    stall: Option<StallReport>,
) -> Result<TrajectorySummary> {
    let first = samples.first().ok_or_else(|| Error::Contract("no samples to summarize".into()))?;
    let e = if s.law == Law::Newton && s.newton_init.is_some() { first.h } else { s.params.energy };
    let mut drift = 0.0_f64;
    let mut bohm = 0.0_f64;
    let mut mom = 0.0_f64;
    let mut min_speed = f64::INFINITY;
    let mut min_d = f64::INFINITY;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut bohm_ok = true;
    let mut mom_ok = true;
    for smp in samples {
        drift = drift.max((smp.h - e).abs());
        let mv = s.params.mu * smp.xdot;
        let gap = (mv - smp.s0p).abs();
        bohm = bohm.max(gap);
        bohm_ok &= gap <= 1e-8 * mv.abs();
        let dp = (smp.p - first.p).abs();
        mom = mom.max(dp);
        mom_ok &= dp <= 1e-8 * first.p.abs();
        min_speed = min_speed.min(smp.xdot.abs());
        min_d = min_d.min(pair_denominator(pair, &s.q, smp.x)?);
        lo = lo.min(smp.x);
        hi = hi.max(smp.x);
    }
    let quantum = s.law != Law::Legacy;
    let free = matches!(s.potential, crate::schrodinger::PotentialModel::Free);
    Ok(TrajectorySummary {
        law: s.law,
        samples: samples.len(),
        reference_energy: e,
        max_energy_drift: drift,
        max_bohm_gap: bohm,
        max_momentum_drift: free.then_some(mom),
        min_speed,
        min_denominator: min_d,
        x_range: (lo, hi),
        free_speed_factor: free.then(|| free_speed_factor(&s.q)),
        energy_ok: quantum.then(|| drift <= (1e-8 * e.abs()).max(1e-10)),
        bohm_ok: quantum.then_some(bohm_ok),
        momentum_ok: (quantum && free).then_some(mom_ok),
        no_node_ok: !quantum || (min_speed > 0.0 && min_d > MIN_DENOMINATOR),
        stall,
    })
}

/// A finished run: samples, summary, and the stall report for the legacy law.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRun {
    pub samples: Vec<TrajectorySample>,
    pub summary: TrajectorySummary,
}

/// Runs a scenario under its configured law.
pub fn run_scenario(s: &ScenarioConfig) -> Result<TrajectoryRun> {
    s.validate()?;
    let pair = s.build_pair()?;
    let (samples, stall) = match s.law {
        Law::Velocity => (integrate_velocity_on(&pair, s)?, None),
        Law::Newton => (integrate_newton_law(s)?, None),
        Law::Legacy => {
            let (smp, r) = integrate_legacy_law(s)?;
            (smp, Some(r))
        }
    };
    let summary = summarize(s, &pair, &samples, stall)?;
    Ok(TrajectoryRun { samples, summary })
}

pub const CSV_HEADER: &str = "t,x,xdot,xddot,xdddot,H,P,Q,s0p";

/// Writes samples as CSV, every number with 17 significant digits.
pub fn write_csv<W: Write>(mut w: W, samples: &[TrajectorySample]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for s in samples {
        let row = [s.t, s.x, s.xdot, s.xddot, s.xdddot, s.h, s.p, s.q, s.s0p];
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free_pair(e: f64) -> SolutionPair {
        solve_pair(&PotentialModel::Free, PhysParams::new(1.0, 1.0, e).unwrap(), (-20.0, 20.0), 0.0, 1e-3).unwrap()
    }

    #[test]
    fn free_jet_is_classical_for_unit_a() {
        let pair = free_pair(0.5);
        let q = QuantumStateParams::new(1.0, 0.0, 0.0).unwrap();
        let j = state_jet_from_x(&pair, &q, 0.7, 6).unwrap();
        assert!((j.deriv(1) - 1.0).abs() < 1e-14);
        for m in 2..=6 {
            assert!(j.deriv(m).abs() < 1e-12, "{j:?}");
        }
    }

    #[test]
    fn free_jet_matches_hand_differentiation() {
        let pair = free_pair(0.5);
        let q = QuantumStateParams::new(2.0, 0.0, 0.0).unwrap();
        let j0 = state_jet_from_x(&pair, &q, 0.0, 3).unwrap();
        assert!((j0.deriv(1) - 2.0).abs() < 1e-14 && j0.deriv(2).abs() < 1e-14);
        let j = state_jet_from_x(&pair, &q, std::f64::consts::FRAC_PI_4, 3).unwrap();
        assert!((j.deriv(1) - 0.8).abs() < 1e-14 && (j.deriv(2) + 0.768).abs() < 1e-13, "{j:?}");
        assert!(matches!(state_jet_from_x(&pair, &q, 30.0, 3), Err(Error::Domain(_))));
    }

    #[test]
    fn observables_reference_values() {
        let p = PhysParams::new(1.0, 1.0, 0.5).unwrap();
        let o = observables(&Jet::from_derivs(&[0.0, 1.0, 0.0, 0.0]), &p, &PotentialModel::Free).unwrap();
        assert_eq!((o.h, o.p, o.q, o.l), (0.5, 1.0, 0.0, 0.5));
        let o = observables(&Jet::from_derivs(&[0.0, 1.0, 1.0, 0.0]), &p, &PotentialModel::Free).unwrap();
        assert!((o.q + 0.625).abs() < 1e-15 && (o.h + 0.125).abs() < 1e-15);
        assert!((o.p - 0.5).abs() < 1e-15 && (o.l - 1.125).abs() < 1e-15);
        assert!(matches!(
            observables(&Jet::from_derivs(&[0.0, 0.0, 1.0, 0.0]), &p, &PotentialModel::Free),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn free_time_equation_reference_values() {
        let p = PhysParams::new(1.0, 1.0, 0.5).unwrap();
        let q1 = QuantumStateParams::new(1.0, 0.0, 0.0).unwrap();
        assert!((free_time_of_x(&p, &q1, 3.0).unwrap() - 3.0).abs() < 1e-15);
        let q2 = QuantumStateParams::new(2.0, 0.0, 0.0).unwrap();
        let t = free_time_of_x(&p, &q2, std::f64::consts::PI).unwrap();
        assert!((t - 1.25 * std::f64::consts::PI).abs() < 1e-14);
        let q3 = QuantumStateParams::new(-0.7, 1.3, 0.0).unwrap();
        assert_eq!(free_time_of_x(&p, &q3, 0.0).unwrap(), 0.0);
        let x = free_x_of_time(&p, &q3, -4.0).unwrap();
        assert!((free_time_of_x(&p, &q3, x).unwrap() + 4.0).abs() < 1e-12);
    }

    #[test]
    fn newton_law_rearrangement_solves_the_equation() {
        let p = PhysParams::new(0.7, 1.3, 1.0).unwrap();
        let (dv, xd, xdd, xddd) = (0.4, -1.1, 0.6, 0.3);
        let x4 = newton_fourth_derivative(&p, dv, xd, xdd, xddd);
        let lhs = p.mu * xdd
            + p.hbar * p.hbar / p.mu
                * (2.5 * xdd.powi(3) / xd.powi(6) - 2.0 * xdd * xddd / xd.powi(5) + 0.25 * x4 / xd.powi(4))
            + dv;
        assert!(lhs.abs() < 1e-13, "{lhs}");
    }

    #[test]
    fn csv_has_header_and_full_precision() {
        let s = TrajectorySample {
            t: 0.1,
            x: 1.0 / 3.0,
            xdot: 1.0,
            xddot: 0.0,
            xdddot: 0.0,
            h: 0.5,
            p: 1.0,
            q: 0.0,
            s0p: 1.0,
        };
        let mut buf = Vec::new();
        write_csv(&mut buf, &[s]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(row[1], 1.0 / 3.0);
    }
}
