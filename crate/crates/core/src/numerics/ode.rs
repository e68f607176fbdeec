//! Adaptive Dormand–Prince 5(4) integration with continuous (dense) output.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings { rel_tol: 1e-10, abs_tol: 1e-12, max_step: f64::INFINITY, max_steps: 1_000_000 }
    }
}

impl IntegratorSettings {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        IntegratorSettings { rel_tol, abs_tol, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rel_tol > 0.0 && self.abs_tol > 0.0 && self.max_step > 0.0 && self.max_steps >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Contract(format!("invalid integrator settings {self:?}")))
        }
    }
}

/// Raised by a right-hand side that cannot be evaluated at the requested state.
#[derive(Debug, Clone, PartialEq)]
pub struct RhsError(pub String);

impl fmt::Display for RhsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FailureReason {
    StepUnderflow,
    MaxSteps,
    /// The right-hand side refused every step size down to underflow.
    RhsAbort(String),
}

/// Why and where an integration stopped, with everything computed so far.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationFailure {
    pub reason: FailureReason,
    /// Time of the last accepted state.
    pub t: f64,
    pub state: Vec<f64>,
    pub steps: usize,
    /// Dense solution over `[t0, t]`.
    pub partial: DenseSolution,
}

impl fmt::Display for IntegrationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let why = match &self.reason {
            FailureReason::StepUnderflow => "step size underflow".to_string(),
            FailureReason::MaxSteps => "maximum number of steps exceeded".to_string(),
            FailureReason::RhsAbort(m) => format!("right-hand side aborted: {m}"),
        };
        write!(f, "{why} at t = {} after {} steps (state {:?})", self.t, self.steps, self.state)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Segment {
    t0: f64,
    h: f64,
    // Hairer's contd5 coefficient vectors
    r: [Vec<f64>; 5],
}

impl Segment {
    fn eval_into(&self, t: f64, out: &mut [f64]) {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.r[0][i] + s * (self.r[1][i] + s1 * (self.r[2][i] + s * (self.r[3][i] + s1 * self.r[4][i])));
        }
    }
}

/// Piecewise quartic interpolant of an accepted integration.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSolution {
    t_start: f64,
    y_start: Vec<f64>,
    segments: Vec<Segment>,
}

impl DenseSolution {
    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.segments.last().map_or(self.t_start, |s| s.t0 + s.h)
    }

    pub fn dim(&self) -> usize {
        self.y_start.len()
    }

    pub fn steps(&self) -> usize {
        self.segments.len()
    }

    /// Mesh times of accepted steps, including the start.
    pub fn mesh(&self) -> Vec<f64> {
        std::iter::once(self.t_start).chain(self.segments.iter().map(|s| s.t0 + s.h)).collect()
    }

    pub fn final_state(&self) -> Vec<f64> {
        self.eval(self.t_end()).expect("end point is inside the span")
    }

    /// Interpolated state at `t`; `t` must lie in `[t_start, t_end]`.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let (a, b) = (self.t_start, self.t_end());
        let slack = 1e-12 * (b - a).abs().max(1.0);
        if !(t >= a - slack && t <= b + slack) {
            return Err(Error::Domain(format!("t = {t} outside solution span [{a}, {b}]")));
        }
        if self.segments.is_empty() {
            out.copy_from_slice(&self.y_start);
            return Ok(());
        }
        let idx = self.segments.partition_point(|s| s.t0 + s.h < t).min(self.segments.len() - 1);
        self.segments[idx].eval_into(t, out);
        Ok(())
    }
}

// Dormand–Prince 5(4) tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Integrates `y' = rhs(t, y)` from `t_span.0` to `t_span.1` (forward in time).
///
/// On failure the returned [`Error::Integration`] carries the last accepted
/// state and the dense solution up to that point.
pub fn integrate_ivp<F>(
    mut rhs: F,
    y0: &[f64],
    t_span: (f64, f64),
    settings: &IntegratorSettings,
) -> Result<DenseSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> std::result::Result<(), RhsError>,
{
    settings.validate()?;
    let (t0, t1) = t_span;
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::Contract(format!("need finite t1 > t0, got ({t0}, {t1})")));
    }
    if y0.is_empty() || y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("initial state must be non-empty and finite".into()));
    }
    let n = y0.len();
    let mut sol = DenseSolution { t_start: t0, y_start: y0.to_vec(), segments: Vec::new() };

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    if let Err(e) = rhs(t, &y, &mut k1) {
        return Err(failure(FailureReason::RhsAbort(e.0), t, y, 0, sol));
    }
    if k1.iter().any(|v| !v.is_finite()) {
        return Err(failure(FailureReason::RhsAbort("non-finite derivative at start".into()), t, y, 0, sol));
    }

    let mut k = vec![vec![0.0; n]; 6]; // k2..k7
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut h = initial_step(&mut rhs, t, &y, &k1, t1 - t0, settings);
    let mut steps = 0usize;
    let mut last_rhs_msg: Option<String> = None;

    while t < t1 {
        if steps >= settings.max_steps {
            return Err(failure(FailureReason::MaxSteps, t, y, steps, sol));
        }
        let h_min = 16.0 * f64::EPSILON * t.abs().max(1.0);
        if h < h_min {
            let reason = match last_rhs_msg.take() {
                Some(m) => FailureReason::RhsAbort(m),
                None => FailureReason::StepUnderflow,
            };
            return Err(failure(reason, t, y, steps, sol));
        }
        h = h.min(settings.max_step);
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }

        let eval_ok = match dopri_stages(&mut rhs, t, h, &y, &k1, &mut k, &mut ytmp, &mut ynew) {
            Ok(()) => true,
            Err(e) => {
                last_rhs_msg = Some(e.0);
                false
            }
        };

        let err = if eval_ok {
            let mut sum = 0.0;
            for i in 0..n {
                let e = h * (E1 * k1[i] + E3 * k[1][i] + E4 * k[2][i] + E5 * k[3][i] + E6 * k[4][i] + E7 * k[5][i]);
                let sc = settings.abs_tol + settings.rel_tol * y[i].abs().max(ynew[i].abs());
                sum += (e / sc).powi(2);
            }
            let err = (sum / n as f64).sqrt();
            if err.is_finite() && ynew.iter().all(|v| v.is_finite()) && k[5].iter().all(|v| v.is_finite()) {
                err
            } else {
                f64::INFINITY
            }
        } else {
            f64::INFINITY
        };

        if err <= 1.0 {
            let mut r: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
            for i in 0..n {
                let dy = ynew[i] - y[i];
                let bspl = h * k1[i] - dy;
                r[0][i] = y[i];
                r[1][i] = dy;
                r[2][i] = bspl;
                r[3][i] = dy - h * k[5][i] - bspl;
                r[4][i] = h * (D1 * k1[i] + D3 * k[1][i] + D4 * k[2][i] + D5 * k[3][i] + D6 * k[4][i] + D7 * k[5][i]);
            }
            sol.segments.push(Segment { t0: t, h, r });
            t = if last { t1 } else { t + h };
            y.copy_from_slice(&ynew);
            k1.copy_from_slice(&k[5]);
            steps += 1;
            last_rhs_msg = None;
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
        } else if err.is_finite() {
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
        } else {
            h *= 0.25;
        }
    }
    Ok(sol)
}

fn combine(y: &[f64], h: f64, terms: &[(f64, &[f64])], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = y[i];
        for (c, kv) in terms {
            acc += h * c * kv[i];
        }
        *o = acc;
    }
}

/// Evaluates stages k2..k7 (stored in `k[0..6]`) and the fifth-order update.
#[allow(clippy::too_many_arguments)]
fn dopri_stages<F>(
    rhs: &mut F,
    t: f64,
    h: f64,
    y: &[f64],
    k1: &[f64],
    k: &mut [Vec<f64>],
    ytmp: &mut [f64],
    ynew: &mut [f64],
) -> std::result::Result<(), RhsError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> std::result::Result<(), RhsError>,
{
    combine(y, h, &[(A21, k1)], ytmp);
    rhs(t + C2 * h, ytmp, &mut k[0])?;
    combine(y, h, &[(A31, k1), (A32, &k[0])], ytmp);
    rhs(t + C3 * h, ytmp, &mut k[1])?;
    combine(y, h, &[(A41, k1), (A42, &k[0]), (A43, &k[1])], ytmp);
    rhs(t + C4 * h, ytmp, &mut k[2])?;
    combine(y, h, &[(A51, k1), (A52, &k[0]), (A53, &k[1]), (A54, &k[2])], ytmp);
    rhs(t + C5 * h, ytmp, &mut k[3])?;
    combine(y, h, &[(A61, k1), (A62, &k[0]), (A63, &k[1]), (A64, &k[2]), (A65, &k[3])], ytmp);
    rhs(t + h, ytmp, &mut k[4])?;
    combine(y, h, &[(A71, k1), (A73, &k[1]), (A74, &k[2]), (A75, &k[3]), (A76, &k[4])], ynew);
    rhs(t + h, ynew, &mut k[5])?;
    Ok(())
}

fn failure(reason: FailureReason, t: f64, state: Vec<f64>, steps: usize, partial: DenseSolution) -> Error {
    IntegrationFailure { reason, t, state, steps, partial }.into()
}

fn initial_step<F>(rhs: &mut F, t: f64, y: &[f64], f0: &[f64], span: f64, s: &IntegratorSettings) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]) -> std::result::Result<(), RhsError>,
{
    let n = y.len();
    let sc: Vec<f64> = y.iter().map(|v| s.abs_tol + s.rel_tol * v.abs()).collect();
    let norm = |v: &[f64]| (v.iter().zip(&sc).map(|(a, b)| (a / b).powi(2)).sum::<f64>() / n as f64).sqrt();
    let d0 = norm(y);
    let d1 = norm(f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span).min(s.max_step);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; n];
    if rhs(t + h0, &y1, &mut f1).is_err() || f1.iter().any(|v| !v.is_finite()) {
        return h0 * 0.01;
    }
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1).min(span).min(s.max_step)
}
