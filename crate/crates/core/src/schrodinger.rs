//! Real independent solution pairs of the stationary Schrödinger equation
//! `φ'' = (2μ/ħ²)(V − E) φ`.
//!
//! Free particles get the analytic pair `(sin kx, cos kx)`. Every other
//! potential is propagated with Numerov's scheme from an anchor point with
//! initial data `φ₁ = 0, φ₁' = 1, φ₂ = 1, φ₂' = 0`, so the Wronskian is one.
//! Derivatives of order two and higher always come from the Schrödinger
//! recursion, never from differencing.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{Jet, Scalar, MAX_ORDER};

/// Solutions whose magnitude exceeds this stop the Numerov sweep.
pub const OVERFLOW_CAP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysParams {
    pub hbar: f64,
    pub mu: f64,
    pub energy: f64,
}

impl PhysParams {
    pub fn new(hbar: f64, mu: f64, energy: f64) -> Result<Self> {
        let p = PhysParams { hbar, mu, energy };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hbar > 0.0 && self.mu > 0.0 && self.energy.is_finite()) {
            return Err(Error::Contract(format!("need hbar > 0, mu > 0 and finite energy, got {self:?}")));
        }
        Ok(())
    }

    /// `2μ/ħ²`
    pub fn coupling(&self) -> f64 {
        2.0 * self.mu / (self.hbar * self.hbar)
    }
}

/// Piecewise-cubic (natural spline) potential sampled on a strictly
/// increasing grid. `V` and its derivatives come from the same spline.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedPotential {
    x: Vec<f64>,
    v: Vec<f64>,
    m: Vec<f64>, // second derivatives at the knots
}

impl TabulatedPotential {
    pub fn new(x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if x.len() != v.len() || x.len() < 2 {
            return Err(Error::Contract(format!(
                "tabulated potential needs >= 2 matching samples, got {} x and {} V",
                x.len(),
                v.len()
            )));
        }
        if x.iter().chain(&v).any(|a| !a.is_finite()) {
            return Err(Error::Contract("tabulated potential must be finite".into()));
        }
        if let Some(w) = x.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Contract(format!(
                "tabulated grid must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        let m = natural_spline_moments(&x, &v);
        Ok(TabulatedPotential { x, v, m })
    }

    /// Parses two-column `x,V` text; a leading non-numeric header line is skipped.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed = match cols.as_slice() {
                [a, b] => a.parse::<f64>().ok().zip(b.parse::<f64>().ok()),
                _ => None,
            };
            match parsed {
                Some((a, b)) => {
                    xs.push(a);
                    vs.push(b);
                }
                None if xs.is_empty() && lineno == 0 => continue, // header
                None => {
                    return Err(Error::Parse(format!(
                        "line {}: expected two numeric columns, got {line:?}",
                        lineno + 1
                    )))
                }
            }
        }
        Self::new(xs, vs)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let text =
            fs::read_to_string(path.as_ref()).map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_csv_str(&text)
    }

    pub fn range(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    /// Spline value; outside the grid the end cubic is extended.
    pub fn eval<S: Scalar>(&self, x: S) -> S {
        let n = self.x.len();
        let xv = x.value();
        let i = self.x.partition_point(|&k| k <= xv).clamp(1, n - 1) - 1;
        let h = self.x[i + 1] - self.x[i];
        let b = (x - self.x[i]) / h;
        let a = -b + 1.0;
        let cubic = |s: S| s * s * s - s;
        a * self.v[i] + b * self.v[i + 1] + (cubic(a) * self.m[i] + cubic(b) * self.m[i + 1]) * (h * h / 6.0)
    }
}

fn natural_spline_moments(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // tridiagonal solve for interior moments
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        let a = h0 / 6.0;
        let b = (h0 + h1) / 3.0;
        let c = h1 / 6.0;
        let d = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        let denom = b - a * c_prime[i - 1];
        c_prime[i] = c / denom;
        d_prime[i] = (d - a * d_prime[i - 1]) / denom;
    }
    for i in (1..n - 1).rev() {
        m[i] = d_prime[i] - c_prime[i] * m[i + 1];
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialModel {
    Free,
    /// `V = g x`
    Linear {
        slope: f64,
    },
    /// `V = κ x² / 2`
    Harmonic {
        stiffness: f64,
    },
    Tabulated(TabulatedPotential),
}

impl PotentialModel {
    pub fn eval<S: Scalar>(&self, x: S) -> S {
        match self {
            PotentialModel::Free => x * 0.0,
            PotentialModel::Linear { slope } => x * *slope,
            PotentialModel::Harmonic { stiffness } => x * x * (0.5 * stiffness),
            PotentialModel::Tabulated(t) => t.eval(x),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x)
    }

    pub fn dvdx(&self, x: f64) -> f64 {
        self.eval(Jet::variable(x, 1)).deriv(1)
    }

    /// `V, V', ..., V^(order)` at `x` as a jet in `x`.
    pub fn derivs(&self, x: f64, order: usize) -> Jet {
        self.eval(Jet::variable(x, order))
    }

    pub fn name(&self) -> &'static str {
        match self {
            PotentialModel::Free => "free",
            PotentialModel::Linear { .. } => "linear",
            PotentialModel::Harmonic { .. } => "harmonic",
            PotentialModel::Tabulated(_) => "tabulated",
        }
    }
}

/// Where a [`SolutionPair`] came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairSource {
    Analytic,
    Numerov { grid_step: f64 },
}

#[derive(Debug, Clone, PartialEq)]
enum PairRepr {
    Free { k: f64 },
    Numerov(NumerovTable),
}

#[derive(Debug, Clone, PartialEq)]
struct NumerovTable {
    anchor: f64,
    h: f64,
    /// index of the anchor node in the arrays
    anchor_idx: usize,
    phi: [Vec<f64>; 2],
    dphi: [Vec<f64>; 2],
    /// `f = (2μ/ħ²)(V − E)` and derivatives up to order 4 at every node
    f: Vec<[f64; 5]>,
    /// usable node range (guard nodes excluded)
    first: usize,
    last: usize,
}

impl NumerovTable {
    fn node_x(&self, j: usize) -> f64 {
        self.anchor + (j as f64 - self.anchor_idx as f64) * self.h
    }

    fn nearest(&self, x: f64) -> usize {
        let j = ((x - self.anchor) / self.h).round() + self.anchor_idx as f64;
        (j.max(self.first as f64) as usize).min(self.last)
    }
}

/// Two independent real solutions with derivative access and Wronskian.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPair {
    params: PhysParams,
    potential: PotentialModel,
    repr: PairRepr,
    /// `(θ₁, θ₂) = mix · (φ₁, φ₂)` applied on top of the base solutions
    mix: [[f64; 2]; 2],
    wronskian_ref: f64,
    domain: (f64, f64),
    anchor: f64,
    requested_domain: (f64, f64),
}

/// Builds a solution pair on `domain`.
///
/// `Free` potentials use the analytic pair (requires `E > 0`); all others are
/// integrated with Numerov from `anchor` on a grid of spacing `grid_step`.
pub fn solve_pair(
    potential: &PotentialModel,
    params: PhysParams,
    domain: (f64, f64),
    anchor: f64,
    grid_step: f64,
) -> Result<SolutionPair> {
    check_common(params, domain, anchor, grid_step)?;
    match potential {
        PotentialModel::Free => {
            if params.energy <= 0.0 {
                return Err(Error::Domain(format!(
                    "free pair needs E > 0 (k = sqrt(2 mu E)/hbar), got E = {}",
                    params.energy
                )));
            }
            let k = (2.0 * params.mu * params.energy).sqrt() / params.hbar;
            Ok(SolutionPair {
                params,
                potential: PotentialModel::Free,
                repr: PairRepr::Free { k },
                mix: IDENTITY,
                wronskian_ref: k,
                domain,
                anchor,
                requested_domain: domain,
            })
        }
        _ => solve_pair_numerov(potential, params, domain, anchor, grid_step),
    }
}

const IDENTITY: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];

fn check_common(params: PhysParams, domain: (f64, f64), anchor: f64, grid_step: f64) -> Result<()> {
    params.validate()?;
    if !(grid_step > 0.0) {
        return Err(Error::Contract(format!("grid step must be positive, got {grid_step}")));
    }
    if !(domain.0 < domain.1) || !domain.0.is_finite() || !domain.1.is_finite() {
        return Err(Error::Contract(format!("invalid domain {domain:?}")));
    }
    if !(anchor >= domain.0 && anchor <= domain.1) {
        return Err(Error::Domain(format!("anchor {anchor} outside domain {domain:?}")));
    }
    Ok(())
}

/// Numerov pair for any potential (including `Free`, for cross-checks).
pub fn solve_pair_numerov(
    potential: &PotentialModel,
    params: PhysParams,
    domain: (f64, f64),
    anchor: f64,
    grid_step: f64,
) -> Result<SolutionPair> {
    check_common(params, domain, anchor, grid_step)?;
    if let PotentialModel::Tabulated(t) = potential {
        let (lo, hi) = t.range();
        if domain.0 < lo || domain.1 > hi {
            return Err(Error::Domain(format!("domain {domain:?} exceeds tabulated range [{lo}, {hi}]")));
        }
    }
    let h = grid_step;
    let guard = 2usize;
    let n_left = ((anchor - domain.0) / h).ceil() as usize + guard;
    let n_right = ((domain.1 - anchor) / h).ceil() as usize + guard;
    let n = n_left + n_right + 1;
    let anchor_idx = n_left;
    let node_x = |j: usize| anchor + (j as f64 - anchor_idx as f64) * h;

    let coupling = params.coupling();
    let f: Vec<[f64; 5]> = (0..n)
        .map(|j| {
            let v = potential.derivs(node_x(j), 4);
            let mut out = [0.0; 5];
            for (m, o) in out.iter_mut().enumerate() {
                *o = coupling * v.deriv(m);
            }
            out[0] -= coupling * params.energy;
            out
        })
        .collect();

    let initial = [(0.0, 1.0), (1.0, 0.0)];
    let mut phi = [vec![0.0; n], vec![0.0; n]];
    let mut first = 0usize;
    let mut last = n - 1;
    for (s, &(y0, dy0)) in initial.iter().enumerate() {
        let d = recursion_derivs(&f[anchor_idx], y0, dy0);
        let taylor = |step: f64| {
            let mut acc = 0.0;
            let mut p = 1.0;
            for (m, dm) in d.iter().enumerate() {
                acc += dm * p / FACT[m];
                p *= step;
            }
            acc
        };
        let y = &mut phi[s];
        y[anchor_idx] = y0;
        if anchor_idx + 1 < n {
            y[anchor_idx + 1] = taylor(h);
        }
        if anchor_idx >= 1 {
            y[anchor_idx - 1] = taylor(-h);
        }
        let w = |j: usize| 1.0 - h * h * f[j][0] / 12.0;
        // forward sweep
        for j in anchor_idx + 1..n - 1 {
            y[j + 1] = (2.0 * (1.0 + 5.0 * h * h * f[j][0] / 12.0) * y[j] - w(j - 1) * y[j - 1]) / w(j + 1);
            if !(y[j + 1].abs() <= OVERFLOW_CAP) {
                last = last.min(j);
                break;
            }
        }
        // backward sweep
        for j in (1..anchor_idx).rev() {
            y[j - 1] = (2.0 * (1.0 + 5.0 * h * h * f[j][0] / 12.0) * y[j] - w(j + 1) * y[j + 1]) / w(j - 1);
            if !(y[j - 1].abs() <= OVERFLOW_CAP) {
                first = first.max(j);
                break;
            }
        }
    }
    // keep two guard nodes on each side for the derivative stencil
    let first_usable = first + guard;
    let last_usable = last.saturating_sub(guard);
    if first_usable > anchor_idx || last_usable < anchor_idx {
        return Err(Error::Domain("solutions overflow immediately next to the anchor".into()));
    }

    let mut dphi = [vec![f64::NAN; n], vec![f64::NAN; n]];
    for s in 0..2 {
        let y = &phi[s];
        for j in first_usable..=last_usable {
            dphi[s][j] = (y[j - 2] - 8.0 * y[j - 1] + 8.0 * y[j + 1] - y[j + 2]) / (12.0 * h);
        }
        dphi[s][anchor_idx] = initial[s].1;
    }

    let dom = (domain.0.max(node_x(first_usable)), domain.1.min(node_x(last_usable)));
    let table = NumerovTable { anchor, h, anchor_idx, phi, dphi, f, first: first_usable, last: last_usable };
    Ok(SolutionPair {
        params,
        potential: potential.clone(),
        repr: PairRepr::Numerov(table),
        mix: IDENTITY,
        wronskian_ref: 1.0,
        domain: dom,
        anchor,
        requested_domain: domain,
    })
}

const FACT: [f64; MAX_ORDER + 1] = [1.0, 1.0, 2.0, 6.0, 24.0, 120.0, 720.0];
const BINOM: [[f64; 5]; 5] = [
    [1.0, 0.0, 0.0, 0.0, 0.0],
    [1.0, 1.0, 0.0, 0.0, 0.0],
    [1.0, 2.0, 1.0, 0.0, 0.0],
    [1.0, 3.0, 3.0, 1.0, 0.0],
    [1.0, 4.0, 6.0, 4.0, 1.0],
];

/// `φ, φ', ..., φ^(6)` from `φ'' = f φ` given `f` and its first four derivatives.
fn recursion_derivs(f: &[f64; 5], y: f64, dy: f64) -> [f64; MAX_ORDER + 1] {
    let mut d = [0.0; MAX_ORDER + 1];
    d[0] = y;
    d[1] = dy;
    for m in 0..=MAX_ORDER - 2 {
        d[m + 2] = (0..=m).map(|j| BINOM[m][j] * f[j] * d[m - j]).sum();
    }
    d
}

impl SolutionPair {
    pub fn params(&self) -> PhysParams {
        self.params
    }

    pub fn potential(&self) -> &PotentialModel {
        &self.potential
    }

    /// Usable domain (possibly narrower than requested, see [`Self::truncated`]).
    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn wronskian_ref(&self) -> f64 {
        self.wronskian_ref
    }

    pub fn source(&self) -> PairSource {
        match &self.repr {
            PairRepr::Free { .. } => PairSource::Analytic,
            PairRepr::Numerov(t) => PairSource::Numerov { grid_step: t.h },
        }
    }

    /// The requested domain when overflow forced a narrower one.
    pub fn truncated(&self) -> Option<(f64, f64)> {
        (self.domain != self.requested_domain).then_some(self.requested_domain)
    }

    pub fn contains(&self, x: f64) -> bool {
        let slack = 1e-12 * (self.domain.1 - self.domain.0).max(1.0);
        x >= self.domain.0 - slack && x <= self.domain.1 + slack
    }

    /// Replaces the pair by `(θ₁, θ₂) = m·(φ₁, φ₂)`; the Wronskian scales by `det m`.
    pub fn recombined(&self, m: [[f64; 2]; 2]) -> Result<SolutionPair> {
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(Error::Contract(format!("singular recombination {m:?}")));
        }
        let mut out = self.clone();
        let a = self.mix;
        for (i, row) in out.mix.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = m[i][0] * a[0][j] + m[i][1] * a[1][j];
            }
        }
        out.wronskian_ref = self.wronskian_ref * det;
        Ok(out)
    }

    /// `(φ₁, φ₁')` and `(φ₂, φ₂')` of the base (unmixed) solutions at `x`.
    fn base_values(&self, x: f64) -> [(f64, f64); 2] {
        match &self.repr {
            PairRepr::Free { k } => {
                let (s, c) = (k * x).sin_cos();
                [(s, k * c), (c, -k * s)]
            }
            PairRepr::Numerov(t) => {
                let j = t.nearest(x);
                let delta = x - t.node_x(j);
                std::array::from_fn(|s| {
                    if delta == 0.0 {
                        return (t.phi[s][j], t.dphi[s][j]);
                    }
                    let d = recursion_derivs(&t.f[j], t.phi[s][j], t.dphi[s][j]);
                    let mut y = 0.0;
                    let mut dy = 0.0;
                    let mut p = 1.0;
                    for m in 0..=MAX_ORDER {
                        y += d[m] * p / FACT[m];
                        if m < MAX_ORDER {
                            dy += d[m + 1] * p / FACT[m];
                        }
                        p *= delta;
                    }
                    (y, dy)
                })
            }
        }
    }

    fn coupling_jet(&self, x: f64, order: usize) -> [f64; 5] {
        let c = self.params.coupling();
        let v = self.potential.derivs(x, order.min(4));
        let mut f = [0.0; 5];
        for (m, o) in f.iter_mut().enumerate() {
            *o = c * v.deriv(m);
        }
        f[0] -= c * self.params.energy;
        f
    }

    /// Derivatives `φᵢ^(m)(x)`, `m = 0..=max_order`, as jets in `x`.
    pub fn eval_phi(&self, x: f64, max_order: usize) -> Result<(Jet, Jet)> {
        if max_order > MAX_ORDER {
            return Err(Error::Contract(format!("max_order {max_order} exceeds {MAX_ORDER}")));
        }
        if !self.contains(x) {
            return Err(Error::Domain(format!("x = {x} outside pair domain {:?}", self.domain)));
        }
        let base = self.base_values(x);
        let f = if max_order >= 2 { self.coupling_jet(x, max_order - 2) } else { [0.0; 5] };
        let y: [f64; 2] = std::array::from_fn(|i| self.mix[i][0] * base[0].0 + self.mix[i][1] * base[1].0);
        let dy: [f64; 2] = std::array::from_fn(|i| self.mix[i][0] * base[0].1 + self.mix[i][1] * base[1].1);
        let jets: Vec<Jet> = (0..2)
            .map(|i| {
                let d = recursion_derivs(&f, y[i], dy[i]);
                Jet::new(&d[..=max_order]).map_err(|_| Error::Domain(format!("non-finite solution value at x = {x}")))
            })
            .collect::<Result<_>>()?;
        Ok((jets[0], jets[1]))
    }

    /// `W(x) = φ₂ φ₁' − φ₁ φ₂'`.
    pub fn wronskian(&self, x: f64) -> Result<f64> {
        let (p1, p2) = self.eval_phi(x, 1)?;
        Ok(p2.value() * p1.deriv(1) - p1.value() * p2.deriv(1))
    }

    /// Largest relative Wronskian drift over `samples` evenly spaced points.
    pub fn wronskian_drift(&self, samples: usize) -> Result<f64> {
        let (lo, hi) = self.domain;
        let mut worst = 0.0f64;
        for i in 0..samples.max(2) {
            let x = lo + (hi - lo) * i as f64 / (samples.max(2) - 1) as f64;
            let w = self.wronskian(x)?;
            worst = worst.max((w - self.wronskian_ref).abs() / self.wronskian_ref.abs());
        }
        Ok(worst)
    }

    /// Normalized residual of `φ'' = f φ` using a five-point second difference
    /// of the stored grid values at the node nearest `x` (Numerov pairs only).
    pub fn stencil_residual(&self, x: f64) -> Option<f64> {
        let PairRepr::Numerov(t) = &self.repr else {
            return None;
        };
        let j = t.nearest(x);
        let c = self.params.coupling();
        let v = self.potential.value(t.node_x(j));
        let mut worst = 0.0f64;
        for s in 0..2 {
            let y = &t.phi[s];
            let d2 = (-y[j - 2] + 16.0 * y[j - 1] - 30.0 * y[j] + 16.0 * y[j + 1] - y[j + 2]) / (12.0 * t.h * t.h);
            let r = (d2 - t.f[j][0] * y[j]).abs() / (c * (v.abs() + self.params.energy.abs()) * y[j].abs() + 1.0);
            worst = worst.max(r);
        }
        Some(worst)
    }
}
