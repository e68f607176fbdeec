//! The kinetic-energy series
//!
//! `T = Σ ħⁿ/μⁿ⁻¹ [α_nk xᵏẍⁿ⁺ᵏ/ẋ³ⁿ⁺²ᵏ⁻² + β_nk xᵏẍⁿ⁺ᵏ⁻²x⃛/ẋ³ⁿ⁺²ᵏ⁻³]`
//!
//! together with everything derived from it: the λ-regularized Lagrangian,
//! the three conjugate momenta in closed form, the `A`/`B` tables giving
//! `dS₀/dx` as a series, the second and third `x`-derivatives of `S₀`, the
//! master relation that turns the stationary quantum Hamilton–Jacobi
//! equation into conditions on the lattice, and a numerical level-by-level
//! determination of the coefficients.
//!
//! All series are generic over [`Scalar`], including `ħ`, so a jet in `ħ`
//! separates the series into its `ħ`-levels.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Jet, Scalar, MAX_ORDER};
use crate::schrodinger::{PhysParams, PotentialModel};

/// `ħ` and `μ` for series evaluation. Unlike [`PhysParams`], `ħ = 0` is
/// allowed (the classical level).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesScale {
    pub hbar: f64,
    pub mu: f64,
}

impl SeriesScale {
    pub fn new(hbar: f64, mu: f64) -> Result<Self> {
        if !(hbar >= 0.0 && hbar.is_finite() && mu > 0.0 && mu.is_finite()) {
            return Err(Error::Contract(format!("need hbar >= 0 and mu > 0, got {hbar}, {mu}")));
        }
        Ok(SeriesScale { hbar, mu })
    }
}

impl From<PhysParams> for SeriesScale {
    fn from(p: PhysParams) -> Self {
        SeriesScale { hbar: p.hbar, mu: p.mu }
    }
}

/// `(x, ẋ, ẍ, x⃛, x⁽⁴⁾, x⁽⁵⁾)` at one instant; missing orders are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint<S> {
    pub x: S,
    pub xd: S,
    pub xdd: S,
    pub xddd: S,
    pub x4: S,
    pub x5: S,
}

impl PhasePoint<f64> {
    /// Reads a time jet of `x`, requiring at least `min_order` derivatives
    /// and `ẋ ≠ 0`.
    pub fn from_jet(j: &Jet, min_order: usize) -> Result<Self> {
        if j.order() < min_order {
            return Err(Error::Contract(format!("jet order {} below required {min_order}", j.order())));
        }
        let d = |m: usize| if m <= j.order() { j.deriv(m) } else { 0.0 };
        let p = PhasePoint { x: d(0), xd: d(1), xdd: d(2), xddd: d(3), x4: d(4), x5: d(5) };
        if p.xd == 0.0 {
            return Err(Error::Singular("xdot = 0 in a denominator of the series".into()));
        }
        Ok(p)
    }

    pub fn lift<S: Scalar>(&self) -> PhasePoint<S> {
        PhasePoint {
            x: S::constant(self.x),
            xd: S::constant(self.xd),
            xdd: S::constant(self.xdd),
            xddd: S::constant(self.xddd),
            x4: S::constant(self.x4),
            x5: S::constant(self.x5),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEntry {
    pub n: u32,
    pub k: u32,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LatticeDocument {
    entries: Vec<CoefficientEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truncation: Option<(u32, u32)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x_offset: Option<f64>,
}

/// Which of the two coefficient families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    Alpha,
    Beta,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Alpha => "alpha",
            Family::Beta => "beta",
        })
    }
}

pub const DEFAULT_TRUNCATION: (u32, u32) = (4, 4);

/// Sparse `(n, k) → (α_nk, β_nk)` lattice, zero outside the stored entries.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticCoefficients {
    entries: BTreeMap<(u32, u32), (f64, f64)>,
    truncation: (u32, u32),
    x_offset: f64,
}

impl Default for KineticCoefficients {
    fn default() -> Self {
        Self::zero(DEFAULT_TRUNCATION)
    }
}

impl KineticCoefficients {
    pub fn zero(truncation: (u32, u32)) -> Self {
        KineticCoefficients { entries: BTreeMap::new(), truncation, x_offset: 0.0 }
    }

    /// `α₀₀ = 1/2, α₂₀ = 5/8, β₂₀ = −1/4`, everything else zero.
    pub fn canonical() -> Self {
        let mut c = Self::zero(DEFAULT_TRUNCATION);
        c.entries.insert((0, 0), (0.5, 0.0));
        c.entries.insert((2, 0), (0.625, -0.25));
        c
    }

    pub fn truncation(&self) -> (u32, u32) {
        self.truncation
    }

    /// Expansion point `x₀` (the series uses powers of `x − x₀`).
    pub fn x_offset(&self) -> f64 {
        self.x_offset
    }

    pub fn with_x_offset(mut self, x0: f64) -> Self {
        self.x_offset = x0;
        self
    }

    pub fn get(&self, n: i64, k: i64) -> (f64, f64) {
        if n < 0 || k < 0 {
            return (0.0, 0.0);
        }
        self.entries.get(&(n as u32, k as u32)).copied().unwrap_or((0.0, 0.0))
    }

    pub fn alpha(&self, n: i64, k: i64) -> f64 {
        self.get(n, k).0
    }

    pub fn beta(&self, n: i64, k: i64) -> f64 {
        self.get(n, k).1
    }

    pub fn coefficient(&self, fam: Family, n: u32, k: u32) -> f64 {
        match fam {
            Family::Alpha => self.alpha(n as i64, k as i64),
            Family::Beta => self.beta(n as i64, k as i64),
        }
    }

    pub fn set(&mut self, n: u32, k: u32, alpha: f64, beta: f64) -> Result<()> {
        if n > self.truncation.0 || k > self.truncation.1 {
            return Err(Error::Contract(format!("entry ({n}, {k}) outside truncation {:?}", self.truncation)));
        }
        if !(alpha.is_finite() && beta.is_finite()) {
            return Err(Error::Contract(format!("non-finite coefficient at ({n}, {k})")));
        }
        if alpha == 0.0 && beta == 0.0 {
            self.entries.remove(&(n, k));
        } else {
            self.entries.insert((n, k), (alpha, beta));
        }
        Ok(())
    }

    pub fn set_coefficient(&mut self, fam: Family, n: u32, k: u32, value: f64) -> Result<()> {
        let (a, b) = self.get(n as i64, k as i64);
        match fam {
            Family::Alpha => self.set(n, k, value, b),
            Family::Beta => self.set(n, k, a, value),
        }
    }

    /// Nonzero entries in `(n, k)` order.
    pub fn entries(&self) -> impl Iterator<Item = CoefficientEntry> + '_ {
        self.entries.iter().map(|(&(n, k), &(alpha, beta))| CoefficientEntry { n, k, alpha, beta })
    }

    fn lattice(&self) -> impl Iterator<Item = (i64, i64)> {
        let (nm, km) = self.truncation;
        (0..=nm as i64).flat_map(move |n| (0..=km as i64).map(move |k| (n, k)))
    }

    pub fn to_json(&self) -> String {
        let doc = LatticeDocument {
            entries: self.entries().collect(),
            truncation: Some(self.truncation),
            x_offset: (self.x_offset != 0.0).then_some(self.x_offset),
        };
        serde_json::to_string_pretty(&doc).expect("lattice serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: LatticeDocument = serde_json::from_str(text)?;
        let max_n = doc.entries.iter().map(|e| e.n).max().unwrap_or(0);
        let max_k = doc.entries.iter().map(|e| e.k).max().unwrap_or(0);
        let truncation = doc.truncation.unwrap_or((DEFAULT_TRUNCATION.0.max(max_n), DEFAULT_TRUNCATION.1.max(max_k)));
        let mut c = Self::zero(truncation);
        c.x_offset = doc.x_offset.unwrap_or(0.0);
        for e in doc.entries {
            if c.entries.contains_key(&(e.n, e.k)) {
                return Err(Error::Parse(format!("duplicate entry ({}, {})", e.n, e.k)));
            }
            c.set(e.n, e.k, e.alpha, e.beta)?;
        }
        Ok(c)
    }

    pub fn from_json_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }
}

/// `A_nk`, `B_nk`: the lattice of `dS₀/dx` once `λ → 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ABTables {
    pub a: BTreeMap<(u32, u32), f64>,
    pub b: BTreeMap<(u32, u32), f64>,
    truncation: (u32, u32),
}

impl ABTables {
    pub fn a(&self, n: i64, k: i64) -> f64 {
        if n < 0 || k < 0 {
            return 0.0;
        }
        self.a.get(&(n as u32, k as u32)).copied().unwrap_or(0.0)
    }

    pub fn b(&self, n: i64, k: i64) -> f64 {
        if n < 0 || k < 0 {
            return 0.0;
        }
        self.b.get(&(n as u32, k as u32)).copied().unwrap_or(0.0)
    }
}

pub fn ab_tables(c: &KineticCoefficients) -> ABTables {
    let mut a = BTreeMap::new();
    let mut b = BTreeMap::new();
    for (n, k) in c.lattice() {
        let (nf, kf) = (n as f64, k as f64);
        let av = (3.0 * nf * nf + 2.0 * kf * kf + 5.0 * nf * kf - 4.0 * nf - 3.0 * kf + 2.0) * c.alpha(n, k)
            + (3.0 * nf + 2.0 * kf - 1.0) * (3.0 * nf + 2.0 * kf - 3.0) * c.beta(n, k)
            - (kf + 1.0) * (nf + kf + 1.0) * c.alpha(n, k + 1)
            - 2.0 * (kf + 1.0) * (3.0 * nf + 2.0 * kf - 1.0) * c.beta(n, k + 1)
            + (kf + 1.0) * (kf + 2.0) * c.beta(n, k + 2);
        let bv = -(nf + kf) * (nf + kf - 1.0) * c.alpha(n, k)
            - (3.0 * nf * nf + 2.0 * kf * kf + 5.0 * nf * kf - 3.0 * nf - 3.0 * kf - 1.0) * c.beta(n, k)
            + (kf + 1.0) * (nf + kf - 1.0) * c.beta(n, k + 1);
        if av != 0.0 {
            a.insert((n as u32, k as u32), av);
        }
        if bv != 0.0 {
            b.insert((n as u32, k as u32), bv);
        }
    }
    ABTables { a, b, truncation: c.truncation }
}

/// Running sum that skips zero coefficients, so monomials with vanishing
/// weight never evaluate negative powers.
struct Sum<S>(Option<S>);

impl<S: Scalar> Sum<S> {
    fn new() -> Self {
        Sum(None)
    }

    fn add(&mut self, c: f64, term: impl FnOnce() -> S) {
        if c != 0.0 {
            let t = term() * c;
            self.0 = Some(match self.0 {
                Some(s) => s + t,
                None => t,
            });
        }
    }

    fn add_scaled(&mut self, pref: S, inner: Sum<S>) {
        if let Some(v) = inner.0 {
            let t = pref * v;
            self.0 = Some(match self.0 {
                Some(s) => s + t,
                None => t,
            });
        }
    }

    fn finish(self, like: S) -> S {
        self.0.unwrap_or(like * 0.0)
    }
}

/// `xᵏ ẍ^e2 x⃛^e3 x⁽⁴⁾^e4 x⁽⁵⁾^e5 / ẋ^den`
#[allow(clippy::too_many_arguments)]
fn mono<S: Scalar>(p: &PhasePoint<S>, xs: S, k: i64, e2: i64, e3: i32, e4: i32, e5: i32, den: i64) -> S {
    let mut t = xs.powi(k as i32) * p.xdd.powi(e2 as i32) * p.xd.powi(-den as i32);
    if e3 != 0 {
        t = t * p.xddd.powi(e3);
    }
    if e4 != 0 {
        t = t * p.x4.powi(e4);
    }
    if e5 != 0 {
        t = t * p.x5.powi(e5);
    }
    t
}

/// `ħⁿ/μⁿ⁻¹`
fn level_prefactor<S: Scalar>(hbar: S, mu: f64, n: i64) -> S {
    hbar.powi(n as i32) * mu.powi(1 - n as i32)
}

/// Kinetic series `T` on any scalar type.
pub fn kinetic<S: Scalar>(c: &KineticCoefficients, p: &PhasePoint<S>, hbar: S, mu: f64) -> S {
    let xs = p.x - c.x_offset;
    let mut total = Sum::new();
    for n in 0..=c.truncation.0 as i64 {
        let mut level = Sum::new();
        for k in 0..=c.truncation.1 as i64 {
            let (a, b) = c.get(n, k);
            level.add(a, || mono(p, xs, k, n + k, 0, 0, 0, 3 * n + 2 * k - 2));
            level.add(b, || mono(p, xs, k, n + k - 2, 1, 0, 0, 3 * n + 2 * k - 3));
        }
        total.add_scaled(level_prefactor(hbar, mu, n), level);
    }
    total.finish(p.xd)
}

/// The split `T = A + B·x⃛`: `A` collects the α-terms and `B` the β-terms
/// stripped of their factor `x⃛`. Neither part depends on `x⃛`.
pub fn kinetic_parts<S: Scalar>(c: &KineticCoefficients, p: &PhasePoint<S>, hbar: S, mu: f64) -> (S, S) {
    let xs = p.x - c.x_offset;
    let (mut ta, mut tb) = (Sum::new(), Sum::new());
    for n in 0..=c.truncation.0 as i64 {
        let (mut la, mut lb) = (Sum::new(), Sum::new());
        for k in 0..=c.truncation.1 as i64 {
            let (a, b) = c.get(n, k);
            la.add(a, || mono(p, xs, k, n + k, 0, 0, 0, 3 * n + 2 * k - 2));
            lb.add(b, || mono(p, xs, k, n + k - 2, 0, 0, 0, 3 * n + 2 * k - 3));
        }
        let pref = level_prefactor(hbar, mu, n);
        ta.add_scaled(pref, la);
        tb.add_scaled(pref, lb);
    }
    (ta.finish(p.xd), tb.finish(p.xd))
}

/// Series Lagrangian `T + (λ/2)x⃛² − V(x)` on any scalar type.
pub fn lagrangian<S: Scalar>(
    c: &KineticCoefficients,
    p: &PhasePoint<S>,
    hbar: S,
    mu: f64,
    lambda: f64,
    potential: &PotentialModel,
) -> S {
    kinetic(c, p, hbar, mu) + p.xddd * p.xddd * (0.5 * lambda) - potential.eval(p.x)
}

/// Closed-form momenta `(P, Π, Ξ)` of the series Lagrangian.
pub fn momenta_series<S: Scalar>(c: &KineticCoefficients, p: &PhasePoint<S>, hbar: S, mu: f64, lambda: f64) -> [S; 3] {
    let xs = p.x - c.x_offset;
    let (mut pp, mut pi, mut xi) = (Sum::new(), Sum::new(), Sum::new());
    for n in 0..=c.truncation.0 as i64 {
        let (mut lp, mut lpi, mut lxi) = (Sum::new(), Sum::new(), Sum::new());
        for k in 0..=c.truncation.1 as i64 {
            let (nf, kf) = (n as f64, k as f64);
            let (a, b) = c.get(n, k);
            let (a1, b1) = c.get(n, k + 1);
            let b2 = c.beta(n, k + 2);
            let m = 3.0 * nf + 2.0 * kf;
            let c1 = (m - 2.0) * (nf + kf - 1.0) * a + (m - 2.0) * (m - 3.0) * b
                - (kf + 1.0) * (nf + kf + 1.0) * a1
                - (kf + 1.0) * (6.0 * nf + 4.0 * kf - 3.0) * b1
                + (kf + 1.0) * (kf + 2.0) * b2;
            let c2 = -(nf + kf) * (nf + kf - 1.0) * a - (nf + kf) * (m - 3.0) * b + (kf + 1.0) * (nf + kf - 1.0) * b1;
            lp.add(c1, || mono(p, xs, k, n + k, 0, 0, 0, 3 * n + 2 * k - 1));
            lp.add(c2, || mono(p, xs, k, n + k - 2, 1, 0, 0, 3 * n + 2 * k - 2));
            let c3 = (nf + kf) * a + (m - 3.0) * b - (kf + 1.0) * b1;
            lpi.add(c3, || mono(p, xs, k, n + k - 1, 0, 0, 0, 3 * n + 2 * k - 2));
            lxi.add(b, || mono(p, xs, k, n + k - 2, 0, 0, 0, 3 * n + 2 * k - 3));
        }
        let pref = level_prefactor(hbar, mu, n);
        pp.add_scaled(pref, lp);
        pi.add_scaled(pref, lpi);
        xi.add_scaled(pref, lxi);
    }
    [pp.finish(p.xd) + p.x5 * lambda, pi.finish(p.xd) - p.x4 * lambda, xi.finish(p.xd) + p.xddd * lambda]
}

/// `dS₀/dx`, `d²S₀/dx²`, `d³S₀/dx³` as phase-space series built from the
/// `A`/`B` tables.
pub fn s0_derivatives_series<S: Scalar>(t: &ABTables, x_offset: f64, p: &PhasePoint<S>, hbar: S, mu: f64) -> [S; 3] {
    let xs = p.x - x_offset;
    let (mut s1, mut s2, mut s3) = (Sum::new(), Sum::new(), Sum::new());
    for n in 0..=t.truncation.0 as i64 {
        let (mut l1, mut l2, mut l3) = (Sum::new(), Sum::new(), Sum::new());
        for k in 0..=t.truncation.1 as i64 {
            let (nf, kf) = (n as f64, k as f64);
            let (a, b) = (t.a(n, k), t.b(n, k));
            let (a1, b1) = (t.a(n, k + 1), t.b(n, k + 1));
            let (a2, b2) = (t.a(n, k + 2), t.b(n, k + 2));
            let m = 3.0 * nf + 2.0 * kf;
            let d = 3 * n + 2 * k;
            let e = n + k;
            l1.add(a, || mono(p, xs, k, e, 0, 0, 0, d - 1));
            l1.add(b, || mono(p, xs, k, e - 2, 1, 0, 0, d - 2));

            l2.add((kf + 1.0) * a1 - (m - 1.0) * a, || mono(p, xs, k, e + 1, 0, 0, 0, d + 1));
            l2.add((nf + kf) * a - (m - 2.0) * b + (kf + 1.0) * b1, || mono(p, xs, k, e - 1, 1, 0, 0, d));
            l2.add((nf + kf - 2.0) * b, || mono(p, xs, k, e - 3, 2, 0, 0, d - 1));
            l2.add(b, || mono(p, xs, k, e - 2, 0, 1, 0, d - 1));

            let q = nf * nf * 6.0 + 4.0 * kf * kf + 10.0 * nf * kf;
            l3.add(
                (m - 1.0) * (m + 1.0) * a - 2.0 * (kf + 1.0) * (m + 1.0) * a1 + (kf + 1.0) * (kf + 2.0) * a2,
                || mono(p, xs, k, e + 2, 0, 0, 0, d + 3),
            );
            l3.add(
                -(q + 2.0 * nf + kf - 1.0) * a + m * (m - 2.0) * b + 2.0 * (kf + 1.0) * (nf + kf + 1.0) * a1
                    - 2.0 * (kf + 1.0) * m * b1
                    + (kf + 1.0) * (kf + 2.0) * b2,
                || mono(p, xs, k, e, 1, 0, 0, d + 2),
            );
            l3.add(
                (nf + kf) * (nf + kf - 1.0) * a - (q - 12.0 * nf - 9.0 * kf + 4.0) * b
                    + 2.0 * (kf + 1.0) * (nf + kf - 1.0) * b1,
                || mono(p, xs, k, e - 2, 2, 0, 0, d + 1),
            );
            l3.add((nf + kf - 2.0) * (nf + kf - 3.0) * b, || mono(p, xs, k, e - 4, 3, 0, 0, d));
            l3.add((nf + kf) * a - (6.0 * nf + 4.0 * kf - 3.0) * b + 2.0 * (kf + 1.0) * b1, || {
                mono(p, xs, k, e - 1, 0, 1, 0, d + 1)
            });
            l3.add(3.0 * (nf + kf - 2.0) * b, || mono(p, xs, k, e - 3, 1, 1, 0, d));
            l3.add(b, || mono(p, xs, k, e - 2, 0, 0, 1, d));
        }
        let pref = level_prefactor(hbar, mu, n);
        s1.add_scaled(pref, l1);
        s2.add_scaled(pref, l2);
        s3.add_scaled(pref, l3);
    }
    [s1.finish(p.xd), s2.finish(p.xd), s3.finish(p.xd)]
}

/// The five groups of the master relation, whose sum vanishes when the
/// lattice reproduces the quantum Hamilton–Jacobi equation:
/// `ẋS'³`, `−S'⁴/2μ`, `(ħ²/4μ)(3/2)S''²`, `−(ħ²/4μ)S'S'''`, `−S'²T`.
pub fn master_terms<S: Scalar>(c: &KineticCoefficients, t: &ABTables, p: &PhasePoint<S>, hbar: S, mu: f64) -> [S; 5] {
    let [s1, s2, s3] = s0_derivatives_series(t, c.x_offset, p, hbar, mu);
    let q = hbar * hbar / (4.0 * mu);
    let s1sq = s1 * s1;
    [
        p.xd * s1sq * s1,
        -(s1sq * s1sq) / (2.0 * mu),
        q * s2 * s2 * 1.5,
        -(q * s1 * s3),
        -(s1sq * kinetic(c, p, hbar, mu)),
    ]
}

/// Evaluates `T` on a time jet (order ≥ 3).
pub fn eval_kinetic(c: &KineticCoefficients, j: &Jet, s: SeriesScale) -> Result<f64> {
    let p = PhasePoint::from_jet(j, 3)?;
    Ok(kinetic(c, &p, s.hbar, s.mu))
}

/// Evaluates `T + (λ/2)x⃛² − V(x)` on a time jet (order ≥ 3).
pub fn eval_lagrangian_series(
    c: &KineticCoefficients,
    j: &Jet,
    s: SeriesScale,
    lambda: f64,
    potential: &PotentialModel,
) -> Result<f64> {
    let p = PhasePoint::from_jet(j, 3)?;
    Ok(lagrangian(c, &p, s.hbar, s.mu, lambda, potential))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumTriple {
    pub p: f64,
    pub pi: f64,
    pub xi: f64,
}

/// Closed-form `(P, Π, Ξ)` on a time jet (order ≥ 5).
pub fn series_momenta(c: &KineticCoefficients, j: &Jet, s: SeriesScale, lambda: f64) -> Result<MomentumTriple> {
    let p = PhasePoint::from_jet(j, 5)?;
    let [pp, pi, xi] = momenta_series(c, &p, s.hbar, s.mu, lambda);
    Ok(MomentumTriple { p: pp, pi, xi })
}

/// `(dS₀/dx, d²S₀/dx², d³S₀/dx³)` on a time jet (order ≥ 5).
pub fn ds0dx_series(c: &KineticCoefficients, j: &Jet, s: SeriesScale) -> Result<[f64; 3]> {
    let p = PhasePoint::from_jet(j, 5)?;
    Ok(s0_derivatives_series(&ab_tables(c), c.x_offset, &p, s.hbar, s.mu))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MasterResidual {
    /// left side minus right side
    pub value: f64,
    /// sum of the magnitudes of the five groups
    pub scale: f64,
}

impl MasterResidual {
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            self.value.abs()
        } else {
            self.value.abs() / self.scale
        }
    }
}

/// Master relation on a time jet (order ≥ 5).
pub fn master_residual(c: &KineticCoefficients, j: &Jet, s: SeriesScale) -> Result<MasterResidual> {
    let p = PhasePoint::from_jet(j, 5)?;
    let terms = master_terms(c, &ab_tables(c), &p, s.hbar, s.mu);
    Ok(MasterResidual { value: terms.iter().sum(), scale: terms.iter().map(|t| t.abs()).sum() })
}

/// The master relation split into its `ħ`-levels `0..=max_level`: entry
/// `n` holds the coefficient of `ħⁿ` and the magnitude sum of its groups.
/// The relation is an identity in `ħ`, so every level must vanish
/// separately; levels untouched by the lattice come out exactly zero.
pub fn master_level_residuals(
    c: &KineticCoefficients,
    j: &Jet,
    mu: f64,
    max_level: u32,
) -> Result<Vec<MasterResidual>> {
    if max_level as usize > MAX_ORDER {
        return Err(Error::Contract(format!("max_level {max_level} exceeds {MAX_ORDER}")));
    }
    let p = PhasePoint::from_jet(j, 5)?;
    let t = ab_tables(c);
    Ok((0..=max_level)
        .map(|n| {
            let (value, scale) = level_value(c, &t, &p, n, mu);
            MasterResidual { value, scale }
        })
        .collect())
}

/// Seeded source of random time jets of order 6: `ẋ` uniform on
/// `[−2, −0.5] ∪ [0.5, 2]`, every other component uniform on `[−1, 1]`.
#[derive(Debug, Clone)]
pub struct JetSampler {
    rng: ChaCha8Rng,
}

impl JetSampler {
    pub fn new(seed: u64) -> Self {
        JetSampler { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn sample(&mut self) -> Jet {
        let mut d = [0.0; MAX_ORDER + 1];
        for (m, v) in d.iter_mut().enumerate() {
            *v = if m == 1 {
                let mag = self.rng.gen_range(0.5..=2.0);
                if self.rng.gen_bool(0.5) {
                    mag
                } else {
                    -mag
                }
            } else {
                self.rng.gen_range(-1.0..=1.0)
            };
        }
        Jet::from_derivs(&d)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Outcome of one `ħ`-level of the determination.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelReport {
    pub level: u32,
    pub unknowns: usize,
    pub samples: usize,
    pub rank: usize,
    /// Solved values before snapping, `(family, k, value)`.
    pub solved: Vec<(Family, u32, f64)>,
    /// Largest relative residual of the level equation with the snapped values on fresh jets.
    pub check_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Level0Roots {
    /// Roots of the remaining quadratic for `α₀₀` (ascending).
    pub roots: Vec<f64>,
    pub selected: f64,
    pub rule: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeterminationReport {
    pub coefficients: KineticCoefficients,
    pub level0: Option<Level0Roots>,
    pub levels: Vec<LevelReport>,
}

/// Highest level the determination accepts.
pub const MAX_LEVEL: u32 = 4;

const SAMPLE_FACTOR: usize = 4;
const RANK_TOL: f64 = 1e-9;
const CHECK_TOL: f64 = 1e-9;

/// Recovers the lattice from the master relation, one `ħ`-level at a time.
///
/// Level 0 mirrors the hand elimination: the `x⃛²` part forces
/// `∂(dS₀/dx)/∂x⃛ ≡ 0`, the `x⃛` part then forces the `β₀ₖ` (and with them
/// `α₀ₖ`, `k ≥ 2`) to vanish, and what remains is a quadratic in
/// `(α₀₀, α₀₁)`. Its monomial weights are solved for, `α₀₁ = 0` is read off
/// the pure `α₀₁²` weight, and both roots for `α₀₀` are reported; the
/// nonzero one is kept because the other has no classical limit.
///
/// Every higher level is affine in its own unknowns once the lower levels
/// are fixed, and is solved as a least-squares system over random jets.
pub fn determine_coefficients(
    levels: u32,
    truncation: (u32, u32),
    sampler: &mut JetSampler,
) -> Result<DeterminationReport> {
    if levels > MAX_LEVEL {
        return Err(Error::Contract(format!("levels must be <= {MAX_LEVEL}, got {levels}")));
    }
    if truncation.1 < 2 {
        return Err(Error::Contract("k truncation must be at least 2".into()));
    }
    let trunc = (truncation.0.max(levels), truncation.1);
    let mut coeffs = KineticCoefficients::zero(trunc);
    let mut report = DeterminationReport { coefficients: coeffs.clone(), level0: None, levels: Vec::new() };
    let (lvl0, roots) = determine_level0(&mut coeffs, sampler)?;
    report.level0 = Some(roots);
    report.levels.push(lvl0);
    for n in 1..=levels {
        let r = determine_level(&mut coeffs, n, sampler)?;
        report.levels.push(r);
    }
    report.coefficients = coeffs;
    Ok(report)
}

fn unknowns(trunc: (u32, u32)) -> Vec<(Family, u32)> {
    let mut v = Vec::new();
    for fam in [Family::Alpha, Family::Beta] {
        for k in 0..=trunc.1 {
            v.push((fam, k));
        }
    }
    v
}

fn with_level(base: &KineticCoefficients, n: u32, u: &[(Family, u32)], vals: &[f64]) -> KineticCoefficients {
    let mut c = base.clone();
    for (&(fam, k), &v) in u.iter().zip(vals) {
        c.set_coefficient(fam, n, k, v).expect("inside truncation");
    }
    c
}

/// Level-0 bracket `ẋS' − S'²/2μ − T` at `ħ = 0`, with `μ = 1`.
fn classical_bracket(c: &KineticCoefficients, p: &PhasePoint<f64>) -> f64 {
    let t = ab_tables(c);
    let s1 = s0_derivatives_series(&t, c.x_offset, p, 0.0, 1.0)[0];
    p.xd * s1 - 0.5 * s1 * s1 - kinetic(c, p, 0.0, 1.0)
}

fn ds0_at_zero_hbar(c: &KineticCoefficients, p: &PhasePoint<f64>) -> f64 {
    s0_derivatives_series(&ab_tables(c), c.x_offset, p, 0.0, 1.0)[0]
}

fn null_space(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let cols = m.ncols();
    let scaled = normalize_rows(m);
    // SVD of an m×n matrix with m >= n gives all right singular vectors
    let svd = scaled.clone().svd(false, true);
    let vt = svd.v_t.ok_or_else(|| Error::Determination("SVD failed".into()))?;
    let smax = svd.singular_values.max();
    let mut basis = Vec::new();
    for i in 0..cols {
        let s = if i < svd.singular_values.len() { svd.singular_values[i] } else { 0.0 };
        if s <= RANK_TOL * smax.max(1e-300) {
            basis.push(vt.row(i).transpose());
        }
    }
    Ok(if basis.is_empty() { DMatrix::zeros(cols, 0) } else { DMatrix::from_columns(&basis) })
}

fn normalize_rows(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        let s = row.amax();
        if s > 0.0 {
            row /= s;
        }
    }
    out
}

/// Reduced row echelon form (partial pivoting); returns the matrix and pivot columns.
fn rref(m: &DMatrix<f64>, tol: f64) -> (DMatrix<f64>, Vec<usize>) {
    let mut a = m.clone();
    let (rows, cols) = a.shape();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let (best, val) =
            (r..rows).map(|i| (i, a[(i, c)].abs())).fold((r, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= tol {
            continue;
        }
        a.swap_rows(r, best);
        let pv = a[(r, c)];
        for j in 0..cols {
            a[(r, j)] /= pv;
        }
        for i in 0..rows {
            if i != r {
                let f = a[(i, c)];
                if f != 0.0 {
                    for j in 0..cols {
                        a[(i, j)] -= f * a[(r, j)];
                    }
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    for v in a.iter_mut() {
        if v.abs() <= tol {
            *v = 0.0;
        }
    }
    (a, pivots)
}

fn snap(v: f64) -> f64 {
    if v.abs() < 1e-9 {
        return 0.0;
    }
    for den in 1..=64u32 {
        let num = (v * den as f64).round();
        if (num / den as f64 - v).abs() < 1e-9 {
            return num / den as f64;
        }
    }
    v
}

fn determine_level0(coeffs: &mut KineticCoefficients, sampler: &mut JetSampler) -> Result<(LevelReport, Level0Roots)> {
    let u = unknowns(coeffs.truncation);
    let nu = u.len();
    let rows = SAMPLE_FACTOR * nu;
    let jets: Vec<PhasePoint<f64>> =
        (0..rows).map(|_| PhasePoint::from_jet(&sampler.sample(), 5)).collect::<Result<_>>()?;
    let probe = |vals: &[f64]| with_level(coeffs, 0, &u, vals);
    let unit = |i: usize| {
        let mut v = vec![0.0; nu];
        v[i] = 1.0;
        v
    };

    // 1. the x⃛² weight is −(1/2)(∂S'/∂x⃛)², so ∂S'/∂x⃛ must vanish identically
    let mut g = DMatrix::zeros(rows, nu);
    for (r, p) in jets.iter().enumerate() {
        let mut p1 = *p;
        p1.xddd = 1.0;
        let mut p0 = *p;
        p0.xddd = 0.0;
        for i in 0..nu {
            let c = probe(&unit(i));
            g[(r, i)] = ds0_at_zero_hbar(&c, &p1) - ds0_at_zero_hbar(&c, &p0);
        }
    }
    let n1 = null_space(&g)?;

    // 2. on that subspace the x⃛ weight of the bracket must vanish
    let k1 = n1.ncols();
    let mut h = DMatrix::zeros(rows, k1);
    for (r, p) in jets.iter().enumerate() {
        for j in 0..k1 {
            let vals: Vec<f64> = n1.column(j).iter().copied().collect();
            let c = probe(&vals);
            let (mut pp, mut pm) = (*p, *p);
            pp.xddd = 1.0;
            pm.xddd = -1.0;
            // S' no longer depends on x⃛, so the bracket is affine in it
            h[(r, j)] = 0.5 * (classical_bracket(&c, &pp) - classical_bracket(&c, &pm));
        }
    }
    let n2 = &n1 * null_space(&h)?;
    if n2.ncols() == 0 {
        return Err(Error::Determination("level 0 admits only the zero lattice".into()));
    }

    // the surviving directions must be plain coordinates
    let (basis, _) = rref(&n2.transpose(), 1e-8);
    let mut free = Vec::new();
    for row in basis.row_iter() {
        let nz: Vec<usize> = (0..nu).filter(|&i| row[i].abs() > 1e-8).collect();
        if nz.is_empty() {
            continue;
        }
        if nz.len() != 1 {
            return Err(Error::Determination(format!(
                "level-0 constraints leave a mixed direction {:?}",
                row.iter().collect::<Vec<_>>()
            )));
        }
        free.push(nz[0]);
    }
    let names: Vec<(Family, u32)> = free.iter().map(|&i| u[i]).collect();
    if names != [(Family::Alpha, 0), (Family::Alpha, 1)] {
        return Err(Error::Determination(format!("unexpected free level-0 coordinates {names:?}")));
    }

    // 3. the bracket is quadratic in (z₀, z₁) = (α₀₀, α₀₁); monomial weights
    //    [z₁², z₀z₁, z₁, z₀², z₀] are recovered by exact polynomial probing
    let at = |z0: f64, z1: f64, p: &PhasePoint<f64>| {
        let mut vals = vec![0.0; nu];
        vals[free[0]] = z0;
        vals[free[1]] = z1;
        let mut q = *p;
        q.xddd = 0.0;
        classical_bracket(&probe(&vals), &q)
    };
    let mut w = DMatrix::zeros(rows, 5);
    for (r, p) in jets.iter().enumerate() {
        let f0p = at(1.0, 0.0, p);
        let f0m = at(-1.0, 0.0, p);
        let f1p = at(0.0, 1.0, p);
        let f1m = at(0.0, -1.0, p);
        let f11 = at(1.0, 1.0, p);
        let z0sq = 0.5 * (f0p + f0m);
        let z0 = 0.5 * (f0p - f0m);
        let z1sq = 0.5 * (f1p + f1m);
        let z1 = 0.5 * (f1p - f1m);
        let cross = f11 - z0sq - z0 - z1sq - z1;
        w[(r, 0)] = z1sq;
        w[(r, 1)] = cross;
        w[(r, 2)] = z1;
        w[(r, 3)] = z0sq;
        w[(r, 4)] = z0;
    }
    // independent monomials in the jet variables give independent equations
    // on the weights; their row space is what the identity imposes
    let wn = normalize_rows(&w);
    let svd = wn.clone().svd(false, true);
    let vt = svd.v_t.ok_or_else(|| Error::Determination("SVD failed".into()))?;
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > RANK_TOL * smax).count();
    let eqs = vt.rows(0, rank).into_owned();
    let (eqs, pivots) = rref(&eqs, 1e-8);
    // a row reading "z₁² = 0" forces α₀₁ = 0
    let pure_z1sq = (0..eqs.nrows()).any(|r| pivots.get(r) == Some(&0) && (1..5).all(|c| eqs[(r, c)].abs() <= 1e-8));
    if !pure_z1sq {
        return Err(Error::Determination("level 0 does not force alpha01 = 0".into()));
    }
    // with z₁ = 0 only columns z₀², z₀ remain: c₂z₀² + c₁z₀ = 0 on every row
    let reduced: Vec<(f64, f64)> = (0..eqs.nrows())
        .map(|r| (eqs[(r, 3)], eqs[(r, 4)]))
        .filter(|(a, b)| a.abs() > 1e-8 || b.abs() > 1e-8)
        .collect();
    let (c2, c1) = *reduced
        .iter()
        .max_by(|x, y| x.0.abs().total_cmp(&y.0.abs()))
        .ok_or_else(|| Error::Determination("no equation constrains alpha00".into()))?;
    if c2.abs() <= 1e-8 {
        return Err(Error::Determination("alpha00 equation is not quadratic".into()));
    }
    let mut roots = vec![0.0, snap(-c1 / c2)];
    roots.sort_by(f64::total_cmp);
    for &(a, b) in &reduced {
        for &z in &roots {
            if (a * z * z + b * z).abs() > 1e-8 {
                return Err(Error::Determination("alpha00 equations are inconsistent".into()));
            }
        }
    }
    let selected = roots
        .iter()
        .copied()
        .find(|&r| r != 0.0)
        .ok_or_else(|| Error::Determination("only the trivial root alpha00 = 0".into()))?;

    let mut vals = vec![0.0; nu];
    vals[free[0]] = selected;
    *coeffs = with_level(coeffs, 0, &u, &vals);

    // certify the chosen lattice at level 0 on fresh jets
    let mut worst = 0.0f64;
    for _ in 0..rows {
        let p = PhasePoint::from_jet(&sampler.sample(), 5)?;
        let b = classical_bracket(coeffs, &p);
        worst = worst.max(b.abs() / (p.xd * p.xd));
    }
    if worst > CHECK_TOL {
        return Err(Error::Determination(format!("level 0 check residual {worst:e}")));
    }
    let solved = u.iter().zip(&vals).map(|(&(f, k), &v)| (f, k, v)).collect();
    Ok((
        LevelReport {
            level: 0,
            unknowns: nu,
            samples: rows,
            rank: rank + (nu - k1) + (k1 - n2.ncols()),
            solved,
            check_residual: worst,
        },
        Level0Roots {
            roots,
            selected,
            rule: "alpha00 = 0 is the trivial solution without classical limit; keep the nonzero root".into(),
        },
    ))
}

/// `ħⁿ` coefficient of the master relation and its term scale.
fn level_value(c: &KineticCoefficients, t: &ABTables, p: &PhasePoint<f64>, n: u32, mu: f64) -> (f64, f64) {
    let order = n as usize;
    let hbar = if order == 0 { Jet::constant(0.0, 0) } else { Jet::variable(0.0, order) };
    let pj: PhasePoint<Jet> = p.lift();
    let pj = PhasePoint {
        x: pj.x.truncate(order),
        xd: pj.xd.truncate(order),
        xdd: pj.xdd.truncate(order),
        xddd: pj.xddd.truncate(order),
        x4: pj.x4.truncate(order),
        x5: pj.x5.truncate(order),
    };
    let terms = master_terms(c, t, &pj, hbar, mu);
    let fact: f64 = (1..=order).map(|i| i as f64).product();
    let vals: Vec<f64> = terms.iter().map(|j| j.deriv(order) / fact).collect();
    (vals.iter().sum(), vals.iter().map(|v| v.abs()).sum())
}

fn determine_level(coeffs: &mut KineticCoefficients, n: u32, sampler: &mut JetSampler) -> Result<LevelReport> {
    let u = unknowns(coeffs.truncation);
    let nu = u.len();
    let rows = SAMPLE_FACTOR * nu;
    let jets: Vec<PhasePoint<f64>> =
        (0..rows).map(|_| PhasePoint::from_jet(&sampler.sample(), 5)).collect::<Result<_>>()?;
    let eval = |vals: &[f64], p: &PhasePoint<f64>| {
        let c = with_level(coeffs, n, &u, vals);
        level_value(&c, &ab_tables(&c), p, n, 1.0).0
    };
    let mut m = DMatrix::zeros(rows, nu);
    let mut rhs = DVector::zeros(rows);
    for (r, p) in jets.iter().enumerate() {
        let base = eval(&vec![0.0; nu], p);
        rhs[r] = -base;
        for i in 0..nu {
            let mut v = vec![0.0; nu];
            v[i] = 1.0;
            m[(r, i)] = eval(&v, p) - base;
        }
        let s = m.row(r).amax().max(rhs[r].abs());
        if s > 0.0 {
            for i in 0..nu {
                m[(r, i)] /= s;
            }
            rhs[r] /= s;
        }
    }
    let colscale: Vec<f64> = (0..nu).map(|i| m.column(i).amax().max(1e-300)).collect();
    for (i, s) in colscale.iter().enumerate() {
        m.column_mut(i).scale_mut(1.0 / s);
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > RANK_TOL * smax).count();
    if rank < nu {
        return Err(Error::Sampling(format!("level {n}: sampled system has rank {rank} < {nu}; resample")));
    }
    let sol = svd.solve(&rhs, 0.0).map_err(|e| Error::Determination(format!("level {n}: {e}")))?;
    let fit = (&m * &sol - &rhs).amax();
    if fit > 1e-8 {
        return Err(Error::Determination(format!(
            "level {n}: no lattice satisfies the sampled equations (misfit {fit:e})"
        )));
    }
    let raw: Vec<f64> = (0..nu).map(|i| sol[i] / colscale[i]).collect();
    let snapped: Vec<f64> = raw.iter().map(|&v| snap(v)).collect();
    *coeffs = with_level(coeffs, n, &u, &snapped);

    let t = ab_tables(coeffs);
    let mut worst = 0.0f64;
    for _ in 0..rows {
        let p = PhasePoint::from_jet(&sampler.sample(), 5)?;
        let (v, s) = level_value(coeffs, &t, &p, n, 1.0);
        worst = worst.max(if s > 0.0 { v.abs() / s } else { v.abs() });
    }
    if worst > CHECK_TOL {
        return Err(Error::Determination(format!("level {n} check residual {worst:e}")));
    }
    Ok(LevelReport {
        level: n,
        unknowns: nu,
        samples: rows,
        rank,
        solved: u.iter().zip(&raw).map(|(&(f, k), &v)| (f, k, v)).collect(),
        check_residual: worst,
    })
}
