//! Truncated Taylor jets.
//!
//! A [`Jet`] holds the raw derivatives `x, x', x'', ..., x^(m)` of a scalar
//! function at one point, up to [`MAX_ORDER`]. Arithmetic is performed on the
//! factorial-scaled Taylor coefficients internally and converted back, so every
//! result is exact to the retained order (up to floating-point rounding).

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Highest derivative order a jet can carry.
pub const MAX_ORDER: usize = 6;
const LEN: usize = MAX_ORDER + 1;

const FACTORIAL: [f64; LEN] = [1.0, 1.0, 2.0, 6.0, 24.0, 120.0, 720.0];

/// Raw derivatives of a scalar function at a point.
#[derive(Clone, Copy, PartialEq)]
pub struct Jet {
    order: usize,
    d: [f64; LEN],
}

/// Elementary operations accepted by [`jet_apply`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JetOp {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Atan,
    Powi(i32),
    Powf(f64),
}

impl JetOp {
    fn arity(self) -> usize {
        match self {
            JetOp::Add | JetOp::Sub | JetOp::Mul | JetOp::Div => 2,
            _ => 1,
        }
    }
}

/// Applies an elementary operation to one or two jets of equal order.
///
/// Unlike the operator overloads (which truncate to the smaller order and let
/// IEEE arithmetic propagate infinities), this entry point checks orders and
/// domains and reports violations.
pub fn jet_apply(op: JetOp, operands: &[Jet]) -> Result<Jet> {
    if operands.len() != op.arity() {
        return Err(Error::Contract(format!("{op:?} takes {} operand(s), got {}", op.arity(), operands.len())));
    }
    if operands.len() == 2 && operands[0].order != operands[1].order {
        return Err(Error::Contract(format!("operand orders differ ({} vs {})", operands[0].order, operands[1].order)));
    }
    let a = operands[0];
    let a0 = a.value();
    let out = match op {
        JetOp::Add => a + operands[1],
        JetOp::Sub => a - operands[1],
        JetOp::Mul => a * operands[1],
        JetOp::Div => {
            if operands[1].value() == 0.0 {
                return Err(Error::Domain("division by a jet with zero constant term".into()));
            }
            a / operands[1]
        }
        JetOp::Neg => -a,
        JetOp::Sin => a.sin(),
        JetOp::Cos => a.cos(),
        JetOp::Exp => a.exp(),
        JetOp::Ln => {
            if a0 <= 0.0 {
                return Err(Error::Domain(format!("ln of jet with constant term {a0}")));
            }
            a.ln()
        }
        JetOp::Sqrt => {
            if a0 < 0.0 || (a0 == 0.0 && a.order > 0) {
                return Err(Error::Domain(format!("sqrt of jet with constant term {a0}")));
            }
            a.sqrt()
        }
        JetOp::Atan => a.atan(),
        JetOp::Powi(n) => {
            if n < 0 && a0 == 0.0 {
                return Err(Error::Domain("negative power of a jet with zero constant term".into()));
            }
            a.powi(n)
        }
        JetOp::Powf(p) => {
            if a0 <= 0.0 && !(a0 == 0.0 && a.order == 0 && p >= 0.0) {
                return Err(Error::Domain(format!("real power {p} of jet with constant term {a0}")));
            }
            a.powf(p)
        }
    };
    if out.derivs().iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("{op:?} produced a non-finite jet")));
    }
    Ok(out)
}

impl Jet {
    /// Builds a jet from raw derivatives `[x, x', ..., x^(order)]`.
    pub fn new(derivs: &[f64]) -> Result<Self> {
        if derivs.is_empty() || derivs.len() > LEN {
            return Err(Error::Contract(format!("jet needs 1..={LEN} derivatives, got {}", derivs.len())));
        }
        if derivs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("jet derivatives must be finite".into()));
        }
        let mut d = [0.0; LEN];
        d[..derivs.len()].copy_from_slice(derivs);
        Ok(Jet { order: derivs.len() - 1, d })
    }

    /// Same as [`Jet::new`] but panics on bad input; handy for literals.
    pub fn from_derivs(derivs: &[f64]) -> Self {
        Self::new(derivs).expect("invalid jet literal")
    }

    /// A constant of the given order.
    pub fn constant(value: f64, order: usize) -> Self {
        let mut d = [0.0; LEN];
        d[0] = value;
        Jet { order: order.min(MAX_ORDER), d }
    }

    /// The independent variable itself, expanded at `value`.
    pub fn variable(value: f64, order: usize) -> Self {
        let mut j = Self::constant(value, order);
        if j.order >= 1 {
            j.d[1] = 1.0;
        }
        j
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn value(&self) -> f64 {
        self.d[0]
    }

    /// Raw derivative of order `m`; zero beyond the retained order.
    pub fn deriv(&self, m: usize) -> f64 {
        if m <= self.order {
            self.d[m]
        } else {
            0.0
        }
    }

    pub fn derivs(&self) -> &[f64] {
        &self.d[..=self.order]
    }

    pub fn truncate(&self, order: usize) -> Self {
        let order = order.min(self.order);
        let mut d = [0.0; LEN];
        d[..=order].copy_from_slice(&self.d[..=order]);
        Jet { order, d }
    }

    /// Jet of the first derivative: `(x', x'', ..., x^(order))`, one order lower.
    /// A zero-order jet differentiates to the zero constant.
    pub fn differentiate(&self) -> Self {
        if self.order == 0 {
            return Jet::constant(0.0, 0);
        }
        let mut d = [0.0; LEN];
        d[..self.order].copy_from_slice(&self.d[1..=self.order]);
        Jet { order: self.order - 1, d }
    }

    /// Factorial-scaled Taylor coefficients `x^(m)/m!`.
    pub fn taylor(&self) -> Vec<f64> {
        (0..=self.order).map(|m| self.d[m] / FACTORIAL[m]).collect()
    }

    fn from_taylor(order: usize, t: &[f64; LEN]) -> Self {
        let mut d = [0.0; LEN];
        for m in 0..=order {
            d[m] = t[m] * FACTORIAL[m];
        }
        Jet { order, d }
    }

    fn tc(&self) -> [f64; LEN] {
        let mut t = [0.0; LEN];
        for m in 0..=self.order {
            t[m] = self.d[m] / FACTORIAL[m];
        }
        t
    }

    fn map_scalar(self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self;
        for v in out.d.iter_mut().take(self.order + 1) {
            *v = f(*v);
        }
        out
    }

    pub fn scale(self, s: f64) -> Self {
        self.map_scalar(|v| v * s)
    }

    pub fn recip(self) -> Self {
        Jet::constant(1.0, self.order) / self
    }

    pub fn exp(self) -> Self {
        let n = self.order;
        let a = self.tc();
        let mut c = [0.0; LEN];
        c[0] = a[0].exp();
        for m in 1..=n {
            let s: f64 = (1..=m).map(|i| i as f64 * a[i] * c[m - i]).sum();
            c[m] = s / m as f64;
        }
        Jet::from_taylor(n, &c)
    }

    pub fn ln(self) -> Self {
        let n = self.order;
        let a = self.tc();
        let mut c = [0.0; LEN];
        c[0] = a[0].ln();
        for m in 1..=n {
            let s: f64 = (1..m).map(|i| i as f64 * c[i] * a[m - i]).sum();
            c[m] = (a[m] - s / m as f64) / a[0];
        }
        Jet::from_taylor(n, &c)
    }

    /// Sine and cosine together (their recurrences are coupled).
    pub fn sin_cos(self) -> (Self, Self) {
        let n = self.order;
        let a = self.tc();
        let mut s = [0.0; LEN];
        let mut c = [0.0; LEN];
        s[0] = a[0].sin();
        c[0] = a[0].cos();
        for m in 1..=n {
            let mut ss = 0.0;
            let mut cs = 0.0;
            for i in 1..=m {
                ss += i as f64 * a[i] * c[m - i];
                cs += i as f64 * a[i] * s[m - i];
            }
            s[m] = ss / m as f64;
            c[m] = -cs / m as f64;
        }
        (Jet::from_taylor(n, &s), Jet::from_taylor(n, &c))
    }

    pub fn sin(self) -> Self {
        self.sin_cos().0
    }

    pub fn cos(self) -> Self {
        self.sin_cos().1
    }

    pub fn sqrt(self) -> Self {
        let n = self.order;
        let a = self.tc();
        let mut c = [0.0; LEN];
        c[0] = a[0].sqrt();
        for m in 1..=n {
            let s: f64 = (1..m).map(|i| c[i] * c[m - i]).sum();
            c[m] = (a[m] - s) / (2.0 * c[0]);
        }
        Jet::from_taylor(n, &c)
    }

    /// `self^p` for real `p`; the constant term must be positive unless `p` is
    /// a non-negative integer (use [`Jet::powi`] for those).
    pub fn powf(self, p: f64) -> Self {
        let n = self.order;
        let a = self.tc();
        let mut c = [0.0; LEN];
        c[0] = a[0].powf(p);
        for m in 1..=n {
            let s: f64 = (1..=m).map(|i| ((p + 1.0) * i as f64 - m as f64) * a[i] * c[m - i]).sum();
            c[m] = s / (m as f64 * a[0]);
        }
        Jet::from_taylor(n, &c)
    }

    /// Integer power by repeated squaring; `x^0` is the constant one even when
    /// `x` vanishes.
    pub fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Jet::constant(1.0, self.order);
        }
        let mut base = self;
        let mut e = n.unsigned_abs();
        let mut acc = Jet::constant(1.0, self.order);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            e >>= 1;
            if e > 0 {
                base = base * base;
            }
        }
        if n < 0 {
            acc.recip()
        } else {
            acc
        }
    }

    pub fn atan(self) -> Self {
        // c' (1 + a^2) = a'
        let n = self.order;
        let a = self.tc();
        let sq = self * self;
        let mut den = sq.tc();
        den[0] += 1.0;
        let mut c = [0.0; LEN];
        c[0] = a[0].atan();
        for m in 1..=n {
            let s: f64 = (1..m).map(|i| i as f64 * c[i] * den[m - i]).sum();
            c[m] = (m as f64 * a[m] - s) / (m as f64 * den[0]);
        }
        Jet::from_taylor(n, &c)
    }

    /// Chain rule: given the derivatives `outer = (f, f', f'', ...)` of a
    /// scalar function at `inner.value()`, returns the jet of `f(inner)`.
    pub fn compose(outer: &Jet, inner: &Jet) -> Jet {
        let n = outer.order.min(inner.order);
        let f = outer.tc();
        let mut delta = inner.truncate(n);
        delta.d[0] = 0.0;
        let mut acc = Jet::constant(f[0], n);
        let mut power = Jet::constant(1.0, n);
        for fk in f.iter().take(n + 1).skip(1) {
            power = power * delta;
            acc = acc + power.scale(*fk);
        }
        acc
    }

    /// Time jet of a solution of the explicit ODE `x^(q) = f(x, ẋ, ..., x^(q-1))`
    /// through the initial values `initial = (x, ẋ, ..., x^(q-1))`.
    ///
    /// `f` receives the `q` slot jets, all of one common order, and must
    /// return a jet of at least that order. Each call extends the solution
    /// by one derivative.
    pub fn from_ode<F>(initial: &[f64], order: usize, mut f: F) -> Result<Jet>
    where
        F: FnMut(&[Jet]) -> Result<Jet>,
    {
        let q = initial.len();
        if q == 0 || order > MAX_ORDER {
            return Err(Error::Contract(format!(
                "ODE jet needs 1..={MAX_ORDER} order and initial values, got order {order} with {q}"
            )));
        }
        let mut d = initial.to_vec();
        while d.len() <= order {
            let len = d.len();
            let slots: Vec<Jet> = (0..q).map(|r| Jet::from_derivs(&d[r..=r + len - q])).collect();
            let out = f(&slots)?;
            if out.order() < len - q {
                return Err(Error::Contract("ODE right-hand side lost jet order".into()));
            }
            d.push(out.deriv(len - q));
        }
        d.truncate(order + 1);
        Ok(Jet::from_derivs(&d))
    }
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Jet{:?}", self.derivs())
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        let n = self.order.min(rhs.order);
        let mut d = [0.0; LEN];
        for m in 0..=n {
            d[m] = self.d[m] + rhs.d[m];
        }
        Jet { order: n, d }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        let n = self.order.min(rhs.order);
        let mut d = [0.0; LEN];
        for m in 0..=n {
            d[m] = self.d[m] - rhs.d[m];
        }
        Jet { order: n, d }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let n = self.order.min(rhs.order);
        let a = self.tc();
        let b = rhs.tc();
        let mut c = [0.0; LEN];
        for m in 0..=n {
            c[m] = (0..=m).map(|i| a[i] * b[m - i]).sum();
        }
        Jet::from_taylor(n, &c)
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, rhs: Jet) -> Jet {
        let n = self.order.min(rhs.order);
        let a = self.tc();
        let b = rhs.tc();
        let mut c = [0.0; LEN];
        for m in 0..=n {
            let s: f64 = (1..=m).map(|i| b[i] * c[m - i]).sum();
            c[m] = (a[m] - s) / b[0];
        }
        Jet::from_taylor(n, &c)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.map_scalar(|v| -v)
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.d[0] += rhs;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: f64) -> Jet {
        self.d[0] -= rhs;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, rhs: f64) -> Jet {
        self.map_scalar(|v| v / rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_jet(j: Jet, expected: &[f64], tol: f64) {
        assert_eq!(j.order() + 1, expected.len(), "{j:?}");
        for (m, (a, b)) in j.derivs().iter().zip(expected).enumerate() {
            assert!((a - b).abs() <= tol, "derivative {m}: {a} vs {b} in {j:?}");
        }
    }

    #[test]
    fn ode_jet_of_oscillator_and_exponential() {
        let j = Jet::from_ode(&[1.0, 0.0], 6, |s| Ok(-s[0])).unwrap();
        assert_jet(j, &[1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0], 1e-15);
        let e = Jet::from_ode(&[2.0], 4, |s| Ok(s[0] * 3.0)).unwrap();
        assert_jet(e, &[2.0, 6.0, 18.0, 54.0, 162.0], 1e-12);
        // ẋ = x² from x = 1 is 1/(1 − t): derivatives m!
        let r = Jet::from_ode(&[1.0], 5, |s| Ok(s[0] * s[0])).unwrap();
        assert_jet(r, &[1.0, 1.0, 2.0, 6.0, 24.0, 120.0], 1e-12);
    }

    #[test]
    fn square_of_one_plus_t() {
        let a = Jet::from_derivs(&[1.0, 1.0, 0.0]);
        let r = jet_apply(JetOp::Mul, &[a, a]).unwrap();
        assert_jet(r, &[1.0, 2.0, 2.0], 1e-15);
    }

    #[test]
    fn sine_of_identity() {
        let t = Jet::from_derivs(&[0.0, 1.0, 0.0, 0.0]);
        let r = jet_apply(JetOp::Sin, &[t]).unwrap();
        assert_jet(r, &[0.0, 1.0, 0.0, -1.0], 1e-15);
    }

    #[test]
    fn reciprocal_of_one_plus_t() {
        // 1/(1+t) = 1 - t + t^2 - ... ; raw derivatives (1, -1, 2)
        let one = Jet::from_derivs(&[1.0, 0.0, 0.0]);
        let den = Jet::from_derivs(&[1.0, 1.0, 0.0]);
        let r = jet_apply(JetOp::Div, &[one, den]).unwrap();
        assert_jet(r, &[1.0, -1.0, 2.0], 1e-15);
    }

    #[test]
    fn division_by_zero_constant_is_domain_error() {
        let one = Jet::from_derivs(&[1.0, 0.0]);
        let den = Jet::from_derivs(&[0.0, 1.0]);
        assert!(matches!(jet_apply(JetOp::Div, &[one, den]), Err(Error::Domain(_))));
    }

    #[test]
    fn order_mismatch_is_contract_error() {
        let a = Jet::from_derivs(&[1.0, 0.0]);
        let b = Jet::from_derivs(&[1.0, 0.0, 0.0]);
        assert!(matches!(jet_apply(JetOp::Add, &[a, b]), Err(Error::Contract(_))));
        // operator overloads truncate instead
        assert_eq!((a + b).order(), 1);
    }

    #[test]
    fn sqrt_and_ln_domains() {
        let neg = Jet::from_derivs(&[-1.0, 1.0]);
        assert!(jet_apply(JetOp::Sqrt, &[neg]).is_err());
        assert!(jet_apply(JetOp::Ln, &[neg]).is_err());
        let zero = Jet::from_derivs(&[0.0, 1.0]);
        assert!(jet_apply(JetOp::Powf(0.5), &[zero]).is_err());
        assert!(jet_apply(JetOp::Powi(-2), &[zero]).is_err());
        assert!(jet_apply(JetOp::Powi(2), &[zero]).is_ok());
    }

    #[test]
    fn zero_power_is_one_even_at_zero() {
        let z = Jet::from_derivs(&[0.0, 1.0, 0.0]);
        assert_jet(z.powi(0), &[1.0, 0.0, 0.0], 0.0);
    }

    #[test]
    fn exp_ln_and_powers_of_t() {
        let t = Jet::variable(0.0, 6);
        let e = t.exp();
        assert_jet(e, &[1.0; 7], 1e-14);
        let l = (t + 1.0).ln();
        // d^m/dt^m ln(1+t) at 0 = (-1)^(m-1) (m-1)!
        assert_jet(l, &[0.0, 1.0, -1.0, 2.0, -6.0, 24.0, -120.0], 1e-12);
        let p = (t + 1.0).powf(0.5);
        let q = (t + 1.0).sqrt();
        for m in 0..=6 {
            assert!((p.deriv(m) - q.deriv(m)).abs() < 1e-12);
        }
        let cube = (t + 2.0).powi(3);
        assert_jet(cube, &[8.0, 12.0, 12.0, 6.0, 0.0, 0.0, 0.0], 1e-12);
        let inv = (t + 2.0).powi(-1);
        assert!((inv.deriv(2) - 2.0 / 8.0).abs() < 1e-14);
    }

    #[test]
    fn atan_derivatives() {
        // d/dt atan t = 1/(1+t^2); at 0 the jet is (0, 1, 0, -2, 0, 24, 0)
        let t = Jet::variable(0.0, 6);
        assert_jet(t.atan(), &[0.0, 1.0, 0.0, -2.0, 0.0, 24.0, 0.0], 1e-12);
    }

    #[test]
    fn composition_matches_direct_evaluation() {
        let t = Jet::variable(0.3, 5);
        let inner = (t * t + 0.5).sin();
        let x0 = inner.value();
        // f = exp, derivatives all equal exp(x0)
        let outer = Jet::from_derivs(&[x0.exp(); 6]);
        let composed = Jet::compose(&outer, &inner);
        let direct = inner.exp();
        for m in 0..=5 {
            assert!((composed.deriv(m) - direct.deriv(m)).abs() < 1e-12);
        }
    }

    #[test]
    fn differentiate_shifts() {
        let j = Jet::from_derivs(&[1.0, 2.0, 3.0]);
        assert_eq!(j.differentiate().derivs(), &[2.0, 3.0]);
        assert_eq!(Jet::constant(4.0, 0).differentiate().derivs(), &[0.0]);
    }
}
