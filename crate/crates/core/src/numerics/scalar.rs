//! Number types that Lagrangians, potentials and the kinetic series are
//! written against, so one formula can be evaluated on plain floats, on time
//! jets, or on jets carrying a perturbation channel.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::jet::{Jet, MAX_ORDER};

pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn constant(v: f64) -> Self;
    /// The plain value (constant term).
    fn value(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn atan(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn powf(self, p: f64) -> Self;
}

impl Scalar for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn atan(self) -> Self {
        f64::atan(self)
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            1.0
        } else {
            f64::powi(self, n)
        }
    }
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
}

impl Scalar for Jet {
    /// Constants carry the maximal order so mixing them with any jet
    /// truncates to that jet's order.
    fn constant(v: f64) -> Self {
        Jet::constant(v, MAX_ORDER)
    }
    fn value(&self) -> f64 {
        Jet::value(self)
    }
    fn sin(self) -> Self {
        Jet::sin(self)
    }
    fn cos(self) -> Self {
        Jet::cos(self)
    }
    fn exp(self) -> Self {
        Jet::exp(self)
    }
    fn ln(self) -> Self {
        Jet::ln(self)
    }
    fn sqrt(self) -> Self {
        Jet::sqrt(self)
    }
    fn atan(self) -> Self {
        Jet::atan(self)
    }
    fn powi(self, n: i32) -> Self {
        Jet::powi(self, n)
    }
    fn powf(self, p: f64) -> Self {
        Jet::powf(self, p)
    }
}

/// First-order perturbation over an underlying scalar: `re + eps·ε`, `ε² = 0`.
///
/// With `T = Jet` this gives partial derivatives that are themselves jets in
/// time, which is what total derivatives like `d/dt ∂L/∂ẍ` need.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Scalar> Dual<T> {
    pub fn new(re: T, eps: T) -> Self {
        Dual { re, eps }
    }

    /// A value with zero perturbation.
    pub fn passive(re: T) -> Self {
        Dual { re, eps: re * 0.0 }
    }

    /// A value seeded with unit perturbation.
    pub fn seeded(re: T) -> Self {
        Dual { re, eps: re * 0.0 + 1.0 }
    }

    fn chain(self, f: T, df: T) -> Self {
        Dual { re: f, eps: df * self.eps }
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    fn add(self, r: Self) -> Self {
        Dual::new(self.re + r.re, self.eps + r.eps)
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, r: Self) -> Self {
        Dual::new(self.re - r.re, self.eps - r.eps)
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, r: Self) -> Self {
        Dual::new(self.re * r.re, self.re * r.eps + self.eps * r.re)
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    fn div(self, r: Self) -> Self {
        let q = self.re / r.re;
        Dual::new(q, (self.eps - q * r.eps) / r.re)
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.eps)
    }
}

impl<T: Scalar> Add<f64> for Dual<T> {
    type Output = Self;
    fn add(self, r: f64) -> Self {
        Dual::new(self.re + r, self.eps)
    }
}

impl<T: Scalar> Sub<f64> for Dual<T> {
    type Output = Self;
    fn sub(self, r: f64) -> Self {
        Dual::new(self.re - r, self.eps)
    }
}

impl<T: Scalar> Mul<f64> for Dual<T> {
    type Output = Self;
    fn mul(self, r: f64) -> Self {
        Dual::new(self.re * r, self.eps * r)
    }
}

impl<T: Scalar> Div<f64> for Dual<T> {
    type Output = Self;
    fn div(self, r: f64) -> Self {
        Dual::new(self.re / r, self.eps / r)
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    fn constant(v: f64) -> Self {
        Dual::passive(T::constant(v))
    }
    fn value(&self) -> f64 {
        self.re.value()
    }
    fn sin(self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.re.ln(), T::constant(1.0) / self.re)
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, T::constant(0.5) / s)
    }
    fn atan(self) -> Self {
        self.chain(self.re.atan(), T::constant(1.0) / (self.re * self.re + 1.0))
    }
    fn powi(self, n: i32) -> Self {
        match n {
            0 => Dual::new(self.re.powi(0), self.eps * 0.0),
            _ => self.chain(self.re.powi(n), self.re.powi(n - 1) * n as f64),
        }
    }
    fn powf(self, p: f64) -> Self {
        self.chain(self.re.powf(p), self.re.powf(p - 1.0) * p)
    }
}
