//! Bracketed inversion of scalar functions (Brent's method: inverse quadratic
//! interpolation and secant steps, falling back to bisection, never leaving
//! the bracket).

use crate::error::{Error, Result};

/// Finds `x` in `[lo, hi]` with `f(x) = target`.
///
/// Stops when the bracket half-width falls below `tol·max(1, |x|)`, or earlier
/// once `|f(x) - target| <= tol·max(1, |target|)` and the bracket is already
/// narrower than `sqrt(tol)`.
pub fn invert_monotone<F>(mut f: F, target: f64, bracket: (f64, f64), tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if !(tol > 0.0) {
        return Err(Error::Contract(format!("tolerance must be positive, got {tol}")));
    }
    let (mut a, mut b) = bracket;
    if !(a.is_finite() && b.is_finite()) || a == b {
        return Err(Error::Contract(format!("degenerate bracket ({a}, {b})")));
    }
    let mut fa = f(a) - target;
    let mut fb = f(b) - target;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        let (lo, hi) = bracket;
        return Err(Error::Bracket { lo, hi, flo: fa, fhi: fb });
    }
    let scale = target.abs().max(1.0);

    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol * b.abs().max(1.0);
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 || (fb.abs() <= tol * scale && xm.abs() <= tol.sqrt()) {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b) - target;
        if !fb.is_finite() {
            return Err(Error::Domain(format!("function not finite at {b}")));
        }
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_root_of_eight() {
        let x = invert_monotone(|x| x * x * x, 8.0, (0.0, 3.0), 1e-12).unwrap();
        assert!((x - 2.0).abs() < 1e-11);
    }

    #[test]
    fn flat_zero_of_x_minus_sin() {
        let x = invert_monotone(|x| x - x.sin(), 0.0, (-1.0, 1.0), 1e-12).unwrap();
        assert!(x.abs() < 1e-4, "{x}");
        assert!((x - x.sin()).abs() < 1e-12);
    }

    #[test]
    fn free_particle_time_equation_inverts_at_pi() {
        // a = 2, b = 0, k = 1: 2.5 x - 0.75 sin 2x; target is its value at pi
        let rhs = |x: f64| 2.5 * x - 0.75 * (2.0 * x).sin();
        let target = 2.0 * 5.0 * std::f64::consts::PI / 4.0;
        let x = invert_monotone(rhs, target, (0.0, 4.0), 1e-13).unwrap();
        assert!((x - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn no_sign_change_is_bracket_error() {
        let r = invert_monotone(|x| x * x, -1.0, (0.0, 1.0), 1e-10);
        assert!(matches!(r, Err(Error::Bracket { .. })));
    }

    #[test]
    fn decreasing_functions_work() {
        let x = invert_monotone(|x| -x.exp(), -2.0, (0.0, 2.0), 1e-13).unwrap();
        assert!((x - 2f64.ln()).abs() < 1e-12);
    }
}
