//! Bracketing scalar root finder (Brent–Dekker).

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RootError {
    #[error("no sign change on [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("function returned a non-finite value at x = {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Upper bound on iterations; bisection alone would need ~1100 steps to
/// exhaust the f64 range.
pub const MAX_ITERATIONS: usize = 200;

/// Finds a root of `f` on `[lo, hi]` to absolute tolerance `tol` in `x`.
///
/// Uses inverse quadratic interpolation or the secant step when they stay
/// inside the bracket and shrink it fast enough, and bisection otherwise.
/// `f` is never evaluated outside `[lo, hi]`.
pub fn brent_root<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<Root, RootError>
where
    F: FnMut(f64) -> f64,
{
    let mut evaluations = 0;
    let mut eval = |x: f64| -> Result<f64, RootError> {
        evaluations += 1;
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(RootError::NonFinite(x))
        }
    };

    let (mut a, mut b) = (lo, hi);
    let mut fa = eval(a)?;
    if fa == 0.0 {
        return Ok(Root { x: a, fx: 0.0, iterations: 0, evaluations: 1 });
    }
    let mut fb = eval(b)?;
    if fb == 0.0 {
        return Ok(Root { x: b, fx: 0.0, iterations: 0, evaluations: 2 });
    }
    if fa.signum() == fb.signum() {
        return Err(RootError::NoSignChange { lo, hi, f_lo: fa, f_hi: fb });
    }

    let tol = tol.max(0.0);
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;

    for iteration in 1..=MAX_ITERATIONS {
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
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(Root { x: b, fx: fb, iterations: iteration, evaluations });
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                // secant
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                // inverse quadratic interpolation
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
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
        // keep the iterate inside the original interval despite rounding
        b = b.clamp(lo.min(hi), lo.max(hi));
        fb = eval(b)?;
    }
    Ok(Root { x: b, fx: fb, iterations: MAX_ITERATIONS, evaluations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::cell::Cell;

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let f_lo = f(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) > 0.0) == (f_lo > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn linear_root() {
        let r = brent_root(|x| x - 0.5, 0.0, 1.0, 1e-12).unwrap();
        assert_abs_diff_eq!(r.x, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn classical_cubic_matches_bisection() {
        let f = |x: f64| x * x * x - 2.0 * x - 5.0;
        let oracle = bisect(f, 2.0, 3.0);
        assert_abs_diff_eq!(oracle, 2.094_551_481_542_327, epsilon = 1e-12);
        let r = brent_root(f, 2.0, 3.0, 1e-12).unwrap();
        assert_abs_diff_eq!(r.x, oracle, epsilon = 1e-9);
        assert!(r.iterations < 20);
    }

    #[test]
    fn endpoint_root_returns_immediately() {
        let r = brent_root(|x| x, 0.0, 1.0, 1e-12).unwrap();
        assert_eq!(r.x, 0.0);
        assert_eq!(r.evaluations, 1);
        let r = brent_root(|x| x - 1.0, 0.0, 1.0, 1e-12).unwrap();
        assert_eq!(r.x, 1.0);
    }

    #[test]
    fn missing_bracket_is_an_error() {
        assert!(matches!(brent_root(|x| x * x + 1.0, -1.0, 1.0, 1e-9), Err(RootError::NoSignChange { .. })));
        assert!(matches!(
            brent_root(|x| if x > 0.5 { f64::NAN } else { -1.0 }, 0.0, 1.0, 1e-9),
            Err(RootError::NonFinite(_))
        ));
    }

    #[test]
    fn step_function_terminates_inside_bracket() {
        let seen = Cell::new((f64::INFINITY, f64::NEG_INFINITY));
        let r = brent_root(
            |x| {
                let (a, b) = seen.get();
                seen.set((a.min(x), b.max(x)));
                if x < 0.3 {
                    -1.0
                } else {
                    1.0
                }
            },
            0.0,
            1.0,
            1e-10,
        )
        .unwrap();
        assert_abs_diff_eq!(r.x, 0.3, epsilon = 1e-9);
        let (a, b) = seen.get();
        assert!(a >= 0.0 && b <= 1.0);
    }

    proptest::proptest! {
        #[test]
        fn never_leaves_the_bracket(root in -5.0f64..5.0, scale in 0.1f64..10.0, cubic in 0.0f64..2.0) {
            let lo = -6.0;
            let hi = 6.0;
            let (min_x, max_x) = (Cell::new(f64::INFINITY), Cell::new(f64::NEG_INFINITY));
            let f = |x: f64| {
                min_x.set(min_x.get().min(x));
                max_x.set(max_x.get().max(x));
                scale * (x - root) + cubic * (x - root).powi(3)
            };
            let r = brent_root(f, lo, hi, 1e-12).unwrap();
            proptest::prop_assert!((r.x - root).abs() < 1e-9);
            proptest::prop_assert!(min_x.get() >= lo && max_x.get() <= hi);
            proptest::prop_assert!(r.iterations <= MAX_ITERATIONS);
        }
    }
}
