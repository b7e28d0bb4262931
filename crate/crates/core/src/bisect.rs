//! Bracketing root finder shared by the attempt-probability and
//! service-rate fixed points.

use crate::error::{Error, Result};

/// Default iteration cap for every bisection in the crate.
pub const MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Bisection on `[lo, hi]` where `f(lo)` and `f(hi)` have opposite signs.
///
/// The bracket is halved until it collapses to adjacent floating point
/// values (or an exact zero is hit), so the returned point is as accurate as
/// `f` allows. The result is accepted only if `|f(x)| < tol`.
pub fn bisect<F>(f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Result<Root>
where
    F: Fn(f64) -> f64,
{
    bisect_inspect(f, lo, hi, tol, max_iter, |_, _, _, _| {})
}

/// Same as [`bisect`], calling `inspect(lo, f(lo), hi, f(hi))` on every
/// bracket visited.
pub fn bisect_inspect<F, G>(
    f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    max_iter: usize,
    mut inspect: G,
) -> Result<Root>
where
    F: Fn(f64) -> f64,
    G: FnMut(f64, f64, f64, f64),
{
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", format!("must be > 0, got {tol}")));
    }
    if !(lo < hi) {
        return Err(Error::invalid("bracket", format!("[{lo}, {hi}] is empty")));
    }
    let mut f_lo = f(lo);
    let mut f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(Root { x: lo, residual: 0.0, iterations: 0 });
    }
    if f_hi == 0.0 {
        return Ok(Root { x: hi, residual: 0.0, iterations: 0 });
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::invalid(
            "bracket",
            format!("f({lo}) = {f_lo:e} and f({hi}) = {f_hi:e} share a sign"),
        ));
    }

    for iterations in 1..=max_iter {
        inspect(lo, f_lo, hi, f_hi);
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            // bracket is down to neighbouring doubles
            let (x, residual) = if f_lo.abs() <= f_hi.abs() { (lo, f_lo) } else { (hi, f_hi) };
            return accept(x, residual, tol, iterations);
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(Root { x: mid, residual: 0.0, iterations });
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }
    let (_, residual) = if f_lo.abs() <= f_hi.abs() { (lo, f_lo) } else { (hi, f_hi) };
    Err(Error::NoConvergence { iterations: max_iter, residual: residual.abs() })
}

fn accept(x: f64, residual: f64, tol: f64, iterations: usize) -> Result<Root> {
    if residual.abs() < tol {
        Ok(Root { x, residual, iterations })
    } else {
        Err(Error::NoConvergence { iterations, residual: residual.abs() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-12, MAX_ITERATIONS).unwrap();
        assert!((r.x - std::f64::consts::SQRT_2).abs() < 1e-15);
        assert!(r.iterations < 70);
    }

    #[test]
    fn bracket_keeps_opposite_signs() {
        let mut visited = 0;
        bisect_inspect(|x| x.cos() - x, 0.0, 1.0, 1e-14, MAX_ITERATIONS, |_, flo, _, fhi| {
            visited += 1;
            assert!(flo * fhi < 0.0);
        })
        .unwrap();
        assert!(visited > 40);
    }

    #[test]
    fn rejects_same_sign_bracket() {
        assert!(matches!(
            bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12, MAX_ITERATIONS),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn iteration_cap_is_reported() {
        let err = bisect(|x| x - 0.3, 0.0, 1.0, 1e-12, 5).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { iterations: 5, .. }));
    }

    #[test]
    fn unreachable_tolerance_is_an_error() {
        // step function: the residual never drops below 1
        let err = bisect(|x| if x < 0.5 { -1.0 } else { 1.0 }, 0.0, 1.0, 1e-3, MAX_ITERATIONS);
        assert!(matches!(err, Err(Error::NoConvergence { .. })));
    }
}
