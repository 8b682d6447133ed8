//! Bracketed bisection for monotone scalar equations.

use crate::error::{PricingError, Result};

/// Finds a root of an increasing function `f` on `[lo, hi]` with
/// `f(lo) <= 0 <= f(hi)`, stopping once `|f(mid)| <= tolerance`.
///
/// Returns `NonConvergence` with the smallest residual seen when the iteration
/// budget runs out or the bracket collapses to adjacent floats first.
pub fn bisect_increasing<F>(f: F, lo: f64, hi: f64, tolerance: f64, max_iterations: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(lo <= hi) {
        return Err(PricingError::InvalidArgument(format!("empty bracket [{lo}, {hi}]")));
    }
    let (f_lo, f_hi) = (f(lo), f(hi));
    if f_lo.abs() <= tolerance {
        return Ok(lo);
    }
    if f_hi.abs() <= tolerance {
        return Ok(hi);
    }
    if !(f_lo < 0.0 && f_hi > 0.0) {
        return Err(PricingError::InvalidArgument(format!(
            "bracket [{lo}, {hi}] does not straddle a root: f(lo) = {f_lo}, f(hi) = {f_hi}"
        )));
    }

    let (mut lo, mut hi) = (lo, hi);
    let mut best = (f_lo.abs(), lo);
    if f_hi.abs() < best.0 {
        best = (f_hi.abs(), hi);
    }
    for _ in 0..max_iterations {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let value = f(mid);
        if value.abs() <= tolerance {
            return Ok(mid);
        }
        if value.abs() < best.0 {
            best = (value.abs(), mid);
        }
        if value < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(PricingError::NonConvergence {
        iterations: max_iterations,
        residual: best.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_cube_root() {
        let r = bisect_increasing(|x| x * x * x - 2.0, 0.0, 2.0, 1e-12, 200).unwrap();
        assert!((r * r * r - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn accepts_root_on_endpoint() {
        assert_eq!(bisect_increasing(|x| x, 0.0, 1.0, 1e-12, 10).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_bracket() {
        assert!(bisect_increasing(|x| x - 5.0, 0.0, 1.0, 1e-12, 10).is_err());
        assert!(bisect_increasing(|x| x, 1.0, 0.0, 1e-12, 10).is_err());
    }

    #[test]
    fn reports_residual_when_budget_exhausted() {
        match bisect_increasing(|x| x - 0.3, 0.0, 1.0, 1e-15, 3) {
            Err(PricingError::NonConvergence { iterations, residual }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 0.0 && residual < 0.1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
