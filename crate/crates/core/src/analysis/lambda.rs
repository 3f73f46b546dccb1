//! The certified decay rate: the positive root of `λ − a₁ + a₂ e^{λτ} = 0`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaStar {
    pub value: f64,
    pub a1: f64,
    pub a2: f64,
    pub delay: f64,
    /// `|λ − a₁ + a₂ e^{λτ}|` at the returned value.
    pub residual: f64,
}

#[inline]
fn root_fn(lambda: f64, a1: f64, a2: f64, delay: f64) -> f64 {
    lambda - a1 + a2 * (lambda * delay).exp()
}

/// Solve for `λ* ∈ (0, a₁ − a₂]`.
///
/// The root is found as the zero of `φ(λ) = ln a₂ + λτ − ln(a₁ − λ)`, which
/// is increasing and convex on `[0, a₁)` with `φ(0) < 0 ≤ φ(a₁ − a₂)`, so
/// Newton's method from the right end of the bracket decreases
/// monotonically onto the root with no overflow for large `λτ`. Steps that
/// leave the bracket fall back to bisection. `a₂ = 0` is accepted and gives
/// `λ* = a₁`.
pub fn solve_lambda_star(a1: f64, a2: f64, delay: f64) -> Result<LambdaStar> {
    if !a1.is_finite() || !a2.is_finite() || !delay.is_finite() {
        return Err(Error::invalid("a1", "rates and delay must be finite"));
    }
    if a2 < 0.0 {
        return Err(Error::invalid("a2", format!("a2 must be nonnegative, got {a2}")));
    }
    if !(a1 > a2) {
        return Err(Error::invalid(
            "a1",
            format!("need a1 > a2 for a positive root, got a1={a1}, a2={a2}"),
        ));
    }
    if delay < 0.0 {
        return Err(Error::invalid("delay", format!("τ must be nonnegative, got {delay}")));
    }
    let finish = |value: f64| LambdaStar {
        value,
        a1,
        a2,
        delay,
        residual: root_fn(value, a1, a2, delay).abs(),
    };
    if a2 == 0.0 {
        return Ok(finish(a1));
    }
    if delay == 0.0 {
        return Ok(finish(a1 - a2));
    }

    let ln_a2 = a2.ln();
    let phi = |x: f64| ln_a2 + x * delay - (a1 - x).ln();
    let (mut lo, mut hi) = (0.0f64, a1 - a2);
    let mut x = hi;
    for _ in 0..200 {
        let p = phi(x);
        if p == 0.0 {
            break;
        }
        if p < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - p / (delay + 1.0 / (a1 - x));
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next == x || hi - lo <= f64::EPSILON * hi {
            break;
        }
        x = next;
    }
    // Pick the better of the final iterate and its neighbours in the bracket.
    let best = [x, lo, hi]
        .into_iter()
        .filter(|v| *v > 0.0)
        .min_by(|a, b| {
            root_fn(*a, a1, a2, delay)
                .abs()
                .total_cmp(&root_fn(*b, a1, a2, delay).abs())
        })
        .unwrap_or(x);
    Ok(finish(best))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bisection(a1: f64, a2: f64, delay: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, a1 - a2);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if root_fn(mid, a1, a2, delay) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn zero_delay_is_closed_form() {
        let l = solve_lambda_star(2.0, 1.0, 0.0).unwrap();
        assert_eq!(l.value, 1.0);
    }

    #[test]
    fn unit_delay_matches_bisection() {
        let l = solve_lambda_star(2.0, 1.0, 1.0).unwrap();
        let oracle = bisection(2.0, 1.0, 1.0);
        assert!((l.value - oracle).abs() < 1e-10);
        assert!((l.value - 0.44285).abs() < 1e-5, "{}", l.value);
        assert!(l.residual < 1e-12);
    }

    #[test]
    fn vanishing_delay_coupling() {
        let l = solve_lambda_star(3.0, 1e-12, 5.0).unwrap();
        assert!((l.value - bisection(3.0, 1e-12, 5.0)).abs() < 1e-12);
        // The delay term is e^{15}·10⁻¹² ≈ 3.3·10⁻⁶, which is the offset from a₁.
        assert!((l.value - 3.0).abs() < 4e-6);
        assert!(l.residual < 1e-12);
        assert_eq!(solve_lambda_star(3.0, 0.0, 5.0).unwrap().value, 3.0);
    }

    #[test]
    fn rejects_no_positive_root() {
        assert!(solve_lambda_star(1.0, 1.0, 1.0).is_err());
        assert!(solve_lambda_star(1.0, 2.0, 1.0).is_err());
        assert!(solve_lambda_star(2.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn huge_delay_does_not_overflow() {
        let l = solve_lambda_star(50.0, 1.0, 100.0).unwrap();
        assert!(l.value > 0.0 && l.value < 49.0);
        assert!(l.residual < 1e-12, "residual {}", l.residual);
    }
}
