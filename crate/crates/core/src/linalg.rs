//! Fixed-point iteration for linear systems `x = rhs + K x` with `‖K‖ < 1`.

use crate::error::{Error, Result};

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Iteration budget for a contraction with modulus `c`: enough sweeps to
/// shrink an O(n) initial error below `tol`, plus slack.
pub(crate) fn iteration_budget(c: f64, tol: f64, n: usize) -> usize {
    if c <= 0.0 {
        50
    } else if c < 1.0 {
        ((tol / n.max(1) as f64).ln() / c.ln()).ceil().max(0.0) as usize + 50
    } else {
        10_000
    }
}

#[derive(Debug)]
pub(crate) struct Solved {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `‖rhs + K x − x‖_∞` at the returned `x`.
    pub residual: f64,
}

/// Jacobi/Neumann iteration `x ← rhs + K x` from `x₀ = rhs` until the
/// max-norm change is at most `tol`. `apply(x, out)` writes `K x`.
pub(crate) fn neumann(
    rhs: &[f64],
    apply: impl Fn(&[f64], &mut [f64]),
    tol: f64,
    max_iter: usize,
    what: &'static str,
) -> Result<Solved> {
    let n = rhs.len();
    let mut x = rhs.to_vec();
    let mut kx = vec![0.0; n];
    let mut change = f64::INFINITY;
    for it in 1..=max_iter {
        apply(&x, &mut kx);
        change = 0.0;
        for ((xi, k), r) in x.iter_mut().zip(&kx).zip(rhs) {
            let next = r + k;
            change = change.max((next - *xi).abs());
            *xi = next;
        }
        if !change.is_finite() {
            break;
        }
        if change <= tol {
            apply(&x, &mut kx);
            let residual = x
                .iter()
                .zip(&kx)
                .zip(rhs)
                .map(|((xi, k), r)| (r + k - xi).abs())
                .fold(0.0, f64::max);
            return Ok(Solved {
                x,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NoConvergence {
        what,
        iterations: max_iter,
        change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_a_diagonal_system() {
        // x = [1, 2] + diag(0.5, 0.25) x
        let s = neumann(&[1.0, 2.0], |x, out| {
            out[0] = 0.5 * x[0];
            out[1] = 0.25 * x[1];
        }, 1e-12, 200, "test")
        .unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-11);
        assert!((s.x[1] - 8.0 / 3.0).abs() < 1e-11);
        assert!(s.residual <= 1e-12);
    }

    #[test]
    fn reports_divergence() {
        let err = neumann(&[1.0], |x, out| out[0] = 1.5 * x[0], 1e-10, 100, "test").unwrap_err();
        assert!(matches!(err, Error::NoConvergence { iterations: 100, .. }));
    }

    #[test]
    fn budget() {
        assert_eq!(iteration_budget(2.0, 1e-10, 10), 10_000);
        assert_eq!(iteration_budget(0.0, 1e-10, 10), 50);
        // 0.5^k ≤ 1e-11 needs k = 37
        assert_eq!(iteration_budget(0.5, 1e-10, 10), 37 + 50);
    }
}
