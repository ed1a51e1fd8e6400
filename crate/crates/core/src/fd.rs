//! Central finite differences used for Jacobian fallbacks, cost expansions of
//! non-quadratic costs, and the separability audit.

use nalgebra::{DMatrix, DVector};

/// Per-coordinate step `rel * (1 + |x_i|)`.
fn step(rel: f64, xi: f64) -> f64 {
    rel * (1.0 + xi.abs())
}

/// Gradient of a scalar function by central differences.
pub fn gradient(f: &dyn Fn(&DVector<f64>) -> f64, x: &DVector<f64>, rel: f64) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let h = step(rel, x[i]);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Jacobian of a vector function by central differences, one column per input.
pub fn jacobian(
    f: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
    rel: f64,
) -> DMatrix<f64> {
    let rows = f(x).len();
    let mut jac = DMatrix::zeros(rows, x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let h = step(rel, x[i]);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        for r in 0..rows {
            jac[(r, i)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    jac
}

/// Hessian of a scalar function by differencing the central gradient, then
/// symmetrizing. Uses a larger default step than first derivatives because the
/// error of nested differences grows as h^-2.
pub fn hessian(f: &dyn Fn(&DVector<f64>) -> f64, x: &DVector<f64>, rel: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut hess = DMatrix::zeros(n, n);
    let mut xp = x.clone();
    for i in 0..n {
        let h = step(rel, x[i]);
        xp[i] = x[i] + h;
        let gp = gradient(f, &xp, rel);
        xp[i] = x[i] - h;
        let gm = gradient(f, &xp, rel);
        xp[i] = x[i];
        for j in 0..n {
            hess[(i, j)] = (gp[j] - gm[j]) / (2.0 * h);
        }
    }
    // Symmetrize in place; the two difference orders agree only up to truncation error.
    let ht = hess.transpose();
    (hess + ht) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gradient_of_quadratic_is_exact_to_truncation() {
        let f = |x: &DVector<f64>| 0.5 * x.dot(x) + 3.0 * x[0];
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let g = gradient(&f, &x, 1e-6);
        assert_relative_eq!(g[0], x[0] + 3.0, epsilon = 1e-8);
        assert_relative_eq!(g[1], x[1], epsilon = 1e-8);
        assert_relative_eq!(g[2], x[2], epsilon = 1e-8);
    }

    #[test]
    fn jacobian_matches_analytic_for_trig_map() {
        let f = |x: &DVector<f64>| {
            DVector::from_vec(vec![x[0].sin() * x[1], x[0].cos() + x[1] * x[1]])
        };
        let x = DVector::from_vec(vec![0.7, -1.3]);
        let jac = jacobian(&f, &x, 1e-6);
        assert_relative_eq!(jac[(0, 0)], x[0].cos() * x[1], epsilon = 1e-8);
        assert_relative_eq!(jac[(0, 1)], x[0].sin(), epsilon = 1e-8);
        assert_relative_eq!(jac[(1, 0)], -x[0].sin(), epsilon = 1e-8);
        assert_relative_eq!(jac[(1, 1)], 2.0 * x[1], epsilon = 1e-8);
    }

    #[test]
    fn hessian_of_quartic_is_symmetric_and_close() {
        let f = |x: &DVector<f64>| x[0].powi(4) + x[0] * x[1] + x[1] * x[1];
        let x = DVector::from_vec(vec![0.9, 0.4]);
        let h = hessian(&f, &x, 1e-4);
        assert_relative_eq!(h[(0, 0)], 12.0 * x[0] * x[0], max_relative = 1e-4);
        assert_relative_eq!(h[(0, 1)], 1.0, epsilon = 1e-4);
        assert_relative_eq!(h[(0, 1)], h[(1, 0)], epsilon = 1e-12);
        assert_relative_eq!(h[(1, 1)], 2.0, max_relative = 1e-4);
    }
}
