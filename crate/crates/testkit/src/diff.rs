//! A minimal central-difference Jacobian, kept separate from the library's
//! own helpers so derivative checks do not lean on the code they judge.

use nalgebra::{DMatrix, DVector};

pub fn central_jacobian(
    f: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
    rel: f64,
) -> DMatrix<f64> {
    let rows = f(x).len();
    let mut out = DMatrix::zeros(rows, x.len());
    for i in 0..x.len() {
        let h = rel * (1.0 + x[i].abs());
        let mut xp = x.clone();
        xp[i] += h;
        let fp = f(&xp);
        let mut xm = x.clone();
        xm[i] -= h;
        let fm = f(&xm);
        for r in 0..rows {
            out[(r, i)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    out
}
