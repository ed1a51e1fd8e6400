//! Finite-horizon discrete-time LQR by backward Riccati recursion.
//!
//! Tracks a fixed goal state: stage cost
//! `0.5 (x - xf)' Q (x - xf) + 0.5 u' R u`, terminal cost
//! `0.5 (x - xf)' Qf (x - xf)`, dynamics `x_{k+1} = A x_k + B u_k`.
//! The value function is propagated as `V_k(x) = 0.5 x' P_k x + p_k' x + c`,
//! and the optimal sequence is recovered by rolling the closed-loop policy
//! forward from `x0`.

use nalgebra::{DMatrix, DVector};

pub struct LqrProblem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub qf: DMatrix<f64>,
    pub goal: DVector<f64>,
    pub x0: DVector<f64>,
    pub horizon: usize,
}

pub struct LqrSolution {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    /// Costates `p_k + P_k x_k` of the optimal trajectory, one per step
    /// `k = 1..=horizon`, i.e. the gradient of the value function at each
    /// visited state after the first.
    pub costates: Vec<DVector<f64>>,
    pub cost: f64,
}

pub fn solve_lqr(p: &LqrProblem) -> LqrSolution {
    let t = p.horizon;
    let mut big_p = p.qf.clone();
    let mut small_p = -(&p.qf * &p.goal);
    let mut gains = Vec::with_capacity(t);
    let mut feeds = Vec::with_capacity(t);
    for _ in 0..t {
        let quu = &p.r + p.b.transpose() * &big_p * &p.b;
        let qux = p.b.transpose() * &big_p * &p.a;
        let quu_inv = quu
            .clone()
            .try_inverse()
            .expect("Quu must be invertible for a well-posed LQR instance");
        let k_mat = -(&quu_inv * &qux);
        let d = -(&quu_inv * (p.b.transpose() * &small_p));
        let acl = &p.a + &p.b * &k_mat;
        let new_p = &p.q
            + k_mat.transpose() * &p.r * &k_mat
            + acl.transpose() * &big_p * &acl;
        let new_small = -(&p.q * &p.goal)
            + k_mat.transpose() * (&p.r * &d)
            + acl.transpose() * (&big_p * (&p.b * &d))
            + acl.transpose() * &small_p;
        gains.push(k_mat);
        feeds.push(d);
        big_p = new_p;
        small_p = new_small;
        // Symmetrize to suppress drift over long horizons.
        big_p = (&big_p + big_p.transpose()) * 0.5;
    }
    gains.reverse();
    feeds.reverse();

    // Re-run the recursion storing per-step value coefficients for costates.
    let mut p_seq = vec![p.qf.clone()];
    let mut s_seq = vec![-(&p.qf * &p.goal)];
    for _ in 0..t {
        let big_p = p_seq.last().unwrap();
        let small_p = s_seq.last().unwrap();
        let quu = &p.r + p.b.transpose() * big_p * &p.b;
        let qux = p.b.transpose() * big_p * &p.a;
        let quu_inv = quu.clone().try_inverse().unwrap();
        let k_mat = -(&quu_inv * &qux);
        let d = -(&quu_inv * (p.b.transpose() * small_p));
        let acl = &p.a + &p.b * &k_mat;
        let mut new_p = &p.q + k_mat.transpose() * &p.r * &k_mat + acl.transpose() * big_p * &acl;
        let new_small = -(&p.q * &p.goal)
            + k_mat.transpose() * (&p.r * &d)
            + acl.transpose() * (big_p * (&p.b * &d))
            + acl.transpose() * small_p;
        new_p = (&new_p + new_p.transpose()) * 0.5;
        p_seq.push(new_p);
        s_seq.push(new_small);
    }
    p_seq.reverse(); // p_seq[k] is now the value coefficient at step k
    s_seq.reverse();

    let mut states = vec![p.x0.clone()];
    let mut controls = Vec::with_capacity(t);
    let mut cost = 0.0;
    for k in 0..t {
        let u = &gains[k] * &states[k] + &feeds[k];
        let dx = &states[k] - &p.goal;
        cost += 0.5 * (&p.q * &dx).dot(&dx) + 0.5 * (&p.r * &u).dot(&u);
        let next = &p.a * &states[k] + &p.b * &u;
        states.push(next);
        controls.push(u);
    }
    let dxt = states.last().unwrap() - &p.goal;
    cost += 0.5 * (&p.qf * &dxt).dot(&dxt);

    let costates = (1..=t)
        .map(|k| &p_seq[k] * &states[k] + &s_seq[k])
        .collect();

    LqrSolution {
        states,
        controls,
        costates,
        cost,
    }
}
