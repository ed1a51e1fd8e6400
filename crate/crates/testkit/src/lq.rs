//! Random unconstrained linear-quadratic game instances, paired with the
//! joint matrices the Riccati oracle needs.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tpg::{AgentCost, AgentModel, ConstraintSet, GameSpec, JointDynamics, QuadraticCost};

use crate::riccati::LqrProblem;

pub struct LqInstance {
    pub spec: GameSpec,
    pub joint: LqrProblem,
}

fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Draw a random game of 1 to 3 agents with linear dynamics and quadratic
/// goal-tracking costs, joint state dimension at most 12 and horizon at most
/// 50, with no constraints.
pub fn random_lq_instance(seed: u64) -> LqInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_agents = rng.random_range(1..=3);
    let mut a_blocks = Vec::new();
    let mut b_blocks = Vec::new();
    let mut q_blocks = Vec::new();
    let mut r_blocks = Vec::new();
    let mut qf_blocks = Vec::new();
    let mut goal_parts: Vec<DVector<f64>> = Vec::new();
    let mut x0_parts: Vec<DVector<f64>> = Vec::new();
    let mut models = Vec::new();
    let mut costs = Vec::new();
    for _ in 0..n_agents {
        let n = rng.random_range(2..=(12 / n_agents).min(4));
        let m = rng.random_range(1..=2);
        let a = DMatrix::from_fn(n, n, |r, c| {
            let base = if r == c { 0.9 } else { 0.0 };
            base + rng.random_range(-0.2..0.2)
        });
        let b = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
        let q = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random_range(0.1..2.0)));
        let r = DMatrix::from_diagonal(&DVector::from_fn(m, |_, _| rng.random_range(0.2..1.5)));
        let qf = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random_range(1.0..10.0)));
        let goal = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        costs.push(AgentCost::Quadratic(QuadraticCost {
            state_weight: q.clone(),
            control_weight: r.clone(),
            terminal_weight: qf.clone(),
            goal: goal.clone(),
        }));
        models.push(AgentModel::Linear {
            a: a.clone(),
            b: b.clone(),
        });
        a_blocks.push(a);
        b_blocks.push(b);
        q_blocks.push(q);
        r_blocks.push(r);
        qf_blocks.push(qf);
        goal_parts.push(goal);
        x0_parts.push(x0);
    }
    let horizon = rng.random_range(5..=50);
    let stack = |parts: &[DVector<f64>]| {
        DVector::from_iterator(
            parts.iter().map(|p| p.len()).sum(),
            parts.iter().flat_map(|p| p.iter().copied()),
        )
    };
    let goal = stack(&goal_parts);
    let x0 = stack(&x0_parts);
    let dynamics = JointDynamics::new(models, 0.1).unwrap();
    let spec = GameSpec::new(dynamics, costs, ConstraintSet::empty(), horizon, x0.clone()).unwrap();
    LqInstance {
        spec,
        joint: LqrProblem {
            a: block_diag(&a_blocks),
            b: block_diag(&b_blocks),
            q: block_diag(&q_blocks),
            r: block_diag(&r_blocks),
            qf: block_diag(&qf_blocks),
            goal,
            x0,
            horizon,
        },
    }
}
