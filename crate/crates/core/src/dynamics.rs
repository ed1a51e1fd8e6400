//! Discrete-time agent dynamics and their block-diagonal joint composition.
//!
//! Every model maps `(x_k, u_k)` to `x_{k+1}` with a forward Euler step of
//! size `h`, except [`AgentModel::Linear`] which is already a discrete map.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fd;

/// Relative step for the finite-difference Jacobian fallback.
const FD_JACOBIAN_STEP: f64 = 1e-6;

type StepFn = dyn Fn(&DVector<f64>, &DVector<f64>, usize, f64) -> DVector<f64> + Send + Sync;
type JacFn =
    dyn Fn(&DVector<f64>, &DVector<f64>, usize, f64) -> (DMatrix<f64>, DMatrix<f64>) + Send + Sync;

/// Dynamics of a single agent.
#[derive(Clone)]
pub enum AgentModel {
    /// Planar unicycle, state `[p, q, theta]`, control `[v, omega]`.
    Unicycle,
    /// Velocity-controlled rigid body, state and control both 6-dimensional:
    /// position, orientation angles, and their commanded rates.
    Integrator6Dof,
    /// Walking person, state `[p, q, r, theta]` with constant height `r`,
    /// control `[v, omega]`.
    HumanUnicycle,
    /// `x_{k+1} = x_k + h u_k` in `dim` dimensions.
    SingleIntegrator { dim: usize },
    /// Discrete linear map `x_{k+1} = A x_k + B u_k`.
    Linear { a: DMatrix<f64>, b: DMatrix<f64> },
    /// Caller-supplied step function; Jacobians fall back to central
    /// differences when not provided.
    Custom {
        state_dim: usize,
        control_dim: usize,
        step: Arc<StepFn>,
        jacobians: Option<Arc<JacFn>>,
    },
}

impl fmt::Debug for AgentModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentModel::Unicycle => write!(f, "Unicycle"),
            AgentModel::Integrator6Dof => write!(f, "Integrator6Dof"),
            AgentModel::HumanUnicycle => write!(f, "HumanUnicycle"),
            AgentModel::SingleIntegrator { dim } => write!(f, "SingleIntegrator({dim})"),
            AgentModel::Linear { a, b } => write!(f, "Linear({}x{})", a.nrows(), b.ncols()),
            AgentModel::Custom {
                state_dim,
                control_dim,
                ..
            } => write!(f, "Custom({state_dim},{control_dim})"),
        }
    }
}

impl AgentModel {
    pub fn state_dim(&self) -> usize {
        match self {
            AgentModel::Unicycle => 3,
            AgentModel::Integrator6Dof => 6,
            AgentModel::HumanUnicycle => 4,
            AgentModel::SingleIntegrator { dim } => *dim,
            AgentModel::Linear { a, .. } => a.nrows(),
            AgentModel::Custom { state_dim, .. } => *state_dim,
        }
    }

    pub fn control_dim(&self) -> usize {
        match self {
            AgentModel::Unicycle | AgentModel::HumanUnicycle => 2,
            AgentModel::Integrator6Dof => 6,
            AgentModel::SingleIntegrator { dim } => *dim,
            AgentModel::Linear { b, .. } => b.ncols(),
            AgentModel::Custom { control_dim, .. } => *control_dim,
        }
    }

    /// Offset and length of the position coordinates inside this model's
    /// state block, when the model has a spatial interpretation.
    pub fn position_range(&self) -> Option<(usize, usize)> {
        match self {
            AgentModel::Unicycle | AgentModel::HumanUnicycle => Some((0, 2)),
            AgentModel::Integrator6Dof => Some((0, 3)),
            AgentModel::SingleIntegrator { dim } => Some((0, *dim)),
            AgentModel::Linear { .. } | AgentModel::Custom { .. } => None,
        }
    }

    /// One discrete step of this agent alone.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize, h: f64) -> DVector<f64> {
        match self {
            AgentModel::Unicycle => {
                let (v, w) = (u[0], u[1]);
                DVector::from_vec(vec![
                    x[0] + h * v * x[2].cos(),
                    x[1] + h * v * x[2].sin(),
                    x[2] + h * w,
                ])
            }
            AgentModel::Integrator6Dof | AgentModel::SingleIntegrator { .. } => x + u * h,
            AgentModel::HumanUnicycle => {
                let (v, w) = (u[0], u[1]);
                DVector::from_vec(vec![
                    x[0] + h * v * x[3].cos(),
                    x[1] + h * v * x[3].sin(),
                    x[2],
                    x[3] + h * w,
                ])
            }
            AgentModel::Linear { a, b } => a * x + b * u,
            AgentModel::Custom { step, .. } => step(x, u, k, h),
        }
    }

    /// Jacobians `(d x_{k+1} / d x_k, d x_{k+1} / d u_k)` of [`Self::step`].
    pub fn jacobians(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        k: usize,
        h: f64,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        match self {
            AgentModel::Unicycle => {
                let (v, th) = (u[0], x[2]);
                let mut a = DMatrix::identity(3, 3);
                a[(0, 2)] = -h * v * th.sin();
                a[(1, 2)] = h * v * th.cos();
                let mut b = DMatrix::zeros(3, 2);
                b[(0, 0)] = h * th.cos();
                b[(1, 0)] = h * th.sin();
                b[(2, 1)] = h;
                (a, b)
            }
            AgentModel::Integrator6Dof => {
                (DMatrix::identity(6, 6), DMatrix::identity(6, 6) * h)
            }
            AgentModel::HumanUnicycle => {
                let (v, th) = (u[0], x[3]);
                let mut a = DMatrix::identity(4, 4);
                a[(0, 3)] = -h * v * th.sin();
                a[(1, 3)] = h * v * th.cos();
                let mut b = DMatrix::zeros(4, 2);
                b[(0, 0)] = h * th.cos();
                b[(1, 0)] = h * th.sin();
                b[(3, 1)] = h;
                (a, b)
            }
            AgentModel::SingleIntegrator { dim } => {
                (DMatrix::identity(*dim, *dim), DMatrix::identity(*dim, *dim) * h)
            }
            AgentModel::Linear { a, b } => (a.clone(), b.clone()),
            AgentModel::Custom {
                step, jacobians, ..
            } => match jacobians {
                Some(jac) => jac(x, u, k, h),
                None => {
                    let fx = fd::jacobian(
                        &|xx: &DVector<f64>| step(xx, u, k, h),
                        x,
                        FD_JACOBIAN_STEP,
                    );
                    let fu = fd::jacobian(
                        &|uu: &DVector<f64>| step(x, uu, k, h),
                        u,
                        FD_JACOBIAN_STEP,
                    );
                    (fx, fu)
                }
            },
        }
    }
}

/// All agents' dynamics stacked into one block-diagonal system.
#[derive(Clone, Debug)]
pub struct JointDynamics {
    models: Vec<AgentModel>,
    step_size: f64,
    state_offsets: Vec<usize>,
    control_offsets: Vec<usize>,
}

impl JointDynamics {
    pub fn new(models: Vec<AgentModel>, step_size: f64) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::Game("at least one agent is required".into()));
        }
        if !(step_size.is_finite() && step_size > 0.0) {
            return Err(Error::Game(format!("step size must be positive, got {step_size}")));
        }
        let mut state_offsets = Vec::with_capacity(models.len() + 1);
        let mut control_offsets = Vec::with_capacity(models.len() + 1);
        let (mut ns, mut nc) = (0, 0);
        for m in &models {
            state_offsets.push(ns);
            control_offsets.push(nc);
            ns += m.state_dim();
            nc += m.control_dim();
        }
        state_offsets.push(ns);
        control_offsets.push(nc);
        Ok(Self {
            models,
            step_size,
            state_offsets,
            control_offsets,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.models.len()
    }

    pub fn models(&self) -> &[AgentModel] {
        &self.models
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn model(&self, agent: usize) -> &AgentModel {
        &self.models[agent]
    }

    pub fn state_dim(&self) -> usize {
        *self.state_offsets.last().unwrap()
    }

    pub fn control_dim(&self) -> usize {
        *self.control_offsets.last().unwrap()
    }

    /// Index range of agent `i`'s states inside the joint state vector.
    pub fn state_block(&self, i: usize) -> std::ops::Range<usize> {
        self.state_offsets[i]..self.state_offsets[i + 1]
    }

    /// Index range of agent `i`'s controls inside the joint control vector.
    pub fn control_block(&self, i: usize) -> std::ops::Range<usize> {
        self.control_offsets[i]..self.control_offsets[i + 1]
    }

    /// One step of the joint system.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> DVector<f64> {
        let mut next = DVector::zeros(self.state_dim());
        for (i, m) in self.models.iter().enumerate() {
            let xi = x.rows(self.state_offsets[i], m.state_dim()).into_owned();
            let ui = u.rows(self.control_offsets[i], m.control_dim()).into_owned();
            let ni = m.step(&xi, &ui, k, self.step_size);
            next.rows_mut(self.state_offsets[i], m.state_dim()).copy_from(&ni);
        }
        next
    }

    /// Joint Jacobians, block diagonal by construction with exact zeros in
    /// the off-diagonal blocks.
    pub fn jacobians(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        k: usize,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut a = DMatrix::zeros(self.state_dim(), self.state_dim());
        let mut b = DMatrix::zeros(self.state_dim(), self.control_dim());
        for (i, m) in self.models.iter().enumerate() {
            let xi = x.rows(self.state_offsets[i], m.state_dim()).into_owned();
            let ui = u.rows(self.control_offsets[i], m.control_dim()).into_owned();
            let (ai, bi) = m.jacobians(&xi, &ui, k, self.step_size);
            a.view_mut(
                (self.state_offsets[i], self.state_offsets[i]),
                (m.state_dim(), m.state_dim()),
            )
            .copy_from(&ai);
            b.view_mut(
                (self.state_offsets[i], self.control_offsets[i]),
                (m.state_dim(), m.control_dim()),
            )
            .copy_from(&bi);
        }
        (a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fd_check(model: &AgentModel, x: &DVector<f64>, u: &DVector<f64>, h: f64) {
        let (a, b) = model.jacobians(x, u, 0, h);
        let fa = fd::jacobian(&|xx: &DVector<f64>| model.step(xx, u, 0, h), x, 1e-6);
        let fb = fd::jacobian(&|uu: &DVector<f64>| model.step(x, uu, 0, h), u, 1e-6);
        assert_relative_eq!(a, fa, epsilon = 1e-7, max_relative = 1e-6);
        assert_relative_eq!(b, fb, epsilon = 1e-7, max_relative = 1e-6);
    }

    #[test]
    fn unicycle_steps_forward_along_heading() {
        let m = AgentModel::Unicycle;
        let x = DVector::from_vec(vec![0.0, 0.0, 0.0]);
        let u = DVector::from_vec(vec![1.0, 0.0]);
        let next = m.step(&x, &u, 0, 0.1);
        assert_relative_eq!(next[0], 0.1, epsilon = 1e-15);
        assert_relative_eq!(next[1], 0.0, epsilon = 1e-15);
        assert_relative_eq!(next[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn unicycle_facing_up_moves_in_q() {
        let m = AgentModel::Unicycle;
        let x = DVector::from_vec(vec![0.0, 0.0, std::f64::consts::FRAC_PI_2]);
        let u = DVector::from_vec(vec![2.0, 0.0]);
        let next = m.step(&x, &u, 0, 0.1);
        assert_relative_eq!(next[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(next[1], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn integrator_moves_by_h_times_u() {
        let m = AgentModel::Integrator6Dof;
        let x = DVector::zeros(6);
        let mut u = DVector::zeros(6);
        u[0] = 1.2;
        let next = m.step(&x, &u, 0, 0.1);
        assert_relative_eq!(next[0], 0.12, epsilon = 1e-15);
        assert_eq!(next.rows(1, 5), DVector::zeros(5).rows(0, 5));
    }

    #[test]
    fn unicycle_heading_sensitivity_vanishes_at_zero_heading() {
        let m = AgentModel::Unicycle;
        let x = DVector::from_vec(vec![0.0, 0.0, 0.0]);
        let u = DVector::from_vec(vec![1.5, 0.3]);
        let (a, _) = m.jacobians(&x, &u, 0, 0.1);
        assert_eq!(a[(0, 2)], 0.0);
    }

    #[test]
    fn unicycle_heading_sensitivity_at_quarter_pi() {
        let m = AgentModel::Unicycle;
        let x = DVector::from_vec(vec![0.0, 0.0, std::f64::consts::FRAC_PI_4]);
        let u = DVector::from_vec(vec![2.0, 0.0]);
        let (a, _) = m.jacobians(&x, &u, 0, 0.1);
        assert_relative_eq!(
            a[(0, 2)],
            -0.2 * std::f64::consts::FRAC_PI_4.sin(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn human_height_row_is_frozen() {
        let m = AgentModel::HumanUnicycle;
        let x = DVector::from_vec(vec![0.3, -0.2, 1.0, 0.4]);
        let u = DVector::from_vec(vec![1.1, -0.5]);
        let next = m.step(&x, &u, 0, 0.1);
        assert_eq!(next[2], 1.0);
        let (a, b) = m.jacobians(&x, &u, 0, 0.1);
        for c in 0..4 {
            assert_eq!(a[(2, c)], if c == 2 { 1.0 } else { 0.0 });
        }
        assert_eq!(b.row(2).iter().copied().fold(0.0f64, |m, v| m.max(v.abs())), 0.0);
    }

    #[test]
    fn jacobians_match_finite_differences_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let custom = AgentModel::Custom {
            state_dim: 2,
            control_dim: 1,
            step: Arc::new(|x: &DVector<f64>, u: &DVector<f64>, _k, h| {
                DVector::from_vec(vec![x[0] + h * x[1], x[1] + h * (u[0] - x[0].sin())])
            }),
            jacobians: None,
        };
        let models = [
            AgentModel::Unicycle,
            AgentModel::HumanUnicycle,
            AgentModel::Integrator6Dof,
            AgentModel::SingleIntegrator { dim: 3 },
            custom,
        ];
        for model in &models {
            for _ in 0..50 {
                let x = DVector::from_fn(model.state_dim(), |_, _| rng.random_range(-3.0..3.0));
                let u = DVector::from_fn(model.control_dim(), |_, _| rng.random_range(-3.0..3.0));
                fd_check(model, &x, &u, 0.1);
            }
        }
    }

    #[test]
    fn joint_jacobians_are_block_diagonal_with_exact_zeros() {
        let dyn_ = JointDynamics::new(
            vec![AgentModel::Unicycle, AgentModel::Integrator6Dof],
            0.1,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DVector::from_fn(dyn_.state_dim(), |_, _| rng.random_range(-2.0..2.0));
        let u = DVector::from_fn(dyn_.control_dim(), |_, _| rng.random_range(-2.0..2.0));
        let (a, b) = dyn_.jacobians(&x, &u, 0);
        for r in 0..3 {
            for c in 3..9 {
                assert_eq!(a[(r, c)], 0.0);
                assert_eq!(a[(c, r)], 0.0);
            }
        }
        for r in 0..3 {
            for c in 2..8 {
                assert_eq!(b[(r, c)], 0.0);
            }
        }
        for r in 3..9 {
            for c in 0..2 {
                assert_eq!(b[(r, c)], 0.0);
            }
        }
    }

    #[test]
    fn joint_step_agrees_with_per_agent_steps() {
        let dyn_ = JointDynamics::new(
            vec![AgentModel::Unicycle, AgentModel::HumanUnicycle],
            0.05,
        )
        .unwrap();
        let x = DVector::from_vec(vec![0.1, 0.2, 0.3, 1.0, -1.0, 1.0, 0.5]);
        let u = DVector::from_vec(vec![1.0, 0.1, 0.8, -0.2]);
        let joint = dyn_.step(&x, &u, 0);
        let a0 = AgentModel::Unicycle.step(
            &x.rows(0, 3).into_owned(),
            &u.rows(0, 2).into_owned(),
            0,
            0.05,
        );
        let a1 = AgentModel::HumanUnicycle.step(
            &x.rows(3, 4).into_owned(),
            &u.rows(2, 2).into_owned(),
            0,
            0.05,
        );
        assert_eq!(joint.rows(0, 3).into_owned(), a0);
        assert_eq!(joint.rows(3, 4).into_owned(), a1);
    }
}
