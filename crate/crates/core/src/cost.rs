//! Per-agent stage and terminal costs.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

type RunningFn = dyn Fn(&DVector<f64>, &DVector<f64>, usize) -> f64 + Send + Sync;
type TerminalFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;

/// Quadratic tracking cost
/// `0.5 (x - goal)' Q (x - goal) + 0.5 u' C u` per step and
/// `0.5 (x_T - goal)' Qf (x_T - goal)` at the end of the horizon,
/// written on the agent's own state and control blocks.
#[derive(Clone, Debug)]
pub struct QuadraticCost {
    pub state_weight: DMatrix<f64>,
    pub control_weight: DMatrix<f64>,
    pub terminal_weight: DMatrix<f64>,
    pub goal: DVector<f64>,
}

impl QuadraticCost {
    /// Build from weight diagonals, the common case in shipped scenarios.
    pub fn from_diagonals(state: &[f64], control: &[f64], terminal: &[f64], goal: &[f64]) -> Self {
        Self {
            state_weight: DMatrix::from_diagonal(&DVector::from_row_slice(state)),
            control_weight: DMatrix::from_diagonal(&DVector::from_row_slice(control)),
            terminal_weight: DMatrix::from_diagonal(&DVector::from_row_slice(terminal)),
            goal: DVector::from_row_slice(goal),
        }
    }

    pub fn running(&self, x_own: &DVector<f64>, u_own: &DVector<f64>) -> f64 {
        let dx = x_own - &self.goal;
        0.5 * (&self.state_weight * &dx).dot(&dx) + 0.5 * (&self.control_weight * u_own).dot(u_own)
    }

    pub fn terminal(&self, x_own: &DVector<f64>) -> f64 {
        let dx = x_own - &self.goal;
        0.5 * (&self.terminal_weight * &dx).dot(&dx)
    }
}

/// Cost of one agent. The quadratic form touches only the agent's own blocks;
/// custom closures receive the joint state and control so that misuse can be
/// caught by the separability audit rather than hidden by the signature.
#[derive(Clone)]
pub enum AgentCost {
    Quadratic(QuadraticCost),
    Custom {
        running: Arc<RunningFn>,
        terminal: Arc<TerminalFn>,
    },
}

impl fmt::Debug for AgentCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentCost::Quadratic(q) => write!(f, "Quadratic(goal dim {})", q.goal.len()),
            AgentCost::Custom { .. } => write!(f, "Custom"),
        }
    }
}

impl AgentCost {
    pub fn custom(
        running: impl Fn(&DVector<f64>, &DVector<f64>, usize) -> f64 + Send + Sync + 'static,
        terminal: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        AgentCost::Custom {
            running: Arc::new(running),
            terminal: Arc::new(terminal),
        }
    }

    pub fn quadratic(&self) -> Option<&QuadraticCost> {
        match self {
            AgentCost::Quadratic(q) => Some(q),
            AgentCost::Custom { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quadratic_matches_the_closed_form() {
        let cost = QuadraticCost::from_diagonals(
            &[1.0, 2.0],
            &[0.5],
            &[4.0, 4.0],
            &[1.0, -1.0],
        );
        let x = DVector::from_vec(vec![2.0, 1.0]);
        let u = DVector::from_vec(vec![3.0]);
        // 0.5 * (1*1 + 2*4) + 0.5 * 0.5 * 9
        assert_relative_eq!(cost.running(&x, &u), 4.5 + 2.25, epsilon = 1e-15);
        // 0.5 * 4 * (1 + 4)
        assert_relative_eq!(cost.terminal(&x), 10.0, epsilon = 1e-15);
    }

    #[test]
    fn custom_closure_agrees_with_equivalent_quadratic() {
        let q = QuadraticCost::from_diagonals(&[2.0], &[1.0], &[3.0], &[0.5]);
        let qc = q.clone();
        let qt = q.clone();
        let custom = AgentCost::custom(
            move |x, u, _k| {
                let d = x[0] - 0.5;
                0.5 * 2.0 * d * d + 0.5 * u[0] * u[0]
            },
            move |x| {
                let d = x[0] - 0.5;
                0.5 * 3.0 * d * d
            },
        );
        let x = DVector::from_vec(vec![1.7]);
        let u = DVector::from_vec(vec![-0.3]);
        match &custom {
            AgentCost::Custom { running, terminal } => {
                assert_relative_eq!(running(&x, &u, 0), qc.running(&x, &u), epsilon = 1e-15);
                assert_relative_eq!(terminal(&x), qt.terminal(&x), epsilon = 1e-15);
            }
            _ => unreachable!(),
        }
    }
}
