//! Frozen-agent reduction.
//!
//! Fixing a subset of agents to reference controls turns the game into a
//! smaller one over the remaining agents: their dynamics blocks, their
//! costs, and the full constraint set, each evaluated with the frozen
//! agents' trajectories spliced back in. Rows that involve only frozen
//! agents become constants of the reference trajectory; they keep the
//! reduced feasible set honest, since no choice of the remaining agents can
//! repair a violation baked into the frozen blocks. The best-response check
//! and scripted closed-loop agents are both built on this.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::constraints::{Constraint, ConstraintSet};
use crate::cost::AgentCost;
use crate::dynamics::JointDynamics;
use crate::error::{Error, Result};
use crate::game::GameSpec;

/// Reference rollout plus the index maps between the full joint vectors and
/// the reduced ones.
struct Splice {
    /// Full joint states under the reference controls; kept blocks are
    /// overwritten on every access, frozen blocks are what matter.
    states: Vec<DVector<f64>>,
    controls: Vec<DVector<f64>>,
    /// `(full_offset, reduced_offset, len)` per kept agent.
    state_blocks: Vec<(usize, usize, usize)>,
    control_blocks: Vec<(usize, usize, usize)>,
    reduced_state_dim: usize,
    reduced_control_dim: usize,
}

impl Splice {
    fn full_state(&self, k: usize, reduced: &DVector<f64>) -> DVector<f64> {
        let mut x = self.states[k].clone();
        for &(full, red, len) in &self.state_blocks {
            x.rows_mut(full, len).copy_from(&reduced.rows(red, len));
        }
        x
    }

    fn full_control(&self, k: usize, reduced: &DVector<f64>) -> DVector<f64> {
        let mut u = self.controls[k].clone();
        for &(full, red, len) in &self.control_blocks {
            u.rows_mut(full, len).copy_from(&reduced.rows(red, len));
        }
        u
    }

    fn state_cols(&self, full: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(full.nrows(), self.reduced_state_dim);
        for &(fo, ro, len) in &self.state_blocks {
            out.view_mut((0, ro), (full.nrows(), len))
                .copy_from(&full.columns(fo, len));
        }
        out
    }

    fn control_cols(&self, full: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(full.nrows(), self.reduced_control_dim);
        for &(fo, ro, len) in &self.control_blocks {
            out.view_mut((0, ro), (full.nrows(), len))
                .copy_from(&full.columns(fo, len));
        }
        out
    }
}

/// A game restated over a subset of its agents, with everyone else frozen to
/// reference controls.
pub struct FrozenGame {
    spec: GameSpec,
    kept: Vec<usize>,
    splice: Arc<Splice>,
    full_control_dim: usize,
}

impl FrozenGame {
    /// Freeze every agent outside `kept` to its block of
    /// `reference_controls` and restate the game over the rest.
    pub fn new(
        full: &GameSpec,
        kept: &[usize],
        reference_controls: &[DVector<f64>],
    ) -> Result<Self> {
        let n_agents = full.num_agents();
        let mut kept: Vec<usize> = kept.to_vec();
        kept.sort_unstable();
        kept.dedup();
        if kept.is_empty() {
            return Err(Error::Game("reduction must keep at least one agent".into()));
        }
        if let Some(&bad) = kept.iter().find(|&&a| a >= n_agents) {
            return Err(Error::Game(format!(
                "reduction keeps agent {bad}, game has {n_agents}"
            )));
        }
        if reference_controls.len() != full.horizon() {
            return Err(Error::Dimension(format!(
                "reference has {} controls, horizon is {}",
                reference_controls.len(),
                full.horizon()
            )));
        }

        let reference = full.rollout(reference_controls)?;
        let dynamics = full.dynamics();

        let mut state_blocks = Vec::with_capacity(kept.len());
        let mut control_blocks = Vec::with_capacity(kept.len());
        let (mut ns, mut ms) = (0, 0);
        for &a in &kept {
            let xb = dynamics.state_block(a);
            let ub = dynamics.control_block(a);
            state_blocks.push((xb.start, ns, xb.len()));
            control_blocks.push((ub.start, ms, ub.len()));
            ns += xb.len();
            ms += ub.len();
        }
        let splice = Arc::new(Splice {
            states: reference.states,
            controls: reference.controls,
            state_blocks,
            control_blocks,
            reduced_state_dim: ns,
            reduced_control_dim: ms,
        });

        let reduced_dynamics = JointDynamics::new(
            kept.iter().map(|&a| dynamics.model(a).clone()).collect(),
            dynamics.step_size(),
        )?;

        let costs = kept
            .iter()
            .map(|&a| match &full.costs()[a] {
                AgentCost::Quadratic(q) => AgentCost::Quadratic(q.clone()),
                AgentCost::Custom { running, terminal } => {
                    let (r, t) = (Arc::clone(running), Arc::clone(terminal));
                    let (sr, st) = (Arc::clone(&splice), Arc::clone(&splice));
                    let horizon = full.horizon();
                    AgentCost::custom(
                        move |x, u, k| r(&sr.full_state(k, x), &sr.full_control(k, u), k),
                        move |x| t(&st.full_state(horizon, x)),
                    )
                }
            })
            .collect();

        let constraints = full
            .constraints()
            .items()
            .iter()
            .map(|c| wrap_constraint(c, &reduced_dynamics, &splice, full.horizon()))
            .collect();

        let mut x0 = DVector::zeros(ns);
        for &(fo, ro, len) in &splice.state_blocks {
            x0.rows_mut(ro, len)
                .copy_from(&full.initial_state().rows(fo, len));
        }

        let spec = GameSpec::new(
            reduced_dynamics,
            costs,
            ConstraintSet::new(constraints),
            full.horizon(),
            x0,
        )?;
        Ok(Self {
            spec,
            kept,
            splice,
            full_control_dim: full.control_dim(),
        })
    }

    pub fn spec(&self) -> &GameSpec {
        &self.spec
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    /// Kept agents' blocks of full joint controls, e.g. as a warm start.
    pub fn reduced_controls(&self, joint_controls: &[DVector<f64>]) -> Vec<DVector<f64>> {
        joint_controls
            .iter()
            .map(|u| {
                let mut out = DVector::zeros(self.splice.reduced_control_dim);
                for &(fo, ro, len) in &self.splice.control_blocks {
                    out.rows_mut(ro, len).copy_from(&u.rows(fo, len));
                }
                out
            })
            .collect()
    }

    /// Full joint controls with the kept blocks replaced by `reduced` and
    /// the frozen blocks at their reference values.
    pub fn lift_controls(&self, reduced: &[DVector<f64>]) -> Vec<DVector<f64>> {
        assert_eq!(reduced.len(), self.splice.controls.len());
        reduced
            .iter()
            .enumerate()
            .map(|(k, ur)| {
                let mut u = DVector::zeros(self.full_control_dim);
                u.copy_from(&self.splice.controls[k]);
                for &(fo, ro, len) in &self.splice.control_blocks {
                    u.rows_mut(fo, len).copy_from(&ur.rows(ro, len));
                }
                u
            })
            .collect()
    }
}

fn wrap_constraint(
    c: &Constraint,
    reduced_dynamics: &JointDynamics,
    splice: &Arc<Splice>,
    horizon: usize,
) -> Constraint {
    let (orig_eval, orig_jac) = (c.clone(), c.clone());
    let (se, sj) = (Arc::clone(splice), Arc::clone(splice));
    let mut reduced = Constraint::custom(
        reduced_dynamics,
        c.label(),
        c.kind(),
        c.rows(),
        move |x, u, k| orig_eval.eval_running(&se.full_state(k, x), &se.full_control(k, u), k),
    )
    .with_running_jacobian(move |x, u, k| {
        let (gx, gu) =
            orig_jac.running_jacobians(&sj.full_state(k, x), &sj.full_control(k, u), k);
        (sj.state_cols(&gx), sj.control_cols(&gu))
    });
    if c.applies_terminal() {
        let (orig_eval, orig_jac) = (c.clone(), c.clone());
        let (se, sj) = (Arc::clone(splice), Arc::clone(splice));
        reduced = reduced
            .and_terminal(move |x| orig_eval.eval_terminal(&se.full_state(horizon, x)))
            .with_terminal_jacobian(move |x| {
                sj.state_cols(&orig_jac.terminal_jacobian(&sj.full_state(horizon, x)))
            });
    }
    reduced
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::QuadraticCost;
    use crate::dynamics::AgentModel;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_agent_game() -> GameSpec {
        let dynamics = JointDynamics::new(
            vec![
                AgentModel::SingleIntegrator { dim: 2 },
                AgentModel::SingleIntegrator { dim: 2 },
            ],
            0.1,
        )
        .unwrap();
        let collision = Constraint::pairwise_collision(&dynamics, 0, 1, 0, 2, 0.3);
        let bound_1 = Constraint::control_bound(&dynamics, 1, &[2.0, 2.0]);
        GameSpec::new(
            dynamics,
            vec![
                AgentCost::Quadratic(QuadraticCost::from_diagonals(
                    &[1.0, 1.0],
                    &[0.1, 0.1],
                    &[5.0, 5.0],
                    &[1.0, 0.0],
                )),
                AgentCost::Quadratic(QuadraticCost::from_diagonals(
                    &[1.0, 1.0],
                    &[0.1, 0.1],
                    &[5.0, 5.0],
                    &[0.0, 1.0],
                )),
            ],
            ConstraintSet::new(vec![collision, bound_1]),
            8,
            DVector::from_row_slice(&[0.0, 0.0, 1.0, 0.0]),
        )
        .unwrap()
    }

    fn random_controls(rng: &mut ChaCha8Rng, horizon: usize, m: usize) -> Vec<DVector<f64>> {
        (0..horizon)
            .map(|_| DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn kept_agent_cost_is_preserved_at_matching_controls() {
        let full = two_agent_game();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let reference = random_controls(&mut rng, full.horizon(), full.control_dim());
        let frozen = FrozenGame::new(&full, &[0], &reference).unwrap();

        let full_traj = full.rollout(&reference).unwrap();
        let reduced_traj = frozen
            .spec()
            .rollout(&frozen.reduced_controls(&reference))
            .unwrap();
        assert_relative_eq!(
            reduced_traj.cost_per_agent[0],
            full_traj.cost_per_agent[0],
            epsilon = 1e-12
        );
    }

    #[test]
    fn lifted_controls_restore_the_joint_vector() {
        let full = two_agent_game();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let reference = random_controls(&mut rng, full.horizon(), full.control_dim());
        let frozen = FrozenGame::new(&full, &[1], &reference).unwrap();

        let reduced = frozen.reduced_controls(&reference);
        let lifted = frozen.lift_controls(&reduced);
        for k in 0..full.horizon() {
            assert_relative_eq!((&lifted[k] - &reference[k]).amax(), 0.0);
        }
    }

    #[test]
    fn pair_constraint_follows_the_frozen_trajectory() {
        let full = two_agent_game();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let reference = random_controls(&mut rng, full.horizon(), full.control_dim());
        let frozen = FrozenGame::new(&full, &[0], &reference).unwrap();

        let full_traj = full.rollout(&reference).unwrap();
        let reduced = frozen.reduced_controls(&reference);
        let reduced_traj = frozen.spec().rollout(&reduced).unwrap();
        for k in 0..=full.horizon() {
            assert_relative_eq!(
                reduced_traj.step_violation[k],
                full_traj.step_violation[k],
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn frozen_only_rows_become_constants_of_the_reference() {
        let full = two_agent_game();
        let mut reference = vec![DVector::zeros(full.control_dim()); full.horizon()];
        reference[3][2] = 2.7;
        let frozen = FrozenGame::new(&full, &[0], &reference).unwrap();
        let set = frozen.spec().constraints();
        assert_eq!(set.items().len(), full.constraints().items().len());

        // Agent 1's control bound now reads the frozen script: |2.7| - 2
        // violated at step 3 no matter what the kept agent does, satisfied
        // elsewhere, with no sensitivity to the kept agent's variables.
        let x = DVector::from_row_slice(&[0.4, -0.2]);
        let bound = set.items().last().unwrap();
        for u1 in [-1.0, 0.0, 5.0] {
            let u = DVector::from_element(2, u1);
            assert_relative_eq!(bound.eval_running(&x, &u, 3).max(), 0.7, epsilon = 1e-12);
            assert!(bound.eval_running(&x, &u, 2).max() < 0.0);
            let (gx, gu) = bound.running_jacobians(&x, &u, 3);
            assert_eq!(gx.amax(), 0.0);
            assert_eq!(gu.amax(), 0.0);
        }
    }

    #[test]
    fn wrapped_jacobians_match_finite_differences() {
        let full = two_agent_game();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let reference = random_controls(&mut rng, full.horizon(), full.control_dim());
        let frozen = FrozenGame::new(&full, &[0], &reference).unwrap();
        let set = frozen.spec().constraints();

        for trial in 0..20 {
            let x = DVector::from_fn(2, |_, _| rng.random_range(-1.5..1.5));
            let u = DVector::from_fn(2, |_, _| rng.random_range(-1.5..1.5));
            let k = trial % full.horizon();
            let (gx, gu) = set.running_jacobians(&x, &u, k);
            let fx = crate::fd::jacobian(&|v: &DVector<f64>| set.eval_running(v, &u, k), &x, 1e-6);
            let fu = crate::fd::jacobian(&|v: &DVector<f64>| set.eval_running(&x, v, k), &u, 1e-6);
            assert!((gx - fx).amax() < 1e-6, "state Jacobian off at trial {trial}");
            assert!((gu - fu).amax() < 1e-6, "control Jacobian off at trial {trial}");
        }
    }

    #[test]
    fn invalid_reductions_are_rejected() {
        let full = two_agent_game();
        let reference = vec![DVector::zeros(full.control_dim()); full.horizon()];
        assert!(FrozenGame::new(&full, &[], &reference).is_err());
        assert!(FrozenGame::new(&full, &[2], &reference).is_err());
        assert!(FrozenGame::new(&full, &[0], &reference[1..]).is_err());
    }
}
