//! Reduction of a separable game to one optimal control problem.
//!
//! When every agent's stage and terminal cost reads only that agent's own
//! state and control blocks, the sum of the agent objectives is an exact
//! potential for the game: any unilateral change in one agent's controls
//! moves the sum by exactly that agent's cost change. Minimizing the sum
//! subject to the shared dynamics and constraints therefore yields a
//! constrained equilibrium candidate. [`PotentialOcp::assemble`] performs the
//! numerical separability audit before handing out the summed objective;
//! [`verify_potential_condition`] checks the defining identity directly on
//! random strategy deviations.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost::AgentCost;
use crate::error::{Error, Result};
use crate::fd;
use crate::game::{audit_separability, GameSpec, Trajectory};

/// Samples drawn by the audit that guards [`PotentialOcp::assemble`].
const ASSEMBLE_AUDIT_SAMPLES: usize = 16;
const ASSEMBLE_AUDIT_SEED: u64 = 0xA5;

/// Relative steps for differentiating custom (non-quadratic) costs.
const CUSTOM_GRADIENT_STEP: f64 = 1e-6;
const CUSTOM_HESSIAN_STEP: f64 = 1e-4;

/// Identity tolerance used by [`verify_potential_condition`].
pub const POTENTIAL_CONDITION_TOL: f64 = 1e-9;

/// Second-order expansion of a stage cost at a joint point.
#[derive(Clone, Debug)]
pub struct CostExpansion {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub xx: DMatrix<f64>,
    pub uu: DMatrix<f64>,
    pub ux: DMatrix<f64>,
}

impl CostExpansion {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            x: DVector::zeros(n),
            u: DVector::zeros(m),
            xx: DMatrix::zeros(n, n),
            uu: DMatrix::zeros(m, m),
            ux: DMatrix::zeros(m, n),
        }
    }
}

/// Second-order expansion of the terminal cost.
#[derive(Clone, Debug)]
pub struct TerminalCostExpansion {
    pub x: DVector<f64>,
    pub xx: DMatrix<f64>,
}

/// The summed-objective optimal control problem over the joint system.
#[derive(Clone, Debug)]
pub struct PotentialOcp {
    spec: GameSpec,
}

impl PotentialOcp {
    /// Build the reduced problem, refusing games whose costs react to other
    /// agents' decision variables.
    pub fn assemble(spec: &GameSpec) -> Result<Self> {
        let issues = spec.validate();
        if !issues.is_empty() {
            return Err(Error::Game(issues.join("; ")));
        }
        let report = audit_separability(spec, ASSEMBLE_AUDIT_SAMPLES, ASSEMBLE_AUDIT_SEED);
        if !report.passed {
            let worst = report
                .offenders
                .iter()
                .max_by(|a, b| a.magnitude.total_cmp(&b.magnitude))
                .expect("failed audit must name an offender");
            return Err(Error::NotSeparable {
                agent: worst.agent,
                other: worst.other,
                block: worst.block,
                magnitude: worst.magnitude,
            });
        }
        Ok(Self { spec: spec.clone() })
    }

    pub fn spec(&self) -> &GameSpec {
        &self.spec
    }

    /// Summed stage cost at `(x, u, k)`.
    pub fn running_cost(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> f64 {
        (0..self.spec.num_agents())
            .map(|i| self.spec.agent_running_cost(i, x, u, k))
            .sum()
    }

    /// Summed terminal cost at `x`.
    pub fn terminal_cost(&self, x: &DVector<f64>) -> f64 {
        (0..self.spec.num_agents())
            .map(|i| self.spec.agent_terminal_cost(i, x))
            .sum()
    }

    /// Objective of a full trajectory.
    pub fn objective(&self, traj: &Trajectory) -> f64 {
        let mut total = 0.0;
        for k in 0..traj.controls.len() {
            total += self.running_cost(&traj.states[k], &traj.controls[k], k);
        }
        total + self.terminal_cost(&traj.states[traj.controls.len()])
    }

    /// Gradient and Hessian blocks of the summed stage cost. Quadratic agents
    /// contribute analytically; custom agents by central differences over the
    /// joint point.
    pub fn running_expansion(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> CostExpansion {
        let n = self.spec.state_dim();
        let m = self.spec.control_dim();
        let mut e = CostExpansion::zeros(n, m);
        for (i, cost) in self.spec.costs().iter().enumerate() {
            match cost {
                AgentCost::Quadratic(q) => {
                    let xb = self.spec.dynamics().state_block(i);
                    let ub = self.spec.dynamics().control_block(i);
                    let dx = x.rows(xb.start, xb.len()) - &q.goal;
                    let gx = &q.state_weight * dx;
                    let gu = &q.control_weight * u.rows(ub.start, ub.len());
                    e.x.rows_mut(xb.start, xb.len()).copy_from(&gx);
                    e.u.rows_mut(ub.start, ub.len()).copy_from(&gu);
                    e.xx
                        .view_mut((xb.start, xb.start), (xb.len(), xb.len()))
                        .copy_from(&q.state_weight);
                    e.uu
                        .view_mut((ub.start, ub.start), (ub.len(), ub.len()))
                        .copy_from(&q.control_weight);
                }
                AgentCost::Custom { running, .. } => {
                    let f = |z: &DVector<f64>| {
                        let xs = z.rows(0, n).into_owned();
                        let us = z.rows(n, m).into_owned();
                        running(&xs, &us, k)
                    };
                    let mut z = DVector::zeros(n + m);
                    z.rows_mut(0, n).copy_from(x);
                    z.rows_mut(n, m).copy_from(u);
                    let g = fd::gradient(&f, &z, CUSTOM_GRADIENT_STEP);
                    let h = fd::hessian(&f, &z, CUSTOM_HESSIAN_STEP);
                    e.x += g.rows(0, n).into_owned();
                    e.u += g.rows(n, m).into_owned();
                    e.xx += h.view((0, 0), (n, n)).into_owned();
                    e.uu += h.view((n, n), (m, m)).into_owned();
                    e.ux += h.view((n, 0), (m, n)).into_owned();
                }
            }
        }
        e
    }

    /// Gradient and Hessian of the summed terminal cost.
    pub fn terminal_expansion(&self, x: &DVector<f64>) -> TerminalCostExpansion {
        let n = self.spec.state_dim();
        let mut gx = DVector::zeros(n);
        let mut hxx = DMatrix::zeros(n, n);
        for (i, cost) in self.spec.costs().iter().enumerate() {
            match cost {
                AgentCost::Quadratic(q) => {
                    let xb = self.spec.dynamics().state_block(i);
                    let dx = x.rows(xb.start, xb.len()) - &q.goal;
                    gx.rows_mut(xb.start, xb.len())
                        .copy_from(&(&q.terminal_weight * dx));
                    hxx.view_mut((xb.start, xb.start), (xb.len(), xb.len()))
                        .copy_from(&q.terminal_weight);
                }
                AgentCost::Custom { terminal, .. } => {
                    let f = |z: &DVector<f64>| terminal(z);
                    gx += fd::gradient(&f, x, CUSTOM_GRADIENT_STEP);
                    hxx += fd::hessian(&f, x, CUSTOM_HESSIAN_STEP);
                }
            }
        }
        TerminalCostExpansion { x: gx, xx: hxx }
    }
}

#[derive(Clone, Debug)]
pub struct ConditionFailure {
    pub trial: usize,
    pub agent: usize,
    pub delta_agent: f64,
    pub delta_potential: f64,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct ConditionReport {
    pub trials: usize,
    pub max_residual: f64,
    pub failures: Vec<ConditionFailure>,
    pub passed: bool,
}

/// Check the defining identity of an exact potential on random unilateral
/// deviations: the change of agent `i`'s cost must equal the change of the
/// summed objective whenever only agent `i`'s controls move.
pub fn verify_potential_condition(spec: &GameSpec, trials: usize, seed: u64) -> Result<ConditionReport> {
    let ocp = PotentialOcp { spec: spec.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = spec.control_dim();
    let mut failures = Vec::new();
    let mut max_residual = 0.0f64;
    for trial in 0..trials {
        let base: Vec<DVector<f64>> = (0..spec.horizon())
            .map(|_| DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let agent = rng.random_range(0..spec.num_agents());
        let ub = spec.dynamics().control_block(agent);
        let mut deviated = base.clone();
        for u in &mut deviated {
            for c in ub.clone() {
                u[c] = rng.random_range(-1.0..1.0);
            }
        }
        let t_base = spec.rollout(&base)?;
        let t_dev = spec.rollout(&deviated)?;
        let delta_agent = t_base.cost_per_agent[agent] - t_dev.cost_per_agent[agent];
        let delta_potential = ocp.objective(&t_base) - ocp.objective(&t_dev);
        let residual = (delta_agent - delta_potential).abs() / (1.0 + delta_potential.abs());
        max_residual = max_residual.max(residual);
        if residual > POTENTIAL_CONDITION_TOL {
            failures.push(ConditionFailure {
                trial,
                agent,
                delta_agent,
                delta_potential,
                residual,
            });
        }
    }
    Ok(ConditionReport {
        trials,
        max_residual,
        passed: failures.is_empty(),
        failures,
    })
}
