//! Receding-horizon execution.
//!
//! Each step replans the game from the current joint state over a short
//! window, executes the first planned control, and advances. Agents can be
//! scripted: their controls come from a fixed sequence instead of the
//! optimizer, and the remaining agents plan against them through the
//! frozen-agent reduction. A replan that fails to converge is recorded in
//! the log and, by default, stops the run.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::GameSpec;
use crate::potential::PotentialOcp;
use crate::reduce::FrozenGame;
use crate::solver::{solve, SolveResult, SolverOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmStart {
    /// Reuse the previous plan shifted by one step, repeating its last entry.
    Shift,
    /// Start every replan from zero controls.
    Zero,
}

/// An agent driven by a fixed control sequence instead of the optimizer.
#[derive(Clone, Debug)]
pub struct ScriptedAgent {
    pub agent: usize,
    /// Own-block controls, one per executed step; replans peeking past the
    /// end see the last entry repeated.
    pub controls: Vec<DVector<f64>>,
}

#[derive(Clone, Debug)]
pub struct MpcConfig {
    /// Steps in each replanning window.
    pub planning_horizon: usize,
    /// Steps actually executed.
    pub total_steps: usize,
    pub warm_start: WarmStart,
    pub scripted: Vec<ScriptedAgent>,
    /// Keep executing after a failed replan instead of stopping.
    pub continue_on_failure: bool,
}

impl MpcConfig {
    pub fn new(planning_horizon: usize, total_steps: usize) -> Self {
        Self {
            planning_horizon,
            total_steps,
            warm_start: WarmStart::Shift,
            scripted: Vec::new(),
            continue_on_failure: false,
        }
    }

    /// Window and duration given in seconds, rounded to whole steps of size
    /// `step_size`.
    pub fn from_seconds(step_size: f64, horizon_seconds: f64, total_seconds: f64) -> Self {
        let planning = (horizon_seconds / step_size).round().max(1.0) as usize;
        let total = (total_seconds / step_size).round().max(1.0) as usize;
        Self::new(planning, total)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ReplanRecord {
    pub step: usize,
    pub converged: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub objective: f64,
    pub max_violation: f64,
    pub solve_ms: f64,
}

impl ReplanRecord {
    fn from_result(step: usize, result: &SolveResult) -> Self {
        Self {
            step,
            converged: result.converged,
            outer_iterations: result.outer_iterations,
            inner_iterations: result.inner_iterations,
            objective: result.objective,
            max_violation: result.max_violation,
            solve_ms: result.solve_ms,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ClosedLoopLog {
    /// Executed joint states, one more than the executed controls.
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub replans: Vec<ReplanRecord>,
    /// Whether all `total_steps` were executed.
    pub completed: bool,
    pub all_converged: bool,
}

impl ClosedLoopLog {
    pub fn state_vectors(&self) -> Vec<DVector<f64>> {
        self.states
            .iter()
            .map(|s| DVector::from_row_slice(s))
            .collect()
    }
}

/// Run the closed loop. The game's own horizon is ignored in favor of the
/// config's planning window; its initial state seeds the loop.
pub fn run_mpc(
    spec: &GameSpec,
    config: &MpcConfig,
    solver_options: &SolverOptions,
) -> Result<ClosedLoopLog> {
    if config.planning_horizon == 0 || config.total_steps == 0 {
        return Err(Error::Options(
            "planning horizon and total steps must be positive".into(),
        ));
    }
    let n_agents = spec.num_agents();
    let mut scripted_ids = Vec::new();
    for s in &config.scripted {
        if s.agent >= n_agents {
            return Err(Error::Game(format!(
                "scripted agent {} out of range, game has {n_agents}",
                s.agent
            )));
        }
        if scripted_ids.contains(&s.agent) {
            return Err(Error::Game(format!("agent {} scripted twice", s.agent)));
        }
        let m = spec.dynamics().control_block(s.agent).len();
        if s.controls.is_empty() || s.controls.iter().any(|u| u.len() != m) {
            return Err(Error::Dimension(format!(
                "script for agent {} must be non-empty with controls of length {m}",
                s.agent
            )));
        }
        scripted_ids.push(s.agent);
    }
    let kept: Vec<usize> = (0..n_agents)
        .filter(|a| !scripted_ids.contains(a))
        .collect();
    if kept.is_empty() {
        return Err(Error::Game("every agent is scripted, nothing to plan".into()));
    }

    let horizon = config.planning_horizon;
    let m_joint = spec.control_dim();
    let template = spec.with_horizon(horizon)?;

    let mut states: Vec<DVector<f64>> = vec![spec.initial_state().clone()];
    let mut executed: Vec<DVector<f64>> = Vec::new();
    let mut replans = Vec::new();
    let mut prev_plan: Option<Vec<DVector<f64>>> = None;
    let mut completed = true;

    for step in 0..config.total_steps {
        let working = template.with_initial_state(states[step].clone())?;
        let mut init: Vec<DVector<f64>> = match (config.warm_start, &prev_plan) {
            (WarmStart::Shift, Some(plan)) => {
                let mut shifted: Vec<DVector<f64>> = plan[1..].to_vec();
                shifted.push(plan[plan.len() - 1].clone());
                shifted
            }
            _ => vec![DVector::zeros(m_joint); horizon],
        };
        for s in &config.scripted {
            let block = spec.dynamics().control_block(s.agent);
            for (j, u) in init.iter_mut().enumerate() {
                let at = (step + j).min(s.controls.len() - 1);
                u.rows_mut(block.start, block.len())
                    .copy_from(&s.controls[at]);
            }
        }

        let (plan, record) = if config.scripted.is_empty() {
            let ocp = PotentialOcp::assemble(&working)?;
            let result = solve(&ocp, Some(&init), solver_options)?;
            let record = ReplanRecord::from_result(step, &result);
            (result.trajectory.controls, record)
        } else {
            let frozen = FrozenGame::new(&working, &kept, &init)?;
            let ocp = PotentialOcp::assemble(frozen.spec())?;
            let warm = frozen.reduced_controls(&init);
            let result = solve(&ocp, Some(&warm), solver_options)?;
            let record = ReplanRecord::from_result(step, &result);
            (frozen.lift_controls(&result.trajectory.controls), record)
        };

        let converged = record.converged;
        replans.push(record);
        if !converged && !config.continue_on_failure {
            completed = false;
            break;
        }

        let u = plan[0].clone();
        let next = spec.dynamics().step(&states[step], &u, step);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                step,
                what: "executed state is non-finite".into(),
            });
        }
        states.push(next);
        executed.push(u);
        prev_plan = Some(plan);
    }

    let all_converged = !replans.is_empty() && replans.iter().all(|r| r.converged);
    Ok(ClosedLoopLog {
        states: states.iter().map(|x| x.as_slice().to_vec()).collect(),
        controls: executed.iter().map(|u| u.as_slice().to_vec()).collect(),
        replans,
        completed,
        all_converged,
    })
}
