//! On-disk shapes written by the subcommands.
//!
//! Every output embeds the scenario it was computed from plus its content
//! hash, so a file alone is enough to reproduce or re-check the run. Wall
//! clock readings are confined to the `timing` object and to fields ending
//! in `_ms`; everything else is a deterministic function of the inputs.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use tpg::{
    BenchReport, BenchmarkConfig, CertifiedSolve, ClosedLoopLog, Error, GameSpec, MultiplierState,
    NashCertificate, OuterRecord, PolishOutcome, ScenarioFile, SolverOptions, Trajectory,
};

#[derive(Serialize)]
pub struct Timing {
    pub solve_ms: f64,
}

/// Trajectory flattened to plain vectors.
#[derive(Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub step_violation: Vec<f64>,
    pub cost_per_agent: Vec<f64>,
    pub potential_value: f64,
}

impl From<&Trajectory> for TrajectoryRecord {
    fn from(traj: &Trajectory) -> Self {
        Self {
            states: traj.states.iter().map(|x| x.as_slice().to_vec()).collect(),
            controls: traj.controls.iter().map(|u| u.as_slice().to_vec()).collect(),
            step_violation: traj.step_violation.clone(),
            cost_per_agent: traj.cost_per_agent.clone(),
            potential_value: traj.potential_value,
        }
    }
}

/// Multiplier estimates flattened to plain vectors, enough to re-check the
/// first-order conditions without solving again.
#[derive(Serialize, Deserialize)]
pub struct MultiplierRecord {
    pub lambda: Vec<Vec<f64>>,
    pub penalty: Vec<Vec<f64>>,
    pub lambda_terminal: Vec<f64>,
    pub penalty_terminal: Vec<f64>,
}

impl From<&MultiplierState> for MultiplierRecord {
    fn from(state: &MultiplierState) -> Self {
        Self {
            lambda: state.lambda.iter().map(|l| l.as_slice().to_vec()).collect(),
            penalty: state.penalty.iter().map(|p| p.as_slice().to_vec()).collect(),
            lambda_terminal: state.lambda_terminal.as_slice().to_vec(),
            penalty_terminal: state.penalty_terminal.as_slice().to_vec(),
        }
    }
}

impl MultiplierRecord {
    /// Rebuild the solver-side state, checking it fits the game.
    pub fn into_state(self, spec: &GameSpec, options: &SolverOptions) -> Result<MultiplierState, Error> {
        let set = spec.constraints();
        let rows = set.running_rows();
        let t_rows = set.terminal_rows();
        let fits = self.lambda.len() == spec.horizon()
            && self.penalty.len() == spec.horizon()
            && self.lambda.iter().all(|l| l.len() == rows)
            && self.penalty.iter().all(|p| p.len() == rows)
            && self.lambda_terminal.len() == t_rows
            && self.penalty_terminal.len() == t_rows;
        if !fits {
            return Err(Error::Dimension(
                "stored multipliers do not match the scenario's constraints".into(),
            ));
        }
        let mut state = MultiplierState::new(set, spec.horizon(), options.initial_penalty);
        state.lambda = self.lambda.into_iter().map(DVector::from_vec).collect();
        state.penalty = self.penalty.into_iter().map(DVector::from_vec).collect();
        state.lambda_terminal = DVector::from_vec(self.lambda_terminal);
        state.penalty_terminal = DVector::from_vec(self.penalty_terminal);
        Ok(state)
    }
}

/// `solve` output: the certified candidate with everything needed to
/// re-check or plot it.
#[derive(Serialize)]
pub struct SolveOutput {
    pub kind: &'static str,
    pub scenario: ScenarioFile,
    pub scenario_hash: String,
    pub converged: bool,
    pub certified: bool,
    pub refinements: usize,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub objective: f64,
    pub max_violation: f64,
    pub polish: PolishOutcome,
    pub history: Vec<OuterRecord>,
    pub certificate: NashCertificate,
    pub trajectory: TrajectoryRecord,
    pub multipliers: MultiplierRecord,
    pub timing: Timing,
}

impl SolveOutput {
    pub fn new(scenario: &ScenarioFile, certified: &CertifiedSolve) -> Self {
        let result = &certified.result;
        Self {
            kind: "solve",
            scenario: scenario.clone(),
            scenario_hash: scenario.hash(),
            converged: result.converged,
            certified: certified.certificate.passed,
            refinements: certified.refinements,
            outer_iterations: result.outer_iterations,
            inner_iterations: result.inner_iterations,
            objective: result.objective,
            max_violation: result.max_violation,
            polish: result.polish,
            history: result.history.clone(),
            certificate: certified.certificate.clone(),
            trajectory: TrajectoryRecord::from(&result.trajectory),
            multipliers: MultiplierRecord::from(&result.multipliers),
            timing: Timing {
                solve_ms: result.solve_ms,
            },
        }
    }
}

/// The slice of a stored `solve` output that `verify` needs. Extra fields
/// are ignored so outputs from newer versions still verify.
#[derive(Deserialize)]
pub struct StoredSolve {
    pub scenario: ScenarioFile,
    pub trajectory: TrajectoryRecord,
    pub multipliers: MultiplierRecord,
}

/// `verify` output.
#[derive(Serialize)]
pub struct VerifyOutput {
    pub kind: &'static str,
    pub input: String,
    pub scenario_hash: String,
    pub objective: f64,
    pub max_violation: f64,
    pub certificate: NashCertificate,
}

/// `mpc` output.
#[derive(Serialize)]
pub struct MpcOutput {
    pub kind: &'static str,
    pub scenario: ScenarioFile,
    pub scenario_hash: String,
    pub planning_horizon: usize,
    pub total_steps: usize,
    pub log: ClosedLoopLog,
}

/// `bench` output.
#[derive(Serialize)]
pub struct BenchOutput {
    pub kind: &'static str,
    pub config: BenchmarkConfig,
    pub report: BenchReport,
}
