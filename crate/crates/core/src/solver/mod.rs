//! Augmented-Lagrangian iterative LQR over the joint system.
//!
//! The constrained problem is handled in two nested loops. The inner loop
//! runs iterative LQR on the augmented objective: the summed stage cost plus,
//! for every constraint row, `lambda g + (mu / 2) g^2` with the quadratic
//! term switched on only where the row is violated or carries a positive
//! multiplier. The outer loop then updates the multipliers from the residuals
//! (`lambda <- max(0, lambda + mu g)` on inequality rows, unprojected on
//! equality rows), scales the penalties up on rows still violating, and stops
//! once the worst violation is inside tolerance. An optional Gauss-Newton
//! projection tightens active rows afterwards, which matters mostly for
//! equality constraints.

mod ilqr;
mod projection;

pub use ilqr::{backward_pass, forward_pass, AugmentedOcp, BackwardPass, StepExpansion};
pub use projection::{projection_polish, PolishOutcome};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::constraints::{row_violation, ConstraintKind, ConstraintSet};
use crate::error::{Error, Result};
use crate::game::Trajectory;
use crate::potential::PotentialOcp;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Worst constraint violation accepted as converged.
    pub constraint_tol: f64,
    /// Inner loop stops when an iteration improves the augmented objective by
    /// less than this fraction of `1 + |objective|`.
    pub inner_tol: f64,
    /// Stationarity target: the inner loop keeps refining past the decrease
    /// threshold until the augmented gradient falls below this fraction of
    /// `1 + |objective|` or the refinement budget runs out.
    pub gradient_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Initial quadratic penalty weight on every row.
    pub initial_penalty: f64,
    /// Multiplicative penalty escalation for rows still out of tolerance.
    pub penalty_scale: f64,
    pub max_penalty: f64,
    /// Levenberg-style regularization added to the control Hessian, adapted
    /// by factors of ten between these bounds.
    pub reg_init: f64,
    pub reg_min: f64,
    pub reg_max: f64,
    /// Line search shrink factor.
    pub backtrack_factor: f64,
    /// Smallest accepted line search step.
    pub min_step: f64,
    /// Run the active-set projection after convergence.
    pub polish: bool,
    /// Violation level the projection aims for.
    pub polish_tol: f64,
    pub polish_max_steps: usize,
    /// Rows within `active_set_scale * constraint_tol` of the boundary join
    /// the projection's active set.
    pub active_set_scale: f64,
    /// Optional wall-clock cutoff checked between outer iterations.
    pub time_budget_ms: Option<u64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            constraint_tol: 1e-4,
            inner_tol: 1e-6,
            gradient_tol: 1e-10,
            max_outer: 30,
            max_inner: 100,
            initial_penalty: 1.0,
            penalty_scale: 10.0,
            max_penalty: 1e8,
            reg_init: 1e-6,
            reg_min: 1e-9,
            reg_max: 1e9,
            backtrack_factor: 0.5,
            min_step: 1e-8,
            polish: true,
            polish_tol: 1e-8,
            polish_max_steps: 10,
            active_set_scale: 10.0,
            time_budget_ms: None,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        for (name, v) in [
            ("constraint_tol", self.constraint_tol),
            ("inner_tol", self.inner_tol),
            ("gradient_tol", self.gradient_tol),
            ("initial_penalty", self.initial_penalty),
            ("max_penalty", self.max_penalty),
            ("reg_init", self.reg_init),
            ("reg_min", self.reg_min),
            ("reg_max", self.reg_max),
            ("min_step", self.min_step),
            ("polish_tol", self.polish_tol),
            ("active_set_scale", self.active_set_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                bad.push(format!("{name} must be positive, got {v}"));
            }
        }
        if self.penalty_scale <= 1.0 {
            bad.push(format!(
                "penalty_scale must exceed one, got {}",
                self.penalty_scale
            ));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            bad.push(format!(
                "backtrack_factor must lie in (0, 1), got {}",
                self.backtrack_factor
            ));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            bad.push("iteration limits must be at least one".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Options(bad.join("; ")))
        }
    }
}

/// Lagrange multiplier estimates and penalty weights, one entry per
/// constraint row per step plus the terminal rows.
#[derive(Clone, Debug)]
pub struct MultiplierState {
    pub lambda: Vec<DVector<f64>>,
    pub penalty: Vec<DVector<f64>>,
    pub lambda_terminal: DVector<f64>,
    pub penalty_terminal: DVector<f64>,
    running_kinds: Vec<ConstraintKind>,
    terminal_kinds: Vec<ConstraintKind>,
}

impl MultiplierState {
    pub fn new(set: &ConstraintSet, horizon: usize, initial_penalty: f64) -> Self {
        let rows = set.running_rows();
        let t_rows = set.terminal_rows();
        Self {
            lambda: vec![DVector::zeros(rows); horizon],
            penalty: vec![DVector::from_element(rows, initial_penalty); horizon],
            lambda_terminal: DVector::zeros(t_rows),
            penalty_terminal: DVector::from_element(t_rows, initial_penalty),
            running_kinds: set.running_kinds(),
            terminal_kinds: set.terminal_kinds(),
        }
    }

    pub fn running_kinds(&self) -> &[ConstraintKind] {
        &self.running_kinds
    }

    pub fn terminal_kinds(&self) -> &[ConstraintKind] {
        &self.terminal_kinds
    }

    /// Largest penalty weight currently in use.
    pub fn max_penalty(&self) -> f64 {
        let run = self
            .penalty
            .iter()
            .flat_map(|p| p.iter().copied())
            .fold(0.0f64, f64::max);
        self.penalty_terminal
            .iter()
            .copied()
            .fold(run, f64::max)
    }

    fn update_rows(
        lambda: &mut DVector<f64>,
        penalty: &mut DVector<f64>,
        g: &DVector<f64>,
        kinds: &[ConstraintKind],
        opts: &SolverOptions,
    ) {
        for r in 0..g.len() {
            let raised = lambda[r] + penalty[r] * g[r];
            let violation = match kinds[r] {
                ConstraintKind::Inequality => {
                    lambda[r] = raised.max(0.0);
                    g[r].max(0.0)
                }
                ConstraintKind::Equality => {
                    lambda[r] = raised;
                    g[r].abs()
                }
            };
            if violation > opts.constraint_tol {
                penalty[r] = (penalty[r] * opts.penalty_scale).min(opts.max_penalty);
            }
        }
    }
}

/// First-order multiplier update with penalty escalation on rows that remain
/// out of tolerance. `g_running` holds one residual vector per step and
/// `g_terminal` the terminal rows.
pub fn update_multipliers(
    state: &MultiplierState,
    g_running: &[DVector<f64>],
    g_terminal: &DVector<f64>,
    opts: &SolverOptions,
) -> MultiplierState {
    assert_eq!(g_running.len(), state.lambda.len(), "one residual vector per step");
    let mut next = state.clone();
    for (k, g) in g_running.iter().enumerate() {
        MultiplierState::update_rows(
            &mut next.lambda[k],
            &mut next.penalty[k],
            g,
            &state.running_kinds,
            opts,
        );
    }
    MultiplierState::update_rows(
        &mut next.lambda_terminal,
        &mut next.penalty_terminal,
        g_terminal,
        &state.terminal_kinds,
        opts,
    );
    next
}

/// One outer iteration's summary.
#[derive(Clone, Debug, Serialize)]
pub struct OuterRecord {
    pub outer: usize,
    pub objective: f64,
    pub violation: f64,
    pub max_penalty: f64,
    pub inner_iterations: usize,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub trajectory: Trajectory,
    pub multipliers: MultiplierState,
    pub converged: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// Unaugmented summed objective of the returned trajectory.
    pub objective: f64,
    pub max_violation: f64,
    pub history: Vec<OuterRecord>,
    pub polish: PolishOutcome,
    pub solve_ms: f64,
}

/// Minimize the reduced problem from `init` (zero controls when absent).
pub fn solve(
    ocp: &PotentialOcp,
    init: Option<&[DVector<f64>]>,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    solve_warm(ocp, init, None, opts)
}

/// [`solve`] with a multiplier state carried over from an earlier solve of
/// the same problem. Keeping the duals and escalated penalties anchors the
/// run near the warm-start controls, where a cold start would pass back
/// through the weak-penalty phase and can wander into a different basin.
pub fn solve_warm(
    ocp: &PotentialOcp,
    init: Option<&[DVector<f64>]>,
    warm_multipliers: Option<&MultiplierState>,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    opts.validate()?;
    let started = std::time::Instant::now();
    let spec = ocp.spec();
    let horizon = spec.horizon();
    let m = spec.control_dim();

    let mut controls: Vec<DVector<f64>> = match init {
        Some(u0) => {
            if u0.len() != horizon {
                return Err(Error::Dimension(format!(
                    "initial guess has {} controls, horizon is {horizon}",
                    u0.len()
                )));
            }
            u0.to_vec()
        }
        None => vec![DVector::zeros(m); horizon],
    };
    let mut states = roll_states(ocp, &controls)?;

    let mut multipliers = match warm_multipliers {
        Some(w) => {
            let rows = spec.constraints().running_rows();
            let t_rows = spec.constraints().terminal_rows();
            if w.lambda.len() != horizon
                || w.lambda.iter().any(|l| l.len() != rows)
                || w.lambda_terminal.len() != t_rows
            {
                return Err(Error::Dimension(
                    "warm multiplier state does not match the problem".into(),
                ));
            }
            w.clone()
        }
        None => MultiplierState::new(spec.constraints(), horizon, opts.initial_penalty),
    };
    let mut history = Vec::new();
    let mut inner_total = 0;
    let mut converged = false;
    let mut outer_done = 0;

    // Once inside tolerance the loop keeps running multiplier updates while
    // they still shrink the violation quickly, because every such iterate
    // ends inner-minimized: feasibility tightens without giving up
    // stationarity, which a primal-only projection cannot promise. The best
    // converged iterate is kept in case a late update backslides.
    let mut best: Option<(Vec<DVector<f64>>, Vec<DVector<f64>>, MultiplierState, f64)> = None;
    let mut last_converged_violation: Option<f64> = None;
    let mut extra_outers = 0usize;

    for outer in 0..opts.max_outer {
        let aug = AugmentedOcp::new(ocp, &multipliers);
        let inner = ilqr::minimize_inner(&aug, &mut states, &mut controls, opts)?;
        inner_total += inner;
        outer_done = outer + 1;

        let (g_running, g_terminal) = residuals(ocp, &states, &controls);
        let violation = worst_violation(&multipliers, &g_running, &g_terminal);
        history.push(OuterRecord {
            outer,
            objective: objective_of(ocp, &states, &controls),
            violation,
            max_penalty: multipliers.max_penalty(),
            inner_iterations: inner,
        });

        // The update after the final inner solve leaves the best dual
        // estimate in the result either way; penalties only move on rows
        // still out of tolerance.
        multipliers = update_multipliers(&multipliers, &g_running, &g_terminal, opts);

        if violation <= opts.constraint_tol {
            if converged {
                extra_outers += 1;
            }
            converged = true;
            let improved = best.as_ref().map_or(true, |b| violation < b.3);
            if improved {
                best = Some((states.clone(), controls.clone(), multipliers.clone(), violation));
            }
            let stalled = last_converged_violation
                .map_or(false, |prev| violation > 0.9 * prev);
            last_converged_violation = Some(violation);
            if !opts.polish || violation <= opts.polish_tol || !improved || stalled {
                break;
            }
        } else if converged {
            break;
        }
        if let Some(budget) = opts.time_budget_ms {
            if started.elapsed().as_millis() as u64 >= budget {
                break;
            }
        }
    }

    let best_violation = best.as_ref().map(|b| b.3);
    if let Some((s, c, m, _)) = best {
        states = s;
        controls = c;
        multipliers = m;
    }

    let mut polish = PolishOutcome::NotRun;
    if converged && opts.polish {
        if best_violation.is_some_and(|v| v <= opts.polish_tol) {
            polish = PolishOutcome::Refined { extra_outers };
        } else {
            let (ps, pc, outcome) = projection_polish(ocp, &states, &controls, opts)?;
            states = ps;
            controls = pc;
            polish = outcome;
        }
    }

    let trajectory = Trajectory::evaluate(spec, states, controls);
    let objective = ocp.objective(&trajectory);
    let max_violation = trajectory.max_violation();
    Ok(SolveResult {
        trajectory,
        multipliers,
        converged,
        outer_iterations: outer_done,
        inner_iterations: inner_total,
        objective,
        max_violation,
        history,
        polish,
        solve_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

fn roll_states(ocp: &PotentialOcp, controls: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    let spec = ocp.spec();
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(spec.initial_state().clone());
    for (k, u) in controls.iter().enumerate() {
        let next = spec.dynamics().step(&states[k], u, k);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                step: k,
                what: "state is non-finite after stepping".into(),
            });
        }
        states.push(next);
    }
    Ok(states)
}

pub(crate) fn residuals(
    ocp: &PotentialOcp,
    states: &[DVector<f64>],
    controls: &[DVector<f64>],
) -> (Vec<DVector<f64>>, DVector<f64>) {
    let set = ocp.spec().constraints();
    let g_running = (0..controls.len())
        .map(|k| set.eval_running(&states[k], &controls[k], k))
        .collect();
    let g_terminal = set.eval_terminal(&states[controls.len()]);
    (g_running, g_terminal)
}

fn worst_violation(
    mult: &MultiplierState,
    g_running: &[DVector<f64>],
    g_terminal: &DVector<f64>,
) -> f64 {
    let mut worst = 0.0f64;
    for g in g_running {
        worst = worst.max(row_violation(g, mult.running_kinds()));
    }
    worst.max(row_violation(g_terminal, mult.terminal_kinds()))
}

fn objective_of(ocp: &PotentialOcp, states: &[DVector<f64>], controls: &[DVector<f64>]) -> f64 {
    let mut total = 0.0;
    for k in 0..controls.len() {
        total += ocp.running_cost(&states[k], &controls[k], k);
    }
    total + ocp.terminal_cost(&states[controls.len()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::Constraint;
    use crate::cost::{AgentCost, QuadraticCost};
    use crate::dynamics::{AgentModel, JointDynamics};
    use crate::game::GameSpec;
    use crate::potential::{CostExpansion, TerminalCostExpansion};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn scalar_push_spec(constraints: Vec<Constraint>) -> GameSpec {
        let dynamics =
            JointDynamics::new(vec![AgentModel::SingleIntegrator { dim: 1 }], 0.1).unwrap();
        let cost =
            AgentCost::Quadratic(QuadraticCost::from_diagonals(&[0.0], &[0.1], &[10.0], &[5.0]));
        GameSpec::new(
            dynamics,
            vec![cost],
            ConstraintSet::new(constraints),
            5,
            DVector::zeros(1),
        )
        .unwrap()
    }

    fn single_row_state(lambda: f64, penalty: f64, kind: ConstraintKind) -> MultiplierState {
        MultiplierState {
            lambda: vec![DVector::from_element(1, lambda)],
            penalty: vec![DVector::from_element(1, penalty)],
            lambda_terminal: DVector::zeros(0),
            penalty_terminal: DVector::zeros(0),
            running_kinds: vec![kind],
            terminal_kinds: vec![],
        }
    }

    #[test]
    fn inequality_update_projects_and_escalates() {
        let opts = SolverOptions::default();

        let state = single_row_state(2.0, 10.0, ConstraintKind::Inequality);
        let next = update_multipliers(
            &state,
            &[DVector::from_element(1, -0.1)],
            &DVector::zeros(0),
            &opts,
        );
        assert_relative_eq!(next.lambda[0][0], 1.0);
        assert_relative_eq!(next.penalty[0][0], 10.0);

        let state = single_row_state(0.0, 1.0, ConstraintKind::Inequality);
        let next = update_multipliers(
            &state,
            &[DVector::from_element(1, 0.5)],
            &DVector::zeros(0),
            &opts,
        );
        assert_relative_eq!(next.lambda[0][0], 0.5);
        assert_relative_eq!(next.penalty[0][0], 10.0);

        let state = single_row_state(1.0, 10.0, ConstraintKind::Inequality);
        let next = update_multipliers(
            &state,
            &[DVector::from_element(1, -0.5)],
            &DVector::zeros(0),
            &opts,
        );
        assert_relative_eq!(next.lambda[0][0], 0.0);
    }

    #[test]
    fn equality_update_is_unprojected_and_escalates_on_residual() {
        let opts = SolverOptions::default();
        let state = single_row_state(1.0, 10.0, ConstraintKind::Equality);
        let next = update_multipliers(
            &state,
            &[DVector::from_element(1, 0.02)],
            &DVector::zeros(0),
            &opts,
        );
        assert_relative_eq!(next.lambda[0][0], 1.2);
        assert_relative_eq!(next.penalty[0][0], 100.0);

        let next = update_multipliers(
            &state,
            &[DVector::from_element(1, -0.3)],
            &DVector::zeros(0),
            &opts,
        );
        assert_relative_eq!(next.lambda[0][0], -2.0);
    }

    #[test]
    fn penalty_saturates_at_the_cap() {
        let opts = SolverOptions {
            max_penalty: 50.0,
            ..SolverOptions::default()
        };
        let mut state = single_row_state(0.0, 10.0, ConstraintKind::Inequality);
        for _ in 0..3 {
            state = update_multipliers(
                &state,
                &[DVector::from_element(1, 1.0)],
                &DVector::zeros(0),
                &opts,
            );
        }
        assert_relative_eq!(state.penalty[0][0], 50.0);
    }

    #[test]
    fn backward_pass_on_zero_cost_returns_zero_policy() {
        let steps: Vec<StepExpansion> = (0..4)
            .map(|_| StepExpansion {
                a: DMatrix::identity(2, 2),
                b: DMatrix::identity(2, 2),
                cost: CostExpansion::zeros(2, 2),
            })
            .collect();
        let terminal = TerminalCostExpansion {
            x: DVector::zeros(2),
            xx: DMatrix::zeros(2, 2),
        };
        let bp = backward_pass(&steps, &terminal, 1e-6).unwrap();
        for k in 0..4 {
            assert_relative_eq!(bp.feedforward[k].norm(), 0.0);
            assert_relative_eq!(bp.gains[k].norm(), 0.0);
        }
        assert_relative_eq!(bp.expected_decrease(1.0), 0.0);
    }

    #[test]
    fn backward_pass_reports_indefinite_hessian() {
        let mut cost = CostExpansion::zeros(1, 1);
        cost.uu[(0, 0)] = -1.0;
        let steps = vec![StepExpansion {
            a: DMatrix::identity(1, 1),
            b: DMatrix::identity(1, 1),
            cost,
        }];
        let terminal = TerminalCostExpansion {
            x: DVector::zeros(1),
            xx: DMatrix::zeros(1, 1),
        };
        assert!(matches!(backward_pass(&steps, &terminal, 1e-6), Err(0)));
    }

    #[test]
    fn unconstrained_problem_converges_in_one_outer_iteration() {
        let spec = scalar_push_spec(vec![]);
        let ocp = PotentialOcp::assemble(&spec).unwrap();
        let result = solve(&ocp, None, &SolverOptions::default()).unwrap();

        assert!(result.converged);
        assert_eq!(result.outer_iterations, 1);
        assert_eq!(result.max_violation, 0.0);
        assert_eq!(result.polish, PolishOutcome::Refined { extra_outers: 0 });

        // Stationarity of the objective in the stacked controls.
        let flat = DVector::from_iterator(
            spec.horizon(),
            result.trajectory.controls.iter().map(|u| u[0]),
        );
        let grad = crate::fd::gradient(
            &|v| {
                let controls: Vec<DVector<f64>> =
                    v.iter().map(|&u| DVector::from_element(1, u)).collect();
                ocp.objective(&spec.rollout(&controls).unwrap())
            },
            &flat,
            1e-6,
        );
        assert!(grad.amax() < 1e-5, "gradient at the solution: {grad}");
    }

    #[test]
    fn inactive_constraints_reproduce_the_unconstrained_solution() {
        let plain = {
            let spec = scalar_push_spec(vec![]);
            let ocp = PotentialOcp::assemble(&spec).unwrap();
            solve(&ocp, None, &SolverOptions::default()).unwrap()
        };
        let spec = scalar_push_spec(vec![Constraint::control_bound(
            &JointDynamics::new(vec![AgentModel::SingleIntegrator { dim: 1 }], 0.1).unwrap(),
            0,
            &[100.0],
        )]);
        let ocp = PotentialOcp::assemble(&spec).unwrap();
        let bounded = solve(&ocp, None, &SolverOptions::default()).unwrap();

        assert!(bounded.converged);
        assert_eq!(bounded.outer_iterations, 1);
        for k in 0..spec.horizon() {
            assert_relative_eq!(
                bounded.trajectory.controls[k][0],
                plain.trajectory.controls[k][0],
                epsilon = 1e-10
            );
        }
        assert!(bounded.multipliers.lambda.iter().all(|l| l.amax() == 0.0));
    }

    #[test]
    fn active_control_bound_is_respected_with_positive_multiplier() {
        let dynamics =
            JointDynamics::new(vec![AgentModel::SingleIntegrator { dim: 1 }], 0.1).unwrap();
        let bound = Constraint::control_bound(&dynamics, 0, &[1.0]);
        let spec = scalar_push_spec(vec![bound]);
        let ocp = PotentialOcp::assemble(&spec).unwrap();
        let result = solve(&ocp, None, &SolverOptions::default()).unwrap();

        assert!(result.converged);
        assert!(result.max_violation <= 1e-8, "violation {}", result.max_violation);
        for u in &result.trajectory.controls {
            assert!(u[0] <= 1.0 + 1e-8);
        }
        // The upper bound row binds at the first step, so its multiplier is
        // strictly positive.
        assert!(result.multipliers.lambda[0][0] > 0.0);
    }

    #[test]
    fn rod_equality_is_tightened_past_the_outer_tolerance() {
        let dynamics = JointDynamics::new(
            vec![
                AgentModel::SingleIntegrator { dim: 1 },
                AgentModel::SingleIntegrator { dim: 1 },
            ],
            0.1,
        )
        .unwrap();
        let rod = Constraint::rod(&dynamics, 0, 1, 0, 1, 0.5);
        let costs = vec![
            AgentCost::Quadratic(QuadraticCost::from_diagonals(&[1.0], &[0.1], &[10.0], &[1.0])),
            AgentCost::Quadratic(QuadraticCost::from_diagonals(&[1.0], &[0.1], &[10.0], &[1.5])),
        ];
        let spec = GameSpec::new(
            dynamics,
            costs,
            ConstraintSet::new(vec![rod]),
            10,
            DVector::from_row_slice(&[0.0, 0.5]),
        )
        .unwrap();
        let ocp = PotentialOcp::assemble(&spec).unwrap();
        let result = solve(&ocp, None, &SolverOptions::default()).unwrap();

        assert!(result.converged);
        assert!(
            matches!(
                result.polish,
                PolishOutcome::Refined { .. } | PolishOutcome::Converged { .. }
            ),
            "polish {:?}",
            result.polish
        );
        assert!(result.max_violation <= 1e-8, "violation {}", result.max_violation);
        let xt = result.trajectory.states.last().unwrap();
        assert!((xt[0] - 1.0).abs() < 0.05);
        assert!(((xt[1] - xt[0]).abs() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn outer_iterations_reduce_violation_or_raise_penalty() {
        let dynamics = JointDynamics::new(
            vec![
                AgentModel::SingleIntegrator { dim: 2 },
                AgentModel::SingleIntegrator { dim: 2 },
            ],
            0.1,
        )
        .unwrap();
        let collision = Constraint::pairwise_collision(&dynamics, 0, 1, 0, 2, 0.3);
        let costs = vec![
            AgentCost::Quadratic(QuadraticCost::from_diagonals(
                &[1.0, 1.0],
                &[0.1, 0.1],
                &[20.0, 20.0],
                &[1.0, 0.0],
            )),
            AgentCost::Quadratic(QuadraticCost::from_diagonals(
                &[1.0, 1.0],
                &[0.1, 0.1],
                &[20.0, 20.0],
                &[0.0, 0.0],
            )),
        ];
        let spec = GameSpec::new(
            dynamics,
            costs,
            ConstraintSet::new(vec![collision]),
            20,
            DVector::from_row_slice(&[0.0, 0.0, 1.0, 0.0]),
        )
        .unwrap();
        let ocp = PotentialOcp::assemble(&spec).unwrap();
        let result = solve(&ocp, None, &SolverOptions::default()).unwrap();

        assert!(result.converged, "head-on exchange should converge");
        assert!(result.history.len() > 1, "constraint should bind initially");
        for pair in result.history.windows(2) {
            let better = pair[1].violation < pair[0].violation;
            let stiffer = pair[1].max_penalty > pair[0].max_penalty;
            assert!(
                better || stiffer,
                "outer {} neither reduced violation nor raised penalty",
                pair[1].outer
            );
        }
        let traj = &result.trajectory;
        for k in 0..traj.states.len() {
            let x = &traj.states[k];
            let dist = ((x[0] - x[2]).powi(2) + (x[1] - x[3]).powi(2)).sqrt();
            assert!(dist >= 0.3 - 1e-4, "step {k} distance {dist}");
        }
    }

    #[test]
    fn bad_initial_guess_length_is_a_dimension_error() {
        let spec = scalar_push_spec(vec![]);
        let ocp = PotentialOcp::assemble(&spec).unwrap();
        let guess = vec![DVector::zeros(1); 3];
        assert!(matches!(
            solve(&ocp, Some(&guess), &SolverOptions::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn options_validation_rejects_bad_values() {
        let opts = SolverOptions {
            penalty_scale: 0.5,
            ..SolverOptions::default()
        };
        assert!(matches!(opts.validate(), Err(Error::Options(_))));
        let opts = SolverOptions {
            constraint_tol: -1.0,
            ..SolverOptions::default()
        };
        assert!(opts.validate().is_err());
    }
}
