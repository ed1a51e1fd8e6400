//! Gauss-Newton projection of a converged iterate onto the active rows.
//!
//! The multiplier loop leaves violations at the outer tolerance; equality
//! rows in particular benefit from being tightened further. This pass
//! collects the rows that are violated or within a band of the boundary,
//! differentiates them through the rollout with a single-shooting
//! sensitivity recursion, and takes least-squares steps on the stacked
//! controls until the worst violation is small.

use nalgebra::{DMatrix, DVector};

use crate::constraints::{ConstraintKind, ConstraintSet};
use crate::error::Result;
use crate::potential::PotentialOcp;

use super::SolverOptions;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum PolishOutcome {
    /// The solver did not request the pass.
    NotRun,
    /// Extra multiplier updates alone reached the polish tolerance, so the
    /// returned iterate is still a stationary point of its augmented
    /// objective and no projection was needed.
    Refined { extra_outers: usize },
    /// Worst violation brought inside the polish tolerance.
    Converged { steps: usize },
    /// Violation reduced but the tolerance was out of reach.
    Improved { violation: f64 },
    /// No step reduced the violation; the iterate is returned unchanged.
    NoImprovement,
    /// The active rows were linearly dependent and no progress was possible;
    /// the iterate is returned unchanged.
    RankDeficient,
}

impl PolishOutcome {
    pub fn is_warning(&self) -> bool {
        matches!(self, PolishOutcome::NoImprovement | PolishOutcome::RankDeficient)
    }
}

struct ActiveRow {
    /// Stage index, or `None` for a terminal row.
    step: Option<usize>,
    row: usize,
    residual: f64,
}

pub fn projection_polish(
    ocp: &PotentialOcp,
    states: &[DVector<f64>],
    controls: &[DVector<f64>],
    opts: &SolverOptions,
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>, PolishOutcome)> {
    let spec = ocp.spec();
    let set = spec.constraints();
    let horizon = controls.len();
    let m = spec.control_dim();
    let n = spec.state_dim();

    let mut best_states = states.to_vec();
    let mut best_controls = controls.to_vec();
    let mut best_violation = trajectory_violation(set, &best_states, &best_controls);
    if best_violation <= opts.polish_tol {
        return Ok((best_states, best_controls, PolishOutcome::Converged { steps: 0 }));
    }

    let band = opts.active_set_scale * opts.constraint_tol;
    let initial_violation = best_violation;
    let mut rank_deficient = false;

    for step in 0..opts.polish_max_steps {
        let active = collect_active(set, &best_states, &best_controls, band);
        if active.is_empty() {
            break;
        }

        // Sensitivities of each state w.r.t. the stacked controls, built
        // alongside the rows so every residual is differentiated through
        // the rollout it actually came from.
        let mut jac = DMatrix::<f64>::zeros(active.len(), horizon * m);
        let residual = DVector::from_iterator(active.len(), active.iter().map(|a| a.residual));
        let mut sensitivity = DMatrix::<f64>::zeros(n, horizon * m);
        let mut by_step: Vec<Vec<usize>> = vec![Vec::new(); horizon + 1];
        for (idx, row) in active.iter().enumerate() {
            by_step[row.step.unwrap_or(horizon)].push(idx);
        }

        for k in 0..horizon {
            if !by_step[k].is_empty() {
                let (gx, gu) = set.running_jacobians(&best_states[k], &best_controls[k], k);
                for &idx in &by_step[k] {
                    let r = active[idx].row;
                    let through_state = gx.row(r) * &sensitivity;
                    jac.row_mut(idx).copy_from(&through_state);
                    jac.view_mut((idx, k * m), (1, m)).copy_from(&gu.row(r));
                }
            }
            let (a, b) = spec.dynamics().jacobians(&best_states[k], &best_controls[k], k);
            sensitivity = a * sensitivity;
            sensitivity.view_mut((0, k * m), (n, m)).copy_from(&b);
        }
        if !by_step[horizon].is_empty() {
            let gx = set.terminal_jacobian(&best_states[horizon]);
            for &idx in &by_step[horizon] {
                let through_state = gx.row(active[idx].row) * &sensitivity;
                jac.row_mut(idx).copy_from(&through_state);
            }
        }

        let svd = jac.svd(true, true);
        let max_sv = svd.singular_values.max();
        if !(max_sv.is_finite() && max_sv > 0.0) {
            rank_deficient = true;
            break;
        }
        let eps = max_sv * 1e-12;
        if svd.rank(eps) < active.len() {
            rank_deficient = true;
        }
        let delta = match svd.solve(&(-&residual), eps) {
            Ok(d) => d,
            Err(_) => break,
        };

        let mut improved = false;
        let mut scale = 1.0;
        for _ in 0..6 {
            let candidate: Vec<DVector<f64>> = (0..horizon)
                .map(|k| &best_controls[k] + scale * delta.rows(k * m, m))
                .collect();
            if let Some(candidate_states) = rollout(ocp, &candidate) {
                let violation = trajectory_violation(set, &candidate_states, &candidate);
                if violation < best_violation {
                    best_states = candidate_states;
                    best_controls = candidate;
                    best_violation = violation;
                    improved = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !improved {
            break;
        }
        if best_violation <= opts.polish_tol {
            return Ok((
                best_states,
                best_controls,
                PolishOutcome::Converged { steps: step + 1 },
            ));
        }
    }

    if best_violation < initial_violation {
        Ok((
            best_states,
            best_controls,
            PolishOutcome::Improved {
                violation: best_violation,
            },
        ))
    } else {
        let outcome = if rank_deficient {
            PolishOutcome::RankDeficient
        } else {
            PolishOutcome::NoImprovement
        };
        Ok((states.to_vec(), controls.to_vec(), outcome))
    }
}

fn collect_active(
    set: &ConstraintSet,
    states: &[DVector<f64>],
    controls: &[DVector<f64>],
    band: f64,
) -> Vec<ActiveRow> {
    let mut active = Vec::new();
    let running_kinds = set.running_kinds();
    for k in 0..controls.len() {
        if set.running_rows() == 0 {
            break;
        }
        let g = set.eval_running(&states[k], &controls[k], k);
        for (r, kind) in running_kinds.iter().enumerate() {
            if let Some(residual) = row_residual(*kind, g[r], band) {
                active.push(ActiveRow {
                    step: Some(k),
                    row: r,
                    residual,
                });
            }
        }
    }
    if set.terminal_rows() > 0 {
        let g = set.eval_terminal(&states[controls.len()]);
        for (r, kind) in set.terminal_kinds().iter().enumerate() {
            if let Some(residual) = row_residual(*kind, g[r], band) {
                active.push(ActiveRow {
                    step: None,
                    row: r,
                    residual,
                });
            }
        }
    }
    active
}

fn row_residual(kind: ConstraintKind, g: f64, band: f64) -> Option<f64> {
    match kind {
        ConstraintKind::Equality => Some(g),
        ConstraintKind::Inequality => (g > 0.0 || g.abs() <= band).then(|| g.max(0.0)),
    }
}

fn rollout(ocp: &PotentialOcp, controls: &[DVector<f64>]) -> Option<Vec<DVector<f64>>> {
    let spec = ocp.spec();
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(spec.initial_state().clone());
    for (k, u) in controls.iter().enumerate() {
        let next = spec.dynamics().step(&states[k], u, k);
        if next.iter().any(|v| !v.is_finite()) {
            return None;
        }
        states.push(next);
    }
    Some(states)
}

fn trajectory_violation(
    set: &ConstraintSet,
    states: &[DVector<f64>],
    controls: &[DVector<f64>],
) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..controls.len() {
        worst = worst.max(set.violation_running(&states[k], &controls[k], k));
    }
    worst.max(set.violation_terminal(&states[controls.len()]))
}
