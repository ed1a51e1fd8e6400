//! Game description and trajectory evaluation.
//!
//! A [`GameSpec`] bundles joint dynamics, one cost per agent, a shared
//! constraint set, a horizon, and the initial joint state. Costs are written
//! per agent; the reduction to a single optimal control problem lives in
//! [`crate::potential`] and is only valid when each agent's cost touches its
//! own blocks alone, which [`audit_separability`] checks numerically.

use nalgebra::DVector;

use crate::cost::AgentCost;
use crate::constraints::ConstraintSet;
use crate::dynamics::JointDynamics;
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Cross-sensitivity above this magnitude fails the separability audit.
pub const SEPARABILITY_TOL: f64 = 1e-7;
/// Finite-difference step factor used by the audit.
const SEPARABILITY_STEP: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct GameSpec {
    dynamics: JointDynamics,
    costs: Vec<AgentCost>,
    constraints: ConstraintSet,
    horizon: usize,
    x0: DVector<f64>,
}

/// Structural problems with a prospective game, one message per violation.
pub fn validate_parts(
    dynamics: &JointDynamics,
    costs: &[AgentCost],
    constraints: &ConstraintSet,
    horizon: usize,
    x0: &DVector<f64>,
) -> Vec<String> {
    let mut issues = Vec::new();
    let n_agents = dynamics.num_agents();
    if horizon == 0 {
        issues.push("horizon must be at least one step".to_string());
    }
    if costs.len() != n_agents {
        issues.push(format!(
            "expected {} agent costs, got {}",
            n_agents,
            costs.len()
        ));
    }
    if x0.len() != dynamics.state_dim() {
        issues.push(format!(
            "initial state has length {}, joint state dimension is {}",
            x0.len(),
            dynamics.state_dim()
        ));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        issues.push("initial state contains non-finite entries".to_string());
    }
    for c in constraints.items() {
        let (ns, ms) = c.dims();
        if ns != dynamics.state_dim() || ms != dynamics.control_dim() {
            issues.push(format!(
                "constraint {} was built for joint dimensions ({ns}, {ms}), game has ({}, {})",
                c.label(),
                dynamics.state_dim(),
                dynamics.control_dim()
            ));
        }
    }
    for (i, cost) in costs.iter().enumerate() {
        if i >= n_agents {
            break;
        }
        if let Some(q) = cost.quadratic() {
            let ni = dynamics.models()[i].state_dim();
            let mi = dynamics.models()[i].control_dim();
            if q.state_weight.nrows() != ni || q.state_weight.ncols() != ni {
                issues.push(format!(
                    "agent {i}: state weight is {}x{}, state dimension is {ni}",
                    q.state_weight.nrows(),
                    q.state_weight.ncols()
                ));
            }
            if q.control_weight.nrows() != mi || q.control_weight.ncols() != mi {
                issues.push(format!(
                    "agent {i}: control weight is {}x{}, control dimension is {mi}",
                    q.control_weight.nrows(),
                    q.control_weight.ncols()
                ));
            }
            if q.terminal_weight.nrows() != ni || q.terminal_weight.ncols() != ni {
                issues.push(format!(
                    "agent {i}: terminal weight is {}x{}, state dimension is {ni}",
                    q.terminal_weight.nrows(),
                    q.terminal_weight.ncols()
                ));
            }
            if q.goal.len() != ni {
                issues.push(format!(
                    "agent {i}: goal has length {}, state dimension is {ni}",
                    q.goal.len()
                ));
            }
            for (name, w) in [
                ("state", &q.state_weight),
                ("control", &q.control_weight),
                ("terminal", &q.terminal_weight),
            ] {
                if w.nrows() == w.ncols() {
                    let asym = (w - w.transpose()).abs().max();
                    if asym > 1e-12 {
                        issues.push(format!("agent {i}: {name} weight is not symmetric"));
                    }
                    if w.diagonal().iter().any(|d| *d < 0.0) {
                        issues.push(format!(
                            "agent {i}: {name} weight has a negative diagonal entry"
                        ));
                    }
                }
            }
        }
    }
    issues
}

impl GameSpec {
    pub fn new(
        dynamics: JointDynamics,
        costs: Vec<AgentCost>,
        constraints: ConstraintSet,
        horizon: usize,
        x0: DVector<f64>,
    ) -> Result<Self> {
        let issues = validate_parts(&dynamics, &costs, &constraints, horizon, &x0);
        if !issues.is_empty() {
            return Err(Error::Game(issues.join("; ")));
        }
        Ok(Self {
            dynamics,
            costs,
            constraints,
            horizon,
            x0,
        })
    }

    pub fn validate(&self) -> Vec<String> {
        validate_parts(
            &self.dynamics,
            &self.costs,
            &self.constraints,
            self.horizon,
            &self.x0,
        )
    }

    pub fn dynamics(&self) -> &JointDynamics {
        &self.dynamics
    }

    pub fn costs(&self) -> &[AgentCost] {
        &self.costs
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn num_agents(&self) -> usize {
        self.dynamics.num_agents()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_state(&self) -> &DVector<f64> {
        &self.x0
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.dynamics.control_dim()
    }

    /// Same game from a different initial state.
    pub fn with_initial_state(&self, x0: DVector<f64>) -> Result<Self> {
        Self::new(
            self.dynamics.clone(),
            self.costs.clone(),
            self.constraints.clone(),
            self.horizon,
            x0,
        )
    }

    /// Same game over a different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        Self::new(
            self.dynamics.clone(),
            self.costs.clone(),
            self.constraints.clone(),
            horizon,
            self.x0.clone(),
        )
    }

    /// Stage cost of agent `i` at the joint point `(x, u, k)`.
    pub fn agent_running_cost(&self, i: usize, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> f64 {
        match &self.costs[i] {
            AgentCost::Quadratic(q) => {
                let xb = self.dynamics.state_block(i);
                let ub = self.dynamics.control_block(i);
                q.running(
                    &x.rows(xb.start, xb.len()).into_owned(),
                    &u.rows(ub.start, ub.len()).into_owned(),
                )
            }
            AgentCost::Custom { running, .. } => running(x, u, k),
        }
    }

    /// Terminal cost of agent `i` at the joint state `x`.
    pub fn agent_terminal_cost(&self, i: usize, x: &DVector<f64>) -> f64 {
        match &self.costs[i] {
            AgentCost::Quadratic(q) => {
                let xb = self.dynamics.state_block(i);
                q.terminal(&x.rows(xb.start, xb.len()).into_owned())
            }
            AgentCost::Custom { terminal, .. } => terminal(x),
        }
    }

    /// Roll the joint dynamics forward under the given control sequence and
    /// evaluate costs and violations along the way.
    pub fn rollout(&self, controls: &[DVector<f64>]) -> Result<Trajectory> {
        if controls.len() != self.horizon {
            return Err(Error::Dimension(format!(
                "expected {} controls, got {}",
                self.horizon,
                controls.len()
            )));
        }
        let m = self.control_dim();
        let mut states = Vec::with_capacity(self.horizon + 1);
        states.push(self.x0.clone());
        for (k, u) in controls.iter().enumerate() {
            if u.len() != m {
                return Err(Error::Dimension(format!(
                    "control {k} has length {}, expected {m}",
                    u.len()
                )));
            }
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged {
                    step: k,
                    what: "control is non-finite".into(),
                });
            }
            let next = self.dynamics.step(&states[k], u, k);
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged {
                    step: k,
                    what: "state is non-finite after stepping".into(),
                });
            }
            states.push(next);
        }
        Ok(Trajectory::evaluate(self, states, controls.to_vec()))
    }
}

/// A joint trajectory with its evaluation record.
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// `horizon + 1` joint states.
    pub states: Vec<DVector<f64>>,
    /// `horizon` joint controls.
    pub controls: Vec<DVector<f64>>,
    /// Worst constraint violation per step; the last entry covers the
    /// terminal rows only.
    pub step_violation: Vec<f64>,
    /// Accumulated cost of each agent.
    pub cost_per_agent: Vec<f64>,
    /// Value of the summed objective (stage sums plus terminal sum).
    pub potential_value: f64,
}

impl Trajectory {
    /// Evaluate costs and violations for states and controls that are already
    /// consistent with the dynamics.
    pub fn evaluate(spec: &GameSpec, states: Vec<DVector<f64>>, controls: Vec<DVector<f64>>) -> Self {
        let n_agents = spec.num_agents();
        let horizon = controls.len();
        let mut cost_per_agent = vec![0.0; n_agents];
        let mut step_violation = Vec::with_capacity(horizon + 1);
        let mut potential_value = 0.0;
        for k in 0..horizon {
            let mut stage_sum = 0.0;
            for (i, acc) in cost_per_agent.iter_mut().enumerate() {
                let c = spec.agent_running_cost(i, &states[k], &controls[k], k);
                *acc += c;
                stage_sum += c;
            }
            potential_value += stage_sum;
            step_violation.push(
                spec.constraints()
                    .violation_running(&states[k], &controls[k], k),
            );
        }
        let last = &states[horizon];
        let mut terminal_sum = 0.0;
        for (i, acc) in cost_per_agent.iter_mut().enumerate() {
            let c = spec.agent_terminal_cost(i, last);
            *acc += c;
            terminal_sum += c;
        }
        potential_value += terminal_sum;
        step_violation.push(spec.constraints().violation_terminal(last));
        Self {
            states,
            controls,
            step_violation,
            cost_per_agent,
            potential_value,
        }
    }

    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn max_violation(&self) -> f64 {
        self.step_violation.iter().copied().fold(0.0, f64::max)
    }
}

/// Freshly evaluated worst violation with the per-step breakdown.
pub fn max_violation(spec: &GameSpec, traj: &Trajectory) -> (f64, Vec<f64>) {
    let mut per_step = Vec::with_capacity(traj.controls.len() + 1);
    for k in 0..traj.controls.len() {
        per_step.push(
            spec.constraints()
                .violation_running(&traj.states[k], &traj.controls[k], k),
        );
    }
    per_step.push(spec.constraints().violation_terminal(&traj.states[traj.controls.len()]));
    (per_step.iter().copied().fold(0.0, f64::max), per_step)
}

#[derive(Clone, Debug)]
pub struct SeparabilityOffender {
    pub agent: usize,
    pub other: usize,
    /// Which foreign block the cost reacted to: "state" or "control".
    pub block: &'static str,
    pub magnitude: f64,
}

#[derive(Clone, Debug)]
pub struct SeparabilityReport {
    pub passed: bool,
    pub worst: f64,
    pub offenders: Vec<SeparabilityOffender>,
    pub samples: usize,
}

/// Probe each agent's cost for sensitivity to other agents' blocks by
/// central differences at `samples` random joint points. Quadratic costs are
/// local by construction and are skipped.
pub fn audit_separability(spec: &GameSpec, samples: usize, seed: u64) -> SeparabilityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.state_dim();
    let m = spec.control_dim();
    let mut worst_by_pair: std::collections::BTreeMap<(usize, usize, &'static str), f64> =
        std::collections::BTreeMap::new();
    for _ in 0..samples {
        let x: DVector<f64> = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let u: DVector<f64> = DVector::from_fn(m, |_, _| rng.random_range(-2.0..2.0));
        let k = rng.random_range(0..spec.horizon());
        for (i, cost) in spec.costs().iter().enumerate() {
            let (running, terminal) = match cost {
                AgentCost::Quadratic(_) => continue,
                AgentCost::Custom { running, terminal } => (running, terminal),
            };
            for j in 0..spec.num_agents() {
                if j == i {
                    continue;
                }
                let xb = spec.dynamics().state_block(j);
                let ub = spec.dynamics().control_block(j);
                let mut xp = x.clone();
                for c in xb.clone() {
                    let h = SEPARABILITY_STEP * (1.0 + x[c].abs());
                    xp[c] = x[c] + h;
                    let fp = running(&xp, &u, k) + terminal(&xp);
                    xp[c] = x[c] - h;
                    let fm = running(&xp, &u, k) + terminal(&xp);
                    xp[c] = x[c];
                    let d = ((fp - fm) / (2.0 * h)).abs();
                    let e = worst_by_pair.entry((i, j, "state")).or_insert(0.0);
                    *e = e.max(d);
                }
                let mut up = u.clone();
                for c in ub.clone() {
                    let h = SEPARABILITY_STEP * (1.0 + u[c].abs());
                    up[c] = u[c] + h;
                    let fp = running(&x, &up, k);
                    up[c] = u[c] - h;
                    let fm = running(&x, &up, k);
                    up[c] = u[c];
                    let d = ((fp - fm) / (2.0 * h)).abs();
                    let e = worst_by_pair.entry((i, j, "control")).or_insert(0.0);
                    *e = e.max(d);
                }
            }
        }
    }
    let mut offenders = Vec::new();
    let mut worst = 0.0f64;
    for ((agent, other, block), magnitude) in worst_by_pair {
        worst = worst.max(magnitude);
        if magnitude > SEPARABILITY_TOL {
            offenders.push(SeparabilityOffender {
                agent,
                other,
                block,
                magnitude,
            });
        }
    }
    SeparabilityReport {
        passed: offenders.is_empty(),
        worst,
        offenders,
        samples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::Constraint;
    use crate::cost::QuadraticCost;
    use crate::dynamics::AgentModel;
    use approx::assert_relative_eq;

    fn unicycle_cost(goal: [f64; 3]) -> AgentCost {
        AgentCost::Quadratic(QuadraticCost::from_diagonals(
            &[1.0, 1.0, 0.1],
            &[0.1, 0.1],
            &[10.0, 10.0, 1.0],
            &goal,
        ))
    }

    fn two_agent_spec() -> GameSpec {
        let dynamics = JointDynamics::new(vec![AgentModel::Unicycle; 2], 0.1).unwrap();
        let constraints = ConstraintSet::new(vec![Constraint::pairwise_collision(
            &dynamics, 0, 1, 0, 2, 0.3,
        )]);
        let x0 = DVector::from_vec(vec![0.0, 0.0, 0.0, 3.0, 0.0, std::f64::consts::PI]);
        GameSpec::new(
            dynamics,
            vec![unicycle_cost([3.0, 0.0, 0.0]), unicycle_cost([0.0, 0.0, std::f64::consts::PI])],
            constraints,
            20,
            x0,
        )
        .unwrap()
    }

    #[test]
    fn valid_spec_passes_validation() {
        assert!(two_agent_spec().validate().is_empty());
    }

    #[test]
    fn wrong_initial_state_length_is_reported() {
        let dynamics = JointDynamics::new(vec![AgentModel::Unicycle; 2], 0.1).unwrap();
        let issues = validate_parts(
            &dynamics,
            &[unicycle_cost([0.0; 3]), unicycle_cost([0.0; 3])],
            &ConstraintSet::empty(),
            10,
            &DVector::zeros(5),
        );
        assert!(issues.iter().any(|s| s.contains("length 5")));
    }

    #[test]
    fn single_agent_quadratic_spec_is_valid() {
        let dynamics = JointDynamics::new(vec![AgentModel::Unicycle], 0.1).unwrap();
        let spec = GameSpec::new(
            dynamics,
            vec![unicycle_cost([1.0, 1.0, 0.0])],
            ConstraintSet::empty(),
            5,
            DVector::zeros(3),
        );
        assert!(spec.is_ok());
    }

    #[test]
    fn zero_controls_keep_unicycles_in_place() {
        let spec = two_agent_spec();
        let traj = spec
            .rollout(&vec![DVector::zeros(4); spec.horizon()])
            .unwrap();
        for x in &traj.states {
            assert_eq!(x, spec.initial_state());
        }
        assert_eq!(traj.max_violation(), 0.0);
    }

    #[test]
    fn single_integrator_accumulates_steps() {
        let dynamics = JointDynamics::new(vec![AgentModel::SingleIntegrator { dim: 1 }], 0.1).unwrap();
        let spec = GameSpec::new(
            dynamics,
            vec![AgentCost::custom(|_, _, _| 0.0, |_| 0.0)],
            ConstraintSet::empty(),
            5,
            DVector::zeros(1),
        )
        .unwrap();
        let traj = spec
            .rollout(&vec![DVector::from_element(1, 1.0); 5])
            .unwrap();
        for (k, x) in traj.states.iter().enumerate() {
            assert_relative_eq!(x[0], 0.1 * k as f64, epsilon = 1e-15);
        }
    }

    #[test]
    fn divergence_reports_the_step() {
        let dynamics = JointDynamics::new(
            vec![AgentModel::Linear {
                a: nalgebra::DMatrix::from_element(1, 1, 1e200),
                b: nalgebra::DMatrix::from_element(1, 1, 1.0),
            }],
            0.1,
        )
        .unwrap();
        let spec = GameSpec::new(
            dynamics,
            vec![AgentCost::custom(|_, _, _| 0.0, |_| 0.0)],
            ConstraintSet::empty(),
            4,
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let err = spec
            .rollout(&vec![DVector::zeros(1); 4])
            .unwrap_err();
        match err {
            Error::Diverged { step, .. } => assert_eq!(step, 1),
            other => panic!("expected divergence, got {other}"),
        }
    }

    #[test]
    fn rollouts_are_bitwise_deterministic() {
        let spec = two_agent_spec();
        let controls: Vec<_> = (0..spec.horizon())
            .map(|k| DVector::from_vec(vec![0.5, 0.1 * k as f64, -0.2, 0.05]))
            .collect();
        let a = spec.rollout(&controls).unwrap();
        let b = spec.rollout(&controls).unwrap();
        for (xa, xb) in a.states.iter().zip(&b.states) {
            assert_eq!(xa, xb);
        }
        assert_eq!(a.potential_value, b.potential_value);
    }

    #[test]
    fn potential_value_sums_agent_costs() {
        let spec = two_agent_spec();
        let controls: Vec<_> = (0..spec.horizon())
            .map(|_| DVector::from_vec(vec![1.0, 0.2, 0.8, -0.1]))
            .collect();
        let traj = spec.rollout(&controls).unwrap();
        let sum: f64 = traj.cost_per_agent.iter().sum();
        assert_relative_eq!(
            traj.potential_value,
            sum,
            epsilon = 1e-10 * (1.0 + sum.abs())
        );
    }

    #[test]
    fn quadratic_costs_pass_the_audit() {
        let report = audit_separability(&two_agent_spec(), 16, 7);
        assert!(report.passed);
        assert_eq!(report.worst, 0.0);
    }

    #[test]
    fn single_agent_games_pass_the_audit() {
        let dynamics = JointDynamics::new(vec![AgentModel::Unicycle], 0.1).unwrap();
        let spec = GameSpec::new(
            dynamics,
            vec![AgentCost::custom(
                |x, u, _| x[0] * x[0] + u.dot(u),
                |x| x[1] * x[1],
            )],
            ConstraintSet::empty(),
            5,
            DVector::zeros(3),
        )
        .unwrap();
        assert!(audit_separability(&spec, 8, 1).passed);
    }

    #[test]
    fn cross_agent_cost_term_is_caught_and_located() {
        let dynamics = JointDynamics::new(vec![AgentModel::Unicycle; 2], 0.1).unwrap();
        let nosy = AgentCost::custom(
            |x: &DVector<f64>, _u, _k| {
                let dx = x[0] - x[3];
                let dy = x[1] - x[4];
                dx * dx + dy * dy
            },
            |_| 0.0,
        );
        let spec = GameSpec::new(
            dynamics,
            vec![nosy, unicycle_cost([0.0; 3])],
            ConstraintSet::empty(),
            5,
            DVector::zeros(6),
        )
        .unwrap();
        let report = audit_separability(&spec, 16, 3);
        assert!(!report.passed);
        assert!(report
            .offenders
            .iter()
            .any(|o| o.agent == 0 && o.other == 1 && o.block == "state"));
    }
}
