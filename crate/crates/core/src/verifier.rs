//! Equilibrium certification.
//!
//! A converged trajectory is checked three ways, each catching failures the
//! others miss:
//!
//! * first-order residuals of every agent's own problem, with costates
//!   recovered backward along the candidate and the solver's multipliers
//!   standing in for the duals;
//! * best-response resolves, freezing all but one agent and minimizing that
//!   agent's cost from the candidate as a warm start;
//! * on small games, exhaustive enumeration over a control grid.
//!
//! The first-order check exploits the structure twice over: the joint
//! control residual splits into per-agent blocks, and each agent's costate
//! block must reproduce the joint one. A large consistency gap there means
//! the costs were not actually separable, however plausible the residuals
//! look.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::constraints::ConstraintKind;
use crate::cost::AgentCost;
use crate::error::{Error, Result};
use crate::game::{GameSpec, Trajectory};
use crate::potential::PotentialOcp;
use crate::reduce::FrozenGame;
use crate::solver::{solve, solve_warm, MultiplierState, SolveResult, SolverOptions};

#[derive(Clone, Debug, Serialize)]
pub struct KktOptions {
    /// Bound on the scaled stationarity, consistency, and slackness
    /// residuals.
    pub tolerance: f64,
    /// Bound on the worst constraint violation.
    pub primal_tolerance: f64,
    /// Slack allowed below zero for inequality multipliers.
    pub dual_tolerance: f64,
}

impl Default for KktOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-3,
            primal_tolerance: 1e-4,
            dual_tolerance: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KktReport {
    /// Scaled control stationarity of the summed problem.
    pub joint_stationarity: f64,
    /// Scaled control stationarity of each agent's own problem.
    pub per_agent_stationarity: Vec<f64>,
    /// Gap between each agent's recovered costate block and the joint one.
    pub costate_consistency: Vec<f64>,
    /// Worst `|multiplier * residual|` over inequality rows, scaled.
    pub complementary_slackness: f64,
    /// How far any inequality multiplier dips below zero.
    pub dual_feasibility: f64,
    /// Worst constraint violation of the candidate.
    pub primal_feasibility: f64,
    pub passed: bool,
}

impl KktReport {
    /// Largest residual among the checks compared against
    /// [`KktOptions::tolerance`]; primal feasibility has its own tolerance
    /// and is excluded.
    pub fn max_residual(&self) -> f64 {
        let per_agent = self
            .per_agent_stationarity
            .iter()
            .chain(&self.costate_consistency)
            .copied()
            .fold(0.0_f64, f64::max);
        self.joint_stationarity
            .max(per_agent)
            .max(self.complementary_slackness)
            .max(self.dual_feasibility)
    }
}

/// Joint costates of the candidate under the given multipliers. Entry `k`
/// pairs with state `x_k` for `k = 1..=horizon`; entry zero is kept at zero
/// so indices line up with [`Trajectory::states`].
pub fn joint_costates(
    ocp: &PotentialOcp,
    traj: &Trajectory,
    mult: &MultiplierState,
) -> Vec<DVector<f64>> {
    let spec = ocp.spec();
    let set = spec.constraints();
    let horizon = spec.horizon();
    let x_final = &traj.states[horizon];

    let mut xi = vec![DVector::zeros(spec.state_dim()); horizon + 1];
    xi[horizon] = ocp.terminal_expansion(x_final).x;
    if set.terminal_rows() > 0 {
        xi[horizon] += set.terminal_jacobian(x_final).transpose() * &mult.lambda_terminal;
    }
    for k in (1..horizon).rev() {
        let (x, u) = (&traj.states[k], &traj.controls[k]);
        let (a, _) = spec.dynamics().jacobians(x, u, k);
        let mut costate = ocp.running_expansion(x, u, k).x + a.transpose() * &xi[k + 1];
        if set.running_rows() > 0 {
            let (gx, _) = set.running_jacobians(x, u, k);
            costate += gx.transpose() * &mult.lambda[k];
        }
        xi[k] = costate;
    }
    xi
}

/// First-order residuals of the candidate under the given multipliers.
pub fn kkt_residuals(
    ocp: &PotentialOcp,
    traj: &Trajectory,
    mult: &MultiplierState,
    opts: &KktOptions,
) -> KktReport {
    let spec = ocp.spec();
    let set = spec.constraints();
    let dynamics = spec.dynamics();
    let horizon = spec.horizon();
    let n_agents = spec.num_agents();

    struct StageData {
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        gx: DMatrix<f64>,
        gu: DMatrix<f64>,
        g: DVector<f64>,
        pu: DVector<f64>,
    }
    let stages: Vec<StageData> = (0..horizon)
        .map(|k| {
            let (x, u) = (&traj.states[k], &traj.controls[k]);
            let (a, b) = dynamics.jacobians(x, u, k);
            let (gx, gu) = if set.running_rows() > 0 {
                set.running_jacobians(x, u, k)
            } else {
                (
                    DMatrix::zeros(0, spec.state_dim()),
                    DMatrix::zeros(0, spec.control_dim()),
                )
            };
            let g = set.eval_running(x, u, k);
            let e = ocp.running_expansion(x, u, k);
            StageData { a, b, gx, gu, g, pu: e.u }
        })
        .collect();
    let x_final = &traj.states[horizon];
    let gx_terminal = if set.terminal_rows() > 0 {
        set.terminal_jacobian(x_final)
    } else {
        DMatrix::zeros(0, spec.state_dim())
    };
    let g_terminal = set.eval_terminal(x_final);

    let xi = joint_costates(ocp, traj, mult);

    let mut joint_residual = 0.0f64;
    let mut joint_scale = 0.0f64;
    for (k, s) in stages.iter().enumerate() {
        let from_constraints = s.gu.transpose() * &mult.lambda[k];
        let from_costate = s.b.transpose() * &xi[k + 1];
        let residual = &s.pu + &from_constraints + &from_costate;
        joint_residual = joint_residual.max(residual.amax());
        joint_scale = joint_scale
            .max(s.pu.amax())
            .max(from_constraints.amax())
            .max(from_costate.amax());
    }
    let joint_stationarity = joint_residual / (1.0 + joint_scale);

    let mut per_agent_stationarity = Vec::with_capacity(n_agents);
    let mut costate_consistency = Vec::with_capacity(n_agents);
    let mut xi_scale = 0.0f64;
    for k in 1..=horizon {
        xi_scale = xi_scale.max(xi[k].amax());
    }
    for i in 0..n_agents {
        let xb = dynamics.state_block(i);
        let ub = dynamics.control_block(i);

        let mut zeta = agent_terminal_gradient(spec, i, x_final);
        if set.terminal_rows() > 0 {
            zeta += gx_terminal.columns(xb.start, xb.len()).transpose() * &mult.lambda_terminal;
        }
        let mut consistency =
            (&zeta - xi[horizon].rows(xb.start, xb.len())).amax();
        let mut residual = 0.0f64;
        let mut scale = 0.0f64;
        for k in (0..horizon).rev() {
            let s = &stages[k];
            let (own_px, own_pu) =
                agent_running_gradients(spec, i, &traj.states[k], &traj.controls[k], k);

            let from_constraints = s.gu.columns(ub.start, ub.len()).transpose() * &mult.lambda[k];
            let from_costate =
                s.b.view((xb.start, ub.start), (xb.len(), ub.len())).transpose() * &zeta;
            let r = &own_pu + &from_constraints + &from_costate;
            residual = residual.max(r.amax());
            scale = scale
                .max(own_pu.amax())
                .max(from_constraints.amax())
                .max(from_costate.amax());

            if k > 0 {
                zeta = own_px
                    + s.gx.columns(xb.start, xb.len()).transpose() * &mult.lambda[k]
                    + s.a.view((xb.start, xb.start), (xb.len(), xb.len())).transpose() * &zeta;
                consistency = consistency.max((&zeta - xi[k].rows(xb.start, xb.len())).amax());
            }
        }
        per_agent_stationarity.push(residual / (1.0 + scale));
        costate_consistency.push(consistency / (1.0 + xi_scale));
    }

    let mut slackness = 0.0f64;
    let mut multiplier_scale = 0.0f64;
    let mut dual = 0.0f64;
    let running_kinds = set.running_kinds();
    for (k, s) in stages.iter().enumerate() {
        for (r, kind) in running_kinds.iter().enumerate() {
            let lam = mult.lambda[k][r];
            multiplier_scale = multiplier_scale.max(lam.abs());
            if *kind == ConstraintKind::Inequality {
                slackness = slackness.max((lam * s.g[r]).abs());
                dual = dual.max(-lam);
            }
        }
    }
    for (r, kind) in set.terminal_kinds().iter().enumerate() {
        let lam = mult.lambda_terminal[r];
        multiplier_scale = multiplier_scale.max(lam.abs());
        if *kind == ConstraintKind::Inequality {
            slackness = slackness.max((lam * g_terminal[r]).abs());
            dual = dual.max(-lam);
        }
    }
    let complementary_slackness = slackness / (1.0 + multiplier_scale);
    let primal_feasibility = traj.max_violation();

    let passed = joint_stationarity <= opts.tolerance
        && per_agent_stationarity.iter().all(|&r| r <= opts.tolerance)
        && costate_consistency.iter().all(|&r| r <= opts.tolerance)
        && complementary_slackness <= opts.tolerance
        && dual <= opts.dual_tolerance
        && primal_feasibility <= opts.primal_tolerance;

    KktReport {
        joint_stationarity,
        per_agent_stationarity,
        costate_consistency,
        complementary_slackness,
        dual_feasibility: dual,
        primal_feasibility,
        passed,
    }
}

fn agent_running_gradients(
    spec: &GameSpec,
    i: usize,
    x: &DVector<f64>,
    u: &DVector<f64>,
    k: usize,
) -> (DVector<f64>, DVector<f64>) {
    let xb = spec.dynamics().state_block(i);
    let ub = spec.dynamics().control_block(i);
    match &spec.costs()[i] {
        AgentCost::Quadratic(q) => {
            let dx = x.rows(xb.start, xb.len()) - &q.goal;
            let own_u = u.rows(ub.start, ub.len());
            (&q.state_weight * dx, &q.control_weight * own_u)
        }
        AgentCost::Custom { .. } => {
            let own_x = x.rows(xb.start, xb.len()).into_owned();
            let own_u = u.rows(ub.start, ub.len()).into_owned();
            let gx = crate::fd::gradient(
                &|v: &DVector<f64>| {
                    let mut xf = x.clone();
                    xf.rows_mut(xb.start, xb.len()).copy_from(v);
                    spec.agent_running_cost(i, &xf, u, k)
                },
                &own_x,
                1e-6,
            );
            let gu = crate::fd::gradient(
                &|v: &DVector<f64>| {
                    let mut uf = u.clone();
                    uf.rows_mut(ub.start, ub.len()).copy_from(v);
                    spec.agent_running_cost(i, x, &uf, k)
                },
                &own_u,
                1e-6,
            );
            (gx, gu)
        }
    }
}

fn agent_terminal_gradient(spec: &GameSpec, i: usize, x: &DVector<f64>) -> DVector<f64> {
    let xb = spec.dynamics().state_block(i);
    match &spec.costs()[i] {
        AgentCost::Quadratic(q) => {
            let dx = x.rows(xb.start, xb.len()) - &q.goal;
            &q.terminal_weight * dx
        }
        AgentCost::Custom { .. } => {
            let own = x.rows(xb.start, xb.len()).into_owned();
            crate::fd::gradient(
                &|v: &DVector<f64>| {
                    let mut xf = x.clone();
                    xf.rows_mut(xb.start, xb.len()).copy_from(v);
                    spec.agent_terminal_cost(i, &xf)
                },
                &own,
                1e-6,
            )
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BestResponseOptions {
    /// A gap of agent `i` passes when its magnitude is at most
    /// `tolerance_scale * (1 + |J_i|)`.
    pub tolerance_scale: f64,
    #[serde(skip)]
    pub solver: SolverOptions,
}

impl Default for BestResponseOptions {
    fn default() -> Self {
        Self {
            tolerance_scale: 1e-3,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BestResponseReport {
    /// `J_i(candidate) - J_i(best response)` per agent.
    pub gaps: Vec<f64>,
    pub tolerances: Vec<f64>,
    pub resolve_converged: Vec<bool>,
    pub passed: bool,
}

/// Resolve each agent against the others held at the candidate and compare
/// costs. A positive gap beyond tolerance means some agent can improve
/// unilaterally and the candidate is refuted. A negative gap means the
/// resolve lost ground; since the agent's own slice of the candidate is
/// always an admissible response, that refutes nothing and does not fail
/// the check, though the raw value is reported for diagnosis.
pub fn best_response_gaps(
    spec: &GameSpec,
    traj: &Trajectory,
    opts: &BestResponseOptions,
) -> Result<BestResponseReport> {
    Ok(best_responses(spec, traj, opts)?.0)
}

/// The checks behind [`best_response_gaps`], also yielding each agent's
/// response as full joint control profiles for restarts.
fn best_responses(
    spec: &GameSpec,
    traj: &Trajectory,
    opts: &BestResponseOptions,
) -> Result<(BestResponseReport, Vec<Vec<DVector<f64>>>)> {
    let mut gaps = Vec::with_capacity(spec.num_agents());
    let mut tolerances = Vec::with_capacity(spec.num_agents());
    let mut resolve_converged = Vec::with_capacity(spec.num_agents());
    let mut profiles = Vec::with_capacity(spec.num_agents());
    for i in 0..spec.num_agents() {
        let frozen = FrozenGame::new(spec, &[i], &traj.controls)?;
        let reduced_ocp = PotentialOcp::assemble(frozen.spec())?;
        let warm = frozen.reduced_controls(&traj.controls);
        let resolve = solve(&reduced_ocp, Some(&warm), &opts.solver)?;

        let lifted = frozen.lift_controls(&resolve.trajectory.controls);
        let response = spec.rollout(&lifted)?;
        let candidate_cost = traj.cost_per_agent[i];
        gaps.push(candidate_cost - response.cost_per_agent[i]);
        tolerances.push(opts.tolerance_scale * (1.0 + candidate_cost.abs()));
        resolve_converged.push(resolve.converged);
        profiles.push(lifted);
    }
    let passed = gaps
        .iter()
        .zip(&tolerances)
        .zip(&resolve_converged)
        .all(|((g, t), c)| *c && *g <= *t);
    let report = BestResponseReport {
        gaps,
        tolerances,
        resolve_converged,
        passed,
    };
    Ok((report, profiles))
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyOptions {
    pub kkt: KktOptions,
    pub best_response: BestResponseOptions,
    /// How many times [`solve_certified`] may restart from an improving
    /// response before giving up.
    pub max_refinements: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            kkt: KktOptions::default(),
            best_response: BestResponseOptions::default(),
            max_refinements: 3,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NashCertificate {
    pub kkt: KktReport,
    pub best_response: BestResponseReport,
    pub passed: bool,
}

/// Run both certification layers on a candidate.
pub fn certify(
    ocp: &PotentialOcp,
    traj: &Trajectory,
    mult: &MultiplierState,
    opts: &VerifyOptions,
) -> Result<NashCertificate> {
    let kkt = kkt_residuals(ocp, traj, mult, &opts.kkt);
    let best_response = best_response_gaps(ocp.spec(), traj, &opts.best_response)?;
    let passed = kkt.passed && best_response.passed;
    Ok(NashCertificate {
        kkt,
        best_response,
        passed,
    })
}

#[derive(Clone, Debug)]
pub struct CertifiedSolve {
    pub result: SolveResult,
    pub certificate: NashCertificate,
    /// Restarts taken before the returned candidate.
    pub refinements: usize,
}

impl CertifiedSolve {
    pub fn passed(&self) -> bool {
        self.result.converged && self.certificate.passed
    }
}

/// Solve and certify, restarting when the certificate itself hands us a
/// better iterate.
///
/// An agent whose resolve beats the candidate by more than its tolerance has
/// found a lower point of the shared objective, so restarting the joint
/// solve from that agent's lifted response is a descent step rather than a
/// heuristic retry. The loop stops once the certificate passes, no improving
/// response remains, or `max_refinements` restarts are spent; the returned
/// certificate always describes the returned candidate.
pub fn solve_certified(
    ocp: &PotentialOcp,
    init: Option<&[DVector<f64>]>,
    solver: &SolverOptions,
    verify: &VerifyOptions,
) -> Result<CertifiedSolve> {
    let mut warm: Option<Vec<DVector<f64>>> = init.map(<[_]>::to_vec);
    let mut warm_multipliers: Option<MultiplierState> = None;
    let mut refinements = 0;
    loop {
        let result = solve_warm(ocp, warm.as_deref(), warm_multipliers.as_ref(), solver)?;
        let kkt = kkt_residuals(ocp, &result.trajectory, &result.multipliers, &verify.kkt);
        let (best_response, mut profiles) =
            best_responses(ocp.spec(), &result.trajectory, &verify.best_response)?;
        let passed = kkt.passed && best_response.passed;
        let certificate = NashCertificate {
            kkt,
            best_response,
            passed,
        };
        let done = (result.converged && certificate.passed) || refinements >= verify.max_refinements;
        let restart = if done {
            None
        } else {
            let br = &certificate.best_response;
            let mut pick: Option<usize> = None;
            let mut best_excess = 0.0;
            for i in 0..br.gaps.len() {
                let excess = br.gaps[i] - br.tolerances[i];
                if br.resolve_converged[i] && excess > best_excess {
                    best_excess = excess;
                    pick = Some(i);
                }
            }
            pick
        };
        match restart {
            Some(i) => {
                warm = Some(std::mem::take(&mut profiles[i]));
                // The response profile is feasible, so the restarted solve
                // must not pass back through a weak-penalty phase: rows that
                // never escalated would let it tunnel through a constraint
                // and slide home to the basin it just escaped. Flooring every
                // penalty keeps it anchored where the response led.
                let mut mult = result.multipliers;
                let floor = solver.max_penalty.sqrt();
                for step in mult.penalty.iter_mut() {
                    for v in step.iter_mut() {
                        *v = v.max(floor);
                    }
                }
                for v in mult.penalty_terminal.iter_mut() {
                    *v = v.max(floor);
                }
                warm_multipliers = Some(mult);
                refinements += 1;
            }
            None => {
                return Ok(CertifiedSolve {
                    result,
                    certificate,
                    refinements,
                })
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BruteForceOptions {
    /// Grid points per control entry, at most 15.
    pub grid_points: usize,
    /// Scalar control range per agent.
    pub ranges: Vec<(f64, f64)>,
    /// Violations up to this level count as feasible on the grid.
    pub feasibility_tol: f64,
    /// A deviation must improve by more than this to disprove equilibrium.
    pub improvement_tol: f64,
    /// Hard cap on enumerated joint profiles.
    pub max_profiles: u128,
    /// At most this many equilibria are materialized in the report.
    pub max_listed: usize,
}

impl BruteForceOptions {
    pub fn symmetric(grid_points: usize, bound: f64, agents: usize) -> Self {
        Self {
            grid_points,
            ranges: vec![(-bound, bound); agents],
            feasibility_tol: 1e-6,
            improvement_tol: 1e-9,
            max_profiles: 10_000_000,
            max_listed: 256,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BruteForceReport {
    pub profiles: u128,
    pub feasible: usize,
    pub equilibria_count: usize,
    /// Joint control sequences of the first equilibria found, flattened per
    /// step.
    pub equilibria: Vec<Vec<Vec<f64>>>,
    /// Joint control sequence minimizing the summed objective over the
    /// feasible grid.
    pub potential_argmin: Option<Vec<Vec<f64>>>,
    pub argmin_is_equilibrium: bool,
}

/// Exhaustive equilibrium search on a control grid. Supports one or two
/// agents with scalar controls over horizons up to three; anything larger is
/// refused rather than left running.
pub fn brute_force_equilibria(
    spec: &GameSpec,
    opts: &BruteForceOptions,
) -> Result<BruteForceReport> {
    let n_agents = spec.num_agents();
    if n_agents > 2 {
        return Err(Error::Game(format!(
            "grid search supports at most two agents, game has {n_agents}"
        )));
    }
    if spec.horizon() > 3 {
        return Err(Error::Game(format!(
            "grid search supports horizons up to 3, game has {}",
            spec.horizon()
        )));
    }
    for i in 0..n_agents {
        let m = spec.dynamics().control_block(i).len();
        if m != 1 {
            return Err(Error::Game(format!(
                "grid search needs scalar controls, agent {i} has {m}"
            )));
        }
    }
    if opts.grid_points < 2 || opts.grid_points > 15 {
        return Err(Error::Options(format!(
            "grid_points must lie in 2..=15, got {}",
            opts.grid_points
        )));
    }
    if opts.ranges.len() != n_agents {
        return Err(Error::Options(format!(
            "expected {} control ranges, got {}",
            n_agents,
            opts.ranges.len()
        )));
    }

    let horizon = spec.horizon();
    let grid = opts.grid_points;
    let strategies_per_agent = (grid as u128).pow(horizon as u32);
    let profiles = strategies_per_agent.pow(n_agents as u32);
    if profiles > opts.max_profiles {
        return Err(Error::GridTooLarge {
            profiles,
            limit: opts.max_profiles,
        });
    }

    let values: Vec<Vec<f64>> = opts
        .ranges
        .iter()
        .map(|&(lo, hi)| {
            (0..grid)
                .map(|j| lo + (hi - lo) * j as f64 / (grid - 1) as f64)
                .collect()
        })
        .collect();
    let s_per = strategies_per_agent as usize;

    // Decode strategy index -> control value of agent `i` at step `k`.
    let control_at = |i: usize, s: usize, k: usize| -> f64 {
        let digit = (s / grid.pow(k as u32)) % grid;
        values[i][digit]
    };

    let total = if n_agents == 2 { s_per * s_per } else { s_per };
    let mut cost: Vec<Vec<f64>> = vec![vec![0.0; total]; n_agents];
    let mut potential = vec![0.0f64; total];
    let mut feasible = vec![false; total];
    let mut feasible_count = 0usize;

    let mut u = DVector::zeros(spec.control_dim());
    for idx in 0..total {
        let (s0, s1) = if n_agents == 2 {
            (idx / s_per, idx % s_per)
        } else {
            (idx, 0)
        };
        let mut x = spec.initial_state().clone();
        let mut worst = 0.0f64;
        let mut costs = vec![0.0f64; n_agents];
        for k in 0..horizon {
            u[0] = control_at(0, s0, k);
            if n_agents == 2 {
                u[1] = control_at(1, s1, k);
            }
            worst = worst.max(spec.constraints().violation_running(&x, &u, k));
            for (i, c) in costs.iter_mut().enumerate() {
                *c += spec.agent_running_cost(i, &x, &u, k);
            }
            x = spec.dynamics().step(&x, &u, k);
        }
        worst = worst.max(spec.constraints().violation_terminal(&x));
        for (i, c) in costs.iter_mut().enumerate() {
            *c += spec.agent_terminal_cost(i, &x);
        }
        for i in 0..n_agents {
            cost[i][idx] = costs[i];
        }
        potential[idx] = costs.iter().sum();
        if worst <= opts.feasibility_tol {
            feasible[idx] = true;
            feasible_count += 1;
        }
    }

    // Best feasible response value of each agent against each opposing
    // strategy, so the equilibrium test is a table lookup.
    let is_equilibrium: Box<dyn Fn(usize) -> bool> = if n_agents == 2 {
        let mut best0 = vec![f64::INFINITY; s_per];
        let mut best1 = vec![f64::INFINITY; s_per];
        for s0 in 0..s_per {
            for s1 in 0..s_per {
                let idx = s0 * s_per + s1;
                if feasible[idx] {
                    best0[s1] = best0[s1].min(cost[0][idx]);
                    best1[s0] = best1[s0].min(cost[1][idx]);
                }
            }
        }
        let (c0, c1) = (cost[0].clone(), cost[1].clone());
        let feas = feasible.clone();
        let tol = opts.improvement_tol;
        Box::new(move |idx: usize| {
            if !feas[idx] {
                return false;
            }
            let (s0, s1) = (idx / s_per, idx % s_per);
            c0[idx] <= best0[s1] + tol && c1[idx] <= best1[s0] + tol
        })
    } else {
        let best = cost[0]
            .iter()
            .zip(&feasible)
            .filter(|(_, f)| **f)
            .map(|(c, _)| *c)
            .fold(f64::INFINITY, f64::min);
        let c0 = cost[0].clone();
        let feas = feasible.clone();
        let tol = opts.improvement_tol;
        Box::new(move |idx: usize| feas[idx] && c0[idx] <= best + tol)
    };

    let decode = |idx: usize| -> Vec<Vec<f64>> {
        let (s0, s1) = if n_agents == 2 {
            (idx / s_per, idx % s_per)
        } else {
            (idx, 0)
        };
        (0..horizon)
            .map(|k| {
                let mut step = vec![control_at(0, s0, k)];
                if n_agents == 2 {
                    step.push(control_at(1, s1, k));
                }
                step
            })
            .collect()
    };

    let mut equilibria = Vec::new();
    let mut equilibria_count = 0usize;
    let mut argmin: Option<usize> = None;
    for idx in 0..total {
        if feasible[idx] && argmin.map_or(true, |best| potential[idx] < potential[best]) {
            argmin = Some(idx);
        }
        if is_equilibrium(idx) {
            equilibria_count += 1;
            if equilibria.len() < opts.max_listed {
                equilibria.push(decode(idx));
            }
        }
    }
    let argmin_is_equilibrium = argmin.is_some_and(|idx| is_equilibrium(idx));

    Ok(BruteForceReport {
        profiles,
        feasible: feasible_count,
        equilibria_count,
        equilibria,
        potential_argmin: argmin.map(decode),
        argmin_is_equilibrium,
    })
}
