//! On games with linear dynamics, quadratic costs, and no constraints, the
//! reduced problem is an LQR instance with an exact closed-form solution.
//! The solver has to reproduce that solution to tight accuracy.

use std::time::Instant;

use tpg::{kkt_residuals, solve, KktOptions, PotentialOcp, SolverOptions};
use tpg_testkit::lq::random_lq_instance;
use tpg_testkit::riccati::solve_lqr;

#[test]
fn solver_matches_the_riccati_recursion_on_random_lq_games() {
    for seed in 0..20u64 {
        let instance = random_lq_instance(seed);
        let oracle = solve_lqr(&instance.joint);
        let ocp = PotentialOcp::assemble(&instance.spec).unwrap();

        let started = Instant::now();
        let result = solve(&ocp, None, &SolverOptions::default()).unwrap();
        let elapsed = started.elapsed().as_secs_f64();

        assert!(result.converged, "seed {seed} did not converge");
        let worst = (0..instance.spec.horizon())
            .map(|k| (&result.trajectory.controls[k] - &oracle.controls[k]).amax())
            .fold(0.0f64, f64::max);
        assert!(
            worst <= 1e-8,
            "seed {seed}: control gap {worst:.3e} against the recursion"
        );
        assert!(elapsed < 1.0, "seed {seed} took {elapsed:.3}s");

        let cost_gap = (result.objective - oracle.cost).abs() / (1.0 + oracle.cost.abs());
        assert!(
            cost_gap <= 1e-10,
            "seed {seed}: objective off by {cost_gap:.3e} relative"
        );
    }
}

#[test]
fn verifier_costates_match_the_value_function_gradient() {
    for seed in [2, 9, 17] {
        let instance = random_lq_instance(seed);
        let oracle = solve_lqr(&instance.joint);
        let ocp = PotentialOcp::assemble(&instance.spec).unwrap();
        let result = solve(&ocp, None, &SolverOptions::default()).unwrap();

        let report = kkt_residuals(
            &ocp,
            &result.trajectory,
            &result.multipliers,
            &KktOptions::default(),
        );
        assert!(report.passed, "seed {seed}: {report:?}");
        assert!(
            report.joint_stationarity <= 1e-8,
            "seed {seed}: stationarity {:.3e}",
            report.joint_stationarity
        );

        // The recovered costates are the value function gradients along the
        // optimal trajectory, which the recursion exposes in closed form.
        let costates = tpg::verifier::joint_costates(&ocp, &result.trajectory, &result.multipliers);
        let scale = oracle
            .costates
            .iter()
            .map(|c| c.amax())
            .fold(1.0f64, f64::max);
        for (k, expected) in oracle.costates.iter().enumerate() {
            let gap = (&costates[k + 1] - expected).amax() / scale;
            assert!(
                gap <= 1e-7,
                "seed {seed}, step {}: costate gap {gap:.3e}",
                k + 1
            );
        }
    }
}
