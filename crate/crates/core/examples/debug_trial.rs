fn main() {
    let args: Vec<String> = std::env::args().collect();
    let trial: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(4);
    let seed: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(123);
    let mut config = tpg::BenchmarkConfig::for_scenario(tpg::four_agent_exchange());
    config.trials = 200;
    config.seed = seed;
    let scenario = config.trial_scenario(trial).unwrap();
    for (i, a) in scenario.agents.iter().enumerate() {
        println!(
            "agent {i}: start ({:6.3},{:6.3}) heading {:5.2} goal ({:4.1},{:4.1})",
            a.initial_state[0], a.initial_state[1], a.initial_state[2],
            a.goal_state[0], a.goal_state[1]
        );
    }
    let spec = scenario.build().unwrap();
    let ocp = tpg::PotentialOcp::assemble(&spec).unwrap();
    let verify = tpg::VerifyOptions {
        best_response: tpg::BestResponseOptions {
            solver: scenario.solver.clone(),
            ..Default::default()
        },
        ..Default::default()
    };
    let certified = tpg::solve_certified(&ocp, None, &scenario.solver, &verify).unwrap();
    println!(
        "converged {} refinements {} objective {:.6} viol {:.2e} polish {}",
        certified.result.converged,
        certified.refinements,
        certified.result.objective,
        certified.result.max_violation,
        serde_json::to_string(&certified.result.polish).unwrap()
    );
    let cert = &certified.certificate;
    println!(
        "kkt passed {} joint {:.3e} | br passed {} gaps {:?} resolves {:?}",
        cert.kkt.passed,
        cert.kkt.joint_stationarity,
        cert.best_response.passed,
        cert.best_response.gaps.iter().map(|v| format!("{v:.4e}")).collect::<Vec<_>>(),
        cert.best_response.resolve_converged
    );
    println!(
        "cost per agent {:?}",
        certified.result.trajectory.cost_per_agent.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>()
    );
}
