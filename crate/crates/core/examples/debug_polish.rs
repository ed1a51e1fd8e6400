fn main() {
    let args: Vec<String> = std::env::args().collect();
    let trial: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(11);
    let mut config = tpg::BenchmarkConfig::for_scenario(tpg::four_agent_exchange());
    config.trials = 30;
    config.seed = 123;
    let scenario = config.trial_scenario(trial).unwrap();
    let spec = scenario.build().unwrap();
    let ocp = tpg::PotentialOcp::assemble(&spec).unwrap();
    for polish in [true, false] {
        let mut opts = scenario.solver.clone();
        opts.polish = polish;
        let result = tpg::solve(&ocp, None, &opts).unwrap();
        let kkt = tpg::kkt_residuals(&ocp, &result.trajectory, &result.multipliers, &Default::default());
        println!(
            "polish {polish}: converged {} viol {:.3e} joint {:.3e} agents {:?} slack {:.3e} dual {:.3e} max {:.3e}",
            result.converged,
            result.max_violation,
            kkt.joint_stationarity,
            kkt.per_agent_stationarity.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>(),
            kkt.complementary_slackness,
            kkt.dual_feasibility,
            kkt.max_residual()
        );
    }
}
