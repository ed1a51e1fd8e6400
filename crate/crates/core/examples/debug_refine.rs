use tpg::{BestResponseOptions, PotentialOcp};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let trial: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(66);
    let seed: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0);
    let mut config = tpg::BenchmarkConfig::for_scenario(tpg::four_agent_exchange());
    config.trials = 200;
    config.seed = seed;
    let scenario = config.trial_scenario(trial).unwrap();
    let spec = scenario.build().unwrap();
    let ocp = PotentialOcp::assemble(&spec).unwrap();
    let br_opts = BestResponseOptions {
        solver: scenario.solver.clone(),
        ..Default::default()
    };

    let mut warm: Option<Vec<nalgebra::DVector<f64>>> = None;
    let mut warm_mult: Option<tpg::MultiplierState> = None;
    for round in 0..4 {
        let result = tpg::solve_warm(&ocp, warm.as_deref(), warm_mult.as_ref(), &scenario.solver).unwrap();
        let br = tpg::best_response_gaps(&spec, &result.trajectory, &br_opts).unwrap();
        println!(
            "round {round}: converged {} J {:.6} viol {:.2e} costs {:?} gaps {:?}",
            result.converged,
            result.objective,
            result.max_violation,
            result.trajectory.cost_per_agent.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
            br.gaps.iter().map(|v| format!("{v:.5e}")).collect::<Vec<_>>()
        );
        let mut pick = None;
        let mut best_excess = 0.0;
        for i in 0..br.gaps.len() {
            let excess = br.gaps[i] - br.tolerances[i];
            if br.resolve_converged[i] && excess > best_excess {
                best_excess = excess;
                pick = Some(i);
            }
        }
        let Some(i) = pick else {
            println!("no improving response; stopping");
            break;
        };
        println!("restarting from agent {i}'s response (excess {best_excess:.4})");
        let frozen = tpg::FrozenGame::new(&spec, &[i], &result.trajectory.controls).unwrap();
        let reduced = PotentialOcp::assemble(frozen.spec()).unwrap();
        let reduced_warm = frozen.reduced_controls(&result.trajectory.controls);
        let resolve = tpg::solve(&reduced, Some(&reduced_warm), &br_opts.solver).unwrap();
        let lifted = frozen.lift_controls(&resolve.trajectory.controls);
        let lifted_traj = spec.rollout(&lifted).unwrap();
        println!(
            "  lifted potential {:.6} (candidate was {:.6}), lifted viol {:.2e}",
            lifted_traj.potential_value, result.objective, lifted_traj.max_violation()
        );
        warm = Some(lifted);
        warm_mult = Some(result.multipliers);
    }
}
