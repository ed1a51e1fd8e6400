fn main() {
    let args: Vec<String> = std::env::args().collect();
    let trials: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(30);
    let seed: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(123);
    let mut config = tpg::BenchmarkConfig::for_scenario(tpg::four_agent_exchange());
    config.trials = trials;
    config.seed = seed;
    let t0 = std::time::Instant::now();
    let report = tpg::run_benchmark(&config).unwrap();
    let total = t0.elapsed().as_secs_f64();
    println!(
        "{}/{} converged, certified {:?}, total {total:.1} s, mean {:.1} ms median {:.1} ms max {:.1} ms",
        report.converged_trials,
        report.trials,
        report.all_certified,
        report.timing.mean_ms,
        report.timing.median_ms,
        report.timing.max_ms
    );
    let mut worst_kkt = 0.0_f64;
    let mut worst_gap = f64::NEG_INFINITY;
    let mut refined = 0usize;
    for r in &report.records {
        if !r.converged {
            println!(
                "trial {} failed: viol {:.2e} err {:?}",
                r.trial, r.max_violation, r.error
            );
        }
        if let Some(k) = r.max_kkt_residual {
            worst_kkt = worst_kkt.max(k);
        }
        if let Some(g) = r.max_response_gap {
            worst_gap = worst_gap.max(g);
        }
        refined += r.refinements;
        if r.kkt_passed == Some(false) || r.best_response_passed == Some(false) {
            println!(
                "trial {}: kkt {:?} ({:?}) br {:?} ({:?}) refinements {}",
                r.trial, r.kkt_passed, r.max_kkt_residual, r.best_response_passed,
                r.max_response_gap, r.refinements
            );
        }
    }
    println!("worst kkt residual {worst_kkt:.3e}, worst gap {worst_gap:.3e}, total refinements {refined}");
}
