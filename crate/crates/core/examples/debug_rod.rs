use nalgebra::DVector;

fn main() {
    let scenario = tpg::four_agent_exchange();
    let spec = scenario.build().unwrap();
    let ocp = tpg::PotentialOcp::assemble(&spec).unwrap();
    let t0 = std::time::Instant::now();
    let result = tpg::solve(&ocp, None, &scenario.solver).unwrap();
    let ms = t0.elapsed().as_secs_f64() * 1e3;
    let mut min_dist = f64::INFINITY;
    for x in &result.trajectory.states {
        for i in 0..4 {
            for j in (i + 1)..4 {
                let d = (x.rows(3 * i, 2) - x.rows(3 * j, 2)).norm();
                min_dist = min_dist.min(d);
            }
        }
    }
    let last = result.trajectory.states.last().unwrap();
    let worst_miss = (0..4)
        .map(|i| {
            let goal = DVector::from_row_slice(&scenario.agents[i].goal_state[..2]);
            (last.rows(3 * i, 2) - goal).norm()
        })
        .fold(0.0_f64, f64::max);
    println!(
        "exchange: {ms:.1} ms, outer {} inner {}, min pair dist {min_dist:.4}, worst miss {worst_miss:.4}",
        result.outer_iterations, result.inner_iterations
    );

    let scenario = tpg::rod_carry();
    let spec = scenario.build().unwrap();
    let config = scenario.mpc_config().unwrap();
    let t0 = std::time::Instant::now();
    let log = tpg::run_mpc(&spec, &config, &scenario.solver).unwrap();
    let ms = t0.elapsed().as_secs_f64() * 1e3;
    let states = log.state_vectors();
    let mut worst_rod = 0.0_f64;
    let mut min_clear = f64::INFINITY;
    for x in &states {
        worst_rod = worst_rod.max(((x.rows(0, 3) - x.rows(6, 3)).norm() - 0.5).abs());
        for qb in [0, 6] {
            for hb in [12, 16] {
                let dxy = ((x[qb] - x[hb]).powi(2) + (x[qb + 1] - x[hb + 1]).powi(2)).sqrt();
                let dz = (x[qb + 2] - x[hb + 2]).abs();
                if dz < 1.0 {
                    min_clear = min_clear.min(dxy - 0.4_f64.sqrt());
                }
            }
        }
    }
    let last = states.last().unwrap();
    let misses: Vec<f64> = (0..4)
        .map(|i| {
            let block = spec.dynamics().state_block(i);
            let goal = DVector::from_row_slice(&scenario.agents[i].goal_state[..2]);
            (last.rows(block.start, 2) - goal).norm()
        })
        .collect();
    let total_inner: usize = log.replans.iter().map(|r| r.inner_iterations).sum();
    println!(
        "rod carry: {ms:.1} ms, {} replans ({total_inner} inner), worst rod err {worst_rod:.2e}, min cylinder clearance {min_clear:.4}, misses {misses:?}",
        log.replans.len()
    );
    let mut max_angle = 0.0_f64;
    for x in &states {
        let angle = (x[7] - x[1]).atan2(x[6] - x[0]).abs();
        max_angle = max_angle.max((std::f64::consts::FRAC_PI_2 - angle).abs());
    }
    println!("rod swing away from +y axis: up to {:.1} degrees", max_angle.to_degrees());
}
// appended: closest approach snapshot printed by a second pass in main above
