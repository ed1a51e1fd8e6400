//! End-to-end runs of the shipped scenarios: the four-unicycle diagonal
//! exchange as a single solve, and the rod-carry quadrotor run in closed
//! loop. Assertions mirror the guarantees the scenarios are shipped with.

use nalgebra::DVector;
use tpg::{four_agent_exchange, rod_carry, ScenarioFile};

fn pair_distance(x: &DVector<f64>, spec: &tpg::GameSpec, i: usize, j: usize) -> f64 {
    let bi = spec.dynamics().state_block(i);
    let bj = spec.dynamics().state_block(j);
    let (off, dim) = spec
        .dynamics()
        .model(i)
        .position_range()
        .expect("positional model");
    let pi = x.rows(bi.start + off, dim);
    let pj = x.rows(bj.start + off, dim);
    (pi - pj).norm()
}

#[test]
fn four_agent_exchange_solves_cleanly() {
    let scenario = four_agent_exchange();
    let spec = scenario.build().unwrap();
    let ocp = tpg::PotentialOcp::assemble(&spec).unwrap();
    let started = std::time::Instant::now();
    let result = tpg::solve(&ocp, None, &scenario.solver).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    assert!(result.converged, "violation {}", result.max_violation);
    assert!(elapsed < 5.0, "solve took {elapsed:.2} s");

    let mut min_dist = f64::INFINITY;
    for x in &result.trajectory.states {
        for i in 0..4 {
            for j in (i + 1)..4 {
                min_dist = min_dist.min(pair_distance(x, &spec, i, j));
            }
        }
    }
    assert!(min_dist >= 0.3 - 1e-4, "closest approach {min_dist:.5}");

    let last = result.trajectory.states.last().unwrap();
    for (i, agent) in scenario.agents.iter().enumerate() {
        let block = spec.dynamics().state_block(i);
        let pos = last.rows(block.start, 2).into_owned();
        let goal = DVector::from_row_slice(&agent.goal_state[..2]);
        let miss = (pos - goal).norm();
        assert!(miss <= 0.1, "agent {i} missed its goal by {miss:.3} m");
    }
}

#[test]
fn rod_carry_closed_loop_respects_its_envelope() {
    let scenario = rod_carry();
    let spec = scenario.build().unwrap();
    let config = scenario.mpc_config().unwrap();
    let log = tpg::run_mpc(&spec, &config, &scenario.solver).unwrap();
    assert!(log.completed, "run stopped after {} replans", log.replans.len());
    assert!(log.all_converged);

    let states = log.state_vectors();
    let h = spec.dynamics().step_size();
    let feasibility_tol = scenario.solver.constraint_tol;

    for (k, x) in states.iter().enumerate() {
        let rod_error = (pair_distance(x, &spec, 0, 1) - 0.5).abs();
        assert!(rod_error <= 1e-2, "rod error {rod_error:.4} at step {k}");

        for quad in [0, 1] {
            for human in [2, 3] {
                let qb = spec.dynamics().state_block(quad);
                let hb = spec.dynamics().state_block(human);
                let q = x.rows(qb.start, 3);
                let c = x.rows(hb.start, 3);
                let dxy = ((q[0] - c[0]).powi(2) + (q[1] - c[1]).powi(2)).sqrt();
                let dz = (q[2] - c[2]).abs();
                let inside = dxy < 0.4_f64.sqrt() - feasibility_tol && dz < 1.0 - feasibility_tol;
                assert!(
                    !inside,
                    "quad {quad} inside the cylinder of human {human} at step {k}: \
                     radial {dxy:.3}, vertical {dz:.3}"
                );
            }
        }
    }

    for k in 0..states.len() - 1 {
        for (agent, bound) in [(0, 1.2), (1, 1.2), (2, 1.5), (3, 1.5)] {
            let block = spec.dynamics().state_block(agent);
            let (off, pdim) = spec.dynamics().model(agent).position_range().unwrap();
            let now = states[k].rows(block.start + off, pdim).into_owned();
            let next = states[k + 1].rows(block.start + off, pdim).into_owned();
            let speed = (next - now).norm() / h;
            assert!(
                speed <= bound + feasibility_tol,
                "agent {agent} moved at {speed:.3} m/s at step {k}"
            );
        }
    }

    let last = states.last().unwrap();
    for i in 0..4 {
        let block = spec.dynamics().state_block(i);
        let pos = last.rows(block.start, 2).into_owned();
        let goal = DVector::from_row_slice(&scenario.agents[i].goal_state[..2]);
        let miss = (pos - goal).norm();
        assert!(miss <= 0.3, "agent {i} ended {miss:.3} m from its goal");
    }
}

#[test]
fn scenario_files_on_disk_match_the_builtins() {
    for name in tpg::builtin_names() {
        let path = format!("{}/../../scenarios/{name}.json", env!("CARGO_MANIFEST_DIR"));
        let stored = ScenarioFile::from_path(&path)
            .unwrap_or_else(|e| panic!("reading {path}: {e}"));
        let built = tpg::builtin(name).unwrap();
        assert_eq!(stored, built, "{name}.json drifted from the shipped builder");
    }
}
