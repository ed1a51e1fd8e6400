//! End-to-end runs of the `tpg` binary: exit codes, output files, and the
//! determinism contract.

use std::path::Path;
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

fn tpg(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_tpg"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).expect("output exists"))
        .expect("output parses")
}

/// Drop wall-clock readings: `timing` objects and any `*_ms` field.
fn strip_timing(value: &mut Value) {
    match value {
        Value::Object(map) => {
            map.retain(|key, _| key != "timing" && !key.ends_with("_ms"));
            map.values_mut().for_each(strip_timing);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

#[test]
fn shipped_scenario_solves_verifies_and_exports() {
    let dir = TempDir::new().unwrap();
    let solved = dir.path().join("solve.json");
    let (code, _, err) = tpg(&[
        "solve",
        "--scenario",
        "four_agent_exchange",
        "--out",
        solved.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");

    let output = read_json(&solved);
    assert_eq!(output["kind"], "solve");
    assert_eq!(output["converged"], true);
    assert_eq!(output["certified"], true);
    assert_eq!(output["scenario"]["agents"].as_array().unwrap().len(), 4);
    assert_eq!(output["scenario_hash"].as_str().unwrap().len(), 64);
    assert_eq!(output["trajectory"]["states"].as_array().unwrap().len(), 51);

    let (code, _, err) = tpg(&["verify", solved.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");

    let table = dir.path().join("table.csv");
    let (code, _, err) = tpg(&[
        "export",
        solved.to_str().unwrap(),
        "--out",
        table.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let csv = std::fs::read_to_string(&table).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "k,agent,p,q,z,theta,min_pair_dist,violation"
    );
    // 51 steps, 4 agents each.
    assert_eq!(lines.count(), 51 * 4);
}

#[test]
fn zero_horizon_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let mut scenario = tpg::four_agent_exchange();
    scenario.horizon_seconds = 0.0;
    let path = dir.path().join("zero.json");
    std::fs::write(&path, scenario.to_json()).unwrap();

    let (code, _, err) = tpg(&["solve", "--scenario", path.to_str().unwrap()]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("covers no steps"), "{err}");
}

#[test]
fn contradictory_constraints_fail_but_leave_diagnostics() {
    let dir = TempDir::new().unwrap();
    let mut scenario = tpg::four_agent_exchange();
    scenario.horizon_seconds = 1.0;
    if let tpg::ConstraintConfig::PairwiseCollisionAll { min_distance } =
        &mut scenario.constraints[0]
    {
        // No placement of four agents in a 3 m arena respects 50 m gaps.
        *min_distance = 50.0;
    } else {
        panic!("expected the collision constraint first");
    }
    let path = dir.path().join("contradictory.json");
    std::fs::write(&path, scenario.to_json()).unwrap();

    let solved = dir.path().join("solve.json");
    let (code, _, err) = tpg(&[
        "solve",
        "--scenario",
        path.to_str().unwrap(),
        "--opts",
        "max_outer=4",
        "--out",
        solved.to_str().unwrap(),
    ]);
    assert_eq!(code, 1, "{err}");

    let output = read_json(&solved);
    assert_eq!(output["converged"], false);
    assert!(output["max_violation"].as_f64().unwrap() > 1.0);
}

#[test]
fn colliding_script_stops_at_the_offending_replan() {
    let dir = TempDir::new().unwrap();
    let mut scenario = tpg::rod_carry();
    let mpc = scenario.mpc.as_mut().unwrap();
    let half_pi = std::f64::consts::FRAC_PI_2;
    // Both humans are scripted: turn in place for a second, then walk
    // head-on along y. Their mutual 0.3 m constraint cannot be repaired by
    // the planned quadrotors, so the replan that first sees the approach
    // must report infeasibility.
    let turn_then_walk = |sign: f64| -> Vec<Vec<f64>> {
        let mut controls = vec![vec![0.0, sign * half_pi]; 10];
        controls.extend(vec![vec![1.5, 0.0]; 50]);
        controls
    };
    mpc.scripts = vec![
        tpg::ScriptConfig {
            agent: 2,
            controls: turn_then_walk(1.0),
        },
        tpg::ScriptConfig {
            agent: 3,
            controls: turn_then_walk(-1.0),
        },
    ];
    let path = dir.path().join("colliding.json");
    std::fs::write(&path, scenario.to_json()).unwrap();

    let log_path = dir.path().join("mpc.json");
    let (code, _, err) = tpg(&[
        "mpc",
        "--scenario",
        path.to_str().unwrap(),
        "--out",
        log_path.to_str().unwrap(),
    ]);
    assert_eq!(code, 1, "{err}");
    assert!(err.contains("did not converge"), "{err}");

    let output = read_json(&log_path);
    let log = &output["log"];
    assert_eq!(log["completed"], false);
    let replans = log["replans"].as_array().unwrap();
    let last = replans.last().unwrap();
    assert_eq!(last["converged"], false);
    assert!(last["max_violation"].as_f64().unwrap() > 0.1);
    for earlier in &replans[..replans.len() - 1] {
        assert_eq!(earlier["converged"], true);
    }
}

#[test]
fn mpc_needs_an_mpc_section_and_positive_duration() {
    let (code, _, err) = tpg(&["mpc", "--scenario", "four_agent_exchange"]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("no mpc section"), "{err}");

    let dir = TempDir::new().unwrap();
    let mut scenario = tpg::rod_carry();
    scenario.mpc.as_mut().unwrap().total_seconds = 0.0;
    let path = dir.path().join("zero_steps.json");
    std::fs::write(&path, scenario.to_json()).unwrap();
    let (code, _, err) = tpg(&["mpc", "--scenario", path.to_str().unwrap()]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("total_seconds"), "{err}");
}

#[test]
fn single_trial_benchmark_repeats_identically() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        let (code, _, err) = tpg(&[
            "bench",
            "--scenario",
            "four_agent_exchange",
            "--trials",
            "1",
            "--seed",
            "42",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "{err}");
    }
    let mut first = read_json(&a);
    let mut second = read_json(&b);
    strip_timing(&mut first);
    strip_timing(&mut second);
    assert_eq!(first, second);

    let report = &first["report"];
    assert_eq!(report["trials"], 1);
    assert_eq!(report["converged_trials"], 1);
    assert_eq!(report["all_certified"], true);
    assert_eq!(report["records"][0]["best_response_passed"], true);
}

#[test]
fn repeated_solves_differ_only_in_timing() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        let (code, _, err) = tpg(&[
            "solve",
            "--scenario",
            "four_agent_exchange",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "{err}");
    }
    let mut first = read_json(&a);
    let mut second = read_json(&b);
    assert_eq!(first["timing"]["solve_ms"].as_f64().unwrap() > 0.0, true);
    strip_timing(&mut first);
    strip_timing(&mut second);
    assert_eq!(first, second);
}

#[test]
fn option_overrides_are_validated_and_recorded() {
    let (code, _, err) = tpg(&[
        "solve",
        "--scenario",
        "four_agent_exchange",
        "--opts",
        "max_outre=5",
    ]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("max_outre"), "{err}");

    let (code, _, err) = tpg(&[
        "solve",
        "--scenario",
        "four_agent_exchange",
        "--opts",
        "inner_tol=tight",
    ]);
    assert_eq!(code, 2, "{err}");

    let dir = TempDir::new().unwrap();
    let out = dir.path().join("solve.json");
    let (code, _, err) = tpg(&[
        "solve",
        "--scenario",
        "four_agent_exchange",
        "--opts",
        "max_outer=25",
        "--opts",
        "polish=false",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let output = read_json(&out);
    assert_eq!(output["scenario"]["solver"]["max_outer"], 25);
    assert_eq!(output["scenario"]["solver"]["polish"], false);
}

#[test]
fn verify_rejects_tampered_trajectories() {
    let dir = TempDir::new().unwrap();
    let solved = dir.path().join("solve.json");
    let (code, _, err) = tpg(&[
        "solve",
        "--scenario",
        "four_agent_exchange",
        "--out",
        solved.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");

    let mut output = read_json(&solved);
    let state = &mut output["trajectory"]["states"][10][0];
    *state = Value::from(state.as_f64().unwrap() + 0.5);
    let edited = dir.path().join("edited.json");
    std::fs::write(&edited, serde_json::to_string(&output).unwrap()).unwrap();

    let (code, _, err) = tpg(&["verify", edited.to_str().unwrap()]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("disagree with a rollout"), "{err}");

    let (code, _, err) = tpg(&["verify", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn export_covers_benchmarks_and_edge_cases() {
    let dir = TempDir::new().unwrap();
    let bench = dir.path().join("bench.json");
    let (code, _, err) = tpg(&[
        "bench",
        "--scenario",
        "four_agent_exchange",
        "--trials",
        "2",
        "--out",
        bench.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let (code, csv, err) = tpg(&["export", bench.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "bin_lo_ms,bin_hi_ms,count");
    let counted: u64 = lines
        .map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(counted, 2);

    // An empty trajectory flattens to just the header.
    let empty = serde_json::json!({
        "kind": "solve",
        "scenario": serde_json::to_value(tpg::four_agent_exchange()).unwrap(),
        "trajectory": {
            "states": [], "controls": [], "step_violation": [],
            "cost_per_agent": [], "potential_value": 0.0
        },
    });
    let empty_path = dir.path().join("empty.json");
    std::fs::write(&empty_path, empty.to_string()).unwrap();
    let (code, csv, err) = tpg(&["export", empty_path.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(csv.trim(), "k,agent,p,q,z,theta,min_pair_dist,violation");

    let garbled = dir.path().join("garbled.json");
    std::fs::write(&garbled, "{not json").unwrap();
    let (code, _, _) = tpg(&["export", garbled.to_str().unwrap()]);
    assert_eq!(code, 2);

    let alien = dir.path().join("alien.json");
    std::fs::write(&alien, "{\"some\": \"object\"}").unwrap();
    let (code, _, err) = tpg(&["export", alien.to_str().unwrap()]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn unknown_scenarios_and_fields_are_input_errors() {
    let (code, _, err) = tpg(&["solve", "--scenario", "no_such_scenario"]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("four_agent_exchange"), "{err}");

    let dir = TempDir::new().unwrap();
    let path = dir.path().join("typo.json");
    let text = tpg::four_agent_exchange()
        .to_json()
        .replacen("\"name\"", "\"nmae\"", 1);
    std::fs::write(&path, text).unwrap();
    let (code, _, err) = tpg(&["solve", "--scenario", path.to_str().unwrap()]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("line") && err.contains("column"), "{err}");
}
