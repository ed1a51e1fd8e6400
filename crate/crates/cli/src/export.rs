//! Flat comma-separated tables for external plotting.
//!
//! Trajectory inputs (`solve` and `mpc` outputs) become one row per step and
//! agent with positions, heading, the distance to the nearest other agent,
//! and the step's worst constraint violation, recomputed from the embedded
//! scenario so the table never trusts derived fields. Benchmark outputs
//! become the solve-time histogram. Floats are printed in shortest
//! round-trip form; columns a model lacks stay empty.

use nalgebra::DVector;
use serde_json::Value;
use tpg::{AgentModel, JointDynamics, ScenarioFile};

use crate::Failure;

pub const TRAJECTORY_HEADER: &str = "k,agent,p,q,z,theta,min_pair_dist,violation";
pub const HISTOGRAM_HEADER: &str = "bin_lo_ms,bin_hi_ms,count";

pub fn flatten(value: &Value) -> Result<String, Failure> {
    match value.get("kind").and_then(Value::as_str) {
        Some("solve") => trajectory_table(
            scenario_of(value)?,
            rows_of(value, &["trajectory", "states"])?,
            rows_of(value, &["trajectory", "controls"])?,
        ),
        Some("mpc") => trajectory_table(
            scenario_of(value)?,
            rows_of(value, &["log", "states"])?,
            rows_of(value, &["log", "controls"])?,
        ),
        Some("bench") => histogram_table(value),
        Some(other) => Err(Failure::Input(format!(
            "a {other:?} output has nothing to export"
        ))),
        None => Err(Failure::Input(
            "input is not a stored output of this tool (no \"kind\" field)".into(),
        )),
    }
}

fn scenario_of(value: &Value) -> Result<ScenarioFile, Failure> {
    let embedded = value
        .get("scenario")
        .ok_or_else(|| Failure::Input("output has no embedded scenario".into()))?;
    serde_json::from_value(embedded.clone())
        .map_err(|e| Failure::Input(format!("embedded scenario: {e}")))
}

fn rows_of(value: &Value, path: &[&str]) -> Result<Vec<Vec<f64>>, Failure> {
    let mut cursor = value;
    for key in path {
        cursor = cursor
            .get(key)
            .ok_or_else(|| Failure::Input(format!("output has no {} field", path.join("."))))?;
    }
    let bad = || Failure::Input(format!("{} is not an array of number rows", path.join(".")));
    let rows = cursor.as_array().ok_or_else(bad)?;
    rows.iter()
        .map(|row| {
            row.as_array()
                .ok_or_else(bad)?
                .iter()
                .map(|v| v.as_f64().ok_or_else(bad))
                .collect()
        })
        .collect()
}

fn trajectory_table(
    scenario: ScenarioFile,
    states: Vec<Vec<f64>>,
    controls: Vec<Vec<f64>>,
) -> Result<String, Failure> {
    let spec = scenario.build()?;
    let dynamics = spec.dynamics();
    let n = dynamics.state_dim();
    let m = dynamics.control_dim();
    if states.iter().any(|x| x.len() != n) || controls.iter().any(|u| u.len() != m) {
        return Err(Failure::Input(
            "stored states or controls do not match the scenario's dimensions".into(),
        ));
    }
    if !states.is_empty() && states.len() != controls.len() + 1 {
        return Err(Failure::Input(format!(
            "{} states do not pair with {} controls",
            states.len(),
            controls.len()
        )));
    }

    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for (k, x) in states.iter().enumerate() {
        let xv = DVector::from_row_slice(x);
        let violation = if k < controls.len() {
            let uv = DVector::from_row_slice(&controls[k]);
            spec.constraints().violation_running(&xv, &uv, k)
        } else {
            spec.constraints().violation_terminal(&xv)
        };
        for agent in 0..dynamics.num_agents() {
            push_agent_row(&mut out, dynamics, x, k, agent, violation);
        }
    }
    Ok(out)
}

fn push_agent_row(
    out: &mut String,
    dynamics: &JointDynamics,
    x: &[f64],
    k: usize,
    agent: usize,
    violation: f64,
) {
    let position = |i: usize| -> Option<&[f64]> {
        let block = dynamics.state_block(i);
        let (off, dim) = dynamics.model(i).position_range()?;
        Some(&x[block.start + off..block.start + off + dim])
    };
    let block = dynamics.state_block(agent);
    let own = &x[block.clone()];
    let model = dynamics.model(agent);
    let pos = position(agent);

    let mut min_pair = f64::INFINITY;
    if let Some(p) = pos {
        for other in 0..dynamics.num_agents() {
            if other == agent {
                continue;
            }
            if let Some(q) = position(other) {
                let shared = p.len().min(q.len());
                let dist: f64 = (0..shared)
                    .map(|e| (p[e] - q[e]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                min_pair = min_pair.min(dist);
            }
        }
    }

    let cell = |v: Option<f64>| v.map(|v| format!("{v:?}")).unwrap_or_default();
    let row = [
        k.to_string(),
        agent.to_string(),
        cell(pos.and_then(|p| p.first().copied())),
        cell(pos.and_then(|p| p.get(1).copied())),
        cell(z_index(model).map(|i| own[i])),
        cell(theta_index(model).map(|i| own[i])),
        cell(min_pair.is_finite().then_some(min_pair)),
        cell(Some(violation)),
    ];
    out.push_str(&row.join(","));
    out.push('\n');
}

fn theta_index(model: &AgentModel) -> Option<usize> {
    match model {
        AgentModel::Unicycle => Some(2),
        AgentModel::HumanUnicycle => Some(3),
        _ => None,
    }
}

fn z_index(model: &AgentModel) -> Option<usize> {
    match model {
        AgentModel::Integrator6Dof | AgentModel::HumanUnicycle => Some(2),
        AgentModel::SingleIntegrator { dim } if *dim >= 3 => Some(2),
        _ => None,
    }
}

fn histogram_table(value: &Value) -> Result<String, Failure> {
    let hist = &value["report"]["timing"]["histogram"];
    let floats = |field: &str| -> Result<Vec<f64>, Failure> {
        hist[field]
            .as_array()
            .map(|a| a.iter().filter_map(Value::as_f64).collect())
            .ok_or_else(|| Failure::Input(format!("benchmark output has no histogram {field}")))
    };
    let edges = floats("bin_edges_ms")?;
    let counts = floats("counts")?;
    if edges.len() != counts.len() + 1 {
        return Err(Failure::Input(format!(
            "{} histogram edges do not bound {} counts",
            edges.len(),
            counts.len()
        )));
    }
    let mut out = String::from(HISTOGRAM_HEADER);
    out.push('\n');
    for (b, count) in counts.iter().enumerate() {
        out.push_str(&format!("{:?},{:?},{}\n", edges[b], edges[b + 1], *count as u64));
    }
    Ok(out)
}
