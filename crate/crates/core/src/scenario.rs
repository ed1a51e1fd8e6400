//! Declarative scenario files and the two shipped setups.
//!
//! A [`ScenarioFile`] is the JSON description the CLI consumes: agent models
//! with initial and goal states, diagonal cost weights, constraint
//! descriptors, solver option overrides, and an optional receding-horizon
//! section. [`ScenarioFile::build`] turns it into a validated [`GameSpec`];
//! [`ScenarioFile::hash`] fingerprints the exact content so output files can
//! state what they were computed from.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constraints::{Constraint, ConstraintSet};
use crate::cost::{AgentCost, QuadraticCost};
use crate::dynamics::{AgentModel, JointDynamics};
use crate::error::{Error, Result};
use crate::game::GameSpec;
use crate::mpc::{MpcConfig, ScriptedAgent, WarmStart};
use crate::solver::SolverOptions;

/// Model identifiers accepted in scenario files.
pub const MODEL_IDS: [&str; 3] = ["unicycle", "integrator6", "human_unicycle"];

/// One agent entry: model id, where it starts, where it wants to end up, and
/// the diagonals of its tracking cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub model: String,
    pub initial_state: Vec<f64>,
    pub goal_state: Vec<f64>,
    pub state_weight: Vec<f64>,
    pub control_weight: Vec<f64>,
    pub terminal_weight: Vec<f64>,
}

/// Constraint descriptors. Position subspaces are resolved from the agent
/// models at build time; descriptors only name agents and thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintConfig {
    /// Minimum distance between every pair of agents.
    PairwiseCollisionAll { min_distance: f64 },
    /// Minimum distance between one pair of agents.
    PairwiseCollision { agents: [usize; 2], min_distance: f64 },
    /// Per-entry symmetric bound `|u_e| <= bound_e` on one agent's controls.
    ControlBound { agent: usize, bound: Vec<f64> },
    /// Norm bound on a contiguous slice of one agent's control vector.
    /// `slice` is `[offset, length]` inside the agent's control block and
    /// defaults to the whole block.
    SpeedBound {
        agent: usize,
        bound: f64,
        #[serde(default)]
        slice: Option<[usize; 2]>,
    },
    /// Fixed-distance equality between two agents' positions.
    Rod { agents: [usize; 2], length: f64 },
    /// Keep-out cylinder around `center_agent`, evaluated against the
    /// position of `point_agent`. The center sits at the first three state
    /// entries of the carrying agent.
    Cylinder {
        point_agent: usize,
        center_agent: usize,
        radius: f64,
        half_height: f64,
    },
}

/// Stored control script for one agent in a receding-horizon run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptConfig {
    pub agent: usize,
    pub controls: Vec<Vec<f64>>,
}

/// Receding-horizon section of a scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcSection {
    pub planning_horizon_seconds: f64,
    pub total_seconds: f64,
    #[serde(default = "default_warm_start")]
    pub warm_start: WarmStart,
    #[serde(default)]
    pub continue_on_failure: bool,
    #[serde(default)]
    pub scripts: Vec<ScriptConfig>,
}

fn default_warm_start() -> WarmStart {
    WarmStart::Shift
}

/// Complete scenario description as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub step_size: f64,
    pub horizon_seconds: f64,
    pub agents: Vec<AgentConfig>,
    #[serde(default)]
    pub constraints: Vec<ConstraintConfig>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mpc: Option<MpcSection>,
}

fn model_from_id(id: &str) -> Result<AgentModel> {
    match id {
        "unicycle" => Ok(AgentModel::Unicycle),
        "integrator6" => Ok(AgentModel::Integrator6Dof),
        "human_unicycle" => Ok(AgentModel::HumanUnicycle),
        other => Err(Error::Scenario(format!(
            "unknown model id {other:?}, expected one of {MODEL_IDS:?}"
        ))),
    }
}

impl ScenarioFile {
    /// Parse from JSON text. Parse errors keep serde's line and column info.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))
    }

    /// Read and parse a scenario file.
    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_json(&text)
    }

    /// Pretty-printed JSON, the on-disk format.
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("scenario serializes");
        out.push('\n');
        out
    }

    /// Hex SHA-256 of the compact serialization, embedded in output files so
    /// results are traceable to the exact scenario content.
    pub fn hash(&self) -> String {
        let compact = serde_json::to_string(self).expect("scenario serializes");
        let digest = Sha256::digest(compact.as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }

    /// Number of discrete steps covered by `horizon_seconds`.
    pub fn horizon_steps(&self) -> usize {
        if self.step_size <= 0.0 || !self.step_size.is_finite() {
            return 0;
        }
        (self.horizon_seconds / self.step_size).round() as usize
    }

    /// Construct the game this file describes.
    pub fn build(&self) -> Result<GameSpec> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::Scenario(format!(
                "step_size must be positive and finite, got {}",
                self.step_size
            )));
        }
        let steps = self.horizon_steps();
        if steps == 0 {
            return Err(Error::Scenario(format!(
                "horizon_seconds {} at step_size {} covers no steps",
                self.horizon_seconds, self.step_size
            )));
        }
        if self.agents.is_empty() {
            return Err(Error::Scenario("scenario has no agents".into()));
        }

        let mut models = Vec::with_capacity(self.agents.len());
        for (i, agent) in self.agents.iter().enumerate() {
            let model = model_from_id(&agent.model)?;
            let n = model.state_dim();
            let m = model.control_dim();
            let checks = [
                ("initial_state", agent.initial_state.len(), n),
                ("goal_state", agent.goal_state.len(), n),
                ("state_weight", agent.state_weight.len(), n),
                ("terminal_weight", agent.terminal_weight.len(), n),
                ("control_weight", agent.control_weight.len(), m),
            ];
            for (field, got, want) in checks {
                if got != want {
                    return Err(Error::Scenario(format!(
                        "agent {i} ({}): {field} has {got} entries, model needs {want}",
                        agent.model
                    )));
                }
            }
            models.push(model);
        }

        let dynamics = JointDynamics::new(models, self.step_size)?;
        let costs: Vec<AgentCost> = self
            .agents
            .iter()
            .map(|a| {
                AgentCost::Quadratic(QuadraticCost::from_diagonals(
                    &a.state_weight,
                    &a.control_weight,
                    &a.terminal_weight,
                    &a.goal_state,
                ))
            })
            .collect();
        let constraints = self.build_constraints(&dynamics)?;

        let x0 = DVector::from_vec(
            self.agents
                .iter()
                .flat_map(|a| a.initial_state.iter().copied())
                .collect(),
        );
        GameSpec::new(dynamics, costs, constraints, steps, x0)
    }

    fn build_constraints(&self, dynamics: &JointDynamics) -> Result<ConstraintSet> {
        let mut items = Vec::new();
        for (idx, c) in self.constraints.iter().enumerate() {
            let fail = |msg: String| Error::Scenario(format!("constraint {idx}: {msg}"));
            match c {
                ConstraintConfig::PairwiseCollisionAll { min_distance } => {
                    require_positive(*min_distance, "min_distance").map_err(fail)?;
                    for i in 0..dynamics.num_agents() {
                        for j in (i + 1)..dynamics.num_agents() {
                            let (off, dim) = self.position_pair(dynamics, i, j).map_err(&fail)?;
                            items.push(Constraint::pairwise_collision(
                                dynamics,
                                i,
                                j,
                                off,
                                dim,
                                *min_distance,
                            ));
                        }
                    }
                }
                ConstraintConfig::PairwiseCollision {
                    agents,
                    min_distance,
                } => {
                    require_positive(*min_distance, "min_distance").map_err(&fail)?;
                    let [i, j] = self.pair_in_range(dynamics, *agents).map_err(&fail)?;
                    let (off, dim) = self.position_pair(dynamics, i, j).map_err(&fail)?;
                    items.push(Constraint::pairwise_collision(
                        dynamics,
                        i,
                        j,
                        off,
                        dim,
                        *min_distance,
                    ));
                }
                ConstraintConfig::ControlBound { agent, bound } => {
                    let a = self.agent_in_range(dynamics, *agent).map_err(&fail)?;
                    let m = dynamics.model(a).control_dim();
                    if bound.len() != m {
                        return Err(fail(format!(
                            "bound has {} entries, agent {a} has {m} controls",
                            bound.len()
                        )));
                    }
                    for (e, b) in bound.iter().enumerate() {
                        require_positive(*b, &format!("bound[{e}]")).map_err(&fail)?;
                    }
                    items.push(Constraint::control_bound(dynamics, a, bound));
                }
                ConstraintConfig::SpeedBound {
                    agent,
                    bound,
                    slice,
                } => {
                    let a = self.agent_in_range(dynamics, *agent).map_err(&fail)?;
                    require_positive(*bound, "bound").map_err(&fail)?;
                    let m = dynamics.model(a).control_dim();
                    let [off, dim] = slice.unwrap_or([0, m]);
                    if dim == 0 || off + dim > m {
                        return Err(fail(format!(
                            "slice [{off}, {dim}] does not fit agent {a}'s {m} controls"
                        )));
                    }
                    items.push(Constraint::speed_bound(dynamics, a, off, dim, *bound));
                }
                ConstraintConfig::Rod { agents, length } => {
                    require_positive(*length, "length").map_err(&fail)?;
                    let [i, j] = self.pair_in_range(dynamics, *agents).map_err(&fail)?;
                    let (off, dim) = self.position_pair(dynamics, i, j).map_err(&fail)?;
                    items.push(Constraint::rod(dynamics, i, j, off, dim, *length));
                }
                ConstraintConfig::Cylinder {
                    point_agent,
                    center_agent,
                    radius,
                    half_height,
                } => {
                    require_positive(*radius, "radius").map_err(&fail)?;
                    require_positive(*half_height, "half_height").map_err(&fail)?;
                    let [p, c] = self
                        .pair_in_range(dynamics, [*point_agent, *center_agent])
                        .map_err(&fail)?;
                    let (p_off, p_dim) = dynamics
                        .model(p)
                        .position_range()
                        .ok_or_else(|| fail(format!("agent {p} has no position block")))?;
                    if p_dim != 3 {
                        return Err(fail(format!(
                            "point agent {p} has a {p_dim}-dimensional position, cylinder needs 3"
                        )));
                    }
                    if dynamics.model(c).state_dim() < 3 {
                        return Err(fail(format!(
                            "center agent {c} has fewer than 3 state entries"
                        )));
                    }
                    items.push(Constraint::cylinder(
                        dynamics,
                        p,
                        p_off,
                        c,
                        0,
                        *radius,
                        *half_height,
                    ));
                }
            }
        }
        Ok(ConstraintSet::new(items))
    }

    fn agent_in_range(
        &self,
        dynamics: &JointDynamics,
        agent: usize,
    ) -> std::result::Result<usize, String> {
        if agent >= dynamics.num_agents() {
            Err(format!(
                "agent {agent} out of range, scenario has {}",
                dynamics.num_agents()
            ))
        } else {
            Ok(agent)
        }
    }

    fn pair_in_range(
        &self,
        dynamics: &JointDynamics,
        pair: [usize; 2],
    ) -> std::result::Result<[usize; 2], String> {
        let [i, j] = pair;
        self.agent_in_range(dynamics, i)?;
        self.agent_in_range(dynamics, j)?;
        if i == j {
            return Err(format!("pair names agent {i} twice"));
        }
        Ok(pair)
    }

    /// Common position subspace for a distance constraint between two agents.
    fn position_pair(
        &self,
        dynamics: &JointDynamics,
        i: usize,
        j: usize,
    ) -> std::result::Result<(usize, usize), String> {
        let pi = dynamics
            .model(i)
            .position_range()
            .ok_or_else(|| format!("agent {i} has no position block"))?;
        let pj = dynamics
            .model(j)
            .position_range()
            .ok_or_else(|| format!("agent {j} has no position block"))?;
        if pi != pj {
            return Err(format!(
                "agents {i} and {j} have incompatible position blocks {pi:?} and {pj:?}"
            ));
        }
        Ok(pi)
    }

    /// The receding-horizon configuration, when the file carries one.
    pub fn mpc_config(&self) -> Result<MpcConfig> {
        let section = self
            .mpc
            .as_ref()
            .ok_or_else(|| Error::Scenario("scenario has no mpc section".into()))?;
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::Scenario(format!(
                "step_size must be positive and finite, got {}",
                self.step_size
            )));
        }
        for (what, value) in [
            ("planning_horizon_seconds", section.planning_horizon_seconds),
            ("total_seconds", section.total_seconds),
        ] {
            require_positive(value, what)
                .map_err(|msg| Error::Scenario(format!("mpc section: {msg}")))?;
        }
        let mut config = MpcConfig::from_seconds(
            self.step_size,
            section.planning_horizon_seconds,
            section.total_seconds,
        );
        config.warm_start = section.warm_start;
        config.continue_on_failure = section.continue_on_failure;
        config.scripted = section
            .scripts
            .iter()
            .map(|s| ScriptedAgent {
                agent: s.agent,
                controls: s
                    .controls
                    .iter()
                    .map(|u| DVector::from_vec(u.clone()))
                    .collect(),
            })
            .collect();
        Ok(config)
    }
}

fn require_positive(value: f64, what: &str) -> std::result::Result<(), String> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(format!("{what} must be positive and finite, got {value}"))
    }
}

/// Four unicycles on the corners of a 3 m square exchanging positions
/// diagonally over 5 s, with 0.3 m separation and |v|, |omega| <= 3.
pub fn four_agent_exchange() -> ScenarioFile {
    let corners = [
        (-1.5_f64, -1.5_f64),
        (1.5, -1.5),
        (1.5, 1.5),
        (-1.5, 1.5),
    ];
    let agents = (0..4)
        .map(|i| {
            let (px, py) = corners[i];
            let (gx, gy) = corners[(i + 2) % 4];
            let heading = (gy - py).atan2(gx - px);
            AgentConfig {
                model: "unicycle".into(),
                initial_state: vec![px, py, heading],
                goal_state: vec![gx, gy, heading],
                state_weight: vec![0.5, 0.5, 0.0],
                control_weight: vec![0.1, 0.1],
                terminal_weight: vec![100.0, 100.0, 0.0],
            }
        })
        .collect();
    ScenarioFile {
        name: "four_agent_exchange".into(),
        step_size: 0.1,
        horizon_seconds: 5.0,
        agents,
        constraints: vec![
            ConstraintConfig::PairwiseCollisionAll { min_distance: 0.3 },
            ConstraintConfig::ControlBound {
                agent: 0,
                bound: vec![3.0, 3.0],
            },
            ConstraintConfig::ControlBound {
                agent: 1,
                bound: vec![3.0, 3.0],
            },
            ConstraintConfig::ControlBound {
                agent: 2,
                bound: vec![3.0, 3.0],
            },
            ConstraintConfig::ControlBound {
                agent: 3,
                bound: vec![3.0, 3.0],
            },
        ],
        solver: SolverOptions {
            inner_tol: 1e-8,
            ..SolverOptions::default()
        },
        seed: 0,
        mpc: None,
    }
}

/// Two velocity-controlled quadrotors carrying a 0.5 m rod across a room
/// while two walking humans pass underneath in the opposite direction.
/// Run it in receding-horizon mode: 0.5 s planning window, 0.1 s steps.
pub fn rod_carry() -> ScenarioFile {
    let quad = |y: f64| AgentConfig {
        model: "integrator6".into(),
        initial_state: vec![-2.0, y, 1.0, 0.0, 0.0, 0.0],
        goal_state: vec![2.0, y, 1.0, 0.0, 0.0, 0.0],
        state_weight: vec![2.0, 2.0, 2.0, 0.1, 0.1, 0.1],
        control_weight: vec![0.05, 0.05, 0.05, 0.05, 0.05, 0.05],
        terminal_weight: vec![5.0, 5.0, 5.0, 0.5, 0.5, 0.5],
    };
    let human = |y: f64| AgentConfig {
        model: "human_unicycle".into(),
        initial_state: vec![2.2, y, 1.0, std::f64::consts::PI],
        goal_state: vec![-2.2, y, 1.0, std::f64::consts::PI],
        state_weight: vec![12.0, 12.0, 0.0, 0.01],
        control_weight: vec![0.1, 0.1],
        terminal_weight: vec![40.0, 40.0, 0.0, 0.1],
    };
    let cylinder = |point: usize, center: usize| ConstraintConfig::Cylinder {
        point_agent: point,
        center_agent: center,
        radius: 0.4_f64.sqrt(),
        half_height: 1.0,
    };
    ScenarioFile {
        name: "rod_carry".into(),
        step_size: 0.1,
        horizon_seconds: 0.5,
        agents: vec![quad(-0.2), quad(0.3), human(0.8), human(-0.8)],
        constraints: vec![
            ConstraintConfig::Rod {
                agents: [0, 1],
                length: 0.5,
            },
            ConstraintConfig::PairwiseCollision {
                agents: [2, 3],
                min_distance: 0.3,
            },
            cylinder(0, 2),
            cylinder(0, 3),
            cylinder(1, 2),
            cylinder(1, 3),
            ConstraintConfig::SpeedBound {
                agent: 0,
                bound: 1.2,
                slice: Some([0, 3]),
            },
            ConstraintConfig::SpeedBound {
                agent: 1,
                bound: 1.2,
                slice: Some([0, 3]),
            },
            ConstraintConfig::SpeedBound {
                agent: 2,
                bound: 1.5,
                slice: Some([0, 1]),
            },
            ConstraintConfig::SpeedBound {
                agent: 3,
                bound: 1.5,
                slice: Some([0, 1]),
            },
        ],
        solver: SolverOptions::default(),
        seed: 0,
        mpc: Some(MpcSection {
            planning_horizon_seconds: 0.5,
            total_seconds: 6.0,
            warm_start: WarmStart::Shift,
            continue_on_failure: false,
            scripts: Vec::new(),
        }),
    }
}

/// Shipped scenario by name.
pub fn builtin(name: &str) -> Option<ScenarioFile> {
    match name {
        "four_agent_exchange" => Some(four_agent_exchange()),
        "rod_carry" => Some(rod_carry()),
        _ => None,
    }
}

/// Names accepted by [`builtin`].
pub fn builtin_names() -> &'static [&'static str] {
    &["four_agent_exchange", "rod_carry"]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_scenarios_build_and_round_trip() {
        for name in builtin_names() {
            let scenario = builtin(name).unwrap();
            let spec = scenario.build().unwrap();
            assert_eq!(spec.num_agents(), 4);
            let text = scenario.to_json();
            let reparsed = ScenarioFile::from_json(&text).unwrap();
            assert_eq!(reparsed, scenario);
            assert_eq!(reparsed.hash(), scenario.hash());
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = four_agent_exchange();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.agents[0].initial_state[0] += 1e-9;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn unknown_fields_are_rejected_with_location() {
        let mut text = four_agent_exchange().to_json();
        text = text.replacen("\"name\"", "\"nmae\"", 1);
        let err = ScenarioFile::from_json(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("nmae"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
        assert!(msg.contains("column"), "{msg}");
    }

    #[test]
    fn zero_horizon_is_rejected() {
        let mut scenario = four_agent_exchange();
        scenario.horizon_seconds = 0.0;
        let err = scenario.build().unwrap_err();
        assert!(err.to_string().contains("covers no steps"), "{err}");
    }

    #[test]
    fn bad_dimensions_name_the_agent_and_field() {
        let mut scenario = four_agent_exchange();
        scenario.agents[2].goal_state.pop();
        let err = scenario.build().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("agent 2"), "{msg}");
        assert!(msg.contains("goal_state"), "{msg}");
    }

    #[test]
    fn bad_constraint_references_are_rejected() {
        let mut scenario = four_agent_exchange();
        scenario.constraints.push(ConstraintConfig::Rod {
            agents: [0, 7],
            length: 1.0,
        });
        let err = scenario.build().unwrap_err();
        assert!(err.to_string().contains("out of range"), "{err}");

        let mut scenario = rod_carry();
        scenario.constraints.push(ConstraintConfig::PairwiseCollision {
            agents: [0, 2],
            min_distance: 0.3,
        });
        let err = scenario.build().unwrap_err();
        assert!(err.to_string().contains("incompatible"), "{err}");
    }

    #[test]
    fn unknown_model_id_is_rejected() {
        let mut scenario = four_agent_exchange();
        scenario.agents[0].model = "bicycle".into();
        let err = scenario.build().unwrap_err();
        assert!(err.to_string().contains("bicycle"), "{err}");
    }

    #[test]
    fn mpc_section_maps_to_a_config() {
        let scenario = rod_carry();
        let config = scenario.mpc_config().unwrap();
        assert_eq!(config.planning_horizon, 5);
        assert_eq!(config.total_steps, 60);
        assert_eq!(config.warm_start, WarmStart::Shift);
        assert!(config.scripted.is_empty());

        let err = four_agent_exchange().mpc_config().unwrap_err();
        assert!(err.to_string().contains("no mpc section"), "{err}");

        let mut zeroed = rod_carry();
        zeroed.mpc.as_mut().unwrap().total_seconds = 0.0;
        let err = zeroed.mpc_config().unwrap_err();
        assert!(err.to_string().contains("total_seconds"), "{err}");
    }

    #[test]
    fn solver_overrides_deserialize_partially() {
        let mut value = serde_json::to_value(four_agent_exchange()).unwrap();
        value["solver"] = serde_json::json!({ "max_outer": 7 });
        let patched: ScenarioFile = serde_json::from_value(value).unwrap();
        assert_eq!(patched.solver.max_outer, 7);
        assert_eq!(
            patched.solver.constraint_tol,
            SolverOptions::default().constraint_tol
        );
    }
}
