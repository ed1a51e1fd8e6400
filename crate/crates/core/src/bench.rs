//! Randomized benchmark harness: repeated solves of a base scenario from
//! perturbed initial conditions, with timing statistics and optional
//! equilibrium certification per trial.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::AgentModel;
use crate::error::{Error, Result};
use crate::potential::PotentialOcp;
use crate::scenario::ScenarioFile;
use crate::solver::{solve, SolverOptions};
use crate::verifier::{solve_certified, BestResponseOptions, VerifyOptions};

fn default_trials() -> usize {
    200
}

fn default_bins() -> usize {
    20
}

fn default_verify() -> bool {
    true
}

/// Benchmark description: a base scenario plus how to randomize it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub scenario: ScenarioFile,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Half-width of the uniform box added to each agent's position entries,
    /// one entry per agent.
    pub position_box: Vec<f64>,
    /// When set, heading entries are resampled uniformly from `[low, high)`
    /// instead of perturbed. Models without a heading keep their state.
    #[serde(default)]
    pub heading_range: Option<(f64, f64)>,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    /// Run the equilibrium checks on every converged trial.
    #[serde(default = "default_verify")]
    pub verify: bool,
}

impl BenchmarkConfig {
    /// Standard randomization: positions in a 0.5 m box, headings anywhere.
    pub fn for_scenario(scenario: ScenarioFile) -> Self {
        let agents = scenario.agents.len();
        Self {
            scenario,
            trials: default_trials(),
            seed: 0,
            position_box: vec![0.5; agents],
            heading_range: Some((-PI, PI)),
            histogram_bins: default_bins(),
            verify: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        if self.trials == 0 {
            issues.push("trials must be at least 1".to_string());
        }
        if self.position_box.len() != self.scenario.agents.len() {
            issues.push(format!(
                "position_box has {} entries for {} agents",
                self.position_box.len(),
                self.scenario.agents.len()
            ));
        }
        for (i, half) in self.position_box.iter().enumerate() {
            if !(half.is_finite() && *half > 0.0) {
                issues.push(format!("position_box[{i}] must be positive, got {half}"));
            }
        }
        if let Some((low, high)) = self.heading_range {
            if !(low.is_finite() && high.is_finite() && low < high) {
                issues.push(format!("heading_range ({low}, {high}) is degenerate"));
            }
        }
        if self.histogram_bins == 0 {
            issues.push("histogram_bins must be at least 1".to_string());
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Scenario(issues.join("; ")))
        }
    }

    /// The scenario solved in trial `trial`, with its randomized initial
    /// states. Bit-exact for a fixed seed regardless of which trials ran
    /// before, so trials can be reproduced in isolation.
    pub fn trial_scenario(&self, trial: usize) -> Result<ScenarioFile> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial as u64 + 1);
        let mut scenario = self.scenario.clone();
        for (agent, half) in scenario.agents.iter_mut().zip(&self.position_box) {
            let model = match agent.model.as_str() {
                "unicycle" => AgentModel::Unicycle,
                "integrator6" => AgentModel::Integrator6Dof,
                "human_unicycle" => AgentModel::HumanUnicycle,
                other => {
                    return Err(Error::Scenario(format!("unknown model id {other:?}")));
                }
            };
            if let Some((off, dim)) = model.position_range() {
                for e in off..off + dim {
                    agent.initial_state[e] += rng.random_range(-half..=*half);
                }
            }
            if let Some((low, high)) = self.heading_range {
                if let Some(idx) = heading_index(&model) {
                    agent.initial_state[idx] = rng.random_range(low..high);
                }
            }
        }
        Ok(scenario)
    }
}

fn heading_index(model: &AgentModel) -> Option<usize> {
    match model {
        AgentModel::Unicycle => Some(2),
        AgentModel::HumanUnicycle => Some(3),
        _ => None,
    }
}

/// Outcome of one benchmark trial. Certification fields stay `None` when
/// verification was disabled.
#[derive(Clone, Debug, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub converged: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub refinements: usize,
    pub objective: f64,
    pub max_violation: f64,
    pub kkt_passed: Option<bool>,
    pub max_kkt_residual: Option<f64>,
    pub best_response_passed: Option<bool>,
    pub max_response_gap: Option<f64>,
    pub error: Option<String>,
    pub solve_ms: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Histogram {
    /// `bins + 1` edges spanning the observed range.
    pub bin_edges_ms: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TimingSummary {
    pub mean_ms: f64,
    pub std_ms: f64,
    pub median_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub histogram: Histogram,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub scenario_name: String,
    pub scenario_hash: String,
    pub options: SolverOptions,
    pub trials: usize,
    pub seed: u64,
    pub converged_trials: usize,
    /// Whether every converged trial passed both equilibrium checks;
    /// `None` when verification was disabled.
    pub all_certified: Option<bool>,
    pub records: Vec<TrialRecord>,
    pub timing: TimingSummary,
}

/// Run all trials sequentially. Per-trial failures are recorded, not fatal.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchReport> {
    config.validate()?;
    let mut records = Vec::with_capacity(config.trials);
    for trial in 0..config.trials {
        records.push(run_trial(config, trial));
    }

    let converged_trials = records.iter().filter(|r| r.converged).count();
    let all_certified = config.verify.then(|| {
        records
            .iter()
            .filter(|r| r.converged)
            .all(|r| r.kkt_passed == Some(true) && r.best_response_passed == Some(true))
    });
    let timing = summarize_timing(
        &records.iter().map(|r| r.solve_ms).collect::<Vec<_>>(),
        config.histogram_bins,
    );
    Ok(BenchReport {
        scenario_name: config.scenario.name.clone(),
        scenario_hash: config.scenario.hash(),
        options: config.scenario.solver.clone(),
        trials: config.trials,
        seed: config.seed,
        converged_trials,
        all_certified,
        records,
        timing,
    })
}

fn run_trial(config: &BenchmarkConfig, trial: usize) -> TrialRecord {
    let mut record = TrialRecord {
        trial,
        converged: false,
        outer_iterations: 0,
        inner_iterations: 0,
        refinements: 0,
        objective: f64::NAN,
        max_violation: f64::NAN,
        kkt_passed: None,
        max_kkt_residual: None,
        best_response_passed: None,
        max_response_gap: None,
        error: None,
        solve_ms: 0.0,
    };
    let started = std::time::Instant::now();
    let outcome = (|| -> Result<()> {
        let scenario = config.trial_scenario(trial)?;
        let spec = scenario.build()?;
        let ocp = PotentialOcp::assemble(&spec)?;
        let result = if config.verify {
            let verify = VerifyOptions {
                best_response: BestResponseOptions {
                    solver: scenario.solver.clone(),
                    ..BestResponseOptions::default()
                },
                ..VerifyOptions::default()
            };
            let certified = solve_certified(&ocp, None, &scenario.solver, &verify)?;
            record.refinements = certified.refinements;
            let cert = &certified.certificate;
            record.kkt_passed = Some(cert.kkt.passed);
            record.max_kkt_residual = Some(cert.kkt.max_residual());
            record.best_response_passed = Some(cert.best_response.passed);
            record.max_response_gap = Some(
                cert.best_response
                    .gaps
                    .iter()
                    .fold(f64::NEG_INFINITY, |a, b| a.max(*b)),
            );
            certified.result
        } else {
            solve(&ocp, None, &scenario.solver)?
        };
        record.converged = result.converged;
        record.outer_iterations = result.outer_iterations;
        record.inner_iterations = result.inner_iterations;
        record.objective = result.objective;
        record.max_violation = result.max_violation;
        Ok(())
    })();
    if let Err(e) = outcome {
        record.error = Some(e.to_string());
        record.converged = false;
    }
    record.solve_ms = started.elapsed().as_secs_f64() * 1e3;
    record
}

fn summarize_timing(samples_ms: &[f64], bins: usize) -> TimingSummary {
    let mut sorted = samples_ms.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let var = sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let min = sorted[0];
    let max = sorted[n - 1];

    let width = (max - min) / bins as f64;
    let bin_edges_ms = (0..=bins).map(|b| min + width * b as f64).collect();
    let mut counts = vec![0usize; bins];
    for &x in samples_ms {
        let idx = if width > 0.0 {
            (((x - min) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[idx] += 1;
    }
    TimingSummary {
        mean_ms: mean,
        std_ms: var.sqrt(),
        median_ms: median,
        min_ms: min,
        max_ms: max,
        histogram: Histogram {
            bin_edges_ms,
            counts,
        },
    }
}
