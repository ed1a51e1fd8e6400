//! `tpg`: trajectory games from scenario files.
//!
//! Five subcommands: `solve` a scenario and certify the result, `bench` it
//! over randomized initial conditions, run it closed loop with `mpc`,
//! re-check a stored result with `verify`, and `export` stored outputs as
//! comma-separated tables. Outputs are self-describing JSON: they embed the
//! scenario, its content hash, and the solver options that produced them.
//!
//! Exit codes: 0 on success, 1 when the solver or a certificate check fails
//! on valid inputs (the output file is still written as diagnostics), 2 on
//! input errors.

mod export;
mod output;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;
use tpg::{
    builtin, builtin_names, certify, run_benchmark, run_mpc, solve_certified, BenchmarkConfig,
    BestResponseOptions, Error, PotentialOcp, ScenarioFile, SolverOptions, Trajectory,
    VerifyOptions,
};

use output::{BenchOutput, MpcOutput, SolveOutput, StoredSolve, VerifyOutput};

/// How a command failed, which fixes the exit code: 2 for bad inputs, 1 when
/// valid inputs fail to solve or certify.
pub(crate) enum Failure {
    Input(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Diverged { .. } | Error::BackwardPass { .. } => Failure::Run(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "tpg",
    version,
    about = "Trajectory games with shared constraints: solve them as one optimal control \
             problem, certify equilibria, benchmark, and run closed loop"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario and certify the result as an equilibrium
    Solve(SolveArgs),
    /// Repeated solves from randomized initial conditions, with timing
    Bench(BenchArgs),
    /// Receding-horizon closed loop for a scenario with an mpc section
    Mpc(MpcArgs),
    /// Re-check the equilibrium certificate of a stored solve output
    Verify(VerifyArgs),
    /// Flatten a stored output into a comma-separated table
    Export(ExportArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario (for bench, optionally a benchmark config): a JSON file
    /// path or a built-in name
    #[arg(long, value_name = "PATH|NAME")]
    scenario: String,
    /// Replace the stored random seed
    #[arg(long)]
    seed: Option<u64>,
    /// Solver option override, repeatable
    #[arg(long = "opts", value_name = "KEY=VALUE")]
    opts: Vec<String>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<ScenarioFile, Failure> {
        let mut scenario = load_scenario_source(&self.scenario)?;
        self.apply(&mut scenario)?;
        Ok(scenario)
    }

    fn apply(&self, scenario: &mut ScenarioFile) -> Result<(), Failure> {
        if let Some(seed) = self.seed {
            scenario.seed = seed;
        }
        if !self.opts.is_empty() {
            scenario.solver = apply_overrides(&scenario.solver, &self.opts)?;
        }
        scenario.solver.validate()?;
        Ok(())
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Output JSON path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Trials to run, replacing the config's count
    #[arg(long)]
    trials: Option<usize>,
    /// Output JSON path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MpcArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Output JSON path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Stored solve output to re-check
    input: PathBuf,
    /// Output JSON path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    /// Stored solve, mpc, or bench output
    input: PathBuf,
    /// Output CSV path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Run the tool on pre-split arguments (without the binary name) and return
/// the process exit code.
pub fn run(args: impl IntoIterator<Item = String>) -> i32 {
    let argv = std::iter::once("tpg".to_string()).chain(args);
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Mpc(args) => cmd_mpc(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Export(args) => cmd_export(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn cmd_solve(args: &SolveArgs) -> Result<(), Failure> {
    let scenario = args.scenario.load()?;
    let spec = scenario.build()?;
    let ocp = PotentialOcp::assemble(&spec)?;
    let verify = verify_options(&scenario);
    let certified = solve_certified(&ocp, None, &scenario.solver, &verify)?;
    let output = SolveOutput::new(&scenario, &certified);
    emit_json(&output, args.out.as_deref())?;

    let result = &certified.result;
    eprintln!(
        "{}: converged={} certified={} objective={:.6} violation={:.3e} \
         ({} outer / {} inner iterations, {:.1} ms)",
        scenario.name,
        result.converged,
        certified.certificate.passed,
        result.objective,
        result.max_violation,
        result.outer_iterations,
        result.inner_iterations,
        result.solve_ms,
    );
    if certified.passed() {
        Ok(())
    } else if !result.converged {
        Err(Failure::Run(format!(
            "solver stopped with violation {:.3e} after {} outer iterations",
            result.max_violation, result.outer_iterations
        )))
    } else {
        let worst_gap = certified
            .certificate
            .best_response
            .gaps
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        Err(Failure::Run(format!(
            "certificate failed: worst first-order residual {:.3e}, worst response gap {:.3e}",
            certified.certificate.kkt.max_residual(),
            worst_gap,
        )))
    }
}

fn cmd_bench(args: &BenchArgs) -> Result<(), Failure> {
    let mut config = load_bench_source(&args.scenario.scenario)?;
    args.scenario.apply(&mut config.scenario)?;
    if let Some(seed) = args.scenario.seed {
        config.seed = seed;
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    let report = run_benchmark(&config)?;
    let output = BenchOutput {
        kind: "bench",
        config,
        report,
    };
    emit_json(&output, args.out.as_deref())?;

    let report = &output.report;
    eprintln!(
        "{}: {}/{} trials converged, certification {}, solve time mean {:.1} / median {:.1} / max {:.1} ms",
        report.scenario_name,
        report.converged_trials,
        report.trials,
        match report.all_certified {
            Some(true) => "passed",
            Some(false) => "failed",
            None => "skipped",
        },
        report.timing.mean_ms,
        report.timing.median_ms,
        report.timing.max_ms,
    );
    let unconverged = report.trials - report.converged_trials;
    if unconverged > 0 {
        Err(Failure::Run(format!(
            "{unconverged} of {} trials did not converge",
            report.trials
        )))
    } else if report.all_certified == Some(false) {
        Err(Failure::Run("a converged trial failed certification".into()))
    } else {
        Ok(())
    }
}

fn cmd_mpc(args: &MpcArgs) -> Result<(), Failure> {
    let scenario = args.scenario.load()?;
    let config = scenario.mpc_config()?;
    let spec = scenario.build()?;
    let log = run_mpc(&spec, &config, &scenario.solver)?;
    let output = MpcOutput {
        kind: "mpc",
        scenario_hash: scenario.hash(),
        planning_horizon: config.planning_horizon,
        total_steps: config.total_steps,
        scenario,
        log,
    };
    emit_json(&output, args.out.as_deref())?;

    let log = &output.log;
    eprintln!(
        "{}: executed {}/{} steps, all_converged={}",
        output.scenario.name,
        log.controls.len(),
        output.total_steps,
        log.all_converged,
    );
    if log.completed && log.all_converged {
        Ok(())
    } else {
        Err(Failure::Run(match log.replans.iter().find(|r| !r.converged) {
            Some(r) => format!(
                "replan at step {} did not converge (violation {:.3e})",
                r.step, r.max_violation
            ),
            None => "the closed loop stopped early".into(),
        }))
    }
}

fn cmd_verify(args: &VerifyArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.input)
        .map_err(|e| Failure::Input(format!("{}: {e}", args.input.display())))?;
    let stored: StoredSolve = serde_json::from_str(&text)
        .map_err(|e| Failure::Input(format!("{}: {e}", args.input.display())))?;
    let scenario = stored.scenario;
    let spec = scenario.build()?;
    let ocp = PotentialOcp::assemble(&spec)?;
    let controls: Vec<DVector<f64>> = stored
        .trajectory
        .controls
        .iter()
        .map(|u| DVector::from_row_slice(u))
        .collect();
    let traj = spec.rollout(&controls)?;
    check_states_match(&stored.trajectory.states, &traj)?;
    let multipliers = stored.multipliers.into_state(&spec, &scenario.solver)?;
    let certificate = certify(&ocp, &traj, &multipliers, &verify_options(&scenario))?;

    let output = VerifyOutput {
        kind: "verify",
        input: args.input.display().to_string(),
        scenario_hash: scenario.hash(),
        objective: traj.potential_value,
        max_violation: traj.max_violation(),
        certificate,
    };
    emit_json(&output, args.out.as_deref())?;
    eprintln!(
        "{}: certificate {} (violation {:.3e}, worst first-order residual {:.3e})",
        scenario.name,
        if output.certificate.passed { "passed" } else { "failed" },
        output.max_violation,
        output.certificate.kkt.max_residual(),
    );
    if output.certificate.passed {
        Ok(())
    } else {
        Err(Failure::Run(
            "stored candidate failed the equilibrium checks".into(),
        ))
    }
}

fn cmd_export(args: &ExportArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.input)
        .map_err(|e| Failure::Input(format!("{}: {e}", args.input.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Input(format!("{}: {e}", args.input.display())))?;
    let table = export::flatten(&value)?;
    emit_text(&table, args.out.as_deref())
}

/// Certification settings for a scenario: defaults, except that best
/// responses are resolved with the scenario's own solver options.
fn verify_options(scenario: &ScenarioFile) -> VerifyOptions {
    VerifyOptions {
        best_response: BestResponseOptions {
            solver: scenario.solver.clone(),
            ..BestResponseOptions::default()
        },
        ..VerifyOptions::default()
    }
}

fn load_scenario_source(source: &str) -> Result<ScenarioFile, Failure> {
    if let Some(scenario) = builtin(source) {
        return Ok(scenario);
    }
    let path = Path::new(source);
    if !path.is_file() {
        return Err(Failure::Input(format!(
            "{source:?} is neither a built-in scenario ({}) nor a file",
            builtin_names().join(", ")
        )));
    }
    Ok(ScenarioFile::from_path(path)?)
}

fn load_bench_source(source: &str) -> Result<BenchmarkConfig, Failure> {
    let from_scenario = |scenario: ScenarioFile| {
        let mut config = BenchmarkConfig::for_scenario(scenario);
        config.seed = config.scenario.seed;
        config
    };
    if let Some(scenario) = builtin(source) {
        return Ok(from_scenario(scenario));
    }
    let path = Path::new(source);
    if !path.is_file() {
        return Err(Failure::Input(format!(
            "{source:?} is neither a built-in scenario ({}) nor a file",
            builtin_names().join(", ")
        )));
    }
    let text =
        std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{source}: {e}")))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{source}: {e}")))?;
    if value.get("scenario").is_some() {
        serde_json::from_value(value).map_err(|e| Failure::Input(format!("{source}: {e}")))
    } else {
        Ok(from_scenario(ScenarioFile::from_json(&text)?))
    }
}

/// Merge `key=value` pairs onto the solver options through their JSON form,
/// so field names, types, and unknown keys are checked the same way as in
/// scenario files.
fn apply_overrides(base: &SolverOptions, pairs: &[String]) -> Result<SolverOptions, Failure> {
    let mut value = serde_json::to_value(base).expect("solver options serialize");
    let map = value.as_object_mut().expect("solver options form an object");
    for pair in pairs {
        let Some((key, raw)) = pair.split_once('=') else {
            return Err(Failure::Input(format!(
                "--opts takes key=value pairs, got {pair:?}"
            )));
        };
        let parsed = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        map.insert(key.trim().to_string(), parsed);
    }
    serde_json::from_value(value).map_err(|e| Failure::Input(format!("--opts: {e}")))
}

fn check_states_match(stored: &[Vec<f64>], traj: &Trajectory) -> Result<(), Failure> {
    if stored.len() != traj.states.len() {
        return Err(Failure::Input(format!(
            "stored trajectory has {} states for {} controls",
            stored.len(),
            traj.controls.len(),
        )));
    }
    let mut worst = 0.0_f64;
    let mut at = 0;
    for (k, (row, x)) in stored.iter().zip(&traj.states).enumerate() {
        if row.len() != x.len() {
            return Err(Failure::Input(format!(
                "stored state {k} has {} entries, expected {}",
                row.len(),
                x.len()
            )));
        }
        for (a, b) in row.iter().zip(x.iter()) {
            if (a - b).abs() > worst {
                worst = (a - b).abs();
                at = k;
            }
        }
    }
    if worst > 1e-6 {
        return Err(Failure::Input(format!(
            "stored states disagree with a rollout of the stored controls by {worst:.3e} at \
             step {at}; the file does not describe a single trajectory"
        )));
    }
    Ok(())
}

fn emit_json<T: Serialize>(output: &T, out: Option<&Path>) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(output).expect("outputs serialize");
    text.push('\n');
    emit_text(&text, out)
}

fn emit_text(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::Input(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
