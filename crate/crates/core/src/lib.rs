//! Constrained multi-agent trajectory games with separable costs, solved by
//! reducing the game to a single constrained optimal control problem over the
//! joint system and minimizing it with an augmented-Lagrangian iterative LQR.
//! A verifier certifies candidate solutions as constrained equilibria through
//! first-order residuals and best-response resolves.

pub mod bench;
pub mod constraints;
pub mod cost;
pub mod dynamics;
pub mod error;
pub mod fd;
pub mod game;
pub mod mpc;
pub mod potential;
pub mod reduce;
pub mod scenario;
pub mod solver;
pub mod verifier;

pub use bench::{run_benchmark, BenchReport, BenchmarkConfig, TimingSummary, TrialRecord};
pub use constraints::{Constraint, ConstraintKind, ConstraintMeta, ConstraintScope, ConstraintSet};
pub use cost::{AgentCost, QuadraticCost};
pub use dynamics::{AgentModel, JointDynamics};
pub use error::{Error, Result};
pub use game::{audit_separability, max_violation, GameSpec, SeparabilityReport, Trajectory};
pub use mpc::{run_mpc, ClosedLoopLog, MpcConfig, ReplanRecord, ScriptedAgent, WarmStart};
pub use potential::{verify_potential_condition, ConditionReport, PotentialOcp};
pub use reduce::FrozenGame;
pub use scenario::{
    builtin, builtin_names, four_agent_exchange, rod_carry, AgentConfig, ConstraintConfig,
    MpcSection, ScenarioFile, ScriptConfig,
};
pub use solver::{
    solve, solve_warm, update_multipliers, MultiplierState, OuterRecord, PolishOutcome,
    SolveResult, SolverOptions,
};
pub use verifier::{
    best_response_gaps, brute_force_equilibria, certify, kkt_residuals, solve_certified,
    BestResponseOptions, BestResponseReport, BruteForceOptions, BruteForceReport, CertifiedSolve,
    KktOptions, KktReport, NashCertificate, VerifyOptions,
};
