use thiserror::Error;

/// Errors produced while building or solving a game.
#[derive(Debug, Error)]
pub enum Error {
    /// A vector or matrix had the wrong size for its slot.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A rollout or line search produced a non-finite state.
    #[error("trajectory diverged at step {step}: {what}")]
    Diverged { step: usize, what: String },

    /// Per-agent costs depend on another agent's decision variables.
    #[error("cost of agent {agent} is sensitive to {block} of agent {other} (magnitude {magnitude:.3e})")]
    NotSeparable {
        agent: usize,
        other: usize,
        block: &'static str,
        magnitude: f64,
    },

    /// Backward pass could not be stabilized within the regularization range.
    #[error("backward pass failed at step {step}: regularization reached {reg:.3e}")]
    BackwardPass { step: usize, reg: f64 },

    /// Solver options failed validation.
    #[error("invalid solver options: {0}")]
    Options(String),

    /// Game description failed validation.
    #[error("invalid game: {0}")]
    Game(String),

    /// Scenario file could not be parsed or described an invalid game.
    #[error("scenario: {0}")]
    Scenario(String),

    /// Exhaustive search was asked to enumerate too many profiles.
    #[error("grid search would enumerate {profiles} profiles (limit {limit})")]
    GridTooLarge { profiles: u128, limit: u128 },

    /// Underlying I/O failure while reading or writing files.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
