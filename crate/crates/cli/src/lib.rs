//! Command-line driver: config handling, subcommands and exit codes.

pub mod commands;
pub mod config;

use invbench::eval::EvalError;
use invbench::models::ModelError;
use invbench::problems::ProblemError;

pub use config::{ConfigError, RunConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_DIVERGED: u8 = 4;
pub const EXIT_ORACLE_BUDGET: u8 = 5;

fn model_code(e: &ModelError) -> Option<u8> {
    match e {
        ModelError::Diverged { .. } => Some(EXIT_DIVERGED),
        ModelError::InvalidConfig(_) | ModelError::IncompatibleLoss { .. } => Some(EXIT_CONFIG),
        _ => None,
    }
}

fn problem_code(e: &ProblemError) -> Option<u8> {
    match e {
        ProblemError::BudgetExceeded { .. } => Some(EXIT_ORACLE_BUDGET),
        ProblemError::InvalidConfig(_) => Some(EXIT_CONFIG),
        _ => None,
    }
}

/// Maps an error to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        let code = if cause.is::<ConfigError>() {
            Some(EXIT_CONFIG)
        } else if let Some(e) = cause.downcast_ref::<ModelError>() {
            model_code(e)
        } else if let Some(e) = cause.downcast_ref::<ProblemError>() {
            problem_code(e)
        } else if let Some(e) = cause.downcast_ref::<EvalError>() {
            match e {
                EvalError::Model(m) => model_code(m),
                EvalError::Problem(p) => problem_code(p),
                _ => None,
            }
        } else {
            None
        };
        if let Some(c) = code {
            return c;
        }
    }
    EXIT_FAILURE
}
