//! Experiment runner tying the toolkit together: config parsing, seeded
//! ensemble execution, CSV emission, and the acceptance-suite driver.

// `!(x > 0)` in validations also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod commands;
pub mod config;
pub mod output;

/// Failure categories mapped onto process exit codes:
/// 1 validation, 2 numerical, 3 acceptance.
#[derive(Debug)]
pub enum CliError {
    Validation(Vec<String>),
    Numerical(String),
    Io(String),
    AcceptanceFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) | CliError::Io(_) => 2,
            CliError::AcceptanceFailed(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(problems) => {
                writeln!(f, "configuration invalid ({} problems):", problems.len())?;
                for p in problems {
                    writeln!(f, "  - {p}")?;
                }
                Ok(())
            }
            CliError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            CliError::Io(msg) => write!(f, "i/o failure: {msg}"),
            CliError::AcceptanceFailed(n) => write!(f, "{n} acceptance criteria failed"),
        }
    }
}

impl From<nurn_core::Error> for CliError {
    fn from(e: nurn_core::Error) -> Self {
        CliError::Numerical(e.to_string())
    }
}
