//! Ground truth for small instances: the MILP model with its LP text form,
//! a solution verifier, and an exhaustive oracle.

pub mod flow;
pub mod lp;
pub mod milp;
pub mod oracle;
pub mod verify;

use thiserror::Error;

pub use lp::{emit_lp, lp_string, parse_lp, LpError, LpFile};
pub use milp::{build_milp, model_size, MilpModel, MilpOptions, RowKind};
pub use oracle::{exact_plan, ExactResult, OracleLimits};
pub use verify::{read_solution_csv, solution_from_trace, verify_solution, write_solution_csv, Solution, VerifyReport};

#[derive(Debug, Error)]
pub enum ExactError {
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("solution is missing variable {0}")]
    MissingVariable(String),
    #[error("bad solution file: {0}")]
    Solution(String),
    #[error("bad model metadata: {0}")]
    Meta(String),
}
