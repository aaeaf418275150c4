use thiserror::Error;

use crate::model::ValidationError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {}", join(.0))]
    InvalidScenario(Vec<ValidationError>),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("scheme dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown function {0}")]
    UnknownFunction(String),

    #[error("cycle detected at function {0}")]
    CycleDetected(String),

    #[error("no chain for demanded function {0}")]
    MissingChain(String),

    #[error("service {service} has no instances, requests to it cannot be routed")]
    UndefinedRouting { service: String },

    #[error("path enumeration needs {paths} paths, guard is {guard}")]
    EnumerationTooLarge { paths: u128, guard: u128 },

    #[error("no server has capacity for an instance of service {service}")]
    InsufficientCapacity { service: String },

    #[error("infeasible scenario: {0}")]
    Infeasible(String),

    #[error("search space of {states} states exceeds guard {guard}")]
    StateSpaceTooLarge { states: u128, guard: u128 },

    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
}

fn join(errors: &[ValidationError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
