//! Placement optimization for microservice systems with call dependencies.
//!
//! Services expose functions that call each other along a DAG; each
//! service runs as several instances spread over servers, and requests are
//! balanced Round-Robin across instances. Given user demand per function
//! and server, this crate evaluates the system-wide average response time of
//! a deployment and searches for deployments that keep it low within server
//! resources and a cost budget.
//!
//! * [`model`]: scenario types, validation, file formats
//! * [`chains`]: call-subgraph linearization and demand propagation
//! * [`evaluator`]: response-time objective (hop decomposition and exact path
//!   enumeration) and constraint checks
//! * [`solvers`]: B-QSRFP, D-QSRFP, BD-QSRFP, improvement pass, Random baseline,
//!   exhaustive optimum
//! * [`generator`]: random scenarios

pub mod chains;
pub mod error;
pub mod evaluator;
pub mod generator;
pub mod model;
pub mod problem;
pub mod solvers;
pub mod tolerance;

pub use chains::{
    calling_subgraph_to_chain, chain_coefficients, demand_summary, DemandSummary, FunctionChain,
};
pub use error::Error;
pub use evaluator::{
    chain_average_time_fpp, chain_average_time_qsrfp, check_constraints, instance_probability,
    objective, pair_transmission_time, response_paths, system_average_time, ConstraintKind,
    EvalMode, EvaluationReport, ResponsePath, Violation,
};
pub use generator::{generate_scenario, GeneratorConfig, Range};
pub use model::{
    validate_scenario, CostModel, DemandEntry, Dependency, DependencyGraph, DeploymentScheme,
    FunctionSpec, NetworkModel, Scenario, SchemeFile, ServerSpec, ServiceSpec, ValidationError,
    USER_NODE,
};
pub use problem::Problem;
pub use solvers::{
    b_qsrfp_order, best_server, d_qsrfp_order, deploy_spread, exhaustive_optimal, improvement_pass,
    solve, solve_b_qsrfp, solve_bd_qsrfp, solve_d_qsrfp, solve_random, transmission_score,
    Algorithm, ServiceOrder, SolverConfig, SolverResult,
};
