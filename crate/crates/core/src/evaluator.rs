//! Average response time under Round-Robin routing, and constraint checks.
//!
//! Two independent routes compute the same expectation:
//!
//! * `Qsrfp` sums, hop by hop, the expected transfer time between two
//!   consecutive chain positions. Each hop is a ratio of quadratics in the
//!   instance counts. Cost is `O(|L| |N|^2)` per chain.
//! * `Fpp` enumerates every response server path with its probability
//!   and total time. Cost is `O(|N|^|L|)` per chain, guarded.
//!
//! They agree because the total time of a path is the sum of its hop
//! times and the path probability factorizes per position.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::chains::{DemandSummary, FunctionChain};
use crate::error::Error;
use crate::model::{DeploymentScheme, FunctionSpec, NetworkModel};
use crate::problem::{capability_met, ChainPlan, Problem};

/// Largest number of response paths `Fpp` mode will enumerate per chain.
pub const FPP_PATH_GUARD: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    #[default]
    Qsrfp,
    Fpp,
}

impl std::str::FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "qsrfp" => Ok(EvalMode::Qsrfp),
            "fpp" => Ok(EvalMode::Fpp),
            other => Err(format!("unknown mode {other:?} (expected qsrfp or fpp)")),
        }
    }
}

/// Time for one call of `callee` between two servers, ms.
pub fn pair_transmission_time(
    callee: &FunctionSpec,
    from_server: usize,
    to_server: usize,
    network: &NetworkModel,
) -> f64 {
    network.hop_time(from_server, to_server, callee.data_kb())
}

/// Share of `service`'s requests that land on `server`.
pub fn instance_probability(
    problem: &Problem,
    service: usize,
    server: usize,
    x: &DeploymentScheme,
) -> Result<f64, Error> {
    let total = x.total(service);
    if total == 0 {
        return Err(undefined_routing(problem, service));
    }
    Ok(f64::from(x.get(server, service)) / f64::from(total))
}

fn undefined_routing(problem: &Problem, service: usize) -> Error {
    Error::UndefinedRouting {
        service: problem.service_id(service).to_string(),
    }
}

/// Routing distribution of `service` over servers.
pub(crate) fn distribution(
    problem: &Problem,
    service: usize,
    x: &DeploymentScheme,
) -> Result<Vec<f64>, Error> {
    let total = x.total(service);
    if total == 0 {
        return Err(undefined_routing(problem, service));
    }
    let total = f64::from(total);
    Ok((0..x.servers())
        .map(|k| f64::from(x.get(k, service)) / total)
        .collect())
}

/// Expected time of moving `data_kb` between two independently placed ends.
pub(crate) fn expected_hop(from: &[f64], to: &[f64], data_kb: f64, net: &NetworkModel) -> f64 {
    let mut sum = 0.0;
    for (v, &pv) in from.iter().enumerate() {
        if pv == 0.0 {
            continue;
        }
        for (w, &pw) in to.iter().enumerate() {
            if pw == 0.0 {
                continue;
            }
            sum += pv * pw * net.hop_time(v, w, data_kb);
        }
    }
    sum
}

pub(crate) fn plan_time_qsrfp(
    plan: &ChainPlan,
    x: &DeploymentScheme,
    problem: &Problem,
) -> Result<f64, Error> {
    let net = &problem.scenario().network;
    let mut prev = plan.origin.clone();
    let mut total = 0.0;
    for (&service, &data) in plan.services.iter().zip(&plan.data_kb) {
        let here = distribution(problem, service, x)?;
        total += expected_hop(&prev, &here, data, net);
        prev = here;
    }
    Ok(total)
}

/// Chain response time by hop decomposition.
pub fn chain_average_time_qsrfp(
    chain: &FunctionChain,
    x: &DeploymentScheme,
    problem: &Problem,
) -> Result<f64, Error> {
    plan_time_qsrfp(&compile(chain, problem)?, x, problem)
}

/// One concrete server assignment for a chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponsePath {
    pub servers: Vec<usize>,
    pub probability: f64,
    /// Time spent between chain positions, excluding the user hop.
    pub time_ms: f64,
}

fn path_count(problem: &Problem, chain_len: usize) -> u128 {
    (problem.servers() as u128).saturating_pow(chain_len as u32)
}

/// Enumerates every response path for `chain`, zero-probability ones included.
pub fn response_paths(
    chain: &FunctionChain,
    x: &DeploymentScheme,
    problem: &Problem,
) -> Result<Vec<ResponsePath>, Error> {
    let plan = compile(chain, problem)?;
    let mut out = Vec::new();
    for_each_path(&plan, x, problem, |servers, probability, time_ms| {
        out.push(ResponsePath {
            servers: servers.to_vec(),
            probability,
            time_ms,
        })
    })?;
    Ok(out)
}

fn for_each_path(
    plan: &ChainPlan,
    x: &DeploymentScheme,
    problem: &Problem,
    mut visit: impl FnMut(&[usize], f64, f64),
) -> Result<(), Error> {
    let n = problem.servers();
    let len = plan.services.len();
    let paths = path_count(problem, len);
    if paths > FPP_PATH_GUARD {
        return Err(Error::EnumerationTooLarge {
            paths,
            guard: FPP_PATH_GUARD,
        });
    }
    for &s in &plan.services {
        if x.total(s) == 0 {
            return Err(undefined_routing(problem, s));
        }
    }
    let net = &problem.scenario().network;
    let mut h = vec![0usize; len];
    loop {
        let mut probability = 1.0;
        for (m, &s) in plan.services.iter().enumerate() {
            probability *= instance_probability(problem, s, h[m], x)?;
        }
        let mut time = 0.0;
        for m in 1..len {
            time += net.hop_time(h[m - 1], h[m], plan.data_kb[m]);
        }
        visit(&h, probability, time);

        // odometer
        let mut pos = len;
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            h[pos] += 1;
            if h[pos] < n {
                break;
            }
            h[pos] = 0;
        }
    }
}

pub(crate) fn plan_time_fpp(
    plan: &ChainPlan,
    x: &DeploymentScheme,
    problem: &Problem,
) -> Result<f64, Error> {
    let net = &problem.scenario().network;
    let first_data = plan.data_kb[0];
    let mut total = 0.0;
    for_each_path(plan, x, problem, |h, probability, path_time| {
        for (k, &p_origin) in plan.origin.iter().enumerate() {
            let t = net.hop_time(k, h[0], first_data) + path_time;
            total += p_origin * probability * t;
        }
    })?;
    Ok(total)
}

/// Chain response time by enumerating every response path.
pub fn chain_average_time_fpp(
    chain: &FunctionChain,
    x: &DeploymentScheme,
    problem: &Problem,
) -> Result<f64, Error> {
    plan_time_fpp(&compile(chain, problem)?, x, problem)
}

fn compile(chain: &FunctionChain, problem: &Problem) -> Result<ChainPlan, Error> {
    let index = |id: &String| {
        problem
            .function_index(id)
            .ok_or_else(|| Error::UnknownFunction(id.clone()))
    };
    let fns: Vec<usize> = chain.hops.iter().map(index).collect::<Result<_, _>>()?;
    let Some(&entry) = fns.first() else {
        return Err(Error::UnknownFunction(chain.entry.clone()));
    };
    let n = problem.servers();
    let rate = problem.function_rate(entry);
    let origin = if rate > 0.0 {
        let mut lambda = vec![0.0; n];
        for d in &problem.scenario().demand {
            if d.function == chain.entry {
                let k = problem
                    .scenario()
                    .servers
                    .iter()
                    .position(|s| s.id == d.server)
                    .expect("validated server id");
                lambda[k] += d.rate;
            }
        }
        lambda.iter().map(|l| l / rate).collect()
    } else {
        vec![0.0; n]
    };
    let mut data_kb = vec![problem.function_data[entry]];
    for (m, &f) in fns.iter().enumerate().skip(1) {
        let virtual_hop = chain.virtual_flags.get(m - 1).copied().unwrap_or(false);
        data_kb.push(if virtual_hop {
            0.0
        } else {
            problem.function_data[f]
        });
    }
    Ok(ChainPlan {
        rate,
        origin,
        services: fns.iter().map(|&f| problem.function_service(f)).collect(),
        data_kb,
    })
}

/// System objective `T(X)` in `Qsrfp` mode, without the report.
pub fn objective(problem: &Problem, x: &DeploymentScheme) -> Result<f64, Error> {
    let total_rate: f64 = problem.plans.iter().map(|p| p.rate).sum();
    if total_rate <= 0.0 {
        return Ok(0.0);
    }
    let mut t = 0.0;
    for plan in &problem.plans {
        t += plan.rate / total_rate * plan_time_qsrfp(plan, x, problem)?;
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// Instances on a server exceed its resources.
    ServerResources,
    /// Total deployment cost exceeds the budget.
    DeploymentCost,
    /// A service cannot serve its user plus service demand.
    ServiceCapability,
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintKind::ServerResources => "server_resources",
            ConstraintKind::DeploymentCost => "deployment_cost",
            ConstraintKind::ServiceCapability => "service_capability",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub constraint: ConstraintKind,
    pub entity: String,
    /// How far past the limit, in the constraint's own unit.
    pub margin: f64,
}

pub fn check_constraints(
    x: &DeploymentScheme,
    problem: &Problem,
    summary: &DemandSummary,
) -> Vec<Violation> {
    let scenario = problem.scenario();
    let mut out = Vec::new();
    for (k, server) in scenario.servers.iter().enumerate() {
        let load = problem.server_load(x, k);
        if load > server.resources {
            out.push(Violation {
                constraint: ConstraintKind::ServerResources,
                entity: server.id.clone(),
                margin: load - server.resources,
            });
        }
    }
    let cost = problem.deployment_cost(x);
    if cost > scenario.cost.max_cost {
        out.push(Violation {
            constraint: ConstraintKind::DeploymentCost,
            entity: "deployment".into(),
            margin: cost - scenario.cost.max_cost,
        });
    }
    for (i, service) in scenario.services.iter().enumerate() {
        let required = summary.required_rate(i);
        let count = x.total(i);
        if !capability_met(service.mu, count, required) {
            out.push(Violation {
                constraint: ConstraintKind::ServiceCapability,
                entity: service.id.clone(),
                margin: required - service.mu * f64::from(count),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub t_system_ms: f64,
    /// Chain response time of every demanded function.
    pub per_function: BTreeMap<String, f64>,
    pub constraints_ok: bool,
    pub violations: Vec<Violation>,
    /// Set when no function has user demand; `t_system_ms` is then 0.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub zero_demand: bool,
}

/// Evaluates `T(X)` with a per-function breakdown and constraint status.
///
/// Chains are summed in entry-id order so both modes are reproducible.
pub fn system_average_time(
    x: &DeploymentScheme,
    problem: &Problem,
    mode: EvalMode,
) -> Result<EvaluationReport, Error> {
    if !x.has_dimensions(problem.servers(), problem.services()) {
        return Err(Error::DimensionMismatch(format!(
            "scheme must be {}x{}",
            problem.servers(),
            problem.services()
        )));
    }
    let total_rate: f64 = problem.plans.iter().map(|p| p.rate).sum();
    let mut per_function = BTreeMap::new();
    let mut t = 0.0;
    for (plan, chain) in problem.plans.iter().zip(problem.chains()) {
        let time = match mode {
            EvalMode::Qsrfp => plan_time_qsrfp(plan, x, problem)?,
            EvalMode::Fpp => plan_time_fpp(plan, x, problem)?,
        };
        t += plan.rate / total_rate * time;
        per_function.insert(chain.entry.clone(), time);
    }
    let violations = check_constraints(x, problem, problem.summary());
    Ok(EvaluationReport {
        t_system_ms: t,
        per_function,
        constraints_ok: violations.is_empty(),
        violations,
        zero_demand: total_rate <= 0.0,
    })
}
