//! Deployment algorithms.
//!
//! The greedy solvers share two building blocks: [`best_server`] scores
//! every server with room for one more instance by the expected transfer
//! time to the service's callers, callees and users, and [`deploy_spread`]
//! places instances in batches, then re-places the neighbours whose best
//! position may have moved.
//!
//! B-QSRFP walks services in dependency order; D-QSRFP walks user chains by
//! decreasing data volume. BD runs both and keeps the better scheme.
//! [`exhaustive_optimal`] is the exact reference on tiny instances.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::evaluator::{check_constraints, distribution, expected_hop, objective, Violation};
use crate::model::DeploymentScheme;
use crate::problem::{min_instances, Peer, Problem};
use crate::tolerance::definitely_less;

/// Default state-space guard for [`exhaustive_optimal`].
pub const DEFAULT_GUARD: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "b-qsrfp")]
    BQsrfp,
    #[serde(rename = "d-qsrfp")]
    DQsrfp,
    #[serde(rename = "bd-qsrfp")]
    BdQsrfp,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "optimal")]
    Optimal,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::BQsrfp,
        Algorithm::DQsrfp,
        Algorithm::BdQsrfp,
        Algorithm::Random,
        Algorithm::Optimal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::BQsrfp => "b-qsrfp",
            Algorithm::DQsrfp => "d-qsrfp",
            Algorithm::BdQsrfp => "bd-qsrfp",
            Algorithm::Random => "random",
            Algorithm::Optimal => "optimal",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm {s:?}"))
    }
}

/// Which end of the `mu / r` ratio B-QSRFP picks first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceOrder {
    /// Smallest `mu / r` first.
    #[default]
    Pseudocode,
    /// Largest `mu / r` first.
    Prose,
}

impl FromStr for ServiceOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pseudocode" => Ok(ServiceOrder::Pseudocode),
            "prose" => Ok(ServiceOrder::Prose),
            other => Err(format!("unknown service order {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub service_order: ServiceOrder,
    /// Run [`improvement_pass`] after the greedy solvers.
    pub improve: bool,
    pub seed: u64,
    pub trials: usize,
    pub guard: u128,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            service_order: ServiceOrder::default(),
            improve: false,
            seed: 0,
            trials: 100,
            guard: DEFAULT_GUARD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomStats {
    pub trials: usize,
    pub feasible_trials: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub best_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverResult {
    pub algorithm: Algorithm,
    #[serde(rename = "x")]
    pub scheme: DeploymentScheme,
    /// `T(X)` of the scheme; for Random, the mean over feasible trials.
    pub t_system_ms: f64,
    pub wall_time_ms: f64,
    pub feasible: bool,
    pub violations: Vec<Violation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub service_order: Option<ServiceOrder>,
    /// For BD, which of the two runs produced the scheme.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected: Option<Algorithm>,
    pub improved: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomStats>,
}

impl SolverResult {
    fn evaluate(
        problem: &Problem,
        algorithm: Algorithm,
        scheme: DeploymentScheme,
        started: Instant,
    ) -> Result<Self, Error> {
        let wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
        let t_system_ms = objective(problem, &scheme)?;
        let violations = check_constraints(&scheme, problem, problem.summary());
        Ok(SolverResult {
            algorithm,
            scheme,
            t_system_ms,
            wall_time_ms,
            feasible: violations.is_empty(),
            violations,
            service_order: None,
            selected: None,
            improved: false,
            random: None,
        })
    }
}

/// Server with room for one more instance of `service` that minimizes the
/// expected transfer time to its deployed neighbours and users.
///
/// Neighbours without instances contribute nothing. Ties go to the lowest
/// server index. `None` when no server has room.
pub fn best_server(problem: &Problem, service: usize, x: &DeploymentScheme) -> Option<usize> {
    let net = &problem.scenario().network;
    let n = problem.servers();
    let peers: Vec<(Option<Vec<f64>>, f64, bool)> = problem.links[service]
        .iter()
        .map(|link| {
            let dist = match &link.peer {
                Peer::Service(p) => distribution(problem, *p, x).ok(),
                Peer::Users(origin) => Some(origin.clone()),
            };
            (dist, link.data_kb, link.incoming)
        })
        .collect();

    let total = f64::from(x.total(service)) + 1.0;
    let mut best: Option<(usize, f64)> = None;
    let mut candidate = vec![0.0; n];
    for server in 0..n {
        if !problem.fits(x, server, service, 1) {
            continue;
        }
        for (w, p) in candidate.iter_mut().enumerate() {
            let count = x.get(w, service) + u32::from(w == server);
            *p = f64::from(count) / total;
        }
        let score: f64 = peers
            .iter()
            .map(|(dist, data, incoming)| match dist {
                None => 0.0,
                Some(d) if *incoming => expected_hop(d, &candidate, *data, net),
                Some(d) => expected_hop(&candidate, d, *data, net),
            })
            .sum();
        if best.is_none_or(|(_, c)| score < c) {
            best = Some((server, score));
        }
    }
    best.map(|(s, _)| s)
}

fn neighbours(problem: &Problem, service: usize) -> BTreeSet<usize> {
    problem
        .service_predecessors(service)
        .union(problem.service_successors(service))
        .copied()
        .collect()
}

/// Places `count` instances of `service` on the best servers, batching as
/// many as fit per choice.
fn place(
    problem: &Problem,
    service: usize,
    count: u32,
    x: &mut DeploymentScheme,
) -> Result<(), Error> {
    let mut left = count;
    while left > 0 {
        let server =
            best_server(problem, service, x).ok_or_else(|| Error::InsufficientCapacity {
                service: problem.service_id(service).to_string(),
            })?;
        let c = problem.batch_capacity(x, server, service, left);
        debug_assert!(c > 0);
        x.add(server, service, c);
        left -= c;
    }
    Ok(())
}

/// Deploys `k` instances of `service`, re-placing neighbours after each batch.
///
/// After a batch lands, every caller and callee is torn down and placed
/// again with the same count. A neighbour whose re-placement changed the
/// scheme spreads the ripple to its own neighbours; each service changes
/// at most once per batch.
pub fn deploy_spread(
    problem: &Problem,
    service: usize,
    k: u32,
    x: &mut DeploymentScheme,
) -> Result<(), Error> {
    let mut left = k;
    while left > 0 {
        let server =
            best_server(problem, service, x).ok_or_else(|| Error::InsufficientCapacity {
                service: problem.service_id(service).to_string(),
            })?;
        let c = problem.batch_capacity(x, server, service, left);
        x.add(server, service, c);
        left -= c;

        let mut ripple = neighbours(problem, service);
        let mut processed = BTreeSet::from([service]);
        ripple.remove(&service);
        while let Some(r) = ripple.pop_first() {
            let k_r = x.total(r);
            if k_r == 0 {
                continue;
            }
            let snapshot = x.clone();
            x.clear_service(r);
            place(problem, r, k_r, x)?;
            if *x != snapshot {
                processed.insert(r);
                ripple.extend(neighbours(problem, r));
                ripple.retain(|s| !processed.contains(s));
            }
        }
    }
    Ok(())
}

fn ratio(problem: &Problem, service: usize) -> f64 {
    let s = &problem.scenario().services[service];
    s.mu / s.resources
}

/// Order in which B-QSRFP deploys services: predecessor-free first, then by
/// the `mu / r` criterion, lowest index on ties.
pub fn b_qsrfp_order(problem: &Problem, service_order: ServiceOrder) -> Vec<usize> {
    let mut remaining: BTreeSet<usize> = (0..problem.services()).collect();
    let mut order = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let open_preds = |s: usize| {
            problem
                .service_predecessors(s)
                .intersection(&remaining)
                .count()
        };
        // Function-level DAGs can still close a loop between services; fall
        // back to the least-blocked services then.
        let fewest = remaining.iter().map(|&s| open_preds(s)).min().unwrap_or(0);
        let chosen = remaining
            .iter()
            .copied()
            .filter(|&s| open_preds(s) == fewest)
            .reduce(|best, s| {
                let better = match service_order {
                    ServiceOrder::Pseudocode => ratio(problem, s) < ratio(problem, best),
                    ServiceOrder::Prose => ratio(problem, s) > ratio(problem, best),
                };
                if better {
                    s
                } else {
                    best
                }
            })
            .expect("remaining is non-empty");
        remaining.remove(&chosen);
        order.push(chosen);
    }
    order
}

/// Dependency-order greedy: deploys each service in [`b_qsrfp_order`] with
/// its minimum instance count.
pub fn solve_b_qsrfp(problem: &Problem, config: &SolverConfig) -> Result<SolverResult, Error> {
    let started = Instant::now();
    let mut x = problem.empty_scheme();
    for chosen in b_qsrfp_order(problem, config.service_order) {
        let k = problem.required_instances(chosen);
        if k > 0 {
            deploy_spread(problem, chosen, k, &mut x)?;
        }
    }
    if config.improve {
        x = improvement_pass(problem, x)?;
    }
    let mut result = SolverResult::evaluate(problem, Algorithm::BQsrfp, x, started)?;
    result.service_order = Some(config.service_order);
    result.improved = config.improve;
    Ok(result)
}

/// Data volume a chain moves per unit time, used to order D-QSRFP.
pub fn transmission_score(problem: &Problem, chain_index: usize) -> f64 {
    let chain = &problem.chains()[chain_index];
    let plan = &problem.plans[chain_index];
    let data =
        |id: &str| problem.function_data[problem.function_index(id).expect("chain function")];
    let mut score = data(&chain.entry) * plan.rate;
    for (hop, &w) in chain.hops.iter().zip(&chain.demand_weights).skip(1) {
        score += w * data(hop) * plan.rate;
    }
    score
}

/// Chain indices by decreasing [`transmission_score`], entry id on ties.
pub fn d_qsrfp_order(problem: &Problem) -> Vec<usize> {
    let scores: Vec<f64> = (0..problem.chains().len())
        .map(|c| transmission_score(problem, c))
        .collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable: chains are already in entry-id order
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Chain-order greedy: walks user chains by decreasing data volume and
/// deploys whatever capacity each position still lacks.
pub fn solve_d_qsrfp(problem: &Problem, config: &SolverConfig) -> Result<SolverResult, Error> {
    let started = Instant::now();
    let mut x = problem.empty_scheme();
    let services = &problem.scenario().services;

    let mut solved = vec![0.0; problem.services()];
    for c in d_qsrfp_order(problem) {
        let chain = &problem.chains()[c];
        let plan = &problem.plans[c];
        for (&s, &w) in plan.services.iter().zip(&chain.demand_weights) {
            let lambda_c = w * plan.rate;
            let mu = services[s].mu;
            let deficit = solved[s] + lambda_c - f64::from(x.total(s)) * mu;
            if deficit > 0.0 {
                deploy_spread(problem, s, min_instances(deficit, mu), &mut x)?;
            }
            solved[s] += lambda_c;
        }
    }
    // Summation order differs from the demand summary; close any rounding gap
    // and make every chain service routable.
    for s in 0..problem.services() {
        let need = problem.required_instances(s);
        let have = x.total(s);
        if need > have {
            deploy_spread(problem, s, need - have, &mut x)?;
        }
    }
    if config.improve {
        x = improvement_pass(problem, x)?;
    }
    let mut result = SolverResult::evaluate(problem, Algorithm::DQsrfp, x, started)?;
    result.improved = config.improve;
    Ok(result)
}

/// Runs B-QSRFP and D-QSRFP and keeps the feasible scheme with smaller `T`.
pub fn solve_bd_qsrfp(problem: &Problem, config: &SolverConfig) -> Result<SolverResult, Error> {
    let started = Instant::now();
    let b = solve_b_qsrfp(problem, config);
    let d = solve_d_qsrfp(problem, config);
    let wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
    let feasible = |r: &Result<SolverResult, Error>| matches!(r, Ok(res) if res.feasible);
    let mut chosen = match (feasible(&b), feasible(&d)) {
        (true, true) => {
            let (b, d) = (b?, d?);
            if d.t_system_ms < b.t_system_ms {
                d
            } else {
                b
            }
        }
        (true, false) => b?,
        (false, true) => d?,
        (false, false) => {
            let reason = |r: Result<SolverResult, Error>| match r {
                Ok(res) => format!(
                    "{} violates {} constraint(s)",
                    res.algorithm,
                    res.violations.len()
                ),
                Err(e) => e.to_string(),
            };
            return Err(Error::Infeasible(format!("{}; {}", reason(b), reason(d))));
        }
    };
    chosen.selected = Some(chosen.algorithm);
    chosen.algorithm = Algorithm::BdQsrfp;
    chosen.wall_time_ms = wall_time_ms;
    Ok(chosen)
}

/// Adds single instances while some addition strictly lowers `T(X)` and
/// server resources and budget allow it.
pub fn improvement_pass(
    problem: &Problem,
    mut x: DeploymentScheme,
) -> Result<DeploymentScheme, Error> {
    let max_cost = problem.scenario().cost.max_cost;
    let mut current = objective(problem, &x)?;
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for s in (0..problem.services()).filter(|&s| problem.on_demanded_chain(s)) {
            for n in 0..problem.servers() {
                if !problem.fits(&x, n, s, 1) {
                    continue;
                }
                x.add(n, s, 1);
                if problem.deployment_cost(&x) <= max_cost {
                    let t = objective(problem, &x)?;
                    if best.is_none_or(|(bt, _, _)| t < bt) {
                        best = Some((t, s, n));
                    }
                }
                x.set(n, s, x.get(n, s) - 1);
            }
        }
        match best {
            Some((t, s, n)) if definitely_less(t, current) => {
                x.add(n, s, 1);
                current = t;
            }
            _ => return Ok(x),
        }
    }
}

/// Random baseline: minimum instance counts on uniformly chosen servers
/// with room, repeated `trials` times.
pub fn solve_random(problem: &Problem, trials: usize, seed: u64) -> Result<SolverResult, Error> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times = Vec::new();
    let mut best: Option<(f64, DeploymentScheme)> = None;
    'trial: for _ in 0..trials.max(1) {
        let mut x = problem.empty_scheme();
        for s in 0..problem.services() {
            for _ in 0..problem.required_instances(s) {
                let open: Vec<usize> = (0..problem.servers())
                    .filter(|&n| problem.fits(&x, n, s, 1))
                    .collect();
                if open.is_empty() {
                    continue 'trial;
                }
                x.add(open[rng.random_range(0..open.len())], s, 1);
            }
        }
        if !check_constraints(&x, problem, problem.summary()).is_empty() {
            continue;
        }
        let t = objective(problem, &x)?;
        times.push(t);
        if best.as_ref().is_none_or(|(bt, _)| t < *bt) {
            best = Some((t, x));
        }
    }
    let Some((best_ms, scheme)) = best else {
        return Err(Error::Infeasible(format!(
            "no feasible scheme in {trials} random trials"
        )));
    };
    let mean_ms = times.iter().sum::<f64>() / times.len() as f64;
    let std_ms =
        (times.iter().map(|t| (t - mean_ms).powi(2)).sum::<f64>() / times.len() as f64).sqrt();
    let mut result = SolverResult::evaluate(problem, Algorithm::Random, scheme, started)?;
    result.t_system_ms = mean_ms;
    result.random = Some(RandomStats {
        trials: trials.max(1),
        feasible_trials: times.len(),
        mean_ms,
        std_ms,
        best_ms,
    });
    Ok(result)
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Per-service instance-count bounds searched by [`exhaustive_optimal`].
///
/// Lower bounds are the minimum counts. Services off every demanded chain
/// cannot change `T(X)`, so they stay at their minimum. The others may grow
/// until the shared resource or budget slack runs out.
pub fn search_bounds(problem: &Problem) -> Result<Vec<(u32, u32)>, Error> {
    let scenario = problem.scenario();
    let capacity: f64 = scenario.servers.iter().map(|s| s.resources).sum();
    let budget_units = scenario.cost.max_cost / scenario.cost.unit_cost;
    let lows: Vec<u32> = (0..problem.services())
        .map(|s| problem.required_instances(s))
        .collect();
    let base: f64 = lows
        .iter()
        .zip(&scenario.services)
        .map(|(&c, s)| f64::from(c) * s.resources)
        .sum();
    let slack = capacity.min(budget_units) - base;
    if slack < 0.0 {
        return Err(Error::Infeasible(format!(
            "minimum deployment needs {base} resource units, {} available",
            capacity.min(budget_units)
        )));
    }
    Ok(lows
        .into_iter()
        .enumerate()
        .map(|(s, lo)| {
            if problem.on_demanded_chain(s) {
                let extra = (slack / scenario.services[s].resources).floor() as u32;
                (lo, lo + extra)
            } else {
                (lo, lo)
            }
        })
        .collect())
}

/// Number of schemes inside [`search_bounds`], saturating.
pub fn state_space(problem: &Problem, bounds: &[(u32, u32)]) -> u128 {
    let n = problem.servers() as u128;
    bounds.iter().fold(1u128, |acc, &(lo, hi)| {
        let per_service: u128 = (lo..=hi)
            .map(|c| binomial(u128::from(c) + n - 1, n - 1))
            .fold(0u128, u128::saturating_add);
        acc.saturating_mul(per_service)
    })
}

/// Exact minimizer of `T(X)` by enumerating every feasible scheme.
pub fn exhaustive_optimal(problem: &Problem, guard: u128) -> Result<SolverResult, Error> {
    let started = Instant::now();
    let bounds = search_bounds(problem)?;
    let states = state_space(problem, &bounds);
    if states > guard {
        return Err(Error::StateSpaceTooLarge { states, guard });
    }

    struct Search<'a> {
        problem: &'a Problem,
        bounds: Vec<(u32, u32)>,
        max_cost: f64,
        best: Option<(f64, DeploymentScheme)>,
    }

    impl Search<'_> {
        fn service(&mut self, s: usize, x: &mut DeploymentScheme) -> Result<(), Error> {
            if s == self.bounds.len() {
                let t = objective(self.problem, x)?;
                if self.best.as_ref().is_none_or(|(bt, _)| t < *bt) {
                    self.best = Some((t, x.clone()));
                }
                return Ok(());
            }
            let (lo, hi) = self.bounds[s];
            for count in lo..=hi {
                self.spread(s, 0, count, x)?;
            }
            Ok(())
        }

        fn spread(
            &mut self,
            s: usize,
            server: usize,
            left: u32,
            x: &mut DeploymentScheme,
        ) -> Result<(), Error> {
            let last = server + 1 == self.problem.servers();
            let range = if last { left..=left } else { 0..=left };
            for c in range {
                x.set(server, s, 0);
                if !self.problem.fits(x, server, s, c) {
                    break;
                }
                x.set(server, s, c);
                if last {
                    if self.problem.deployment_cost(x) <= self.max_cost {
                        self.service(s + 1, x)?;
                    }
                } else {
                    self.spread(s, server + 1, left - c, x)?;
                }
            }
            x.set(server, s, 0);
            Ok(())
        }
    }

    let mut search = Search {
        problem,
        bounds,
        max_cost: problem.scenario().cost.max_cost,
        best: None,
    };
    let mut x = problem.empty_scheme();
    search.service(0, &mut x)?;
    let (_, scheme) = search
        .best
        .ok_or_else(|| Error::Infeasible("no scheme satisfies the constraints".into()))?;
    SolverResult::evaluate(problem, Algorithm::Optimal, scheme, started)
}

/// Runs one algorithm with the given options.
///
/// The improvement pass applies to the greedy algorithms only.
pub fn solve(
    problem: &Problem,
    algorithm: Algorithm,
    config: &SolverConfig,
) -> Result<SolverResult, Error> {
    match algorithm {
        Algorithm::BQsrfp => solve_b_qsrfp(problem, config),
        Algorithm::DQsrfp => solve_d_qsrfp(problem, config),
        Algorithm::BdQsrfp => solve_bd_qsrfp(problem, config),
        Algorithm::Random => solve_random(problem, config.trials, config.seed),
        Algorithm::Optimal => exhaustive_optimal(problem, config.guard),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::two_by_two;
    use crate::model::{
        CostModel, DemandEntry, Dependency, FunctionSpec, NetworkModel, Scenario, ServerSpec,
        ServiceSpec,
    };

    /// Services `(id, kb each way, mu, r)` with one function `f<id>` each;
    /// uniform 5 ms delay and 1000 MB/s between servers.
    fn build(
        services: &[(&str, f64, f64, f64)],
        deps: &[(&str, &str, f64)],
        caps: &[f64],
        demand: &[(&str, usize, f64)],
    ) -> Scenario {
        let n = caps.len();
        Scenario {
            seed: None,
            services: services
                .iter()
                .map(|&(id, kb, mu, r)| ServiceSpec {
                    id: id.into(),
                    functions: vec![FunctionSpec::new(format!("f{id}"), kb, kb)],
                    mu,
                    resources: r,
                })
                .collect(),
            dependencies: deps
                .iter()
                .map(|&(a, b, w)| Dependency::new(format!("f{a}"), format!("f{b}"), w))
                .collect(),
            servers: caps
                .iter()
                .enumerate()
                .map(|(k, &c)| ServerSpec {
                    id: format!("n{k}"),
                    resources: c,
                })
                .collect(),
            network: NetworkModel {
                delay_ms: (0..n)
                    .map(|a| (0..n).map(|b| if a == b { 0.0 } else { 5.0 }).collect())
                    .collect(),
                bandwidth_mbps: (0..n)
                    .map(|a| (0..n).map(|b| (a != b).then_some(1000.0)).collect())
                    .collect(),
            },
            demand: demand
                .iter()
                .map(|&(f, k, rate)| DemandEntry {
                    function: format!("f{f}"),
                    server: format!("n{k}"),
                    rate,
                })
                .collect(),
            cost: CostModel {
                unit_cost: 1.0,
                max_cost: 1000.0,
            },
        }
    }

    fn counts(x: &DeploymentScheme, service: usize) -> Vec<u32> {
        (0..x.servers()).map(|k| x.get(k, service)).collect()
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("greedy".parse::<Algorithm>().is_err());
    }

    #[test]
    fn best_server_with_one_candidate() {
        let p = Problem::new(two_by_two()).unwrap();
        let mut x = p.empty_scheme();
        x.set(0, 1, 2); // n0 full
        assert_eq!(best_server(&p, 0, &x), Some(1));
        x.set(1, 1, 2);
        assert_eq!(best_server(&p, 0, &x), None);
    }

    #[test]
    fn best_server_without_placed_neighbours_takes_first_server() {
        let p = Problem::new(two_by_two()).unwrap();
        // b has no users and its caller a is not deployed
        assert_eq!(best_server(&p, 1, &p.empty_scheme()), Some(0));
    }

    #[test]
    fn best_server_colocates_with_predecessor() {
        let p = Problem::new(two_by_two()).unwrap();
        let mut x = p.empty_scheme();
        x.set(1, 0, 1);
        // n0 would cost 1000 KB / 1000 MB/s + 5 ms = 6 ms, n1 costs 0
        assert_eq!(best_server(&p, 1, &x), Some(1));
    }

    #[test]
    fn best_server_follows_users() {
        let mut s = two_by_two();
        s.demand[0].server = "n1".into();
        let p = Problem::new(s).unwrap();
        assert_eq!(best_server(&p, 0, &p.empty_scheme()), Some(1));
    }

    #[test]
    fn deploy_single_instance_on_single_server() {
        let p = Problem::new(build(
            &[("a", 10.0, 100.0, 1.0)],
            &[],
            &[4.0],
            &[("a", 0, 10.0)],
        ))
        .unwrap();
        let mut x = p.empty_scheme();
        deploy_spread(&p, 0, 1, &mut x).unwrap();
        assert_eq!(x.matrix(), &[vec![1]]);
    }

    #[test]
    fn deploy_batches_then_requeries() {
        let p = Problem::new(build(
            &[("a", 10.0, 100.0, 1.0)],
            &[],
            &[2.0, 4.0],
            &[("a", 0, 10.0)],
        ))
        .unwrap();
        let mut x = p.empty_scheme();
        deploy_spread(&p, 0, 3, &mut x).unwrap();
        assert_eq!(counts(&x, 0), [2, 1]);
    }

    #[test]
    fn deploy_reports_stuck_service() {
        let p = Problem::new(build(
            &[("a", 10.0, 100.0, 3.0)],
            &[],
            &[2.0, 2.0],
            &[("a", 0, 10.0)],
        ))
        .unwrap();
        let mut x = p.empty_scheme();
        let err = deploy_spread(&p, 0, 1, &mut x).unwrap_err();
        assert!(matches!(err, Error::InsufficientCapacity { service } if service == "a"));
    }

    #[test]
    fn ripple_stops_when_neighbour_stays() {
        let p = Problem::new(build(
            &[
                ("a", 100.0, 100.0, 1.0),
                ("b", 100.0, 100.0, 1.0),
                ("c", 100.0, 100.0, 1.0),
            ],
            &[("a", "b", 1.0), ("b", "c", 1.0)],
            &[4.0, 4.0],
            &[("a", 1, 10.0)],
        ))
        .unwrap();
        let mut x = p.empty_scheme();
        deploy_spread(&p, 0, 1, &mut x).unwrap();
        assert_eq!(counts(&x, 0), [0, 1]);
        deploy_spread(&p, 1, 1, &mut x).unwrap();
        // b joins a on n1; re-placing a keeps it there
        assert_eq!(counts(&x, 0), [0, 1]);
        assert_eq!(counts(&x, 1), [0, 1]);
        assert_eq!(counts(&x, 2), [0, 0]);
    }

    #[test]
    fn ripple_moves_a_misplaced_neighbour() {
        let p = Problem::new(build(
            &[("a", 100.0, 100.0, 1.0), ("b", 100.0, 100.0, 1.0)],
            &[("a", "b", 1.0)],
            &[4.0, 4.0],
            &[("b", 1, 10.0)],
        ))
        .unwrap();
        let mut x = p.empty_scheme();
        // a has no users and no placed neighbours yet: n0
        deploy_spread(&p, 0, 1, &mut x).unwrap();
        assert_eq!(counts(&x, 0), [1, 0]);
        // b follows its users to n1 only if that beats staying with a; both
        // cost one cross hop, so the tie keeps n0. The ripple then re-places
        // a next to b.
        deploy_spread(&p, 1, 1, &mut x).unwrap();
        assert_eq!(counts(&x, 1), [1, 0]);
        assert_eq!(counts(&x, 0), [1, 0]);
    }

    #[test]
    fn b_deploys_ceiling_of_demand() {
        let p = Problem::new(build(
            &[("a", 10.0, 100.0, 1.0)],
            &[],
            &[4.0, 4.0],
            &[("a", 0, 150.0)],
        ))
        .unwrap();
        let r = solve_b_qsrfp(&p, &SolverConfig::default()).unwrap();
        assert_eq!(r.scheme.total(0), 2);
        assert!(r.feasible);
        assert_eq!(r.service_order, Some(ServiceOrder::Pseudocode));
    }

    #[test]
    fn b_places_predecessors_first() {
        // b has the smaller mu / r and would win the ratio test on its own
        let p = Problem::new(build(
            &[("a", 10.0, 400.0, 1.0), ("b", 10.0, 100.0, 1.0)],
            &[("a", "b", 1.0)],
            &[4.0, 4.0],
            &[("a", 0, 10.0)],
        ))
        .unwrap();
        assert_eq!(b_qsrfp_order(&p, ServiceOrder::Pseudocode), [0, 1]);
        assert_eq!(b_qsrfp_order(&p, ServiceOrder::Prose), [0, 1]);
    }

    #[test]
    fn service_order_switch_flips_ratio_choice() {
        let p = Problem::new(build(
            &[("a", 10.0, 400.0, 1.0), ("b", 10.0, 100.0, 1.0)],
            &[],
            &[4.0, 4.0],
            &[("a", 0, 10.0), ("b", 0, 10.0)],
        ))
        .unwrap();
        assert_eq!(b_qsrfp_order(&p, ServiceOrder::Pseudocode), [1, 0]);
        assert_eq!(b_qsrfp_order(&p, ServiceOrder::Prose), [0, 1]);
    }

    fn tiny() -> Problem {
        Problem::new(build(
            &[
                ("a", 300.0, 100.0, 1.0),
                ("b", 800.0, 100.0, 1.0),
                ("c", 50.0, 200.0, 2.0),
            ],
            &[("a", "b", 1.5), ("b", "c", 1.0)],
            &[3.0, 4.0],
            &[("a", 0, 60.0), ("a", 1, 40.0), ("c", 1, 30.0)],
        ))
        .unwrap()
    }

    #[test]
    fn greedy_on_tiny_instance_is_no_better_than_optimum() {
        let p = tiny();
        let opt = exhaustive_optimal(&p, DEFAULT_GUARD).unwrap();
        assert!(opt.feasible);
        let config = SolverConfig::default();
        for r in [
            solve_b_qsrfp(&p, &config).unwrap(),
            solve_d_qsrfp(&p, &config).unwrap(),
            solve_bd_qsrfp(&p, &config).unwrap(),
        ] {
            assert!(r.feasible, "{}", r.algorithm);
            assert!(
                r.t_system_ms >= opt.t_system_ms,
                "{} beat the optimum",
                r.algorithm
            );
        }
    }

    #[test]
    fn d_deploys_ceiling_for_single_chain() {
        let p = Problem::new(build(
            &[("a", 10.0, 100.0, 1.0)],
            &[],
            &[4.0, 4.0],
            &[("a", 0, 150.0)],
        ))
        .unwrap();
        let r = solve_d_qsrfp(&p, &SolverConfig::default()).unwrap();
        assert_eq!(r.scheme.total(0), 2);
    }

    #[test]
    fn d_adds_nothing_for_covered_service() {
        // fa -> fb and fc -> fb: b gets 50 + 10 = 60 < 100 from one instance
        let p = Problem::new(build(
            &[
                ("a", 10.0, 100.0, 1.0),
                ("b", 10.0, 100.0, 1.0),
                ("c", 10.0, 100.0, 1.0),
            ],
            &[("a", "b", 1.0), ("c", "b", 1.0)],
            &[4.0, 4.0],
            &[("a", 0, 50.0), ("c", 0, 10.0)],
        ))
        .unwrap();
        let r = solve_d_qsrfp(&p, &SolverConfig::default()).unwrap();
        assert_eq!(r.scheme.total(1), 1);
        assert!(r.feasible);
    }

    #[test]
    fn d_accumulates_demand_across_chains() {
        // 50 + 40 + 40 = 130 on b needs two instances of mu 100
        let p = Problem::new(build(
            &[
                ("a", 10.0, 100.0, 1.0),
                ("b", 10.0, 100.0, 1.0),
                ("c", 10.0, 100.0, 1.0),
                ("d", 10.0, 100.0, 1.0),
            ],
            &[("a", "b", 1.0), ("c", "b", 1.0), ("d", "b", 1.0)],
            &[6.0, 6.0],
            &[("a", 0, 50.0), ("c", 0, 40.0), ("d", 0, 40.0)],
        ))
        .unwrap();
        let r = solve_d_qsrfp(&p, &SolverConfig::default()).unwrap();
        assert_eq!(r.scheme.total(1), 2);
        assert!(r.feasible);
    }

    #[test]
    fn d_orders_chains_by_transmitted_data() {
        let p = Problem::new(build(
            &[
                ("a", 100.0, 100.0, 1.0),
                ("b", 500.0, 100.0, 1.0),
                ("c", 50.0, 100.0, 1.0),
                ("d", 300.0, 100.0, 1.0),
            ],
            &[("a", "b", 2.0), ("c", "d", 1.0)],
            &[8.0, 8.0],
            &[("a", 0, 10.0), ("c", 0, 50.0)],
        ))
        .unwrap();
        // fa: 200 * 10 + 2 * 1000 * 10 = 22000; fc: 100 * 50 + 1 * 600 * 50 = 35000
        assert_eq!(transmission_score(&p, 0), 22000.0);
        assert_eq!(transmission_score(&p, 1), 35000.0);
        assert_eq!(d_qsrfp_order(&p), [1, 0]);
    }

    #[test]
    fn bd_keeps_the_better_run() {
        let p = tiny();
        let config = SolverConfig::default();
        let b = solve_b_qsrfp(&p, &config).unwrap();
        let d = solve_d_qsrfp(&p, &config).unwrap();
        let bd = solve_bd_qsrfp(&p, &config).unwrap();
        assert_eq!(bd.algorithm, Algorithm::BdQsrfp);
        assert_eq!(bd.t_system_ms, b.t_system_ms.min(d.t_system_ms));
        let expected = if d.t_system_ms < b.t_system_ms { d } else { b };
        assert_eq!(bd.selected, Some(expected.algorithm));
        assert_eq!(bd.scheme, expected.scheme);
    }

    fn spread_single_service() -> (Problem, DeploymentScheme) {
        let p = Problem::new(build(
            &[("a", 1000.0, 100.0, 1.0)],
            &[],
            &[4.0, 4.0],
            &[("a", 0, 150.0)],
        ))
        .unwrap();
        let mut x = p.empty_scheme();
        x.set(0, 0, 1);
        x.set(1, 0, 1);
        (p, x)
    }

    #[test]
    fn improvement_adds_instances_while_time_drops() {
        let (p, x) = spread_single_service();
        let before = objective(&p, &x).unwrap();
        // cross share 1/(k+1) of a 7 ms hop: 3.5 ms at one instance on n0
        assert!((before - 3.5).abs() < 1e-12);
        let y = improvement_pass(&p, x).unwrap();
        assert_eq!(counts(&y, 0), [4, 1]);
        let after = objective(&p, &y).unwrap();
        assert!((after - 7.0 / 5.0).abs() < 1e-12);
        assert!(check_constraints(&y, &p, p.summary()).is_empty());
    }

    #[test]
    fn improvement_respects_budget() {
        let (p, x) = spread_single_service();
        let mut s = p.scenario().clone();
        s.cost.max_cost = 2.0;
        let p = Problem::new(s).unwrap();
        assert_eq!(improvement_pass(&p, x.clone()).unwrap(), x);
    }

    #[test]
    fn improvement_stops_without_strict_gain() {
        let p = Problem::new(two_by_two()).unwrap();
        let mut x = p.empty_scheme();
        x.set(0, 0, 1);
        x.set(0, 1, 1);
        assert_eq!(objective(&p, &x).unwrap(), 0.0);
        assert_eq!(improvement_pass(&p, x.clone()).unwrap(), x);
    }

    #[test]
    fn random_on_one_server_is_constant() {
        let p = Problem::new(build(
            &[("a", 100.0, 100.0, 1.0), ("b", 100.0, 100.0, 1.0)],
            &[("a", "b", 1.0)],
            &[10.0],
            &[("a", 0, 150.0)],
        ))
        .unwrap();
        let r = solve_random(&p, 20, 7).unwrap();
        let stats = r.random.unwrap();
        assert_eq!(stats.feasible_trials, 20);
        assert_eq!(stats.std_ms, 0.0);
        assert_eq!(stats.mean_ms, stats.best_ms);
        assert_eq!(counts(&r.scheme, 0), [2]);
    }

    #[test]
    fn random_is_seeded() {
        let p = tiny();
        let a = solve_random(&p, 30, 11).unwrap();
        let b = solve_random(&p, 30, 11).unwrap();
        assert_eq!(a.t_system_ms, b.t_system_ms);
        assert_eq!(a.scheme, b.scheme);
        assert_eq!(a.random, b.random);
    }

    #[test]
    fn optimum_on_one_server_is_the_minimum_scheme() {
        let p = Problem::new(build(
            &[("a", 100.0, 100.0, 1.0), ("b", 100.0, 100.0, 2.0)],
            &[("a", "b", 1.0)],
            &[10.0],
            &[("a", 0, 150.0)],
        ))
        .unwrap();
        let r = exhaustive_optimal(&p, DEFAULT_GUARD).unwrap();
        assert_eq!(r.scheme.matrix(), &[vec![2, 2]]);
        assert_eq!(r.t_system_ms, 0.0);
    }

    #[test]
    fn optimum_matches_brute_force_on_two_servers() {
        let mut s = two_by_two();
        s.demand = vec![
            DemandEntry {
                function: "fa".into(),
                server: "n0".into(),
                rate: 30.0,
            },
            DemandEntry {
                function: "fa".into(),
                server: "n1".into(),
                rate: 20.0,
            },
        ];
        let p = Problem::new(s).unwrap();
        // a needs 50 / 100 -> 1, b needs 100 / 100 -> 1; 4 units per server
        let mut best = f64::INFINITY;
        for a0 in 0..=4u32 {
            for a1 in 0..=4u32 {
                for b0 in 0..=2u32 {
                    for b1 in 0..=2u32 {
                        let fits = a0 + 2 * b0 <= 4 && a1 + 2 * b1 <= 4;
                        if !fits || a0 + a1 < 1 || b0 + b1 < 1 {
                            continue;
                        }
                        let x = DeploymentScheme::from_matrix(vec![vec![a0, b0], vec![a1, b1]]);
                        best = best.min(objective(&p, &x).unwrap());
                    }
                }
            }
        }
        let r = exhaustive_optimal(&p, DEFAULT_GUARD).unwrap();
        assert!(r.feasible);
        assert_eq!(r.t_system_ms, best);
    }

    #[test]
    fn oracle_guard_is_enforced() {
        let p = tiny();
        assert!(matches!(
            exhaustive_optimal(&p, 10),
            Err(Error::StateSpaceTooLarge { guard: 10, .. })
        ));
    }
}
