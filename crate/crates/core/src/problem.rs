//! A validated scenario compiled into index form.
//!
//! Evaluators and solvers work on positions rather than ids. [`Problem`]
//! resolves every id once, builds the chain set, the demand summary and the
//! service-level neighbourhoods used by server scoring.

use std::collections::{BTreeSet, HashMap};

use crate::chains::{build_chains, demand_summary, DemandSummary, FunctionChain};
use crate::error::Error;
use crate::model::{validate_scenario, DeploymentScheme, Scenario};

/// A chain resolved to indices.
#[derive(Debug, Clone)]
pub(crate) struct ChainPlan {
    /// Total user rate of the entry function.
    pub rate: f64,
    /// Where the entry's requests originate: `lambda^k / sum lambda`.
    pub origin: Vec<f64>,
    /// Owning service of each chain position.
    pub services: Vec<usize>,
    /// KB moved into each position. Position 0 is the user hop; virtual
    /// hops move nothing.
    pub data_kb: Vec<f64>,
}

/// Who sits on the other end of a service-level call relation.
#[derive(Debug, Clone)]
pub(crate) enum Peer {
    Service(usize),
    /// Users of one entry function, by origin server distribution.
    Users(Vec<f64>),
}

/// One call relation seen from a service: `incoming` means the peer calls it.
#[derive(Debug, Clone)]
pub(crate) struct Link {
    pub peer: Peer,
    pub data_kb: f64,
    pub incoming: bool,
}

#[derive(Debug, Clone)]
pub struct Problem {
    scenario: Scenario,
    chains: Vec<FunctionChain>,
    pub(crate) plans: Vec<ChainPlan>,
    summary: DemandSummary,
    function_index: HashMap<String, usize>,
    function_service: Vec<usize>,
    pub(crate) function_data: Vec<f64>,
    function_rate: Vec<f64>,
    service_pred: Vec<BTreeSet<usize>>,
    service_succ: Vec<BTreeSet<usize>>,
    pub(crate) links: Vec<Vec<Link>>,
    on_chain: Vec<bool>,
}

impl Problem {
    /// Validates and compiles. All validation failures are reported at once.
    pub fn new(scenario: Scenario) -> Result<Self, Error> {
        let errors = validate_scenario(&scenario);
        if !errors.is_empty() {
            return Err(Error::InvalidScenario(errors));
        }
        let n = scenario.servers.len();

        let mut function_index = HashMap::new();
        let mut function_service = Vec::new();
        let mut function_data = Vec::new();
        for (i, s) in scenario.services.iter().enumerate() {
            for f in &s.functions {
                function_index.insert(f.id.clone(), function_service.len());
                function_service.push(i);
                function_data.push(f.data_kb());
            }
        }
        let server_index: HashMap<&str, usize> = scenario
            .servers
            .iter()
            .enumerate()
            .map(|(k, s)| (s.id.as_str(), k))
            .collect();

        let mut lambda = vec![vec![0.0; n]; function_service.len()];
        for d in &scenario.demand {
            lambda[function_index[&d.function]][server_index[d.server.as_str()]] += d.rate;
        }
        let function_rate: Vec<f64> = lambda.iter().map(|row| row.iter().sum()).collect();
        let origin_of = |f: usize| -> Vec<f64> {
            let total = function_rate[f];
            if total > 0.0 {
                lambda[f].iter().map(|&l| l / total).collect()
            } else {
                vec![0.0; n]
            }
        };

        let chains = build_chains(&scenario)?;
        let summary = demand_summary(&scenario, &chains)?;

        let mut on_chain = vec![false; scenario.services.len()];
        let plans: Vec<ChainPlan> = chains
            .iter()
            .map(|c| {
                let fns: Vec<usize> = c.hops.iter().map(|h| function_index[h]).collect();
                let services: Vec<usize> = fns.iter().map(|&f| function_service[f]).collect();
                for &s in &services {
                    on_chain[s] = true;
                }
                let mut data_kb = vec![function_data[fns[0]]];
                for (m, &virt) in c.virtual_flags.iter().enumerate() {
                    data_kb.push(if virt { 0.0 } else { function_data[fns[m + 1]] });
                }
                ChainPlan {
                    rate: function_rate[fns[0]],
                    origin: origin_of(fns[0]),
                    services,
                    data_kb,
                }
            })
            .collect();

        let ns = scenario.services.len();
        let mut service_pred = vec![BTreeSet::new(); ns];
        let mut service_succ = vec![BTreeSet::new(); ns];
        let mut links: Vec<Vec<Link>> = vec![Vec::new(); ns];
        for (f, &s) in function_service.iter().enumerate() {
            if function_rate[f] > 0.0 {
                links[s].push(Link {
                    peer: Peer::Users(origin_of(f)),
                    data_kb: function_data[f],
                    incoming: true,
                });
            }
        }
        for dep in &scenario.dependencies {
            let (Some(&from), Some(&to)) =
                (function_index.get(&dep.from), function_index.get(&dep.to))
            else {
                continue;
            };
            let (caller, callee) = (function_service[from], function_service[to]);
            if caller == callee {
                continue;
            }
            service_succ[caller].insert(callee);
            service_pred[callee].insert(caller);
            links[callee].push(Link {
                peer: Peer::Service(caller),
                data_kb: function_data[to],
                incoming: true,
            });
            links[caller].push(Link {
                peer: Peer::Service(callee),
                data_kb: function_data[to],
                incoming: false,
            });
        }

        Ok(Problem {
            scenario,
            chains,
            plans,
            summary,
            function_index,
            function_service,
            function_data,
            function_rate,
            service_pred,
            service_succ,
            links,
            on_chain,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn chains(&self) -> &[FunctionChain] {
        &self.chains
    }

    pub fn summary(&self) -> &DemandSummary {
        &self.summary
    }

    pub fn servers(&self) -> usize {
        self.scenario.servers.len()
    }

    pub fn services(&self) -> usize {
        self.scenario.services.len()
    }

    pub fn empty_scheme(&self) -> DeploymentScheme {
        DeploymentScheme::zeros(self.servers(), self.services())
    }

    pub fn service_id(&self, service: usize) -> &str {
        &self.scenario.services[service].id
    }

    pub fn server_id(&self, server: usize) -> &str {
        &self.scenario.servers[server].id
    }

    pub fn function_index(&self, id: &str) -> Option<usize> {
        self.function_index.get(id).copied()
    }

    pub fn function_service(&self, function: usize) -> usize {
        self.function_service[function]
    }

    /// Total user rate of a function over all servers.
    pub fn function_rate(&self, function: usize) -> f64 {
        self.function_rate[function]
    }

    /// Services with a function calling one of `service`'s functions.
    pub fn service_predecessors(&self, service: usize) -> &BTreeSet<usize> {
        &self.service_pred[service]
    }

    pub fn service_successors(&self, service: usize) -> &BTreeSet<usize> {
        &self.service_succ[service]
    }

    /// Whether the service appears on any user-demanded chain.
    pub fn on_demanded_chain(&self, service: usize) -> bool {
        self.on_chain[service]
    }

    /// Smallest instance count that covers the service's demand and keeps
    /// every demanded chain routable.
    pub fn required_instances(&self, service: usize) -> u32 {
        let s = &self.scenario.services[service];
        let covering = min_instances(self.summary.required_rate(service), s.mu);
        if covering == 0 && self.on_chain[service] {
            1
        } else {
            covering
        }
    }

    /// Resource units used on `server`, with `extra` more instances of `service`.
    pub fn server_load_with(
        &self,
        x: &DeploymentScheme,
        server: usize,
        service: usize,
        extra: u32,
    ) -> f64 {
        self.scenario
            .services
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let count = x.get(server, i) + if i == service { extra } else { 0 };
                f64::from(count) * s.resources
            })
            .sum()
    }

    pub fn server_load(&self, x: &DeploymentScheme, server: usize) -> f64 {
        self.server_load_with(x, server, 0, 0)
    }

    /// Whether `count` more instances of `service` fit on `server`.
    pub fn fits(&self, x: &DeploymentScheme, server: usize, service: usize, count: u32) -> bool {
        self.server_load_with(x, server, service, count) <= self.scenario.servers[server].resources
    }

    /// Largest `c <= limit` such that `c` instances of `service` fit on `server`.
    pub fn batch_capacity(
        &self,
        x: &DeploymentScheme,
        server: usize,
        service: usize,
        limit: u32,
    ) -> u32 {
        let free = self.scenario.servers[server].resources - self.server_load(x, server);
        let r = self.scenario.services[service].resources;
        let estimate = (free / r).floor().max(0.0).min(f64::from(limit)) as u32;
        let mut c = estimate;
        while c > 0 && !self.fits(x, server, service, c) {
            c -= 1;
        }
        while c < limit && self.fits(x, server, service, c + 1) {
            c += 1;
        }
        c
    }

    /// Monetary cost of the deployment.
    pub fn deployment_cost(&self, x: &DeploymentScheme) -> f64 {
        let units: f64 = (0..self.servers()).map(|k| self.server_load(x, k)).sum();
        self.scenario.cost.unit_cost * units
    }
}

/// Smallest `q` with `q * mu >= rate`, compared exactly.
pub fn min_instances(rate: f64, mu: f64) -> u32 {
    if rate <= 0.0 {
        return 0;
    }
    let mut q = (rate / mu).ceil().max(0.0) as u32;
    while q > 0 && capability_met(mu, q - 1, rate) {
        q -= 1;
    }
    while !capability_met(mu, q, rate) {
        q += 1;
    }
    q
}

/// Exact test of `mu * count >= rate` (no rounding in the product).
pub fn capability_met(mu: f64, count: u32, rate: f64) -> bool {
    let c = f64::from(count);
    let p = c * mu;
    if p != rate {
        return p > rate;
    }
    // p rounded to exactly `rate`; the residual decides.
    c.mul_add(mu, -p) >= 0.0
}
