//! Random scenario generator for experiments and fuzzing.
//!
//! Services get a random rank and calls only go from lower to higher rank,
//! which keeps both the function graph and the service graph acyclic.
//! Chains reuse earlier choices: once a function has a successor, every
//! later chain that reaches it continues the same way. Every function
//! therefore has at most one callee, and no chain grows past the
//! configured maximum length.

use std::collections::{BTreeMap, HashMap};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chains::{build_chains, demand_summary};
use crate::error::Error;
use crate::model::{
    CostModel, DemandEntry, Dependency, FunctionSpec, NetworkModel, Scenario, ServerSpec,
    ServiceSpec,
};
use crate::problem::min_instances;

/// Inclusive range of a generated quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range<T> {
    pub min: T,
    pub max: T,
}

impl<T: PartialOrd + Copy> Range<T> {
    pub const fn new(min: T, max: T) -> Self {
        Range { min, max }
    }

    pub fn contains(&self, v: T) -> bool {
        self.min <= v && v <= self.max
    }

    fn is_ordered(&self) -> bool {
        self.min <= self.max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub servers: usize,
    pub services: usize,
    pub functions_per_service: Range<usize>,
    /// Number of functions users call directly.
    pub user_requirements: usize,
    /// Total user request rate, split over entry functions and servers.
    pub user_count: f64,
    /// Input and output size of each function, KB.
    pub data_kb: Range<f64>,
    pub mu: Range<f64>,
    /// Resource units per instance (integers).
    pub service_resources: Range<u32>,
    pub chain_length: Range<usize>,
    pub acfc: Range<f64>,
    pub delay_ms: Range<f64>,
    pub bandwidth_mbps: Range<f64>,
    /// Resource units per server. When unset, servers are sized to
    /// `resource_headroom` times the minimum deployment.
    pub server_resources: Option<Range<u32>>,
    pub resource_headroom: f64,
    pub unit_cost: f64,
    /// Budget. When unset it equals the cost of filling every server, so it
    /// never binds.
    pub max_cost: Option<f64>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            servers: 5,
            services: 23,
            functions_per_service: Range::new(1, 2),
            user_requirements: 8,
            user_count: 1000.0,
            data_kb: Range::new(0.0, 2000.0),
            mu: Range::new(100.0, 400.0),
            service_resources: Range::new(1, 3),
            chain_length: Range::new(1, 7),
            acfc: Range::new(0.5, 1.5),
            delay_ms: Range::new(1.0, 10.0),
            bandwidth_mbps: Range::new(50.0, 1000.0),
            server_resources: None,
            resource_headroom: 1.5,
            unit_cost: 1.0,
            max_cost: None,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.servers == 0 {
            return bad("servers must be at least 1");
        }
        if self.services == 0 {
            return bad("services must be at least 1");
        }
        if !self.functions_per_service.is_ordered() || self.functions_per_service.min == 0 {
            return bad("functions_per_service must be a non-empty range starting at 1 or more");
        }
        if self.user_requirements == 0 {
            return bad("user_requirements must be at least 1");
        }
        if self.user_requirements > self.services * self.functions_per_service.min {
            return bad("user_requirements exceeds the guaranteed function count");
        }
        if !(self.user_count.is_finite() && self.user_count > 0.0) {
            return bad("user_count must be positive");
        }
        if !self.data_kb.is_ordered() || self.data_kb.min < 0.0 {
            return bad("data_kb must be a non-negative range");
        }
        if !self.mu.is_ordered() || self.mu.min <= 0.0 {
            return bad("mu must be a positive range");
        }
        if !self.service_resources.is_ordered() || self.service_resources.min == 0 {
            return bad("service_resources must be a positive range");
        }
        if !self.chain_length.is_ordered() || self.chain_length.min == 0 {
            return bad("chain_length must be a range starting at 1 or more");
        }
        if !self.acfc.is_ordered() || self.acfc.min < 0.0 {
            return bad("acfc must be a non-negative range");
        }
        if !self.delay_ms.is_ordered() || self.delay_ms.min < 0.0 {
            return bad("delay_ms must be a non-negative range");
        }
        if !self.bandwidth_mbps.is_ordered() || self.bandwidth_mbps.min <= 0.0 {
            return bad("bandwidth_mbps must be a positive range");
        }
        if let Some(r) = self.server_resources {
            if !r.is_ordered() || r.min == 0 {
                return bad("server_resources must be a positive range");
            }
        }
        if !(self.resource_headroom.is_finite() && self.resource_headroom >= 1.0) {
            return bad("resource_headroom must be at least 1");
        }
        if !(self.unit_cost.is_finite() && self.unit_cost > 0.0) {
            return bad("unit_cost must be positive");
        }
        if let Some(c) = self.max_cost {
            if !(c.is_finite() && c > 0.0) {
                return bad("max_cost must be positive");
            }
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: Range<f64>) -> f64 {
    if r.min == r.max {
        r.min
    } else {
        rng.random_range(r.min..=r.max)
    }
}

fn pad(prefix: &str, i: usize, count: usize) -> String {
    let width = count.saturating_sub(1).to_string().len();
    format!("{prefix}{i:0width$}")
}

/// Builds a scenario from `config`; the same config always yields the same scenario.
pub fn generate_scenario(config: &GeneratorConfig) -> Result<Scenario, Error> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut services = Vec::with_capacity(config.services);
    let mut owner: Vec<usize> = Vec::new();
    let mut function_ids: Vec<String> = Vec::new();
    for i in 0..config.services {
        let sid = pad("s", i, config.services);
        let count =
            rng.random_range(config.functions_per_service.min..=config.functions_per_service.max);
        let functions: Vec<FunctionSpec> = (0..count)
            .map(|j| {
                let f = FunctionSpec::new(
                    format!("f{}_{j}", &sid[1..]),
                    uniform(&mut rng, config.data_kb),
                    uniform(&mut rng, config.data_kb),
                );
                owner.push(i);
                function_ids.push(f.id.clone());
                f
            })
            .collect();
        services.push(ServiceSpec {
            id: sid,
            functions,
            mu: uniform(&mut rng, config.mu),
            resources: f64::from(
                rng.random_range(config.service_resources.min..=config.service_resources.max),
            ),
        });
    }

    let mut rank: Vec<usize> = (0..config.services).collect();
    rank.shuffle(&mut rng);

    let function_count = function_ids.len();
    let mut entries: Vec<usize> = (0..function_count).collect();
    entries.shuffle(&mut rng);
    entries.truncate(config.user_requirements);
    entries.sort_unstable();

    let mut next: Vec<Option<usize>> = vec![None; function_count];
    let mut callers: Vec<Vec<usize>> = vec![Vec::new(); function_count];
    let mut dependencies = Vec::new();
    let max_len = config.chain_length.max;
    for &entry in &entries {
        let target = rng.random_range(config.chain_length.min..=config.chain_length.max);
        let mut current = entry;
        let mut length = 1;
        while length < target {
            if let Some(n) = next[current] {
                current = n;
                length += 1;
                continue;
            }
            // Longest call path ending at `current`, counted in functions.
            let upstream = longest_upstream(current, &callers);
            let candidates: Vec<usize> = (0..function_count)
                .filter(|&f| rank[owner[f]] > rank[owner[current]])
                .filter(|&f| upstream + tail_length(f, &next) <= max_len)
                .collect();
            let Some(&pick) = candidates.choose(&mut rng) else {
                break;
            };
            next[current] = Some(pick);
            callers[pick].push(current);
            dependencies.push(Dependency::new(
                function_ids[current].clone(),
                function_ids[pick].clone(),
                uniform(&mut rng, config.acfc),
            ));
            current = pick;
            length += 1;
        }
    }
    dependencies.sort_by(|a, b| (&a.from, &a.to).cmp(&(&b.from, &b.to)));

    let servers_n = config.servers;
    let server_ids: Vec<String> = (0..servers_n).map(|k| pad("n", k, servers_n)).collect();
    let mut demand = Vec::new();
    let shares: Vec<f64> = entries
        .iter()
        .map(|_| rng.random_range(0.05..=1.0))
        .collect();
    let share_total: f64 = shares.iter().sum();
    for (&entry, share) in entries.iter().zip(&shares) {
        let rate = config.user_count * share / share_total;
        let split: Vec<f64> = (0..servers_n)
            .map(|_| rng.random_range(0.0..=1.0))
            .collect();
        let split_total: f64 = split.iter().sum();
        for (k, part) in split.iter().enumerate() {
            let r = if split_total > 0.0 {
                rate * part / split_total
            } else {
                rate / servers_n as f64
            };
            if r > 0.0 {
                demand.push(DemandEntry {
                    function: function_ids[entry].clone(),
                    server: server_ids[k].clone(),
                    rate: r,
                });
            }
        }
    }

    let mut delay_ms = vec![vec![0.0; servers_n]; servers_n];
    let mut bandwidth_mbps = vec![vec![None; servers_n]; servers_n];
    for a in 0..servers_n {
        for b in (a + 1)..servers_n {
            let d = uniform(&mut rng, config.delay_ms);
            let bw = uniform(&mut rng, config.bandwidth_mbps);
            delay_ms[a][b] = d;
            delay_ms[b][a] = d;
            bandwidth_mbps[a][b] = Some(bw);
            bandwidth_mbps[b][a] = Some(bw);
        }
    }

    let mut scenario = Scenario {
        seed: Some(config.seed),
        services,
        dependencies,
        servers: Vec::new(),
        network: NetworkModel {
            delay_ms,
            bandwidth_mbps,
        },
        demand,
        cost: CostModel {
            unit_cost: config.unit_cost,
            max_cost: 1.0,
        },
    };

    let minimum = minimum_deployment_units(&scenario)?;
    let largest = scenario
        .services
        .iter()
        .map(|s| s.resources)
        .fold(0.0, f64::max) as u32;
    let capacity_range = match config.server_resources {
        Some(r) => r,
        None => {
            let avg = (config.resource_headroom * minimum / servers_n as f64)
                .ceil()
                .max(1.0);
            let lo = ((avg * 0.75).floor() as u32).max(largest).max(1);
            let hi = ((avg * 1.25).ceil() as u32).max(lo);
            Range::new(lo, hi)
        }
    };
    scenario.servers = server_ids
        .into_iter()
        .map(|id| ServerSpec {
            id,
            resources: f64::from(rng.random_range(capacity_range.min..=capacity_range.max)),
        })
        .collect();
    let total: f64 = scenario.servers.iter().map(|s| s.resources).sum();
    if total < minimum {
        return Err(Error::InvalidConfig(format!(
            "servers offer {total} resource units, the minimum deployment needs {minimum}"
        )));
    }
    scenario.cost.max_cost = config.max_cost.unwrap_or(config.unit_cost * total);
    Ok(scenario)
}

/// Resource units the minimum instance counts occupy.
pub fn minimum_deployment_units(scenario: &Scenario) -> Result<f64, Error> {
    let chains = build_chains(scenario)?;
    let summary = demand_summary(scenario, &chains)?;
    let on_chain: HashMap<&str, ()> = chains
        .iter()
        .flat_map(|c| c.hops.iter().map(|h| (h.as_str(), ())))
        .collect();
    Ok(scenario
        .services
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut count = min_instances(summary.required_rate(i), s.mu);
            if count == 0
                && s.functions
                    .iter()
                    .any(|f| on_chain.contains_key(f.id.as_str()))
            {
                count = 1;
            }
            f64::from(count) * s.resources
        })
        .sum())
}

fn tail_length(f: usize, next: &[Option<usize>]) -> usize {
    let mut len = 1;
    let mut cur = f;
    while let Some(n) = next[cur] {
        len += 1;
        cur = n;
    }
    len
}

fn longest_upstream(f: usize, callers: &[Vec<usize>]) -> usize {
    fn walk(f: usize, callers: &[Vec<usize>], memo: &mut BTreeMap<usize, usize>) -> usize {
        if let Some(&v) = memo.get(&f) {
            return v;
        }
        let v = 1 + callers[f]
            .iter()
            .map(|&c| walk(c, callers, memo))
            .max()
            .unwrap_or(0);
        memo.insert(f, v);
        v
    }
    walk(f, callers, &mut BTreeMap::new())
}
