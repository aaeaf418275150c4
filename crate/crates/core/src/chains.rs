//! Linearizing call subgraphs into function chains and propagating demand.
//!
//! A user request to an entry function triggers a calling subgraph of the
//! DAG. The response-time model works on a single linear chain per entry,
//! so the subgraph is flattened by a depth-first walk (children in id
//! order). Consecutive chain functions that are not caller/callee in the
//! graph get a virtual hop: zero data, zero ACFC.
//!
//! Demand does not follow the hop list. The rate reaching a function is the
//! entry rate times the sum, over every call path from the entry, of the
//! product of ACFCs along the path. Those per-position weights are computed
//! once at conversion and stored on the chain.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{DependencyGraph, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionChain {
    pub entry: String,
    /// Functions in visit order; `hops[0] == entry`.
    pub hops: Vec<String>,
    /// `hop_acfc[m]` is the ACFC between `hops[m]` and `hops[m + 1]`.
    pub hop_acfc: Vec<f64>,
    pub virtual_flags: Vec<bool>,
    /// Calls of `hops[m]` per call of the entry, summed over all call paths.
    pub demand_weights: Vec<f64>,
}

impl FunctionChain {
    pub fn len(&self) -> usize {
        self.hops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hops.is_empty()
    }

    pub fn virtual_hops(&self) -> usize {
        self.virtual_flags.iter().filter(|&&v| v).count()
    }
}

/// Flattens the calling subgraph rooted at `entry` into a chain.
pub fn calling_subgraph_to_chain(
    entry: &str,
    graph: &DependencyGraph,
) -> Result<FunctionChain, Error> {
    if !graph.contains(entry) {
        return Err(Error::UnknownFunction(entry.to_string()));
    }

    // Preorder DFS; `on_path` catches cycles the validator should have rejected.
    let mut order: Vec<String> = Vec::new();
    let mut visited: HashSet<&str> = HashSet::new();
    let mut on_path: HashSet<&str> = HashSet::new();
    let mut stack: Vec<(&str, usize)> = vec![(entry, 0)];
    visited.insert(entry);
    on_path.insert(entry);
    order.push(entry.to_string());
    while let Some(&mut (node, ref mut next)) = stack.last_mut() {
        let children = graph.successors(node);
        if *next < children.len() {
            let child = children[*next].0.as_str();
            *next += 1;
            if on_path.contains(child) {
                return Err(Error::CycleDetected(child.to_string()));
            }
            if visited.insert(child) {
                on_path.insert(child);
                order.push(child.to_string());
                stack.push((child, 0));
            }
        } else {
            on_path.remove(node);
            stack.pop();
        }
    }

    let mut hop_acfc = Vec::with_capacity(order.len().saturating_sub(1));
    let mut virtual_flags = Vec::with_capacity(order.len().saturating_sub(1));
    for pair in order.windows(2) {
        match graph.acfc(&pair[0], &pair[1]) {
            Some(w) => {
                hop_acfc.push(w);
                virtual_flags.push(false);
            }
            None => {
                hop_acfc.push(0.0);
                virtual_flags.push(true);
            }
        }
    }

    let demand_weights = path_weights(&order, graph);
    Ok(FunctionChain {
        entry: entry.to_string(),
        hops: order,
        hop_acfc,
        virtual_flags,
        demand_weights,
    })
}

/// Sum over call paths from `order[0]` of the ACFC products, for each function.
fn path_weights(order: &[String], graph: &DependencyGraph) -> Vec<f64> {
    let members: HashMap<&str, usize> = order
        .iter()
        .enumerate()
        .map(|(i, f)| (f.as_str(), i))
        .collect();
    let mut memo: Vec<Option<f64>> = vec![None; order.len()];
    memo[0] = Some(1.0);

    fn weight(
        i: usize,
        order: &[String],
        members: &HashMap<&str, usize>,
        graph: &DependencyGraph,
        memo: &mut Vec<Option<f64>>,
    ) -> f64 {
        if let Some(w) = memo[i] {
            return w;
        }
        let mut total = 0.0;
        for (caller, acfc) in graph.predecessors(&order[i]) {
            if let Some(&p) = members.get(caller.as_str()) {
                total += weight(p, order, members, graph, memo) * acfc;
            }
        }
        memo[i] = Some(total);
        total
    }

    (0..order.len())
        .map(|i| weight(i, order, &members, graph, &mut memo))
        .collect()
}

/// Running product of hop ACFCs along the chain; position 0 is 1.
pub fn chain_coefficients(chain: &FunctionChain) -> Vec<f64> {
    let mut out = Vec::with_capacity(chain.hops.len());
    let mut acc = 1.0;
    out.push(acc);
    for &w in &chain.hop_acfc {
        acc *= w;
        out.push(acc);
    }
    out
}

/// One chain per function with positive total user demand, in id order.
pub fn build_chains(scenario: &Scenario) -> Result<Vec<FunctionChain>, Error> {
    let graph = scenario.dependency_graph();
    let mut totals: BTreeMap<&str, f64> = BTreeMap::new();
    for d in &scenario.demand {
        *totals.entry(d.function.as_str()).or_default() += d.rate;
    }
    totals
        .into_iter()
        .filter(|&(_, rate)| rate > 0.0)
        .map(|(f, _)| calling_subgraph_to_chain(f, &graph))
        .collect()
}

/// Per-service request rate from users and from other services.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemandSummary {
    pub service_ids: Vec<String>,
    pub gamma_u: Vec<f64>,
    pub gamma_s: Vec<f64>,
}

impl DemandSummary {
    /// `gamma_u + gamma_s` for the service at `index`.
    pub fn required_rate(&self, index: usize) -> f64 {
        self.gamma_u[index] + self.gamma_s[index]
    }

    pub fn get(&self, service_id: &str) -> Option<(f64, f64)> {
        let i = self.service_ids.iter().position(|s| s == service_id)?;
        Some((self.gamma_u[i], self.gamma_s[i]))
    }
}

pub fn demand_summary(
    scenario: &Scenario,
    chains: &[FunctionChain],
) -> Result<DemandSummary, Error> {
    let mut owner: HashMap<&str, usize> = HashMap::new();
    for (i, s) in scenario.services.iter().enumerate() {
        for f in &s.functions {
            owner.insert(f.id.as_str(), i);
        }
    }
    let mut entry_rate: BTreeMap<&str, f64> = BTreeMap::new();
    for d in &scenario.demand {
        *entry_rate.entry(d.function.as_str()).or_default() += d.rate;
    }

    let n = scenario.services.len();
    let mut gamma_u = vec![0.0; n];
    let mut gamma_s = vec![0.0; n];
    for (&f, &rate) in &entry_rate {
        let &i = owner
            .get(f)
            .ok_or_else(|| Error::UnknownFunction(f.to_string()))?;
        gamma_u[i] += rate;
    }

    let by_entry: HashMap<&str, &FunctionChain> =
        chains.iter().map(|c| (c.entry.as_str(), c)).collect();
    for (&f, &rate) in &entry_rate {
        if rate <= 0.0 {
            continue;
        }
        let chain = by_entry
            .get(f)
            .ok_or_else(|| Error::MissingChain(f.to_string()))?;
        for (hop, &w) in chain.hops.iter().zip(&chain.demand_weights).skip(1) {
            let &i = owner
                .get(hop.as_str())
                .ok_or_else(|| Error::UnknownFunction(hop.clone()))?;
            gamma_s[i] += rate * w;
        }
    }

    Ok(DemandSummary {
        service_ids: scenario.services.iter().map(|s| s.id.clone()).collect(),
        gamma_u,
        gamma_s,
    })
}
