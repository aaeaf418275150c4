//! Problem-instance types and the scenario file format.
//!
//! A [`Scenario`] is the full input to every solver: services and their
//! functions, the function-level call graph, servers with the effective
//! delay/bandwidth matrices between them, user demand, and the cost budget.
//! Everything is addressed by string id in the file and by position
//! (scenario order) inside the engine.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Pseudo-function that stands for the users in the call graph.
pub const USER_NODE: &str = "USER";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub id: String,
    /// Input data size, KB.
    pub d_in: f64,
    /// Output data size, KB.
    pub d_out: f64,
}

impl FunctionSpec {
    pub fn new(id: impl Into<String>, d_in: f64, d_out: f64) -> Self {
        Self {
            id: id.into(),
            d_in,
            d_out,
        }
    }

    /// Bytes moved by one call of this function, KB.
    pub fn data_kb(&self) -> f64 {
        self.d_in + self.d_out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceSpec {
    pub id: String,
    pub functions: Vec<FunctionSpec>,
    /// Requests one instance can serve per unit time.
    pub mu: f64,
    /// Resource units consumed by one instance.
    pub resources: f64,
}

/// One call edge `from -> to` with its average call frequency coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dependency {
    pub from: String,
    pub to: String,
    pub acfc: f64,
}

impl Dependency {
    pub fn new(from: impl Into<String>, to: impl Into<String>, acfc: f64) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
            acfc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerSpec {
    pub id: String,
    /// Total resource units offered by the server.
    pub resources: f64,
}

/// Effective end-to-end delay and bandwidth between every pair of servers.
///
/// The bandwidth diagonal is `None` (intra-server, transfer is free).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub delay_ms: Vec<Vec<f64>>,
    pub bandwidth_mbps: Vec<Vec<Option<f64>>>,
}

impl NetworkModel {
    /// Time to move `data_kb` from `from` to `to`, in ms.
    ///
    /// KB / (MB/s) is ms with 1 MB = 1000 KB. Same-server transfers cost 0.
    pub fn hop_time(&self, from: usize, to: usize, data_kb: f64) -> f64 {
        if from == to {
            return 0.0;
        }
        let transmission = match self.bandwidth_mbps[from][to] {
            Some(bw) => data_kb / bw,
            None => 0.0,
        };
        transmission + self.delay_ms[from][to]
    }

    pub fn len(&self) -> usize {
        self.delay_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delay_ms.is_empty()
    }
}

/// User request rate for one function arriving at one server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandEntry {
    pub function: String,
    pub server: String,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub unit_cost: f64,
    pub max_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Generator seed, when the scenario was produced by the generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub services: Vec<ServiceSpec>,
    pub dependencies: Vec<Dependency>,
    pub servers: Vec<ServerSpec>,
    pub network: NetworkModel,
    pub demand: Vec<DemandEntry>,
    pub cost: CostModel,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, Error> {
        Ok(serde_json::from_str(text)?)
    }

    /// Canonical serialization: pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("scenario serializes");
        out.push('\n');
        out
    }

    pub fn dependency_graph(&self) -> DependencyGraph {
        DependencyGraph::new(
            self.services
                .iter()
                .flat_map(|s| s.functions.iter().map(|f| f.id.clone())),
            self.dependencies.iter().cloned(),
        )
    }

    pub fn function_count(&self) -> usize {
        self.services.iter().map(|s| s.functions.len()).sum()
    }
}

/// Function-level call DAG with ACFC edge weights.
#[derive(Debug, Clone, Default)]
pub struct DependencyGraph {
    functions: BTreeSet<String>,
    /// Callees of each caller, sorted by callee id.
    succ: BTreeMap<String, Vec<(String, f64)>>,
    pred: BTreeMap<String, Vec<(String, f64)>>,
}

impl DependencyGraph {
    pub fn new(
        functions: impl IntoIterator<Item = String>,
        edges: impl IntoIterator<Item = Dependency>,
    ) -> Self {
        let mut graph = DependencyGraph {
            functions: functions.into_iter().collect(),
            ..Default::default()
        };
        for e in edges {
            graph
                .succ
                .entry(e.from.clone())
                .or_default()
                .push((e.to.clone(), e.acfc));
            graph.pred.entry(e.to).or_default().push((e.from, e.acfc));
        }
        for list in graph.succ.values_mut().chain(graph.pred.values_mut()) {
            list.sort_by(|a, b| a.0.cmp(&b.0));
        }
        graph
    }

    pub fn contains(&self, function: &str) -> bool {
        self.functions.contains(function)
    }

    pub fn functions(&self) -> impl Iterator<Item = &str> {
        self.functions.iter().map(String::as_str)
    }

    /// Callees of `function` in lexicographic id order.
    pub fn successors(&self, function: &str) -> &[(String, f64)] {
        self.succ.get(function).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn predecessors(&self, function: &str) -> &[(String, f64)] {
        self.pred.get(function).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn acfc(&self, from: &str, to: &str) -> Option<f64> {
        self.successors(from)
            .iter()
            .find(|(callee, _)| callee == to)
            .map(|&(_, w)| w)
    }

    /// Returns the functions on one cycle if the graph is cyclic.
    pub fn find_cycle(&self) -> Option<Vec<String>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Open,
            Done,
        }
        let mut marks: HashMap<&str, Mark> = HashMap::new();
        let nodes: BTreeSet<&str> = self
            .functions
            .iter()
            .map(String::as_str)
            .chain(self.succ.keys().map(String::as_str))
            .collect();
        for &root in &nodes {
            if marks.contains_key(root) {
                continue;
            }
            // (node, next child index)
            let mut stack: Vec<(&str, usize)> = vec![(root, 0)];
            marks.insert(root, Mark::Open);
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                let children = self.successors(node);
                if *next < children.len() {
                    let child = children[*next].0.as_str();
                    *next += 1;
                    match marks.get(child) {
                        Some(Mark::Open) => {
                            let start = stack.iter().position(|(n, _)| *n == child).unwrap();
                            return Some(
                                stack[start..].iter().map(|(n, _)| n.to_string()).collect(),
                            );
                        }
                        Some(Mark::Done) => {}
                        None => {
                            marks.insert(child, Mark::Open);
                            stack.push((child, 0));
                        }
                    }
                } else {
                    marks.insert(node, Mark::Done);
                    stack.pop();
                }
            }
        }
        None
    }
}

/// Instance counts indexed `[server][service]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeploymentScheme {
    x: Vec<Vec<u32>>,
}

impl DeploymentScheme {
    pub fn zeros(servers: usize, services: usize) -> Self {
        Self {
            x: vec![vec![0; services]; servers],
        }
    }

    pub fn from_matrix(x: Vec<Vec<u32>>) -> Self {
        Self { x }
    }

    pub fn matrix(&self) -> &[Vec<u32>] {
        &self.x
    }

    pub fn servers(&self) -> usize {
        self.x.len()
    }

    pub fn services(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn get(&self, server: usize, service: usize) -> u32 {
        self.x[server][service]
    }

    pub fn set(&mut self, server: usize, service: usize, count: u32) {
        self.x[server][service] = count;
    }

    pub fn add(&mut self, server: usize, service: usize, count: u32) {
        self.x[server][service] += count;
    }

    /// Instances of `service` summed over all servers.
    pub fn total(&self, service: usize) -> u32 {
        self.x.iter().map(|row| row[service]).sum()
    }

    pub fn total_instances(&self) -> u64 {
        self.x.iter().flatten().map(|&c| u64::from(c)).sum()
    }

    pub fn clear_service(&mut self, service: usize) {
        for row in &mut self.x {
            row[service] = 0;
        }
    }

    pub fn has_dimensions(&self, servers: usize, services: usize) -> bool {
        self.x.len() == servers && self.x.iter().all(|row| row.len() == services)
    }
}

/// On-disk scheme: the matrix plus the ids that label its rows and columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeFile {
    pub x: Vec<Vec<u32>>,
    pub servers: Vec<String>,
    pub services: Vec<String>,
}

impl SchemeFile {
    pub fn from_scheme(scheme: &DeploymentScheme, scenario: &Scenario) -> Self {
        SchemeFile {
            x: scheme.matrix().to_vec(),
            servers: scenario.servers.iter().map(|s| s.id.clone()).collect(),
            services: scenario.services.iter().map(|s| s.id.clone()).collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, Error> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("scheme serializes");
        out.push('\n');
        out
    }

    /// Re-indexes the matrix into the scenario's server and service order.
    pub fn to_scheme(&self, scenario: &Scenario) -> Result<DeploymentScheme, Error> {
        let mismatch = |what: String| Error::DimensionMismatch(what);
        if self.x.len() != self.servers.len() {
            return Err(mismatch(format!(
                "{} rows for {} server ids",
                self.x.len(),
                self.servers.len()
            )));
        }
        if let Some(row) = self.x.iter().find(|r| r.len() != self.services.len()) {
            return Err(mismatch(format!(
                "row of length {} for {} service ids",
                row.len(),
                self.services.len()
            )));
        }
        let server_pos = positions(&self.servers);
        let service_pos = positions(&self.services);
        if server_pos.len() != scenario.servers.len()
            || service_pos.len() != scenario.services.len()
        {
            return Err(mismatch(format!(
                "scheme is {}x{}, scenario has {} servers and {} services",
                self.servers.len(),
                self.services.len(),
                scenario.servers.len(),
                scenario.services.len()
            )));
        }
        let mut scheme = DeploymentScheme::zeros(scenario.servers.len(), scenario.services.len());
        for (k, server) in scenario.servers.iter().enumerate() {
            let row = *server_pos
                .get(server.id.as_str())
                .ok_or_else(|| mismatch(format!("server {} missing from scheme", server.id)))?;
            for (i, service) in scenario.services.iter().enumerate() {
                let col = *service_pos.get(service.id.as_str()).ok_or_else(|| {
                    mismatch(format!("service {} missing from scheme", service.id))
                })?;
                scheme.set(k, i, self.x[row][col]);
            }
        }
        Ok(scheme)
    }
}

fn positions(ids: &[String]) -> HashMap<&str, usize> {
    ids.iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect()
}

/// One failed invariant, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationError {
    pub field: String,
    pub message: String,
}

impl ValidationError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn finite_nonneg(v: f64) -> bool {
    v.is_finite() && v >= 0.0
}

fn finite_pos(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

/// Checks every structural and numeric invariant of a scenario.
///
/// Returns an empty list iff the scenario is well formed.
pub fn validate_scenario(scenario: &Scenario) -> Vec<ValidationError> {
    let mut errors = Vec::new();
    let mut err = |field: String, message: &str| errors.push(ValidationError::new(field, message));

    let mut service_ids = HashSet::new();
    let mut function_ids = HashSet::new();
    for (i, s) in scenario.services.iter().enumerate() {
        let field = format!("services[{i}]");
        if !service_ids.insert(s.id.as_str()) {
            err(format!("{field}.id"), "duplicate service id");
        }
        if s.functions.is_empty() {
            err(format!("{field}.functions"), "service has no functions");
        }
        if !finite_pos(s.mu) {
            err(
                format!("{field}.mu"),
                "processing capacity must be positive",
            );
        }
        if !finite_pos(s.resources) {
            err(
                format!("{field}.resources"),
                "resource demand must be positive",
            );
        }
        for (j, f) in s.functions.iter().enumerate() {
            let ffield = format!("{field}.functions[{j}]");
            if f.id == USER_NODE {
                err(format!("{ffield}.id"), "function id is reserved");
            }
            if !function_ids.insert(f.id.as_str()) {
                err(format!("{ffield}.id"), "duplicate function id");
            }
            if !finite_nonneg(f.d_in) {
                err(format!("{ffield}.d_in"), "input size must be non-negative");
            }
            if !finite_nonneg(f.d_out) {
                err(
                    format!("{ffield}.d_out"),
                    "output size must be non-negative",
                );
            }
        }
    }

    let mut seen_edges = HashSet::new();
    for (e, dep) in scenario.dependencies.iter().enumerate() {
        let field = format!("dependencies[{e}]");
        if dep.from != USER_NODE && !function_ids.contains(dep.from.as_str()) {
            err(format!("{field}.from"), "unknown function");
        }
        if dep.to == USER_NODE {
            err(format!("{field}.to"), "USER cannot be called");
        } else if !function_ids.contains(dep.to.as_str()) {
            err(format!("{field}.to"), "unknown function");
        }
        if !finite_nonneg(dep.acfc) {
            err(format!("{field}.acfc"), "ACFC must be non-negative");
        }
        if !seen_edges.insert((dep.from.as_str(), dep.to.as_str())) {
            err(field, "duplicate dependency");
        }
    }
    if scenario.dependency_graph().find_cycle().is_some() {
        err("dependencies".into(), "dependency graph cyclic");
    }

    let n = scenario.servers.len();
    if n == 0 {
        err("servers".into(), "at least one server is required");
    }
    let mut server_ids = HashSet::new();
    for (k, s) in scenario.servers.iter().enumerate() {
        if !server_ids.insert(s.id.as_str()) {
            err(format!("servers[{k}].id"), "duplicate server id");
        }
        if !finite_pos(s.resources) {
            err(
                format!("servers[{k}].resources"),
                "server resources must be positive",
            );
        }
    }

    let net = &scenario.network;
    if net.delay_ms.len() != n || net.delay_ms.iter().any(|r| r.len() != n) {
        err(
            "network.delay_ms".into(),
            "matrix must be servers x servers",
        );
    } else {
        for (a, row) in net.delay_ms.iter().enumerate() {
            for (b, &d) in row.iter().enumerate() {
                let field = format!("network.delay_ms[{a}][{b}]");
                if a == b {
                    if d != 0.0 {
                        err(field, "self-delay must be zero");
                    }
                } else if !finite_nonneg(d) {
                    err(field, "delay must be non-negative");
                }
            }
        }
    }
    if net.bandwidth_mbps.len() != n || net.bandwidth_mbps.iter().any(|r| r.len() != n) {
        err(
            "network.bandwidth_mbps".into(),
            "matrix must be servers x servers",
        );
    } else {
        for (a, row) in net.bandwidth_mbps.iter().enumerate() {
            for (b, bw) in row.iter().enumerate() {
                let field = format!("network.bandwidth_mbps[{a}][{b}]");
                match (a == b, bw) {
                    (true, None) => {}
                    (true, Some(_)) => err(field, "self-bandwidth must be null (intra-server)"),
                    (false, Some(v)) if finite_pos(*v) => {}
                    (false, _) => err(field, "bandwidth must be positive"),
                }
            }
        }
    }

    let mut seen_demand = HashSet::new();
    for (d, entry) in scenario.demand.iter().enumerate() {
        let field = format!("demand[{d}]");
        if !function_ids.contains(entry.function.as_str()) {
            err(format!("{field}.function"), "unknown function");
        }
        if !server_ids.contains(entry.server.as_str()) {
            err(format!("{field}.server"), "unknown server");
        }
        if !finite_nonneg(entry.rate) {
            err(format!("{field}.rate"), "rate must be non-negative");
        }
        if !seen_demand.insert((entry.function.as_str(), entry.server.as_str())) {
            err(field, "duplicate demand entry");
        }
    }

    if !finite_pos(scenario.cost.unit_cost) {
        err("cost.unit_cost".into(), "unit cost must be positive");
    }
    if !finite_pos(scenario.cost.max_cost) {
        err("cost.max_cost".into(), "maximum cost must be positive");
    }

    errors
}


#[cfg(test)]
mod tests {
    use super::fixtures::two_by_two;
    use super::*;

    #[test]
    fn well_formed_scenario_validates() {
        assert_eq!(validate_scenario(&two_by_two()), vec![]);
    }

    #[test]
    fn cycle_is_reported() {
        let mut s = two_by_two();
        s.dependencies.push(Dependency::new("fb", "fa", 1.0));
        let errors = validate_scenario(&s);
        assert!(
            errors
                .iter()
                .any(|e| e.message == "dependency graph cyclic"),
            "{errors:?}"
        );
    }

    #[test]
    fn self_delay_is_reported() {
        let mut s = two_by_two();
        s.network.delay_ms[0][0] = 3.0;
        let errors = validate_scenario(&s);
        assert_eq!(errors.len(), 1);
        assert_eq!(errors[0].field, "network.delay_ms[0][0]");
        assert_eq!(errors[0].message, "self-delay must be zero");
    }

    #[test]
    fn bad_references_and_values_are_named() {
        let mut s = two_by_two();
        s.services[0].mu = 0.0;
        s.demand[0].server = "nowhere".into();
        s.dependencies.push(Dependency::new("fb", USER_NODE, 1.0));
        s.network.bandwidth_mbps[0][1] = None;
        let fields: Vec<_> = validate_scenario(&s).into_iter().map(|e| e.field).collect();
        assert!(fields.contains(&"services[0].mu".to_string()));
        assert!(fields.contains(&"demand[0].server".to_string()));
        assert!(fields.contains(&"dependencies[1].to".to_string()));
        assert!(fields.contains(&"network.bandwidth_mbps[0][1]".to_string()));
    }

    #[test]
    fn user_edges_are_allowed() {
        let mut s = two_by_two();
        s.dependencies.push(Dependency::new(USER_NODE, "fa", 1.0));
        assert!(validate_scenario(&s).is_empty());
    }

    #[test]
    fn hop_time_formula() {
        let net = NetworkModel {
            delay_ms: vec![vec![0.0, 5.0], vec![3.0, 0.0]],
            bandwidth_mbps: vec![vec![None, Some(1000.0)], vec![Some(500.0), None]],
        };
        assert_eq!(net.hop_time(0, 1, 2000.0), 7.0);
        assert_eq!(net.hop_time(1, 0, 0.0), 3.0);
        assert_eq!(net.hop_time(1, 1, 2000.0), 0.0);
    }

    #[test]
    fn bandwidth_diagonal_serializes_as_null() {
        let json = two_by_two().to_json();
        assert!(json.contains("null"));
        assert_eq!(Scenario::from_json(&json).unwrap(), two_by_two());
    }

    #[test]
    fn scheme_file_reorders_by_id() {
        let s = two_by_two();
        let file = SchemeFile {
            x: vec![vec![3, 1], vec![2, 0]],
            servers: vec!["n1".into(), "n0".into()],
            services: vec!["b".into(), "a".into()],
        };
        let scheme = file.to_scheme(&s).unwrap();
        assert_eq!(scheme.matrix(), &[vec![0, 2], vec![1, 3]]);
    }

    #[test]
    fn scheme_file_rejects_wrong_shape() {
        let s = two_by_two();
        let file = SchemeFile {
            x: vec![vec![1, 1]],
            servers: vec!["n0".into()],
            services: vec!["a".into(), "b".into()],
        };
        assert!(matches!(
            file.to_scheme(&s),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
