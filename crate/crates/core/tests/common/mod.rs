#![allow(dead_code)]

use chainplace_core::{
    CostModel, DemandEntry, Dependency, DeploymentScheme, FunctionSpec, NetworkModel, Scenario,
    ServerSpec, ServiceSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random scenario over an arbitrary DAG: branching, rejoins and
/// same-service calls all occur.
pub fn random_dag(seed: u64, max_servers: usize, max_functions: usize) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_servers);
    let services_n = rng.random_range(1..=4usize);
    let mut services: Vec<ServiceSpec> = (0..services_n)
        .map(|i| ServiceSpec {
            id: format!("s{i}"),
            functions: Vec::new(),
            mu: rng.random_range(50.0..400.0),
            resources: f64::from(rng.random_range(1..=3u32)),
        })
        .collect();
    let fcount = rng.random_range(1..=max_functions);
    let mut fids = Vec::new();
    for f in 0..fcount {
        let s = rng.random_range(0..services_n);
        let id = format!("f{f}");
        services[s].functions.push(FunctionSpec::new(
            id.clone(),
            rng.random_range(0.0..2000.0),
            rng.random_range(0.0..2000.0),
        ));
        fids.push(id);
    }
    services.retain(|s| !s.functions.is_empty());

    let mut dependencies = Vec::new();
    for a in 0..fcount {
        for b in (a + 1)..fcount {
            if rng.random_bool(0.35) {
                dependencies.push(Dependency::new(
                    fids[a].clone(),
                    fids[b].clone(),
                    rng.random_range(0.1..3.0),
                ));
            }
        }
    }

    let mut demand = Vec::new();
    for f in &fids {
        if rng.random_bool(0.5) {
            for k in 0..n {
                if rng.random_bool(0.6) {
                    demand.push(DemandEntry {
                        function: f.clone(),
                        server: format!("n{k}"),
                        rate: rng.random_range(0.5..100.0),
                    });
                }
            }
        }
    }
    if demand.is_empty() {
        demand.push(DemandEntry {
            function: fids[0].clone(),
            server: "n0".into(),
            rate: 10.0,
        });
    }

    let delay_ms = (0..n)
        .map(|a| {
            (0..n)
                .map(|b| {
                    if a == b {
                        0.0
                    } else {
                        rng.random_range(0.0..10.0)
                    }
                })
                .collect()
        })
        .collect();
    let bandwidth_mbps = (0..n)
        .map(|a| {
            (0..n)
                .map(|b| (a != b).then(|| rng.random_range(1.0..1000.0)))
                .collect()
        })
        .collect();

    Scenario {
        seed: Some(seed),
        services,
        dependencies,
        servers: (0..n)
            .map(|k| ServerSpec {
                id: format!("n{k}"),
                resources: 100.0,
            })
            .collect(),
        network: NetworkModel {
            delay_ms,
            bandwidth_mbps,
        },
        demand,
        cost: CostModel {
            unit_cost: 1.0,
            max_cost: 1e6,
        },
    }
}

/// Random counts with every service routable; ignores capacity.
pub fn random_scheme(seed: u64, servers: usize, services: usize) -> DeploymentScheme {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut x = DeploymentScheme::zeros(servers, services);
    for s in 0..services {
        for k in 0..servers {
            x.set(k, s, rng.random_range(0..=3));
        }
        if x.total(s) == 0 {
            x.set(rng.random_range(0..servers), s, 1);
        }
    }
    x
}
