#![allow(dead_code)]

use drrp::{DemandScenario, DemandTuple, Money, NetworkInstance, RebalancePlan};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Small instance on `n` stations: every ordered pair is a journey edge,
/// trucks move on the complete graph.
pub fn small_instance(rng: &mut ChaCha8Rng, n: usize, horizon: usize, fleet: i64) -> NetworkInstance {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let e = pairs.len();
    let cap = rng.random_range(2..=4);
    let mut initial_rv = vec![0; e];
    for _ in 0..fleet {
        let v = rng.random_range(0..n);
        initial_rv[v * n + v] += 1;
    }
    let rv_capacity = rng.random_range(1..=3);
    NetworkInstance {
        node_labels: (0..n).map(|i| format!("n{i}")).collect(),
        sv_nodes: (0..n).collect(),
        sv_edges: pairs.clone(),
        rv_nodes: (0..n).collect(),
        rv_edges: pairs.clone(),
        horizon,
        max_duration: 1,
        station_capacity: vec![cap; n],
        rv_capacity,
        max_load_action: (rv_capacity * fleet).clamp(1, 3),
        fleet_size: fleet,
        rv_move_cost: (0..horizon)
            .map(|_| pairs.iter().map(|&(a, b)| if a == b { Money::ZERO } else { Money::from_f64(rng.random_range(0.0..0.3)) }).collect())
            .collect(),
        load_cost: (0..horizon).map(|_| (0..n).map(|_| Money::from_f64(rng.random_range(0.01..0.2))).collect()).collect(),
        penalty: Money::from_f64(rng.random_range(1.5..4.0)),
        initial_fill: (0..n).map(|_| rng.random_range(0..=cap)).collect(),
        initial_rv,
        initial_onboard: vec![0; e],
        in_progress: Vec::new(),
    }
}

/// Up to `max_count` journeys on a few random tuples, values in [0.5, 1.5].
pub fn random_scenario(rng: &mut ChaCha8Rng, inst: &NetworkInstance, tuples: usize, max_count: usize) -> DemandScenario {
    let mut scen = DemandScenario::default();
    for _ in 0..tuples {
        let (i, j) = inst.sv_edges[rng.random_range(0..inst.sv_edges.len())];
        let t = rng.random_range(1..=inst.horizon);
        let k = rng.random_range(0..=inst.max_duration);
        let count = rng.random_range(1..=max_count);
        let values = (0..count).map(|_| Money::from_f64(rng.random_range(0.5..1.5))).collect();
        scen.insert(DemandTuple::new(i, j, t, k), values);
    }
    scen
}

/// Actions only, net action uniform in `[-ybar, ybar]` at each station.
pub fn random_actions(rng: &mut ChaCha8Rng, inst: &NetworkInstance, ybar: i64) -> RebalancePlan {
    let mut plan = RebalancePlan::empty(inst);
    for t in 0..inst.horizon {
        for &i in &inst.sv_nodes {
            let x = rng.random_range(-ybar..=ybar);
            if x > 0 {
                plan.y_minus[t][i] = x as f64;
            } else {
                plan.y_plus[t][i] = (-x) as f64;
            }
        }
    }
    plan
}
