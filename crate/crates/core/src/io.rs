//! Instance documents: a JSON file holding the network, costs, fleet,
//! initial state and nominal demand rates.
//!
//! Nodes are referred to by string labels; internally they become dense
//! indices in the order stations first, then truck-only nodes.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{validate_instance, DemandTuple, InProgressTrip, NetworkInstance, Violation};
use crate::money::Money;
use crate::scenario::DemandModel;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown node label `{0}`")]
    UnknownLabel(String),
    #[error("duplicate node label `{0}`")]
    DuplicateLabel(String),
    #[error("{what} has {found} per-step entries, expected {expected}")]
    StepCount { what: String, expected: usize, found: usize },
    #[error("invalid instance: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("invalid demand rate for {0}")]
    BadRate(String),
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub sv_nodes: Vec<String>,
    pub sv_edges: Vec<(String, String)>,
    pub rv_nodes: Vec<String>,
    pub rv_edges: Vec<(String, String)>,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "K")]
    pub max_duration: usize,
    pub capacities: Capacities,
    pub costs: Costs,
    pub fleet: i64,
    pub initial_state: InitialState,
    pub demand_rates: DemandRates,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Capacities {
    pub stations: BTreeMap<String, i64>,
    pub rv: i64,
    pub max_load_action: i64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Costs {
    pub rv_move: Vec<EdgeCost>,
    pub load: Vec<NodeCost>,
    pub penalty: Money,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EdgeCost {
    pub from: String,
    pub to: String,
    pub per_step: Vec<Money>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NodeCost {
    pub node: String,
    pub per_step: Vec<Money>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub fill: BTreeMap<String, i64>,
    pub rv: Vec<EdgeCount>,
    #[serde(default)]
    pub onboard: Vec<EdgeCount>,
    #[serde(default)]
    pub in_progress: Vec<TripEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EdgeCount {
    pub from: String,
    pub to: String,
    pub count: i64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TripEntry {
    pub from: String,
    pub to: String,
    pub t: i64,
    pub k: usize,
    pub count: i64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DemandRates {
    pub value_low: Money,
    pub value_high: Money,
    pub rates: Vec<RateEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RateEntry {
    pub from: String,
    pub to: String,
    pub t: usize,
    pub k: usize,
    pub rate: f64,
}

struct Labels {
    index: BTreeMap<String, usize>,
}

impl Labels {
    fn get(&self, label: &str) -> Result<usize, IoError> {
        self.index.get(label).copied().ok_or_else(|| IoError::UnknownLabel(label.to_string()))
    }
}

fn per_step(what: String, values: &[Money], horizon: usize) -> Result<Vec<Money>, IoError> {
    if values.len() != horizon {
        return Err(IoError::StepCount { what, expected: horizon, found: values.len() });
    }
    Ok(values.to_vec())
}

impl InstanceFile {
    /// Converts to dense form, validating every invariant.
    pub fn into_model(&self) -> Result<(NetworkInstance, DemandModel), IoError> {
        let mut node_labels: Vec<String> = Vec::new();
        let mut index = BTreeMap::new();
        for label in self.sv_nodes.iter() {
            if index.insert(label.clone(), node_labels.len()).is_some() {
                return Err(IoError::DuplicateLabel(label.clone()));
            }
            node_labels.push(label.clone());
        }
        let mut rv_seen = BTreeSet::new();
        for label in &self.rv_nodes {
            if !rv_seen.insert(label.clone()) {
                return Err(IoError::DuplicateLabel(label.clone()));
            }
            if !index.contains_key(label) {
                index.insert(label.clone(), node_labels.len());
                node_labels.push(label.clone());
            }
        }
        let labels = Labels { index };
        let n = node_labels.len();
        let t_len = self.horizon;
        let sv_nodes: Vec<usize> = (0..self.sv_nodes.len()).collect();
        let mut rv_nodes = self.rv_nodes.iter().map(|l| labels.get(l)).collect::<Result<Vec<_>, _>>()?;
        rv_nodes.sort_unstable();
        let edge = |(a, b): &(String, String)| -> Result<(usize, usize), IoError> { Ok((labels.get(a)?, labels.get(b)?)) };
        let sv_edges = self.sv_edges.iter().map(edge).collect::<Result<Vec<_>, _>>()?;
        let rv_edges = self.rv_edges.iter().map(edge).collect::<Result<Vec<_>, _>>()?;
        let e = rv_edges.len();
        let edge_pos: BTreeMap<(usize, usize), usize> = rv_edges.iter().enumerate().map(|(k, &p)| (p, k)).collect();
        let rv_edge = |from: &str, to: &str| -> Result<usize, IoError> {
            let key = (labels.get(from)?, labels.get(to)?);
            edge_pos.get(&key).copied().ok_or_else(|| IoError::UnknownLabel(format!("{from}->{to}")))
        };

        let mut station_capacity = vec![0; n];
        for (label, &cap) in &self.capacities.stations {
            station_capacity[labels.get(label)?] = cap;
        }
        let mut rv_move_cost = vec![vec![Money::ZERO; e]; t_len];
        for c in &self.costs.rv_move {
            let k = rv_edge(&c.from, &c.to)?;
            for (t, v) in per_step(format!("rv_move {}->{}", c.from, c.to), &c.per_step, t_len)?.into_iter().enumerate() {
                rv_move_cost[t][k] = v;
            }
        }
        let mut load_cost = vec![vec![Money::ZERO; n]; t_len];
        for c in &self.costs.load {
            let i = labels.get(&c.node)?;
            for (t, v) in per_step(format!("load {}", c.node), &c.per_step, t_len)?.into_iter().enumerate() {
                load_cost[t][i] = v;
            }
        }
        let mut initial_fill = vec![0; n];
        for (label, &d) in &self.initial_state.fill {
            initial_fill[labels.get(label)?] = d;
        }
        let mut initial_rv = vec![0; e];
        for c in &self.initial_state.rv {
            initial_rv[rv_edge(&c.from, &c.to)?] += c.count;
        }
        let mut initial_onboard = vec![0; e];
        for c in &self.initial_state.onboard {
            initial_onboard[rv_edge(&c.from, &c.to)?] += c.count;
        }
        let mut in_progress = Vec::new();
        for trip in &self.initial_state.in_progress {
            in_progress.push(InProgressTrip {
                from: labels.get(&trip.from)?,
                to: labels.get(&trip.to)?,
                t: trip.t,
                k: trip.k,
                count: trip.count,
            });
        }
        in_progress.sort();

        let inst = NetworkInstance {
            node_labels,
            sv_nodes,
            sv_edges,
            rv_nodes,
            rv_edges,
            horizon: t_len,
            max_duration: self.max_duration,
            station_capacity,
            rv_capacity: self.capacities.rv,
            max_load_action: self.capacities.max_load_action,
            fleet_size: self.fleet,
            rv_move_cost,
            load_cost,
            penalty: self.costs.penalty,
            initial_fill,
            initial_rv,
            initial_onboard,
            in_progress,
        };
        let violations = validate_instance(&inst);
        if !violations.is_empty() {
            return Err(IoError::Invalid(violations));
        }

        let mut rates = BTreeMap::new();
        for r in &self.demand_rates.rates {
            let key = DemandTuple::new(labels.get(&r.from)?, labels.get(&r.to)?, r.t, r.k);
            let ok = r.rate.is_finite() && r.rate >= 0.0 && (1..=t_len).contains(&r.t) && r.k <= self.max_duration;
            if !ok {
                return Err(IoError::BadRate(format!("{}->{} t={} k={}", r.from, r.to, r.t, r.k)));
            }
            if r.rate > 0.0 {
                *rates.entry(key).or_insert(0.0) += r.rate;
            }
        }
        let model = DemandModel { rates, value_low: self.demand_rates.value_low, value_high: self.demand_rates.value_high };
        if let Err(msg) = model.validate() {
            return Err(IoError::BadRate(msg));
        }
        Ok((inst, model))
    }

    pub fn from_model(inst: &NetworkInstance, model: &DemandModel) -> InstanceFile {
        let lbl = |i: usize| inst.node_labels[i].clone();
        let pair = |&(a, b): &(usize, usize)| (lbl(a), lbl(b));
        let stations: Vec<usize> = inst.sv_nodes.clone();
        let mut rv_move = Vec::new();
        for (k, &(a, b)) in inst.rv_edges.iter().enumerate() {
            let per_step: Vec<Money> = (0..inst.horizon).map(|t| inst.rv_move_cost[t][k]).collect();
            rv_move.push(EdgeCost { from: lbl(a), to: lbl(b), per_step });
        }
        let load = inst
            .action_nodes()
            .into_iter()
            .map(|i| NodeCost { node: lbl(i), per_step: (0..inst.horizon).map(|t| inst.load_cost[t][i]).collect() })
            .collect();
        let counts = |values: &[i64]| -> Vec<EdgeCount> {
            inst.rv_edges
                .iter()
                .zip(values)
                .filter(|(_, &c)| c != 0)
                .map(|(&(a, b), &count)| EdgeCount { from: lbl(a), to: lbl(b), count })
                .collect()
        };
        InstanceFile {
            sv_nodes: stations.iter().map(|&i| lbl(i)).collect(),
            sv_edges: inst.sv_edges.iter().map(pair).collect(),
            rv_nodes: inst.rv_nodes.iter().map(|&i| lbl(i)).collect(),
            rv_edges: inst.rv_edges.iter().map(pair).collect(),
            horizon: inst.horizon,
            max_duration: inst.max_duration,
            capacities: Capacities {
                stations: stations.iter().map(|&i| (lbl(i), inst.station_capacity[i])).collect(),
                rv: inst.rv_capacity,
                max_load_action: inst.max_load_action,
            },
            costs: Costs { rv_move, load, penalty: inst.penalty },
            fleet: inst.fleet_size,
            initial_state: InitialState {
                fill: stations.iter().map(|&i| (lbl(i), inst.initial_fill[i])).collect(),
                rv: counts(&inst.initial_rv),
                onboard: counts(&inst.initial_onboard),
                in_progress: inst
                    .in_progress
                    .iter()
                    .map(|p| TripEntry { from: lbl(p.from), to: lbl(p.to), t: p.t, k: p.k, count: p.count })
                    .collect(),
            },
            demand_rates: DemandRates {
                value_low: model.value_low,
                value_high: model.value_high,
                rates: model
                    .rates
                    .iter()
                    .map(|(d, &rate)| RateEntry { from: lbl(d.i), to: lbl(d.j), t: d.t, k: d.k, rate })
                    .collect(),
            },
        }
    }
}

pub fn instance_to_json(inst: &NetworkInstance, model: &DemandModel) -> String {
    let mut s = serde_json::to_string_pretty(&InstanceFile::from_model(inst, model)).expect("instance serializes");
    s.push('\n');
    s
}

pub fn instance_from_json(text: &str) -> Result<(NetworkInstance, DemandModel), IoError> {
    let file: InstanceFile = serde_json::from_str(text)?;
    file.into_model()
}

pub fn read_instance(path: &Path) -> Result<(NetworkInstance, DemandModel), IoError> {
    instance_from_json(&std::fs::read_to_string(path)?)
}

pub fn write_instance(path: &Path, inst: &NetworkInstance, model: &DemandModel) -> Result<(), IoError> {
    std::fs::write(path, instance_to_json(inst, model))?;
    Ok(())
}
