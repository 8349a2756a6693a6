//! Problem data, index conventions and plan checks.
//!
//! Nodes live in one universe `0..num_nodes()`; stations (`sv_nodes`) and
//! vehicle nodes (`rv_nodes`) are subsets of it. Time steps run `1..=T`.
//! Loading (`y_plus`) moves vehicles from a station into a truck; unloading
//! (`y_minus`) moves them back out.

use std::collections::BTreeMap;
use std::fmt;

use crate::money::Money;

/// A journey class `(i, j, t, k)`: from `i` to `j`, starting at step `t`, taking `k` steps.
///
/// Field order gives the canonical ordering: by `t`, then `i`, `j`, `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DemandTuple {
    pub t: usize,
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl DemandTuple {
    pub fn new(i: usize, j: usize, t: usize, k: usize) -> Self {
        DemandTuple { t, i, j, k }
    }

    pub fn arrival(&self) -> usize {
        self.t + self.k
    }
}

/// Journeys started before the horizon that are still travelling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct InProgressTrip {
    pub from: usize,
    pub to: usize,
    /// Start step, `1 - K <= t <= 0`.
    pub t: i64,
    pub k: usize,
    pub count: i64,
}

impl InProgressTrip {
    /// Arrival step; always at least 1 for a valid trip.
    pub fn arrival(&self) -> i64 {
        self.t + self.k as i64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkInstance {
    pub node_labels: Vec<String>,
    pub sv_nodes: Vec<usize>,
    pub sv_edges: Vec<(usize, usize)>,
    pub rv_nodes: Vec<usize>,
    pub rv_edges: Vec<(usize, usize)>,
    pub horizon: usize,
    pub max_duration: usize,
    /// `d̄_i` per universe node (zero off-station).
    pub station_capacity: Vec<i64>,
    pub rv_capacity: i64,
    pub max_load_action: i64,
    pub fleet_size: i64,
    /// `c_{i,j}^t` as `rv_move_cost[t - 1][edge]`.
    pub rv_move_cost: Vec<Vec<Money>>,
    /// `r_i^t` as `load_cost[t - 1][node]`.
    pub load_cost: Vec<Vec<Money>>,
    pub penalty: Money,
    pub initial_fill: Vec<i64>,
    /// `z^0` per RV edge.
    pub initial_rv: Vec<i64>,
    /// `b^0` per RV edge.
    pub initial_onboard: Vec<i64>,
    pub in_progress: Vec<InProgressTrip>,
}

/// One violated invariant, with enough context to locate it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    NoActionNodes,
    UnknownNode { what: &'static str, node: usize },
    DuplicateEdge { graph: &'static str, from: usize, to: usize },
    FillAboveCapacity { station: usize, fill: i64, capacity: i64 },
    NegativeValue { what: &'static str, index: usize, value: i64 },
    FleetCount { placed: i64, fleet: i64 },
    OnboardAboveCapacity { edge: usize, onboard: i64, limit: i64 },
    LoadActionTooLarge { max_load_action: i64, limit: i64 },
    ShapeMismatch { what: &'static str, expected: usize, found: usize },
    BadInProgressTrip { index: usize },
    NegativeCost { what: &'static str },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoActionNodes => write!(f, "no node is both a station and a vehicle node"),
            Violation::UnknownNode { what, node } => write!(f, "{what} refers to unknown node {node}"),
            Violation::DuplicateEdge { graph, from, to } => write!(f, "duplicate {graph} edge ({from}, {to})"),
            Violation::FillAboveCapacity { station, fill, capacity } => {
                write!(f, "station {station} starts with {fill} vehicles but holds at most {capacity}")
            }
            Violation::NegativeValue { what, index, value } => write!(f, "{what}[{index}] = {value} is negative"),
            Violation::FleetCount { placed, fleet } => {
                write!(f, "{placed} trucks placed initially but the fleet has {fleet}")
            }
            Violation::OnboardAboveCapacity { edge, onboard, limit } => {
                write!(f, "edge {edge} starts with {onboard} vehicles on board, limit {limit}")
            }
            Violation::LoadActionTooLarge { max_load_action, limit } => {
                write!(f, "largest load action {max_load_action} exceeds truck capacity times fleet {limit}")
            }
            Violation::ShapeMismatch { what, expected, found } => {
                write!(f, "{what} has {found} entries, expected {expected}")
            }
            Violation::BadInProgressTrip { index } => write!(f, "in-progress trip {index} is out of range"),
            Violation::NegativeCost { what } => write!(f, "{what} must be nonnegative"),
        }
    }
}

impl NetworkInstance {
    pub fn num_nodes(&self) -> usize {
        self.node_labels.len()
    }

    pub fn is_station(&self, i: usize) -> bool {
        self.sv_nodes.binary_search(&i).is_ok()
    }

    /// Nodes where loading and unloading may happen: stations that trucks visit.
    pub fn action_nodes(&self) -> Vec<usize> {
        self.sv_nodes.iter().copied().filter(|i| self.rv_nodes.binary_search(i).is_ok()).collect()
    }

    pub fn rv_edge_index(&self, from: usize, to: usize) -> Option<usize> {
        self.rv_edges.iter().position(|&e| e == (from, to))
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate_instance(self)
    }

    pub fn total_initial_fill(&self) -> i64 {
        self.sv_nodes.iter().map(|&i| self.initial_fill[i]).sum()
    }
}

/// Every violated invariant of `inst`; empty means valid.
pub fn validate_instance(inst: &NetworkInstance) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = inst.num_nodes();
    let t_len = inst.horizon;
    let e = inst.rv_edges.len();
    for (what, nodes) in [("sv_nodes", &inst.sv_nodes), ("rv_nodes", &inst.rv_nodes)] {
        for &v in nodes.iter() {
            if v >= n {
                out.push(Violation::UnknownNode { what, node: v });
            }
        }
    }
    for (graph, edges, members) in [("sv", &inst.sv_edges, &inst.sv_nodes), ("rv", &inst.rv_edges, &inst.rv_nodes)] {
        let mut seen = std::collections::BTreeSet::new();
        for &(a, b) in edges.iter() {
            for v in [a, b] {
                if !members.contains(&v) {
                    out.push(Violation::UnknownNode { what: graph, node: v });
                }
            }
            if !seen.insert((a, b)) {
                out.push(Violation::DuplicateEdge { graph, from: a, to: b });
            }
        }
    }
    if inst.action_nodes().is_empty() {
        out.push(Violation::NoActionNodes);
    }
    for (what, expected, found) in [
        ("station_capacity", n, inst.station_capacity.len()),
        ("initial_fill", n, inst.initial_fill.len()),
        ("initial_rv", e, inst.initial_rv.len()),
        ("initial_onboard", e, inst.initial_onboard.len()),
        ("rv_move_cost", t_len, inst.rv_move_cost.len()),
        ("load_cost", t_len, inst.load_cost.len()),
    ] {
        if expected != found {
            out.push(Violation::ShapeMismatch { what, expected, found });
        }
    }
    if !out.is_empty() {
        return out;
    }
    for row in &inst.rv_move_cost {
        if row.len() != e {
            out.push(Violation::ShapeMismatch { what: "rv_move_cost step", expected: e, found: row.len() });
        }
    }
    for row in &inst.load_cost {
        if row.len() != n {
            out.push(Violation::ShapeMismatch { what: "load_cost step", expected: n, found: row.len() });
        } else if row.iter().any(|c| c.0 < 0) {
            out.push(Violation::NegativeCost { what: "load cost" });
        }
    }
    if inst.penalty.0 < 0 {
        out.push(Violation::NegativeCost { what: "penalty" });
    }
    for (what, v) in [("rv_capacity", inst.rv_capacity), ("max_load_action", inst.max_load_action), ("fleet_size", inst.fleet_size)] {
        if v < 0 {
            out.push(Violation::NegativeValue { what, index: 0, value: v });
        }
    }
    for &i in &inst.sv_nodes {
        let (d0, cap) = (inst.initial_fill[i], inst.station_capacity[i]);
        if cap < 0 {
            out.push(Violation::NegativeValue { what: "station_capacity", index: i, value: cap });
        }
        if d0 < 0 {
            out.push(Violation::NegativeValue { what: "initial_fill", index: i, value: d0 });
        } else if d0 > cap {
            out.push(Violation::FillAboveCapacity { station: i, fill: d0, capacity: cap });
        }
    }
    let placed: i64 = inst.initial_rv.iter().sum();
    if placed != inst.fleet_size {
        out.push(Violation::FleetCount { placed, fleet: inst.fleet_size });
    }
    for k in 0..e {
        let (z0, b0) = (inst.initial_rv[k], inst.initial_onboard[k]);
        if z0 < 0 {
            out.push(Violation::NegativeValue { what: "initial_rv", index: k, value: z0 });
        }
        if b0 < 0 {
            out.push(Violation::NegativeValue { what: "initial_onboard", index: k, value: b0 });
        } else if b0 > inst.rv_capacity * z0 {
            out.push(Violation::OnboardAboveCapacity { edge: k, onboard: b0, limit: inst.rv_capacity * z0 });
        }
    }
    let limit = inst.rv_capacity * inst.fleet_size;
    if inst.max_load_action > limit {
        out.push(Violation::LoadActionTooLarge { max_load_action: inst.max_load_action, limit });
    }
    let k_max = inst.max_duration as i64;
    for (idx, trip) in inst.in_progress.iter().enumerate() {
        let ok = trip.t <= 0
            && trip.t >= 1 - k_max
            && (trip.k as i64) > -trip.t
            && trip.k <= inst.max_duration
            && trip.count >= 0
            && inst.is_station(trip.from)
            && inst.is_station(trip.to);
        if !ok {
            out.push(Violation::BadInProgressTrip { index: idx });
        }
    }
    out
}

/// Canonical enumeration of demand tuples and action slots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TupleIndex {
    /// All `(i, j, t, k)` over station edges, `t in 1..=T`, `k in 0..=K`, sorted.
    pub demand: Vec<DemandTuple>,
    /// All `(t, i)` with `i` an action node, sorted by `t` then `i`.
    pub slots: Vec<(usize, usize)>,
}

pub fn enumerate_tuples(inst: &NetworkInstance) -> TupleIndex {
    let mut demand = Vec::with_capacity(inst.horizon * inst.sv_edges.len() * (inst.max_duration + 1));
    for t in 1..=inst.horizon {
        for &(i, j) in &inst.sv_edges {
            for k in 0..=inst.max_duration {
                demand.push(DemandTuple::new(i, j, t, k));
            }
        }
    }
    demand.sort();
    let actions = inst.action_nodes();
    let slots = (1..=inst.horizon).flat_map(|t| actions.iter().map(move |&i| (t, i))).collect();
    TupleIndex { demand, slots }
}

/// First-stage decision. All arrays are indexed `[t - 1][..]`; `z` and `b` by
/// RV edge, `y_plus` and `y_minus` by universe node. Empty `z`/`b` means the
/// plan fixes no routing (random action plans).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RebalancePlan {
    pub z: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub y_plus: Vec<Vec<f64>>,
    pub y_minus: Vec<Vec<f64>>,
}

impl RebalancePlan {
    /// No loading or unloading and no routing.
    pub fn empty(inst: &NetworkInstance) -> Self {
        let zero = vec![vec![0.0; inst.num_nodes()]; inst.horizon];
        RebalancePlan { z: Vec::new(), b: Vec::new(), y_plus: zero.clone(), y_minus: zero }
    }

    /// Trucks idle in place on their self loop (or initial edge head) with nothing on board.
    pub fn idle(inst: &NetworkInstance) -> Self {
        let mut plan = Self::empty(inst);
        let e = inst.rv_edges.len();
        let mut at = vec![0.0; inst.num_nodes()];
        for (k, &(_, to)) in inst.rv_edges.iter().enumerate() {
            at[to] += inst.initial_rv[k] as f64;
        }
        let mut step = vec![0.0; e];
        for (v, &count) in at.iter().enumerate() {
            if count > 0.0 {
                let k = inst.rv_edge_index(v, v).expect("idle plan needs self loops");
                step[k] = count;
            }
        }
        plan.z = vec![step; inst.horizon];
        plan.b = vec![vec![0.0; e]; inst.horizon];
        plan
    }

    pub fn has_routing(&self) -> bool {
        !self.z.is_empty()
    }

    /// Net unloading `y_minus - y_plus` at `(i, t)`.
    pub fn net_unload(&self, i: usize, t: usize) -> f64 {
        self.y_minus[t - 1][i] - self.y_plus[t - 1][i]
    }

    pub fn is_integral(&self, tol: f64) -> bool {
        [&self.z, &self.b, &self.y_plus, &self.y_minus]
            .iter()
            .all(|m| m.iter().flatten().all(|v| (v - v.round()).abs() <= tol))
    }

    /// `Σ c z + Σ r (y⁺ + y⁻)` in currency units.
    pub fn operating_cost(&self, inst: &NetworkInstance) -> f64 {
        let mut total = 0.0;
        for t in 1..=inst.horizon {
            if self.has_routing() {
                for (k, c) in inst.rv_move_cost[t - 1].iter().enumerate() {
                    total += c.to_f64() * self.z[t - 1][k];
                }
            }
            for i in 0..inst.num_nodes() {
                total += inst.load_cost[t - 1][i].to_f64() * (self.y_plus[t - 1][i] + self.y_minus[t - 1][i]);
            }
        }
        total
    }

    /// Rounds every entry to the nearest integer.
    pub fn rounded(&self) -> Self {
        let r = |m: &Vec<Vec<f64>>| m.iter().map(|row| row.iter().map(|v| v.round()).collect()).collect();
        RebalancePlan { z: r(&self.z), b: r(&self.b), y_plus: r(&self.y_plus), y_minus: r(&self.y_minus) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PlanViolation {
    Shape(&'static str),
    Bound { what: &'static str, t: usize, index: usize, value: f64 },
    Fractional { what: &'static str, t: usize, index: usize, value: f64 },
    ActionOffStation { t: usize, node: usize },
    RvConservation { t: usize, node: usize, residual: f64 },
    OnboardConservation { t: usize, node: usize, residual: f64 },
    OnboardCapacity { t: usize, edge: usize, onboard: f64, limit: f64 },
}

impl fmt::Display for PlanViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanViolation::Shape(what) => write!(f, "{what} has the wrong shape"),
            PlanViolation::Bound { what, t, index, value } => write!(f, "{what}[{t}][{index}] = {value} is out of bounds"),
            PlanViolation::Fractional { what, t, index, value } => write!(f, "{what}[{t}][{index}] = {value} is fractional"),
            PlanViolation::ActionOffStation { t, node } => write!(f, "action at step {t} on node {node}, which is not a station"),
            PlanViolation::RvConservation { t, node, residual } => write!(f, "trucks not conserved at node {node}, step {t} (residual {residual})"),
            PlanViolation::OnboardConservation { t, node, residual } => {
                write!(f, "carried vehicles not conserved at node {node}, step {t} (residual {residual})")
            }
            PlanViolation::OnboardCapacity { t, edge, onboard, limit } => write!(f, "edge {edge} at step {t} carries {onboard} > {limit}"),
        }
    }
}

/// Checks conservation of trucks and carried vehicles, coupling `b <= b̄ z`,
/// action bounds and, when `integral`, integrality. Plans without routing
/// are checked on their actions only.
pub fn check_plan(inst: &NetworkInstance, plan: &RebalancePlan, integral: bool, tol: f64) -> Vec<PlanViolation> {
    let mut out = Vec::new();
    let (n, e, t_len) = (inst.num_nodes(), inst.rv_edges.len(), inst.horizon);
    let shape_ok = |m: &Vec<Vec<f64>>, width: usize| m.len() == t_len && m.iter().all(|r| r.len() == width);
    if !shape_ok(&plan.y_plus, n) || !shape_ok(&plan.y_minus, n) {
        out.push(PlanViolation::Shape("y"));
        return out;
    }
    let routed = plan.has_routing();
    if routed && (!shape_ok(&plan.z, e) || !shape_ok(&plan.b, e)) {
        out.push(PlanViolation::Shape("z/b"));
        return out;
    }
    let actions = inst.action_nodes();
    let ybar = inst.max_load_action as f64;
    let frac = |what: &'static str, t: usize, index: usize, value: f64, out: &mut Vec<PlanViolation>| {
        if integral && (value - value.round()).abs() > tol {
            out.push(PlanViolation::Fractional { what, t, index, value });
        }
    };
    for t in 1..=t_len {
        for i in 0..n {
            for (what, v) in [("y_plus", plan.y_plus[t - 1][i]), ("y_minus", plan.y_minus[t - 1][i])] {
                if v < -tol || v > ybar + tol {
                    out.push(PlanViolation::Bound { what, t, index: i, value: v });
                }
                if v.abs() > tol && actions.binary_search(&i).is_err() {
                    out.push(PlanViolation::ActionOffStation { t, node: i });
                }
                frac(what, t, i, v, &mut out);
            }
        }
    }
    if !routed {
        return out;
    }
    let bbar = inst.rv_capacity as f64;
    for t in 1..=t_len {
        for k in 0..e {
            let (z, b) = (plan.z[t - 1][k], plan.b[t - 1][k]);
            if z < -tol {
                out.push(PlanViolation::Bound { what: "z", t, index: k, value: z });
            }
            if b < -tol {
                out.push(PlanViolation::Bound { what: "b", t, index: k, value: b });
            }
            if b > bbar * z + tol {
                out.push(PlanViolation::OnboardCapacity { t, edge: k, onboard: b, limit: bbar * z });
            }
            frac("z", t, k, z, &mut out);
            frac("b", t, k, b, &mut out);
        }
    }
    for t in 1..=t_len {
        let mut z_bal = vec![0.0; n];
        let mut b_bal = vec![0.0; n];
        for (k, &(from, to)) in inst.rv_edges.iter().enumerate() {
            let (z_prev, b_prev) = if t == 1 {
                (inst.initial_rv[k] as f64, inst.initial_onboard[k] as f64)
            } else {
                (plan.z[t - 2][k], plan.b[t - 2][k])
            };
            z_bal[from] += plan.z[t - 1][k];
            z_bal[to] -= z_prev;
            b_bal[from] += plan.b[t - 1][k];
            b_bal[to] -= b_prev;
        }
        for &v in &inst.rv_nodes {
            if z_bal[v].abs() > tol {
                out.push(PlanViolation::RvConservation { t, node: v, residual: z_bal[v] });
            }
            let r = b_bal[v] - plan.y_plus[t - 1][v] + plan.y_minus[t - 1][v];
            if r.abs() > tol {
                out.push(PlanViolation::OnboardConservation { t, node: v, residual: r });
            }
        }
    }
    out
}

/// Outcome of one second-stage solve.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage2Solution {
    /// Journeys served per tuple (tuples with no demand are absent).
    pub served: BTreeMap<DemandTuple, i64>,
    /// `(p⁺, p⁻)` per `(t, i)`: vehicles created / destroyed at a penalty.
    pub penalties: BTreeMap<(usize, usize), (i64, i64)>,
    /// Loss of unserved journeys plus penalties.
    pub cost: Money,
    /// `(λ⁺, λ⁻)` per `(t, i)` for the upper / lower fill-level bounds, both `>= 0`.
    pub duals: BTreeMap<(usize, usize), (f64, f64)>,
    /// Change in cost per extra vehicle unloaded at `(t, i)`, keyed `(t, i)`.
    pub marginals: BTreeMap<(usize, usize), f64>,
    /// Fill level `d_i^t` as `fill[t - 1][i]`.
    pub fill: Vec<Vec<f64>>,
    /// Journeys still travelling after step `T`.
    pub in_transit_end: f64,
    pub total_demand: i64,
}

impl Stage2Solution {
    pub fn total_served(&self) -> i64 {
        self.served.values().sum()
    }

    pub fn penalty_units(&self) -> i64 {
        self.penalties.values().map(|(a, b)| a + b).sum()
    }

    /// `λ⁺ - λ⁻` at `(i, t)`.
    pub fn dual_difference(&self, i: usize, t: usize) -> f64 {
        self.duals.get(&(t, i)).map_or(0.0, |(up, lo)| up - lo)
    }
}
