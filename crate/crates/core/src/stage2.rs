//! Second stage: customers' best use of the vehicles left by the plan.
//!
//! The penalized recourse problem is a min-cost flow on a time-expanded
//! station graph. Node `(i, t)` receives the fill level carried over from
//! `t - 1` and sends the fill level `d_i^t` on to `(i, t + 1)` along a
//! zero-cost arc of capacity `d̄_i`; the last fill arc and every journey
//! ending after `T` go to a common sink. Each potential journey is a unit
//! arc whose cost is its negated value. Vehicles can be created from or
//! destroyed into the sink at any node for the penalty `r_p`.

use std::collections::BTreeMap;

use lpkit::{solve_lp, LinearProgram, LpStatus, RowSense};
use netflow::{extract_bound_duals, solve_flow_rooted, write_dimacs, FlowProblem, FlowStatus};

use crate::model::{DemandTuple, NetworkInstance, RebalancePlan, Stage2Solution};
use crate::money::Money;
use crate::scenario::DemandScenario;

/// Tolerance when reading integral actions out of a float plan.
pub const ACTION_TOL: f64 = 1e-6;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum Stage2Error {
    #[error("action at node {node}, step {t} is {value}, not an integer")]
    FractionalAction { t: usize, node: usize, value: f64 },
    #[error("plan has {found} steps of actions, expected {expected}")]
    Shape { expected: usize, found: usize },
    #[error("flow solver failed: {0}")]
    Solver(String),
}

#[derive(Clone, Debug)]
pub struct Stage2Network {
    pub problem: FlowProblem,
    pub sink: usize,
    /// Station nodes in row order.
    pub stations: Vec<usize>,
    /// Fill arc leaving `(station, t)`, as `fill_arcs[t - 1][row]`.
    pub fill_arcs: Vec<Vec<usize>>,
    /// `(create, destroy)` arcs at `(station, t)`, as `penalty_arcs[t - 1][row]`.
    pub penalty_arcs: Vec<Vec<(usize, usize)>>,
    /// Unit arcs per tuple, most valuable journey first.
    pub journey_arcs: BTreeMap<DemandTuple, Vec<usize>>,
    /// Loss of serving nobody; added to the flow cost to get the loss.
    pub offset: Money,
    pub penalty_capacity: i64,
    /// In-progress vehicles that arrive after the horizon.
    pub late_in_progress: i64,
}

impl Stage2Network {
    pub fn node(&self, row: usize, t: usize) -> usize {
        (t - 1) * self.stations.len() + row
    }

    pub fn to_dimacs(&self) -> String {
        write_dimacs(&self.problem, Some("second-stage recourse network"))
    }
}

fn integral_action(v: f64, t: usize, node: usize) -> Result<i64, Stage2Error> {
    let r = v.round();
    if (v - r).abs() > ACTION_TOL {
        return Err(Stage2Error::FractionalAction { t, node, value: v });
    }
    Ok(r as i64)
}

fn check_shape(inst: &NetworkInstance, plan: &RebalancePlan) -> Result<(), Stage2Error> {
    for m in [&plan.y_plus, &plan.y_minus] {
        if m.len() != inst.horizon || m.iter().any(|r| r.len() != inst.num_nodes()) {
            return Err(Stage2Error::Shape { expected: inst.horizon, found: m.len() });
        }
    }
    Ok(())
}

/// Builds the penalized recourse network for the plan's (integral) actions.
pub fn build_stage2_network(
    inst: &NetworkInstance,
    scen: &DemandScenario,
    plan: &RebalancePlan,
) -> Result<Stage2Network, Stage2Error> {
    check_shape(inst, plan)?;
    let t_len = inst.horizon;
    let stations = inst.sv_nodes.clone();
    let ns = stations.len();
    let mut row_of = vec![usize::MAX; inst.num_nodes()];
    for (r, &i) in stations.iter().enumerate() {
        row_of[i] = r;
    }
    let mut supplies = vec![0i64; t_len * ns + 1];
    let sink = t_len * ns;
    let mut actions_total = 0;
    for t in 1..=t_len {
        for (r, &i) in stations.iter().enumerate() {
            let unload = integral_action(plan.y_minus[t - 1][i], t, i)?;
            let load = integral_action(plan.y_plus[t - 1][i], t, i)?;
            supplies[(t - 1) * ns + r] += unload - load;
            actions_total += unload.abs() + load.abs();
        }
    }
    for (r, &i) in stations.iter().enumerate() {
        supplies[r] += inst.initial_fill[i];
    }
    let mut late_in_progress = 0;
    let mut in_progress_total = 0;
    for trip in &inst.in_progress {
        in_progress_total += trip.count;
        let a = trip.arrival();
        if a >= 1 && a as usize <= t_len {
            supplies[(a as usize - 1) * ns + row_of[trip.to]] += trip.count;
        } else {
            late_in_progress += trip.count;
        }
    }
    let fill_total: i64 = stations.iter().map(|&i| inst.initial_fill[i] + inst.station_capacity[i]).sum();
    let penalty_capacity = scen.total_demand() + in_progress_total + fill_total + actions_total + 1;
    supplies[sink] = -supplies[..sink].iter().sum::<i64>();

    let mut problem = FlowProblem { supplies, arcs: Vec::new() };
    let node = |r: usize, t: usize| (t - 1) * ns + r;
    let mut fill_arcs = vec![vec![0; ns]; t_len];
    let mut penalty_arcs = vec![vec![(0, 0); ns]; t_len];
    for t in 1..=t_len {
        for (r, &i) in stations.iter().enumerate() {
            let head = if t < t_len { node(r, t + 1) } else { sink };
            fill_arcs[t - 1][r] = problem.add_arc(node(r, t), head, inst.station_capacity[i], 0);
        }
    }
    let rp = inst.penalty.micros();
    for t in 1..=t_len {
        for r in 0..ns {
            let create = problem.add_arc(sink, node(r, t), penalty_capacity, rp);
            let destroy = problem.add_arc(node(r, t), sink, penalty_capacity, rp);
            penalty_arcs[t - 1][r] = (create, destroy);
        }
    }
    let mut journey_arcs = BTreeMap::new();
    for (d, values) in &scen.values {
        let tail = node(row_of[d.i], d.t);
        let head = if d.arrival() <= t_len { node(row_of[d.j], d.arrival()) } else { sink };
        let arcs: Vec<usize> = values.iter().rev().map(|v| problem.add_arc(tail, head, 1, -v.micros())).collect();
        journey_arcs.insert(*d, arcs);
    }
    Ok(Stage2Network {
        problem,
        sink,
        stations,
        fill_arcs,
        penalty_arcs,
        journey_arcs,
        offset: scen.total_value(),
        penalty_capacity,
        late_in_progress,
    })
}

/// Solves the recourse problem for integral actions by min-cost flow.
///
/// Duals come from node potentials rooted at the sink, so `marginals[(t, i)]`
/// is the exact change in cost from unloading one more vehicle at `(i, t)`.
pub fn solve_stage2(inst: &NetworkInstance, scen: &DemandScenario, plan: &RebalancePlan) -> Result<Stage2Solution, Stage2Error> {
    let net = build_stage2_network(inst, scen, plan)?;
    solve_network(inst, scen, &net)
}

pub fn solve_network(inst: &NetworkInstance, scen: &DemandScenario, net: &Stage2Network) -> Result<Stage2Solution, Stage2Error> {
    let sol = solve_flow_rooted(&net.problem, net.sink);
    if sol.status != FlowStatus::Optimal {
        return Err(Stage2Error::Solver("penalized network reported infeasible".into()));
    }
    let t_len = inst.horizon;
    let tracked: Vec<usize> = net.fill_arcs.iter().flatten().copied().collect();
    let bounds = extract_bound_duals(&net.problem, &sol, &tracked).map_err(|e| Stage2Error::Solver(e.to_string()))?;
    let ns = net.stations.len();
    let mut duals = BTreeMap::new();
    let mut marginals = BTreeMap::new();
    let mut penalties = BTreeMap::new();
    let mut fill = vec![vec![0.0; inst.num_nodes()]; t_len];
    for t in 1..=t_len {
        for (r, &i) in net.stations.iter().enumerate() {
            let b = bounds[(t - 1) * ns + r];
            duals.insert((t, i), (Money(b.upper).to_f64(), Money(b.lower).to_f64()));
            marginals.insert((t, i), Money(sol.potentials[net.node(r, t)] - sol.potentials[net.sink]).to_f64());
            fill[t - 1][i] = sol.flows[net.fill_arcs[t - 1][r]] as f64;
            let (c, d) = net.penalty_arcs[t - 1][r];
            let (pc, pd) = (sol.flows[c], sol.flows[d]);
            if pc != 0 || pd != 0 {
                penalties.insert((t, i), (pc, pd));
            }
        }
    }
    let mut served = BTreeMap::new();
    let mut in_transit = net.late_in_progress;
    for (d, arcs) in &net.journey_arcs {
        let w: i64 = arcs.iter().map(|&a| sol.flows[a]).sum();
        if w > 0 {
            served.insert(*d, w);
            if d.arrival() > t_len {
                in_transit += w;
            }
        }
    }
    Ok(Stage2Solution {
        served,
        penalties,
        cost: Money(sol.cost) + net.offset,
        duals,
        marginals,
        fill,
        in_transit_end: in_transit as f64,
        total_demand: scen.total_demand(),
    })
}

/// Completed journeys over demanded journeys; 1 when nothing was demanded.
pub fn service_rate(scen: &DemandScenario, sol: &Stage2Solution) -> f64 {
    let total = scen.total_demand();
    if total == 0 {
        1.0
    } else {
        sol.total_served() as f64 / total as f64
    }
}

/// Stations, trucks and journeys at the end minus at the start, net of
/// created and destroyed vehicles. Zero for every consistent solve.
pub fn conservation_residual(inst: &NetworkInstance, plan: &RebalancePlan, sol: &Stage2Solution) -> f64 {
    let t_len = inst.horizon;
    let end_stations: f64 = inst.sv_nodes.iter().map(|&i| sol.fill[t_len - 1][i]).sum();
    let net_loaded: f64 = (0..t_len)
        .flat_map(|t| inst.sv_nodes.iter().map(move |&i| (t, i)))
        .map(|(t, i)| plan.y_plus[t][i] - plan.y_minus[t][i])
        .sum();
    let onboard0: f64 = inst.initial_onboard.iter().sum::<i64>() as f64;
    let in_progress: f64 = inst.in_progress.iter().map(|p| p.count).sum::<i64>() as f64;
    let created: i64 = sol.penalties.values().map(|(c, d)| c - d).sum();
    let end = end_stations + (onboard0 + net_loaded) + sol.in_transit_end;
    let start = inst.total_initial_fill() as f64 + onboard0 + in_progress + created as f64;
    end - start
}

/// The penalized recourse problem written directly as a linear program in
/// fill levels, per-journey service fractions and penalty variables.
#[derive(Clone, Debug)]
pub struct Stage2Lp {
    pub lp: LinearProgram,
    /// Fill-level column for `(t, i)`.
    pub fill_cols: BTreeMap<(usize, usize), usize>,
    /// Conservation row for `(t, i)`.
    pub rows: BTreeMap<(usize, usize), usize>,
    pub journey_cols: BTreeMap<DemandTuple, Vec<usize>>,
    pub penalty_cols: BTreeMap<(usize, usize), (usize, usize)>,
}

/// Builds the LP for arbitrary (possibly fractional) actions `y`.
pub fn build_stage2_lp(inst: &NetworkInstance, scen: &DemandScenario, plan: &RebalancePlan) -> Result<Stage2Lp, Stage2Error> {
    check_shape(inst, plan)?;
    let t_len = inst.horizon;
    let mut lp = LinearProgram::new();
    let mut fill_cols = BTreeMap::new();
    let mut penalty_cols = BTreeMap::new();
    let rp = inst.penalty.to_f64();
    for t in 1..=t_len {
        for &i in &inst.sv_nodes {
            fill_cols.insert((t, i), lp.add_var(0.0, 0.0, inst.station_capacity[i] as f64));
            let create = lp.add_var(rp, 0.0, f64::INFINITY);
            let destroy = lp.add_var(rp, 0.0, f64::INFINITY);
            penalty_cols.insert((t, i), (create, destroy));
        }
    }
    let mut journey_cols = BTreeMap::new();
    for (d, values) in &scen.values {
        let cols: Vec<usize> = values.iter().map(|v| lp.add_var(-v.to_f64(), 0.0, 1.0)).collect();
        journey_cols.insert(*d, cols);
    }
    lp.objective_offset = scen.total_value().to_f64();

    let mut entries: BTreeMap<(usize, usize), Vec<(usize, f64)>> = BTreeMap::new();
    let mut rhs: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for t in 1..=t_len {
        for &i in &inst.sv_nodes {
            let row = entries.entry((t, i)).or_default();
            row.push((fill_cols[&(t, i)], 1.0));
            if t > 1 {
                row.push((fill_cols[&(t - 1, i)], -1.0));
            }
            let (c, d) = penalty_cols[&(t, i)];
            row.push((c, -1.0));
            row.push((d, 1.0));
            let mut b = plan.y_minus[t - 1][i] - plan.y_plus[t - 1][i];
            if t == 1 {
                b += inst.initial_fill[i] as f64;
            }
            rhs.insert((t, i), b);
        }
    }
    for trip in &inst.in_progress {
        let a = trip.arrival();
        if a >= 1 && a as usize <= t_len {
            *rhs.get_mut(&(a as usize, trip.to)).expect("station row") += trip.count as f64;
        }
    }
    for (d, cols) in &journey_cols {
        for &c in cols {
            entries.get_mut(&(d.t, d.i)).expect("station row").push((c, 1.0));
            if d.arrival() <= t_len {
                entries.get_mut(&(d.arrival(), d.j)).expect("station row").push((c, -1.0));
            }
        }
    }
    let mut rows = BTreeMap::new();
    for (key, coeffs) in entries {
        rows.insert(key, lp.add_row(&coeffs, RowSense::Eq, rhs[&key]));
    }
    Ok(Stage2Lp { lp, fill_cols, rows, journey_cols, penalty_cols })
}

/// Result of the LP route.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage2Relaxed {
    pub cost: f64,
    pub served: f64,
    pub total_demand: i64,
    pub duals: BTreeMap<(usize, usize), (f64, f64)>,
    pub marginals: BTreeMap<(usize, usize), f64>,
    /// Largest distance of any journey or penalty variable from an integer.
    pub max_fractionality: f64,
    pub x: Vec<f64>,
}

impl Stage2Relaxed {
    pub fn service_rate(&self) -> f64 {
        if self.total_demand == 0 {
            1.0
        } else {
            self.served / self.total_demand as f64
        }
    }
}

/// Solves the recourse LP with the simplex kernel; accepts fractional actions.
pub fn solve_stage2_lp(inst: &NetworkInstance, scen: &DemandScenario, plan: &RebalancePlan) -> Result<Stage2Relaxed, Stage2Error> {
    let built = build_stage2_lp(inst, scen, plan)?;
    let sol = solve_lp(&built.lp);
    if sol.status != LpStatus::Optimal {
        return Err(Stage2Error::Solver(format!("recourse LP ended with {:?}", sol.status)));
    }
    let mut duals = BTreeMap::new();
    let mut marginals = BTreeMap::new();
    for (&key, &col) in &built.fill_cols {
        let rc = sol.reduced_costs[col];
        duals.insert(key, ((-rc).max(0.0), rc.max(0.0)));
        marginals.insert(key, sol.duals[built.rows[&key]]);
    }
    let served: f64 = built.journey_cols.values().flatten().map(|&c| sol.x[c]).sum();
    let frac = built
        .journey_cols
        .values()
        .flatten()
        .chain(built.penalty_cols.values().flat_map(|(a, b)| [a, b]))
        .map(|&c| (sol.x[c] - sol.x[c].round()).abs())
        .fold(0.0, f64::max);
    Ok(Stage2Relaxed {
        cost: sol.objective,
        served,
        total_demand: scen.total_demand(),
        duals,
        marginals,
        max_fractionality: frac,
        x: sol.x,
    })
}

/// Cost, service rate and dual signals from whichever route fits the plan.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage2Outcome {
    pub cost: f64,
    pub service_rate: f64,
    pub duals: BTreeMap<(usize, usize), (f64, f64)>,
    pub marginals: BTreeMap<(usize, usize), f64>,
    pub via_flow: bool,
}

/// Uses the flow solver when every action is integral, the LP otherwise.
pub fn solve_stage2_any(inst: &NetworkInstance, scen: &DemandScenario, plan: &RebalancePlan) -> Result<Stage2Outcome, Stage2Error> {
    match solve_stage2(inst, scen, plan) {
        Ok(sol) => Ok(Stage2Outcome {
            cost: sol.cost.to_f64(),
            service_rate: service_rate(scen, &sol),
            duals: sol.duals,
            marginals: sol.marginals,
            via_flow: true,
        }),
        Err(Stage2Error::FractionalAction { .. }) => {
            let r = solve_stage2_lp(inst, scen, plan)?;
            Ok(Stage2Outcome { cost: r.cost, service_rate: r.service_rate(), duals: r.duals, marginals: r.marginals, via_flow: false })
        }
        Err(e) => Err(e),
    }
}
