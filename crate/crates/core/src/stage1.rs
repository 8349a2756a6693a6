//! First stage: truck routes, onboard flows and load/unload actions.
//!
//! The approximate expected recourse cost `V̄(y; θ)` enters the default
//! model through unit-range segment variables per action slot: unloading
//! segments `k = 0 .. ȳ-1` cost `θ_k + r`, loading segments `k = 1 .. ȳ`
//! cost `-θ_{-k} + r`. Nondecreasing slopes make the cheapest segments fill
//! first, so the sum reproduces `V̄` exactly. With routes fixed, the rest is
//! a min-cost flow (see [`solve_fixed_z_flow`]) and thus integral.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::{Duration, Instant};

use lpkit::{solve_lp_from, solve_mip_with, Basis, Heuristic, LinearProgram, LpStatus, MipOptions, MipStatus, RowSense};
use netflow::{solve_flow, FlowProblem, FlowStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{NetworkInstance, RebalancePlan};
use crate::money::Money;
use crate::scenario::DemandScenario;
use crate::vf::{StepSizeRule, ValueFunctionApprox};

#[derive(Clone, Debug, PartialEq)]
pub enum Stage1Mode {
    /// All variables continuous.
    Relaxed,
    /// Routes integral for `t <= ceil(T / 2)`.
    HalfInteger,
    Integer,
    /// Routes fixed to the given integral values; solved as an LP.
    FixedZ(Vec<Vec<i64>>),
}

impl Stage1Mode {
    fn integral_step(&self, t: usize, horizon: usize) -> bool {
        match self {
            Stage1Mode::Relaxed | Stage1Mode::FixedZ(_) => false,
            Stage1Mode::HalfInteger => t <= horizon.div_ceil(2),
            Stage1Mode::Integer => true,
        }
    }

    pub fn has_integers(&self) -> bool {
        matches!(self, Stage1Mode::HalfInteger | Stage1Mode::Integer)
    }
}

/// How `V̄` is written into the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Encoding {
    /// Unit-range segment variables per slot.
    Segments,
    /// Explicit `y⁺`, `y⁻`, net action and an epigraph variable cut by every segment line.
    Epigraph,
}

#[derive(Clone, Debug)]
pub struct Stage1Model {
    pub lp: LinearProgram,
    pub encoding: Encoding,
    /// `z[t - 1][edge]`, `b[t - 1][edge]` columns.
    pub z: Vec<Vec<usize>>,
    pub b: Vec<Vec<usize>>,
    /// Unload segment columns per slot `(t, i)`, segment 0 first.
    pub unload: BTreeMap<(usize, usize), Vec<usize>>,
    /// Load segment columns per slot, segment -1 first.
    pub load: BTreeMap<(usize, usize), Vec<usize>>,
    /// `(y⁺, y⁻, net, epigraph)` columns per slot under [`Encoding::Epigraph`].
    pub epigraph: BTreeMap<(usize, usize), (usize, usize, usize, usize)>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum Stage1Error {
    #[error("stage-1 problem is infeasible")]
    Infeasible,
    #[error("stage-1 problem is unbounded")]
    Unbounded,
    #[error("no feasible plan found within the limits")]
    NoSolution,
    #[error("fixed routes have the wrong shape or are infeasible")]
    BadFixedZ,
    #[error("solver failure: {0}")]
    Solver(String),
}

fn edges_out(inst: &NetworkInstance) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let n = inst.num_nodes();
    let mut out = vec![Vec::new(); n];
    let mut inc = vec![Vec::new(); n];
    for (k, &(a, b)) in inst.rv_edges.iter().enumerate() {
        out[a].push(k);
        inc[b].push(k);
    }
    (out, inc)
}

/// Assembles the first-stage model.
pub fn build_stage1(inst: &NetworkInstance, vfa: &ValueFunctionApprox, mode: &Stage1Mode) -> Stage1Model {
    build_stage1_encoded(inst, vfa, mode, Encoding::Segments)
}

pub fn build_stage1_encoded(inst: &NetworkInstance, vfa: &ValueFunctionApprox, mode: &Stage1Mode, encoding: Encoding) -> Stage1Model {
    let t_len = inst.horizon;
    let e = inst.rv_edges.len();
    let fleet = inst.fleet_size as f64;
    let bbar = inst.rv_capacity as f64;
    let ybar = vfa.ybar;
    let mut lp = LinearProgram::new();
    let mut z = vec![vec![0; e]; t_len];
    let mut b = vec![vec![0; e]; t_len];
    for t in 1..=t_len {
        let integral = mode.integral_step(t, t_len);
        for k in 0..e {
            let c = inst.rv_move_cost[t - 1][k].to_f64();
            let (lo, hi) = match mode {
                Stage1Mode::FixedZ(fixed) => {
                    let v = fixed.get(t - 1).and_then(|r| r.get(k)).copied().unwrap_or(0) as f64;
                    (v, v)
                }
                _ => (0.0, fleet),
            };
            z[t - 1][k] = if integral { lp.add_int_var(c, lo, hi) } else { lp.add_var(c, lo, hi) };
            lp.set_var_name(z[t - 1][k], format!("z_{}_{}_{}", inst.rv_edges[k].0, inst.rv_edges[k].1, t));
        }
        for k in 0..e {
            b[t - 1][k] = lp.add_var(0.0, 0.0, bbar * fleet);
            lp.set_var_name(b[t - 1][k], format!("b_{}_{}_{}", inst.rv_edges[k].0, inst.rv_edges[k].1, t));
        }
    }
    let mut unload = BTreeMap::new();
    let mut load = BTreeMap::new();
    let mut epigraph = BTreeMap::new();
    let int_y = matches!(mode, Stage1Mode::Integer) && encoding == Encoding::Epigraph;
    for (slot, &(t, i)) in vfa.slots.iter().enumerate() {
        let r = inst.load_cost[t - 1][i].to_f64();
        let s = &vfa.slopes[slot];
        match encoding {
            Encoding::Segments => {
                let u: Vec<usize> = (0..ybar).map(|k| lp.add_var(s[ybar + k] + r, 0.0, 1.0)).collect();
                let l: Vec<usize> = (1..=ybar).map(|k| lp.add_var(-s[ybar - k] + r, 0.0, 1.0)).collect();
                unload.insert((t, i), u);
                load.insert((t, i), l);
            }
            Encoding::Epigraph => {
                let yb = ybar as f64;
                let add = |lp: &mut LinearProgram, c: f64| if int_y { lp.add_int_var(c, 0.0, yb) } else { lp.add_var(c, 0.0, yb) };
                let yp = add(&mut lp, r);
                let ym = add(&mut lp, r);
                let net = lp.add_var(0.0, -yb, yb);
                let epi = lp.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
                epigraph.insert((t, i), (yp, ym, net, epi));
            }
        }
    }

    let (out, inc) = edges_out(inst);
    for t in 1..=t_len {
        for &v in &inst.rv_nodes {
            let mut row: Vec<(usize, f64)> = out[v].iter().map(|&k| (z[t - 1][k], 1.0)).collect();
            let mut rhs = 0.0;
            for &k in &inc[v] {
                if t == 1 {
                    rhs += inst.initial_rv[k] as f64;
                } else {
                    row.push((z[t - 2][k], -1.0));
                }
            }
            let r = lp.add_row(&row, RowSense::Eq, rhs);
            lp.set_row_name(r, format!("rv_{v}_{t}"));
        }
        for &v in &inst.rv_nodes {
            let mut row: Vec<(usize, f64)> = out[v].iter().map(|&k| (b[t - 1][k], 1.0)).collect();
            let mut rhs = 0.0;
            for &k in &inc[v] {
                if t == 1 {
                    rhs += inst.initial_onboard[k] as f64;
                } else {
                    row.push((b[t - 2][k], -1.0));
                }
            }
            if let Some(u) = unload.get(&(t, v)) {
                row.extend(u.iter().map(|&c| (c, 1.0)));
                row.extend(load[&(t, v)].iter().map(|&c| (c, -1.0)));
            }
            if let Some(&(yp, ym, _, _)) = epigraph.get(&(t, v)) {
                row.push((yp, -1.0));
                row.push((ym, 1.0));
            }
            let r = lp.add_row(&row, RowSense::Eq, rhs);
            lp.set_row_name(r, format!("onboard_{v}_{t}"));
        }
        for k in 0..e {
            let r = lp.add_row(&[(b[t - 1][k], 1.0), (z[t - 1][k], -bbar)], RowSense::Le, 0.0);
            lp.set_row_name(r, format!("carry_{}_{}_{}", inst.rv_edges[k].0, inst.rv_edges[k].1, t));
        }
        for (slot, &(tt, i)) in vfa.slots.iter().enumerate() {
            if tt != t {
                continue;
            }
            if let Some(&(yp, ym, net, epi)) = epigraph.get(&(t, i)) {
                lp.add_row(&[(net, 1.0), (ym, -1.0), (yp, 1.0)], RowSense::Eq, 0.0);
                let s = &vfa.slopes[slot];
                for seg in -(ybar as i64)..ybar as i64 {
                    let slope = s[(seg + ybar as i64) as usize];
                    let at = vfa.evaluate(i, t, seg as f64).unwrap_or(0.0);
                    lp.add_row(&[(epi, 1.0), (net, -slope)], RowSense::Ge, at - slope * seg as f64);
                }
            }
        }
    }
    lp.objective_offset = vfa.theta0;
    Stage1Model { lp, encoding, z, b, unload, load, epigraph }
}

impl Stage1Model {
    /// Reads a plan out of a solution vector (no post-processing).
    pub fn plan_from_x(&self, inst: &NetworkInstance, x: &[f64]) -> RebalancePlan {
        let mut plan = RebalancePlan::empty(inst);
        plan.z = self.z.iter().map(|r| r.iter().map(|&c| x[c]).collect()).collect();
        plan.b = self.b.iter().map(|r| r.iter().map(|&c| x[c]).collect()).collect();
        for (&(t, i), cols) in &self.unload {
            plan.y_minus[t - 1][i] = cols.iter().map(|&c| x[c]).sum();
            plan.y_plus[t - 1][i] = self.load[&(t, i)].iter().map(|&c| x[c]).sum();
        }
        for (&(t, i), &(yp, ym, _, _)) in &self.epigraph {
            plan.y_plus[t - 1][i] = x[yp];
            plan.y_minus[t - 1][i] = x[ym];
        }
        plan
    }

    /// Writes a plan into a solution vector for this model.
    pub fn x_from_plan(&self, plan: &RebalancePlan, vfa: &ValueFunctionApprox) -> Vec<f64> {
        let mut x = vec![0.0; self.lp.num_vars()];
        for (t, row) in self.z.iter().enumerate() {
            for (k, &c) in row.iter().enumerate() {
                x[c] = plan.z[t][k];
                x[self.b[t][k]] = plan.b[t][k];
            }
        }
        let fill = |x: &mut Vec<f64>, cols: &[usize], amount: f64| {
            let mut left = amount;
            for &c in cols {
                let v = left.clamp(0.0, 1.0);
                x[c] = v;
                left -= v;
            }
        };
        for (&(t, i), cols) in &self.unload {
            fill(&mut x, cols, plan.y_minus[t - 1][i]);
            fill(&mut x, &self.load[&(t, i)], plan.y_plus[t - 1][i]);
        }
        for (&(t, i), &(yp, ym, net, epi)) in &self.epigraph {
            x[yp] = plan.y_plus[t - 1][i];
            x[ym] = plan.y_minus[t - 1][i];
            x[net] = x[ym] - x[yp];
            x[epi] = vfa.evaluate(i, t, x[net]).unwrap_or(0.0);
        }
        x
    }
}

/// Replaces `(y⁺, y⁻)` by `(y⁺ - m, y⁻ - m)` with `m = min(y⁺, y⁻)`.
pub fn cancel_opposing_actions(plan: &mut RebalancePlan) {
    for t in 0..plan.y_plus.len() {
        for i in 0..plan.y_plus[t].len() {
            let m = plan.y_plus[t][i].min(plan.y_minus[t][i]);
            if m > 0.0 {
                plan.y_plus[t][i] -= m;
                plan.y_minus[t][i] -= m;
            }
        }
    }
}

/// Slots with a load or unload action but no truck arriving or leaving.
pub fn actions_without_truck(inst: &NetworkInstance, plan: &RebalancePlan, tol: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    if !plan.has_routing() {
        return out;
    }
    let (outs, ins) = edges_out(inst);
    for t in 1..=inst.horizon {
        for i in inst.action_nodes() {
            let acts = plan.y_plus[t - 1][i] + plan.y_minus[t - 1][i];
            if acts <= tol {
                continue;
            }
            let leaving: f64 = outs[i].iter().map(|&k| plan.z[t - 1][k]).sum();
            let arriving: f64 = ins[i]
                .iter()
                .map(|&k| if t == 1 { inst.initial_rv[k] as f64 } else { plan.z[t - 2][k] })
                .sum();
            if leaving <= tol && arriving <= tol {
                out.push((t, i));
            }
        }
    }
    out
}

/// `Σ c z + Σ r (y⁺ + y⁻) + V̄(y; θ)`.
pub fn stage1_objective(inst: &NetworkInstance, vfa: &ValueFunctionApprox, plan: &RebalancePlan) -> f64 {
    plan.operating_cost(inst) + vfa.evaluate_plan(plan).expect("plan actions within ±ȳ")
}

/// Optimal onboard flows and actions for fixed integral routes, as a min-cost flow.
///
/// Node `(v, t)` holds the vehicles on trucks at `v` at the start of step
/// `t`; a reservoir stands for the stations. Onboard arcs carry at most
/// `b̄ z`; each action slot gets `ȳ` unit unload arcs into the reservoir and
/// `ȳ` unit load arcs out of it, priced by the slopes (rounded to micro-units).
pub fn solve_fixed_z_flow(inst: &NetworkInstance, vfa: &ValueFunctionApprox, z: &[Vec<i64>]) -> Result<(RebalancePlan, f64), Stage1Error> {
    let t_len = inst.horizon;
    let e = inst.rv_edges.len();
    if z.len() != t_len || z.iter().any(|r| r.len() != e) {
        return Err(Stage1Error::BadFixedZ);
    }
    let n = inst.num_nodes();
    let mut row_of = vec![usize::MAX; n];
    for (r, &v) in inst.rv_nodes.iter().enumerate() {
        row_of[v] = r;
    }
    let nr = inst.rv_nodes.len();
    let node = |v: usize, t: usize| (t - 1) * nr + row_of[v];
    let reservoir = t_len * nr;
    let mut problem = FlowProblem::new(t_len * nr + 1);
    for (k, &(_, to)) in inst.rv_edges.iter().enumerate() {
        problem.supplies[node(to, 1)] += inst.initial_onboard[k];
        problem.supplies[reservoir] -= inst.initial_onboard[k];
    }
    let mut b_arcs = vec![vec![0; e]; t_len];
    for t in 1..=t_len {
        for (k, &(from, to)) in inst.rv_edges.iter().enumerate() {
            let head = if t < t_len { node(to, t + 1) } else { reservoir };
            b_arcs[t - 1][k] = problem.add_arc(node(from, t), head, inst.rv_capacity * z[t - 1][k].max(0), 0);
        }
    }
    let ybar = vfa.ybar;
    let mut action_arcs = Vec::new();
    for (slot, &(t, i)) in vfa.slots.iter().enumerate() {
        let r = inst.load_cost[t - 1][i];
        let s = &vfa.slopes[slot];
        let un: Vec<usize> =
            (0..ybar).map(|k| problem.add_arc(node(i, t), reservoir, 1, (Money::from_f64(s[ybar + k]) + r).micros())).collect();
        let ld: Vec<usize> =
            (1..=ybar).map(|k| problem.add_arc(reservoir, node(i, t), 1, (r - Money::from_f64(s[ybar - k])).micros())).collect();
        action_arcs.push((t, i, un, ld));
    }
    let sol = solve_flow(&problem);
    if sol.status != FlowStatus::Optimal {
        return Err(Stage1Error::BadFixedZ);
    }
    let mut plan = RebalancePlan::empty(inst);
    plan.z = z.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
    plan.b = b_arcs.iter().map(|r| r.iter().map(|&a| sol.flows[a] as f64).collect()).collect();
    for (t, i, un, ld) in action_arcs {
        plan.y_minus[t - 1][i] = un.iter().map(|&a| sol.flows[a]).sum::<i64>() as f64;
        plan.y_plus[t - 1][i] = ld.iter().map(|&a| sol.flows[a]).sum::<i64>() as f64;
    }
    cancel_opposing_actions(&mut plan);
    let obj = stage1_objective(inst, vfa, &plan);
    Ok((plan, obj))
}

/// Integral truck routes close to a fractional route vector: trucks are
/// routed one by one along the time-expanded path with the largest
/// remaining fractional flow.
pub fn round_routes(inst: &NetworkInstance, z_frac: &[Vec<f64>]) -> Vec<Vec<i64>> {
    let t_len = inst.horizon;
    let e = inst.rv_edges.len();
    let n = inst.num_nodes();
    let (outs, _) = edges_out(inst);
    let mut remaining: Vec<Vec<f64>> = z_frac.to_vec();
    let mut z = vec![vec![0i64; e]; t_len];
    let mut starts = Vec::new();
    for (k, &(_, to)) in inst.rv_edges.iter().enumerate() {
        for _ in 0..inst.initial_rv[k] {
            starts.push(to);
        }
    }
    for start in starts {
        // value[t][v]: best remaining flow collectable from (v, t) to the end.
        let mut value = vec![vec![0.0f64; n]; t_len + 2];
        let mut choice = vec![vec![usize::MAX; n]; t_len + 1];
        for t in (1..=t_len).rev() {
            for &v in &inst.rv_nodes {
                let mut best = f64::NEG_INFINITY;
                for &k in &outs[v] {
                    let to = inst.rv_edges[k].1;
                    let val = remaining[t - 1][k] + value[t + 1][to];
                    if val > best + 1e-12 {
                        best = val;
                        choice[t][v] = k;
                    }
                }
                value[t][v] = if best.is_finite() { best } else { 0.0 };
            }
        }
        let mut v = start;
        for t in 1..=t_len {
            let k = choice[t][v];
            if k == usize::MAX {
                break;
            }
            z[t - 1][k] += 1;
            remaining[t - 1][k] -= 1.0;
            v = inst.rv_edges[k].1;
        }
    }
    z
}

/// One truck's route and onboard loads.
#[derive(Clone, Debug, PartialEq)]
struct TruckPath {
    /// Edge taken at each step.
    edges: Vec<usize>,
    /// Load carried along that edge.
    loads: Vec<usize>,
    /// Own net unload at each step, at the node the truck is on.
    nets: Vec<i64>,
}

/// Best route for one truck starting on `start` with `load`, when the other
/// trucks already unload `others[t - 1][i]` in net.
fn best_truck_path(inst: &NetworkInstance, vfa: &ValueFunctionApprox, outs: &[Vec<usize>], start: usize, load: usize, others: &[Vec<i64>]) -> Option<(TruckPath, f64)> {
    let t_len = inst.horizon;
    let n = inst.num_nodes();
    let cap = inst.rv_capacity.max(0) as usize;
    let ybar = (vfa.ybar as i64).min(inst.max_load_action.max(0));
    let loads = cap + 1;
    let idx = |v: usize, l: usize| v * loads + l;
    // best[t][(v, l)]: least cost from arriving at v at step t with load l.
    let mut best = vec![vec![f64::INFINITY; n * loads]; t_len + 2];
    let mut choice = vec![vec![(usize::MAX, usize::MAX); n * loads]; t_len + 1];
    best[t_len + 1].iter_mut().for_each(|v| *v = 0.0);
    for t in (1..=t_len).rev() {
        for v in 0..n {
            if outs[v].is_empty() {
                continue;
            }
            // Cheapest edge out of v for each load after acting.
            let mut leave = vec![(f64::INFINITY, usize::MAX); loads];
            for (l2, slot) in leave.iter_mut().enumerate() {
                for &k in &outs[v] {
                    let to = inst.rv_edges[k].1;
                    let c = inst.rv_move_cost[t - 1][k].to_f64() + best[t + 1][if t == t_len { 0 } else { idx(to, l2) }];
                    if c < slot.0 {
                        *slot = (c, k);
                    }
                }
            }
            let acts = vfa.slot(v, t).is_some();
            let (r, base) = if acts {
                let o = others[t - 1][v];
                (inst.load_cost[t - 1][v].to_f64(), Some((o, vfa.evaluate(v, t, o as f64).ok()?)))
            } else {
                (0.0, None)
            };
            for l in 0..loads {
                let mut cur = (f64::INFINITY, (usize::MAX, usize::MAX));
                for l2 in 0..loads {
                    if leave[l2].1 == usize::MAX {
                        continue;
                    }
                    let net = l as i64 - l2 as i64;
                    let act = match base {
                        None if net != 0 => continue,
                        None => 0.0,
                        Some((o, v0)) => {
                            if net.abs() > ybar || (o + net).abs() > ybar {
                                continue;
                            }
                            r * net.abs() as f64 + vfa.evaluate(v, t, (o + net) as f64).ok()? - v0
                        }
                    };
                    let c = act + leave[l2].0;
                    if c < cur.0 {
                        cur = (c, (l2, leave[l2].1));
                    }
                }
                best[t][idx(v, l)] = cur.0;
                choice[t][idx(v, l)] = cur.1;
            }
        }
    }
    let mut v = inst.rv_edges[start].1;
    let mut l = load;
    if l > cap || !best[1][idx(v, l)].is_finite() {
        return None;
    }
    let cost = best[1][idx(v, l)];
    let mut path = TruckPath { edges: Vec::with_capacity(t_len), loads: Vec::with_capacity(t_len), nets: Vec::with_capacity(t_len) };
    for t in 1..=t_len {
        let (l2, k) = choice[t][idx(v, l)];
        path.edges.push(k);
        path.loads.push(l2);
        path.nets.push(l as i64 - l2 as i64);
        v = inst.rv_edges[k].1;
        l = l2;
    }
    Some((path, cost))
}

/// Integer stage-1 plan from trucks routed one at a time, each an exact
/// shortest path over (step, node, onboard load) given the others, in
/// rounds until no truck can improve. Exact for a single truck.
///
/// Returns `None` when some truck cannot move for the whole horizon or the
/// starting loads do not fit.
pub fn solve_truck_dp(inst: &NetworkInstance, vfa: &ValueFunctionApprox, max_rounds: usize) -> Option<RebalancePlan> {
    let t_len = inst.horizon;
    let e = inst.rv_edges.len();
    let n = inst.num_nodes();
    let cap = inst.rv_capacity.max(0);
    let (outs, _) = edges_out(inst);
    let mut trucks = Vec::new();
    for k in 0..e {
        let mut onboard = inst.initial_onboard[k];
        for _ in 0..inst.initial_rv[k] {
            let l = onboard.min(cap);
            onboard -= l;
            trucks.push((k, l as usize));
        }
        if onboard > 0 {
            return None;
        }
    }
    let mut paths: Vec<Option<TruckPath>> = vec![None; trucks.len()];
    let mut nets = vec![vec![0i64; n]; t_len];
    for round in 0..max_rounds.max(1) {
        let mut changed = false;
        for (j, &(start, load)) in trucks.iter().enumerate() {
            let mut v = inst.rv_edges[start].1;
            if let Some(p) = &paths[j] {
                for t in 1..=t_len {
                    nets[t - 1][v] -= p.nets[t - 1];
                    v = inst.rv_edges[p.edges[t - 1]].1;
                }
            }
            let (p, _) = best_truck_path(inst, vfa, &outs, start, load, &nets)?;
            let mut v = inst.rv_edges[start].1;
            for t in 1..=t_len {
                nets[t - 1][v] += p.nets[t - 1];
                v = inst.rv_edges[p.edges[t - 1]].1;
            }
            if paths[j].as_ref() != Some(&p) {
                changed = true;
            }
            paths[j] = Some(p);
        }
        if !changed || (round > 0 && trucks.len() == 1) {
            break;
        }
    }
    let mut plan = RebalancePlan::empty(inst);
    plan.z = vec![vec![0.0; e]; t_len];
    plan.b = vec![vec![0.0; e]; t_len];
    for p in paths.iter().flatten() {
        for t in 0..t_len {
            plan.z[t][p.edges[t]] += 1.0;
            plan.b[t][p.edges[t]] += p.loads[t] as f64;
        }
    }
    for t in 0..t_len {
        for i in 0..n {
            let x = nets[t][i];
            if x > 0 {
                plan.y_minus[t][i] = x as f64;
            } else if x < 0 {
                plan.y_plus[t][i] = (-x) as f64;
            }
        }
    }
    Some(plan)
}

struct RouteRounding<'a> {
    inst: &'a NetworkInstance,
    vfa: &'a ValueFunctionApprox,
    model: &'a Stage1Model,
}

impl Heuristic for RouteRounding<'_> {
    fn propose(&mut self, _lp: &LinearProgram, x: &[f64]) -> Option<Vec<f64>> {
        let frac: Vec<Vec<f64>> = self.model.z.iter().map(|r| r.iter().map(|&c| x[c]).collect()).collect();
        let z = round_routes(self.inst, &frac);
        let (plan, _) = solve_fixed_z_flow(self.inst, self.vfa, &z).ok()?;
        Some(self.model.x_from_plan(&plan, self.vfa))
    }
}

#[derive(Clone, Debug)]
pub struct Stage1Options {
    pub rel_gap: f64,
    pub time_limit: Option<Duration>,
    pub node_limit: usize,
    /// Starting basis (from a previous solve of a model with the same shape).
    pub warm_basis: Option<Basis>,
    pub heuristic: bool,
    pub encoding: Encoding,
    /// Use [`solve_truck_dp`] in integer mode: as the answer for a single
    /// truck, as the starting incumbent otherwise.
    pub truck_dp: bool,
}

impl Default for Stage1Options {
    fn default() -> Self {
        Stage1Options {
            rel_gap: 5e-3,
            time_limit: None,
            node_limit: usize::MAX,
            warm_basis: None,
            heuristic: true,
            encoding: Encoding::Segments,
            truck_dp: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Stage1Result {
    pub plan: RebalancePlan,
    /// Recomputed `Σ c z + Σ r (y⁺ + y⁻) + V̄(y; θ)`.
    pub objective: f64,
    /// Lower bound proven by the solver.
    pub bound: f64,
    pub status: MipStatus,
    pub nodes: usize,
    pub seconds: f64,
    pub hit_limit: bool,
    pub basis: Option<Basis>,
    /// Slots acting without a truck present.
    pub truckless_actions: Vec<(usize, usize)>,
    pub num_vars: usize,
    pub num_integer: usize,
    pub num_rows: usize,
}

/// Solves the first stage in the given mode.
///
/// Integral-route results are finished by the fixed-route flow, so onboard
/// flows and actions are exactly integral; every result gets the opposing-action
/// cleanup (no simultaneous loading and unloading).
pub fn solve_stage1(inst: &NetworkInstance, vfa: &ValueFunctionApprox, mode: &Stage1Mode, opts: &Stage1Options) -> Result<Stage1Result, Stage1Error> {
    let start = Instant::now();
    let model = build_stage1_encoded(inst, vfa, mode, opts.encoding);
    let use_dp = opts.truck_dp && *mode == Stage1Mode::Integer && opts.encoding == Encoding::Segments;
    let dp_plan = if use_dp { solve_truck_dp(inst, vfa, 20) } else { None };
    if inst.fleet_size <= 1 {
        if let Some(plan) = dp_plan.clone() {
            let objective = stage1_objective(inst, vfa, &plan);
            let truckless_actions = actions_without_truck(inst, &plan, 1e-6);
            return Ok(Stage1Result {
                plan,
                objective,
                bound: objective,
                status: MipStatus::Optimal,
                nodes: 0,
                seconds: start.elapsed().as_secs_f64(),
                hit_limit: false,
                basis: opts.warm_basis.clone(),
                truckless_actions,
                num_vars: model.lp.num_vars(),
                num_integer: model.lp.num_integer(),
                num_rows: model.lp.num_rows(),
            });
        }
    }
    let lp = &model.lp;
    let (x, bound, status, nodes, hit_limit, basis) = if mode.has_integers() {
        let mip_opts = MipOptions {
            rel_gap: opts.rel_gap,
            time_limit: opts.time_limit,
            node_limit: opts.node_limit,
            root_basis: opts.warm_basis.clone(),
            incumbent: dp_plan.as_ref().map(|p| model.x_from_plan(p, vfa)),
            ..MipOptions::default()
        };
        let mut heur = RouteRounding { inst, vfa, model: &model };
        let h: Option<&mut dyn Heuristic> = if opts.heuristic && model.encoding == Encoding::Segments { Some(&mut heur) } else { None };
        let sol = solve_mip_with(lp, &mip_opts, h);
        match sol.status {
            MipStatus::Infeasible => return Err(Stage1Error::Infeasible),
            MipStatus::Unbounded => return Err(Stage1Error::Unbounded),
            MipStatus::NoSolution => return Err(Stage1Error::NoSolution),
            _ => {}
        }
        (sol.x, sol.best_bound, sol.status, sol.nodes, sol.hit_limit, sol.root_basis)
    } else {
        let sol = solve_lp_from(lp, opts.warm_basis.as_ref());
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => {
                return Err(if matches!(mode, Stage1Mode::FixedZ(_)) { Stage1Error::BadFixedZ } else { Stage1Error::Infeasible })
            }
            LpStatus::Unbounded => return Err(Stage1Error::Unbounded),
            s => return Err(Stage1Error::Solver(format!("{s:?}"))),
        }
        (sol.x, sol.objective, MipStatus::Optimal, 0, false, sol.basis)
    };
    let mut plan = model.plan_from_x(inst, &x);
    let routes_integral = plan.z.iter().flatten().all(|v| (v - v.round()).abs() <= 1e-6);
    if matches!(mode, Stage1Mode::Integer) && model.encoding == Encoding::Segments && routes_integral {
        let z: Vec<Vec<i64>> = plan.z.iter().map(|r| r.iter().map(|v| v.round() as i64).collect()).collect();
        if let Ok((p, obj)) = solve_fixed_z_flow(inst, vfa, &z) {
            if obj <= stage1_objective(inst, vfa, &{
                let mut q = plan.clone();
                cancel_opposing_actions(&mut q);
                q
            }) + 1e-6
            {
                plan = p;
            }
        }
    }
    for m in [&mut plan.z, &mut plan.b, &mut plan.y_plus, &mut plan.y_minus] {
        for v in m.iter_mut().flatten() {
            if (*v - v.round()).abs() <= 1e-9 {
                *v = v.round();
            }
            if *v < 0.0 && *v > -1e-9 {
                *v = 0.0;
            }
        }
    }
    cancel_opposing_actions(&mut plan);
    let objective = stage1_objective(inst, vfa, &plan);
    let truckless_actions = actions_without_truck(inst, &plan, 1e-6);
    Ok(Stage1Result {
        plan,
        objective,
        bound,
        status,
        nodes,
        seconds: start.elapsed().as_secs_f64(),
        hit_limit,
        basis,
        truckless_actions,
        num_vars: lp.num_vars(),
        num_integer: lp.num_integer(),
        num_rows: lp.num_rows(),
    })
}

/// Net action per slot uniform on `{-ȳ, ..., ȳ}`; no routing.
pub fn random_plan_with<R: Rng>(inst: &NetworkInstance, rng: &mut R) -> RebalancePlan {
    let mut plan = RebalancePlan::empty(inst);
    let ybar = inst.max_load_action;
    let actions = inst.action_nodes();
    for t in 1..=inst.horizon {
        for &i in &actions {
            let net = rng.random_range(-ybar..=ybar);
            if net > 0 {
                plan.y_minus[t - 1][i] = net as f64;
            } else {
                plan.y_plus[t - 1][i] = (-net) as f64;
            }
        }
    }
    plan
}

pub fn random_plan(inst: &NetworkInstance, seed: u64) -> RebalancePlan {
    random_plan_with(inst, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// The full deterministic problem in one model: routes, onboard flows,
/// actions, fill levels and served journeys.
#[derive(Clone, Debug)]
pub struct DrrpModel {
    pub lp: LinearProgram,
    pub z: Vec<Vec<usize>>,
    pub b: Vec<Vec<usize>>,
    pub y_plus: BTreeMap<(usize, usize), usize>,
    pub y_minus: BTreeMap<(usize, usize), usize>,
    pub fill: BTreeMap<(usize, usize), usize>,
    /// Served-journey columns per tuple, one per distinct value.
    pub served: Vec<(crate::model::DemandTuple, usize)>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DrrpError {
    #[error("in-progress arrivals overflow a station with no recourse")]
    Infeasible,
    #[error("no integer solution found within the limits")]
    NoSolution,
    #[error("solver failure: {0}")]
    Solver(String),
}

pub fn build_drrp(inst: &NetworkInstance, scen: &DemandScenario) -> DrrpModel {
    let t_len = inst.horizon;
    let e = inst.rv_edges.len();
    let fleet = inst.fleet_size as f64;
    let bbar = inst.rv_capacity as f64;
    let ybar = inst.max_load_action as f64;
    let mut lp = LinearProgram::new();
    let mut z = vec![vec![0; e]; t_len];
    let mut b = vec![vec![0; e]; t_len];
    for t in 1..=t_len {
        for k in 0..e {
            z[t - 1][k] = lp.add_int_var(inst.rv_move_cost[t - 1][k].to_f64(), 0.0, fleet);
            b[t - 1][k] = lp.add_var(0.0, 0.0, bbar * fleet);
        }
    }
    let mut y_plus = BTreeMap::new();
    let mut y_minus = BTreeMap::new();
    for t in 1..=t_len {
        for i in inst.action_nodes() {
            let r = inst.load_cost[t - 1][i].to_f64();
            y_plus.insert((t, i), lp.add_int_var(r, 0.0, ybar));
            y_minus.insert((t, i), lp.add_int_var(r, 0.0, ybar));
        }
    }
    let mut fill = BTreeMap::new();
    for t in 1..=t_len {
        for &i in &inst.sv_nodes {
            fill.insert((t, i), lp.add_var(0.0, 0.0, inst.station_capacity[i] as f64));
        }
    }
    let mut served = Vec::new();
    for (d, values) in &scen.values {
        let mut groups: BTreeMap<Money, usize> = BTreeMap::new();
        for v in values {
            *groups.entry(*v).or_insert(0) += 1;
        }
        for (v, count) in groups.into_iter().rev() {
            served.push((*d, lp.add_int_var(-v.to_f64(), 0.0, count as f64)));
        }
    }
    lp.objective_offset = scen.total_value().to_f64();

    let mut station_rows: BTreeMap<(usize, usize), (Vec<(usize, f64)>, f64)> = BTreeMap::new();
    for t in 1..=t_len {
        for &i in &inst.sv_nodes {
            let mut row = vec![(fill[&(t, i)], 1.0)];
            let mut rhs = 0.0;
            if t == 1 {
                rhs += inst.initial_fill[i] as f64;
            } else {
                row.push((fill[&(t - 1, i)], -1.0));
            }
            if let Some(&c) = y_minus.get(&(t, i)) {
                row.push((c, -1.0));
                row.push((y_plus[&(t, i)], 1.0));
            }
            station_rows.insert((t, i), (row, rhs));
        }
    }
    for trip in &inst.in_progress {
        let a = trip.arrival();
        if a >= 1 && a as usize <= t_len {
            station_rows.get_mut(&(a as usize, trip.to)).expect("station").1 += trip.count as f64;
        }
    }
    for &(d, c) in &served {
        station_rows.get_mut(&(d.t, d.i)).expect("station").0.push((c, 1.0));
        if d.arrival() <= t_len {
            station_rows.get_mut(&(d.arrival(), d.j)).expect("station").0.push((c, -1.0));
        }
    }
    for ((t, i), (row, rhs)) in station_rows {
        let r = lp.add_row(&row, RowSense::Eq, rhs);
        lp.set_row_name(r, format!("fill_{i}_{t}"));
    }
    let (out, inc) = edges_out(inst);
    for t in 1..=t_len {
        for &v in &inst.rv_nodes {
            let mut zr: Vec<(usize, f64)> = out[v].iter().map(|&k| (z[t - 1][k], 1.0)).collect();
            let mut br: Vec<(usize, f64)> = out[v].iter().map(|&k| (b[t - 1][k], 1.0)).collect();
            let (mut zrhs, mut brhs) = (0.0, 0.0);
            for &k in &inc[v] {
                if t == 1 {
                    zrhs += inst.initial_rv[k] as f64;
                    brhs += inst.initial_onboard[k] as f64;
                } else {
                    zr.push((z[t - 2][k], -1.0));
                    br.push((b[t - 2][k], -1.0));
                }
            }
            if let Some(&ym) = y_minus.get(&(t, v)) {
                br.push((y_plus[&(t, v)], -1.0));
                br.push((ym, 1.0));
            }
            lp.add_row(&zr, RowSense::Eq, zrhs);
            lp.add_row(&br, RowSense::Eq, brhs);
        }
        for k in 0..e {
            lp.add_row(&[(b[t - 1][k], 1.0), (z[t - 1][k], -bbar)], RowSense::Le, 0.0);
        }
    }
    DrrpModel { lp, z, b, y_plus, y_minus, fill, served }
}

impl DrrpModel {
    pub fn plan_from_x(&self, inst: &NetworkInstance, x: &[f64]) -> RebalancePlan {
        let mut plan = RebalancePlan::empty(inst);
        plan.z = self.z.iter().map(|r| r.iter().map(|&c| x[c]).collect()).collect();
        plan.b = self.b.iter().map(|r| r.iter().map(|&c| x[c]).collect()).collect();
        for (&(t, i), &c) in &self.y_plus {
            plan.y_plus[t - 1][i] = x[c];
            plan.y_minus[t - 1][i] = x[self.y_minus[&(t, i)]];
        }
        plan
    }

    pub fn served_total(&self, x: &[f64]) -> f64 {
        self.served.iter().map(|&(_, c)| x[c]).sum()
    }
}

/// LP rounding heuristic for the monolithic model: fix routes to a rounded
/// path decomposition and solve the remaining LP, which is a network
/// problem and so has integral vertices.
struct DrrpRounding<'a> {
    inst: &'a NetworkInstance,
    model: &'a DrrpModel,
}

impl Heuristic for DrrpRounding<'_> {
    fn propose(&mut self, _lp: &LinearProgram, x: &[f64]) -> Option<Vec<f64>> {
        let frac: Vec<Vec<f64>> = self.model.z.iter().map(|r| r.iter().map(|&c| x[c]).collect()).collect();
        self.model.fix_routes(&round_routes(self.inst, &frac)).map(|(x, _)| x)
    }
}

impl DrrpModel {
    /// Best point with the routes fixed; what remains is a network problem,
    /// so the optimal vertex is integral.
    pub fn fix_routes(&self, z: &[Vec<i64>]) -> Option<(Vec<f64>, f64)> {
        let mut fixed = self.lp.clone();
        for (t, row) in self.z.iter().enumerate() {
            for (k, &c) in row.iter().enumerate() {
                fixed.lower[c] = z[t][k] as f64;
                fixed.upper[c] = z[t][k] as f64;
            }
        }
        fixed.integer.iter_mut().for_each(|v| *v = false);
        let sol = lpkit::solve_lp(&fixed);
        (sol.status == LpStatus::Optimal)
            .then(|| (sol.x.iter().map(|v| if (v - v.round()).abs() < 1e-7 { v.round() } else { *v }).collect(), sol.objective))
    }
}

/// Distinct integer routes visited while learning slopes against the one
/// scenario `scen`.
fn learned_routes(inst: &NetworkInstance, scen: &DemandScenario, iterations: usize) -> Vec<Vec<Vec<i64>>> {
    let top = scen.values.values().flatten().map(|v| v.to_f64()).fold(1e-3, f64::max);
    let mut vfa = ValueFunctionApprox::zero(inst, 10.0 * top);
    let mut seen: Vec<Vec<Vec<i64>>> = Vec::new();
    for n in 1..=iterations {
        let Some(plan) = solve_truck_dp(inst, &vfa, 20) else { break };
        if plan.has_routing() {
            let z: Vec<Vec<i64>> = plan.z.iter().map(|row| row.iter().map(|v| v.round() as i64).collect()).collect();
            if !seen.contains(&z) {
                seen.push(z);
            }
        }
        let Ok(sol) = crate::stage2::solve_stage2(inst, scen, &plan) else { break };
        let zeta = crate::spar::update_direction(crate::spar::UpdateRule::Marginal, &vfa, &plan, &sol.duals, &sol.marginals);
        vfa = vfa.step(&zeta, StepSizeRule::Harmonic2040.alpha(n));
    }
    seen
}

#[derive(Clone, Debug)]
pub struct DrrpResult {
    pub plan: RebalancePlan,
    pub objective: f64,
    pub bound: f64,
    pub lp_objective: f64,
    pub status: MipStatus,
    pub served: f64,
    pub lp_seconds: f64,
    pub mip_seconds: f64,
    pub nodes: usize,
    pub hit_limit: bool,
}

/// Solves the deterministic problem for one scenario: the LP relaxation
/// (timed on its own) and then the MILP.
pub fn solve_deterministic_drrp(inst: &NetworkInstance, scen: &DemandScenario, rel_gap: f64, time_limit: Option<Duration>) -> Result<DrrpResult, DrrpError> {
    let model = build_drrp(inst, scen);
    let t0 = Instant::now();
    let relax = solve_lp_from(&model.lp, None);
    let lp_seconds = t0.elapsed().as_secs_f64();
    match relax.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(DrrpError::Infeasible),
        s => return Err(DrrpError::Solver(format!("{s:?}"))),
    }
    let t1 = Instant::now();
    let incumbent = learned_routes(inst, scen, 30)
        .iter()
        .filter_map(|z| model.fix_routes(z))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(x, _)| x);
    let opts = MipOptions { rel_gap, time_limit, root_basis: relax.basis.clone(), incumbent, ..MipOptions::default() };
    let mut heur = DrrpRounding { inst, model: &model };
    let sol = solve_mip_with(&model.lp, &opts, Some(&mut heur));
    let mip_seconds = t1.elapsed().as_secs_f64();
    if !sol.has_solution() {
        return Err(if sol.status == MipStatus::Infeasible { DrrpError::Infeasible } else { DrrpError::NoSolution });
    }
    let mut plan = model.plan_from_x(inst, &sol.x);
    for m in [&mut plan.z, &mut plan.b, &mut plan.y_plus, &mut plan.y_minus] {
        for v in m.iter_mut().flatten() {
            *v = v.round();
        }
    }
    cancel_opposing_actions(&mut plan);
    Ok(DrrpResult {
        served: model.served_total(&sol.x),
        plan,
        objective: sol.objective,
        bound: sol.best_bound,
        lp_objective: relax.objective,
        status: sol.status,
        lp_seconds,
        mip_seconds,
        nodes: sol.nodes,
        hit_limit: sol.hit_limit,
    })
}

/// Model size `(integer vars, continuous vars, rows)` of the epigraph
/// encoding over a complete truck graph with `stations` nodes.
pub fn complete_graph_model_size(stations: usize, horizon: usize, ybar: i64) -> (usize, usize, usize) {
    let n = stations;
    let rv_edges: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let e = rv_edges.len();
    let fleet = ybar.max(1);
    let mut initial_rv = vec![0; e];
    initial_rv[0] = fleet;
    let inst = NetworkInstance {
        node_labels: (0..n).map(|i| i.to_string()).collect(),
        sv_nodes: (0..n).collect(),
        sv_edges: rv_edges.clone(),
        rv_nodes: (0..n).collect(),
        rv_edges,
        horizon,
        max_duration: 0,
        station_capacity: vec![0; n],
        rv_capacity: 1,
        max_load_action: ybar,
        fleet_size: fleet,
        rv_move_cost: vec![vec![Money::ZERO; e]; horizon],
        load_cost: vec![vec![Money::ZERO; n]; horizon],
        penalty: Money::ZERO,
        initial_fill: vec![0; n],
        initial_rv,
        initial_onboard: vec![0; e],
        in_progress: vec![],
    };
    let vfa = ValueFunctionApprox::zero(&inst, 1.0);
    let m = build_stage1_encoded(&inst, &vfa, &Stage1Mode::Integer, Encoding::Epigraph);
    let ints = m.lp.num_integer();
    (ints, m.lp.num_vars() - ints, m.lp.num_rows())
}

/// Writes `t,i,j,z,b` rows for every edge with a truck or load.
pub fn write_routes_csv<W: Write>(out: &mut W, inst: &NetworkInstance, plan: &RebalancePlan) -> std::io::Result<()> {
    writeln!(out, "t,i,j,z,b")?;
    if !plan.has_routing() {
        return Ok(());
    }
    for t in 1..=inst.horizon {
        for (k, &(a, b)) in inst.rv_edges.iter().enumerate() {
            let (zv, bv) = (plan.z[t - 1][k], plan.b[t - 1][k]);
            if zv != 0.0 || bv != 0.0 {
                writeln!(out, "{t},{},{},{zv},{bv}", inst.node_labels[a], inst.node_labels[b])?;
            }
        }
    }
    Ok(())
}

/// Writes `t,i,y_plus,y_minus` rows for every action slot.
pub fn write_actions_csv<W: Write>(out: &mut W, inst: &NetworkInstance, plan: &RebalancePlan) -> std::io::Result<()> {
    writeln!(out, "t,i,y_plus,y_minus")?;
    for t in 1..=inst.horizon {
        for i in inst.action_nodes() {
            writeln!(out, "{t},{},{},{}", inst.node_labels[i], plan.y_plus[t - 1][i], plan.y_minus[t - 1][i])?;
        }
    }
    Ok(())
}

/// Reads the two plan CSVs back. Labels are resolved against the instance.
pub fn read_plan_csv(inst: &NetworkInstance, routes: Option<&str>, actions: &str) -> Result<RebalancePlan, String> {
    let label = |s: &str| inst.node_labels.iter().position(|l| l == s).ok_or_else(|| format!("unknown node {s}"));
    let mut plan = RebalancePlan::empty(inst);
    let mut rdr = csv::Reader::from_reader(actions.as_bytes());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let t: usize = rec.get(0).and_then(|v| v.parse().ok()).ok_or("bad t")?;
        let i = label(rec.get(1).ok_or("missing i")?)?;
        if t == 0 || t > inst.horizon {
            return Err(format!("step {t} out of range"));
        }
        plan.y_plus[t - 1][i] = rec.get(2).and_then(|v| v.parse().ok()).ok_or("bad y_plus")?;
        plan.y_minus[t - 1][i] = rec.get(3).and_then(|v| v.parse().ok()).ok_or("bad y_minus")?;
    }
    if let Some(routes) = routes {
        let e = inst.rv_edges.len();
        plan.z = vec![vec![0.0; e]; inst.horizon];
        plan.b = vec![vec![0.0; e]; inst.horizon];
        let mut rdr = csv::Reader::from_reader(routes.as_bytes());
        for rec in rdr.records() {
            let rec = rec.map_err(|e| e.to_string())?;
            let t: usize = rec.get(0).and_then(|v| v.parse().ok()).ok_or("bad t")?;
            let (a, b) = (label(rec.get(1).ok_or("missing i")?)?, label(rec.get(2).ok_or("missing j")?)?);
            let k = inst.rv_edge_index(a, b).ok_or("unknown edge")?;
            if t == 0 || t > inst.horizon {
                return Err(format!("step {t} out of range"));
            }
            plan.z[t - 1][k] = rec.get(3).and_then(|v| v.parse().ok()).ok_or("bad z")?;
            plan.b[t - 1][k] = rec.get(4).and_then(|v| v.parse().ok()).ok_or("bad b")?;
        }
    }
    Ok(plan)
}
