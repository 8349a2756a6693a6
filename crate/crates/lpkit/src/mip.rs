use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::{Duration, Instant};

use crate::simplex::{Basis, Engine, LpStatus, Prepared};
use crate::{LinearProgram, INT_TOL};

#[derive(Clone, Debug)]
pub struct MipOptions {
    pub rel_gap: f64,
    pub abs_gap: f64,
    pub time_limit: Option<Duration>,
    pub node_limit: usize,
    /// Starting basis for the root relaxation.
    pub root_basis: Option<Basis>,
    /// A known feasible point; ignored if it is infeasible or fractional.
    pub incumbent: Option<Vec<f64>>,
    /// Call the heuristic every this many nodes (the root always gets a call).
    pub heuristic_every: usize,
}

impl Default for MipOptions {
    fn default() -> Self {
        MipOptions {
            rel_gap: 1e-4,
            abs_gap: 1e-9,
            time_limit: None,
            node_limit: usize::MAX,
            root_basis: None,
            incumbent: None,
            heuristic_every: 50,
        }
    }
}

/// Turns a fractional relaxation point into a candidate integral solution.
pub trait Heuristic {
    fn propose(&mut self, lp: &LinearProgram, x: &[f64]) -> Option<Vec<f64>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MipStatus {
    /// Incumbent proven within the requested gap.
    Optimal,
    /// A limit was hit; the incumbent is feasible but the gap is not closed.
    Feasible,
    Infeasible,
    Unbounded,
    /// A limit was hit before any incumbent was found.
    NoSolution,
}

#[derive(Clone, Debug)]
pub struct MipSolution {
    pub status: MipStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub best_bound: f64,
    pub gap: f64,
    pub root_objective: f64,
    pub root_basis: Option<Basis>,
    pub nodes: usize,
    pub lp_iterations: usize,
    pub hit_limit: bool,
}

impl MipSolution {
    pub fn has_solution(&self) -> bool {
        matches!(self.status, MipStatus::Optimal | MipStatus::Feasible)
    }
}

/// An engine able to solve [`LinearProgram`]s with integrality marks.
pub trait MilpSolver {
    fn name(&self) -> &str;
    fn solve(&mut self, lp: &LinearProgram, opts: &MipOptions, heuristic: Option<&mut dyn Heuristic>) -> MipSolution;
}

/// The in-crate branch and bound.
#[derive(Clone, Copy, Debug, Default)]
pub struct BuiltinSolver;

impl MilpSolver for BuiltinSolver {
    fn name(&self) -> &str {
        "builtin"
    }

    fn solve(&mut self, lp: &LinearProgram, opts: &MipOptions, heuristic: Option<&mut dyn Heuristic>) -> MipSolution {
        solve_mip_with(lp, opts, heuristic)
    }
}

pub fn solve_mip(lp: &LinearProgram, opts: &MipOptions) -> MipSolution {
    solve_mip_with(lp, opts, None)
}

struct Node {
    bound: f64,
    id: usize,
    changes: Rc<Vec<(usize, f64, f64)>>,
    basis: Rc<Basis>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Max-heap order: smallest bound first, then lowest id.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(other.id.cmp(&self.id))
    }
}

struct Incumbent {
    x: Vec<f64>,
    objective: f64,
}

fn most_fractional(lp: &LinearProgram, x: &[f64]) -> Option<usize> {
    let mut best = None;
    let mut best_frac = INT_TOL;
    for j in 0..lp.num_vars() {
        if !lp.integer[j] {
            continue;
        }
        let f = (x[j] - x[j].floor()).min(x[j].ceil() - x[j]);
        if f > best_frac {
            best_frac = f;
            best = Some(j);
        }
    }
    best
}

fn accept(lp: &LinearProgram, candidate: &[f64]) -> Option<Incumbent> {
    if candidate.len() != lp.num_vars() || candidate.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x: Vec<f64> = candidate
        .iter()
        .enumerate()
        .map(|(j, &v)| if lp.integer[j] { v.round() } else { v })
        .collect();
    if lp.max_fractionality(candidate) > INT_TOL || lp.max_violation(&x) > 1e-6 {
        return None;
    }
    let objective = lp.objective_value(&x);
    Some(Incumbent { x, objective })
}

pub fn solve_mip_with(lp: &LinearProgram, opts: &MipOptions, mut heuristic: Option<&mut dyn Heuristic>) -> MipSolution {
    let start = Instant::now();
    let n = lp.num_vars();
    let mut out = MipSolution {
        status: MipStatus::Infeasible,
        x: vec![0.0; n],
        objective: f64::INFINITY,
        best_bound: f64::INFINITY,
        gap: f64::INFINITY,
        root_objective: f64::NAN,
        root_basis: None,
        nodes: 0,
        lp_iterations: 0,
        hit_limit: false,
    };
    if lp.validate().is_err() {
        return out;
    }
    let prepared = Prepared::new(lp);
    let mut engine = Engine::new(&prepared);
    if let Some(b) = &opts.root_basis {
        engine.load_basis(b);
    }
    let offset = lp.objective_offset;
    let root_status = engine.run();
    out.lp_iterations = engine.iterations;
    match root_status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible | LpStatus::Invalid => return out,
        LpStatus::Unbounded => {
            out.status = MipStatus::Unbounded;
            return out;
        }
        LpStatus::IterationLimit => {
            out.status = MipStatus::NoSolution;
            out.hit_limit = true;
            return out;
        }
    }
    let root_obj = engine.objective() + offset;
    out.root_objective = root_obj;
    out.root_basis = Some(engine.basis());

    let mut best: Option<Incumbent> = opts.incumbent.as_deref().and_then(|c| accept(lp, c));
    let offer = |best: &mut Option<Incumbent>, cand: Incumbent| {
        if best.as_ref().is_none_or(|b| cand.objective < b.objective - 1e-12) {
            *best = Some(cand);
        }
    };
    let gap_of = |inc: f64, lb: f64| (inc - lb).max(0.0) / inc.abs().max(1e-9);
    let cutoff = |best: &Option<Incumbent>| match best {
        Some(b) => b.objective - opts.abs_gap.max(opts.rel_gap * b.objective.abs()),
        None => f64::INFINITY,
    };

    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    let mut dive: Option<Node> = None;
    let mut next_id = 1usize;
    let mut current_basis: Option<Rc<Basis>> = None;
    let mut exhausted = true;
    let mut processed = 0usize;

    // The root is handled as an already-solved node with no bound changes.
    let mut pending_root = Some(Node {
        bound: root_obj,
        id: 0,
        changes: Rc::new(Vec::new()),
        basis: Rc::new(engine.basis()),
    });
    current_basis = pending_root.as_ref().map(|r| r.basis.clone()).or(current_basis);

    loop {
        let lb = heap.peek().map_or(f64::INFINITY, |t| t.bound).min(dive.as_ref().map_or(f64::INFINITY, |d| d.bound));
        if let Some(b) = &best {
            if pending_root.is_none() && (b.objective - lb <= opts.abs_gap || gap_of(b.objective, lb) <= opts.rel_gap) {
                break;
            }
        }
        let node = match (pending_root.take(), dive.take()) {
            (Some(r), _) => r,
            (None, Some(d)) => d,
            (None, None) => match heap.pop() {
                Some(nd) => nd,
                None => break,
            },
        };
        if node.bound >= cutoff(&best) {
            continue;
        }
        let is_root = node.id == 0;
        if !is_root {
            if opts.time_limit.is_some_and(|t| start.elapsed() >= t) || out.nodes >= opts.node_limit {
                heap.push(node);
                exhausted = false;
                out.hit_limit = true;
                break;
            }
            engine.lower.copy_from_slice(&prepared.lower);
            engine.upper.copy_from_slice(&prepared.upper);
            for &(j, lo, hi) in node.changes.iter() {
                engine.lower[j] = lo;
                engine.upper[j] = hi;
            }
            if !current_basis.as_ref().is_some_and(|c| Rc::ptr_eq(c, &node.basis)) {
                engine.load_basis(&node.basis);
            }
            let status = engine.run();
            out.nodes += 1;
            current_basis = None;
            match status {
                LpStatus::Optimal => {}
                LpStatus::IterationLimit => {
                    exhausted = false;
                    continue;
                }
                _ => continue,
            }
        }
        processed += 1;
        let obj = engine.objective() + offset;
        if obj >= cutoff(&best) {
            continue;
        }
        let x = engine.x().to_vec();
        let Some(j) = most_fractional(lp, &x) else {
            if let Some(inc) = accept(lp, &x) {
                offer(&mut best, inc);
            }
            continue;
        };
        if let Some(h) = heuristic.as_deref_mut() {
            if is_root || processed % opts.heuristic_every.max(1) == 0 {
                if let Some(inc) = h.propose(lp, &x).and_then(|c| accept(lp, &c)) {
                    offer(&mut best, inc);
                }
                if obj >= cutoff(&best) {
                    continue;
                }
            }
        }
        let basis = Rc::new(engine.basis());
        current_basis = Some(basis.clone());
        let v = x[j];
        let mut down = (*node.changes).clone();
        down.push((j, engine.lower[j], v.floor()));
        let mut up = (*node.changes).clone();
        up.push((j, v.ceil(), engine.upper[j]));
        let down = Node { bound: obj, id: next_id, changes: Rc::new(down), basis: basis.clone() };
        let up = Node { bound: obj, id: next_id + 1, changes: Rc::new(up), basis };
        next_id += 2;
        if best.is_none() {
            let (near, far) = if v - v.floor() <= 0.5 { (down, up) } else { (up, down) };
            dive = Some(near);
            heap.push(far);
        } else {
            heap.push(down);
            heap.push(up);
        }
    }
    out.lp_iterations = engine.iterations;

    if let Some(d) = dive.take() {
        heap.push(d);
    }
    let open_bound = heap.iter().map(|nd| nd.bound).fold(f64::INFINITY, f64::min);
    match best {
        Some(inc) => {
            let lb = open_bound.min(inc.objective).max(root_obj.min(inc.objective));
            out.best_bound = lb;
            out.gap = gap_of(inc.objective, lb);
            out.status = if out.gap <= opts.rel_gap || inc.objective - lb <= opts.abs_gap || (exhausted && !out.hit_limit) {
                MipStatus::Optimal
            } else {
                MipStatus::Feasible
            };
            out.objective = inc.objective;
            out.x = inc.x;
        }
        None => {
            out.best_bound = if heap.is_empty() && exhausted { f64::INFINITY } else { open_bound.max(root_obj) };
            out.status = if heap.is_empty() && exhausted { MipStatus::Infeasible } else { MipStatus::NoSolution };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::RowSense;

    #[test]
    fn knapsack_picks_the_heavier_item() {
        let mut lp = LinearProgram::new();
        let x = lp.add_int_var(-3.0, 0.0, 1.0);
        let y = lp.add_int_var(-2.0, 0.0, 1.0);
        lp.add_row(&[(x, 1.0), (y, 1.0)], RowSense::Le, 1.0);
        let s = solve_mip(&lp, &MipOptions::default());
        assert_eq!(s.status, MipStatus::Optimal);
        assert!((s.objective + 3.0).abs() < 1e-9);
    }

    #[test]
    fn integral_root_needs_no_branching() {
        let mut lp = LinearProgram::new();
        let x = lp.add_int_var(1.0, 0.0, 10.0);
        lp.add_row(&[(x, 1.0)], RowSense::Ge, 4.0);
        let s = solve_mip(&lp, &MipOptions::default());
        assert_eq!(s.nodes, 0);
        assert!((s.x[0] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn branching_closes_a_fractional_root() {
        // max x + y s.t. 2x + 2y <= 3 over integers: LP 1.5, MIP 1.
        let mut lp = LinearProgram::new();
        let x = lp.add_int_var(-1.0, 0.0, 5.0);
        let y = lp.add_int_var(-1.0, 0.0, 5.0);
        lp.add_row(&[(x, 2.0), (y, 2.0)], RowSense::Le, 3.0);
        let s = solve_mip(&lp, &MipOptions::default());
        assert_eq!(s.status, MipStatus::Optimal);
        assert!((s.objective + 1.0).abs() < 1e-9);
        assert!((s.root_objective + 1.5).abs() < 1e-9);
        assert!(s.nodes > 0);
    }

    #[test]
    fn infeasible_integer_program() {
        let mut lp = LinearProgram::new();
        let x = lp.add_int_var(0.0, 0.0, 5.0);
        lp.add_row(&[(x, 2.0)], RowSense::Eq, 3.0);
        let s = solve_mip(&lp, &MipOptions::default());
        assert_eq!(s.status, MipStatus::Infeasible, "{s:?}");
    }
}
