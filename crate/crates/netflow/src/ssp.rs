use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::{FlowProblem, FlowSolution, FlowStatus};

const INF: i64 = i64::MAX / 4;

/// Residual graph: arc `k` of the problem owns edges `2k` (forward) and `2k+1` (backward).
struct Residual {
    to: Vec<usize>,
    from: Vec<usize>,
    cap: Vec<i64>,
    cost: Vec<i64>,
    out_start: Vec<usize>,
    out_edges: Vec<usize>,
}

impl Residual {
    fn new(p: &FlowProblem) -> Self {
        let n = p.num_nodes();
        let m = p.arcs.len();
        let mut to = Vec::with_capacity(2 * m);
        let mut from = Vec::with_capacity(2 * m);
        let mut cap = Vec::with_capacity(2 * m);
        let mut cost = Vec::with_capacity(2 * m);
        for a in &p.arcs {
            to.extend([a.head, a.tail]);
            from.extend([a.tail, a.head]);
            cap.extend([a.capacity, 0]);
            cost.extend([a.cost, -a.cost]);
        }
        let (out_start, out_edges) = bucket(n, &from);
        Residual { to, from, cap, cost, out_start, out_edges }
    }

    fn push(&mut self, e: usize, amount: i64) {
        self.cap[e] -= amount;
        self.cap[e ^ 1] += amount;
    }

    fn out(&self, v: usize) -> &[usize] {
        &self.out_edges[self.out_start[v]..self.out_start[v + 1]]
    }
}

/// Groups edge ids by `key[e]` into a CSR layout, preserving edge order.
fn bucket(n: usize, key: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut start = vec![0usize; n + 1];
    for &k in key {
        start[k + 1] += 1;
    }
    for v in 0..n {
        start[v + 1] += start[v];
    }
    let mut fill = start.clone();
    let mut edges = vec![0usize; key.len()];
    for (e, &k) in key.iter().enumerate() {
        edges[fill[k]] = e;
        fill[k] += 1;
    }
    (start, edges)
}

/// Successive shortest paths with Dijkstra on reduced costs.
///
/// Returned potentials are shortest residual distances to a virtual node
/// reachable from every node at zero cost.
pub fn solve_flow(problem: &FlowProblem) -> FlowSolution {
    solve(problem, None)
}

/// As [`solve_flow`], but potentials are shortest residual distances to
/// `root` (nodes that cannot reach `root` are charged a large constant).
pub fn solve_flow_rooted(problem: &FlowProblem, root: usize) -> FlowSolution {
    assert!(root < problem.num_nodes(), "root {root} out of range");
    solve(problem, Some(root))
}

fn solve(problem: &FlowProblem, root: Option<usize>) -> FlowSolution {
    let n = problem.num_nodes();
    let m = problem.arcs.len();
    if let Err(msg) = problem.check() {
        assert!(!msg.contains("references") && !msg.contains("negative"), "{msg}");
        return infeasible(n, m);
    }
    let mut g = Residual::new(problem);
    let mut excess = problem.supplies.clone();
    for (k, a) in problem.arcs.iter().enumerate() {
        if a.cost < 0 && a.capacity > 0 {
            g.push(2 * k, a.capacity);
            excess[a.tail] -= a.capacity;
            excess[a.head] += a.capacity;
        }
    }

    let mut pot = vec![0i64; n];
    let mut dist = vec![INF; n];
    let mut pred = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    loop {
        if excess.iter().all(|&e| e <= 0) {
            break;
        }
        dist.fill(INF);
        pred.fill(usize::MAX);
        done.fill(false);
        heap.clear();
        for v in 0..n {
            if excess[v] > 0 {
                dist[v] = 0;
                heap.push(Reverse((0i64, v)));
            }
        }
        let mut target = None;
        while let Some(Reverse((d, u))) = heap.pop() {
            if done[u] || d > dist[u] {
                continue;
            }
            done[u] = true;
            if excess[u] < 0 {
                target = Some(u);
                break;
            }
            for &e in g.out(u) {
                if g.cap[e] <= 0 {
                    continue;
                }
                let v = g.to[e];
                let nd = d + g.cost[e] + pot[u] - pot[v];
                if nd < dist[v] {
                    dist[v] = nd;
                    pred[v] = e;
                    heap.push(Reverse((nd, v)));
                }
            }
        }
        let Some(t) = target else {
            return infeasible(n, m);
        };
        let reach = dist[t];
        for v in 0..n {
            pot[v] += dist[v].min(reach);
        }
        let mut amount = -excess[t];
        let mut v = t;
        while pred[v] != usize::MAX {
            let e = pred[v];
            amount = amount.min(g.cap[e]);
            v = g.from[e];
        }
        amount = amount.min(excess[v]);
        let source = v;
        let mut v = t;
        while pred[v] != usize::MAX {
            let e = pred[v];
            g.push(e, amount);
            v = g.from[e];
        }
        excess[source] -= amount;
        excess[t] += amount;
    }

    let flows: Vec<i64> = (0..m).map(|k| g.cap[2 * k + 1]).collect();
    let cost = problem.flow_cost(&flows);
    let potentials = distance_potentials(problem, &g, &pot, root);
    FlowSolution { status: FlowStatus::Optimal, flows, cost, potentials }
}

fn infeasible(n: usize, m: usize) -> FlowSolution {
    FlowSolution { status: FlowStatus::Infeasible, flows: vec![0; m], cost: 0, potentials: vec![0; n] }
}

/// Shortest residual distance from every node to a virtual sink.
///
/// Every node `v` has a virtual arc to the sink of cost `kappa[v]`: zero for
/// all nodes when unrooted, zero for the root and a large constant otherwise.
fn distance_potentials(problem: &FlowProblem, g: &Residual, pot: &[i64], root: Option<usize>) -> Vec<i64> {
    let n = problem.num_nodes();
    let big = 1 + problem.arcs.iter().map(|a| a.cost.abs()).sum::<i64>();
    let kappa = |v: usize| match root {
        Some(r) if r != v => big,
        _ => 0,
    };
    let sink_pot = (0..n).map(|v| kappa(v) + pot[v]).min().unwrap_or(0);
    let (in_start, in_edges) = bucket(n, &g.to);
    let mut dist: Vec<i64> = (0..n).map(|v| kappa(v) + pot[v] - sink_pot).collect();
    let mut done = vec![false; n];
    let mut heap: BinaryHeap<Reverse<(i64, usize)>> = (0..n).map(|v| Reverse((dist[v], v))).collect();
    while let Some(Reverse((d, v))) = heap.pop() {
        if done[v] || d > dist[v] {
            continue;
        }
        done[v] = true;
        for &e in &in_edges[in_start[v]..in_start[v + 1]] {
            if g.cap[e] <= 0 {
                continue;
            }
            let u = g.from[e];
            let nd = d + g.cost[e] + pot[u] - pot[v];
            if nd < dist[u] {
                dist[u] = nd;
                heap.push(Reverse((nd, u)));
            }
        }
    }
    (0..n).map(|v| dist[v] - pot[v] + sink_pot).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_arc() {
        let mut p = FlowProblem::new(2);
        p.supplies = vec![1, -1];
        p.add_arc(0, 1, 1, 5);
        let s = solve_flow(&p);
        assert_eq!(s.status, FlowStatus::Optimal);
        assert_eq!(s.flows, vec![1]);
        assert_eq!(s.cost, 5);
        assert!(s.is_certified_optimal(&p));
    }

    #[test]
    fn negative_cycle_is_saturated() {
        let mut p = FlowProblem::new(3);
        p.add_arc(0, 1, 2, -10);
        p.add_arc(1, 2, 5, 1);
        p.add_arc(2, 0, 5, 1);
        let s = solve_flow(&p);
        assert_eq!(s.flows, vec![2, 2, 2]);
        assert_eq!(s.cost, -16);
        assert!(s.is_certified_optimal(&p));
    }

    #[test]
    fn unbalanced_is_infeasible() {
        let mut p = FlowProblem::new(2);
        p.supplies = vec![1, 0];
        p.add_arc(0, 1, 1, 0);
        assert_eq!(solve_flow(&p).status, FlowStatus::Infeasible);
    }

    #[test]
    fn capacity_shortfall_is_infeasible() {
        let mut p = FlowProblem::new(2);
        p.supplies = vec![3, -3];
        p.add_arc(0, 1, 2, 1);
        assert_eq!(solve_flow(&p).status, FlowStatus::Infeasible);
    }

    #[test]
    fn rooted_potentials_measure_distance_to_root() {
        let mut p = FlowProblem::new(3);
        p.add_arc(0, 1, 4, 3);
        p.add_arc(1, 2, 4, 2);
        let s = solve_flow_rooted(&p, 2);
        assert_eq!(s.potentials, vec![5, 2, 0]);
        assert!(s.is_certified_optimal(&p));
    }
}
