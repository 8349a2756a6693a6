//! Exact integer min-cost flow.
//!
//! Conservation convention: for every node `n`,
//! `outflow(n) - inflow(n) = supply[n]`. Costs are integers so optimality
//! certificates are exact. Potentials `pi` satisfy the reduced-cost criterion
//! `cost - pi[tail] + pi[head] >= 0` on arcs with residual capacity and
//! `<= 0` on arcs carrying flow.

mod dimacs;
mod duals;
mod ssp;

pub use dimacs::{read_dimacs, write_dimacs, DimacsError};
pub use duals::{extract_bound_duals, BoundDuals, DualError};
pub use ssp::{solve_flow, solve_flow_rooted};

/// A directed arc with integer capacity and unit cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Arc {
    pub tail: usize,
    pub head: usize,
    pub capacity: i64,
    pub cost: i64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FlowProblem {
    pub supplies: Vec<i64>,
    pub arcs: Vec<Arc>,
}

impl FlowProblem {
    pub fn new(num_nodes: usize) -> Self {
        FlowProblem { supplies: vec![0; num_nodes], arcs: Vec::new() }
    }

    pub fn num_nodes(&self) -> usize {
        self.supplies.len()
    }

    pub fn add_node(&mut self, supply: i64) -> usize {
        self.supplies.push(supply);
        self.supplies.len() - 1
    }

    pub fn add_arc(&mut self, tail: usize, head: usize, capacity: i64, cost: i64) -> usize {
        self.arcs.push(Arc { tail, head, capacity, cost });
        self.arcs.len() - 1
    }

    /// Structural problems, if any: bad indices, negative capacities, unbalanced supplies.
    pub fn check(&self) -> Result<(), String> {
        let n = self.num_nodes();
        for (k, a) in self.arcs.iter().enumerate() {
            if a.tail >= n || a.head >= n {
                return Err(format!("arc {k} references a node outside 0..{n}"));
            }
            if a.capacity < 0 {
                return Err(format!("arc {k} has negative capacity {}", a.capacity));
            }
        }
        let total: i64 = self.supplies.iter().sum();
        if total != 0 {
            return Err(format!("supplies sum to {total}, expected 0"));
        }
        Ok(())
    }

    pub fn flow_cost(&self, flows: &[i64]) -> i64 {
        self.arcs.iter().zip(flows).map(|(a, &x)| a.cost * x).sum()
    }

    /// Largest conservation violation of `flows` (0 means conserving).
    pub fn conservation_residual(&self, flows: &[i64]) -> i64 {
        let mut net = self.supplies.clone();
        for (a, &x) in self.arcs.iter().zip(flows) {
            net[a.tail] -= x;
            net[a.head] += x;
        }
        net.iter().map(|v| v.abs()).max().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowStatus {
    Optimal,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowSolution {
    pub status: FlowStatus,
    pub flows: Vec<i64>,
    pub cost: i64,
    pub potentials: Vec<i64>,
}

impl FlowSolution {
    pub fn reduced_cost(&self, problem: &FlowProblem, arc: usize) -> i64 {
        let a = &problem.arcs[arc];
        a.cost - self.potentials[a.tail] + self.potentials[a.head]
    }

    /// Verifies bounds, conservation and the reduced-cost criterion.
    pub fn is_certified_optimal(&self, problem: &FlowProblem) -> bool {
        if self.status != FlowStatus::Optimal || problem.conservation_residual(&self.flows) != 0 {
            return false;
        }
        problem.arcs.iter().enumerate().all(|(k, a)| {
            let x = self.flows[k];
            let rc = self.reduced_cost(problem, k);
            (0..=a.capacity).contains(&x) && (x == a.capacity || rc >= 0) && (x == 0 || rc <= 0)
        })
    }
}
