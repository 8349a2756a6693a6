//! Solves a small min-cost flow problem, prints potentials and bound
//! multipliers, and round-trips it through DIMACS text.
//!
//! `cargo run --example min_cost_flow`

use netflow::{extract_bound_duals, read_dimacs, solve_flow, write_dimacs, FlowProblem};

fn main() {
    // Two supply nodes, two demand nodes, a cheap capacitated shortcut.
    let mut p = FlowProblem::new(0);
    let s1 = p.add_node(3);
    let s2 = p.add_node(2);
    let hub = p.add_node(0);
    let d1 = p.add_node(-4);
    let d2 = p.add_node(-1);
    let arcs = [
        p.add_arc(s1, hub, 4, 2),
        p.add_arc(s2, hub, 2, 1),
        p.add_arc(hub, d1, 3, 1),
        p.add_arc(hub, d2, 5, 3),
        p.add_arc(s1, d1, 2, 6),
        p.add_arc(s2, d2, 1, 1),
    ];
    let sol = solve_flow(&p);
    println!("status {:?}, cost {}", sol.status, sol.cost);
    for (k, a) in p.arcs.iter().enumerate() {
        println!("  arc {k}: {} -> {}  flow {}/{}  cost {}", a.tail, a.head, sol.flows[k], a.capacity, a.cost);
    }
    println!("potentials {:?}", sol.potentials);
    for (k, d) in arcs.iter().zip(extract_bound_duals(&p, &sol, &arcs).expect("optimal")) {
        if d.upper > 0 || d.lower > 0 {
            println!("  arc {k}: upper-bound multiplier {}, lower-bound multiplier {}", d.upper, d.lower);
        }
    }
    let text = write_dimacs(&p, Some("example network"));
    print!("{text}");
    assert_eq!(solve_flow(&read_dimacs(&text).expect("parse")).cost, sol.cost);
}
