//! Learns a value function with one planning method on a generated grid and
//! compares the resulting plan with doing nothing.
//!
//! `cargo run --release --example spar_run -- [method] [stations] [fleet] [iterations] [seed]`

use drrp::bench::evaluate_plan;
use drrp::grid::{generate_grid_instance, GridGenParams};
use drrp::spar::{run, Method, SparConfig};
use drrp::RebalancePlan;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let method: Method = args.first().map(|s| s.parse().expect("method")).unwrap_or(Method::M2I);
    let stations: usize = args.get(1).map(|s| s.parse().expect("stations")).unwrap_or(9);
    let fleet: i64 = args.get(2).map(|s| s.parse().expect("fleet")).unwrap_or(1);
    let seed: u64 = args.get(4).map(|s| s.parse().expect("seed")).unwrap_or(1);
    let (inst, model) = generate_grid_instance(&GridGenParams::for_size(stations, fleet, seed)).expect("instance");
    let mut cfg = SparConfig::new(method, seed);
    if let Some(n) = args.get(3) {
        cfg.n_max = n.parse().expect("iterations");
    }
    let report = run(&inst, &model, &cfg).expect("run");
    for r in &report.iterations {
        println!("iter {:>3}  alpha {:.3}  stage1 {:>9.3}  stage2 {:>8.3}  rate {:.3}  {:.2}s", r.iteration, r.alpha, r.stage1_objective, r.stage2_cost, r.service_rate, r.stage1_seconds + r.stage2_seconds);
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
    let na = evaluate_plan(&inst, &model, &RebalancePlan::empty(&inst), 100, seed);
    let ev = evaluate_plan(&inst, &model, &report.plan, 100, seed);
    println!("{method}: rate {:.2}% vs NA {:.2}%  (gain {:+.2} pp), objective {:.3} vs {:.3}, {:.1}s", 100.0 * ev.rate_mean, 100.0 * na.rate_mean, 100.0 * (ev.rate_mean - na.rate_mean), ev.objective_mean, na.objective_mean, report.seconds);
}
