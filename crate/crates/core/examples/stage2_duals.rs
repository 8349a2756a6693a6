//! Solves the recourse problem for a random set of actions and shows the
//! prices it puts on each station and step.
//!
//! `cargo run --example stage2_duals -- [seed]`

use drrp::grid::{generate_grid_instance, GridGenParams};
use drrp::stage1::random_plan;
use drrp::stage2::{service_rate, solve_stage2};
use drrp::sample_scenario;

fn main() {
    let seed: u64 = std::env::args().nth(1).map_or(3, |s| s.parse().expect("seed"));
    let (inst, model) = generate_grid_instance(&GridGenParams { grid_side: 2, rng_seed: seed, ..Default::default() }).expect("instance");
    let scen = sample_scenario(&model, seed);
    let plan = random_plan(&inst, seed);
    let sol = solve_stage2(&inst, &scen, &plan).expect("recourse");
    println!(
        "cost {}, served {}/{} (rate {:.3}), penalty units {}",
        sol.cost,
        sol.total_served(),
        sol.total_demand,
        service_rate(&scen, &sol),
        sol.penalty_units()
    );
    println!("   t  node  net unload  fill  lambda+  lambda-  marginal");
    for (&(t, i), &(up, lo)) in &sol.duals {
        println!(
            "{t:>4}  {:>4}  {:>10}  {:>4}  {up:>7.3}  {lo:>7.3}  {:>8.3}",
            inst.node_labels[i],
            plan.net_unload(i, t),
            sol.fill[t - 1][i],
            sol.marginals[&(t, i)]
        );
    }
}
