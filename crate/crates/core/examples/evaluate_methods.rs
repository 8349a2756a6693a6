//! Runs several planning methods on a batch of generated grids and prints
//! each method's service-rate gain over doing nothing.
//!
//! `cargo run --release --example evaluate_methods -- [stations] [fleet] [instances] [methods,...] [marginal|bound_dual] [final-solve seconds]`

use drrp::bench::{evaluate_plan, instance_seed, mean_sd};
use drrp::grid::{generate_grid_instance, GridGenParams};
use drrp::spar::{run, Method, SparConfig, UpdateRule};
use drrp::RebalancePlan;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let stations: usize = args.first().map(|s| s.parse().expect("stations")).unwrap_or(9);
    let fleet: i64 = args.get(1).map(|s| s.parse().expect("fleet")).unwrap_or(1);
    let instances: usize = args.get(2).map(|s| s.parse().expect("instances")).unwrap_or(3);
    let methods: Vec<Method> =
        args.get(3).map(|s| s.split(',').map(|m| m.parse().expect("method")).collect()).unwrap_or_else(|| vec![Method::M1, Method::M2I, Method::M3]);
    let update = args.get(4).map(|s| UpdateRule::parse(s).expect("update rule")).unwrap_or(UpdateRule::Marginal);
    for method in methods {
        let mut gains = Vec::new();
        for k in 0..instances {
            let seed = instance_seed(1, k);
            let (inst, model) = generate_grid_instance(&GridGenParams::for_size(stations, fleet, seed)).expect("instance");
            let mut cfg = SparConfig::new(method, seed);
            cfg.update = update;
            if let Some(secs) = args.get(5) {
                cfg.final_time_limit = Some(std::time::Duration::from_secs_f64(secs.parse().expect("seconds")));
            }
            let report = run(&inst, &model, &cfg).expect("run");
            let na = evaluate_plan(&inst, &model, &RebalancePlan::empty(&inst), 100, seed);
            let ev = evaluate_plan(&inst, &model, &report.plan, 100, seed);
            let gain = 100.0 * (ev.rate_mean - na.rate_mean);
            println!("{method} instance {k}: NA {:.2}%  plan {:.2}%  gain {gain:+.2} pp  ({:.1}s)", 100.0 * na.rate_mean, 100.0 * ev.rate_mean, report.seconds);
            gains.push(gain);
        }
        let (m, sd) = mean_sd(&gains);
        println!("{method}: mean gain {m:+.2} ± {sd:.2} pp over {instances} instances");
    }
}
