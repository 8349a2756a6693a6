//! Relaxation gap of the monolithic deterministic model on generated grids.
//!
//! `cargo run --release --example lp_gap -- [sizes,...] [fleets,...] [instances] [seconds]`

use std::time::Duration;

use drrp::bench::{lp_gap_study, LpGapConfig};

fn list<T: std::str::FromStr>(s: &str) -> Vec<T> {
    s.split(',').map(|v| v.parse().ok().expect("number")).collect()
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = LpGapConfig { sizes: vec![4], fleets: vec![1], instances: 3, ..LpGapConfig::default() };
    if let Some(s) = args.first() {
        cfg.sizes = list(s);
    }
    if let Some(s) = args.get(1) {
        cfg.fleets = list(s);
    }
    if let Some(s) = args.get(2) {
        cfg.instances = s.parse().expect("instances");
    }
    if let Some(s) = args.get(3) {
        cfg.time_limit = Some(Duration::from_secs_f64(s.parse().expect("seconds")));
    }
    let (rows, per_instance, errors) = lp_gap_study(&cfg);
    for r in &per_instance {
        println!(
            "{:>3} stations, fleet {}, seed {:>5}: MIP {:>8.3}  LP {:>8.3}  gap {:>5.1}%  demand {:>4}  {:.2}s{}",
            r.stations,
            r.fleet,
            r.instance_seed,
            r.mip_objective,
            r.lp_objective,
            100.0 * r.gap,
            r.expected_demand,
            r.mip_seconds,
            if r.hit_limit { "  (limit)" } else { "" }
        );
    }
    for r in &rows {
        println!(
            "{} stations, fleet {}: gap {:.1} ± {:.1}%  NA {:.1}%  optimized {:.1}%  over {} instances",
            r.stations, r.fleet, r.gap_mean_pct, r.gap_sd_pct, r.na_rate_mean_pct, r.optimized_rate_mean_pct, r.instances
        );
    }
    for e in errors {
        eprintln!("failed: {e}");
    }
}
