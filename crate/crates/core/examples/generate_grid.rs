//! Builds a clustered-demand grid instance and writes it as JSON.
//!
//! `cargo run --example generate_grid -- [side] [trucks] [seed] [out.json]`

use drrp::grid::{generate_grid_instance, GridGenParams};
use drrp::io::write_instance;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let side: usize = args.first().map_or(3, |s| s.parse().expect("side"));
    let trucks: i64 = args.get(1).map_or(1, |s| s.parse().expect("trucks"));
    let seed: u64 = args.get(2).map_or(0, |s| s.parse().expect("seed"));
    let params = GridGenParams { grid_side: side, rv_count: trucks, rng_seed: seed, ..Default::default() };
    let (inst, model) = generate_grid_instance(&params).expect("valid parameters");
    println!(
        "{} stations, {} steps, {} trucks, {} shared vehicles, {:.1} expected journeys ({:.2} per step)",
        inst.sv_nodes.len(),
        inst.horizon,
        inst.fleet_size,
        inst.total_initial_fill(),
        model.total_rate(),
        model.total_rate() / inst.horizon as f64
    );
    let mut busiest: Vec<_> = model.rates.iter().collect();
    busiest.sort_by(|a, b| b.1.total_cmp(a.1));
    for (d, r) in busiest.iter().take(5) {
        println!("  {} -> {} at step {} taking {} steps: {r}", inst.node_labels[d.i], inst.node_labels[d.j], d.t, d.k);
    }
    if let Some(path) = args.get(3) {
        write_instance(path.as_ref(), &inst, &model).expect("write");
        println!("wrote {path}");
    }
}
