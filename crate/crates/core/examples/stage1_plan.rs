//! First-stage plans for a fixed set of slopes under each integrality mode.
//!
//! `cargo run --release --example stage1_plan -- [trucks] [seed]`

use drrp::grid::{generate_grid_instance, GridGenParams};
use drrp::stage1::{solve_stage1, Stage1Mode, Stage1Options};
use drrp::vf::ValueFunctionApprox;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let trucks: i64 = args.first().map_or(2, |s| s.parse().expect("trucks"));
    let seed: u64 = args.get(1).map_or(4, |s| s.parse().expect("seed"));
    let (inst, _) = generate_grid_instance(&GridGenParams { grid_side: 2, brackets: 3, rv_count: trucks, rng_seed: seed, ..Default::default() }).expect("instance");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vfa = ValueFunctionApprox::zero(&inst, 10.0);
    for s in &mut vfa.slopes {
        s.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        s.sort_by(f64::total_cmp);
    }
    for mode in [Stage1Mode::Relaxed, Stage1Mode::HalfInteger, Stage1Mode::Integer] {
        let r = solve_stage1(&inst, &vfa, &mode, &Stage1Options::default()).expect("solve");
        let moved: f64 = r.plan.y_plus.iter().flatten().sum();
        println!(
            "{mode:?}: objective {:.4}, bound {:.4}, {} nodes, {moved:.2} vehicles loaded, integral {}, {} integer of {} columns, {:.2}s",
            r.objective,
            r.bound,
            r.nodes,
            r.plan.is_integral(1e-6),
            r.num_integer,
            r.num_vars,
            r.seconds
        );
    }
}
