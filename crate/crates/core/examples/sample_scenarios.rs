//! Draws demand scenarios from a grid model and compares them with the
//! rounded expected scenario.
//!
//! `cargo run --example sample_scenarios -- [draws] [seed]`

use drrp::grid::{generate_grid_instance, GridGenParams};
use drrp::scenario::{sample_stream, Stream};
use drrp::{expected_scenario, Money};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let draws: u64 = args.first().map_or(1000, |s| s.parse().expect("draws"));
    let seed: u64 = args.get(1).map_or(1, |s| s.parse().expect("seed"));
    let (_, model) = generate_grid_instance(&GridGenParams { rng_seed: seed, ..Default::default() }).expect("instance");
    let (mut journeys, mut value) = (0i64, Money::ZERO);
    for n in 0..draws {
        let scen = sample_stream(&model, seed, Stream::Scenario, n);
        journeys += scen.total_demand();
        value = value + scen.total_value();
    }
    let expected = expected_scenario(&model);
    println!("nominal rate total   {:.2}", model.total_rate());
    println!("mean sampled demand  {:.2} over {draws} draws", journeys as f64 / draws as f64);
    println!("mean journey value   {:.4}", value.to_f64() / journeys.max(1) as f64);
    println!("rounded expectation  {} journeys on {} tuples", expected.total_demand(), expected.values.len());
}
