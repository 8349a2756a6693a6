use std::time::Duration;

use drrp::grid::{generate_grid_instance, GridGenParams};
use drrp::scenario::{sample_stream, Stream};
use drrp::spar::{run, run_with_hook, Method, SparConfig, SparRunReport};
use drrp::stage2::solve_stage2_any;
use drrp::{check_plan, DemandModel, NetworkInstance, RebalancePlan};

fn small_grid(seed: u64) -> (NetworkInstance, DemandModel) {
    generate_grid_instance(&GridGenParams { grid_side: 2, brackets: 3, rng_seed: seed, ..Default::default() }).unwrap()
}

fn quick(method: Method, seed: u64, n_max: usize) -> SparConfig {
    SparConfig { n_max, final_time_limit: Some(Duration::from_secs(20)), keep_theta_history: true, ..SparConfig::new(method, seed) }
}

/// Everything but wall-clock timings.
fn fingerprint(r: &SparRunReport) -> String {
    let iters: Vec<_> = r.iterations.iter().map(|i| (i.iteration, i.alpha, i.stage1_objective, i.stage2_cost, i.service_rate, i.integral)).collect();
    format!("{:?}|{:?}|{:?}|{:?}|{:?}", r.plan, iters, r.theta_history, r.vfa, r.last_iterate)
}

#[test]
fn baseline_does_nothing() {
    let (inst, model) = small_grid(1);
    let r = run(&inst, &model, &SparConfig::new(Method::Na, 1)).unwrap();
    assert_eq!(r.plan, RebalancePlan::empty(&inst));
    assert!(r.iterations.is_empty());
}

#[test]
fn no_demand_leaves_theta_at_zero() {
    let (inst, mut model) = small_grid(2);
    model.rates.clear();
    let r = run(&inst, &model, &quick(Method::M2I, 2, 10)).unwrap();
    assert!(r.vfa.slopes.iter().flatten().all(|s| *s == 0.0));
    assert!(r.plan.y_plus.iter().chain(&r.plan.y_minus).flatten().all(|v| *v == 0.0));
}

#[test]
fn reruns_are_identical() {
    let (inst, model) = small_grid(3);
    for method in [Method::M2I, Method::M2R, Method::M3] {
        let cfg = quick(method, 9, 8);
        assert_eq!(fingerprint(&run(&inst, &model, &cfg).unwrap()), fingerprint(&run(&inst, &model, &cfg).unwrap()), "{method}");
    }
}

#[test]
fn history_has_one_admissible_theta_per_iteration() {
    let (inst, model) = small_grid(4);
    for method in [Method::M2I, Method::M2HI, Method::M3] {
        let r = run(&inst, &model, &quick(method, 4, 12)).unwrap();
        assert_eq!(r.iterations.len(), 12);
        assert_eq!(r.theta_history.len(), 12);
        assert!(r.theta_history.iter().all(|v| v.is_admissible(1e-9)));
        assert!(check_plan(&inst, &r.plan, true, 1e-6).is_empty(), "{method}: final plan infeasible");
    }
}

#[test]
fn iterations_consume_the_shared_scenario_stream() {
    let (inst, model) = small_grid(5);
    for method in [Method::M2I, Method::M3] {
        let r = run(&inst, &model, &quick(method, 11, 6)).unwrap();
        let scen = sample_stream(&model, 11, Stream::Scenario, 6);
        let cost = solve_stage2_any(&inst, &scen, r.last_iterate.as_ref().unwrap()).unwrap().cost;
        assert_eq!(cost, r.iterations[5].stage2_cost, "{method}");
    }
}

#[test]
fn stopping_early_keeps_an_integer_plan() {
    let (inst, model) = small_grid(6);
    let r = run_with_hook(&inst, &model, &quick(Method::M2I, 6, 50), &mut |its| its.len() >= 10).unwrap();
    assert_eq!(r.iterations.len(), 10);
    assert!(r.iterations.iter().all(|i| i.integral));
    assert!(check_plan(&inst, &r.plan, true, 1e-9).is_empty());
}

#[test]
fn zero_wall_limit_stops_after_one_iteration() {
    let (inst, model) = small_grid(7);
    let cfg = SparConfig { wall_limit: Some(Duration::ZERO), ..quick(Method::M2I, 7, 50) };
    assert_eq!(run(&inst, &model, &cfg).unwrap().iterations.len(), 1);
    assert_eq!(run(&inst, &model, &quick(Method::M2I, 7, 5)).unwrap().iterations.len(), 5);
}

#[test]
fn deterministic_method_solves_once() {
    let (inst, model) = small_grid(8);
    let r = run(&inst, &model, &quick(Method::M1, 8, 1)).unwrap();
    assert!(r.iterations.is_empty());
    assert!(r.final_solve.is_some());
    assert!(check_plan(&inst, &r.plan, true, 1e-9).is_empty());
}

#[test]
fn method_names_round_trip() {
    for m in Method::ALL {
        assert_eq!(m.name().parse::<Method>().unwrap(), m);
    }
    assert!("M4".parse::<Method>().is_err());
}
