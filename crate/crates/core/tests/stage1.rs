mod common;

use common::small_instance;
use drrp::stage1::{
    complete_graph_model_size, random_plan, read_plan_csv, solve_deterministic_drrp, solve_fixed_z_flow, solve_stage1, solve_truck_dp, write_actions_csv,
    write_routes_csv, Stage1Mode, Stage1Options,
};
use drrp::vf::ValueFunctionApprox;
use drrp::{check_plan, DemandScenario, DemandTuple, Money, NetworkInstance, RebalancePlan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vfa(rng: &mut ChaCha8Rng, inst: &NetworkInstance) -> ValueFunctionApprox {
    let mut vfa = ValueFunctionApprox::zero(inst, 10.0);
    for s in &mut vfa.slopes {
        for v in s.iter_mut() {
            *v = rng.random_range(-3.0..3.0);
        }
        s.sort_by(f64::total_cmp);
    }
    vfa
}

fn exact() -> Stage1Options {
    Stage1Options { rel_gap: 1e-9, ..Default::default() }
}

/// `Σ c z + Σ r (y⁺ + y⁻) + Σ V̄`, written out directly.
fn objective_by_hand(inst: &NetworkInstance, vfa: &ValueFunctionApprox, plan: &RebalancePlan) -> f64 {
    let mut total = 0.0;
    for (t, row) in plan.z.iter().enumerate() {
        total += row.iter().zip(&inst.rv_move_cost[t]).map(|(z, c)| z * c.to_f64()).sum::<f64>();
    }
    for t in 0..inst.horizon {
        for i in 0..inst.num_nodes() {
            total += (plan.y_plus[t][i] + plan.y_minus[t][i]) * inst.load_cost[t][i].to_f64();
        }
    }
    for &(t, i) in &vfa.slots {
        let x = plan.y_minus[t - 1][i] - plan.y_plus[t - 1][i];
        let s = vfa.slopes_at(i, t).unwrap();
        let yb = vfa.ybar as f64;
        let pieces: f64 = (0..s.len()).map(|k| {
            let (lo, hi) = (k as f64 - yb, k as f64 - yb + 1.0);
            let covered = if x >= 0.0 { (x.min(hi) - lo.max(0.0)).max(0.0) } else { -(hi.min(0.0) - lo.max(x)).max(0.0) };
            covered * s[k]
        }).sum();
        total += pieces;
    }
    total
}

#[test]
fn truck_dp_agrees_with_branch_and_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..15 {
        let inst = small_instance(&mut rng, 3, 3, 1);
        let vfa = random_vfa(&mut rng, &inst);
        let dp = solve_truck_dp(&inst, &vfa, 20).expect("single truck plan");
        let bb = solve_stage1(&inst, &vfa, &Stage1Mode::Integer, &Stage1Options { truck_dp: false, ..exact() }).unwrap();
        let dp_obj = objective_by_hand(&inst, &vfa, &dp);
        assert!((dp_obj - bb.objective).abs() < 1e-6, "dp {dp_obj} vs b&b {}", bb.objective);
        assert!(check_plan(&inst, &dp, true, 1e-9).is_empty());
    }
}

#[test]
fn fixed_routes_give_integral_actions() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..100 {
        let fleet = rng.random_range(1..=2);
        let inst = small_instance(&mut rng, 3, 3, fleet);
        let routes = solve_stage1(&inst, &random_vfa(&mut rng, &inst), &Stage1Mode::Integer, &Stage1Options::default()).unwrap();
        let z: Vec<Vec<i64>> = routes.plan.z.iter().map(|r| r.iter().map(|v| v.round() as i64).collect()).collect();
        let vfa = random_vfa(&mut rng, &inst);
        let lp = solve_stage1(&inst, &vfa, &Stage1Mode::FixedZ(z.clone()), &Stage1Options::default()).unwrap();
        assert!(lp.plan.is_integral(1e-6), "fractional fixed-route solution");
        let (flow_plan, flow_obj) = solve_fixed_z_flow(&inst, &vfa, &z).unwrap();
        assert!((flow_obj - lp.objective).abs() < 1e-6, "flow {flow_obj} vs lp {}", lp.objective);
        assert!(check_plan(&inst, &flow_plan, true, 1e-9).is_empty());
    }
}

#[test]
fn relaxations_are_ordered() {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    for _ in 0..10 {
        let inst = small_instance(&mut rng, 3, 4, 2);
        let vfa = random_vfa(&mut rng, &inst);
        let relaxed = solve_stage1(&inst, &vfa, &Stage1Mode::Relaxed, &exact()).unwrap();
        let half = solve_stage1(&inst, &vfa, &Stage1Mode::HalfInteger, &exact()).unwrap();
        let full = solve_stage1(&inst, &vfa, &Stage1Mode::Integer, &exact()).unwrap();
        assert!(relaxed.objective <= half.objective + 1e-6);
        assert!(half.objective <= full.objective + 1e-6);
        assert!(full.plan.is_integral(1e-9));
    }
}

#[test]
fn objective_decomposes_and_actions_never_oppose() {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    for _ in 0..20 {
        let fleet = rng.random_range(1..=2);
        let inst = small_instance(&mut rng, 3, 3, fleet);
        let vfa = random_vfa(&mut rng, &inst);
        for mode in [Stage1Mode::Relaxed, Stage1Mode::HalfInteger, Stage1Mode::Integer] {
            let res = solve_stage1(&inst, &vfa, &mode, &Stage1Options::default()).unwrap();
            assert!((res.objective - objective_by_hand(&inst, &vfa, &res.plan)).abs() < 1e-6);
            for t in 0..inst.horizon {
                for i in 0..inst.num_nodes() {
                    assert!(res.plan.y_plus[t][i].min(res.plan.y_minus[t][i]) <= 1e-9);
                }
            }
            if mode == Stage1Mode::Relaxed {
                assert!((res.bound - res.objective).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn idle_plan_costs_nothing_when_everything_is_free() {
    let mut rng = ChaCha8Rng::seed_from_u64(59);
    let mut inst = small_instance(&mut rng, 3, 3, 1);
    for row in inst.rv_move_cost.iter_mut().chain(inst.load_cost.iter_mut()) {
        row.iter_mut().for_each(|c| *c = Money::ZERO);
    }
    let res = solve_stage1(&inst, &ValueFunctionApprox::zero(&inst, 10.0), &Stage1Mode::Integer, &exact()).unwrap();
    assert_eq!(res.objective, 0.0);
}

#[test]
fn no_trucks_means_no_actions() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let inst = small_instance(&mut rng, 3, 3, 0);
    let vfa = random_vfa(&mut rng, &inst);
    let res = solve_stage1(&inst, &vfa, &Stage1Mode::Integer, &exact()).unwrap();
    assert!(res.plan.y_plus.iter().chain(&res.plan.y_minus).flatten().all(|v| *v == 0.0));
    assert!(res.plan.z.iter().flatten().all(|v| *v == 0.0));
}

#[test]
fn strongly_negative_slope_draws_an_unload() {
    let mut rng = ChaCha8Rng::seed_from_u64(67);
    let mut inst = small_instance(&mut rng, 2, 2, 1);
    inst.initial_rv = vec![0, 0, 0, 1];
    inst.initial_onboard = vec![0, 0, 0, 1];
    inst.rv_capacity = 2;
    let mut vfa = ValueFunctionApprox::zero(&inst, 10.0);
    let ybar = vfa.ybar;
    let k = vfa.slot(1, 1).unwrap();
    vfa.slopes[k][..=ybar].iter_mut().for_each(|s| *s = -5.0);
    for mode in [Stage1Mode::Relaxed, Stage1Mode::Integer] {
        let res = solve_stage1(&inst, &vfa, &mode, &exact()).unwrap();
        assert!(res.plan.y_minus[0][1] >= 1.0 - 1e-9, "{mode:?}: no unload at the cheap slot");
    }
}

#[test]
fn model_sizes_match_the_reference_counts() {
    assert_eq!(complete_graph_model_size(16, 12, 10), (3456, 3456, 7488));
    assert_eq!(complete_graph_model_size(9, 12, 10).0, 1188);
}

#[test]
fn random_actions_are_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let mut inst = small_instance(&mut rng, 5, 4, 1);
    inst.max_load_action = 2;
    let mut counts = [0usize; 5];
    let mut draws = 0;
    let mut seed = 0;
    while draws < 100_000 {
        let plan = random_plan(&inst, seed);
        for t in 0..inst.horizon {
            for i in 0..5 {
                counts[(plan.net_unload(i, t + 1) + 2.0) as usize] += 1;
                draws += 1;
            }
        }
        seed += 1;
    }
    let expected = draws as f64 / 5.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99th percentile of chi-square with 4 degrees of freedom.
    assert!(chi2 < 13.277, "chi2 {chi2}, counts {counts:?}");
    assert_eq!(random_plan(&inst, 9), random_plan(&inst, 9));
    inst.max_load_action = 0;
    assert_eq!(random_plan(&inst, 3), RebalancePlan::empty(&inst));
}

#[test]
fn every_single_coordinate_perturbation_is_caught() {
    let mut rng = ChaCha8Rng::seed_from_u64(73);
    let inst = small_instance(&mut rng, 3, 3, 2);
    let vfa = random_vfa(&mut rng, &inst);
    let plan = solve_stage1(&inst, &vfa, &Stage1Mode::Integer, &Stage1Options::default()).unwrap().plan;
    assert!(check_plan(&inst, &plan, true, 1e-9).is_empty());
    for _ in 0..1000 {
        let mut p = plan.clone();
        let delta = [-1.0, 1.0, 0.5, -2.0][rng.random_range(0..4)];
        let m = match rng.random_range(0..4) {
            0 => &mut p.z,
            1 => &mut p.b,
            2 => &mut p.y_plus,
            _ => &mut p.y_minus,
        };
        let t = rng.random_range(0..m.len());
        let k = rng.random_range(0..m[t].len());
        m[t][k] += delta;
        assert!(!check_plan(&inst, &p, true, 1e-9).is_empty(), "missed {delta} at [{t}][{k}]");
    }
}

#[test]
fn plan_csv_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(79);
    let inst = small_instance(&mut rng, 3, 3, 2);
    let plan = solve_stage1(&inst, &random_vfa(&mut rng, &inst), &Stage1Mode::Integer, &Stage1Options::default()).unwrap().plan;
    let (mut routes, mut actions) = (Vec::new(), Vec::new());
    write_routes_csv(&mut routes, &inst, &plan).unwrap();
    write_actions_csv(&mut actions, &inst, &plan).unwrap();
    let back = read_plan_csv(&inst, Some(std::str::from_utf8(&routes).unwrap()), std::str::from_utf8(&actions).unwrap()).unwrap();
    assert_eq!(back, plan);
}

/// Truck at the middle of a three-node line, a vehicle at one end and a
/// customer at the other end one step later.
fn line_example() -> (NetworkInstance, DemandScenario) {
    let rv_edges = vec![(0, 0), (1, 1), (2, 2), (0, 1), (1, 0), (1, 2), (2, 1)];
    let e = rv_edges.len();
    let inst = NetworkInstance {
        node_labels: vec!["1".into(), "2".into(), "3".into()],
        sv_nodes: vec![0, 1, 2],
        sv_edges: vec![(2, 0)],
        rv_nodes: vec![0, 1, 2],
        rv_edges,
        horizon: 3,
        max_duration: 1,
        station_capacity: vec![2; 3],
        rv_capacity: 1,
        max_load_action: 1,
        fleet_size: 1,
        rv_move_cost: vec![vec![Money::ZERO; e]; 3],
        load_cost: vec![vec![Money::ZERO; 3]; 3],
        penalty: Money::from_f64(2.0),
        initial_fill: vec![1, 0, 0],
        initial_rv: vec![0, 1, 0, 0, 0, 0, 0],
        initial_onboard: vec![0; e],
        in_progress: vec![],
    };
    let mut scen = DemandScenario::default();
    scen.insert(DemandTuple::new(2, 0, 2, 1), vec![Money::from_f64(1.0)]);
    (inst, scen)
}

#[test]
fn late_vehicle_cannot_be_delivered() {
    let (inst, scen) = line_example();
    assert!(inst.validate().is_empty());
    let res = solve_deterministic_drrp(&inst, &scen, 1e-9, None).unwrap();
    assert_eq!(res.served, 0.0);
    assert!((res.lp_objective - res.objective).abs() < 1e-9);
}

#[test]
fn deterministic_problem_without_demand_does_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(83);
    let inst = small_instance(&mut rng, 3, 3, 1);
    let res = solve_deterministic_drrp(&inst, &DemandScenario::default(), 1e-9, None).unwrap();
    assert!(res.objective.abs() < 1e-9);
    assert!(res.plan.y_plus.iter().chain(&res.plan.y_minus).flatten().all(|v| *v == 0.0));
}
