//! One slot of a separable value function: evaluation, a raw update and
//! its projection back onto nondecreasing bounded slopes.

use std::collections::BTreeMap;

use drrp::vf::{StepSizeRule, ValueFunctionApprox};

fn main() {
    let mut vfa = ValueFunctionApprox::with_slots(vec![(1, 0)], 3, 5.0);
    vfa.slopes[0] = vec![-2.0, -1.0, -0.5, 0.0, 0.5, 2.0];
    for x in [-3.0, -1.5, 0.0, 1.0, 2.5, 3.0] {
        println!("V({x:>4}) = {:>6.3}", vfa.evaluate(0, 1, x).expect("in range"));
    }
    let rule = StepSizeRule::Harmonic2040;
    let mut v = vfa.clone();
    for n in 1..=5 {
        // A recourse solve that keeps reporting a high price for unloading the first vehicle.
        let zeta = BTreeMap::from([((1, 0, 0), -3.0), ((1, 0, -1), 1.0)]);
        v = v.step(&zeta, rule.alpha(n));
        println!("n {n}  alpha {:.3}  slopes {:?}", rule.alpha(n), v.slopes[0].iter().map(|s| (s * 1000.0).round() / 1000.0).collect::<Vec<_>>());
    }
    assert!(v.is_admissible(1e-12));
}
