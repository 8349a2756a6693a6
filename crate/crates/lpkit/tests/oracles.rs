use lpkit::{
    solve_lp, solve_lp_from, solve_mip, write_mps, LinearProgram, LpStatus, MipOptions, MipStatus, RowSense,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Solves a dense square system by Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-10 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                if f != 0.0 {
                    for k in c..n {
                        a[r][k] -= f * a[c][k];
                    }
                    b[r] -= f * b[c];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn choose(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

#[test]
fn single_lower_bound_row_has_unit_dual() {
    let mut lp = LinearProgram::new();
    let x = lp.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
    lp.add_row(&[(x, 1.0)], RowSense::Ge, 3.0);
    let s = solve_lp(&lp);
    assert_eq!(s.status, LpStatus::Optimal);
    assert!((s.x[0] - 3.0).abs() < 1e-12);
    assert!((s.duals[0] - 1.0).abs() < 1e-12);
}

/// Minimum over all basic feasible solutions of a balanced 3x3 transportation
/// problem, with the last (redundant) demand row dropped.
fn transportation_by_bases(supply: [f64; 3], demand: [f64; 3], cost: [[f64; 3]; 3]) -> f64 {
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..3 {
        let mut r = vec![0.0; 9];
        for j in 0..3 {
            r[3 * i + j] = 1.0;
        }
        rows.push((r, supply[i]));
    }
    for j in 0..2 {
        let mut r = vec![0.0; 9];
        for i in 0..3 {
            r[3 * i + j] = 1.0;
        }
        rows.push((r, demand[j]));
    }
    let mut best = f64::INFINITY;
    for cols in choose(9, 5) {
        let a: Vec<Vec<f64>> = rows.iter().map(|(r, _)| cols.iter().map(|&c| r[c]).collect()).collect();
        let b: Vec<f64> = rows.iter().map(|(_, v)| *v).collect();
        if let Some(xb) = solve_dense(a, b) {
            if xb.iter().all(|&v| v >= -1e-9) {
                let c: f64 = cols.iter().zip(&xb).map(|(&k, v)| cost[k / 3][k % 3] * v).sum();
                best = best.min(c);
            }
        }
    }
    best
}

#[test]
fn transportation_matches_basis_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..40 {
        let supply: [f64; 3] = std::array::from_fn(|_| rng.random_range(1..6) as f64);
        let total: f64 = supply.iter().sum();
        let d0 = rng.random_range(0..=total as i64) as f64;
        let d1 = rng.random_range(0..=(total - d0) as i64) as f64;
        let demand = [d0, d1, total - d0 - d1];
        let cost: [[f64; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(1..10) as f64));

        let mut lp = LinearProgram::new();
        let x: Vec<usize> = (0..9).map(|k| lp.add_var(cost[k / 3][k % 3], 0.0, f64::INFINITY)).collect();
        for i in 0..3 {
            lp.add_row(&(0..3).map(|j| (x[3 * i + j], 1.0)).collect::<Vec<_>>(), RowSense::Le, supply[i]);
        }
        for j in 0..3 {
            lp.add_row(&(0..3).map(|i| (x[3 * i + j], 1.0)).collect::<Vec<_>>(), RowSense::Ge, demand[j]);
        }
        let s = solve_lp(&lp);
        assert_eq!(s.status, LpStatus::Optimal);
        let oracle = transportation_by_bases(supply, demand, cost);
        assert!((s.objective - oracle).abs() < 1e-9, "{} vs {oracle}", s.objective);
        assert!(s.x.iter().all(|v| (v - v.round()).abs() < 1e-9), "transportation vertex must be integral");
    }
}

struct Small {
    lp: LinearProgram,
    a: Vec<Vec<f64>>,
}

/// Random bounded LP around a known interior point, so it is always feasible.
fn random_small(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Small {
    let mut lp = LinearProgram::new();
    let point: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    for p in &point {
        let lo = p - rng.random_range(0.5..3.0);
        let hi = p + rng.random_range(0.5..3.0);
        lp.add_var(rng.random_range(-5.0..5.0), lo, hi);
    }
    let mut a = Vec::new();
    for _ in 0..m {
        let mut row: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.7) { rng.random_range(-3.0..3.0) } else { 0.0 }).collect();
        if row.iter().all(|&v| v == 0.0) {
            row[rng.random_range(0..n)] = 1.0;
        }
        let act: f64 = row.iter().zip(&point).map(|(x, y)| x * y).sum();
        let (sense, rhs) = match rng.random_range(0..3) {
            0 => (RowSense::Le, act + rng.random_range(0.0..2.0)),
            1 => (RowSense::Ge, act - rng.random_range(0.0..2.0)),
            _ => (RowSense::Eq, act),
        };
        lp.add_row(&row.iter().copied().enumerate().collect::<Vec<_>>(), sense, rhs);
        a.push(row);
    }
    Small { lp, a }
}

/// Enumerates every vertex: n active constraints chosen among rows and bounds.
fn vertex_oracle(s: &Small) -> f64 {
    let lp = &s.lp;
    let n = lp.num_vars();
    let mut cands: Vec<(Vec<f64>, f64)> = Vec::new();
    for (r, row) in s.a.iter().enumerate() {
        cands.push((row.clone(), lp.rhs[r]));
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cands.push((e.clone(), lp.lower[j]));
        cands.push((e, lp.upper[j]));
    }
    let mut best = f64::INFINITY;
    for set in choose(cands.len(), n) {
        let a: Vec<Vec<f64>> = set.iter().map(|&k| cands[k].0.clone()).collect();
        let b: Vec<f64> = set.iter().map(|&k| cands[k].1).collect();
        if let Some(x) = solve_dense(a, b) {
            if lp.max_violation(&x) < 1e-7 {
                best = best.min(lp.objective_value(&x));
            }
        }
    }
    best
}

#[test]
fn random_lps_match_vertex_enumeration_and_certify() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..300 {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=4);
        let small = random_small(&mut rng, n, m);
        let s = solve_lp(&small.lp);
        assert_eq!(s.status, LpStatus::Optimal, "case {case}");
        let oracle = vertex_oracle(&small);
        assert!((s.objective - oracle).abs() < 1e-6, "case {case}: {} vs {oracle}", s.objective);
        let lp = &small.lp;
        assert!(lp.max_violation(&s.x) <= 1e-7);
        assert!((s.objective - s.dual_objective(lp)).abs() < 1e-6, "strong duality, case {case}");
        // Complementary slackness on rows and on bounds.
        let act = lp.row_activities(&s.x);
        for r in 0..lp.num_rows() {
            let slack = (act[r] - lp.rhs[r]).abs();
            assert!(slack * s.duals[r].abs() < 1e-7, "row {r} of case {case}");
            match lp.senses[r] {
                RowSense::Le => assert!(s.duals[r] <= 1e-9),
                RowSense::Ge => assert!(s.duals[r] >= -1e-9),
                RowSense::Eq => {}
            }
        }
        for j in 0..lp.num_vars() {
            let d = s.reduced_costs[j];
            let gap = if d > 0.0 { s.x[j] - lp.lower[j] } else { lp.upper[j] - s.x[j] };
            assert!(d.abs() * gap < 1e-7, "bound {j} of case {case}");
        }
    }
}

#[test]
fn warm_start_after_objective_change_agrees_with_cold() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let mut small = random_small(&mut rng, 4, 4);
        let first = solve_lp(&small.lp);
        for c in small.lp.objective.iter_mut() {
            *c = rng.random_range(-5.0..5.0);
        }
        let cold = solve_lp(&small.lp);
        let warm = solve_lp_from(&small.lp, first.basis.as_ref());
        assert_eq!(warm.status, LpStatus::Optimal);
        assert!((cold.objective - warm.objective).abs() < 1e-7);
    }
}

#[test]
fn detects_infeasible_and_unbounded() {
    let mut lp = LinearProgram::new();
    let x = lp.add_var(1.0, 0.0, 10.0);
    lp.add_row(&[(x, 1.0)], RowSense::Ge, 11.0);
    assert_eq!(solve_lp(&lp).status, LpStatus::Infeasible);

    let mut lp = LinearProgram::new();
    let x = lp.add_var(-1.0, 0.0, f64::INFINITY);
    let y = lp.add_var(0.0, 0.0, f64::INFINITY);
    lp.add_row(&[(x, 1.0), (y, -1.0)], RowSense::Le, 2.0);
    assert_eq!(solve_lp(&lp).status, LpStatus::Unbounded);
}

#[test]
fn small_integer_programs_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..150 {
        let n = rng.random_range(1..=4);
        let mut lp = LinearProgram::new();
        for _ in 0..n {
            lp.add_int_var(rng.random_range(-5.0..5.0), 0.0, 3.0);
        }
        for _ in 0..rng.random_range(1..=3) {
            let row: Vec<(usize, f64)> = (0..n).map(|j| (j, rng.random_range(-3..=3) as f64)).collect();
            lp.add_row(&row, RowSense::Le, rng.random_range(0.0..6.0));
        }
        let mut best = f64::INFINITY;
        for code in 0..4usize.pow(n as u32) {
            let x: Vec<f64> = (0..n).map(|j| ((code / 4usize.pow(j as u32)) % 4) as f64).collect();
            if lp.max_violation(&x) < 1e-9 {
                best = best.min(lp.objective_value(&x));
            }
        }
        let s = solve_mip(&lp, &MipOptions { rel_gap: 0.0, ..MipOptions::default() });
        assert_eq!(s.status, MipStatus::Optimal, "case {case}");
        assert!((s.objective - best).abs() < 1e-6, "case {case}: {} vs {best}", s.objective);
        assert!(s.objective >= s.root_objective - 1e-7);
    }
}

#[test]
fn repeated_solves_are_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let small = random_small(&mut rng, 4, 3);
    let a = solve_lp(&small.lp);
    let b = solve_lp(&small.lp);
    assert_eq!(a, b);
    assert_eq!(write_mps(&small.lp, "r"), write_mps(&small.lp, "r"));
}
