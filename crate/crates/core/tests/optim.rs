use microgrid_core::optim::{
    polygon_faces, solve_lp, solve_milp, LinearModel, ObjectiveSense, Sense, SolveStatus,
    DEFAULT_GAP, FEASIBILITY_TOL,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random pure-binary program with integer data, checked by enumeration.
fn random_binary_program(rng: &mut ChaCha8Rng, n: usize, rows: usize) -> (LinearModel, Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let mut m = LinearModel::new(ObjectiveSense::Maximize);
    let xs: Vec<_> = (0..n).map(|i| m.add_binary(format!("x{i}"))).collect();
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(-5..=20) as f64).collect();
    for (x, ci) in xs.iter().zip(&c) {
        m.add_objective(*x, *ci);
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    for r in 0..rows {
        let row: Vec<f64> = (0..n).map(|_| rng.random_range(-3..=9) as f64).collect();
        let rhs = rng.random_range(0..=(3 * n as i64)) as f64;
        m.add_constraint(format!("r{r}"), xs.iter().zip(&row).map(|(x, a)| (*x, *a)), Sense::Le, rhs);
        a.push(row);
        b.push(rhs);
    }
    (m, a, b, c)
}

fn enumerate(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Option<f64> {
    let n = c.len();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << n) {
        let x: Vec<f64> = (0..n).map(|i| ((mask >> i) & 1) as f64).collect();
        let ok = a
            .iter()
            .zip(b)
            .all(|(row, rhs)| row.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= *rhs);
        if ok {
            let v: f64 = c.iter().zip(&x).map(|(p, q)| p * q).sum();
            best = Some(best.map_or(v, |bv: f64| bv.max(v)));
        }
    }
    best
}

#[test]
fn random_binary_programs_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..60 {
        let n = rng.random_range(3..=10);
        let rows = rng.random_range(1..=4);
        let (m, a, b, c) = random_binary_program(&mut rng, n, rows);
        let s = solve_milp(&m, DEFAULT_GAP, 100_000);
        match enumerate(&a, &b, &c) {
            None => assert_eq!(s.status, SolveStatus::Infeasible, "case {case}"),
            Some(best) => {
                assert_eq!(s.status, SolveStatus::Optimal, "case {case}");
                assert!((s.objective - best).abs() <= 1e-6, "case {case}: {} vs {best}", s.objective);
                assert!(m.max_violation(&s.values).0 <= FEASIBILITY_TOL);
            }
        }
    }
}

#[test]
fn eight_item_knapsack_matches_brute_force() {
    let w = [12.0, 7.0, 11.0, 8.0, 9.0, 6.0, 14.0, 5.0];
    let v = [24.0, 13.0, 23.0, 15.0, 16.0, 11.0, 29.0, 8.0];
    let cap = 31.0;
    let mut m = LinearModel::new(ObjectiveSense::Maximize);
    let xs: Vec<_> = (0..8).map(|i| m.add_binary(format!("x{i}"))).collect();
    for i in 0..8 {
        m.add_objective(xs[i], v[i]);
    }
    m.add_constraint("cap", xs.iter().zip(w).map(|(x, w)| (*x, w)), Sense::Le, cap);
    let best = enumerate(&[w.to_vec()], &[cap], &v).unwrap();
    let s = solve_milp(&m, DEFAULT_GAP, 100_000);
    assert_eq!(s.status, SolveStatus::Optimal);
    assert!((s.objective - best).abs() <= 1e-6);
}

#[test]
fn mixed_program_continuous_part_is_exact() {
    // Fixed-charge: pick a generator (binary) and its output (continuous).
    let mut m = LinearModel::new(ObjectiveSense::Minimize);
    let on = [m.add_binary("on0"), m.add_binary("on1")];
    let p = [m.add_var("p0", 0.0, 100.0), m.add_var("p1", 0.0, 100.0)];
    m.add_objective(on[0], 50.0);
    m.add_objective(on[1], 10.0);
    m.add_objective(p[0], 1.0);
    m.add_objective(p[1], 2.0);
    m.add_constraint("demand", [(p[0], 1.0), (p[1], 1.0)], Sense::Ge, 60.0);
    for i in 0..2 {
        m.add_constraint(format!("cap{i}"), [(p[i], 1.0), (on[i], -100.0)], Sense::Le, 0.0);
    }
    // options: gen0 only 50+60=110, gen1 only 10+120=130, both: 60+60=120
    let s = solve_milp(&m, DEFAULT_GAP, 1000);
    assert_eq!(s.status, SolveStatus::Optimal);
    assert!((s.objective - 110.0).abs() < 1e-6);
    assert_eq!(&s.values[..2], &[1.0, 0.0]);
}

#[test]
fn solver_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (m, ..) = random_binary_program(&mut rng, 12, 3);
    let a = solve_milp(&m, DEFAULT_GAP, 100_000);
    let b = solve_milp(&m, DEFAULT_GAP, 100_000);
    assert_eq!(a, b);
}

#[test]
fn hexagon_inside_disc_on_dense_grid() {
    let faces = polygon_faces(2.0, 6).unwrap();
    for i in 0..100 {
        for j in 0..100 {
            let p = -2.5 + 5.0 * i as f64 / 99.0;
            let q = -2.5 + 5.0 * j as f64 / 99.0;
            if faces.iter().all(|h| h.contains(p, q, 0.0)) {
                assert!(p.hypot(q) <= 2.0 + 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Primal max c'x, Ax ≤ b, x ≥ 0 and its dual min b'y, A'y ≥ c, y ≥ 0
    /// reach the same value.
    #[test]
    fn lp_strong_duality(
        a in prop::collection::vec(prop::collection::vec(0.1f64..5.0, 3), 3),
        b in prop::collection::vec(1.0f64..20.0, 3),
        c in prop::collection::vec(-2.0f64..6.0, 3),
    ) {
        let mut primal = LinearModel::new(ObjectiveSense::Maximize);
        let x: Vec<_> = (0..3).map(|j| primal.add_var(format!("x{j}"), 0.0, f64::INFINITY)).collect();
        for j in 0..3 { primal.add_objective(x[j], c[j]); }
        for i in 0..3 {
            primal.add_constraint(format!("r{i}"), (0..3).map(|j| (x[j], a[i][j])), Sense::Le, b[i]);
        }
        let mut dual = LinearModel::new(ObjectiveSense::Minimize);
        let y: Vec<_> = (0..3).map(|i| dual.add_var(format!("y{i}"), 0.0, f64::INFINITY)).collect();
        for i in 0..3 { dual.add_objective(y[i], b[i]); }
        for j in 0..3 {
            dual.add_constraint(format!("d{j}"), (0..3).map(|i| (y[i], a[i][j])), Sense::Ge, c[j]);
        }
        let p = solve_lp(&primal);
        let d = solve_lp(&dual);
        prop_assert_eq!(p.status, SolveStatus::Optimal);
        prop_assert_eq!(d.status, SolveStatus::Optimal);
        prop_assert!((p.objective - d.objective).abs() <= 1e-6 * (1.0 + p.objective.abs()));
    }
}
