use maxcert::optim::{
    solve_lp, solve_milp, solve_qp, LinearProgram, MilpProblem, QuadraticProgram, Sense,
    SolveStatus,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
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

/// Random bounded LP that contains the origin.
fn random_lp(rng: &mut ChaCha8Rng) -> LinearProgram {
    let n = rng.gen_range(1..=4);
    let m = rng.gen_range(1..=10);
    let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-2.0..2.0));
    let b = DVector::from_fn(m, |_, _| rng.gen_range(0.1..3.0));
    let c = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    LinearProgram::new(c)
        .with_inequalities(a, b)
        .with_bounds(DVector::from_element(n, -5.0), DVector::from_element(n, 5.0))
}

/// Best basic feasible point, by solving every n-subset of tight rows.
fn vertex_oracle(lp: &LinearProgram) -> f64 {
    let n = lp.num_vars();
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..lp.a_ub.nrows() {
        rows.push((lp.a_ub.row(i).iter().copied().collect(), lp.b_ub[i]));
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        rows.push((e.clone(), lp.upper[j]));
        e[j] = -1.0;
        rows.push((e, -lp.lower[j]));
    }
    let mut best = f64::INFINITY;
    for s in subsets(rows.len(), n) {
        let a = DMatrix::from_fn(n, n, |r, c| rows[s[r]].0[c]);
        let b = DVector::from_fn(n, |r, _| rows[s[r]].1);
        if a.determinant().abs() < 1e-10 {
            continue;
        }
        let Some(x) = a.lu().solve(&b) else { continue };
        if lp.max_violation(&x) <= 1e-9 {
            best = best.min(lp.cost.dot(&x));
        }
    }
    best
}

#[test]
fn lp_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let lp = random_lp(&mut rng);
        let r = solve_lp(&lp).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        let want = vertex_oracle(&lp);
        assert!((r.value - want).abs() <= 1e-7, "{} vs {}", r.value, want);
        assert!(lp.max_violation(&r.point) <= 1e-8);
    }
}

#[test]
fn lp_strong_duality_and_complementarity() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let lp = random_lp(&mut rng);
        let r = solve_lp(&lp).unwrap();
        let d = r.duals.as_ref().unwrap();
        let x = &r.point;
        let mut dual_value = -lp.b_ub.dot(&d.ineq);
        for j in 0..x.len() {
            let bound = if d.reduced[j] >= 0.0 { lp.lower[j] } else { lp.upper[j] };
            dual_value += d.reduced[j] * bound;
        }
        assert!((r.value - dual_value).abs() <= 1e-6 * (1.0 + r.value.abs()));
        let slack = &lp.b_ub - &lp.a_ub * x;
        for i in 0..slack.len() {
            assert!(d.ineq[i] >= -1e-9);
            assert!((d.ineq[i] * slack[i]).abs() <= 1e-8);
        }
        let station = &lp.cost + lp.a_ub.transpose() * &d.ineq - &d.reduced;
        assert!(station.amax() <= 1e-8);
    }
}

/// Minimizer found by trying every working set of size <= n.
fn qp_oracle(qp: &QuadraticProgram) -> Option<DVector<f64>> {
    let n = qp.linear.len();
    let m = qp.a_ub.nrows();
    for k in 0..=n.min(m) {
        for s in subsets(m, k) {
            let dim = n + k;
            let mut kkt = DMatrix::zeros(dim, dim);
            let mut rhs = DVector::zeros(dim);
            kkt.view_mut((0, 0), (n, n)).copy_from(&qp.hessian);
            for j in 0..n {
                rhs[j] = -qp.linear[j];
            }
            for (r, &i) in s.iter().enumerate() {
                for j in 0..n {
                    kkt[(n + r, j)] = qp.a_ub[(i, j)];
                    kkt[(j, n + r)] = qp.a_ub[(i, j)];
                }
                rhs[n + r] = qp.b_ub[i];
            }
            if kkt.determinant().abs() < 1e-12 {
                continue;
            }
            let sol = kkt.lu().solve(&rhs)?;
            let x = sol.rows(0, n).into_owned();
            let feasible = (&qp.a_ub * &x - &qp.b_ub).iter().all(|&v| v <= 1e-9);
            let dual_ok = (0..k).all(|r| sol[n + r] >= -1e-9);
            if feasible && dual_ok {
                return Some(x);
            }
        }
    }
    None
}

#[test]
fn qp_matches_active_set_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..40 {
        let n = rng.gen_range(1..=4);
        let m = rng.gen_range(1..=6);
        let l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.5;
        let f = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
        let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
        let b = DVector::from_fn(m, |_, _| rng.gen_range(0.0..1.0));
        let qp = QuadraticProgram::new(h, f).with_inequalities(a, b);
        let r = solve_qp(&qp).unwrap();
        assert!(r.is_optimal());
        let want = qp_oracle(&qp).expect("oracle finds a KKT point");
        assert!((&r.point - &want).amax() <= 1e-7);

        let d = r.duals.unwrap();
        let grad = &qp.hessian * &r.point + &qp.linear + qp.a_ub.transpose() * &d.ineq;
        assert!(grad.amax() <= 1e-8);
    }
}

fn random_milp(rng: &mut ChaCha8Rng, nb: usize) -> MilpProblem {
    let m = rng.gen_range(1..=4);
    let a = DMatrix::from_fn(m, nb, |_, _| rng.gen_range(0.0..5.0_f64).round());
    let b = DVector::from_fn(m, |i, _| (a.row(i).sum() * rng.gen_range(0.2..0.7)).round());
    let c = DVector::from_fn(nb, |_, _| rng.gen_range(-2.0..8.0_f64).round());
    MilpProblem {
        base: LinearProgram::new(c)
            .with_inequalities(a, b)
            .with_bounds(DVector::zeros(nb), DVector::from_element(nb, 1.0)),
        integrality: (0..nb).collect(),
        sense: Sense::Maximize,
    }
}

fn enumerate_best(p: &MilpProblem) -> f64 {
    let nb = p.integrality.len();
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << nb) {
        let x = DVector::from_fn(nb, |j, _| ((mask >> j) & 1) as f64);
        if p.base.max_violation(&x) <= 1e-9 {
            best = best.max(p.base.cost.dot(&x));
        }
    }
    best
}

#[test]
fn milp_matches_binary_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..30 {
        let nb = rng.gen_range(1..=12);
        let p = random_milp(&mut rng, nb);
        let r = solve_milp(&p, 0.0, 1_000_000).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        let want = enumerate_best(&p);
        assert!(r.value >= want - 1e-9 && r.value <= want + 1e-9, "{} vs {}", r.value, want);
        for &j in &p.integrality {
            let v = r.point[j];
            assert!(v.min(1.0 - v).abs() <= 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn milp_is_deterministic(seed in 0u64..10_000, nb in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_milp(&mut rng, nb);
        let a = solve_milp(&p, 0.0, 100_000).unwrap();
        let b = solve_milp(&p, 0.0, 100_000).unwrap();
        prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
        prop_assert!(a.point.iter().zip(b.point.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    #[test]
    fn milp_dominates_every_feasible_assignment(seed in 0u64..10_000, nb in 1usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_milp(&mut rng, nb);
        let r = solve_milp(&p, 0.5, 1_000_000).unwrap();
        prop_assert!(r.value >= enumerate_best(&p) - 0.5);
    }

    #[test]
    fn lp_value_is_scale_invariant(seed in 0u64..10_000, scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = random_lp(&mut rng);
        let mut scaled = lp.clone();
        scaled.a_ub *= scale;
        scaled.b_ub *= scale;
        let a = solve_lp(&lp).unwrap();
        let b = solve_lp(&scaled).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-7 * (1.0 + a.value.abs()));
    }
}
