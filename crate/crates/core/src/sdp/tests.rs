use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn settings() -> SolverSettings {
    SolverSettings::default()
}

#[test]
fn lp_with_slack() {
    // min x  s.t.  x - s = 1,  x, s ≥ 0
    let mut p = SdpProblem::new();
    let b = p.add_block(BlockKind::Nonneg(2));
    p.add_objective_term(Term::vec(b, 0, 1.0));
    p.add_row(vec![Term::vec(b, 0, 1.0), Term::vec(b, 1, -1.0)], 1.0);
    let sol = solve(&p, &settings()).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.primal_objective - 1.0).abs() < 1e-7);
    assert!((sol.block(b).entry(0, 0) - 1.0).abs() < 1e-7);
}

#[test]
fn schur_epigraph_of_square() {
    // min Z  s.t. [[1, 2], [2, Z]] ⪰ 0  →  Z = 4
    let mut p = SdpProblem::new();
    let m = p.add_block(BlockKind::Psd(2));
    p.add_objective_term(Term::new(m, 1, 1, 1.0));
    p.pin(m, 0, 0, 1.0);
    p.pin(m, 0, 1, 2.0);
    let sol = solve(&p, &settings()).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.primal_objective - 4.0).abs() < 1e-6, "{}", sol.primal_objective);
    assert!(sol.residuals.primal < 1e-7);
    assert!(sol.residuals.dual < 1e-7);
}

#[test]
fn contradictory_bounds_are_infeasible() {
    // x ≥ 1 and x ≤ 0 with slacks
    let mut p = SdpProblem::new();
    let x = p.add_block(BlockKind::Free(1));
    let s = p.add_block(BlockKind::Nonneg(2));
    p.add_row(vec![Term::vec(x, 0, 1.0), Term::vec(s, 0, -1.0)], 1.0);
    p.add_row(vec![Term::vec(x, 0, 1.0), Term::vec(s, 1, 1.0)], 0.0);
    let sol = solve(&p, &settings()).unwrap();
    assert_eq!(sol.status, Status::PrimalInfeasible);
    let cert = sol.certificate.unwrap();
    assert_eq!(cert.kind, CertificateKind::PrimalInfeasibility);
    assert!(cert.residual < 1e-7, "{:?}", cert);
}

#[test]
fn unbounded_lp_is_dual_infeasible() {
    // min -x  s.t.  x - s = 0,  x, s ≥ 0
    let mut p = SdpProblem::new();
    let b = p.add_block(BlockKind::Nonneg(2));
    p.add_objective_term(Term::vec(b, 0, -1.0));
    p.add_row(vec![Term::vec(b, 0, 1.0), Term::vec(b, 1, -1.0)], 0.0);
    let sol = solve(&p, &settings()).unwrap();
    assert_eq!(sol.status, Status::DualInfeasible);
    assert!(sol.certificate.unwrap().residual < 1e-7);
}

#[test]
fn unbounded_free_variable_in_presolve() {
    let mut p = SdpProblem::new();
    let b = p.add_block(BlockKind::Free(1));
    p.add_objective_term(Term::vec(b, 0, 1.0));
    let sol = solve(&p, &settings()).unwrap();
    assert_eq!(sol.status, Status::DualInfeasible);
}

#[test]
fn duplicate_row_is_removed_once() {
    let mut p = SdpProblem::new();
    let b = p.add_block(BlockKind::Nonneg(2));
    p.add_objective_term(Term::vec(b, 0, 1.0));
    p.add_objective_term(Term::vec(b, 1, 2.0));
    p.add_row(vec![Term::vec(b, 0, 1.0), Term::vec(b, 1, 1.0)], 1.0);
    p.add_row(vec![Term::vec(b, 0, 2.0), Term::vec(b, 1, 2.0)], 2.0);
    let pre = presolve(&p).unwrap();
    assert_eq!(
        pre.report
            .count(|a| matches!(a, PresolveAction::RemovedDuplicateRow { .. })),
        1
    );
    let sol = pre.solve(&p, &settings());
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.primal_objective - 1.0).abs() < 1e-7);
    assert!(sol.residuals.dual < 1e-7);
}

#[test]
fn zero_row_is_removed_and_zero_equals_one_is_infeasible() {
    let mut p = SdpProblem::new();
    let b = p.add_block(BlockKind::Nonneg(1));
    p.add_objective_term(Term::vec(b, 0, 1.0));
    p.add_row(vec![], 0.0);
    p.add_row(vec![Term::vec(b, 0, 1.0)], 3.0);
    let pre = presolve(&p).unwrap();
    assert_eq!(
        pre.report
            .count(|a| matches!(a, PresolveAction::RemovedEmptyRow { .. })),
        1
    );
    let sol = pre.solve(&p, &settings());
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.primal_objective - 3.0).abs() < 1e-9);

    let mut q = SdpProblem::new();
    q.add_block(BlockKind::Nonneg(1));
    q.add_row(vec![], 1.0);
    let sol = solve(&q, &settings()).unwrap();
    assert_eq!(sol.status, Status::PrimalInfeasible);
    assert!(sol.certificate.unwrap().residual < 1e-12);
}

#[test]
fn fully_fixed_psd_block_outside_cone() {
    let mut p = SdpProblem::new();
    let m = p.add_block(BlockKind::Psd(2));
    p.pin(m, 0, 0, 1.0);
    p.pin(m, 1, 1, 1.0);
    p.pin(m, 0, 1, 2.0);
    let sol = solve(&p, &settings()).unwrap();
    assert_eq!(sol.status, Status::PrimalInfeasible);
    assert!(sol.certificate.unwrap().residual < 1e-9);
}

#[test]
fn settings_are_validated() {
    let p = SdpProblem::new();
    let bad = SolverSettings {
        tol: 0.5,
        ..SolverSettings::default()
    };
    assert!(solve(&p, &bad).is_err());
}

#[test]
fn max_eigenvalue_by_sdp() {
    // min t s.t. tI - C ⪰ 0 written as M = tI - C, M ⪰ 0
    let c = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0]);
    let mut p = SdpProblem::new();
    let m = p.add_block(BlockKind::Psd(3));
    let t = p.add_block(BlockKind::Free(1));
    p.add_objective_term(Term::vec(t, 0, 1.0));
    for j in 0..3 {
        for i in 0..=j {
            let mut terms = vec![Term::new(m, i, j, 1.0)];
            if i == j {
                terms.push(Term::vec(t, 0, -1.0));
            }
            p.add_row(terms, -c[(i, j)]);
        }
    }
    let sol = solve(&p, &settings()).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    let lmax = crate::matcore::eigenvalues(&crate::matcore::SymMatrix::new(c).unwrap()).unwrap()[0];
    assert!((sol.primal_objective - lmax).abs() < 1e-7);
}

/// Random feasible and bounded problems: build a strictly feasible primal
/// point and a strictly feasible dual point, derive `b` and `c` from them.
fn random_problem(rng: &mut ChaCha8Rng) -> SdpProblem {
    let mut p = SdpProblem::new();
    let n_psd = rng.random_range(1..=2);
    let mut blocks = Vec::new();
    for _ in 0..n_psd {
        blocks.push(p.add_block(BlockKind::Psd(rng.random_range(2..=4))));
    }
    let l = rng.random_range(0..=3);
    if l > 0 {
        blocks.push(p.add_block(BlockKind::Nonneg(l)));
    }
    let f = rng.random_range(0..=2);
    if f > 0 {
        blocks.push(p.add_block(BlockKind::Free(f)));
    }
    let nv = p.num_vars();
    let m = rng.random_range(1..nv.max(2));

    // primal interior point and dual interior slack
    let mut x0 = vec![0.0; nv];
    let mut z0 = vec![0.0; nv];
    for &b in &blocks {
        match p.block(b) {
            BlockKind::Psd(n) => {
                let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
                let xm = &g * g.transpose() + DMatrix::identity(n, n) * 0.5;
                let h = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
                let zm = &h * h.transpose() + DMatrix::identity(n, n) * 0.5;
                for j in 0..n {
                    for i in 0..=j {
                        let k = p.var_index(b, i, j).unwrap();
                        x0[k] = xm[(i, j)];
                        z0[k] = if i == j { zm[(i, i)] } else { 2.0 * zm[(i, j)] };
                    }
                }
            }
            BlockKind::Nonneg(l) => {
                for i in 0..l {
                    let k = p.var_index(b, i, 0).unwrap();
                    x0[k] = rng.random_range(0.5..2.0);
                    z0[k] = rng.random_range(0.5..2.0);
                }
            }
            BlockKind::Free(l) => {
                for i in 0..l {
                    x0[p.var_index(b, i, 0).unwrap()] = rng.random_range(-1.0..1.0);
                }
            }
        }
    }
    let a = DMatrix::from_fn(m, nv, |_, _| rng.random_range(-1.0..1.0));
    let y0 = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
    let bvec = &a * DVector::from_vec(x0.clone());
    let cvec = a.transpose() * y0 + DVector::from_vec(z0);
    for r in 0..m {
        let terms = (0..nv)
            .map(|k| {
                let (b, i, j) = p.var_location(k);
                Term::new(b, i, j, a[(r, k)])
            })
            .collect();
        p.add_row(terms, bvec[r]);
    }
    for k in 0..nv {
        let (b, i, j) = p.var_location(k);
        p.add_objective_term(Term::new(b, i, j, cvec[k]));
    }
    p
}

#[test]
fn random_battery_reaches_tight_residuals() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..50 {
        let p = random_problem(&mut rng);
        let sol = solve(&p, &settings()).unwrap();
        assert_eq!(sol.status, Status::Optimal, "case {case}");
        let r = sol.residuals;
        assert!(r.primal <= 1e-7, "case {case}: primal {}", r.primal);
        assert!(r.dual <= 1e-7, "case {case}: dual {}", r.dual);
        assert!(r.gap <= 1e-7, "case {case}: gap {}", r.gap);
        // recomputed independently from the returned blocks
        let viol = p.max_row_violation(&sol.primal);
        assert!(viol <= 1e-6, "case {case}: row violation {viol}");
        let obj = p.evaluate_objective(&sol.primal).unwrap();
        assert!((obj - sol.primal_objective).abs() <= 1e-9 * (1.0 + obj.abs()));
    }
}

#[test]
fn var_location_roundtrip() {
    let mut p = SdpProblem::new();
    p.add_block(BlockKind::Free(2));
    p.add_block(BlockKind::Psd(3));
    p.add_block(BlockKind::Nonneg(0));
    p.add_block(BlockKind::Nonneg(2));
    for k in 0..p.num_vars() {
        let (b, i, j) = p.var_location(k);
        assert_eq!(p.var_index(b, i, j).unwrap(), k);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn weak_duality_holds(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_problem(&mut rng);
        let sol = solve(&p, &settings()).unwrap();
        prop_assert_eq!(sol.status, Status::Optimal);
        let scale = 1.0 + sol.primal_objective.abs();
        prop_assert!(sol.dual_objective <= sol.primal_objective + 1e-7 * scale);
    }

    #[test]
    fn infeasible_iff_dual_ray(seed in 0u64..10_000) {
        // a random feasible problem made infeasible by adding a row that
        // contradicts a nonnegative combination
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = SdpProblem::new();
        let b = p.add_block(BlockKind::Nonneg(3));
        let m = p.add_block(BlockKind::Psd(2));
        let w: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..1.0)).collect();
        // Σ w_i u_i + tr(M) = -1 has no solution with u ≥ 0, M ⪰ 0
        let mut terms: Vec<Term> = (0..3).map(|i| Term::vec(b, i, w[i])).collect();
        terms.push(Term::new(m, 0, 0, 1.0));
        terms.push(Term::new(m, 1, 1, 1.0));
        p.add_row(terms, -1.0);
        p.add_objective_term(Term::vec(b, 0, 1.0));
        let sol = solve(&p, &settings()).unwrap();
        prop_assert_eq!(sol.status, Status::PrimalInfeasible);
        let cert = sol.certificate.unwrap();
        prop_assert!(cert.residual < 1e-6);
        // the dual problem of this program is unbounded along the ray
        let bty: f64 = cert.y.iter().zip(p.rows()).map(|(y, r)| y * r.rhs).sum();
        prop_assert!((bty - 1.0).abs() < 1e-9);
    }
}
