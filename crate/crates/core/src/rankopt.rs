//! Rank heuristics over the feasible set of a program with a PSD block `V`.
//!
//! All three methods solve a sequence of SDPs `min ⟨W_t, V⟩` over the same
//! feasible set, differing only in the weight:
//!
//! - trace: `W = I`, a single solve;
//! - log-det: `W_t ∝ (V_t + δI)⁻¹`, the linearization of `log det(V + δI)`;
//! - convex iteration: `W_t = U_t`, the projector onto the eigenvectors of
//!   the `order − k` smallest eigenvalues of `V_t`.
//!
//! A log-det run that stalls above the rank target restarts from a weight
//! with a small seeded PSD perturbation added. At a point that is invariant
//! under a symmetry of the feasible set, such as the barycenter of several
//! permutation matrices, the log-det weight shares that symmetry and the
//! iteration cannot leave it otherwise.
//!
//! A new iterate that scores worse than its predecessor on the predecessor's
//! weight (possible only through solver inaccuracy) is discarded and the run
//! stops as stalled, so the recorded surrogate values are monotone.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::constraints::VBlock;
use crate::error::{Error, Result};
use crate::formulation::Formulation;
use crate::matcore::{eigen, spectral_norm, sum_smallest_eigenvalues, SymMatrix};
use crate::sdp::{solve, BlockKind, SdpProblem, SdpSolution, SolverSettings, Status, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Trace,
    LogDet,
    ConvexIteration,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicSettings {
    /// `δ` in `log det(V + δI)`.
    pub logdet_delta: f64,
    pub max_iters: usize,
    /// Threshold of the ε-rank.
    pub eps: f64,
    /// Relative surrogate decrease below which a run counts as stalled.
    pub stall_tol: f64,
    /// Constraint residual accepted by the feasibility oracle.
    pub feas_tol: f64,
    /// Perturbed restarts allowed to a stalled log-det run.
    pub restarts: usize,
    pub solver: SolverSettings,
}

impl Default for HeuristicSettings {
    fn default() -> Self {
        Self {
            logdet_delta: 1e-6,
            max_iters: 50,
            eps: 1e-6,
            stall_tol: 1e-8,
            feas_tol: 1e-6,
            restarts: 2,
            solver: SolverSettings::default(),
        }
    }
}

impl HeuristicSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.logdet_delta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "logdet_delta must be positive, got {}",
                self.logdet_delta
            )));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidArgument(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.stall_tol >= 0.0) || !(self.feas_tol > 0.0) {
            return Err(Error::InvalidArgument("stall_tol and feas_tol must be non-negative".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone)]
pub struct RankIterate {
    pub v: SymMatrix,
    /// `⟨W_t, V_{t+1}⟩` for the weight that produced this iterate.
    pub surrogate: f64,
    /// `⟨W_t, V_t⟩`, the same weight at the previous iterate.
    pub surrogate_before: Option<f64>,
    pub eps_rank: usize,
    /// The `(k+1)`-th largest eigenvalue (0 when `k` is the full order).
    pub empirical_eps: f64,
    /// Sum of the `order − k` smallest eigenvalues, `tr(U V)` for the
    /// direction matrix of this iterate.
    pub tail: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    RankReached,
    Stalled,
    MaxIters,
    /// The first solve proved the feasible set empty.
    Infeasible,
    SolverFailed,
}

#[derive(Debug, Clone)]
pub struct RankRun {
    pub method: Method,
    pub iterates: Vec<RankIterate>,
    pub status: RunStatus,
    pub converged: bool,
    pub wall_time: Duration,
    /// Solution of the last accepted iterate, or the infeasible solve.
    pub solution: Option<SdpSolution>,
}

/// Projector `Q₋Q₋ᵀ` onto the eigenvectors of the `order − k` smallest
/// eigenvalues, the minimizer of `tr(UX)` over `0 ⪯ U ⪯ I, tr(U) = order − k`.
pub fn direction_matrix(x: &SymMatrix, k: usize) -> Result<SymMatrix> {
    let n = x.order();
    if k >= n {
        return Err(Error::InvalidArgument(format!("k = {k} must be below the order {n}")));
    }
    let e = eigen(x)?;
    let q = e.eigenvectors.columns(k, n - k);
    SymMatrix::symmetrize(&(q * q.transpose()))
}

fn logdet_weight(v: &SymMatrix, delta: f64) -> Result<DMatrix<f64>> {
    let e = eigen(v)?;
    let lam_min = e.min_eigenvalue().max(0.0);
    // (V + δI)⁻¹ scaled to unit spectral norm
    let d = DVector::from_iterator(
        e.eigenvalues.len(),
        e.eigenvalues.iter().map(|&l| (lam_min + delta) / (l.max(0.0) + delta)),
    );
    Ok(&e.eigenvectors * DMatrix::from_diagonal(&d) * e.eigenvectors.transpose())
}

const RESTART_SCALE: f64 = 0.1;

/// `GGᵀ` for a Gaussian `G` seeded by the restart index, unit spectral norm.
fn restart_perturbation(order: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(order, order, |_, _| rng.sample::<f64, _>(StandardNormal));
    let r = &g * g.transpose();
    let s = spectral_norm(&r);
    r / s
}

fn inner(w: &DMatrix<f64>, v: &SymMatrix) -> f64 {
    w.dot(v.as_matrix())
}

fn make_iterate(v: SymMatrix, k: usize, eps: f64, surrogate: f64, before: Option<f64>) -> Result<RankIterate> {
    let n = v.order();
    let e = eigen(&v)?;
    let eps_rank = e.eigenvalues.iter().filter(|&&l| l > eps).count();
    let empirical_eps = if k < n { e.eigenvalues[k] } else { 0.0 };
    let tail = sum_smallest_eigenvalues(&v, n - k.min(n))?;
    Ok(RankIterate {
        v,
        surrogate,
        surrogate_before: before,
        eps_rank,
        empirical_eps,
        tail,
    })
}

enum Step {
    Solved(SdpSolution),
    Infeasible(SdpSolution),
    Failed,
}

fn solve_weighted(base: &SdpProblem, terms: Vec<Term>, settings: &SolverSettings) -> Result<Step> {
    let mut p = base.clone();
    p.set_objective(terms);
    let sol = solve(&p, settings)?;
    Ok(match sol.status {
        Status::Optimal => Step::Solved(sol),
        Status::PrimalInfeasible => Step::Infeasible(sol),
        // a nearly feasible point is still a usable iterate
        Status::Indeterminate if sol.residuals.primal <= 1e-7 => Step::Solved(sol),
        _ => Step::Failed,
    })
}

/// True when the tail, extrapolated at its recent geometric rate, would
/// need far more than `remaining` iterations to fall below `eps`.
fn hopeless(iterates: &[RankIterate], eps: f64, remaining: usize) -> bool {
    const SPAN: usize = 3;
    const MARGIN: f64 = 4.0;
    let t = iterates.len();
    if t < 2 * SPAN {
        return false;
    }
    let now = iterates[t - 1].tail;
    let then = iterates[t - 1 - SPAN].tail;
    if !(now > eps) || !(then > 0.0) {
        return false;
    }
    let rate = (now / then).powf(1.0 / SPAN as f64);
    if rate >= 1.0 {
        return true;
    }
    (eps / now).ln() / rate.ln() > MARGIN * remaining as f64
}

/// Runs `method` on the feasible set of `problem` (its objective is ignored)
/// until `ε-rank(V) ≤ k`. Besides the surrogate stall test, a run stops as
/// stalled once the tail eigenvalue sum is decaying too slowly to reach `ε`
/// within the iteration budget.
pub fn run(
    problem: &SdpProblem,
    v_block: &VBlock,
    k: usize,
    method: Method,
    settings: &HeuristicSettings,
) -> Result<RankRun> {
    run_until(problem, v_block, k, method, settings, &|_| true)
}

/// [`run`] whose stopping test also requires `accept` on the solve. An
/// iterate at the rank target that `accept` rejects keeps the iteration
/// going.
pub fn run_until(
    problem: &SdpProblem,
    v_block: &VBlock,
    k: usize,
    method: Method,
    settings: &HeuristicSettings,
    accept: &dyn Fn(&SdpSolution) -> bool,
) -> Result<RankRun> {
    settings.validate()?;
    let order = v_block.order();
    if k > order {
        return Err(Error::InvalidArgument(format!("rank target {k} exceeds the order {order}")));
    }
    if method == Method::ConvexIteration && k >= order {
        return Err(Error::InvalidArgument(format!(
            "convex iteration needs k below the order {order}, got {k}"
        )));
    }
    let start = Instant::now();
    let mut out = RankRun {
        method,
        iterates: Vec::new(),
        status: RunStatus::MaxIters,
        converged: false,
        wall_time: Duration::ZERO,
        solution: None,
    };
    let finish = |mut out: RankRun, status: RunStatus| {
        out.status = status;
        out.converged = status == RunStatus::RankReached;
        out.wall_time = start.elapsed();
        Ok(out)
    };

    let sol = match solve_weighted(problem, v_block.trace_terms(), &settings.solver)? {
        Step::Solved(s) => s,
        Step::Infeasible(s) => {
            out.solution = Some(s);
            return finish(out, RunStatus::Infeasible);
        }
        Step::Failed => return finish(out, RunStatus::SolverFailed),
    };
    let v = v_block.matrix(&sol);
    let it = make_iterate(v.clone(), k, settings.eps, v.trace(), None)?;
    let reached = it.eps_rank <= k && accept(&sol);
    out.iterates.push(it);
    out.solution = Some(sol);
    if reached {
        return finish(out, RunStatus::RankReached);
    }
    if method == Method::Trace {
        return finish(out, RunStatus::Stalled);
    }

    let mut cur = v;
    let mut restarts = 0;
    let mut kick = false;
    for _ in 0..settings.max_iters {
        let mut w = match method {
            Method::LogDet => logdet_weight(&cur, settings.logdet_delta)?,
            _ => direction_matrix(&cur, k)?.into_inner(),
        };
        if kick {
            w += restart_perturbation(cur.order(), restarts as u64) * RESTART_SCALE;
            kick = false;
        }
        // a stalled log-det run gets a perturbed weight instead of stopping
        let mut stalled = |t: &RankRun| {
            let can = method == Method::LogDet
                && restarts < settings.restarts
                && t.iterates.last().is_some_and(|i| i.eps_rank > k);
            if can {
                restarts += 1;
                kick = true;
            }
            !can
        };
        let before = inner(&w, &cur);
        let sol = match solve_weighted(problem, v_block.inner_terms(&w), &settings.solver)? {
            Step::Solved(s) => s,
            Step::Infeasible(_) | Step::Failed => return finish(out, RunStatus::SolverFailed),
        };
        let next = v_block.matrix(&sol);
        let after = inner(&w, &next);
        if after > before {
            if stalled(&out) {
                return finish(out, RunStatus::Stalled);
            }
            continue;
        }
        let it = make_iterate(next.clone(), k, settings.eps, after, Some(before))?;
        let reached = it.eps_rank <= k && accept(&sol);
        out.iterates.push(it);
        out.solution = Some(sol);
        cur = next;
        if reached {
            return finish(out, RunStatus::RankReached);
        }
        let slow = before - after < settings.stall_tol * before.abs().max(1.0)
            || hopeless(&out.iterates, settings.eps, settings.max_iters + 1 - out.iterates.len());
        if slow && stalled(&out) {
            return finish(out, RunStatus::Stalled);
        }
    }
    finish(out, RunStatus::MaxIters)
}

pub fn trace_heuristic(problem: &SdpProblem, v_block: &VBlock, k: usize, settings: &HeuristicSettings) -> Result<RankRun> {
    run(problem, v_block, k, Method::Trace, settings)
}

pub fn logdet_heuristic(problem: &SdpProblem, v_block: &VBlock, k: usize, settings: &HeuristicSettings) -> Result<RankRun> {
    run(problem, v_block, k, Method::LogDet, settings)
}

pub fn convex_iteration(problem: &SdpProblem, v_block: &VBlock, k: usize, settings: &HeuristicSettings) -> Result<RankRun> {
    run(problem, v_block, k, Method::ConvexIteration, settings)
}

#[derive(Debug, Clone)]
pub enum OracleOutcome {
    Feasible {
        x: DMatrix<f64>,
        objective: f64,
        run: Option<RankRun>,
    },
    /// The relaxation at this level is certified empty.
    Infeasible { run: Option<RankRun> },
    /// The heuristic did not reach the rank target.
    Unresolved { run: Option<RankRun> },
}

impl OracleOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, OracleOutcome::Feasible { .. })
    }

    pub fn run(&self) -> Option<&RankRun> {
        match self {
            OracleOutcome::Feasible { run, .. }
            | OracleOutcome::Infeasible { run }
            | OracleOutcome::Unresolved { run } => run.as_ref(),
        }
    }
}

/// Slack allowed on the level constraint `f(X) ≤ γ`.
pub fn level_tol(gamma: f64) -> f64 {
    1e-7 * (1.0 + gamma.abs())
}

/// The feasible set of `form` intersected with `objective ≤ gamma`
/// (`gamma = +∞` adds nothing).
pub fn level_problem(form: &Formulation, gamma: f64) -> SdpProblem {
    let mut p = form.sdp().clone();
    if gamma.is_finite() {
        let s = p.add_block(BlockKind::Nonneg(1));
        let mut terms = p.objective().to_vec();
        terms.push(Term::vec(s, 0, 1.0));
        let rhs = gamma - p.objective_offset();
        p.add_row(terms, rhs);
    }
    p
}

/// Searches for `X` with `f(X) ≤ gamma` satisfying the constraints of
/// `form` at rank `form.rank_target()`.
pub fn rank_feasibility(
    form: &Formulation,
    gamma: f64,
    method: Method,
    settings: &HeuristicSettings,
) -> Result<OracleOutcome> {
    if gamma.is_nan() || gamma == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument(format!("gamma must be finite or +inf, got {gamma}")));
    }
    settings.validate()?;
    let problem = level_problem(form, gamma);
    let accept = |sol: &SdpSolution, rank_ok: bool, run: Option<RankRun>| -> Result<OracleOutcome> {
        let x = form.extract_x(sol);
        let objective = form.objective_of(&x)?;
        let ok = rank_ok
            && form.verify(&x).passes(settings.feas_tol)
            && (!gamma.is_finite() || objective <= gamma + level_tol(gamma));
        Ok(if ok {
            OracleOutcome::Feasible { x, objective, run }
        } else {
            OracleOutcome::Unresolved { run }
        })
    };

    let (Some(v_block), Some(k)) = (form.encoded.v_block, form.rank_target()) else {
        // no rank target: the relaxation is exact
        let mut p = problem;
        if !gamma.is_finite() {
            return Err(Error::InvalidArgument(
                "an unbounded level needs a rank-constrained block to search".into(),
            ));
        }
        p.set_objective(Vec::new());
        let sol = solve(&p, &settings.solver)?;
        return match sol.status {
            Status::PrimalInfeasible => Ok(OracleOutcome::Infeasible { run: None }),
            Status::Optimal => accept(&sol, true, None),
            _ => Ok(OracleOutcome::Unresolved { run: None }),
        };
    };
    let passes = |sol: &SdpSolution| {
        let x = form.extract_x(sol);
        form.objective_of(&x).is_ok_and(|f| !gamma.is_finite() || f <= gamma + level_tol(gamma))
            && form.verify(&x).passes(settings.feas_tol)
    };
    let run = run_until(&problem, &v_block, k, method, settings, &passes)?;
    let outcome = match run.status {
        RunStatus::Infeasible => return Ok(OracleOutcome::Infeasible { run: Some(run) }),
        RunStatus::RankReached => {
            let sol = run.solution.clone().expect("converged run has a solution");
            accept(&sol, true, Some(run))?
        }
        _ => OracleOutcome::Unresolved { run: Some(run) },
    };
    match outcome {
        OracleOutcome::Unresolved { run: Some(run) } => Ok(round_iterates(form, gamma, &v_block, run, settings)),
        other => Ok(other),
    }
}

/// Projects the `X` part of every iterate onto the owner's set and keeps the
/// best point that verifies and meets the level. The projected point is
/// rank-feasible by construction, with `G = XᵀX`.
fn round_iterates(
    form: &Formulation,
    gamma: f64,
    v_block: &VBlock,
    run: RankRun,
    settings: &HeuristicSettings,
) -> OracleOutcome {
    let (m, n) = form.dims();
    if (v_block.m, v_block.n) != (m, n) {
        return OracleOutcome::Unresolved { run: Some(run) };
    }
    let mut best: Option<(f64, DMatrix<f64>)> = None;
    for it in &run.iterates {
        let x = it.v.as_matrix().view((0, m), (m, n)).into_owned();
        let Some(xr) = form.constraints.project(&x) else {
            return OracleOutcome::Unresolved { run: Some(run) };
        };
        let Ok(f) = form.objective_of(&xr) else { continue };
        let ok = f <= gamma + level_tol(gamma) && form.verify(&xr).passes(settings.feas_tol);
        if ok && best.as_ref().is_none_or(|(b, _)| f < *b) {
            best = Some((f, xr));
        }
    }
    match best {
        Some((objective, x)) => OracleOutcome::Feasible { x, objective, run: Some(run) },
        None => OracleOutcome::Unresolved { run: Some(run) },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{Constraint, ConstraintSet};
    use crate::matcore::eps_rank;
    use crate::reformulate::{LinearMapSpec, NormKind};
    use crate::sdp::BlockId;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(d: &[f64]) -> SymMatrix {
        SymMatrix::from_diagonal(d)
    }

    /// A bare 2×2 PSD block with pinned diagonal.
    fn two_by_two(off: Option<f64>) -> (SdpProblem, VBlock) {
        let mut p = SdpProblem::new();
        let b = p.add_block(BlockKind::Psd(2));
        p.pin(b, 0, 0, 1.0);
        p.pin(b, 1, 1, 1.0);
        if let Some(v) = off {
            p.pin(b, 0, 1, v);
        }
        (p, VBlock { block: b, m: 1, n: 1 })
    }

    #[test]
    fn direction_matrix_examples() {
        let u = direction_matrix(&diag(&[5.0, 1.0]), 1).unwrap();
        assert!((u.as_matrix() - DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0]))).norm() < 1e-14);
        assert!((u.as_matrix().dot(diag(&[5.0, 1.0]).as_matrix()) - 1.0).abs() < 1e-14);

        let x = SymMatrix::identity(3);
        let u1 = direction_matrix(&x, 1).unwrap();
        let u2 = direction_matrix(&x, 1).unwrap();
        assert_eq!(u1, u2);
        assert!((u1.trace() - 2.0).abs() < 1e-14);
        assert!((u1.as_matrix().dot(x.as_matrix()) - 2.0).abs() < 1e-14);

        let u = direction_matrix(&diag(&[3.0, 2.0, 0.0]), 2).unwrap();
        assert!(u.as_matrix().dot(diag(&[3.0, 2.0, 0.0]).as_matrix()).abs() < 1e-14);
        assert!(direction_matrix(&x, 3).is_err());
    }

    #[test]
    fn trace_heuristic_examples() {
        let s = HeuristicSettings::default();
        let (p, v) = two_by_two(None);
        let r = trace_heuristic(&p, &v, 1, &s).unwrap();
        assert_eq!(r.iterates.len(), 1);
        assert!((r.iterates[0].surrogate - 2.0).abs() < 1e-7);

        let (p, v) = two_by_two(Some(1.0));
        let r = trace_heuristic(&p, &v, 1, &s).unwrap();
        assert_eq!(r.status, RunStatus::RankReached);
        assert_eq!(r.iterates[0].eps_rank, 1);
    }

    #[test]
    fn already_low_rank_converges_immediately() {
        let s = HeuristicSettings::default();
        let (p, v) = two_by_two(Some(1.0));
        for method in [Method::LogDet, Method::ConvexIteration] {
            let r = run(&p, &v, 1, method, &s).unwrap();
            assert!(r.converged);
            assert_eq!(r.iterates.len(), 1);
            assert!(r.iterates[0].tail.abs() < 1e-6);
        }
    }

    #[test]
    fn infeasible_set_is_reported() {
        let s = HeuristicSettings::default();
        let (mut p, v) = two_by_two(Some(1.0));
        p.pin(BlockId(0), 0, 1, 2.0);
        for method in [Method::Trace, Method::LogDet, Method::ConvexIteration] {
            let r = run(&p, &v, 1, method, &s).unwrap();
            assert_eq!(r.status, RunStatus::Infeasible);
        }
    }

    /// Unit-diagonal 3×3 block with `V₁₂ = 1` and `V₁₃ + V₂₃ ≥ 0.5`. The
    /// trace is constant, so the first solve is generically rank two; the
    /// rank-one points have `V₁₃ = V₂₃ = ±1`, only `+1` being admissible.
    fn needs_iterations() -> (SdpProblem, VBlock) {
        let mut p = SdpProblem::new();
        let b = p.add_block(BlockKind::Psd(3));
        for i in 0..3 {
            p.pin(b, i, i, 1.0);
        }
        p.pin(b, 0, 1, 1.0);
        let s = p.add_block(BlockKind::Nonneg(1));
        p.add_row(
            vec![Term::new(b, 0, 2, 1.0), Term::new(b, 1, 2, 1.0), Term::vec(s, 0, -1.0)],
            0.5,
        );
        (p, VBlock { block: b, m: 1, n: 2 })
    }

    #[test]
    fn heuristics_reach_rank_one_on_the_segment() {
        let s = HeuristicSettings::default();
        let (p, v) = needs_iterations();
        for method in [Method::LogDet, Method::ConvexIteration] {
            let r = run(&p, &v, 1, method, &s).unwrap();
            assert!(r.converged, "{method:?}: {:?}", r.status);
            assert!(r.iterates.len() >= 2);
            let last = r.iterates.last().unwrap();
            assert!((last.v[(0, 2)] - 1.0).abs() < 1e-5);
        }
    }

    fn check_monotone(r: &RankRun) {
        for it in &r.iterates {
            if let Some(b) = it.surrogate_before {
                assert!(it.surrogate <= b + 1e-9);
            }
        }
        if r.method == Method::ConvexIteration {
            for w in r.iterates.windows(2) {
                assert!(w[1].tail <= w[0].tail + 1e-9, "{} > {}", w[1].tail, w[0].tail);
            }
        }
        // sum of the order − k smallest eigenvalues vanishes exactly when
        // the ε-rank is at most k
        let n = r.iterates[0].v.order();
        for it in &r.iterates {
            let k = n - 1;
            let small = eps_rank(&it.v, 1e-6).unwrap() <= k;
            let tail = sum_smallest_eigenvalues(&it.v, 1).unwrap();
            if small {
                assert!(tail <= 1e-6);
            }
            if tail <= 1e-6 {
                assert!(small);
            }
        }
    }

    fn random_orthogonal_formulation(seed: u64, m: usize, n: usize) -> (Formulation, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let x = g.qr().q().columns(0, n).into_owned();
        let a = DMatrix::from_fn(m + 1, m, |_, _| rng.random_range(-1.0..1.0));
        let c = &a * &x;
        let spec = LinearMapSpec::standard(a, c).unwrap();
        let f = Formulation::new(&spec, NormKind::Frobenius, ConstraintSet::new(vec![Constraint::Orthogonal]))
            .unwrap();
        (f, x)
    }

    #[test]
    fn oracle_examples() {
        let s = HeuristicSettings::default();
        let (f, planted) = random_orthogonal_formulation(3, 3, 2);
        let fx = f.objective_of(&planted).unwrap();
        assert!(fx < 1e-20);
        // below the relaxation optimum
        let out = rank_feasibility(&f, -1.0, Method::LogDet, &s).unwrap();
        assert!(matches!(out, OracleOutcome::Infeasible { .. }));
        // planted level
        let out = rank_feasibility(&f, fx + 1e-6, Method::LogDet, &s).unwrap();
        match out {
            OracleOutcome::Feasible { x, objective, .. } => {
                assert!(objective <= 1e-6 + level_tol(1e-6));
                assert!(f.verify(&x).passes(1e-6));
            }
            other => panic!("expected feasible, got {other:?}"),
        }
    }

    #[test]
    fn vacuous_rank_is_feasible_after_one_solve() {
        let s = HeuristicSettings::default();
        let spec = LinearMapSpec::standard(DMatrix::identity(2, 2), DMatrix::from_element(2, 2, 1.0)).unwrap();
        let f = Formulation::new(
            &spec,
            NormKind::L1,
            ConstraintSet::new(vec![Constraint::QuadUpper(DMatrix::identity(2, 2))]),
        )
        .unwrap();
        assert_eq!(f.rank_target(), None);
        let out = rank_feasibility(&f, 1e6, Method::LogDet, &s).unwrap();
        assert!(out.is_feasible());
        // the full order as rank target converges at the first solve
        let (p, v) = needs_iterations();
        let r = logdet_heuristic(&p, &v, 3, &s).unwrap();
        assert!(r.converged && r.iterates.len() == 1);
    }

    #[test]
    fn runs_are_monotone_on_random_instances() {
        let s = HeuristicSettings::default();
        for seed in 0..4 {
            let (f, planted) = random_orthogonal_formulation(seed, 3, 2);
            let gamma = f.objective_of(&planted).unwrap() + 0.05;
            let p = level_problem(&f, gamma);
            let v = f.encoded.v_block.unwrap();
            for method in [Method::LogDet, Method::ConvexIteration] {
                let r = run(&p, &v, 3, method, &s).unwrap();
                assert!(!r.iterates.is_empty());
                check_monotone_k(&r, 3);
            }
        }
    }

    fn check_monotone_k(r: &RankRun, k: usize) {
        for it in &r.iterates {
            if let Some(b) = it.surrogate_before {
                assert!(it.surrogate <= b + 1e-9);
            }
        }
        if r.method == Method::ConvexIteration {
            for w in r.iterates.windows(2) {
                assert!(w[1].tail <= w[0].tail + 1e-9);
            }
        }
        let n = r.iterates[0].v.order();
        for it in &r.iterates {
            let tail = sum_smallest_eigenvalues(&it.v, n - k).unwrap();
            let small = it.eps_rank <= k;
            if small {
                assert!(tail <= (n - k) as f64 * 1e-6);
            }
            if tail <= 1e-6 {
                assert!(small);
            }
        }
    }

    #[test]
    fn segment_runs_are_monotone() {
        let s = HeuristicSettings::default();
        let (p, v) = needs_iterations();
        for method in [Method::LogDet, Method::ConvexIteration] {
            check_monotone(&run(&p, &v, 1, method, &s).unwrap());
        }
    }

    /// Random `U` with `0 ⪯ U ⪯ I` and `tr(U) = n − k`.
    fn random_feasible_u(n: usize, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let q = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)).qr().q();
        // weights in [0, 1] summing to n − k: water-fill random proposals
        let mut w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let target = (n - k) as f64;
        for _ in 0..200 {
            let s: f64 = w.iter().sum();
            let d = (target - s) / n as f64;
            if d.abs() < 1e-15 {
                break;
            }
            for v in &mut w {
                *v = (*v + d).clamp(0.0, 1.0);
            }
        }
        &q * DMatrix::from_diagonal(&DVector::from_vec(w)) * q.transpose()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn direction_matrix_beats_random_feasible_u(seed in any::<u64>(), n in 2usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let x = SymMatrix::symmetrize(&(&g * g.transpose())).unwrap();
            for k in 0..n {
                let u = direction_matrix(&x, k).unwrap();
                prop_assert!((u.trace() - (n - k) as f64).abs() < 1e-10);
                let best = u.as_matrix().dot(x.as_matrix());
                prop_assert!((best - sum_smallest_eigenvalues(&x, n - k).unwrap()).abs() < 1e-10);
                for _ in 0..100 {
                    let r = random_feasible_u(n, k, &mut rng);
                    prop_assert!(best <= r.dot(x.as_matrix()) + 1e-10);
                }
            }
        }
    }
}
