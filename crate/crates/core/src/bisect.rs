//! Bisection on the objective level over rank-constrained feasibility
//! queries.
//!
//! The bracket `[l, u]` starts from the relaxation optimum and the objective
//! of a heuristic rank-feasible point. Each step queries the level
//! `γ = (l + u)/2`; a feasible answer replaces the incumbent and lowers `u`,
//! anything else raises `l`. A heuristic that fails to find a point which
//! exists would raise `l` wrongly, so unresolved queries set
//! [`BisectRun::caveat`].

use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::formulation::Formulation;
use crate::matcore::eps_rank;
use crate::rankopt::{level_tol, rank_feasibility, HeuristicSettings, Method, OracleOutcome};
use crate::sdp::Status;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectSettings {
    /// Target width of the final bracket; `None` means
    /// `1e-3 · max(1, u₀ − l₀)`.
    pub delta: Option<f64>,
    pub method: Method,
    pub heuristic: HeuristicSettings,
}

impl Default for BisectSettings {
    fn default() -> Self {
        Self {
            delta: None,
            method: Method::LogDet,
            heuristic: HeuristicSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bracket {
    pub l: f64,
    pub u: f64,
    pub incumbent: DMatrix<f64>,
    pub incumbent_objective: f64,
    /// Optimum of the relaxation.
    pub relaxation_bound: f64,
}

impl Bracket {
    pub fn width(&self) -> f64 {
        self.u - self.l
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Feasible,
    Infeasible,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BisectStep {
    pub gamma: f64,
    pub outcome: StepOutcome,
    /// Bracket after the update.
    pub l: f64,
    pub u: f64,
    pub incumbent_objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BisectStatus {
    Completed,
    /// The oracle failed; the run holds the bracket reached so far.
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct BisectRun {
    pub history: Vec<BisectStep>,
    pub x: DMatrix<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub delta: f64,
    pub initial: Bracket,
    pub l: f64,
    pub u: f64,
    /// Set when an unresolved query raised `l`, voiding the accuracy
    /// guarantee.
    pub caveat: bool,
    pub status: BisectStatus,
    pub wall_time: Duration,
}

/// Smallest `N` with `width / 2^N ≤ delta`.
pub fn iteration_count(width: f64, delta: f64) -> usize {
    if !(width > delta) {
        return 0;
    }
    let mut n = (width / delta).log2().ceil().max(0.0) as usize;
    while width / 2f64.powi(n as i32) > delta {
        n += 1;
    }
    while n > 0 && width / 2f64.powi(n as i32 - 1) <= delta {
        n -= 1;
    }
    n
}

/// Rank-feasible candidate straight from a solution: accepted when the
/// rank target holds (or there is none) and `X` passes verification.
fn relaxation_is_rank_feasible(
    form: &Formulation,
    sol: &crate::sdp::SdpSolution,
    settings: &HeuristicSettings,
) -> Result<bool> {
    let x = form.extract_x(sol);
    if !form.verify(&x).passes(settings.feas_tol) {
        return Ok(false);
    }
    match (form.v_matrix(sol), form.rank_target()) {
        (Some(v), Some(k)) => Ok(eps_rank(&v, settings.eps)? <= k),
        _ => Ok(true),
    }
}

/// `l` from the relaxation, `u` from a heuristic rank-feasible point found
/// at successively looser levels.
pub fn initial_bracket(form: &Formulation, settings: &BisectSettings) -> Result<Bracket> {
    let hs = &settings.heuristic;
    hs.validate()?;
    let relax = form.solve_relaxation(&hs.solver)?;
    match relax.status {
        Status::Optimal => {}
        Status::PrimalInfeasible => {
            return Err(Error::Infeasible("the relaxation has no feasible point".into()))
        }
        s => return Err(Error::Solver(format!("relaxation ended with status {s:?}"))),
    }
    let l = relax.primal_objective;
    if relaxation_is_rank_feasible(form, &relax, hs)? {
        let x = form.extract_x(&relax);
        let f = form.objective_of(&x)?;
        return Ok(Bracket {
            l: f.min(l),
            u: f,
            incumbent: x,
            incumbent_objective: f,
            relaxation_bound: l,
        });
    }
    let scale = l.abs().max(1.0);
    let mut attempts = Vec::new();
    for j in 0..6 {
        let gamma = l + scale * 4f64.powi(j);
        match rank_feasibility(form, gamma, settings.method, hs)? {
            OracleOutcome::Feasible { x, objective, .. } => {
                return Ok(Bracket {
                    l,
                    u: objective.max(l),
                    incumbent: x,
                    incumbent_objective: objective,
                    relaxation_bound: l,
                })
            }
            other => attempts.push(format!(
                "γ={gamma:.3e}: {}",
                match other {
                    OracleOutcome::Infeasible { .. } => "infeasible".to_string(),
                    OracleOutcome::Unresolved { run } => format!(
                        "unresolved ({:?})",
                        run.map(|r| r.status)
                    ),
                    OracleOutcome::Feasible { .. } => unreachable!(),
                }
            )),
        }
    }
    Err(Error::Solver(format!("no upper bound found; attempts: {}", attempts.join("; "))))
}

pub fn bisection_solve(form: &Formulation, settings: &BisectSettings) -> Result<BisectRun> {
    let start = Instant::now();
    let initial = initial_bracket(form, settings)?;
    bisect_from(form, initial, settings, start)
}

/// Bisection from a given bracket.
pub fn bisect_from(
    form: &Formulation,
    initial: Bracket,
    settings: &BisectSettings,
    start: Instant,
) -> Result<BisectRun> {
    let width0 = initial.width().max(0.0);
    let delta = settings.delta.unwrap_or(1e-3 * width0.max(1.0));
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    let n = iteration_count(width0, delta);
    let (mut l, mut u) = (initial.l, initial.u);
    let mut x = initial.incumbent.clone();
    let mut fx = initial.incumbent_objective;
    let mut caveat = false;
    let mut history = Vec::with_capacity(n);
    let mut status = BisectStatus::Completed;

    for _ in 0..n {
        let gamma = 0.5 * (l + u);
        let outcome = if fx <= gamma {
            // the incumbent already meets the level
            u = gamma;
            StepOutcome::Feasible
        } else {
            match rank_feasibility(form, gamma, settings.method, &settings.heuristic) {
                Ok(OracleOutcome::Feasible { x: xg, objective, .. }) => {
                    debug_assert!(objective <= gamma + level_tol(gamma));
                    x = xg;
                    fx = objective;
                    u = gamma.max(fx);
                    if fx < l {
                        // only possible after an unresolved query raised l
                        l = fx;
                        caveat = true;
                    }
                    StepOutcome::Feasible
                }
                Ok(OracleOutcome::Infeasible { .. }) => {
                    l = gamma;
                    StepOutcome::Infeasible
                }
                Ok(OracleOutcome::Unresolved { .. }) => {
                    log::warn!("unresolved feasibility query at level {gamma:e}; raising the lower bound");
                    l = gamma;
                    caveat = true;
                    StepOutcome::Unresolved
                }
                Err(e) => {
                    status = BisectStatus::Failed(e.to_string());
                    break;
                }
            }
        };
        history.push(BisectStep {
            gamma,
            outcome,
            l,
            u,
            incumbent_objective: fx,
        });
    }

    Ok(BisectRun {
        iterations: history.len(),
        history,
        x,
        objective: fx,
        delta,
        initial,
        l,
        u,
        caveat,
        status,
        wall_time: start.elapsed(),
    })
}
