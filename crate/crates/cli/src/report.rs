//! Solve reports: a structured document plus a line-oriented `key value`
//! rendering with floats printed to 17 significant digits.

use nalgebra::DMatrix;
use procrustes_sdp::apps::{permutation_criteria, PermutationReport};
use procrustes_sdp::bisect::{BisectRun, StepOutcome};
use procrustes_sdp::constraints::{assemble_v, Constraint};
use procrustes_sdp::matcore::{eigenvalues, SymMatrix};
use procrustes_sdp::Formulation;
use serde::Serialize;

use crate::input::{rows_from_matrix, Rows};

/// Mismatch between reported and recomputed residuals that flags the audit.
pub const AUDIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationDoc {
    pub row_sums: f64,
    pub col_sums: f64,
    pub o_max: f64,
    pub z_min: f64,
}

impl From<PermutationReport> for PermutationDoc {
    fn from(r: PermutationReport) -> Self {
        Self {
            row_sums: r.row_sums,
            col_sums: r.col_sums,
            o_max: r.o_max,
            z_min: r.z_min,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepDoc {
    pub gamma: f64,
    pub outcome: &'static str,
    pub l: f64,
    pub u: f64,
    pub incumbent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BracketDoc {
    pub relaxation_bound: f64,
    pub l0: f64,
    pub u0: f64,
    pub l: f64,
    pub u: f64,
    pub delta: f64,
    pub iterations: usize,
    pub history: Vec<StepDoc>,
}

impl From<&BisectRun> for BracketDoc {
    fn from(run: &BisectRun) -> Self {
        Self {
            relaxation_bound: run.initial.relaxation_bound,
            l0: run.initial.l,
            u0: run.initial.u,
            l: run.l,
            u: run.u,
            delta: run.delta,
            iterations: run.iterations,
            history: run
                .history
                .iter()
                .map(|s| StepDoc {
                    gamma: s.gamma,
                    outcome: match s.outcome {
                        StepOutcome::Feasible => "feasible",
                        StepOutcome::Infeasible => "infeasible",
                        StepOutcome::Unresolved => "unresolved",
                    },
                    l: s.l,
                    u: s.u,
                    incumbent: s.incumbent_objective,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: &'static str,
    pub status: String,
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Objective value; the squared norm for Frobenius.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_value: Option<f64>,
    pub residuals: Vec<Residual>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub permutation: Option<PermutationDoc>,
    pub eps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank_target: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub empirical_eps: Option<f64>,
    /// `relaxation` when V is the solver's block, `gram` when rebuilt as
    /// `[[I, X], [Xᵀ, XᵀX]]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_source: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heuristic_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bracket: Option<BracketDoc>,
    pub caveat: bool,
    pub audit: &'static str,
    pub wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Rows>,
}

impl Report {
    pub fn new(command: &'static str, status: impl Into<String>, method: impl Into<String>, eps: f64) -> Self {
        Self {
            command,
            status: status.into(),
            method: method.into(),
            norm: None,
            seed: None,
            objective: None,
            norm_value: None,
            residuals: Vec::new(),
            permutation: None,
            eps,
            rank_target: None,
            eps_rank: None,
            empirical_eps: None,
            v_source: None,
            heuristic_iterations: None,
            bracket: None,
            caveat: false,
            audit: "ok",
            wall_time_s: 0.0,
            message: None,
            x: None,
        }
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r.value).fold(0.0, f64::max)
    }

    /// Fills every X-derived field. `v` is the solver's V block when the
    /// point came straight from a solve.
    pub fn describe_x(&mut self, form: &Formulation, x: &DMatrix<f64>, v: Option<SymMatrix>) {
        let (residuals, objective, norm_value, permutation) = x_metrics(form, x);
        self.residuals = residuals;
        self.objective = objective;
        self.norm_value = norm_value;
        self.permutation = permutation;
        self.rank_target = form.rank_target();
        if let Some(k) = self.rank_target {
            let (v, source) = match v {
                Some(v) => (Some(v), "relaxation"),
                None => (assemble_v(x, &(x.transpose() * x)).ok(), "gram"),
            };
            if let Some(ev) = v.and_then(|v| eigenvalues(&v).ok()) {
                self.eps_rank = Some(ev.iter().filter(|&&l| l > self.eps).count());
                self.empirical_eps = ev.get(k).copied().or(Some(0.0));
                self.v_source = Some(source);
            }
        }
        self.x = Some(rows_from_matrix(x));
    }

    /// Recomputes the residuals from the X as printed and marks the audit
    /// when they disagree with the reported ones.
    pub fn audit(&mut self, form: &Formulation) {
        let Some(rows) = &self.x else { return };
        let printed: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|v| fmt_f(*v).parse().expect("printed float parses")).collect())
            .collect();
        let x = DMatrix::from_fn(printed.len(), printed[0].len(), |i, j| printed[i][j]);
        let (residuals, objective, _, permutation) = x_metrics(form, &x);
        let close = |a: f64, b: f64| (a - b).abs() <= AUDIT_TOL * a.abs().max(1.0) || (a.is_nan() && b.is_nan());
        let mut ok = residuals.len() == self.residuals.len()
            && residuals.iter().zip(&self.residuals).all(|(a, b)| a.label == b.label && close(a.value, b.value));
        if let (Some(a), Some(b)) = (objective, self.objective) {
            ok &= close(a, b);
        }
        if let (Some(a), Some(b)) = (&permutation, &self.permutation) {
            ok &= close(a.row_sums, b.row_sums)
                && close(a.col_sums, b.col_sums)
                && close(a.o_max, b.o_max)
                && close(a.z_min, b.z_min);
        }
        self.audit = if ok { "ok" } else { "mismatch" };
    }

    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push(' ');
            out.push_str(&v);
            out.push('\n');
        };
        kv("command", self.command.into());
        kv("status", self.status.clone());
        kv("method", self.method.clone());
        if let Some(n) = self.norm {
            kv("norm", n.into());
        }
        if let Some(s) = self.seed {
            kv("seed", s.to_string());
        }
        if let Some(v) = self.objective {
            kv("objective", fmt_f(v));
        }
        if let Some(v) = self.norm_value {
            kv("norm_value", fmt_f(v));
        }
        for r in &self.residuals {
            kv(&format!("residual.{}", r.label), fmt_f(r.value));
        }
        if let Some(p) = &self.permutation {
            kv("permutation.row_sums", fmt_f(p.row_sums));
            kv("permutation.col_sums", fmt_f(p.col_sums));
            kv("permutation.o_max", fmt_f(p.o_max));
            kv("permutation.z_min", fmt_f(p.z_min));
        }
        kv("eps", fmt_f(self.eps));
        if let Some(k) = self.rank_target {
            kv("rank_target", k.to_string());
        }
        if let Some(r) = self.eps_rank {
            kv("eps_rank", r.to_string());
        }
        if let Some(e) = self.empirical_eps {
            kv("empirical_eps", fmt_f(e));
        }
        if let Some(s) = self.v_source {
            kv("v_source", s.into());
        }
        if let Some(i) = self.heuristic_iterations {
            kv("heuristic_iterations", i.to_string());
        }
        if let Some(b) = &self.bracket {
            kv("bracket.relaxation_bound", fmt_f(b.relaxation_bound));
            kv("bracket.l0", fmt_f(b.l0));
            kv("bracket.u0", fmt_f(b.u0));
            kv("bracket.l", fmt_f(b.l));
            kv("bracket.u", fmt_f(b.u));
            kv("bracket.delta", fmt_f(b.delta));
            kv("bracket.iterations", b.iterations.to_string());
            for (i, s) in b.history.iter().enumerate() {
                kv(
                    "step",
                    format!(
                        "{i} gamma {} outcome {} l {} u {} incumbent {}",
                        fmt_f(s.gamma),
                        s.outcome,
                        fmt_f(s.l),
                        fmt_f(s.u),
                        fmt_f(s.incumbent)
                    ),
                );
            }
        }
        kv("caveat", self.caveat.to_string());
        kv("audit", self.audit.into());
        kv("wall_time_s", format!("{:.6}", self.wall_time_s));
        if let Some(m) = &self.message {
            kv("message", m.clone());
        }
        if let Some(rows) = &self.x {
            kv("x_shape", format!("{} {}", rows.len(), rows.first().map_or(0, Vec::len)));
            for (i, r) in rows.iter().enumerate() {
                let vals: Vec<String> = r.iter().map(|v| fmt_f(*v)).collect();
                kv("x", format!("{i} {}", vals.join(" ")));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        crate::input::to_canonical(self)
    }
}

/// 17 significant digits.
pub fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

type Metrics = (Vec<Residual>, Option<f64>, Option<f64>, Option<PermutationDoc>);

fn x_metrics(form: &Formulation, x: &DMatrix<f64>) -> Metrics {
    let residuals = form
        .verify(x)
        .items
        .into_iter()
        .map(|r| Residual {
            label: r.label.to_string(),
            value: r.value,
        })
        .collect();
    let items = &form.constraints.items;
    let permutation_like = items.contains(&Constraint::Orthogonal)
        && items.contains(&Constraint::NonnegativeEntries)
        && x.is_square();
    let permutation = permutation_like
        .then(|| permutation_criteria(x).ok().map(PermutationDoc::from))
        .flatten();
    (residuals, form.objective_of(x).ok(), form.norm_of(x).ok(), permutation)
}
