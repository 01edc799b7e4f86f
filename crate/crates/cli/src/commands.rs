use std::path::{Path, PathBuf};
use std::time::Instant;

use procrustes_sdp::apps::{
    build_graph_iso, gen_instance, gen_isomorphic_pair, solve_graph_iso, GeneratorConfig, GraphIsoOutcome,
    GraphIsoSettings, GraphPair,
};
use procrustes_sdp::bisect::{bisection_solve, BisectSettings, BisectStatus};
use procrustes_sdp::rankopt::{rank_feasibility, HeuristicSettings, Method, OracleOutcome};
use procrustes_sdp::sdp::{SolverSettings, Status};
use procrustes_sdp::{Error, Formulation};
use rayon::prelude::*;

use crate::input::{
    read_adjacency, read_json, rows_from_matrix, to_canonical, BatchFile, InputError, KindTag, MethodTag,
    NormTag, ProblemFile, SettingsDoc,
};
use crate::report::{fmt_f, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Infeasible = 1,
    Unresolved = 2,
    Input = 3,
}

/// What a command prints and how it exits.
pub struct Outcome {
    pub stdout: String,
    pub exit: Exit,
}

impl From<InputError> for Outcome {
    fn from(e: InputError) -> Self {
        Outcome {
            stdout: String::new(),
            exit: Exit::Input,
        }
        .with_error(&e.to_string())
    }
}

impl Outcome {
    fn with_error(self, msg: &str) -> Self {
        eprintln!("error: {msg}");
        self
    }
}

/// Settings after merging flags, file and defaults.
#[derive(Debug, Clone, Copy)]
pub struct Effective {
    pub delta: Option<f64>,
    pub gamma: Option<f64>,
    pub inner: Method,
    pub heuristic: HeuristicSettings,
}

impl Effective {
    pub fn resolve(s: &SettingsDoc, path: &Path) -> Result<Self, InputError> {
        let defaults = HeuristicSettings::default();
        let heuristic = HeuristicSettings {
            eps: s.eps_rank.unwrap_or(defaults.eps),
            max_iters: s.max_iters.unwrap_or(defaults.max_iters),
            solver: SolverSettings {
                tol: s.tol.unwrap_or(defaults.solver.tol),
                ..defaults.solver
            },
            ..defaults
        };
        heuristic
            .validate()
            .map_err(|e| InputError::field(path, "settings", e.to_string()))?;
        let inner = match s.inner {
            None => Method::LogDet,
            Some(tag) => tag
                .heuristic()
                .ok_or_else(|| InputError::field(path, "settings.inner", "must be trace, logdet or cvxiter"))?,
        };
        if let Some(d) = s.delta {
            if !(d > 0.0) {
                return Err(InputError::field(path, "settings.delta", "must be positive"));
            }
        }
        if let Some(g) = s.gamma {
            if g.is_nan() {
                return Err(InputError::field(path, "settings.gamma", "must be a number"));
            }
        }
        Ok(Self {
            delta: s.delta,
            gamma: s.gamma,
            inner,
            heuristic,
        })
    }
}

fn error_status(r: &mut Report, e: &Error) -> Exit {
    r.message = Some(e.to_string());
    match e {
        Error::Infeasible(_) => {
            r.status = "infeasible".into();
            Exit::Infeasible
        }
        _ => {
            r.status = "error".into();
            Exit::Unresolved
        }
    }
}

/// Runs `method` on `form` and builds the report.
pub fn solve_form(form: &Formulation, method: MethodTag, eff: &Effective) -> (Report, Exit) {
    let start = Instant::now();
    let mut r = Report::new("solve", "", method.name(), eff.heuristic.eps);
    let exit = match method {
        MethodTag::Relax => match form.solve_relaxation(&eff.heuristic.solver) {
            Ok(sol) => match sol.status {
                Status::Optimal => {
                    r.status = "optimal".into();
                    r.describe_x(form, &form.extract_x(&sol), form.v_matrix(&sol));
                    Exit::Success
                }
                Status::PrimalInfeasible => {
                    r.status = "infeasible".into();
                    Exit::Infeasible
                }
                s => {
                    r.status = "unresolved".into();
                    r.message = Some(format!("solver ended with status {s:?}"));
                    Exit::Unresolved
                }
            },
            Err(e) => error_status(&mut r, &e),
        },
        MethodTag::Trace | MethodTag::Logdet | MethodTag::Cvxiter => {
            let m = method.heuristic().expect("heuristic tag");
            let gamma = eff.gamma.unwrap_or(f64::INFINITY);
            match rank_feasibility(form, gamma, m, &eff.heuristic) {
                Ok(out) => {
                    r.heuristic_iterations = out.run().map(|run| run.iterates.len());
                    match out {
                        OracleOutcome::Feasible { x, .. } => {
                            r.status = "feasible".into();
                            r.describe_x(form, &x, None);
                            Exit::Success
                        }
                        OracleOutcome::Infeasible { .. } => {
                            r.status = "infeasible".into();
                            Exit::Infeasible
                        }
                        OracleOutcome::Unresolved { .. } => {
                            r.status = "unresolved".into();
                            r.message = Some("rank target not reached".into());
                            Exit::Unresolved
                        }
                    }
                }
                Err(e) => error_status(&mut r, &e),
            }
        }
        MethodTag::Bisect => {
            r.method = format!("bisect/{}", method_name(eff.inner));
            let settings = BisectSettings {
                delta: eff.delta,
                method: eff.inner,
                heuristic: eff.heuristic,
            };
            match bisection_solve(form, &settings) {
                Ok(run) => {
                    r.bracket = Some((&run).into());
                    r.caveat = run.caveat;
                    r.describe_x(form, &run.x, None);
                    match run.status {
                        BisectStatus::Completed => {
                            r.status = "completed".into();
                            Exit::Success
                        }
                        BisectStatus::Failed(msg) => {
                            r.status = "failed".into();
                            r.message = Some(msg);
                            Exit::Unresolved
                        }
                    }
                }
                Err(e) => error_status(&mut r, &e),
            }
        }
    };
    r.audit(form);
    r.wall_time_s = start.elapsed().as_secs_f64();
    (r, exit)
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Trace => "trace",
        Method::LogDet => "logdet",
        Method::ConvexIteration => "cvxiter",
    }
}

fn report_path(input: &Path) -> PathBuf {
    input.with_extension("report.json")
}

fn write_report(input: &Path, r: &Report) {
    let path = report_path(input);
    if let Err(e) = std::fs::write(&path, r.to_json()) {
        eprintln!("error: cannot write {}: {e}", path.display());
    }
}

pub struct SolveArgs {
    pub file: PathBuf,
    pub norm: Option<NormTag>,
    pub method: Option<MethodTag>,
    pub seed: Option<u64>,
    pub settings: SettingsDoc,
    pub json: bool,
}

pub fn solve(args: &SolveArgs) -> Outcome {
    let file: ProblemFile = match read_json(&args.file) {
        Ok(f) => f,
        Err(e) => return e.into(),
    };
    let path = args.file.as_path();
    let built = (|| {
        let spec = file.spec(path)?;
        let cs = file.constraint_set(path)?;
        let norm = args.norm.unwrap_or(file.norm);
        let form = Formulation::new(&spec, norm.kind(), cs)
            .map_err(|e| InputError::field(path, "constraints", e.to_string()))?;
        let eff = Effective::resolve(&args.settings.or(&file.settings), path)?;
        Ok::<_, InputError>((form, norm, eff))
    })();
    let (form, norm, eff) = match built {
        Ok(b) => b,
        Err(e) => return e.into(),
    };
    let method = args.method.or(file.method).unwrap_or(MethodTag::Bisect);
    let (mut r, exit) = solve_form(&form, method, &eff);
    r.norm = Some(norm.name());
    r.seed = args.seed.or(file.seed);
    if args.json {
        write_report(path, &r);
    }
    Outcome {
        stdout: r.to_lines(),
        exit,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum GenKind {
    Orthogonal,
    Oblique,
    Permutation,
    Graph,
}

pub struct GenArgs {
    pub kind: GenKind,
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub noise: f64,
    pub seed: u64,
    pub norm: NormTag,
    pub edge_prob: f64,
    pub out: Option<PathBuf>,
    pub out_b: Option<PathBuf>,
}

fn emit(out: &Option<PathBuf>, text: String) -> Outcome {
    match out {
        Some(path) => match std::fs::write(path, &text) {
            Ok(()) => Outcome {
                stdout: String::new(),
                exit: Exit::Success,
            },
            Err(e) => Outcome {
                stdout: String::new(),
                exit: Exit::Unresolved,
            }
            .with_error(&format!("cannot write {}: {e}", path.display())),
        },
        None => Outcome {
            stdout: text,
            exit: Exit::Success,
        },
    }
}

fn bad_args(msg: &str) -> Outcome {
    Outcome {
        stdout: String::new(),
        exit: Exit::Input,
    }
    .with_error(msg)
}

pub fn gen(args: &GenArgs) -> Outcome {
    let kind = match args.kind {
        GenKind::Orthogonal => KindTag::Orthogonal,
        GenKind::Oblique => KindTag::Oblique,
        GenKind::Permutation => KindTag::Permutation,
        GenKind::Graph => {
            let Some(out_b) = &args.out_b else {
                return bad_args("graph generation needs --out and --out-b");
            };
            if args.out.is_none() {
                return bad_args("graph generation needs --out and --out-b");
            }
            let (pair, _) = match gen_isomorphic_pair(args.n, args.edge_prob, args.seed) {
                Ok(p) => p,
                Err(e) => return bad_args(&e.to_string()),
            };
            let first = emit(&args.out, to_canonical(&rows_from_matrix(&pair.a)));
            if first.exit != Exit::Success {
                return first;
            }
            return emit(&Some(out_b.clone()), to_canonical(&rows_from_matrix(&pair.a_tilde)));
        }
    };
    let cfg = GeneratorConfig {
        m: args.m,
        n: args.n,
        p: args.p,
        q: args.q,
        seed: args.seed,
        planted: kind.planted(),
        noise: args.noise,
    };
    match gen_instance(&cfg) {
        Ok(inst) => emit(&args.out, to_canonical(&ProblemFile::from_instance(&inst, args.norm))),
        Err(e) => bad_args(&e.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub seed: u64,
    pub exit: Exit,
    pub report: Report,
}

/// Aggregate of a batch; every mean is over the runs that produced an X.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BenchSummary {
    pub runs: usize,
    pub succeeded: usize,
    pub mean_objective: f64,
    pub mean_max_residual: f64,
    pub mean_eps_rank: f64,
    pub mean_empirical_eps: f64,
    /// Share of all runs with `ε-rank(V) ≤` the rank target.
    pub pct_eps_rank_le_target: f64,
    pub mean_wall_time_s: f64,
}

pub fn summarize(rows: &[BenchRow]) -> BenchSummary {
    let with_x: Vec<&Report> = rows.iter().map(|r| &r.report).filter(|r| r.x.is_some()).collect();
    let mean = |f: &dyn Fn(&Report) -> Option<f64>| {
        let vals: Vec<f64> = with_x.iter().filter_map(|r| f(r)).collect();
        if vals.is_empty() {
            f64::NAN
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };
    let within = rows
        .iter()
        .filter(|r| matches!((r.report.eps_rank, r.report.rank_target), (Some(e), Some(k)) if e <= k))
        .count();
    BenchSummary {
        runs: rows.len(),
        succeeded: rows.iter().filter(|r| r.exit == Exit::Success).count(),
        mean_objective: mean(&|r| r.objective),
        mean_max_residual: mean(&|r| Some(r.max_residual())),
        mean_eps_rank: mean(&|r| r.eps_rank.map(|v| v as f64)),
        mean_empirical_eps: mean(&|r| r.empirical_eps),
        pct_eps_rank_le_target: if rows.is_empty() {
            0.0
        } else {
            100.0 * within as f64 / rows.len() as f64
        },
        mean_wall_time_s: rows.iter().map(|r| r.report.wall_time_s).sum::<f64>() / rows.len().max(1) as f64,
    }
}

pub struct BenchArgs {
    pub file: PathBuf,
    pub settings: SettingsDoc,
    pub json: bool,
}

pub fn bench(args: &BenchArgs) -> Outcome {
    let path = args.file.as_path();
    let batch: BatchFile = match read_json(path) {
        Ok(b) => b,
        Err(e) => return e.into(),
    };
    let prepared = (|| {
        let configs = batch.configs(path)?;
        let eff = Effective::resolve(&args.settings.or(&batch.settings), path)?;
        Ok::<_, InputError>((configs, eff))
    })();
    let (configs, eff) = match prepared {
        Ok(p) => p,
        Err(e) => return e.into(),
    };
    let mut rows: Vec<BenchRow> = configs
        .par_iter()
        .map(|cfg| {
            let (mut report, exit) = match gen_instance(cfg).and_then(|i| i.formulation(batch.norm.kind())) {
                Ok(form) => solve_form(&form, batch.method, &eff),
                Err(e) => {
                    let mut r = Report::new("solve", "", batch.method.name(), eff.heuristic.eps);
                    let exit = error_status(&mut r, &e);
                    (r, exit)
                }
            };
            report.norm = Some(batch.norm.name());
            report.seed = Some(cfg.seed);
            BenchRow {
                seed: cfg.seed,
                exit,
                report,
            }
        })
        .collect();
    rows.sort_by_key(|r| r.seed);
    let summary = summarize(&rows);

    let mut out = String::new();
    for r in &rows {
        let rep = &r.report;
        out.push_str(&format!(
            "run {} status {} objective {} max_residual {} eps_rank {} empirical_eps {} caveat {} audit {} wall_time_s {:.6}\n",
            r.seed,
            rep.status,
            rep.objective.map_or("nan".into(), fmt_f),
            fmt_f(rep.max_residual()),
            rep.eps_rank.map_or("none".into(), |v| v.to_string()),
            rep.empirical_eps.map_or("nan".into(), fmt_f),
            rep.caveat,
            rep.audit,
            rep.wall_time_s
        ));
    }
    out.push_str(&format!("aggregate.runs {}\n", summary.runs));
    out.push_str(&format!("aggregate.succeeded {}\n", summary.succeeded));
    out.push_str(&format!("aggregate.mean_objective {}\n", fmt_f(summary.mean_objective)));
    out.push_str(&format!("aggregate.mean_max_residual {}\n", fmt_f(summary.mean_max_residual)));
    out.push_str(&format!("aggregate.mean_eps_rank {}\n", fmt_f(summary.mean_eps_rank)));
    out.push_str(&format!("aggregate.mean_empirical_eps {}\n", fmt_f(summary.mean_empirical_eps)));
    out.push_str(&format!("aggregate.pct_eps_rank_le_target {}\n", summary.pct_eps_rank_le_target));
    out.push_str(&format!("aggregate.mean_wall_time_s {:.6}\n", summary.mean_wall_time_s));

    if args.json {
        #[derive(serde::Serialize)]
        struct Doc<'a> {
            summary: &'a BenchSummary,
            runs: Vec<&'a Report>,
        }
        let doc = Doc {
            summary: &summary,
            runs: rows.iter().map(|r| &r.report).collect(),
        };
        let rp = report_path(path);
        if let Err(e) = std::fs::write(&rp, to_canonical(&doc)) {
            eprintln!("error: cannot write {}: {e}", rp.display());
        }
    }
    Outcome {
        stdout: out,
        exit: if summary.succeeded == summary.runs {
            Exit::Success
        } else {
            Exit::Unresolved
        },
    }
}

pub struct GraphIsoArgs {
    pub file_a: PathBuf,
    pub file_b: PathBuf,
    pub method: Option<MethodTag>,
    pub settings: SettingsDoc,
    pub json: bool,
}

pub fn graphiso(args: &GraphIsoArgs) -> Outcome {
    let loaded = (|| {
        let a = read_adjacency(&args.file_a)?;
        let b = read_adjacency(&args.file_b)?;
        let pair = GraphPair::new(a, b).map_err(|e| InputError::field(&args.file_b, "adjacency", e.to_string()))?;
        let eff = Effective::resolve(&args.settings, &args.file_a)?;
        let method = match args.method {
            None => Method::ConvexIteration,
            Some(tag) => tag.heuristic().ok_or_else(|| {
                InputError::field(&args.file_a, "--method", "graphiso supports trace, logdet or cvxiter")
            })?,
        };
        Ok::<_, InputError>((pair, eff, method))
    })();
    let (pair, eff, method) = match loaded {
        Ok(l) => l,
        Err(e) => return e.into(),
    };
    let start = Instant::now();
    let settings = GraphIsoSettings {
        gamma: eff.gamma.unwrap_or(GraphIsoSettings::default().gamma),
        method,
        heuristic: eff.heuristic,
    };
    let mut r = Report::new("graphiso", "", method_name(method), eff.heuristic.eps);
    r.norm = Some(NormTag::L1.name());
    let exit = match build_graph_iso(&pair).and_then(|form| Ok((solve_graph_iso(&pair, &settings)?, form))) {
        Ok((GraphIsoOutcome::Isomorphic { p, run, .. }, form)) => {
            r.status = "isomorphic".into();
            r.heuristic_iterations = run.map(|run| run.iterates.len());
            r.describe_x(&form, &p, None);
            r.audit(&form);
            Exit::Success
        }
        Ok((GraphIsoOutcome::NotIsomorphic { reason }, _)) => {
            r.status = "not_isomorphic".into();
            r.message = Some(reason);
            Exit::Infeasible
        }
        Ok((GraphIsoOutcome::Unresolved { run }, _)) => {
            r.status = "unresolved".into();
            r.heuristic_iterations = run.map(|run| run.iterates.len());
            Exit::Unresolved
        }
        Err(e) => error_status(&mut r, &e),
    };
    r.wall_time_s = start.elapsed().as_secs_f64();
    if args.json {
        write_report(&args.file_a, &r);
    }
    Outcome {
        stdout: r.to_lines(),
        exit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::input::parse_json;

    #[test]
    fn generated_files_round_trip_byte_for_byte() {
        for (kind, seed) in [(GenKind::Orthogonal, 1), (GenKind::Oblique, 9), (GenKind::Permutation, 4)] {
            let out = gen(&GenArgs {
                kind,
                m: 4,
                n: 4,
                p: 10,
                q: 4,
                noise: 0.5,
                seed,
                norm: NormTag::Fro,
                edge_prob: 0.5,
                out: None,
                out_b: None,
            });
            assert_eq!(out.exit, Exit::Success);
            let parsed: ProblemFile = parse_json(Path::new("gen.json"), &out.stdout).unwrap();
            assert_eq!(to_canonical(&parsed), out.stdout);
        }
    }

    #[test]
    fn summary_counts_rank_share_over_all_runs() {
        let row = |seed, rank: Option<usize>, exit| {
            let mut report = Report::new("solve", "completed", "bisect", 1e-6);
            report.rank_target = Some(2);
            report.eps_rank = rank;
            report.objective = rank.map(|_| 1.0);
            report.x = rank.map(|_| vec![vec![1.0]]);
            BenchRow { seed, exit, report }
        };
        let rows = [
            row(0, Some(2), Exit::Success),
            row(1, Some(3), Exit::Success),
            row(2, None, Exit::Unresolved),
            row(3, Some(1), Exit::Success),
        ];
        let s = summarize(&rows);
        assert_eq!(s.runs, 4);
        assert_eq!(s.succeeded, 3);
        assert_eq!(s.pct_eps_rank_le_target, 50.0);
        assert_eq!(s.mean_eps_rank, 2.0);
        assert_eq!(s.mean_objective, 1.0);
    }
}
