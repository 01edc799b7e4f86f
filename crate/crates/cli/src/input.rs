//! Problem files, adjacency files and batch descriptors.
//!
//! All three are JSON documents. Matrices are nested row-major arrays.
//! Serialization is canonical: `serde_json` pretty printing with shortest
//! round-trip floats, so reading a written file and writing it again gives
//! the same bytes.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use procrustes_sdp::apps::{GeneratorConfig, Instance, PlantedKind};
use procrustes_sdp::constraints::{Constraint, ConstraintSet, LinearRowX, Relation};
use procrustes_sdp::reformulate::{LinearMapSpec, MapKind, NormKind};
use procrustes_sdp::rankopt::Method;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Malformed input, located by line/column (syntax) or field (content).
#[derive(Debug, Clone, PartialEq)]
pub struct InputError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl InputError {
    pub fn field(path: &Path, field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.to_path_buf(),
            line: None,
            column: None,
            field: Some(field.into()),
            message: message.into(),
        }
    }
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.path.display())?;
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, ":{l}:{c}")?;
        }
        if let Some(field) = &self.field {
            write!(f, ": field `{field}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for InputError {}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, InputError> {
    let text = std::fs::read_to_string(path).map_err(|e| InputError {
        path: path.to_path_buf(),
        line: None,
        column: None,
        field: None,
        message: e.to_string(),
    })?;
    parse_json(path, &text)
}

pub fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T, InputError> {
    serde_json::from_str(text).map_err(|e| InputError {
        path: path.to_path_buf(),
        line: Some(e.line()),
        column: Some(e.column()),
        field: None,
        message: strip_location(&e.to_string()),
    })
}

fn strip_location(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

pub fn to_canonical<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents serialize");
    s.push('\n');
    s
}

pub type Rows = Vec<Vec<f64>>;

pub fn matrix_from_rows(path: &Path, field: &str, rows: &Rows) -> Result<DMatrix<f64>, InputError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(InputError::field(path, field, "matrix must have at least one row and one column"));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != c {
            return Err(InputError::field(
                path,
                format!("{field}[{i}]"),
                format!("row has {} entries, expected {c}", row.len()),
            ));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(InputError::field(path, format!("{field}[{i}][{j}]"), "entry is not finite"));
        }
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn rows_from_matrix(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapTag {
    Standard,
    Weighted,
    TwoSided,
    PartialTarget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum NormTag {
    Fro,
    L1,
    Linf,
    L2,
}

impl NormTag {
    pub fn kind(self) -> NormKind {
        match self {
            NormTag::Fro => NormKind::Frobenius,
            NormTag::L1 => NormKind::L1,
            NormTag::Linf => NormKind::LInf,
            NormTag::L2 => NormKind::L2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NormTag::Fro => "fro",
            NormTag::L1 => "l1",
            NormTag::Linf => "linf",
            NormTag::L2 => "l2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MethodTag {
    Relax,
    Trace,
    Logdet,
    Cvxiter,
    Bisect,
}

impl MethodTag {
    /// The rank heuristic behind this tag, if it is one.
    pub fn heuristic(self) -> Option<Method> {
        match self {
            MethodTag::Trace => Some(Method::Trace),
            MethodTag::Logdet => Some(Method::LogDet),
            MethodTag::Cvxiter => Some(Method::ConvexIteration),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MethodTag::Relax => "relax",
            MethodTag::Trace => "trace",
            MethodTag::Logdet => "logdet",
            MethodTag::Cvxiter => "cvxiter",
            MethodTag::Bisect => "bisect",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelTag {
    Le,
    Eq,
    Ge,
}

impl RelTag {
    fn relation(self) -> Relation {
        match self {
            RelTag::Le => Relation::Le,
            RelTag::Eq => Relation::Eq,
            RelTag::Ge => Relation::Ge,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearRowDoc {
    pub coeffs: Rows,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintDoc {
    Orthogonal,
    Oblique,
    Projection,
    Nonnegative,
    PsdVariable,
    QuadUpper(Rows),
    QuadEq(Rows),
    QuadLower(Rows),
    LinearEq(Vec<LinearRowDoc>),
    LinearIneq(Vec<LinearRowDoc>),
    TraceQuad { rel: RelTag, value: f64 },
    DiagQuad { rel: RelTag, values: Vec<f64> },
}

impl ConstraintDoc {
    fn to_constraint(&self, path: &Path, field: &str) -> Result<Constraint, InputError> {
        let rows = |docs: &[LinearRowDoc]| -> Result<Vec<LinearRowX>, InputError> {
            docs.iter()
                .enumerate()
                .map(|(i, r)| {
                    let f = format!("{field}[{i}].coeffs");
                    Ok(LinearRowX::new(matrix_from_rows(path, &f, &r.coeffs)?, r.rhs))
                })
                .collect()
        };
        Ok(match self {
            ConstraintDoc::Orthogonal => Constraint::Orthogonal,
            ConstraintDoc::Oblique => Constraint::Oblique,
            ConstraintDoc::Projection => Constraint::Projection,
            ConstraintDoc::Nonnegative => Constraint::NonnegativeEntries,
            ConstraintDoc::PsdVariable => Constraint::PsdVariable,
            ConstraintDoc::QuadUpper(g) => Constraint::QuadUpper(matrix_from_rows(path, field, g)?),
            ConstraintDoc::QuadEq(g) => Constraint::QuadEq(matrix_from_rows(path, field, g)?),
            ConstraintDoc::QuadLower(g) => Constraint::QuadLower(matrix_from_rows(path, field, g)?),
            ConstraintDoc::LinearEq(r) => Constraint::LinearEq(rows(r)?),
            ConstraintDoc::LinearIneq(r) => Constraint::LinearIneq(rows(r)?),
            ConstraintDoc::TraceQuad { rel, value } => Constraint::TraceQuad(rel.relation(), *value),
            ConstraintDoc::DiagQuad { rel, values } => {
                Constraint::DiagQuad(rel.relation(), DVector::from_vec(values.clone()))
            }
        })
    }
}

/// Per-file overrides of the command-line defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingsDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_rank: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Heuristic used by the bisection oracle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<MethodTag>,
}

impl SettingsDoc {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    /// `self` where set, otherwise `fallback`.
    pub fn or(&self, fallback: &SettingsDoc) -> SettingsDoc {
        SettingsDoc {
            delta: self.delta.or(fallback.delta),
            eps_rank: self.eps_rank.or(fallback.eps_rank),
            gamma: self.gamma.or(fallback.gamma),
            max_iters: self.max_iters.or(fallback.max_iters),
            tol: self.tol.or(fallback.tol),
            inner: self.inner.or(fallback.inner),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub map: MapTag,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Rows>,
    #[serde(rename = "C")]
    pub c: Rows,
    #[serde(rename = "W", default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Rows>,
    pub norm: NormTag,
    #[serde(default)]
    pub constraints: Vec<ConstraintDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodTag>,
    #[serde(default, skip_serializing_if = "SettingsDoc::is_empty")]
    pub settings: SettingsDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ProblemFile {
    pub fn spec(&self, path: &Path) -> Result<LinearMapSpec, InputError> {
        let a = matrix_from_rows(path, "A", &self.a)?;
        let c = matrix_from_rows(path, "C", &self.c)?;
        let need = |field: &str, m: &Option<Rows>| -> Result<DMatrix<f64>, InputError> {
            match m {
                Some(rows) => matrix_from_rows(path, field, rows),
                None => Err(InputError::field(path, field, format!("required by map `{:?}`", self.map))),
            }
        };
        let unused = |field: &str, m: &Option<Rows>| -> Result<(), InputError> {
            match m {
                Some(_) => Err(InputError::field(path, field, format!("not used by map `{:?}`", self.map))),
                None => Ok(()),
            }
        };
        let spec = match self.map {
            MapTag::Standard => {
                unused("B", &self.b)?;
                unused("W", &self.w)?;
                LinearMapSpec::standard(a, c)
            }
            MapTag::Weighted => {
                unused("W", &self.w)?;
                LinearMapSpec::weighted(a, need("B", &self.b)?, c)
            }
            MapTag::TwoSided => {
                unused("B", &self.b)?;
                unused("W", &self.w)?;
                LinearMapSpec::two_sided(a, c)
            }
            MapTag::PartialTarget => LinearMapSpec::partial_target(a, need("B", &self.b)?, c, need("W", &self.w)?),
        };
        spec.map_err(|e| InputError::field(path, "map", e.to_string()))
    }

    pub fn constraint_set(&self, path: &Path) -> Result<ConstraintSet, InputError> {
        self.constraints
            .iter()
            .enumerate()
            .map(|(i, c)| c.to_constraint(path, &format!("constraints[{i}]")))
            .collect::<Result<Vec<_>, _>>()
            .map(ConstraintSet::new)
    }

    pub fn from_instance(inst: &Instance, norm: NormTag) -> Self {
        let spec = &inst.spec;
        let weighted = spec.kind == MapKind::Weighted;
        let constraints = match inst.config.planted {
            PlantedKind::Orthogonal => vec![ConstraintDoc::Orthogonal],
            PlantedKind::Oblique => vec![ConstraintDoc::Oblique],
            PlantedKind::Permutation => vec![ConstraintDoc::Orthogonal, ConstraintDoc::Nonnegative],
        };
        ProblemFile {
            map: if weighted { MapTag::Weighted } else { MapTag::Standard },
            a: rows_from_matrix(&spec.a),
            b: weighted.then(|| rows_from_matrix(&spec.b)),
            c: rows_from_matrix(&spec.c),
            w: None,
            norm,
            constraints,
            method: None,
            settings: SettingsDoc::default(),
            seed: Some(inst.config.seed),
        }
    }
}

pub fn read_adjacency(path: &Path) -> Result<DMatrix<f64>, InputError> {
    let rows: Rows = read_json(path)?;
    matrix_from_rows(path, "adjacency", &rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum KindTag {
    Orthogonal,
    Oblique,
    Permutation,
}

impl KindTag {
    pub fn planted(self) -> PlantedKind {
        match self {
            KindTag::Orthogonal => PlantedKind::Orthogonal,
            KindTag::Oblique => PlantedKind::Oblique,
            KindTag::Permutation => PlantedKind::Permutation,
        }
    }
}

/// A replicated experiment: one generated instance per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchFile {
    pub kind: KindTag,
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    #[serde(default)]
    pub noise: f64,
    pub norm: NormTag,
    #[serde(default = "default_method")]
    pub method: MethodTag,
    #[serde(default)]
    pub seed_start: u64,
    pub count: usize,
    #[serde(default)]
    pub settings: SettingsDoc,
}

fn default_method() -> MethodTag {
    MethodTag::Bisect
}

impl BatchFile {
    pub fn configs(&self, path: &Path) -> Result<Vec<GeneratorConfig>, InputError> {
        if self.count == 0 {
            return Err(InputError::field(path, "count", "must be positive"));
        }
        (0..self.count as u64)
            .map(|i| {
                let cfg = GeneratorConfig {
                    m: self.m,
                    n: self.n,
                    p: self.p,
                    q: self.q,
                    seed: self.seed_start + i,
                    planted: self.kind.planted(),
                    noise: self.noise,
                };
                cfg.validate()
                    .map(|_| cfg)
                    .map_err(|e| InputError::field(path, "kind", e.to_string()))
            })
            .collect()
    }
}
