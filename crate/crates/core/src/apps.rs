//! Instance generators and the three applications: permutation search,
//! graph isomorphism and orthogonal least squares regression (OLSR).
//!
//! All random data comes from `ChaCha8Rng::seed_from_u64(seed)` with standard
//! normal entries drawn by `rand_distr::StandardNormal`, filling matrices in
//! column-major order. An instance draws, in this order, the planted `X`,
//! then `A`, `B` and `Δ`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bisect::{bisection_solve, BisectRun, BisectSettings};
use crate::constraints::{Constraint, ConstraintSet, LinearRowX};
use crate::error::{Error, Result};
use crate::formulation::Formulation;
use crate::matcore::eps_rank;
use crate::rankopt::{rank_feasibility, HeuristicSettings, Method, OracleOutcome, RankRun};
use crate::reformulate::{apply_map, norm_value, LinearMapSpec, NormKind};

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn orthogonal_from<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if m < n {
        return Err(Error::InvalidArgument(format!("orthonormal columns need m >= n, got {m}x{n}")));
    }
    loop {
        let g = gaussian(m, n, rng);
        let qr = g.qr();
        let r = qr.r();
        if (0..n).any(|i| r[(i, i)].abs() < 1e-10) {
            continue;
        }
        let mut q = qr.q();
        // sign-fix so that R has a positive diagonal
        for i in 0..n {
            if r[(i, i)] < 0.0 {
                q.column_mut(i).neg_mut();
            }
        }
        return Ok(q);
    }
}

fn oblique_from<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if m == 0 {
        return Err(Error::InvalidArgument("oblique matrices need m >= 1".into()));
    }
    loop {
        let mut x = gaussian(m, n, rng);
        if x.column_iter().any(|c| c.norm() == 0.0) {
            continue;
        }
        for mut c in x.column_iter_mut() {
            let nrm = c.norm();
            c /= nrm;
        }
        return Ok(x);
    }
}

fn permutation_from<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    permutation_matrix(&perm)
}

/// `P` with `P[perm[j], j] = 1`, i.e. `P e_j = e_{perm[j]}`.
pub fn permutation_matrix(perm: &[usize]) -> DMatrix<f64> {
    let n = perm.len();
    let mut p = DMatrix::zeros(n, n);
    for (j, &i) in perm.iter().enumerate() {
        p[(i, j)] = 1.0;
    }
    p
}

/// `m×n` with orthonormal columns: QR of a seeded Gaussian matrix with the
/// signs fixed so that `R` has a positive diagonal.
pub fn gen_orthogonal(m: usize, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    orthogonal_from(m, n, &mut rng_from_seed(seed))
}

/// `m×n` with unit-norm columns (a Gaussian matrix with normalized columns).
pub fn gen_oblique(m: usize, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    oblique_from(m, n, &mut rng_from_seed(seed))
}

pub fn gen_permutation(n: usize, seed: u64) -> DMatrix<f64> {
    permutation_from(n, &mut rng_from_seed(seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlantedKind {
    Orthogonal,
    Oblique,
    Permutation,
}

impl PlantedKind {
    pub fn constraints(&self) -> ConstraintSet {
        match self {
            PlantedKind::Orthogonal => ConstraintSet::new(vec![Constraint::Orthogonal]),
            PlantedKind::Oblique => ConstraintSet::new(vec![Constraint::Oblique]),
            PlantedKind::Permutation => {
                ConstraintSet::new(vec![Constraint::Orthogonal, Constraint::NonnegativeEntries])
            }
        }
    }
}

/// Dimensions follow `A: p×m`, `X: m×n`, `B: n×q`, `C: p×q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorConfig {
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub seed: u64,
    pub planted: PlantedKind,
    /// Coefficient of `Δ` in `C = AXB + noise·Δ`.
    pub noise: f64,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let GeneratorConfig { m, n, p, q, .. } = *self;
        if m == 0 || n == 0 || p == 0 || q == 0 {
            return Err(Error::InvalidArgument(format!("dimensions must be positive, got ({m},{n},{p},{q})")));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::InvalidArgument(format!("noise must be finite and >= 0, got {}", self.noise)));
        }
        match self.planted {
            PlantedKind::Orthogonal if m < n => Err(Error::DimensionMismatch(format!(
                "orthogonal X needs m >= n, got {m}x{n}"
            ))),
            PlantedKind::Permutation if m != n || q != n => Err(Error::DimensionMismatch(format!(
                "permutation instances need dims (n,n,p,n), got ({m},{n},{p},{q})"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub spec: LinearMapSpec,
    pub planted: DMatrix<f64>,
    pub delta: DMatrix<f64>,
    pub config: GeneratorConfig,
}

impl Instance {
    pub fn constraints(&self) -> ConstraintSet {
        self.config.planted.constraints()
    }

    pub fn formulation(&self, norm: NormKind) -> Result<Formulation> {
        Formulation::new(&self.spec, norm, self.constraints())
    }
}

/// `C = AXB + noise·Δ` around a planted `X`. Permutation instances use the
/// standard map `C − AX` (no `B` is drawn); the others use `C − AXB`.
pub fn gen_instance(cfg: &GeneratorConfig) -> Result<Instance> {
    cfg.validate()?;
    let GeneratorConfig { m, n, p, q, .. } = *cfg;
    let mut rng = rng_from_seed(cfg.seed);
    let planted = match cfg.planted {
        PlantedKind::Orthogonal => orthogonal_from(m, n, &mut rng)?,
        PlantedKind::Oblique => oblique_from(m, n, &mut rng)?,
        PlantedKind::Permutation => permutation_from(n, &mut rng),
    };
    let a = gaussian(p, m, &mut rng);
    let (spec, delta) = if cfg.planted == PlantedKind::Permutation {
        let delta = gaussian(p, n, &mut rng);
        let c = &a * &planted + &delta * cfg.noise;
        (LinearMapSpec::standard(a, c)?, delta)
    } else {
        let b = gaussian(n, q, &mut rng);
        let delta = gaussian(p, q, &mut rng);
        let c = &a * &planted * &b + &delta * cfg.noise;
        (LinearMapSpec::weighted(a, b, c)?, delta)
    };
    Ok(Instance {
        spec,
        planted,
        delta,
        config: *cfg,
    })
}

/// `min ‖C − AX‖` over permutation matrices, written as orthogonal `X` with
/// nonnegative entries.
pub fn build_permutation_opp(a: DMatrix<f64>, c: DMatrix<f64>, norm: NormKind) -> Result<Formulation> {
    let spec = LinearMapSpec::standard(a, c)?;
    if spec.m != spec.n {
        return Err(Error::DimensionMismatch(format!(
            "a permutation X must be square, got {}x{}",
            spec.m, spec.n
        )));
    }
    Formulation::new(&spec, norm, PlantedKind::Permutation.constraints())
}

/// Residuals measuring how far a square `X` is from a permutation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermutationReport {
    /// `‖X𝟙 − 𝟙‖₁`
    pub row_sums: f64,
    /// `‖Xᵀ𝟙 − 𝟙‖₁`
    pub col_sums: f64,
    /// `‖o_max − 𝟙‖₁` over the `n` largest entries.
    pub o_max: f64,
    /// `‖z_min‖₁` over the `n(n−1)` smallest entries.
    pub z_min: f64,
}

impl PermutationReport {
    pub fn max(&self) -> f64 {
        self.row_sums.max(self.col_sums).max(self.o_max).max(self.z_min)
    }
}

pub fn permutation_criteria(x: &DMatrix<f64>) -> Result<PermutationReport> {
    let (n, k) = x.shape();
    if n != k {
        return Err(Error::DimensionMismatch(format!("expected a square matrix, got {n}x{k}")));
    }
    let row_sums = x.row_iter().map(|r| (r.sum() - 1.0).abs()).sum();
    let col_sums = x.column_iter().map(|c| (c.sum() - 1.0).abs()).sum();
    let mut entries: Vec<f64> = x.iter().copied().collect();
    entries.sort_by(|a, b| b.total_cmp(a));
    let o_max = entries[..n].iter().map(|v| (v - 1.0).abs()).sum();
    let z_min = entries[n..].iter().map(|v| v.abs()).sum();
    Ok(PermutationReport {
        row_sums,
        col_sums,
        o_max,
        z_min,
    })
}

/// Two simple undirected graphs on the same vertex set size.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPair {
    pub a: DMatrix<f64>,
    pub a_tilde: DMatrix<f64>,
}

fn check_adjacency(name: &str, a: &DMatrix<f64>) -> Result<()> {
    let (n, k) = a.shape();
    if n != k {
        return Err(Error::DimensionMismatch(format!("{name} must be square, got {n}x{k}")));
    }
    for i in 0..n {
        if a[(i, i)] != 0.0 {
            return Err(Error::InvalidArgument(format!("{name} has a loop at vertex {i}")));
        }
        for j in 0..n {
            let v = a[(i, j)];
            if v != 0.0 && v != 1.0 {
                return Err(Error::InvalidArgument(format!("{name}[{i},{j}] = {v} is not 0/1")));
            }
            if v != a[(j, i)] {
                return Err(Error::InvalidArgument(format!("{name} is not symmetric at ({i},{j})")));
            }
        }
    }
    Ok(())
}

impl GraphPair {
    pub fn new(a: DMatrix<f64>, a_tilde: DMatrix<f64>) -> Result<Self> {
        check_adjacency("A", &a)?;
        check_adjacency("Ã", &a_tilde)?;
        if a.nrows() != a_tilde.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "graphs have {} and {} vertices",
                a.nrows(),
                a_tilde.nrows()
            )));
        }
        Ok(Self { a, a_tilde })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn degree_sequences_match(&self) -> bool {
        let degrees = |m: &DMatrix<f64>| {
            let mut d: Vec<u64> = m.row_iter().map(|r| r.sum() as u64).collect();
            d.sort_unstable();
            d
        };
        degrees(&self.a) == degrees(&self.a_tilde)
    }

    /// `‖PA − ÃP‖₁` (largest absolute column sum).
    pub fn residual(&self, p: &DMatrix<f64>) -> f64 {
        norm_value(NormKind::L1, &(p * &self.a - &self.a_tilde * p))
    }
}

/// Erdős–Rényi `G(n, edge_prob)` adjacency matrix.
pub fn random_graph<R: Rng + ?Sized>(n: usize, edge_prob: f64, rng: &mut R) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..j {
            if rng.random::<f64>() < edge_prob {
                a[(i, j)] = 1.0;
                a[(j, i)] = 1.0;
            }
        }
    }
    a
}

/// A random graph and a random relabeling `Ã = PAPᵀ`; returns the pair and
/// `P`, which satisfies `PA = ÃP`.
pub fn gen_isomorphic_pair(n: usize, edge_prob: f64, seed: u64) -> Result<(GraphPair, DMatrix<f64>)> {
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::InvalidArgument(format!("edge probability {edge_prob} outside [0, 1]")));
    }
    let mut rng = rng_from_seed(seed);
    let a = random_graph(n, edge_prob, &mut rng);
    let p = permutation_from(n, &mut rng);
    let a_tilde = &p * &a * p.transpose();
    Ok((GraphPair::new(a, a_tilde)?, p))
}

/// `P𝟙 = 𝟙` and `Pᵀ𝟙 = 𝟙` as linear rows.
pub fn unit_sum_rows(n: usize) -> Vec<LinearRowX> {
    let mut rows = Vec::with_capacity(2 * n);
    for i in 0..n {
        let mut r = DMatrix::zeros(n, n);
        r.row_mut(i).fill(1.0);
        rows.push(LinearRowX::new(r, 1.0));
        let mut c = DMatrix::zeros(n, n);
        c.column_mut(i).fill(1.0);
        rows.push(LinearRowX::new(c, 1.0));
    }
    rows
}

/// `min ‖ÃP − PA‖₁` over orthogonal `P` with nonnegative entries, the
/// two-sided map `CX − XA` with `C = Ã`. Unit row and column sums are added;
/// they hold for every permutation and keep `P = 0` out of the relaxation.
pub fn build_graph_iso(pair: &GraphPair) -> Result<Formulation> {
    let spec = LinearMapSpec::two_sided(pair.a.clone(), pair.a_tilde.clone())?;
    let cs = PlantedKind::Permutation
        .constraints()
        .with(Constraint::LinearEq(unit_sum_rows(pair.order())));
    Formulation::new(&spec, NormKind::L1, cs)
}

#[derive(Debug, Clone)]
pub enum GraphIsoOutcome {
    /// A `P` with `‖PA − ÃP‖₁ ≤ γ` that passed verification.
    Isomorphic {
        p: DMatrix<f64>,
        residual: f64,
        rank_v: usize,
        run: Option<RankRun>,
    },
    /// Degree sequences differ, or the relaxation at level `γ` is infeasible.
    NotIsomorphic { reason: String },
    Unresolved { run: Option<RankRun> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphIsoSettings {
    pub gamma: f64,
    pub method: Method,
    pub heuristic: HeuristicSettings,
}

impl Default for GraphIsoSettings {
    fn default() -> Self {
        Self {
            gamma: 1e-6,
            method: Method::ConvexIteration,
            heuristic: HeuristicSettings::default(),
        }
    }
}

/// Searches for a permutation `P` with `PA = ÃP` through the rank oracle at
/// level `γ`.
pub fn solve_graph_iso(pair: &GraphPair, settings: &GraphIsoSettings) -> Result<GraphIsoOutcome> {
    if !pair.degree_sequences_match() {
        return Ok(GraphIsoOutcome::NotIsomorphic {
            reason: "degree sequences differ".into(),
        });
    }
    let form = build_graph_iso(pair)?;
    Ok(match rank_feasibility(&form, settings.gamma, settings.method, &settings.heuristic)? {
        OracleOutcome::Feasible { x, run, .. } => {
            let rank_v = v_rank(&x, settings.heuristic.eps)?;
            GraphIsoOutcome::Isomorphic {
                residual: pair.residual(&x),
                p: x,
                rank_v,
                run,
            }
        }
        OracleOutcome::Infeasible { .. } => GraphIsoOutcome::NotIsomorphic {
            reason: format!("relaxation infeasible at level {:e}", settings.gamma),
        },
        OracleOutcome::Unresolved { run } => GraphIsoOutcome::Unresolved { run },
    })
}

/// ε-rank of `V = [[I, X], [Xᵀ, XᵀX]]` for an orthogonality-type point.
pub fn v_rank(x: &DMatrix<f64>, eps: f64) -> Result<usize> {
    let v = crate::constraints::assemble_v(x, &(x.transpose() * x))?;
    eps_rank(&v, eps)
}

/// Samples and class indicators for orthogonal least squares regression,
/// `min ‖SᵀX + 𝟙bᵀ − Kᵀ‖_F` over orthogonal `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsrData {
    /// `m×p`, one sample per column.
    pub s: DMatrix<f64>,
    /// `n×p`, column `j` is the indicator of the class of sample `j`.
    pub k: DMatrix<f64>,
}

impl OlsrData {
    pub fn new(s: DMatrix<f64>, k: DMatrix<f64>) -> Result<Self> {
        if s.ncols() != k.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "S has {} samples but K has {}",
                s.ncols(),
                k.ncols()
            )));
        }
        for (j, col) in k.column_iter().enumerate() {
            let ones = col.iter().filter(|&&v| v == 1.0).count();
            let zeros = col.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != col.len() {
                return Err(Error::InvalidArgument(format!("column {j} of K is not a unit basis vector")));
            }
        }
        Ok(Self { s, k })
    }

    pub fn samples(&self) -> usize {
        self.s.ncols()
    }

    /// `h(X, b) = ‖SᵀX + 𝟙bᵀ − Kᵀ‖_F²`
    pub fn objective(&self, x: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
        let p = self.samples();
        let ones = DVector::from_element(p, 1.0);
        (self.s.transpose() * x + ones * b.transpose() - self.k.transpose()).norm_squared()
    }
}

/// Synthetic data: `m` features, `p` samples, `n` classes assigned round
/// robin, class means drawn Gaussian and samples scattered around them.
pub fn gen_olsr(m: usize, p: usize, n: usize, seed: u64) -> Result<OlsrData> {
    if m == 0 || p == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!("dimensions must be positive, got ({m},{p},{n})")));
    }
    let mut rng = rng_from_seed(seed);
    let means = gaussian(m, n, &mut rng);
    let noise = gaussian(m, p, &mut rng);
    let mut s = DMatrix::zeros(m, p);
    let mut k = DMatrix::zeros(n, p);
    for j in 0..p {
        let c = j % n;
        k[(c, j)] = 1.0;
        s.set_column(j, &(means.column(c) + noise.column(j) * 0.5));
    }
    OlsrData::new(s, k)
}

/// The centered problem `‖C − AX‖_F` equivalent to OLSR once the bias is
/// eliminated.
#[derive(Debug, Clone)]
pub struct OlsrReduction {
    pub spec: LinearMapSpec,
    pub data: OlsrData,
}

impl OlsrReduction {
    /// Optimal bias for a given `X`: `b = (K𝟙 − XᵀS𝟙)/p`.
    pub fn bias(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let p = self.data.samples();
        let ones = DVector::from_element(p, 1.0);
        (&self.data.k * &ones - x.transpose() * (&self.data.s * &ones)) / p as f64
    }

    /// `h(X, b(X))`
    pub fn full_objective(&self, x: &DMatrix<f64>) -> f64 {
        self.data.objective(x, &self.bias(x))
    }

    /// `‖C − AX‖_F²`
    pub fn reduced_objective(&self, x: &DMatrix<f64>) -> Result<f64> {
        Ok(apply_map(&self.spec, x)?.norm_squared())
    }
}

/// `A = HSᵀ`, `C = HKᵀ` with the centering matrix `H = I − 𝟙𝟙ᵀ/p`.
pub fn olsr_reduce(data: &OlsrData) -> Result<OlsrReduction> {
    let p = data.samples();
    if p == 0 {
        return Err(Error::InvalidArgument("OLSR needs at least one sample".into()));
    }
    let h = DMatrix::identity(p, p) - DMatrix::from_element(p, p, 1.0 / p as f64);
    let a = &h * data.s.transpose();
    let c = &h * data.k.transpose();
    Ok(OlsrReduction {
        spec: LinearMapSpec::standard(a, c)?,
        data: data.clone(),
    })
}

/// Bisection on an OLSR reduction with orthogonal `X` under `norm`.
pub fn solve_olsr(red: &OlsrReduction, norm: NormKind, settings: &BisectSettings) -> Result<BisectRun> {
    let form = Formulation::new(&red.spec, norm, PlantedKind::Orthogonal.constraints())?;
    bisection_solve(&form, settings)
}
