//! Feasible sets for `X` (m×n) as linear rows, PSD blocks and a rank target.
//!
//! The quadratic constraints share one construction: the block
//!
//! ```text
//! V = [[I_m, X], [Xᵀ, G]] ⪰ 0
//! ```
//!
//! is equivalent to `XᵀX ⪯ G`, and with `rank(V) = m` to `XᵀX = G`. The
//! lower-right corner is pinned, left variable, or aliased depending on the
//! constraint.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matcore::{eigen, svd, SymMatrix};
use crate::reformulate::XLocator;
use crate::sdp::{BlockId, BlockKind, SdpProblem, SdpSolution, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    /// Amount by which `lhs rel rhs` is violated.
    pub fn violation(&self, lhs: f64, rhs: f64) -> f64 {
        match self {
            Relation::Le => (lhs - rhs).max(0.0),
            Relation::Eq => (lhs - rhs).abs(),
            Relation::Ge => (rhs - lhs).max(0.0),
        }
    }
}

/// `⟨coeffs, X⟩ = rhs` (or `≤ rhs` inside [`Constraint::LinearIneq`]).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRowX {
    pub coeffs: DMatrix<f64>,
    pub rhs: f64,
}

impl LinearRowX {
    pub fn new(coeffs: DMatrix<f64>, rhs: f64) -> Self {
        Self { coeffs, rhs }
    }

    pub fn eval(&self, x: &DMatrix<f64>) -> f64 {
        self.coeffs.dot(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// `XᵀX ⪯ G`
    QuadUpper(DMatrix<f64>),
    /// `XᵀX = G`
    QuadEq(DMatrix<f64>),
    /// `XᵀX ⪰ G`
    QuadLower(DMatrix<f64>),
    /// `XᵀX = I_n`
    Orthogonal,
    /// `diag(XᵀX) = 1`
    Oblique,
    /// `XᵀX = X`, square `X`
    Projection,
    /// `X ≥ 0` entrywise
    NonnegativeEntries,
    LinearEq(Vec<LinearRowX>),
    /// rows read as `⟨coeffs, X⟩ ≤ rhs`
    LinearIneq(Vec<LinearRowX>),
    /// `tr(XᵀX) rel g`
    TraceQuad(Relation, f64),
    /// `diag(XᵀX) rel h` entrywise
    DiagQuad(Relation, DVector<f64>),
    /// `X = Xᵀ ⪰ 0`
    PsdVariable,
}

impl Constraint {
    pub fn label(&self) -> &'static str {
        match self {
            Constraint::QuadUpper(_) => "quad_upper",
            Constraint::QuadEq(_) => "quad_eq",
            Constraint::QuadLower(_) => "quad_lower",
            Constraint::Orthogonal => "orthogonality",
            Constraint::Oblique => "obliqueness",
            Constraint::Projection => "projection",
            Constraint::NonnegativeEntries => "negativity",
            Constraint::LinearEq(_) => "linear_eq",
            Constraint::LinearIneq(_) => "linear_ineq",
            Constraint::TraceQuad(..) => "trace_quad",
            Constraint::DiagQuad(..) => "diag_quad",
            Constraint::PsdVariable => "psd_variable",
        }
    }

    fn owns_v(&self) -> bool {
        matches!(
            self,
            Constraint::QuadUpper(_)
                | Constraint::QuadEq(_)
                | Constraint::QuadLower(_)
                | Constraint::Orthogonal
                | Constraint::Oblique
                | Constraint::Projection
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintSet {
    pub items: Vec<Constraint>,
}

impl ConstraintSet {
    pub fn new(items: Vec<Constraint>) -> Self {
        Self { items }
    }

    pub fn with(mut self, c: Constraint) -> Self {
        self.items.push(c);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// The constraint owning the V block, if any.
    pub fn owner(&self) -> Option<&Constraint> {
        self.items.iter().find(|c| c.owns_v())
    }

    /// Nearest point (Frobenius) on the owner's set for orthogonal and
    /// oblique owners; `None` for everything else. Other items are ignored,
    /// so the result still needs [`verify`].
    pub fn project(&self, x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        let (m, n) = x.shape();
        match self.owner()? {
            Constraint::Orthogonal if m >= n => {
                let d = svd(x);
                Some(&d.u * d.v.transpose())
            }
            Constraint::Oblique if m > 0 => {
                let mut y = x.clone();
                for mut col in y.column_iter_mut() {
                    let nrm = col.norm();
                    if nrm > 0.0 {
                        col /= nrm;
                    } else {
                        col.fill(0.0);
                        col[0] = 1.0;
                    }
                }
                Some(y)
            }
            _ => None,
        }
    }

    pub fn validate(&self, m: usize, n: usize) -> Result<()> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidArgument(format!("X must be non-empty, got {m}x{n}")));
        }
        let owners: Vec<&str> = self.items.iter().filter(|c| c.owns_v()).map(|c| c.label()).collect();
        if owners.len() > 1 {
            return Err(Error::InvalidArgument(format!(
                "at most one quadratic constraint may own the V block, got {}",
                owners.join(", ")
            )));
        }
        for c in &self.items {
            match c {
                Constraint::QuadUpper(g) | Constraint::QuadEq(g) | Constraint::QuadLower(g) => {
                    check_sym(g, n)?
                }
                Constraint::Orthogonal if m < n => {
                    return Err(Error::InvalidArgument(format!(
                        "orthonormal columns need m >= n, got {m}x{n}"
                    )))
                }
                Constraint::Projection | Constraint::PsdVariable if m != n => {
                    return Err(Error::InvalidArgument(format!(
                        "{} needs a square X, got {m}x{n}",
                        c.label()
                    )))
                }
                Constraint::LinearEq(rows) | Constraint::LinearIneq(rows) => {
                    for r in rows {
                        if r.coeffs.shape() != (m, n) {
                            return Err(Error::DimensionMismatch(format!(
                                "linear row coefficients are {}x{}, expected {m}x{n}",
                                r.coeffs.nrows(),
                                r.coeffs.ncols()
                            )));
                        }
                        if !r.rhs.is_finite() || r.coeffs.iter().any(|v| !v.is_finite()) {
                            return Err(Error::InvalidArgument("non-finite linear row".into()));
                        }
                    }
                }
                Constraint::TraceQuad(_, g) if !g.is_finite() => {
                    return Err(Error::InvalidArgument("non-finite trace bound".into()))
                }
                Constraint::DiagQuad(_, h) => {
                    if h.len() != n {
                        return Err(Error::DimensionMismatch(format!(
                            "diagonal bound has length {}, expected {n}",
                            h.len()
                        )));
                    }
                    if h.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidArgument("non-finite diagonal bound".into()));
                    }
                }
                _ => {}
            }
        }
        self.check_static(n)
    }

    /// Trace/diagonal relations against a fixed `G` are decided here.
    fn check_static(&self, n: usize) -> Result<()> {
        let fixed = match self.owner() {
            Some(Constraint::QuadEq(g)) => g.clone(),
            Some(Constraint::Orthogonal) => DMatrix::identity(n, n),
            _ => return Ok(()),
        };
        for c in &self.items {
            let bad = match c {
                Constraint::TraceQuad(rel, g) => rel.violation(fixed.trace(), *g) > 1e-12 * (1.0 + g.abs()),
                Constraint::DiagQuad(rel, h) => (0..n)
                    .any(|i| rel.violation(fixed[(i, i)], h[i]) > 1e-12 * (1.0 + h[i].abs())),
                _ => false,
            };
            if bad {
                return Err(Error::InvalidArgument(format!(
                    "{} contradicts the fixed Gram matrix of {}",
                    c.label(),
                    self.owner().map(|o| o.label()).unwrap_or_default()
                )));
            }
        }
        Ok(())
    }
}

fn check_sym(g: &DMatrix<f64>, n: usize) -> Result<()> {
    if g.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "G is {}x{}, expected {n}x{n}",
            g.nrows(),
            g.ncols()
        )));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("G has non-finite entries".into()));
    }
    let asym = (g - g.transpose()).amax();
    if asym > 1e-12 * g.amax().max(1.0) {
        return Err(Error::InvalidArgument(format!("G is not symmetric (defect {asym:e})")));
    }
    Ok(())
}

/// Location of `V = [[I_m, X], [Xᵀ, ·]]` inside a program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VBlock {
    pub block: BlockId,
    pub m: usize,
    pub n: usize,
}

impl VBlock {
    pub fn order(&self) -> usize {
        self.m + self.n
    }

    pub fn matrix(&self, sol: &SdpSolution) -> SymMatrix {
        let v = sol.block(self.block).as_matrix().expect("V is a PSD block");
        SymMatrix::symmetrize(v).expect("non-empty square block")
    }

    /// `tr(V)` as objective terms.
    pub fn trace_terms(&self) -> Vec<Term> {
        (0..self.order()).map(|i| Term::new(self.block, i, i, 1.0)).collect()
    }

    /// `⟨W, V⟩` as objective terms.
    pub fn inner_terms(&self, w: &DMatrix<f64>) -> Vec<Term> {
        SdpProblem::inner_product_terms(self.block, w)
    }

    /// Lower-right term `V[m+a, m+b]`.
    fn g(&self, a: usize, b: usize, coef: f64) -> Term {
        Term::new(self.block, self.m + a.min(b), self.m + a.max(b), coef)
    }
}

/// What [`encode_into`] added to the host program.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedFeasibility {
    pub v_block: Option<VBlock>,
    /// `m` when the encoding is exact only at `rank(V) = m`.
    pub rank_target: Option<usize>,
    pub blocks: Vec<BlockId>,
    pub rows: std::ops::Range<usize>,
}

/// Assembles `[[I_m, X], [Xᵀ, G]]`.
pub fn assemble_v(x: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<SymMatrix> {
    let (m, n) = x.shape();
    check_sym(g, n)?;
    crate::matcore::block_matrix(&SymMatrix::identity(m), x, &SymMatrix::new(g.clone())?)
}

fn add_v_block(host: &mut SdpProblem, x: &XLocator, blocks: &mut Vec<BlockId>) -> VBlock {
    let (m, n) = (x.m, x.n);
    let block = host.add_block(BlockKind::Psd(m + n));
    blocks.push(block);
    for j in 0..m {
        for i in 0..=j {
            host.pin(block, i, j, if i == j { 1.0 } else { 0.0 });
        }
    }
    for i in 0..m {
        for j in 0..n {
            host.add_row(
                vec![Term::new(block, i, m + j, 1.0), x.term(i, j, -1.0)],
                0.0,
            );
        }
    }
    VBlock { block, m, n }
}

fn add_relation(
    host: &mut SdpProblem,
    blocks: &mut Vec<BlockId>,
    mut terms: Vec<Term>,
    rel: Relation,
    rhs: f64,
) {
    match rel {
        Relation::Eq => {}
        Relation::Le | Relation::Ge => {
            let s = host.add_block(BlockKind::Nonneg(1));
            blocks.push(s);
            let sign = if rel == Relation::Le { 1.0 } else { -1.0 };
            terms.push(Term::vec(s, 0, sign));
        }
    }
    host.add_row(terms, rhs);
}

/// Adds the constraints on the `X` block `x` to `host`.
pub fn encode_into(cs: &ConstraintSet, host: &mut SdpProblem, x: &XLocator) -> Result<EncodedFeasibility> {
    let (m, n) = (x.m, x.n);
    cs.validate(m, n)?;
    let first_row = host.rows().len();
    let mut blocks = Vec::new();
    let mut v_block = None;
    let mut rank_target = None;
    // whether trace/diag relations can be written on the V corner
    let mut variable_corner = false;

    match cs.owner() {
        Some(Constraint::QuadUpper(g)) | Some(Constraint::QuadEq(g)) => {
            let v = add_v_block(host, x, &mut blocks);
            for b in 0..n {
                for a in 0..=b {
                    host.add_row(vec![v.g(a, b, 1.0)], g[(a, b)]);
                }
            }
            if matches!(cs.owner(), Some(Constraint::QuadEq(_))) {
                rank_target = Some(m);
            }
            v_block = Some(v);
        }
        Some(Constraint::Orthogonal) => {
            let v = add_v_block(host, x, &mut blocks);
            for b in 0..n {
                for a in 0..=b {
                    host.add_row(vec![v.g(a, b, 1.0)], if a == b { 1.0 } else { 0.0 });
                }
            }
            rank_target = Some(m);
            v_block = Some(v);
        }
        Some(Constraint::QuadLower(g)) => {
            let v = add_v_block(host, x, &mut blocks);
            // D = Y − G ⪰ 0
            let d = host.add_block(BlockKind::Psd(n));
            blocks.push(d);
            for b in 0..n {
                for a in 0..=b {
                    host.add_row(vec![Term::new(d, a, b, 1.0), v.g(a, b, -1.0)], -g[(a, b)]);
                }
            }
            rank_target = Some(m);
            v_block = Some(v);
            variable_corner = true;
        }
        Some(Constraint::Oblique) => {
            let v = add_v_block(host, x, &mut blocks);
            for a in 0..n {
                host.add_row(vec![v.g(a, a, 1.0)], 1.0);
            }
            rank_target = Some(m);
            v_block = Some(v);
            variable_corner = true;
        }
        Some(Constraint::Projection) => {
            let v = add_v_block(host, x, &mut blocks);
            for b in 0..n {
                for a in 0..=b {
                    host.add_row(vec![v.g(a, b, 1.0), x.term(a, b, -1.0)], 0.0);
                    if a < b {
                        host.add_row(vec![x.term(a, b, 1.0), x.term(b, a, -1.0)], 0.0);
                    }
                }
            }
            rank_target = Some(m);
            v_block = Some(v);
            variable_corner = true;
        }
        _ => {}
    }

    let quad_items: Vec<&Constraint> = cs
        .items
        .iter()
        .filter(|c| matches!(c, Constraint::TraceQuad(..) | Constraint::DiagQuad(..)))
        .collect();
    let fixed_owner = matches!(cs.owner(), Some(Constraint::QuadEq(_)) | Some(Constraint::Orthogonal));
    if !quad_items.is_empty() && !fixed_owner {
        let corner = if variable_corner {
            v_block.expect("variable corner implies a V block")
        } else {
            // auxiliary [[I, X], [Xᵀ, Y]] with Y free: Y ⪰ XᵀX, and Y = XᵀX at rank m
            let aux = add_v_block(host, x, &mut blocks);
            let needs_rank = quad_items.iter().any(|c| {
                matches!(c, Constraint::TraceQuad(r, _) | Constraint::DiagQuad(r, _) if *r != Relation::Le)
            });
            if needs_rank {
                v_block = Some(aux);
                rank_target = Some(m);
            }
            aux
        };
        for c in quad_items {
            match c {
                Constraint::TraceQuad(rel, g) => {
                    let terms = (0..n).map(|a| corner.g(a, a, 1.0)).collect();
                    add_relation(host, &mut blocks, terms, *rel, *g);
                }
                Constraint::DiagQuad(rel, h) => {
                    for a in 0..n {
                        add_relation(host, &mut blocks, vec![corner.g(a, a, 1.0)], *rel, h[a]);
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    for c in &cs.items {
        match c {
            Constraint::NonnegativeEntries => {
                let nb = host.add_block(BlockKind::Nonneg(m * n));
                blocks.push(nb);
                for i in 0..m {
                    for j in 0..n {
                        host.add_row(
                            vec![Term::vec(nb, x.index(i, j), 1.0), x.term(i, j, -1.0)],
                            0.0,
                        );
                    }
                }
            }
            Constraint::LinearEq(rows) | Constraint::LinearIneq(rows) => {
                let rel = if matches!(c, Constraint::LinearEq(_)) {
                    Relation::Eq
                } else {
                    Relation::Le
                };
                for r in rows {
                    let mut terms = Vec::new();
                    for i in 0..m {
                        for j in 0..n {
                            if r.coeffs[(i, j)] != 0.0 {
                                terms.push(x.term(i, j, r.coeffs[(i, j)]));
                            }
                        }
                    }
                    add_relation(host, &mut blocks, terms, rel, r.rhs);
                }
            }
            Constraint::PsdVariable => {
                let pb = host.add_block(BlockKind::Psd(n));
                blocks.push(pb);
                for b in 0..n {
                    for a in 0..=b {
                        host.add_row(vec![Term::new(pb, a, b, 1.0), x.term(a, b, -1.0)], 0.0);
                        if a < b {
                            host.add_row(vec![x.term(a, b, 1.0), x.term(b, a, -1.0)], 0.0);
                        }
                    }
                }
            }
            _ => {}
        }
    }

    Ok(EncodedFeasibility {
        v_block,
        rank_target,
        blocks,
        rows: first_row..host.rows().len(),
    })
}

/// Encodes into a fresh program whose only other block is `X`.
pub fn encode(cs: &ConstraintSet, dims: (usize, usize)) -> Result<(SdpProblem, XLocator, EncodedFeasibility)> {
    let mut host = SdpProblem::new();
    let x = XLocator::add_to(&mut host, dims.0, dims.1);
    let enc = encode_into(cs, &mut host, &x)?;
    Ok((host, x, enc))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemResidual {
    pub label: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub items: Vec<ItemResidual>,
}

impl VerifyReport {
    pub fn max(&self) -> f64 {
        self.items.iter().map(|r| r.value).fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max() <= tol
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.items.iter().find(|r| r.label == label).map(|r| r.value)
    }
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let s = SymMatrix::symmetrize(m).expect("square");
    eigen(&s).map(|e| e.min_eigenvalue()).unwrap_or(f64::NAN)
}

/// Per-item residuals of `X` (zero when satisfied exactly). A shape
/// mismatch yields an infinite residual rather than an error.
pub fn verify(cs: &ConstraintSet, x: &DMatrix<f64>) -> VerifyReport {
    let (m, n) = x.shape();
    let gram = x.transpose() * x;
    let items = cs
        .items
        .iter()
        .map(|c| {
            let value = match c {
                Constraint::QuadUpper(g) if g.shape() == (n, n) => (-min_eig(&(g - &gram))).max(0.0),
                Constraint::QuadEq(g) if g.shape() == (n, n) => (&gram - g).norm(),
                Constraint::QuadLower(g) if g.shape() == (n, n) => (-min_eig(&(&gram - g))).max(0.0),
                Constraint::QuadUpper(_) | Constraint::QuadEq(_) | Constraint::QuadLower(_) => f64::INFINITY,
                Constraint::Orthogonal => (&gram - DMatrix::<f64>::identity(n, n)).norm(),
                Constraint::Oblique => (0..n).map(|i| (gram[(i, i)] - 1.0).abs()).sum(),
                Constraint::Projection if m == n => (&gram - x).norm(),
                Constraint::Projection => f64::INFINITY,
                Constraint::NonnegativeEntries => (-x.min()).max(0.0),
                Constraint::LinearEq(rows) => rows
                    .iter()
                    .map(|r| if r.coeffs.shape() == (m, n) { (r.eval(x) - r.rhs).abs() } else { f64::INFINITY })
                    .fold(0.0, f64::max),
                Constraint::LinearIneq(rows) => rows
                    .iter()
                    .map(|r| {
                        if r.coeffs.shape() == (m, n) {
                            (r.eval(x) - r.rhs).max(0.0)
                        } else {
                            f64::INFINITY
                        }
                    })
                    .fold(0.0, f64::max),
                Constraint::TraceQuad(rel, g) => rel.violation(gram.trace(), *g),
                Constraint::DiagQuad(rel, h) if h.len() == n => {
                    (0..n).map(|i| rel.violation(gram[(i, i)], h[i])).sum()
                }
                Constraint::DiagQuad(..) => f64::INFINITY,
                Constraint::PsdVariable if m == n => {
                    (x - x.transpose()).norm().max((-min_eig(x)).max(0.0))
                }
                Constraint::PsdVariable => f64::INFINITY,
            };
            ItemResidual {
                label: c.label(),
                value,
            }
        })
        .collect();
    VerifyReport { items }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::eps_rank;
    use crate::sdp::{solve, SolverSettings, Status};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn orth(m: usize, n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let g = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        g.qr().q().columns(0, n).into_owned()
    }

    /// Pins X, solves the feasibility problem and returns the solution.
    fn solve_pinned(cs: &ConstraintSet, x0: &DMatrix<f64>) -> crate::sdp::SdpSolution {
        let (mut p, x, _) = encode(cs, x0.shape()).unwrap();
        for i in 0..x0.nrows() {
            for j in 0..x0.ncols() {
                p.add_row(vec![x.term(i, j, 1.0)], x0[(i, j)]);
            }
        }
        solve(&p, &SolverSettings::default()).unwrap()
    }

    #[test]
    fn orthogonal_block_shape() {
        let cs = ConstraintSet::new(vec![Constraint::Orthogonal]);
        let (p, _, enc) = encode(&cs, (3, 2)).unwrap();
        let v = enc.v_block.unwrap();
        assert_eq!(v.order(), 5);
        assert_eq!(p.block(v.block), BlockKind::Psd(5));
        assert_eq!(enc.rank_target, Some(3));
    }

    #[test]
    fn oblique_identity_is_feasible_with_rank_two() {
        let cs = ConstraintSet::new(vec![Constraint::Oblique]);
        let x = DMatrix::identity(2, 2);
        let sol = solve_pinned(&cs, &x);
        assert_eq!(sol.status, Status::Optimal);
        let (p, _, enc) = encode(&cs, (2, 2)).unwrap();
        assert!(p.rows().len() > 0);
        let v = enc.v_block.unwrap().matrix(&sol);
        // V = [[I, I], [I, G]] with diag(G) = 1 forces G = I
        let want = DMatrix::from_fn(4, 4, |i, j| if i % 2 == j % 2 { 1.0 } else { 0.0 });
        assert!((v.as_matrix() - want).amax() < 1e-6);
        assert_eq!(eps_rank(&v, 1e-6).unwrap(), 2);
        assert!(verify(&cs, &x).passes(1e-12));
    }

    #[test]
    fn quad_upper_identity_at_zero() {
        let cs = ConstraintSet::new(vec![Constraint::QuadUpper(DMatrix::identity(2, 2))]);
        let (_, _, enc) = encode(&cs, (2, 2)).unwrap();
        assert_eq!(enc.rank_target, None);
        let sol = solve_pinned(&cs, &DMatrix::zeros(2, 2));
        assert_eq!(sol.status, Status::Optimal);
        let v = enc.v_block.unwrap().matrix(&sol);
        assert!((v.as_matrix() - DMatrix::<f64>::identity(4, 4)).amax() < 1e-7);
    }

    #[test]
    fn contradictory_sets_are_rejected() {
        assert!(encode(&ConstraintSet::new(vec![Constraint::Orthogonal]), (2, 3)).is_err());
        assert!(encode(&ConstraintSet::new(vec![Constraint::Orthogonal, Constraint::Oblique]), (3, 2)).is_err());
        assert!(encode(&ConstraintSet::new(vec![Constraint::Projection]), (3, 2)).is_err());
        let bad_g = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(encode(&ConstraintSet::new(vec![Constraint::QuadEq(bad_g)]), (2, 2)).is_err());
        // orthonormal columns have tr(XᵀX) = n
        let cs = ConstraintSet::new(vec![Constraint::Orthogonal, Constraint::TraceQuad(Relation::Le, 1.0)]);
        assert!(encode(&cs, (3, 2)).is_err());
        let cs = ConstraintSet::new(vec![Constraint::Orthogonal, Constraint::TraceQuad(Relation::Le, 2.0)]);
        assert!(encode(&cs, (3, 2)).is_ok());
        let cs = ConstraintSet::new(vec![Constraint::DiagQuad(Relation::Le, DVector::from_element(3, 1.0))]);
        assert!(encode(&cs, (3, 2)).is_err());
    }

    #[test]
    fn verify_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let q = orth(4, 3, &mut rng);
        let r = verify(&ConstraintSet::new(vec![Constraint::Orthogonal]), &q);
        assert!(r.get("orthogonality").unwrap() <= 1e-12);

        let mut x = DMatrix::identity(2, 2);
        x[(0, 0)] = 2.0;
        let r = verify(&ConstraintSet::new(vec![Constraint::Oblique]), &x);
        assert!((r.get("obliqueness").unwrap() - 3.0).abs() < 1e-15);

        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let r = verify(&ConstraintSet::new(vec![Constraint::Projection]), &p);
        assert_eq!(r.get("projection"), Some(0.0));

        let x = DMatrix::from_row_slice(1, 2, &[1.0, -0.5]);
        let cs = ConstraintSet::new(vec![
            Constraint::NonnegativeEntries,
            Constraint::LinearEq(vec![LinearRowX::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), 1.0)]),
            Constraint::LinearIneq(vec![LinearRowX::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), 0.25)]),
            Constraint::TraceQuad(Relation::Ge, 2.0),
        ]);
        let r = verify(&cs, &x);
        let vals: Vec<f64> = r.items.iter().map(|i| i.value).collect();
        assert_eq!(vals, vec![0.5, 0.5, 0.75, 0.75]);
        assert_eq!(r.max(), 0.75);
    }

    #[test]
    fn linear_and_nonnegative_rows_restrict_x() {
        // min x00 + x01 over x ≥ 0, x00 ≥ 0.3 (as −x00 ≤ −0.3)
        let cs = ConstraintSet::new(vec![
            Constraint::NonnegativeEntries,
            Constraint::LinearIneq(vec![LinearRowX::new(DMatrix::from_row_slice(1, 2, &[-1.0, 0.0]), -0.3)]),
        ]);
        let (mut p, x, _) = encode(&cs, (1, 2)).unwrap();
        p.set_objective(vec![x.term(0, 0, 1.0), x.term(0, 1, 1.0)]);
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.primal_objective - 0.3).abs() < 1e-7);
    }

    #[test]
    fn psd_variable_rejects_indefinite_x() {
        let cs = ConstraintSet::new(vec![Constraint::PsdVariable]);
        let sol = solve_pinned(&cs, &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]));
        assert_eq!(sol.status, Status::PrimalInfeasible);
        let sol = solve_pinned(&cs, &DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]));
        assert_eq!(sol.status, Status::Optimal);
        let sol = solve_pinned(&cs, &DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]));
        assert_eq!(sol.status, Status::PrimalInfeasible);
    }

    #[test]
    fn trace_bound_without_owner_uses_auxiliary_block() {
        // min −x over tr(xᵀx) ≤ 4 for a scalar x → x = 2
        let cs = ConstraintSet::new(vec![Constraint::TraceQuad(Relation::Le, 4.0)]);
        let (mut p, x, enc) = encode(&cs, (1, 1)).unwrap();
        assert!(enc.v_block.is_none() && enc.rank_target.is_none());
        p.set_objective(vec![x.term(0, 0, -1.0)]);
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert!((sol.primal_objective + 2.0).abs() < 1e-6);

        let cs = ConstraintSet::new(vec![Constraint::DiagQuad(Relation::Eq, DVector::from_element(2, 1.0))]);
        let (_, _, enc) = encode(&cs, (3, 2)).unwrap();
        assert_eq!(enc.rank_target, Some(3));
    }

    #[test]
    fn quad_lower_accepts_large_x_and_rejects_small() {
        let g = DMatrix::identity(1, 1);
        let cs = ConstraintSet::new(vec![Constraint::QuadLower(g)]);
        // with X = 2, Y = 4 satisfies Y − G ⪰ 0 at rank 1
        let sol = solve_pinned(&cs, &DMatrix::from_element(1, 1, 2.0));
        assert_eq!(sol.status, Status::Optimal);
        assert!(verify(&cs, &DMatrix::from_element(1, 1, 2.0)).passes(0.0));
        assert!((verify(&cs, &DMatrix::from_element(1, 1, 0.5)).max() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn projection_encoding_admits_projectors() {
        let cs = ConstraintSet::new(vec![Constraint::Projection]);
        let u = DVector::from_vec(vec![0.6, 0.8]);
        let p = &u * u.transpose();
        let sol = solve_pinned(&cs, &p);
        assert_eq!(sol.status, Status::Optimal);
        assert!(verify(&cs, &p).passes(1e-12));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn orthogonal_v_has_rank_m(seed in any::<u64>(), m in 1usize..7, n in 1usize..5) {
            prop_assume!(m >= n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = orth(m, n, &mut rng);
            let v = assemble_v(&x, &(x.transpose() * &x)).unwrap();
            let eps = 1e-8 * v.frobenius_norm();
            prop_assert_eq!(eps_rank(&v, eps).unwrap(), m);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        // a feasible X extends to a feasible point of the encoding, and the
        // rank-m point recovered from it passes verify
        #[test]
        fn encoding_is_complete(seed in any::<u64>(), which in 0usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (m, n) = (3, 2);
            let q = orth(m, n, &mut rng);
            let (cs, x) = match which {
                0 => (ConstraintSet::new(vec![Constraint::Orthogonal]), q),
                1 => {
                    let x = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
                    let norms: Vec<f64> = x.column_iter().map(|c| c.norm()).collect();
                    let x = DMatrix::from_fn(m, n, |i, j| x[(i, j)] / norms[j]);
                    (ConstraintSet::new(vec![Constraint::Oblique]), x)
                }
                2 => {
                    let g = q.transpose() * &q * 1.5;
                    (ConstraintSet::new(vec![Constraint::QuadUpper(g)]), q)
                }
                3 => {
                    let x = q.map(|v| v.abs());
                    let g = x.transpose() * &x;
                    (ConstraintSet::new(vec![Constraint::QuadEq(g), Constraint::NonnegativeEntries]), x)
                }
                _ => {
                    let x = &q * 2.0;
                    (ConstraintSet::new(vec![Constraint::QuadLower(DMatrix::identity(n, n))]), x)
                }
            };
            prop_assert!(verify(&cs, &x).passes(1e-9));
            let sol = solve_pinned(&cs, &x);
            prop_assert_eq!(sol.status, Status::Optimal);
            let (_, _, enc) = encode(&cs, (m, n)).unwrap();
            let v = enc.v_block.unwrap().matrix(&sol);
            prop_assert!(v.eigen().unwrap().min_eigenvalue() >= -1e-8);
            if let Some(k) = enc.rank_target {
                // at rank k the corner equals XᵀX, so X passes verify
                if eps_rank(&v, 1e-6).unwrap() <= k {
                    let xs = v.as_matrix().view((0, m), (m, n)).into_owned();
                    prop_assert!(verify(&cs, &xs).passes(1e-6));
                }
            }
        }
    }
}
