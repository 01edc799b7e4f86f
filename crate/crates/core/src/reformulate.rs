//! Linear maps `L(X)`, the four matrix norms and their epigraph programs.
//!
//! Each builder returns an [`EpigraphProgram`] whose SDP has the entries of
//! `X` in a free block and whose optimal value equals the norm of `L(X)` at
//! the best `X` (the squared norm for Frobenius).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sdp::{BlockId, BlockKind, SdpProblem, SdpSolution, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MapKind {
    /// `C − AX`
    Standard,
    /// `C − AXB`
    Weighted,
    /// `CX − XA`, all square
    TwoSided,
    /// `W ∘ (C − AXB)` with a 0/1 mask `W`
    PartialTarget,
}

/// Data of `L(X)` with `A: p×m`, `X: m×n`, `B: n×q`, `C: p×q`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMapSpec {
    pub kind: MapKind,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub w: Option<DMatrix<f64>>,
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub q: usize,
}

fn shape_err(what: &str, got: (usize, usize), want: (usize, usize)) -> Error {
    Error::DimensionMismatch(format!(
        "{what} is {}x{}, expected {}x{}",
        got.0, got.1, want.0, want.1
    ))
}

fn check_shape(what: &str, m: &DMatrix<f64>, want: (usize, usize)) -> Result<()> {
    if m.shape() != want {
        return Err(shape_err(what, m.shape(), want));
    }
    Ok(())
}

impl LinearMapSpec {
    /// `C − AX` with `A: p×m`, `C: p×n`.
    pub fn standard(a: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let (p, m) = a.shape();
        let n = c.ncols();
        let spec = Self {
            kind: MapKind::Standard,
            b: DMatrix::identity(n, n),
            a,
            c,
            w: None,
            m,
            n,
            p,
            q: n,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `C − AXB` with `A: p×m`, `B: n×q`, `C: p×q`.
    pub fn weighted(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let (p, m) = a.shape();
        let (n, q) = b.shape();
        let spec = Self {
            kind: MapKind::Weighted,
            a,
            b,
            c,
            w: None,
            m,
            n,
            p,
            q,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `CX − XA`, all matrices `n×n`.
    pub fn two_sided(a: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let spec = Self {
            kind: MapKind::TwoSided,
            a,
            b: DMatrix::identity(n, n),
            c,
            w: None,
            m: n,
            n,
            p: n,
            q: n,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `W ∘ (C − AXB)`.
    pub fn partial_target(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        w: DMatrix<f64>,
    ) -> Result<Self> {
        let (p, m) = a.shape();
        let (n, q) = b.shape();
        let spec = Self {
            kind: MapKind::PartialTarget,
            a,
            b,
            c,
            w: Some(w),
            m,
            n,
            p,
            q,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.m, self.n, self.p, self.q)
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n, p, q) = self.dims();
        if m == 0 || n == 0 || p == 0 || q == 0 {
            return Err(Error::InvalidArgument("all dimensions must be positive".into()));
        }
        match self.kind {
            MapKind::TwoSided => {
                if !(m == n && n == p && p == q) {
                    return Err(Error::DimensionMismatch(
                        "two-sided map needs square matrices of one order".into(),
                    ));
                }
                check_shape("A", &self.a, (n, n))?;
                check_shape("C", &self.c, (n, n))?;
            }
            _ => {
                check_shape("A", &self.a, (p, m))?;
                check_shape("B", &self.b, (n, q))?;
                check_shape("C", &self.c, (p, q))?;
                if self.kind == MapKind::Standard
                    && (q != n || self.b != DMatrix::identity(n, n))
                {
                    return Err(Error::InvalidArgument(
                        "standard map requires B = I and q = n".into(),
                    ));
                }
            }
        }
        match (&self.w, self.kind) {
            (Some(w), MapKind::PartialTarget) => {
                check_shape("W", w, (p, q))?;
                if w.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::InvalidArgument("mask W must be 0/1".into()));
                }
            }
            (None, MapKind::PartialTarget) => {
                return Err(Error::InvalidArgument("partial-target map needs a mask W".into()))
            }
            (Some(_), _) => {
                return Err(Error::InvalidArgument(
                    "mask W only applies to partial-target maps".into(),
                ))
            }
            (None, _) => {}
        }
        if self
            .a
            .iter()
            .chain(self.b.iter())
            .chain(self.c.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidArgument("non-finite map data".into()));
        }
        Ok(())
    }

    /// Affine description of `L(X)`: entry `(i, j)` is
    /// `constant + Σ coef · X[k, l]` with `X` flattened row-major.
    pub fn affine_entries(&self) -> Vec<Vec<AffineEntry>> {
        let (m, n, p, q) = self.dims();
        let mut out = vec![vec![AffineEntry::default(); q]; p];
        match self.kind {
            MapKind::TwoSided => {
                // (CX − XA)_ij = Σ_k C_ik X_kj − Σ_k X_ik A_kj
                for i in 0..p {
                    for j in 0..q {
                        let e = &mut out[i][j];
                        for k in 0..n {
                            e.push(k * n + j, self.c[(i, k)]);
                            e.push(i * n + k, -self.a[(k, j)]);
                        }
                        e.compact();
                    }
                }
            }
            _ => {
                // (C − AXB)_ij = C_ij − Σ_kl A_ik X_kl B_lj
                for i in 0..p {
                    for j in 0..q {
                        if let Some(w) = &self.w {
                            if w[(i, j)] == 0.0 {
                                continue;
                            }
                        }
                        let e = &mut out[i][j];
                        e.constant = self.c[(i, j)];
                        for k in 0..m {
                            let aik = self.a[(i, k)];
                            if aik == 0.0 {
                                continue;
                            }
                            for l in 0..n {
                                let blj = self.b[(l, j)];
                                if blj != 0.0 {
                                    e.push(k * n + l, -aik * blj);
                                }
                            }
                        }
                        e.compact();
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineEntry {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl AffineEntry {
    fn push(&mut self, idx: usize, coef: f64) {
        if coef != 0.0 {
            self.terms.push((idx, coef));
        }
    }

    fn compact(&mut self) {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for &(i, c) in &self.terms {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => out.push((i, c)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        self.terms = out;
    }
}

/// Evaluates `L(X)`.
pub fn apply_map(spec: &LinearMapSpec, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_shape("X", x, (spec.m, spec.n))?;
    Ok(match spec.kind {
        MapKind::Standard => &spec.c - &spec.a * x,
        MapKind::Weighted => &spec.c - &spec.a * x * &spec.b,
        MapKind::TwoSided => &spec.c * x - x * &spec.a,
        MapKind::PartialTarget => {
            let r = &spec.c - &spec.a * x * &spec.b;
            r.component_mul(spec.w.as_ref().expect("validated mask"))
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormKind {
    Frobenius,
    /// Largest absolute column sum.
    L1,
    /// Largest absolute row sum.
    LInf,
    /// Largest singular value.
    L2,
}

impl NormKind {
    pub const ALL: [NormKind; 4] = [NormKind::Frobenius, NormKind::L1, NormKind::LInf, NormKind::L2];
}

pub fn norm_value(kind: NormKind, y: &DMatrix<f64>) -> f64 {
    match kind {
        NormKind::Frobenius => y.norm(),
        NormKind::L1 => y
            .column_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max),
        NormKind::LInf => y
            .row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max),
        NormKind::L2 => crate::matcore::spectral_norm(y),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveMeaning {
    SquaredFrobenius,
    L1Value,
    LInfValue,
    L2Value,
}

impl ObjectiveMeaning {
    pub fn of(norm: NormKind) -> Self {
        match norm {
            NormKind::Frobenius => Self::SquaredFrobenius,
            NormKind::L1 => Self::L1Value,
            NormKind::LInf => Self::LInfValue,
            NormKind::L2 => Self::L2Value,
        }
    }

    /// Converts a norm value into objective units.
    pub fn from_norm(&self, v: f64) -> f64 {
        match self {
            Self::SquaredFrobenius => v * v,
            _ => v,
        }
    }

    /// Converts an objective value back into a norm value.
    pub fn to_norm(&self, v: f64) -> f64 {
        match self {
            Self::SquaredFrobenius => v.max(0.0).sqrt(),
            _ => v,
        }
    }
}

/// Where the entries of `X` live: a free block of length `m·n`, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct XLocator {
    pub block: BlockId,
    pub m: usize,
    pub n: usize,
}

impl XLocator {
    pub fn add_to(problem: &mut SdpProblem, m: usize, n: usize) -> Self {
        let block = problem.add_block(BlockKind::Free(m * n));
        Self { block, m, n }
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    pub fn term(&self, i: usize, j: usize, coef: f64) -> Term {
        Term::vec(self.block, self.index(i, j), coef)
    }

    pub fn flat_term(&self, idx: usize, coef: f64) -> Term {
        Term::vec(self.block, idx, coef)
    }

    pub fn extract(&self, sol: &SdpSolution) -> DMatrix<f64> {
        let v = sol.block(self.block).as_vector().expect("X block is a vector");
        DMatrix::from_fn(self.m, self.n, |i, j| v[self.index(i, j)])
    }
}

#[derive(Debug, Clone)]
pub struct EpigraphProgram {
    pub sdp: SdpProblem,
    pub x: XLocator,
    pub meaning: ObjectiveMeaning,
    pub norm: NormKind,
    pub spec: LinearMapSpec,
}

impl EpigraphProgram {
    /// `‖L(X)‖` in objective units (squared for Frobenius).
    pub fn objective_of(&self, x: &DMatrix<f64>) -> Result<f64> {
        Ok(self.meaning.from_norm(self.norm_of(x)?))
    }

    pub fn norm_of(&self, x: &DMatrix<f64>) -> Result<f64> {
        Ok(norm_value(self.norm, &apply_map(&self.spec, x)?))
    }

    pub fn objective_terms(&self) -> &[Term] {
        self.sdp.objective()
    }
}

pub fn build(spec: &LinearMapSpec, norm: NormKind) -> Result<EpigraphProgram> {
    match norm {
        NormKind::Frobenius => build_frobenius(spec),
        NormKind::L1 => build_l1(spec),
        NormKind::LInf => build_linf(spec),
        NormKind::L2 => build_l2(spec),
    }
}

fn x_terms<'a>(x: &XLocator, e: &'a AffineEntry, sign: f64) -> impl Iterator<Item = Term> + 'a {
    let x = *x;
    e.terms.iter().map(move |&(idx, c)| x.flat_term(idx, sign * c))
}

/// `min tr(Z)` over `[[I_q, L(X)ᵀ], [L(X), Z]] ⪰ 0`.
pub fn build_frobenius(spec: &LinearMapSpec) -> Result<EpigraphProgram> {
    spec.validate()?;
    let (m, n, p, q) = spec.dims();
    let mut sdp = SdpProblem::new();
    let x = XLocator::add_to(&mut sdp, m, n);
    let f = sdp.add_block(BlockKind::Psd(q + p));
    for b in 0..q {
        for a in 0..=b {
            sdp.pin(f, a, b, if a == b { 1.0 } else { 0.0 });
        }
    }
    let aff = spec.affine_entries();
    for i in 0..p {
        for j in 0..q {
            let e = &aff[i][j];
            let mut terms = vec![Term::new(f, j, q + i, 1.0)];
            terms.extend(x_terms(&x, e, -1.0));
            sdp.add_row(terms, e.constant);
        }
    }
    for i in 0..p {
        sdp.add_objective_term(Term::new(f, q + i, q + i, 1.0));
    }
    Ok(EpigraphProgram {
        sdp,
        x,
        meaning: ObjectiveMeaning::SquaredFrobenius,
        norm: NormKind::Frobenius,
        spec: spec.clone(),
    })
}

fn build_abs_sum(spec: &LinearMapSpec, by_columns: bool) -> Result<EpigraphProgram> {
    spec.validate()?;
    let (m, n, p, q) = spec.dims();
    let mut sdp = SdpProblem::new();
    let x = XLocator::add_to(&mut sdp, m, n);
    let s = sdp.add_block(BlockKind::Free(p * q));
    let lo = sdp.add_block(BlockKind::Nonneg(p * q));
    let hi = sdp.add_block(BlockKind::Nonneg(p * q));
    let t = sdp.add_block(BlockKind::Free(1));
    let groups = if by_columns { q } else { p };
    let slack = sdp.add_block(BlockKind::Nonneg(groups));
    let aff = spec.affine_entries();
    for i in 0..p {
        for j in 0..q {
            let k = i * q + j;
            let e = &aff[i][j];
            // S − L(X) ≥ 0
            let mut terms = vec![Term::vec(s, k, 1.0), Term::vec(lo, k, -1.0)];
            terms.extend(x_terms(&x, e, -1.0));
            sdp.add_row(terms, e.constant);
            // S + L(X) ≥ 0
            let mut terms = vec![Term::vec(s, k, 1.0), Term::vec(hi, k, -1.0)];
            terms.extend(x_terms(&x, e, 1.0));
            sdp.add_row(terms, -e.constant);
        }
    }
    for g in 0..groups {
        let mut terms = vec![Term::vec(t, 0, 1.0), Term::vec(slack, g, -1.0)];
        if by_columns {
            terms.extend((0..p).map(|i| Term::vec(s, i * q + g, -1.0)));
        } else {
            terms.extend((0..q).map(|j| Term::vec(s, g * q + j, -1.0)));
        }
        sdp.add_row(terms, 0.0);
    }
    sdp.add_objective_term(Term::vec(t, 0, 1.0));
    let norm = if by_columns { NormKind::L1 } else { NormKind::LInf };
    Ok(EpigraphProgram {
        sdp,
        x,
        meaning: ObjectiveMeaning::of(norm),
        norm,
        spec: spec.clone(),
    })
}

/// `min t` over `−S ≤ L(X) ≤ S`, `Sᵀ1 ≤ t1`.
pub fn build_l1(spec: &LinearMapSpec) -> Result<EpigraphProgram> {
    build_abs_sum(spec, true)
}

/// `min t` over `−S ≤ L(X) ≤ S`, `S1 ≤ t1`.
pub fn build_linf(spec: &LinearMapSpec) -> Result<EpigraphProgram> {
    build_abs_sum(spec, false)
}

/// `min s` over `[[s I_p, L(X)], [L(X)ᵀ, s I_q]] ⪰ 0`.
pub fn build_l2(spec: &LinearMapSpec) -> Result<EpigraphProgram> {
    spec.validate()?;
    let (m, n, p, q) = spec.dims();
    let mut sdp = SdpProblem::new();
    let x = XLocator::add_to(&mut sdp, m, n);
    let f = sdp.add_block(BlockKind::Psd(p + q));
    let s = sdp.add_block(BlockKind::Free(1));
    for a in 0..p + q {
        sdp.add_row(vec![Term::new(f, a, a, 1.0), Term::vec(s, 0, -1.0)], 0.0);
    }
    for b in 0..p {
        for a in 0..b {
            sdp.pin(f, a, b, 0.0);
        }
    }
    for b in 0..q {
        for a in 0..b {
            sdp.pin(f, p + a, p + b, 0.0);
        }
    }
    let aff = spec.affine_entries();
    for i in 0..p {
        for j in 0..q {
            let e = &aff[i][j];
            let mut terms = vec![Term::new(f, i, p + j, 1.0)];
            terms.extend(x_terms(&x, e, -1.0));
            sdp.add_row(terms, e.constant);
        }
    }
    sdp.add_objective_term(Term::vec(s, 0, 1.0));
    Ok(EpigraphProgram {
        sdp,
        x,
        meaning: ObjectiveMeaning::L2Value,
        norm: NormKind::L2,
        spec: spec.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::{solve, SolverSettings, Status};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    fn pin_x(prog: &mut EpigraphProgram, x: &DMatrix<f64>) {
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                let t = prog.x.term(i, j, 1.0);
                prog.sdp.add_row(vec![t], x[(i, j)]);
            }
        }
    }

    fn optimum(prog: &EpigraphProgram) -> f64 {
        let sol = solve(&prog.sdp, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        sol.primal_objective
    }

    #[test]
    fn map_examples() {
        let a = m(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let two = LinearMapSpec::two_sided(a.clone(), a.clone()).unwrap();
        assert_eq!(apply_map(&two, &DMatrix::identity(2, 2)).unwrap(), DMatrix::zeros(2, 2));

        let w = DMatrix::zeros(2, 2);
        let pt = LinearMapSpec::partial_target(a.clone(), a.clone(), a.clone(), w).unwrap();
        assert_eq!(apply_map(&pt, &a).unwrap(), DMatrix::zeros(2, 2));

        let x0 = m(2, 2, &[0.5, -1.0, 2.0, 0.0]);
        let wt = LinearMapSpec::weighted(DMatrix::identity(2, 2), DMatrix::identity(2, 2), x0.clone())
            .unwrap();
        assert_eq!(apply_map(&wt, &x0).unwrap(), DMatrix::zeros(2, 2));

        assert!(apply_map(&wt, &DMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn norm_examples() {
        let y = m(2, 2, &[1.0, -2.0, 3.0, 4.0]);
        assert_eq!(norm_value(NormKind::L1, &y), 6.0);
        assert_eq!(norm_value(NormKind::LInf, &y), 7.0);
        assert!((norm_value(NormKind::L2, &DMatrix::identity(3, 3)) - 1.0).abs() < 1e-12);
        assert!((norm_value(NormKind::Frobenius, &y) - 30f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(LinearMapSpec::weighted(DMatrix::zeros(2, 3), DMatrix::zeros(3, 2), DMatrix::zeros(3, 3)).is_err());
        let w = m(1, 1, &[0.5]);
        assert!(LinearMapSpec::partial_target(
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            w
        )
        .is_err());
    }

    #[test]
    fn affine_entries_match_apply_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut r = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
        let specs = vec![
            LinearMapSpec::standard(r(4, 3), r(4, 2)).unwrap(),
            LinearMapSpec::weighted(r(4, 3), r(2, 5), r(4, 5)).unwrap(),
            LinearMapSpec::two_sided(r(3, 3), r(3, 3)).unwrap(),
            LinearMapSpec::partial_target(
                r(2, 3),
                r(2, 2),
                r(2, 2),
                m(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            )
            .unwrap(),
        ];
        for spec in specs {
            let x = r(spec.m, spec.n);
            let direct = apply_map(&spec, &x).unwrap();
            let aff = spec.affine_entries();
            for i in 0..spec.p {
                for j in 0..spec.q {
                    let e = &aff[i][j];
                    let v = e.constant + e.terms.iter().map(|&(k, c)| c * x[(k / spec.n, k % spec.n)]).sum::<f64>();
                    assert!((v - direct[(i, j)]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn frobenius_examples() {
        let spec = LinearMapSpec::standard(m(1, 1, &[1.0]), m(1, 1, &[2.5])).unwrap();
        let prog = build_frobenius(&spec).unwrap();
        assert!(optimum(&prog).abs() < 1e-7);

        let spec = LinearMapSpec::standard(m(1, 1, &[1.0]), m(1, 1, &[3.0])).unwrap();
        let mut prog = build_frobenius(&spec).unwrap();
        pin_x(&mut prog, &DMatrix::zeros(1, 1));
        assert!((optimum(&prog) - 9.0).abs() < 1e-6);
    }

    #[test]
    fn frobenius_scalar_multiple_of_identity_matches_grid() {
        // X = αI through linear rows; compare with a grid over α
        let a = m(2, 2, &[1.0, 0.5, -0.3, 2.0]);
        let b = m(2, 2, &[0.7, 0.1, 0.2, 1.1]);
        let c = m(2, 2, &[1.0, -1.0, 0.5, 2.0]);
        let spec = LinearMapSpec::weighted(a.clone(), b.clone(), c.clone()).unwrap();
        let mut prog = build_frobenius(&spec).unwrap();
        let x = prog.x;
        prog.sdp.add_row(vec![x.term(0, 1, 1.0)], 0.0);
        prog.sdp.add_row(vec![x.term(1, 0, 1.0)], 0.0);
        prog.sdp.add_row(vec![x.term(0, 0, 1.0), x.term(1, 1, -1.0)], 0.0);
        let sdp_val = optimum(&prog);
        let mut best = f64::INFINITY;
        for k in 0..=40_000 {
            let alpha = -2.0 + 4.0 * k as f64 / 40_000.0;
            let xm = DMatrix::identity(2, 2) * alpha;
            best = best.min((&c - &a * xm * &b).norm_squared());
        }
        assert!((sdp_val - best).abs() < 1e-4, "{sdp_val} vs {best}");
    }

    #[test]
    fn l1_linf_fixed_point() {
        // L(X) = C − X with X = 0, C = [[1,−2],[3,4]]
        let c = m(2, 2, &[1.0, -2.0, 3.0, 4.0]);
        let spec = LinearMapSpec::standard(DMatrix::identity(2, 2), c).unwrap();
        let mut p1 = build_l1(&spec).unwrap();
        pin_x(&mut p1, &DMatrix::zeros(2, 2));
        assert!((optimum(&p1) - 6.0).abs() < 1e-7);
        let mut pi = build_linf(&spec).unwrap();
        pin_x(&mut pi, &DMatrix::zeros(2, 2));
        assert!((optimum(&pi) - 7.0).abs() < 1e-7);
    }

    #[test]
    fn zero_map_has_zero_optimum() {
        let spec = LinearMapSpec::standard(DMatrix::zeros(2, 2), DMatrix::zeros(2, 2)).unwrap();
        for norm in NormKind::ALL {
            let prog = build(&spec, norm).unwrap();
            assert!(optimum(&prog).abs() < 1e-7, "{norm:?}");
        }
    }

    #[test]
    fn l1_scalar_with_interval_constraint() {
        // min |c − x| over x ∈ [0, c/2] → c/2
        let c = 3.0;
        let spec = LinearMapSpec::standard(m(1, 1, &[1.0]), m(1, 1, &[c])).unwrap();
        let mut prog = build_l1(&spec).unwrap();
        let x = prog.x;
        let sl = prog.sdp.add_block(BlockKind::Nonneg(2));
        prog.sdp.add_row(vec![x.term(0, 0, 1.0), Term::vec(sl, 0, -1.0)], 0.0);
        prog.sdp.add_row(vec![x.term(0, 0, 1.0), Term::vec(sl, 1, 1.0)], c / 2.0);
        assert!((optimum(&prog) - c / 2.0).abs() < 1e-7);
    }

    #[test]
    fn l2_fixed_points() {
        let spec = LinearMapSpec::standard(DMatrix::identity(2, 2), m(2, 2, &[2.0, 0.0, 0.0, 1.0]))
            .unwrap();
        let mut prog = build_l2(&spec).unwrap();
        pin_x(&mut prog, &DMatrix::zeros(2, 2));
        assert!((optimum(&prog) - 2.0).abs() < 1e-7);

        let spec = LinearMapSpec::standard(DMatrix::identity(2, 2), m(2, 2, &[0.0, 1.0, 0.0, 0.0]))
            .unwrap();
        let mut prog = build_l2(&spec).unwrap();
        pin_x(&mut prog, &DMatrix::zeros(2, 2));
        assert!((optimum(&prog) - 1.0).abs() < 1e-7);
    }

    fn random_spec(rng: &mut ChaCha8Rng) -> LinearMapSpec {
        let r = |a: usize, b: usize, rng: &mut ChaCha8Rng| {
            DMatrix::from_fn(a, b, |_, _| rng.random_range(-1.0..1.0))
        };
        let kind = rng.random_range(0..4);
        let (m, n, p, q) = (
            rng.random_range(1..4),
            rng.random_range(1..4),
            rng.random_range(1..4),
            rng.random_range(1..4),
        );
        match kind {
            0 => {
                let a = r(p, m, rng);
                let c = r(p, n, rng);
                LinearMapSpec::standard(a, c).unwrap()
            }
            1 => {
                let a = r(p, m, rng);
                let b = r(n, q, rng);
                let c = r(p, q, rng);
                LinearMapSpec::weighted(a, b, c).unwrap()
            }
            2 => {
                let a = r(n, n, rng);
                let c = r(n, n, rng);
                LinearMapSpec::two_sided(a, c).unwrap()
            }
            _ => {
                let a = r(p, m, rng);
                let b = r(n, q, rng);
                let c = r(p, q, rng);
                let w = DMatrix::from_fn(p, q, |_, _| if rng.random_bool(0.6) { 1.0 } else { 0.0 });
                LinearMapSpec::partial_target(a, b, c, w).unwrap()
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn epigraph_is_tight_at_pinned_x(seed in 0u64..100_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = random_spec(&mut rng);
            let x = DMatrix::from_fn(spec.m, spec.n, |_, _| rng.random_range(-1.0..1.0));
            for norm in NormKind::ALL {
                let mut prog = build(&spec, norm).unwrap();
                pin_x(&mut prog, &x);
                let val = optimum(&prog);
                let want = prog.objective_of(&x).unwrap();
                prop_assert!((val - want).abs() <= 1e-6 * (1.0 + want.abs()), "{norm:?}: {val} vs {want}");
            }
        }

        #[test]
        fn dropping_a_linear_row_never_increases_the_optimum(seed in 0u64..100_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = random_spec(&mut rng);
            let norm = NormKind::ALL[rng.random_range(0..4)];
            let loose = build(&spec, norm).unwrap();
            let mut tight = loose.clone();
            let x = tight.x;
            let i = rng.random_range(0..spec.m);
            let j = rng.random_range(0..spec.n);
            tight.sdp.add_row(vec![x.term(i, j, 1.0)], rng.random_range(-1.0..1.0));
            let a = optimum(&loose);
            let b = optimum(&tight);
            prop_assert!(a <= b + 1e-7 * (1.0 + b.abs()));
        }

        #[test]
        fn sdp_value_bounds_norm_of_extracted_x(seed in 0u64..100_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = random_spec(&mut rng);
            for norm in NormKind::ALL {
                let prog = build(&spec, norm).unwrap();
                let sol = solve(&prog.sdp, &SolverSettings::default()).unwrap();
                prop_assert_eq!(sol.status, Status::Optimal);
                let x = prog.x.extract(&sol);
                let f = prog.objective_of(&x).unwrap();
                prop_assert!(f <= sol.primal_objective + 1e-6 * (1.0 + f.abs()));
            }
        }
    }
}
