//! Dense block standard-form semidefinite programming.
//!
//! A problem is a list of variable blocks (PSD matrices, nonnegative vectors,
//! free vectors), a linear objective over their entries and a list of linear
//! equality rows:
//!
//! ```text
//! minimize    Σ c_v v
//! subject to  Σ a_rv v = b_r      for every row r
//!             M_k ⪰ 0, u_k ≥ 0    for PSD and nonnegative blocks
//! ```
//!
//! Entries of a PSD block are addressed by `(i, j)`; `(i, j)` and `(j, i)`
//! name the same scalar variable. A term `coef · M_ij` with `i ≠ j` therefore
//! contributes `coef/2` to both off-diagonal positions of the equivalent
//! symmetric coefficient matrix (see [`SdpProblem::inner_product_terms`]).
//!
//! [`solve`] runs [`presolve`] and then a primal-dual path-following method on
//! the homogeneous self-dual embedding with Nesterov–Todd scaling, so that
//! infeasible and unbounded problems come back with certificates instead of
//! failing to converge.

mod cone;
mod hsd;
mod presolve;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use presolve::{presolve, PresolveAction, PresolveReport, Presolved};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Psd(usize),
    Nonneg(usize),
    Free(usize),
}

impl BlockKind {
    /// Number of scalar variables in the block.
    pub fn num_vars(&self) -> usize {
        match *self {
            BlockKind::Psd(n) => n * (n + 1) / 2,
            BlockKind::Nonneg(l) | BlockKind::Free(l) => l,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockId(pub usize);

/// `coef` times entry `(i, j)` of a block; vector blocks use `j = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub block: BlockId,
    pub i: usize,
    pub j: usize,
    pub coef: f64,
}

impl Term {
    pub fn new(block: BlockId, i: usize, j: usize, coef: f64) -> Self {
        Self { block, i, j, coef }
    }

    pub fn vec(block: BlockId, i: usize, coef: f64) -> Self {
        Self { block, i, j: 0, coef }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub terms: Vec<Term>,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    blocks: Vec<BlockKind>,
    offsets: Vec<usize>,
    num_vars: usize,
    objective: Vec<Term>,
    objective_offset: f64,
    rows: Vec<LinearRow>,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_block(&mut self, kind: BlockKind) -> BlockId {
        let id = BlockId(self.blocks.len());
        self.blocks.push(kind);
        self.offsets.push(self.num_vars);
        self.num_vars += kind.num_vars();
        id
    }

    pub fn blocks(&self) -> &[BlockKind] {
        &self.blocks
    }

    pub fn block(&self, id: BlockId) -> BlockKind {
        self.blocks[id.0]
    }

    pub fn rows(&self) -> &[LinearRow] {
        &self.rows
    }

    pub fn objective(&self) -> &[Term] {
        &self.objective
    }

    pub fn objective_offset(&self) -> f64 {
        self.objective_offset
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn add_objective_term(&mut self, t: Term) {
        self.objective.push(t);
    }

    /// Replaces the objective. The constant offset is reset to zero.
    pub fn set_objective(&mut self, terms: Vec<Term>) {
        self.objective = terms;
        self.objective_offset = 0.0;
    }

    pub fn set_objective_offset(&mut self, offset: f64) {
        self.objective_offset = offset;
    }

    pub fn add_row(&mut self, terms: Vec<Term>, rhs: f64) -> usize {
        self.rows.push(LinearRow { terms, rhs });
        self.rows.len() - 1
    }

    /// Adds the row `entry(block, i, j) = value`.
    pub fn pin(&mut self, block: BlockId, i: usize, j: usize, value: f64) -> usize {
        self.add_row(vec![Term::new(block, i, j, 1.0)], value)
    }

    /// Terms computing `<C, M>` for a symmetric coefficient matrix `C` and the
    /// PSD block `M`.
    pub fn inner_product_terms(block: BlockId, c: &DMatrix<f64>) -> Vec<Term> {
        let n = c.nrows();
        let mut out = Vec::new();
        for j in 0..n {
            for i in 0..=j {
                let v = if i == j { c[(i, i)] } else { c[(i, j)] + c[(j, i)] };
                if v != 0.0 {
                    out.push(Term::new(block, i, j, v));
                }
            }
        }
        out
    }

    /// Global index of the scalar variable a term refers to.
    pub fn var_index(&self, block: BlockId, i: usize, j: usize) -> Result<usize> {
        let kind = *self
            .blocks
            .get(block.0)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown block {}", block.0)))?;
        let local = match kind {
            BlockKind::Psd(n) => {
                if i >= n || j >= n {
                    return Err(Error::InvalidArgument(format!(
                        "entry ({i},{j}) outside PSD block of order {n}"
                    )));
                }
                let (a, b) = if i <= j { (i, j) } else { (j, i) };
                b * (b + 1) / 2 + a
            }
            BlockKind::Nonneg(l) | BlockKind::Free(l) => {
                if i >= l || j != 0 {
                    return Err(Error::InvalidArgument(format!(
                        "entry ({i},{j}) outside vector block of length {l}"
                    )));
                }
                i
            }
        };
        Ok(self.offsets[block.0] + local)
    }

    /// Inverse of [`Self::var_index`].
    pub fn var_location(&self, var: usize) -> (BlockId, usize, usize) {
        let b = match self.offsets.binary_search(&var) {
            Ok(mut k) => {
                // skip empty blocks sharing the offset
                while k + 1 < self.offsets.len() && self.offsets[k + 1] == var {
                    k += 1;
                }
                k
            }
            Err(k) => k - 1,
        };
        let local = var - self.offsets[b];
        match self.blocks[b] {
            BlockKind::Psd(_) => {
                let mut col = 0;
                while (col + 1) * (col + 2) / 2 <= local {
                    col += 1;
                }
                let row = local - col * (col + 1) / 2;
                (BlockId(b), row, col)
            }
            _ => (BlockId(b), local, 0),
        }
    }

    /// Evaluates the objective on block values.
    pub fn evaluate_objective(&self, values: &[BlockValue]) -> Result<f64> {
        let mut acc = self.objective_offset;
        for t in &self.objective {
            acc += t.coef * values[t.block.0].entry(t.i, t.j);
        }
        Ok(acc)
    }

    /// Worst absolute violation over the equality rows.
    pub fn max_row_violation(&self, values: &[BlockValue]) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                let lhs: f64 = r
                    .terms
                    .iter()
                    .map(|t| t.coef * values[t.block.0].entry(t.i, t.j))
                    .sum();
                (lhs - r.rhs).abs()
            })
            .fold(0.0, f64::max)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let check = |t: &Term| -> Result<()> {
            self.var_index(t.block, t.i, t.j)?;
            if !t.coef.is_finite() {
                return Err(Error::InvalidArgument("non-finite coefficient".into()));
            }
            Ok(())
        };
        for t in &self.objective {
            check(t)?;
        }
        for r in &self.rows {
            for t in &r.terms {
                check(t)?;
            }
            if !r.rhs.is_finite() {
                return Err(Error::InvalidArgument("non-finite right-hand side".into()));
            }
        }
        Ok(())
    }
}

/// Value of one block: a symmetric matrix for PSD blocks, a vector otherwise.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockValue {
    Matrix(DMatrix<f64>),
    Vector(DVector<f64>),
}

impl BlockValue {
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match self {
            BlockValue::Matrix(m) => m[(i, j)],
            BlockValue::Vector(v) => v[i],
        }
    }

    pub fn as_matrix(&self) -> Option<&DMatrix<f64>> {
        match self {
            BlockValue::Matrix(m) => Some(m),
            BlockValue::Vector(_) => None,
        }
    }

    pub fn as_vector(&self) -> Option<&DVector<f64>> {
        match self {
            BlockValue::Vector(v) => Some(v),
            BlockValue::Matrix(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    /// Relative equality-row violation plus cone violation of the primal point.
    pub primal: f64,
    /// Relative violation of `c - Aᵀy - z = 0`.
    pub dual: f64,
    /// `|p - d| / (1 + |p| + |d|)`, also bounding the complementarity.
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateKind {
    /// Dual improving ray `(y, Z)`: `Aᵀy + Z = 0`, `Z ⪰ 0`, `bᵀy = 1`.
    PrimalInfeasibility,
    /// Primal improving ray `v`: `A v = 0`, `v ∈ K`, `cᵀv = -1`.
    DualInfeasibility,
}

#[derive(Debug, Clone)]
pub struct Certificate {
    pub kind: CertificateKind,
    /// Row multipliers (primal infeasibility) or empty.
    pub y: Vec<f64>,
    /// Dual slack blocks (primal infeasibility) or primal ray blocks.
    pub blocks: Vec<BlockValue>,
    /// Norm of the homogeneous residual after normalization; small for a
    /// valid certificate.
    pub residual: f64,
}

impl Certificate {
    /// How strongly the ray certifies infeasibility: normalized objective
    /// improvement over the homogeneous residual.
    pub fn violation(&self) -> f64 {
        1.0 / self.residual.max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: Status,
    pub primal: Vec<BlockValue>,
    /// One multiplier per original row.
    pub dual_rows: Vec<f64>,
    /// Dual slack per block (zero vectors on free blocks).
    pub dual_slack: Vec<BlockValue>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    pub certificate: Option<Certificate>,
    pub presolve: PresolveReport,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub fn block(&self, id: BlockId) -> &BlockValue {
        &self.primal[id.0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Relative tolerance on primal/dual residuals and duality gap.
    pub tol: f64,
    pub max_iters: usize,
    /// Fraction of the maximal step to the cone boundary.
    pub step_fraction: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 200,
            step_fraction: 0.98,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol <= 1e-2) {
            return Err(Error::InvalidArgument(format!(
                "solver tolerance must lie in (0, 1e-2], got {}",
                self.tol
            )));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "step fraction must lie in (0, 1), got {}",
                self.step_fraction
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Solves a block standard-form program.
///
/// Deterministic for identical inputs. Fails only on malformed input or
/// settings; numerical trouble is reported as [`Status::Indeterminate`].
pub fn solve(problem: &SdpProblem, settings: &SolverSettings) -> Result<SdpSolution> {
    settings.validate()?;
    problem.validate()?;
    let presolved = presolve(problem)?;
    Ok(presolved.solve(problem, settings))
}

#[cfg(test)]
mod tests;
