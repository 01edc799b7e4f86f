//! Row and column reductions ahead of the interior-point method.
//!
//! Reductions, in order:
//!
//! 1. duplicate rows (exact scalar multiples) are dropped; parallel rows with
//!    different right-hand sides prove infeasibility;
//! 2. repeatedly: empty rows are dropped (or prove infeasibility), singleton
//!    rows fix their variable, and a variable occurring in exactly one row is
//!    solved for from that row (its cone membership, if any, is kept as an
//!    affine expression);
//! 3. linearly dependent remaining rows are dropped, inconsistent ones prove
//!    infeasibility;
//! 4. variables whose column depends linearly on earlier columns are fixed to
//!    zero, or prove unboundedness if the dependent direction carries cost.
//!
//! Every eliminated variable becomes an affine expression in the kept ones.
//! Row multipliers of eliminated rows are recovered afterwards by walking the
//! eliminations backwards.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::cone::{ConeProgram, ConeVec, PsdCone};
use super::hsd::{solve_hsd, HsdStatus};
use super::{
    BlockKind, BlockValue, Certificate, CertificateKind, Residuals, SdpProblem, SdpSolution,
    SolverSettings, Status,
};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub enum PresolveAction {
    RemovedEmptyRow { row: usize },
    RemovedDuplicateRow { row: usize, duplicate_of: usize },
    RemovedDependentRow { row: usize },
    FixedVariable { var: usize, value: f64, row: usize },
    SubstitutedVariable { var: usize, row: usize },
    FixedUnusedVariable { var: usize },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PresolveReport {
    pub actions: Vec<PresolveAction>,
    pub rows_before: usize,
    pub rows_after: usize,
    pub vars_before: usize,
    pub vars_after: usize,
}

impl PresolveReport {
    pub fn rows_removed(&self) -> usize {
        self.rows_before - self.rows_after
    }

    pub fn count(&self, pred: impl Fn(&PresolveAction) -> bool) -> usize {
        self.actions.iter().filter(|a| pred(a)).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarKind {
    Free,
    Lp(usize),
    Psd { cone: usize, a: usize, b: usize },
}

#[derive(Debug, Clone)]
enum Event {
    Fix {
        row: usize,
        var: usize,
        value: f64,
    },
    Subst {
        row: usize,
        var: usize,
        coef: f64,
        rhs: f64,
        others: Vec<(usize, f64)>,
    },
}

impl Event {
    fn owner(&self) -> (usize, usize) {
        match self {
            Event::Fix { row, var, .. } | Event::Subst { row, var, .. } => (*row, *var),
        }
    }
}

#[derive(Debug, Clone)]
enum Outcome {
    Reduced(ConeProgram),
    Infeasible { y: Vec<f64> },
    Unbounded { ray: Vec<f64> },
}

type Affine = (f64, Vec<(usize, f64)>);

/// Result of [`presolve`]: the reduced conic program plus everything needed to
/// map a reduced solution back.
#[derive(Debug, Clone)]
pub struct Presolved {
    n_vars: usize,
    kinds: Vec<VarKind>,
    orig_rows: Vec<Vec<(usize, f64)>>,
    orig_rhs: Vec<f64>,
    cols: Vec<Vec<(usize, f64)>>,
    c: Vec<f64>,
    offset: f64,
    events: Vec<Event>,
    exprs: Vec<Affine>,
    kept_rows: Vec<usize>,
    obj_const: f64,
    outcome: Outcome,
    psd_orders: Vec<usize>,
    pub report: PresolveReport,
}

const ZERO_ROW_TOL: f64 = 1e-10;
const DEP_TOL: f64 = 1e-10;
const PIVOT_RATIO: f64 = 0.1;

fn var_kinds(problem: &SdpProblem) -> (Vec<VarKind>, usize, Vec<usize>) {
    let mut kinds = Vec::with_capacity(problem.num_vars());
    let mut lp = 0;
    let mut psd_orders = Vec::new();
    for kind in problem.blocks() {
        match *kind {
            BlockKind::Free(l) => kinds.extend(std::iter::repeat(VarKind::Free).take(l)),
            BlockKind::Nonneg(l) => {
                for _ in 0..l {
                    kinds.push(VarKind::Lp(lp));
                    lp += 1;
                }
            }
            BlockKind::Psd(n) => {
                let cone = psd_orders.len();
                psd_orders.push(n);
                for b in 0..n {
                    for a in 0..=b {
                        kinds.push(VarKind::Psd { cone, a, b });
                    }
                }
            }
        }
    }
    (kinds, lp, psd_orders)
}

/// Applies the reductions. Fails only on malformed problems.
pub fn presolve(problem: &SdpProblem) -> Result<Presolved> {
    problem.validate()?;
    let nv = problem.num_vars();
    let (kinds, lp_len, psd_orders) = var_kinds(problem);

    let mut c = vec![0.0; nv];
    for t in problem.objective() {
        c[problem.var_index(t.block, t.i, t.j)?] += t.coef;
    }

    let mut rows: Vec<BTreeMap<usize, f64>> = Vec::with_capacity(problem.rows().len());
    let mut rhs: Vec<f64> = Vec::with_capacity(problem.rows().len());
    for r in problem.rows() {
        let mut m = BTreeMap::new();
        for t in &r.terms {
            *m.entry(problem.var_index(t.block, t.i, t.j)?).or_insert(0.0) += t.coef;
        }
        m.retain(|_, v| *v != 0.0);
        rows.push(m);
        rhs.push(r.rhs);
    }
    let nr = rows.len();
    let orig_rows: Vec<Vec<(usize, f64)>> =
        rows.iter().map(|m| m.iter().map(|(&k, &v)| (k, v)).collect()).collect();
    let orig_rhs = rhs.clone();
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nv];
    for (r, row) in orig_rows.iter().enumerate() {
        for &(v, a) in row {
            cols[v].push((r, a));
        }
    }

    let mut ps = Presolved {
        n_vars: nv,
        kinds,
        orig_rows,
        orig_rhs,
        cols,
        c,
        offset: problem.objective_offset(),
        events: Vec::new(),
        exprs: Vec::new(),
        kept_rows: Vec::new(),
        obj_const: 0.0,
        outcome: Outcome::Infeasible { y: vec![] },
        psd_orders,
        report: PresolveReport {
            rows_before: nr,
            vars_before: nv,
            ..Default::default()
        },
    };

    let mut alive = vec![true; nr];

    // 1. duplicates
    let mut seen: HashMap<Vec<(usize, u64)>, usize> = HashMap::new();
    for r in 0..nr {
        let Some((_, &f)) = rows[r].iter().next() else {
            continue;
        };
        let key: Vec<(usize, u64)> = rows[r]
            .iter()
            .map(|(&k, &v)| (k, (v / f).to_bits()))
            .collect();
        match seen.get(&key) {
            Some(&k) => {
                let fk = *rows[k].iter().next().unwrap().1;
                let delta = rhs[r] / f - rhs[k] / fk;
                if delta.abs() <= ZERO_ROW_TOL * (1.0 + (rhs[r] / f).abs()) {
                    alive[r] = false;
                    ps.report.actions.push(PresolveAction::RemovedDuplicateRow {
                        row: r,
                        duplicate_of: k,
                    });
                } else {
                    let mut y = vec![0.0; nr];
                    y[r] = 1.0 / (f * delta);
                    y[k] = -1.0 / (fk * delta);
                    ps.outcome = Outcome::Infeasible { y };
                    ps.report.rows_after = alive.iter().filter(|a| **a).count();
                    return Ok(ps);
                }
            }
            None => {
                seen.insert(key, r);
            }
        }
    }

    // 2. elimination loop
    let mut col_rows: Vec<std::collections::BTreeSet<usize>> =
        vec![Default::default(); nv];
    for r in 0..nr {
        if alive[r] {
            for &v in rows[r].keys() {
                col_rows[v].insert(r);
            }
        }
    }
    let mut eliminated = vec![false; nv];
    loop {
        let mut changed = false;
        for r in 0..nr {
            if !alive[r] {
                continue;
            }
            let len = rows[r].len();
            if len == 0 {
                if rhs[r].abs() <= ZERO_ROW_TOL * (1.0 + ps.orig_rhs[r].abs()) {
                    alive[r] = false;
                    ps.report.actions.push(PresolveAction::RemovedEmptyRow { row: r });
                    changed = true;
                    continue;
                }
                let mut y = vec![0.0; nr];
                y[r] = 1.0 / rhs[r];
                ps.recover_row_duals(&mut y, |_| 0.0);
                ps.outcome = Outcome::Infeasible { y };
                ps.report.rows_after = alive.iter().filter(|a| **a).count();
                return Ok(ps);
            }
            if len == 1 {
                let (&v, &a) = rows[r].iter().next().unwrap();
                let value = rhs[r] / a;
                alive[r] = false;
                col_rows[v].remove(&r);
                let others: Vec<usize> = col_rows[v].iter().copied().collect();
                for r2 in others {
                    let a2 = rows[r2].remove(&v).unwrap();
                    rhs[r2] -= a2 * value;
                }
                col_rows[v].clear();
                eliminated[v] = true;
                ps.events.push(Event::Fix { row: r, var: v, value });
                ps.report.actions.push(PresolveAction::FixedVariable { var: v, value, row: r });
                changed = true;
                continue;
            }
            let rowmax = rows[r].values().fold(0.0f64, |m, v| m.max(v.abs()));
            let mut pick: Option<(usize, f64)> = None;
            for (&v, &a) in &rows[r] {
                if col_rows[v].len() == 1
                    && a.abs() >= PIVOT_RATIO * rowmax
                    && pick.map_or(true, |(_, b)| a.abs() > b.abs())
                {
                    pick = Some((v, a));
                }
            }
            if let Some((v, a)) = pick {
                let others: Vec<(usize, f64)> = rows[r]
                    .iter()
                    .filter(|(&k, _)| k != v)
                    .map(|(&k, &x)| (k, x))
                    .collect();
                for &(k, _) in &others {
                    col_rows[k].remove(&r);
                }
                col_rows[v].clear();
                alive[r] = false;
                eliminated[v] = true;
                ps.events.push(Event::Subst {
                    row: r,
                    var: v,
                    coef: a,
                    rhs: rhs[r],
                    others,
                });
                ps.report
                    .actions
                    .push(PresolveAction::SubstitutedVariable { var: v, row: r });
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    // 3. dependent rows, with orthogonalization tracked in row space so an
    // inconsistent row yields a Farkas combination.
    let alive_rows: Vec<usize> = (0..nr).filter(|&r| alive[r]).collect();
    let alive_vars: Vec<usize> = (0..nv).filter(|&v| !eliminated[v]).collect();
    let mut vpos = vec![usize::MAX; nv];
    for (i, &v) in alive_vars.iter().enumerate() {
        vpos[v] = i;
    }
    let na = alive_vars.len();
    let mut q_rows: Vec<DVector<f64>> = Vec::new();
    let mut q_rhs: Vec<f64> = Vec::new();
    let mut q_comb: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut kept = Vec::new();
    for &r in &alive_rows {
        let mut a = DVector::zeros(na);
        for (&v, &x) in &rows[r] {
            a[vpos[v]] = x;
        }
        let anorm = a.norm();
        let mut res = a.clone();
        let mut beta = rhs[r];
        let mut comb: BTreeMap<usize, f64> = BTreeMap::new();
        comb.insert(r, 1.0);
        for _pass in 0..2 {
            for (qi, q) in q_rows.iter().enumerate() {
                let ci = q.dot(&res);
                if ci != 0.0 {
                    res.axpy(-ci, q, 1.0);
                    beta -= ci * q_rhs[qi];
                    for &(rr, t) in &q_comb[qi] {
                        *comb.entry(rr).or_insert(0.0) -= ci * t;
                    }
                }
            }
        }
        let rn = res.norm();
        if rn <= DEP_TOL * anorm.max(1.0) {
            if beta.abs() <= 1e-8 * (1.0 + rhs[r].abs()) {
                ps.report.actions.push(PresolveAction::RemovedDependentRow { row: r });
                alive[r] = false;
                continue;
            }
            let mut y = vec![0.0; nr];
            for (&rr, &t) in &comb {
                y[rr] = t / beta;
            }
            ps.recover_row_duals(&mut y, |_| 0.0);
            ps.outcome = Outcome::Infeasible { y };
            ps.report.rows_after = alive.iter().filter(|a| **a).count();
            return Ok(ps);
        }
        q_rows.push(res / rn);
        q_rhs.push(beta / rn);
        q_comb.push(comb.into_iter().map(|(k, t)| (k, t / rn)).collect());
        kept.push(r);
    }

    // 4. affine expressions over alive variables
    let mut exprs: Vec<Option<Affine>> = vec![None; nv];
    for &v in &alive_vars {
        exprs[v] = Some((0.0, vec![(vpos[v], 1.0)]));
    }
    for ev in ps.events.iter().rev() {
        match ev {
            Event::Fix { var, value, .. } => {
                exprs[*var] = Some((*value, vec![]));
            }
            Event::Subst {
                var,
                coef,
                rhs,
                others,
                ..
            } => {
                let mut k = rhs / coef;
                let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
                for &(o, a) in others {
                    let (ko, lo) = exprs[o].as_ref().expect("resolved in reverse order");
                    k -= a / coef * ko;
                    for &(idx, t) in lo {
                        *acc.entry(idx).or_insert(0.0) -= a / coef * t;
                    }
                }
                acc.retain(|_, t| *t != 0.0);
                exprs[*var] = Some((k, acc.into_iter().collect()));
            }
        }
    }
    let mut exprs: Vec<Affine> = exprs.into_iter().map(|e| e.unwrap()).collect();

    // objective and usage
    let mut c_red = vec![0.0; na];
    let mut obj_const = 0.0;
    for v in 0..nv {
        if ps.c[v] != 0.0 {
            obj_const += ps.c[v] * exprs[v].0;
            for &(idx, t) in &exprs[v].1 {
                c_red[idx] += ps.c[v] * t;
            }
        }
    }
    // Column dependencies of the reduced constraint matrix [A; G]. A
    // dependent column moves along a direction invisible to every
    // constraint: it is fixed to zero when the direction carries no cost and
    // proves unboundedness otherwise.
    let cnorm = ps.c.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut cone_coord = vec![usize::MAX; nv];
    let mut n_coords = kept.len();
    for v in 0..nv {
        if ps.kinds[v] != VarKind::Free {
            cone_coord[v] = n_coords;
            n_coords += 1;
        }
    }
    let mut colmat = DMatrix::<f64>::zeros(n_coords, na);
    for (k, &r) in kept.iter().enumerate() {
        for (&v, &x) in &rows[r] {
            colmat[(k, vpos[v])] = x;
        }
    }
    for v in 0..nv {
        if cone_coord[v] != usize::MAX {
            for &(idx, t) in &exprs[v].1 {
                colmat[(cone_coord[v], idx)] += t;
            }
        }
    }
    let mut drop_fixed = vec![false; na];
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut basis_comb: Vec<Vec<(usize, f64)>> = Vec::new();
    for i in 0..na {
        let col = colmat.column(i).into_owned();
        let cn = col.norm();
        let mut res = col;
        let mut comb: BTreeMap<usize, f64> = BTreeMap::new();
        comb.insert(i, 1.0);
        for _pass in 0..2 {
            for (qi, q) in basis.iter().enumerate() {
                let ci = q.dot(&res);
                if ci != 0.0 {
                    res.axpy(-ci, q, 1.0);
                    for &(k, t) in &basis_comb[qi] {
                        *comb.entry(k).or_insert(0.0) -= ci * t;
                    }
                }
            }
        }
        let rn = res.norm();
        if rn > DEP_TOL * cn && rn > 0.0 {
            basis.push(res / rn);
            basis_comb.push(comb.into_iter().map(|(k, t)| (k, t / rn)).collect());
            continue;
        }
        let dnorm = comb.values().map(|t| t * t).sum::<f64>().sqrt();
        let cost: f64 = comb.iter().map(|(&k, &t)| c_red[k] * t).sum();
        if cost.abs() <= 1e-12 * (1.0 + cnorm) * dnorm {
            drop_fixed[i] = true;
            ps.report
                .actions
                .push(PresolveAction::FixedUnusedVariable { var: alive_vars[i] });
            continue;
        }
        // moving against the cost along this direction is an improving ray
        let dir = -cost.signum();
        let mut ray = vec![0.0; nv];
        for u in 0..nv {
            for &(idx, t) in &exprs[u].1 {
                if let Some(d) = comb.get(&idx) {
                    ray[u] += t * d * dir;
                }
            }
        }
        let cr: f64 = ray.iter().zip(&ps.c).map(|(a, b)| a * b).sum();
        for x in &mut ray {
            *x /= -cr;
        }
        ps.outcome = Outcome::Unbounded { ray };
        ps.report.rows_after = kept.len();
        return Ok(ps);
    }

    // renumber
    let mut newpos = vec![usize::MAX; na];
    let mut n_red = 0;
    for i in 0..na {
        if !drop_fixed[i] {
            newpos[i] = n_red;
            n_red += 1;
        }
    }
    for e in &mut exprs {
        e.1.retain(|(idx, _)| !drop_fixed[*idx]);
        for p in &mut e.1 {
            p.0 = newpos[p.0];
        }
    }
    let c_vec = DVector::from_iterator(
        n_red,
        c_red.iter().enumerate().filter(|(i, _)| !drop_fixed[*i]).map(|(_, x)| *x),
    );
    let mut a = DMatrix::zeros(kept.len(), n_red);
    let mut b = DVector::zeros(kept.len());
    for (k, &r) in kept.iter().enumerate() {
        for (&v, &x) in &rows[r] {
            a[(k, newpos[vpos[v]])] = x;
        }
        b[k] = rhs[r];
    }
    let mut lp_rows = vec![Vec::new(); lp_len];
    let mut lp_h = DVector::zeros(lp_len);
    let mut psd_cols: Vec<BTreeMap<usize, Vec<(usize, usize, f64)>>> =
        vec![BTreeMap::new(); ps.psd_orders.len()];
    let mut psd_h: Vec<DMatrix<f64>> =
        ps.psd_orders.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    for v in 0..nv {
        let (k0, lin) = &exprs[v];
        match ps.kinds[v] {
            VarKind::Free => {}
            VarKind::Lp(i) => {
                lp_h[i] = *k0;
                lp_rows[i] = lin.iter().map(|&(idx, t)| (idx, -t)).collect();
            }
            VarKind::Psd { cone, a: ra, b: rb } => {
                psd_h[cone][(ra, rb)] = *k0;
                psd_h[cone][(rb, ra)] = *k0;
                for &(idx, t) in lin {
                    psd_cols[cone].entry(idx).or_default().push((ra, rb, -t));
                }
            }
        }
    }
    let psd = ps
        .psd_orders
        .iter()
        .zip(psd_cols)
        .zip(psd_h)
        .map(|((&order, cols), h)| PsdCone {
            order,
            cols: cols.into_iter().collect(),
            h,
        })
        .collect();

    ps.report.rows_after = kept.len();
    ps.report.vars_after = n_red;
    ps.exprs = exprs;
    ps.kept_rows = kept;
    ps.obj_const = obj_const + ps.offset;
    ps.outcome = Outcome::Reduced(ConeProgram {
        n: n_red,
        c: c_vec,
        a,
        b,
        lp_rows,
        lp_h,
        psd,
    });
    Ok(ps)
}

fn min_sym_eig(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl Presolved {
    /// Fills multipliers of eliminated rows from dual feasibility of the owner
    /// variable: `Σ_r y_r a_rv = reduced_cost(v)`.
    ///
    /// A substituted variable only occurs in its own row and in rows of
    /// earlier substitutions, so those are resolved oldest first. A fixed
    /// variable may also occur in rows removed later, so fixings are resolved
    /// newest first, after all substitutions.
    fn recover_row_duals(&self, y: &mut [f64], reduced_cost: impl Fn(usize) -> f64) {
        let subst = self.events.iter().filter(|e| matches!(e, Event::Subst { .. }));
        let fixes = self.events.iter().rev().filter(|e| matches!(e, Event::Fix { .. }));
        for ev in subst.chain(fixes) {
            let (row, var) = ev.owner();
            let mut acc = 0.0;
            let mut own = 0.0;
            for &(r, a) in &self.cols[var] {
                if r == row {
                    own = a;
                } else {
                    acc += y[r] * a;
                }
            }
            y[row] = (reduced_cost(var) - acc) / own;
        }
    }

    fn to_blocks(&self, problem: &SdpProblem, vals: &[f64]) -> Vec<BlockValue> {
        let mut out = Vec::with_capacity(problem.blocks().len());
        let mut off = 0;
        for kind in problem.blocks() {
            match *kind {
                BlockKind::Psd(n) => {
                    let mut m = DMatrix::zeros(n, n);
                    let mut k = off;
                    for b in 0..n {
                        for a in 0..=b {
                            m[(a, b)] = vals[k];
                            m[(b, a)] = vals[k];
                            k += 1;
                        }
                    }
                    out.push(BlockValue::Matrix(m));
                }
                BlockKind::Nonneg(l) | BlockKind::Free(l) => {
                    out.push(BlockValue::Vector(DVector::from_column_slice(&vals[off..off + l])));
                }
            }
            off += kind.num_vars();
        }
        out
    }

    fn slack_blocks(&self, problem: &SdpProblem, z: &ConeVec) -> Vec<BlockValue> {
        let mut out = Vec::with_capacity(problem.blocks().len());
        let mut lp = 0;
        let mut cone = 0;
        for kind in problem.blocks() {
            match *kind {
                BlockKind::Psd(_) => {
                    out.push(BlockValue::Matrix(z.psd[cone].clone()));
                    cone += 1;
                }
                BlockKind::Nonneg(l) => {
                    out.push(BlockValue::Vector(DVector::from_iterator(
                        l,
                        z.lp.iter().skip(lp).take(l).copied(),
                    )));
                    lp += l;
                }
                BlockKind::Free(l) => out.push(BlockValue::Vector(DVector::zeros(l))),
            }
        }
        out
    }

    /// Dual slack per scalar variable, so that `c - Aᵀy - zfull = 0`.
    fn zfull(&self, z: &ConeVec) -> Vec<f64> {
        self.kinds
            .iter()
            .map(|k| match *k {
                VarKind::Free => 0.0,
                VarKind::Lp(i) => z.lp[i],
                VarKind::Psd { cone, a, b } => {
                    if a == b {
                        z.psd[cone][(a, a)]
                    } else {
                        z.psd[cone][(a, b)] + z.psd[cone][(b, a)]
                    }
                }
            })
            .collect()
    }

    fn expand(&self, x: &DVector<f64>, with_const: bool) -> Vec<f64> {
        self.exprs
            .iter()
            .map(|(k, lin)| {
                let base = if with_const { *k } else { 0.0 };
                base + lin.iter().map(|&(i, t)| t * x[i]).sum::<f64>()
            })
            .collect()
    }

    fn at_y(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_vars];
        for (r, row) in self.orig_rows.iter().enumerate() {
            for &(v, a) in row {
                out[v] += a * y[r];
            }
        }
        out
    }

    fn a_v(&self, v: &[f64]) -> Vec<f64> {
        self.orig_rows
            .iter()
            .zip(&self.orig_rhs)
            .map(|(row, _)| row.iter().map(|&(k, a)| a * v[k]).sum())
            .collect()
    }

    fn cone_violation(blocks: &[BlockValue], problem: &SdpProblem) -> f64 {
        let mut worst = 0.0f64;
        for (kind, val) in problem.blocks().iter().zip(blocks) {
            let (neg, scale) = match (kind, val) {
                (BlockKind::Psd(_), BlockValue::Matrix(m)) => {
                    (-min_sym_eig(m), m.amax())
                }
                (BlockKind::Nonneg(_), BlockValue::Vector(v)) => {
                    (-v.iter().copied().fold(f64::INFINITY, f64::min), v.amax())
                }
                _ => (0.0, 0.0),
            };
            if neg.is_finite() && neg > 0.0 {
                worst = worst.max(neg / (1.0 + scale));
            }
        }
        worst
    }

    fn empty_solution(&self, problem: &SdpProblem, status: Status) -> SdpSolution {
        let zeros = vec![0.0; self.n_vars];
        let blocks = self.to_blocks(problem, &zeros);
        SdpSolution {
            status,
            primal: blocks.clone(),
            dual_rows: vec![0.0; self.orig_rows.len()],
            dual_slack: blocks,
            primal_objective: f64::NAN,
            dual_objective: f64::NAN,
            residuals: Residuals::default(),
            iterations: 0,
            certificate: None,
            presolve: self.report.clone(),
        }
    }

    fn primal_infeasible(
        &self,
        problem: &SdpProblem,
        mut y: Vec<f64>,
        z: Option<&ConeVec>,
        iterations: usize,
    ) -> SdpSolution {
        let zfull = z.map(|z| self.zfull(z)).unwrap_or_else(|| vec![0.0; self.n_vars]);
        let bty: f64 = y.iter().zip(&self.orig_rhs).map(|(a, b)| a * b).sum();
        let f = if bty > 0.0 { 1.0 / bty } else { 1.0 };
        for v in &mut y {
            *v *= f;
        }
        let mut slack = match z {
            Some(z) => self.slack_blocks(problem, z),
            None => self.to_blocks(problem, &vec![0.0; self.n_vars]),
        };
        for b in &mut slack {
            match b {
                BlockValue::Matrix(m) => *m *= f,
                BlockValue::Vector(v) => *v *= f,
            }
        }
        let aty = self.at_y(&y);
        let res: Vec<f64> = aty.iter().zip(&zfull).map(|(a, z)| a + f * z).collect();
        let residual = norm2(&res) + Self::cone_violation(&slack, problem)
            + if bty > 0.0 { 0.0 } else { 1.0 };
        let mut sol = self.empty_solution(problem, Status::PrimalInfeasible);
        sol.primal_objective = f64::INFINITY;
        sol.dual_objective = f64::INFINITY;
        sol.iterations = iterations;
        sol.dual_rows = y.clone();
        sol.dual_slack = slack.clone();
        sol.certificate = Some(Certificate {
            kind: CertificateKind::PrimalInfeasibility,
            y,
            blocks: slack,
            residual,
        });
        sol
    }

    fn dual_infeasible(&self, problem: &SdpProblem, mut ray: Vec<f64>, iterations: usize) -> SdpSolution {
        let ctv: f64 = ray.iter().zip(&self.c).map(|(a, b)| a * b).sum();
        let f = if ctv < 0.0 { -1.0 / ctv } else { 1.0 };
        for v in &mut ray {
            *v *= f;
        }
        let blocks = self.to_blocks(problem, &ray);
        let residual = norm2(&self.a_v(&ray)) + Self::cone_violation(&blocks, problem)
            + if ctv < 0.0 { 0.0 } else { 1.0 };
        let mut sol = self.empty_solution(problem, Status::DualInfeasible);
        sol.primal_objective = f64::NEG_INFINITY;
        sol.dual_objective = f64::NEG_INFINITY;
        sol.iterations = iterations;
        sol.certificate = Some(Certificate {
            kind: CertificateKind::DualInfeasibility,
            y: vec![],
            blocks,
            residual,
        });
        sol
    }

    fn assemble(
        &self,
        problem: &SdpProblem,
        status: Status,
        x: &DVector<f64>,
        y_red: &DVector<f64>,
        z: &ConeVec,
        iterations: usize,
    ) -> SdpSolution {
        let v = self.expand(x, true);
        let zfull = self.zfull(z);
        let mut y = vec![0.0; self.orig_rows.len()];
        for (k, &r) in self.kept_rows.iter().enumerate() {
            y[r] = -y_red[k];
        }
        self.recover_row_duals(&mut y, |u| self.c[u] - zfull[u]);

        let primal = self.to_blocks(problem, &v);
        let dual_slack = self.slack_blocks(problem, z);
        let pobj = v.iter().zip(&self.c).map(|(a, b)| a * b).sum::<f64>() + self.offset;
        let dobj = y.iter().zip(&self.orig_rhs).map(|(a, b)| a * b).sum::<f64>() + self.offset;

        let av = self.a_v(&v);
        let rres: Vec<f64> = av.iter().zip(&self.orig_rhs).map(|(a, b)| a - b).collect();
        let pres = norm2(&rres) / (1.0 + norm2(&self.orig_rhs))
            + Self::cone_violation(&primal, problem);
        let aty = self.at_y(&y);
        let dres_v: Vec<f64> = (0..self.n_vars)
            .map(|u| aty[u] + zfull[u] - self.c[u])
            .collect();
        let dres = norm2(&dres_v) / (1.0 + norm2(&self.c))
            + Self::cone_violation(&dual_slack, problem);
        let compl: f64 = v.iter().zip(&zfull).map(|(a, b)| a * b).sum();
        let gap = (pobj - dobj).abs().max(compl.abs()) / (1.0 + pobj.abs() + dobj.abs());

        SdpSolution {
            status,
            primal,
            dual_rows: y,
            dual_slack,
            primal_objective: pobj,
            dual_objective: dobj,
            residuals: Residuals {
                primal: pres,
                dual: dres,
                gap,
            },
            iterations,
            certificate: None,
            presolve: self.report.clone(),
        }
    }

    /// Solves the reduced program and maps the result back to `problem`, which
    /// must be the problem this presolve was computed from.
    pub fn solve(&self, problem: &SdpProblem, settings: &SolverSettings) -> SdpSolution {
        let prog = match &self.outcome {
            Outcome::Infeasible { y } => {
                return self.primal_infeasible(problem, y.clone(), None, 0);
            }
            Outcome::Unbounded { ray } => return self.dual_infeasible(problem, ray.clone(), 0),
            Outcome::Reduced(p) => p,
        };
        if prog.n == 0 {
            return self.solve_constant(problem, prog, settings);
        }
        let res = solve_hsd(prog, settings);
        match res.status {
            HsdStatus::Optimal | HsdStatus::Indeterminate => {
                let status = if res.status == HsdStatus::Optimal {
                    Status::Optimal
                } else {
                    Status::Indeterminate
                };
                self.assemble(problem, status, &res.x, &res.y, &res.z, res.iterations)
            }
            HsdStatus::PrimalInfeasible => {
                let zfull = self.zfull(&res.z);
                let mut y = vec![0.0; self.orig_rows.len()];
                for (k, &r) in self.kept_rows.iter().enumerate() {
                    y[r] = -res.y[k];
                }
                self.recover_row_duals(&mut y, |u| -zfull[u]);
                self.primal_infeasible(problem, y, Some(&res.z), res.iterations)
            }
            HsdStatus::DualInfeasible => {
                let ray = self.expand(&res.x, false);
                self.dual_infeasible(problem, ray, res.iterations)
            }
        }
    }

    /// Every variable was fixed: the program is feasible iff the constant
    /// cone point lies in the cone.
    fn solve_constant(
        &self,
        problem: &SdpProblem,
        prog: &ConeProgram,
        settings: &SolverSettings,
    ) -> SdpSolution {
        let h = prog.h();
        let tol = settings.tol * (1.0 + h.norm());
        let mut worst = (0.0, None::<(usize, usize)>);
        for (i, v) in h.lp.iter().enumerate() {
            if -v > worst.0 {
                worst = (-v, Some((usize::MAX, i)));
            }
        }
        for (k, m) in h.psd.iter().enumerate() {
            let e = min_sym_eig(m);
            if -e > worst.0 {
                worst = (-e, Some((k, 0)));
            }
        }
        let x = DVector::zeros(0);
        if worst.0 <= tol {
            let z = ConeVec::zeros(prog);
            return self.assemble(problem, Status::Optimal, &x, &DVector::zeros(0), &z, 0);
        }
        // dual ray concentrated on the most violated direction, hᵀz = -1
        let mut z = ConeVec::zeros(prog);
        match worst.1 {
            Some((usize::MAX, i)) => z.lp[i] = 1.0 / worst.0,
            Some((k, _)) => {
                let eig = SymmetricEigen::new(h.psd[k].clone());
                let (imin, _) = eig
                    .eigenvalues
                    .iter()
                    .enumerate()
                    .fold((0, f64::INFINITY), |acc, (i, &e)| if e < acc.1 { (i, e) } else { acc });
                let u = eig.eigenvectors.column(imin).into_owned();
                z.psd[k] = (&u * u.transpose()) / worst.0;
            }
            None => unreachable!(),
        }
        let zfull = self.zfull(&z);
        let mut y = vec![0.0; self.orig_rows.len()];
        self.recover_row_duals(&mut y, |u| -zfull[u]);
        self.primal_infeasible(problem, y, Some(&z), 0)
    }
}
