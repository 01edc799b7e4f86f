//! Conic form used by the interior-point method and the Nesterov–Todd scaling.
//!
//! ```text
//! minimize cᵀx  subject to  Gx + s = h,  Ax = b,  s ∈ K
//! ```
//!
//! with `K` a product of one nonnegative orthant and PSD cones. Cone elements
//! are stored as a vector plus a list of symmetric matrices.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::matcore::svd;

/// One PSD cone. `cols` lists, for every variable touching the cone, the
/// upper-triangle entries `(a, b, v)` of its coefficient matrix `G_j`
/// (mirrored below the diagonal).
#[derive(Debug, Clone)]
pub(crate) struct PsdCone {
    pub order: usize,
    pub cols: Vec<(usize, Vec<(usize, usize, f64)>)>,
    pub h: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct ConeProgram {
    pub n: usize,
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub lp_rows: Vec<Vec<(usize, f64)>>,
    pub lp_h: DVector<f64>,
    pub psd: Vec<PsdCone>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ConeVec {
    pub lp: DVector<f64>,
    pub psd: Vec<DMatrix<f64>>,
}

impl ConeVec {
    pub fn zeros(prog: &ConeProgram) -> Self {
        Self {
            lp: DVector::zeros(prog.lp_rows.len()),
            psd: prog.psd.iter().map(|c| DMatrix::zeros(c.order, c.order)).collect(),
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.lp.dot(&other.lp)
            + self
                .psd
                .iter()
                .zip(&other.psd)
                .map(|(a, b)| a.dot(b))
                .sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&mut self, f: f64) {
        self.lp *= f;
        for m in &mut self.psd {
            *m *= f;
        }
    }

    pub fn scaled(&self, f: f64) -> Self {
        let mut out = self.clone();
        out.scale(f);
        out
    }

    /// `self += f · other`
    pub fn axpy(&mut self, f: f64, other: &Self) {
        self.lp.axpy(f, &other.lp, 1.0);
        for (a, b) in self.psd.iter_mut().zip(&other.psd) {
            *a += b * f;
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Smallest "eigenvalue" over the product cone (`+∞` for the empty cone).
    pub fn min_eig(&self) -> f64 {
        let mut m = self.lp.iter().copied().fold(f64::INFINITY, f64::min);
        for s in &self.psd {
            if s.nrows() > 0 {
                let e = SymmetricEigen::new(sym(s)).eigenvalues;
                m = m.min(e.iter().copied().fold(f64::INFINITY, f64::min));
            }
        }
        m
    }

    /// Adds `f · e` where `e` is the cone identity.
    pub fn add_identity(&mut self, f: f64) {
        self.lp.add_scalar_mut(f);
        for s in &mut self.psd {
            for i in 0..s.nrows() {
                s[(i, i)] += f;
            }
        }
    }
}

pub(crate) fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Jordan product: elementwise on the orthant, `(AB + BA)/2` on PSD cones.
pub(crate) fn jordan(a: &ConeVec, b: &ConeVec) -> ConeVec {
    ConeVec {
        lp: a.lp.component_mul(&b.lp),
        psd: a
            .psd
            .iter()
            .zip(&b.psd)
            .map(|(x, y)| {
                let p = x * y;
                (&p + p.transpose()) * 0.5
            })
            .collect(),
    }
}

impl ConeProgram {
    pub fn degree(&self) -> usize {
        self.lp_rows.len() + self.psd.iter().map(|c| c.order).sum::<usize>()
    }

    pub fn h(&self) -> ConeVec {
        ConeVec {
            lp: self.lp_h.clone(),
            psd: self.psd.iter().map(|c| c.h.clone()).collect(),
        }
    }

    /// `G x`
    pub fn g_apply(&self, x: &DVector<f64>) -> ConeVec {
        let lp = DVector::from_iterator(
            self.lp_rows.len(),
            self.lp_rows
                .iter()
                .map(|row| row.iter().map(|&(j, v)| v * x[j]).sum::<f64>()),
        );
        let psd = self
            .psd
            .iter()
            .map(|cone| {
                let mut m = DMatrix::zeros(cone.order, cone.order);
                for (j, entries) in &cone.cols {
                    let xj = x[*j];
                    if xj == 0.0 {
                        continue;
                    }
                    for &(a, b, v) in entries {
                        m[(a, b)] += v * xj;
                        if a != b {
                            m[(b, a)] += v * xj;
                        }
                    }
                }
                m
            })
            .collect();
        ConeVec { lp, psd }
    }

    /// `Gᵀ z`
    pub fn gt_apply(&self, z: &ConeVec) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for (row, zi) in self.lp_rows.iter().zip(z.lp.iter()) {
            for &(j, v) in row {
                out[j] += v * zi;
            }
        }
        for (cone, zm) in self.psd.iter().zip(&z.psd) {
            for (j, entries) in &cone.cols {
                let mut acc = 0.0;
                for &(a, b, v) in entries {
                    acc += if a == b {
                        v * zm[(a, a)]
                    } else {
                        v * (zm[(a, b)] + zm[(b, a)])
                    };
                }
                out[*j] += acc;
            }
        }
        out
    }
}

/// Nesterov–Todd scaling `W` with `W z = W⁻ᵀ s = λ`.
///
/// On the orthant `W = diag(w)`. On a PSD cone `W(Z) = RᵀZR` and
/// `Wᵀ(M) = RMRᵀ`; `λ` is diagonal there and stored as a vector.
#[derive(Debug, Clone)]
pub(crate) struct Scaling {
    pub w: DVector<f64>,
    pub lambda_lp: DVector<f64>,
    pub r: Vec<DMatrix<f64>>,
    pub rinv: Vec<DMatrix<f64>>,
    pub lambda_psd: Vec<DVector<f64>>,
    /// `R⁻ᵀR⁻¹`
    pub omega: Vec<DMatrix<f64>>,
}

impl Scaling {
    pub fn identity(prog: &ConeProgram) -> Self {
        let l = prog.lp_rows.len();
        let eye = || prog.psd.iter().map(|c| DMatrix::identity(c.order, c.order)).collect();
        Self {
            w: DVector::from_element(l, 1.0),
            lambda_lp: DVector::from_element(l, 1.0),
            r: eye(),
            rinv: eye(),
            lambda_psd: prog.psd.iter().map(|c| DVector::from_element(c.order, 1.0)).collect(),
            omega: eye(),
        }
    }

    fn refresh_products(&mut self) {
        self.omega = self.rinv.iter().map(|ri| sym(&(ri.transpose() * ri))).collect();
    }

    /// Scaling point of a strictly interior pair. `None` when a factorization
    /// fails (a point numerically on the boundary).
    pub fn from_pair(s: &ConeVec, z: &ConeVec) -> Option<Self> {
        if s.lp.iter().chain(z.lp.iter()).any(|&v| !(v > 0.0)) {
            return None;
        }
        let w = s.lp.zip_map(&z.lp, |a, b| (a / b).sqrt());
        let lambda_lp = s.lp.zip_map(&z.lp, |a, b| (a * b).sqrt());
        let mut r = Vec::new();
        let mut rinv = Vec::new();
        let mut lambda_psd = Vec::new();
        for (sm, zm) in s.psd.iter().zip(&z.psd) {
            let n = sm.nrows();
            if n == 0 {
                r.push(DMatrix::zeros(0, 0));
                rinv.push(DMatrix::zeros(0, 0));
                lambda_psd.push(DVector::zeros(0));
                continue;
            }
            let ls = Cholesky::new(sym(sm))?.l();
            let lz = Cholesky::new(sym(zm))?.l();
            let (rr, ri, lam) = nt_factor(&ls, &lz, None)?;
            r.push(rr);
            rinv.push(ri);
            lambda_psd.push(lam);
        }
        let mut out = Self {
            w,
            lambda_lp,
            r,
            rinv,
            lambda_psd,
            omega: Vec::new(),
        };
        out.refresh_products();
        Some(out)
    }

    pub fn lambda(&self) -> ConeVec {
        ConeVec {
            lp: self.lambda_lp.clone(),
            psd: self
                .lambda_psd
                .iter()
                .map(|l| DMatrix::from_diagonal(l))
                .collect(),
        }
    }

    /// `W z`
    pub fn apply_w(&self, z: &ConeVec) -> ConeVec {
        ConeVec {
            lp: z.lp.component_mul(&self.w),
            psd: z
                .psd
                .iter()
                .zip(&self.r)
                .map(|(m, r)| sym(&(r.transpose() * m * r)))
                .collect(),
        }
    }

    /// `Wᵀ m`
    pub fn apply_wt(&self, m: &ConeVec) -> ConeVec {
        ConeVec {
            lp: m.lp.component_mul(&self.w),
            psd: m
                .psd
                .iter()
                .zip(&self.r)
                .map(|(x, r)| sym(&(r * x * r.transpose())))
                .collect(),
        }
    }

    /// `(WᵀW)⁻¹ m`
    pub fn apply_wtw_inv(&self, m: &ConeVec) -> ConeVec {
        ConeVec {
            lp: m.lp.zip_map(&self.w, |v, w| v / (w * w)),
            psd: m
                .psd
                .iter()
                .zip(&self.rinv)
                .map(|(x, ri)| {
                    let t = ri * x * ri.transpose();
                    sym(&(ri.transpose() * t * ri))
                })
                .collect(),
        }
    }

    /// `WᵀW z`
    pub fn apply_wtw(&self, z: &ConeVec) -> ConeVec {
        self.apply_wt(&self.apply_w(z))
    }

    /// Solves `λ ∘ X = M`.
    pub fn lambda_solve(&self, m: &ConeVec) -> ConeVec {
        ConeVec {
            lp: m.lp.zip_map(&self.lambda_lp, |v, l| v / l),
            psd: m
                .psd
                .iter()
                .zip(&self.lambda_psd)
                .map(|(x, lam)| {
                    let n = lam.len();
                    DMatrix::from_fn(n, n, |i, j| 2.0 * x[(i, j)] / (lam[i] + lam[j]))
                })
                .collect(),
        }
    }

    /// Largest `α ≥ 0` with `λ + α d` in the cone (`+∞` if unbounded).
    pub fn max_step(&self, d: &ConeVec) -> f64 {
        let mut alpha = f64::INFINITY;
        for (l, di) in self.lambda_lp.iter().zip(d.lp.iter()) {
            if *di < 0.0 {
                alpha = alpha.min(-l / di);
            }
        }
        for (lam, dm) in self.lambda_psd.iter().zip(&d.psd) {
            let n = lam.len();
            if n == 0 {
                continue;
            }
            let m = DMatrix::from_fn(n, n, |i, j| {
                0.5 * (dm[(i, j)] + dm[(j, i)]) / (lam[i] * lam[j]).sqrt()
            });
            let e = SymmetricEigen::new(m)
                .eigenvalues
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            if e < 0.0 {
                alpha = alpha.min(-1.0 / e);
            }
        }
        alpha
    }

    /// Moves to the scaling point of `(s̃, z̃) = (λ + α ds, λ + α dz)` in the
    /// current scaled coordinates. Returns `false` if the new point is not
    /// strictly interior.
    pub fn update(&mut self, ds: &ConeVec, dz: &ConeVec, alpha: f64) -> bool {
        let mut lp_s = self.lambda_lp.clone();
        lp_s.axpy(alpha, &ds.lp, 1.0);
        let mut lp_z = self.lambda_lp.clone();
        lp_z.axpy(alpha, &dz.lp, 1.0);
        if lp_s.iter().chain(lp_z.iter()).any(|&v| !(v > 0.0)) {
            return false;
        }
        let mut new_r = Vec::with_capacity(self.r.len());
        let mut new_rinv = Vec::with_capacity(self.r.len());
        let mut new_lam = Vec::with_capacity(self.r.len());
        for k in 0..self.r.len() {
            let lam = &self.lambda_psd[k];
            let n = lam.len();
            if n == 0 {
                new_r.push(DMatrix::zeros(0, 0));
                new_rinv.push(DMatrix::zeros(0, 0));
                new_lam.push(DVector::zeros(0));
                continue;
            }
            let mut st = DMatrix::from_diagonal(lam);
            st += &ds.psd[k] * alpha;
            let mut zt = DMatrix::from_diagonal(lam);
            zt += &dz.psd[k] * alpha;
            let Some(l1) = Cholesky::new(sym(&st)).map(|c| c.l()) else {
                return false;
            };
            let Some(l2) = Cholesky::new(sym(&zt)).map(|c| c.l()) else {
                return false;
            };
            let Some((rr, ri, l)) = nt_factor(&l1, &l2, Some((&self.r[k], &self.rinv[k]))) else {
                return false;
            };
            new_r.push(rr);
            new_rinv.push(ri);
            new_lam.push(l);
        }
        // orthant: s = w∘s̃, z = z̃/w
        let s = lp_s.component_mul(&self.w);
        let z = lp_z.zip_map(&self.w, |a, b| a / b);
        self.w = s.zip_map(&z, |a, b| (a / b).sqrt());
        self.lambda_lp = s.zip_map(&z, |a, b| (a * b).sqrt());
        self.r = new_r;
        self.rinv = new_rinv;
        self.lambda_psd = new_lam;
        self.refresh_products();
        true
    }

    /// Unscaled `(s, z) = (Wᵀλ, W⁻¹λ)`.
    pub fn unscaled_pair(&self) -> (ConeVec, ConeVec) {
        let lam = self.lambda();
        let s = self.apply_wt(&lam);
        let z = ConeVec {
            lp: lam.lp.zip_map(&self.w, |l, w| l / w),
            psd: lam
                .psd
                .iter()
                .zip(&self.rinv)
                .map(|(l, ri)| sym(&(ri.transpose() * l * ri)))
                .collect(),
        };
        (s, z)
    }
}

/// Given Cholesky factors `L1 L1ᵀ = S`, `L2 L2ᵀ = Z` (in the coordinates of
/// an optional previous scaling `(R, R⁻¹)`), returns the new `(R, R⁻¹, λ)`.
fn nt_factor(
    l1: &DMatrix<f64>,
    l2: &DMatrix<f64>,
    prev: Option<(&DMatrix<f64>, &DMatrix<f64>)>,
) -> Option<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)> {
    let dec = svd(&(l2.transpose() * l1));
    let u = dec.u;
    let vt = dec.v.transpose();
    let sv = dec.singular_values;
    if sv.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return None;
    }
    let n = sv.len();
    let inv_sqrt = DVector::from_fn(n, |i, _| 1.0 / sv[i].sqrt());
    // R = L1 V Σ^{-1/2},  R⁻¹ = Σ^{-1/2} Uᵀ L2ᵀ
    let mut r = l1 * vt.transpose();
    for j in 0..n {
        r.column_mut(j).scale_mut(inv_sqrt[j]);
    }
    let mut rinv = u.transpose() * l2.transpose();
    for i in 0..n {
        rinv.row_mut(i).scale_mut(inv_sqrt[i]);
    }
    match prev {
        Some((r0, r0inv)) => Some((r0 * r, rinv * r0inv, sv)),
        None => Some((r, rinv, sv)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_psd(n: usize) -> ConeProgram {
        ConeProgram {
            n: 0,
            c: DVector::zeros(0),
            a: DMatrix::zeros(0, 0),
            b: DVector::zeros(0),
            lp_rows: vec![vec![], vec![]],
            lp_h: DVector::zeros(2),
            psd: vec![PsdCone {
                order: n,
                cols: vec![],
                h: DMatrix::zeros(n, n),
            }],
        }
    }

    fn pair() -> (ConeVec, ConeVec) {
        let s = ConeVec {
            lp: DVector::from_vec(vec![2.0, 0.5]),
            psd: vec![DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0])],
        };
        let z = ConeVec {
            lp: DVector::from_vec(vec![1.0, 3.0]),
            psd: vec![DMatrix::from_row_slice(3, 3, &[1.0, -0.2, 0.1, -0.2, 2.0, 0.0, 0.1, 0.0, 5.0])],
        };
        (s, z)
    }

    #[test]
    fn nt_scaling_maps_both_to_lambda() {
        let (s, z) = pair();
        let w = Scaling::from_pair(&s, &z).unwrap();
        let lam = w.lambda();
        let wz = w.apply_w(&z);
        // W⁻ᵀ s = λ  ⇔  s = Wᵀ λ
        let s_back = w.apply_wt(&lam);
        assert!((wz.sub(&lam)).norm() < 1e-10);
        assert!((s_back.sub(&s)).norm() < 1e-10);
        let (s2, z2) = w.unscaled_pair();
        assert!(s2.sub(&s).norm() < 1e-10);
        assert!(z2.sub(&z).norm() < 1e-10);
        let _ = one_psd(3);
    }

    #[test]
    fn update_matches_fresh_scaling() {
        let (s, z) = pair();
        let mut w = Scaling::from_pair(&s, &z).unwrap();
        let ds = ConeVec {
            lp: DVector::from_vec(vec![0.1, -0.2]),
            psd: vec![DMatrix::from_row_slice(3, 3, &[0.1, 0.05, 0.0, 0.05, -0.1, 0.0, 0.0, 0.0, 0.2])],
        };
        let dz = ConeVec {
            lp: DVector::from_vec(vec![-0.1, 0.3]),
            psd: vec![DMatrix::from_row_slice(3, 3, &[0.0, 0.1, 0.0, 0.1, 0.1, -0.05, 0.0, -0.05, 0.0])],
        };
        // unscaled targets
        let s_new = s.add(&w.apply_wt(&ds).scaled(0.5));
        let z_new = z.add(&w.apply_wtw_inv(&w.apply_wt(&dz)).scaled(0.5));
        assert!(w.update(&ds, &dz, 0.5));
        let (s2, z2) = w.unscaled_pair();
        assert!(s2.sub(&s_new).norm() < 1e-9);
        assert!(z2.sub(&z_new).norm() < 1e-9);
    }

    #[test]
    fn lambda_solve_inverts_jordan() {
        let (s, z) = pair();
        let w = Scaling::from_pair(&s, &z).unwrap();
        let m = ConeVec {
            lp: DVector::from_vec(vec![1.0, -1.0]),
            psd: vec![DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, 0.0, 1.0, 0.0, 1.0, 3.0])],
        };
        let x = w.lambda_solve(&m);
        let back = jordan(&w.lambda(), &x);
        assert!(back.sub(&m).norm() < 1e-10);
    }

    #[test]
    fn max_step_hits_boundary() {
        let (s, z) = pair();
        let w = Scaling::from_pair(&s, &z).unwrap();
        let lam = w.lambda();
        let d = lam.scaled(-1.0);
        let a = w.max_step(&d);
        assert!((a - 1.0).abs() < 1e-9);
    }
}
