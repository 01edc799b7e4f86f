//! Homogeneous self-dual embedding, Mehrotra predictor-corrector.
//!
//! Residuals of the embedding:
//!
//! ```text
//! rx = Aᵀy + Gᵀz + cτ
//! ry = Ax − bτ
//! rz = Gx + s − hτ
//! rt = κ + cᵀx + bᵀy + hᵀz
//! ```

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::cone::{jordan, ConeProgram, ConeVec, Scaling};
use super::SolverSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum HsdStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    Indeterminate,
}

#[derive(Debug, Clone)]
pub(crate) struct HsdResult {
    pub status: HsdStatus,
    /// Point divided by τ (optimal / indeterminate), or the normalized ray.
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub z: ConeVec,
    pub iterations: usize,
}

struct Kkt<'a> {
    prog: &'a ConeProgram,
    w: &'a Scaling,
    k: Cholesky<f64, Dyn>,
    kinv_at: DMatrix<f64>,
    schur: Option<Cholesky<f64, Dyn>>,
}

fn add_psd_hessian(h: &mut DMatrix<f64>, prog: &ConeProgram, w: &Scaling) {
    for (cone, omega) in prog.psd.iter().zip(&w.omega) {
        let n = cone.order;
        if n == 0 || cone.cols.is_empty() {
            continue;
        }
        for (kk, (kvar, kent)) in cone.cols.iter().enumerate() {
            // T = Ω G_k Ω
            let t = if kent.len() > n {
                let mut g = DMatrix::zeros(n, n);
                for &(a, b, v) in kent {
                    g[(a, b)] += v;
                    if a != b {
                        g[(b, a)] += v;
                    }
                }
                omega * g * omega
            } else {
                let mut t = DMatrix::zeros(n, n);
                for &(a, b, v) in kent {
                    let oa = omega.column(a);
                    let ob = omega.column(b);
                    t.ger(v, &oa, &ob, 1.0);
                    if a != b {
                        t.ger(v, &ob, &oa, 1.0);
                    }
                }
                t
            };
            for (jvar, jent) in cone.cols.iter().take(kk + 1) {
                let mut acc = 0.0;
                for &(a, b, v) in jent {
                    acc += if a == b {
                        v * t[(a, a)]
                    } else {
                        v * (t[(a, b)] + t[(b, a)])
                    };
                }
                if jvar == kvar {
                    h[(*jvar, *kvar)] += acc;
                } else {
                    h[(*jvar, *kvar)] += acc;
                    h[(*kvar, *jvar)] += acc;
                }
            }
        }
    }
}

fn chol_with_reg(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let n = m.nrows();
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(1.0, f64::max);
    let mut reg = 0.0;
    for _ in 0..8 {
        let mut mm = m.clone();
        for i in 0..n {
            mm[(i, i)] += reg;
        }
        if let Some(c) = Cholesky::new(mm) {
            return Some(c);
        }
        reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
    }
    None
}

impl<'a> Kkt<'a> {
    fn factor(prog: &'a ConeProgram, w: &'a Scaling) -> Option<Self> {
        let n = prog.n;
        let mut h = DMatrix::zeros(n, n);
        for (row, wi) in prog.lp_rows.iter().zip(w.w.iter()) {
            let d = 1.0 / (wi * wi);
            for &(a, va) in row {
                for &(b, vb) in row {
                    h[(a, b)] += d * va * vb;
                }
            }
        }
        add_psd_hessian(&mut h, prog, w);
        if prog.a.nrows() > 0 {
            h += prog.a.transpose() * &prog.a;
        }
        let scale = (0..n).map(|i| h[(i, i)].abs()).fold(1.0, f64::max);
        for i in 0..n {
            h[(i, i)] += 1e-13 * scale;
        }
        let k = chol_with_reg(&h)?;
        let (kinv_at, schur) = if prog.a.nrows() > 0 {
            let kinv_at = k.solve(&prog.a.transpose());
            let m = &prog.a * &kinv_at;
            let m = (&m + m.transpose()) * 0.5;
            (kinv_at, Some(chol_with_reg(&m)?))
        } else {
            (DMatrix::zeros(n, 0), None)
        };
        Some(Self {
            prog,
            w,
            k,
            kinv_at,
            schur,
        })
    }

    fn solve_once(
        &self,
        bx: &DVector<f64>,
        by: &DVector<f64>,
        bz: &ConeVec,
    ) -> (DVector<f64>, DVector<f64>, ConeVec) {
        let prog = self.prog;
        let r1 = bx + prog.gt_apply(&self.w.apply_wtw_inv(bz));
        let (x, y) = match &self.schur {
            Some(sch) => {
                // ŷ = (A K⁻¹ Aᵀ)⁻¹ (A K⁻¹ r1 − by),  y = ŷ + by
                let rhs = self.kinv_at.transpose() * &r1 - by;
                let yhat = sch.solve(&rhs);
                let x = self.k.solve(&(&r1 - prog.a.transpose() * &yhat));
                (x, yhat + by)
            }
            None => (self.k.solve(&r1), DVector::zeros(0)),
        };
        let z = self.w.apply_wtw_inv(&prog.g_apply(&x).sub(bz));
        (x, y, z)
    }

    /// Solves
    /// ```text
    /// Aᵀy + Gᵀz = bx,  Ax = by,  Gx − WᵀWz = bz
    /// ```
    /// with up to two rounds of iterative refinement.
    fn solve(
        &self,
        bx: &DVector<f64>,
        by: &DVector<f64>,
        bz: &ConeVec,
    ) -> (DVector<f64>, DVector<f64>, ConeVec) {
        let prog = self.prog;
        let (mut x, mut y, mut z) = self.solve_once(bx, by, bz);
        let scale = 1.0 + bx.norm() + by.norm() + bz.norm();
        for _ in 0..2 {
            let ex = bx - prog.a.transpose() * &y - prog.gt_apply(&z);
            let ey = by - &prog.a * &x;
            let ez = bz.sub(&prog.g_apply(&x)).add(&self.w.apply_wtw(&z));
            if ex.norm() + ey.norm() + ez.norm() <= 1e-14 * scale {
                break;
            }
            let (dx, dy, dz) = self.solve_once(&ex, &ey, &ez);
            x += dx;
            y += dy;
            z.axpy(1.0, &dz);
        }
        (x, y, z)
    }
}

fn norm_or_one(v: f64) -> f64 {
    v.max(1.0)
}

pub(crate) fn solve_hsd(prog: &ConeProgram, settings: &SolverSettings) -> HsdResult {
    let n = prog.n;
    let p = prog.a.nrows();
    let h = prog.h();
    let deg = prog.degree() as f64;

    let resx0 = norm_or_one(prog.c.norm());
    let resy0 = norm_or_one(prog.b.norm());
    let resz0 = norm_or_one(h.norm());

    let fail = |iters: usize| HsdResult {
        status: HsdStatus::Indeterminate,
        x: DVector::zeros(n),
        y: DVector::zeros(p),
        z: ConeVec::zeros(prog),
        iterations: iters,
    };

    // Starting point from two least-squares KKT solves with W = I.
    let ident = Scaling::identity(prog);
    let Some(kkt0) = Kkt::factor(prog, &ident) else {
        return fail(0);
    };
    let (mut x, _, zp) = kkt0.solve(&DVector::zeros(n), &prog.b, &h);
    let mut s = zp.scaled(-1.0);
    let (_, mut y, mut z) = kkt0.solve(&(-&prog.c), &DVector::zeros(p), &ConeVec::zeros(prog));
    for v in [&mut s, &mut z] {
        let t = -v.min_eig();
        if t >= -1e-8 * v.norm().max(1.0) {
            v.add_identity(1.0 + t);
        }
    }
    let mut tau = 1.0;
    let mut kappa = 1.0;
    let Some(mut w) = Scaling::from_pair(&s, &z) else {
        return fail(0);
    };

    let mut best: Option<(f64, DVector<f64>, DVector<f64>, ConeVec)> = None;

    let mut iters_done = 0;
    for iter in 0..=settings.max_iters {
        iters_done = iter;
        let (s_cur, z_cur) = w.unscaled_pair();
        s = s_cur;
        z = z_cur;

        let cx = prog.c.dot(&x);
        let by = prog.b.dot(&y);
        let hz = h.dot(&z);
        let gx = prog.g_apply(&x);
        let aty = prog.a.transpose() * &y;
        let gtz = prog.gt_apply(&z);

        let rx = &aty + &gtz + &prog.c * tau;
        let ry = &prog.a * &x - &prog.b * tau;
        let rz = gx.add(&s).sub(&h.scaled(tau));
        let rt = kappa + cx + by + hz;

        let sz = s.dot(&z);
        let mu = (sz + tau * kappa) / (deg + 1.0);

        let pcost = cx / tau;
        let dcost = -(by + hz) / tau;
        let pres = (ry.norm() / resy0).max(rz.norm() / resz0) / tau;
        let dres = rx.norm() / resx0 / tau;
        let gap = sz / (tau * tau);
        let relgap = (pcost - dcost).abs().max(gap) / (1.0 + pcost.abs() + dcost.abs());

        log::trace!(
            "hsd {iter:3}: p={pcost:.6e} d={dcost:.6e} pres={pres:.2e} dres={dres:.2e} gap={relgap:.2e} τ={tau:.2e} κ={kappa:.2e}"
        );

        if pres <= settings.tol && dres <= settings.tol && relgap <= settings.tol {
            return HsdResult {
                status: HsdStatus::Optimal,
                x: &x / tau,
                y: &y / tau,
                z: z.scaled(1.0 / tau),
                iterations: iter,
            };
        }
        if hz + by < 0.0 {
            let pinfres = (&aty + &gtz).norm() / resx0 / (-(hz + by));
            if pinfres <= settings.tol {
                let f = -1.0 / (hz + by);
                return HsdResult {
                    status: HsdStatus::PrimalInfeasible,
                    x: DVector::zeros(n),
                    y: &y * f,
                    z: z.scaled(f),
                    iterations: iter,
                };
            }
        }
        if cx < 0.0 {
            let dinfres =
                ((&prog.a * &x).norm() / resy0).max(gx.add(&s).norm() / resz0) / (-cx);
            if dinfres <= settings.tol {
                let f = -1.0 / cx;
                return HsdResult {
                    status: HsdStatus::DualInfeasible,
                    x: &x * f,
                    y: DVector::zeros(p),
                    z: ConeVec::zeros(prog),
                    iterations: iter,
                };
            }
        }
        let merit = pres.max(dres).max(relgap);
        if best.as_ref().map_or(true, |b| merit < b.0) {
            best = Some((
                merit,
                &x / tau,
                &y / tau,
                z.scaled(1.0 / tau),
            ));
        }
        if iter == settings.max_iters {
            break;
        }

        let Some(kkt) = Kkt::factor(prog, &w) else {
            break;
        };
        let lam = w.lambda();
        let lam_sq = jordan(&lam, &lam);

        // d1: direction for unit dτ
        let (x1, y1, z1) = kkt.solve(&(-&prog.c), &prog.b, &h);
        let denom1 = prog.c.dot(&x1) + prog.b.dot(&y1) + h.dot(&z1) - kappa / tau;

        let direction = |eta: f64, rc: &ConeVec, rk: f64| {
            let lrc = w.lambda_solve(rc);
            let bz = rz.scaled(-eta).sub(&w.apply_wt(&lrc));
            let (x2, y2, z2) = kkt.solve(&(&rx * -eta), &(&ry * -eta), &bz);
            let num = -eta * rt
                - rk / tau
                - prog.c.dot(&x2)
                - prog.b.dot(&y2)
                - h.dot(&z2);
            let dtau = num / denom1;
            let dx = x2 + &x1 * dtau;
            let dy = y2 + &y1 * dtau;
            let mut dz = z2;
            dz.axpy(dtau, &z1);
            let dkappa = (rk - kappa * dtau) / tau;
            let dz_s = w.apply_w(&dz);
            let ds_s = lrc.sub(&dz_s);
            (dx, dy, dz_s, ds_s, dtau, dkappa)
        };

        let step_len = |ds_s: &ConeVec, dz_s: &ConeVec, dtau: f64, dkappa: f64| {
            let mut a = w.max_step(ds_s).min(w.max_step(dz_s));
            if dtau < 0.0 {
                a = a.min(-tau / dtau);
            }
            if dkappa < 0.0 {
                a = a.min(-kappa / dkappa);
            }
            a
        };

        // predictor
        let rc_aff = lam_sq.scaled(-1.0);
        let (_, _, dz_a, ds_a, dtau_a, dkappa_a) = direction(1.0, &rc_aff, -tau * kappa);
        let alpha_aff = step_len(&ds_a, &dz_a, dtau_a, dkappa_a).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3);

        // corrector
        let mut rc = rc_aff.sub(&jordan(&ds_a, &dz_a));
        rc.add_identity(sigma * mu);
        let rk = -tau * kappa - dtau_a * dkappa_a + sigma * mu;
        let (dx, dy, dz_s, ds_s, dtau, dkappa) = direction(1.0 - sigma, &rc, rk);
        let amax = step_len(&ds_s, &dz_s, dtau, dkappa);
        let alpha = (settings.step_fraction * amax).min(1.0);
        if !(alpha > 1e-12) || !alpha.is_finite() {
            break;
        }

        x.axpy(alpha, &dx, 1.0);
        y.axpy(alpha, &dy, 1.0);
        tau += alpha * dtau;
        kappa += alpha * dkappa;
        if !w.update(&ds_s, &dz_s, alpha) {
            break;
        }
        // keep the embedding well scaled
        let scale = tau.max(kappa).max(x.amax()).max(y.amax());
        if scale > 1e8 || scale < 1e-8 {
            let f = 1.0 / scale.max(f64::MIN_POSITIVE);
            x *= f;
            y *= f;
            tau *= f;
            kappa *= f;
            let (s1, z1) = w.unscaled_pair();
            let Some(w2) = Scaling::from_pair(&s1.scaled(f), &z1.scaled(f)) else {
                break;
            };
            w = w2;
        }
        if !(tau > 0.0) || !(kappa > 0.0) {
            break;
        }
    }

    match best {
        Some((_, bx, by, bz)) => HsdResult {
            status: HsdStatus::Indeterminate,
            x: bx,
            y: by,
            z: bz,
            iterations: iters_done,
        },
        None => fail(iters_done),
    }
}
