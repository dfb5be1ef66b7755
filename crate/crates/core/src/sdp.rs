//! Dense primal-dual interior-point method for real semidefinite programs with
//! one symmetric matrix block and one nonnegative orthant block:
//!
//! ```text
//! min  C • X + cᵀ x
//! s.t. A_i • X + a_iᵀ x = b_i,   i = 1..m
//!      X ⪰ 0, x ≥ 0
//! ```
//!
//! The dual is `max bᵀy` with `Z = C − Σ y_i A_i ⪰ 0`, `z = c − Σ y_i a_i ≥ 0`.
//! Search directions use the HKM scaling with a Mehrotra predictor-corrector;
//! the Schur complement is formed densely and factored by Cholesky.

use nalgebra::{Cholesky, DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub c: Mat,
    pub c_lin: Vector,
    pub a: Vec<Mat>,
    /// Row `i` holds `a_iᵀ`.
    pub a_lin: Mat,
    pub b: Vector,
    /// Optional low-rank forms of the `A_i`; may be empty.
    pub a_factors: Vec<Option<LowRank>>,
}

/// `A = U diag(s) Uᵀ`.
#[derive(Debug, Clone)]
pub struct LowRank {
    pub u: Mat,
    pub s: Vector,
}

impl LowRank {
    pub fn to_dense(&self) -> Mat {
        let mut us = self.u.clone();
        for (j, mut col) in us.column_iter_mut().enumerate() {
            col *= self.s[j];
        }
        us * self.u.transpose()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SdpSettings {
    pub max_iterations: usize,
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub step_fraction: f64,
}

impl Default for SdpSettings {
    fn default() -> Self {
        Self { max_iterations: 200, gap_tol: 1e-7, feas_tol: 1e-7, step_fraction: 0.98 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum SdpStatus {
    Optimal,
    /// Stopped early with tolerances met only to within a factor of 10³.
    Inaccurate,
    MaxIterations,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x: Mat,
    pub x_lin: Vector,
    pub y: Vector,
    pub z: Mat,
    pub z_lin: Vector,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub rel_gap: f64,
    pub primal_infeas: f64,
    pub dual_infeas: f64,
    pub iterations: usize,
    pub status: SdpStatus,
}

struct Residuals {
    rp: Vector,
    rd: Mat,
    rd_lin: Vector,
    pobj: f64,
    dobj: f64,
    gap: f64,
    pinf: f64,
    dinf: f64,
}

/// `dst += alpha · src`.
pub fn add_scaled(dst: &mut Mat, alpha: f64, src: &Mat) {
    for (d, s) in dst.as_mut_slice().iter_mut().zip(src.as_slice()) {
        *d += alpha * s;
    }
}

fn sym(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Estimate of `λ_min(L⁻¹ D L⁻ᵀ)` by Lanczos with full reorthogonalization,
/// given `linv = L⁻¹`.
fn lanczos_min(linv: &Mat, d: &Mat, steps: usize) -> f64 {
    let n = d.nrows();
    let k = steps.min(n);
    let mut basis: Vec<Vector> = Vec::with_capacity(k);
    let mut alpha = Vec::with_capacity(k);
    let mut beta: Vec<f64> = Vec::with_capacity(k);
    let mut v = Vector::from_fn(n, |i, _| 1.0 + ((i * 7919) % 101) as f64 / 101.0);
    v /= v.norm();
    let mut t1 = Vector::zeros(n);
    let mut t2 = Vector::zeros(n);
    for _ in 0..k {
        t1.gemv_tr(1.0, linv, &v, 0.0);
        t2.gemv(1.0, d, &t1, 0.0);
        let mut w = Vector::zeros(n);
        w.gemv(1.0, linv, &t2, 0.0);
        alpha.push(w.dot(&v));
        basis.push(v);
        for _ in 0..2 {
            for q in &basis {
                let c = w.dot(q);
                w.axpy(-c, q, 1.0);
            }
        }
        let b = w.norm();
        let scale = alpha.iter().chain(beta.iter()).fold(0.0f64, |m, x| m.max(x.abs()));
        if basis.len() == k || b <= 1e-13 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        beta.push(b);
        v = w / b;
    }
    let r = alpha.len();
    let t = Mat::from_fn(r, r, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    crate::linalg::sym_eigenvalues(&t).min()
}

/// Estimated largest `α` with `X + α ΔX ⪰ 0`, where `linv = L⁻¹` for the
/// Cholesky factor `L` of `X`.
fn max_step_psd(linv: &Mat, dx: &Mat) -> f64 {
    let lmin = lanczos_min(linv, dx, 30);
    if lmin >= 0.0 { f64::INFINITY } else { -1.0 / lmin }
}

/// Largest `α ≤ alpha` on a geometric backtrack with `X + α ΔX` positive
/// definite, together with the factorization of the new point.
fn verified_step(x: &Mat, dx: &Mat, mut alpha: f64) -> Option<(f64, Cholesky<f64, nalgebra::Dyn>)> {
    for _ in 0..60 {
        let cand = sym(&(x + dx * alpha));
        if let Some(ch) = Cholesky::new(cand) {
            return Some((alpha, ch));
        }
        alpha *= 0.8;
    }
    None
}

fn max_step_lin(x: &Vector, dx: &Vector) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

impl SdpProblem {
    pub fn num_constraints(&self) -> usize {
        self.b.len()
    }

    pub fn block_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn num_linear(&self) -> usize {
        self.c_lin.len()
    }

    fn apply(&self, x: &Mat, x_lin: &Vector) -> Vector {
        let mut out = &self.a_lin * x_lin;
        for (i, a) in self.a.iter().enumerate() {
            out[i] += a.dot(x);
        }
        out
    }

    fn adjoint(&self, y: &Vector) -> (Mat, Vector) {
        let n = self.block_dim();
        let mut s = Mat::zeros(n, n);
        for (a, &yi) in self.a.iter().zip(y.iter()) {
            if yi != 0.0 {
                add_scaled(&mut s, yi, a);
            }
        }
        (s, self.a_lin.tr_mul(y))
    }

    fn residuals(&self, x: &Mat, xl: &Vector, y: &Vector, z: &Mat, zl: &Vector) -> Residuals {
        let rp = &self.b - self.apply(x, xl);
        let (aty, aty_lin) = self.adjoint(y);
        let rd = &self.c - aty - z;
        let rd_lin = &self.c_lin - aty_lin - zl;
        let pobj = self.c.dot(x) + self.c_lin.dot(xl);
        let dobj = self.b.dot(y);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let pinf = rp.norm() / (1.0 + self.b.norm());
        let dinf = (rd.norm_squared() + rd_lin.norm_squared()).sqrt()
            / (1.0 + (self.c.norm_squared() + self.c_lin.norm_squared()).sqrt());
        Residuals { rp, rd, rd_lin, pobj, dobj, gap, pinf, dinf }
    }

    /// Solves the program from the standard infeasible starting point.
    pub fn solve(&self, settings: &SdpSettings) -> SdpSolution {
        let n = self.block_dim();
        let p = self.num_linear();
        let m = self.num_constraints();
        let nf = n as f64;
        let mut xi: f64 = 10f64.max(nf.sqrt());
        let mut eta: f64 = 10f64.max(nf.sqrt()).max(self.c.norm()).max(self.c_lin.amax());
        for i in 0..m {
            let an = (self.a[i].norm_squared() + self.a_lin.row(i).norm_squared()).sqrt();
            xi = xi.max(nf * (1.0 + self.b[i].abs()) / (1.0 + an));
            eta = eta.max(an);
        }
        let x = Mat::identity(n, n) * xi;
        let xl = Vector::from_element(p, xi);
        let z = Mat::identity(n, n) * eta;
        let zl = Vector::from_element(p, eta);
        self.solve_from(x, xl, Vector::zeros(m), z, zl, settings)
    }

    pub fn solve_from(
        &self,
        mut x: Mat,
        mut xl: Vector,
        mut y: Vector,
        mut z: Mat,
        mut zl: Vector,
        settings: &SdpSettings,
    ) -> SdpSolution {
        let n = self.block_dim();
        let p = self.num_linear();
        let m = self.num_constraints();
        let dof = (n + p) as f64;
        let mut status = SdpStatus::MaxIterations;
        let mut iterations = 0;
        let mut res = self.residuals(&x, &xl, &y, &z, &zl);
        let mut stalls = 0;

        let mut xchol = Cholesky::new(x.clone());
        let mut zchol = Cholesky::new(z.clone());
        for it in 0..settings.max_iterations {
            iterations = it;
            if res.gap <= settings.gap_tol && res.pinf <= settings.feas_tol && res.dinf <= settings.feas_tol {
                status = SdpStatus::Optimal;
                break;
            }
            if x.amax() > 1e14 || z.amax() > 1e14 {
                status = SdpStatus::NumericalFailure;
                break;
            }
            let mu = (x.dot(&z) + xl.dot(&zl)) / dof;

            let (Some(xc), Some(zc)) = (xchol.as_ref(), zchol.as_ref()) else {
                status = SdpStatus::NumericalFailure;
                break;
            };
            let n_id = Mat::identity(n, n);
            let (Some(xl_fac), Some(zl_fac)) =
                (xc.l_dirty().solve_lower_triangular(&n_id), zc.l_dirty().solve_lower_triangular(&n_id))
            else {
                status = SdpStatus::NumericalFailure;
                break;
            };
            let zinv = zl_fac.tr_mul(&zl_fac);
            let d = xl.component_div(&zl);

            // Schur complement M_ij = A_i • (X A_j Z⁻¹) + a_iᵀ D a_j
            let xa: Vec<Mat> = (0..m)
                .map(|j| match self.a_factors.get(j).and_then(|f| f.as_ref()) {
                    Some(f) => {
                        let mut xu = &x * &f.u;
                        for (c, mut col) in xu.column_iter_mut().enumerate() {
                            col *= f.s[c];
                        }
                        xu * (&zinv * &f.u).transpose()
                    }
                    None => &x * &self.a[j] * &zinv,
                })
                .collect();
            let mut schur = Mat::zeros(m, m);
            for i in 0..m {
                for j in i..m {
                    let v = self.a[i].dot(&xa[j]);
                    schur[(i, j)] = v;
                    schur[(j, i)] = v;
                }
            }
            let ad = Mat::from_fn(m, p, |i, j| self.a_lin[(i, j)] * d[j]);
            schur += &ad * self.a_lin.transpose();
            let Some(schur_chol) = Cholesky::new(schur.clone()).or_else(|| {
                let reg = 1e-14 * schur.diagonal().amax().max(1e-300);
                Cholesky::new(schur + Mat::identity(m, m) * reg)
            }) else {
                status = SdpStatus::NumericalFailure;
                break;
            };

            let xrz = &x * &res.rd * &zinv;
            let d_rd = d.component_mul(&res.rd_lin);
            let direction = |rc: &Mat, rc_lin: &Vector| {
                let mut rhs = res.rp.clone();
                for i in 0..m {
                    rhs[i] += self.a[i].dot(&xrz) - self.a[i].dot(rc);
                }
                rhs -= &self.a_lin * (rc_lin - &d_rd);
                let dy = schur_chol.solve(&rhs);
                let (atdy, atdy_lin) = self.adjoint(&dy);
                let dz = &res.rd - atdy;
                let dz_lin = &res.rd_lin - atdy_lin;
                let dx = sym(&(rc - &x * &dz * &zinv));
                let dx_lin = rc_lin - d.component_mul(&dz_lin);
                (dx, dx_lin, dy, dz, dz_lin)
            };

            // predictor
            let (dx_a, dxl_a, _, dz_a, dzl_a) = direction(&(-&x), &(-&xl));
            let ap = max_step_psd(&xl_fac, &dx_a).min(max_step_lin(&xl, &dxl_a)).min(1.0);
            let ad_ = max_step_psd(&zl_fac, &dz_a).min(max_step_lin(&zl, &dzl_a)).min(1.0);
            let mu_aff = ((&x + &dx_a * ap).dot(&(&z + &dz_a * ad_))
                + (&xl + &dxl_a * ap).dot(&(&zl + &dzl_a * ad_)))
                / dof;
            let sigma = (mu_aff / mu).max(0.0).powi(3).min(1.0);

            // corrector
            let rc = &zinv * (sigma * mu) - &x - &dx_a * &dz_a * &zinv;
            let rc_lin = Vector::from_fn(p, |j, _| (sigma * mu - dxl_a[j] * dzl_a[j]) / zl[j] - xl[j]);
            let (dx, dxl, dy, dz, dzl) = direction(&rc, &rc_lin);
            if dy.iter().any(|v| !v.is_finite()) || dx.iter().any(|v| !v.is_finite()) {
                status = SdpStatus::NumericalFailure;
                break;
            }
            let ap = (settings.step_fraction * max_step_psd(&xl_fac, &dx).min(max_step_lin(&xl, &dxl))).min(1.0);
            let ad = (settings.step_fraction * max_step_psd(&zl_fac, &dz).min(max_step_lin(&zl, &dzl))).min(1.0);
            let (Some((ap, xc_new)), Some((ad, zc_new))) = (verified_step(&x, &dx, ap), verified_step(&z, &dz, ad)) else {
                status = SdpStatus::NumericalFailure;
                break;
            };

            x = sym(&(&x + &dx * ap));
            xl += &dxl * ap;
            y += &dy * ad;
            z = sym(&(&z + &dz * ad));
            zl += &dzl * ad;
            xchol = Some(xc_new);
            zchol = Some(zc_new);
            res = self.residuals(&x, &xl, &y, &z, &zl);
            iterations = it + 1;

            if ap.max(ad) < 1e-8 {
                stalls += 1;
                if stalls >= 3 {
                    status = SdpStatus::NumericalFailure;
                    break;
                }
            } else {
                stalls = 0;
            }
        }
        if status == SdpStatus::MaxIterations
            && res.gap <= settings.gap_tol && res.pinf <= settings.feas_tol && res.dinf <= settings.feas_tol
        {
            status = SdpStatus::Optimal;
        }
        if matches!(status, SdpStatus::MaxIterations | SdpStatus::NumericalFailure)
            && res.gap <= 1e3 * settings.gap_tol
            && res.pinf <= 1e3 * settings.feas_tol
            && res.dinf <= 1e3 * settings.feas_tol
        {
            status = SdpStatus::Inaccurate;
        }
        SdpSolution {
            x,
            x_lin: xl,
            y,
            z,
            z_lin: zl,
            primal_obj: res.pobj,
            dual_obj: res.dobj,
            rel_gap: res.gap,
            primal_infeas: res.pinf,
            dual_infeas: res.dinf,
            iterations,
            status,
        }
    }
}
