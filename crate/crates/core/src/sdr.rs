//! Semidefinite relaxation of the max-min-fair design: power-minimization
//! feasibility checks and the search for the relaxed optimum `W*`.
//!
//! Each test level `γ` is decided by a margin program that is always strictly
//! feasible:
//!
//! ```text
//! max τ  s.t. (A_u − γ C_u) • W − d_u τ ≥ γ,  Q_s • W ≤ b_s,  W ⪰ 0
//! ```
//!
//! so `γ` is achievable iff `τ* ≥ 0`. Every candidate `W` is pushed onto the
//! tightest power constraint and its exact minimum SINR becomes the certified
//! lower end of the bracket; the dual multipliers of the same program give a
//! certified upper end.

use log::{debug, warn};
use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::problem::ProblemData;
use crate::sdp::{add_scaled, LowRank, Mat, SdpProblem, SdpSettings, SdpStatus, Vector};

/// Default relative eigenvalue threshold used to report the rank of `W*`.
pub const DEFAULT_RANK_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FeasibilityStatus {
    Feasible,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct FeasibilityResult {
    pub status: FeasibilityStatus,
    /// Candidate when `Feasible`.
    pub w: Option<CMat>,
    /// `D_0 • W` of the returned candidate (first constraint of the problem).
    pub min_power: f64,
    pub ipm_iters: usize,
}

/// One evaluation of the margin program.
#[derive(Debug, Clone, Serialize)]
pub struct SearchStep {
    pub gamma: f64,
    pub margin: f64,
    pub lower: f64,
    pub upper: f64,
    pub ipm_status: SdpStatus,
    pub ipm_iters: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SdrDiagnostics {
    pub gamma_high: f64,
    pub bracket_width: f64,
    pub ipm_iterations: usize,
    pub steps: Vec<SearchStep>,
}

#[derive(Debug, Clone)]
pub struct SdrSolution {
    pub w_star: CMat,
    pub gamma_star: f64,
    pub rank: usize,
    /// `ln(1 + γ*)` in nats.
    pub sdr_rate: f64,
    pub diagnostics: SdrDiagnostics,
}

/// Stopping rule for the bracket `[lo, hi]` around the relaxed optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub enum GammaTolerance {
    /// `hi − lo ≤ 1e-5 · (1 + γ_high)`.
    Default,
    /// `hi − lo ≤ tol`.
    Absolute(f64),
    /// `hi − lo ≤ tol · (1 + lo)`.
    Relative(f64),
}

impl GammaTolerance {
    fn met(&self, lo: f64, hi: f64, gamma_high: f64) -> bool {
        let width = hi - lo;
        match *self {
            GammaTolerance::Default => width <= 1e-5 * (1.0 + gamma_high),
            GammaTolerance::Absolute(t) => width <= t,
            GammaTolerance::Relative(t) => width <= t * (1.0 + lo),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SdrOptions {
    pub tolerance: GammaTolerance,
    pub ipm: SdpSettings,
    pub rank_tol: f64,
    pub max_steps: usize,
}

impl Default for SdrOptions {
    fn default() -> Self {
        Self { tolerance: GammaTolerance::Default, ipm: SdpSettings::default(), rank_tol: DEFAULT_RANK_TOL, max_steps: 100 }
    }
}

/// Number of eigenvalues above `rel_tol · λ_max(W)`; zero for `W = 0`.
pub fn rank_of(w: &CMat, rel_tol: f64) -> usize {
    let ev = linalg::eigvalsh(w);
    let lmax = ev.last().copied().unwrap_or(0.0);
    if lmax <= 0.0 {
        return 0;
    }
    ev.iter().filter(|&&v| v > rel_tol * lmax).count()
}

/// Certified upper bound `min_u λ_max(A_u) · min_s b_s / λ_min(Q_s)` on the
/// relaxed optimum.
pub fn gamma_high(problem: &ProblemData) -> Result<f64> {
    let trace = problem
        .trace_bound()
        .ok_or_else(|| Error::Unbounded("no positive definite power constraint bounds tr(W)".into()))?;
    Ok(problem
        .signal
        .iter()
        .map(|a| a.factor.norm_squared() * trace)
        .fold(f64::INFINITY, f64::min))
}

fn is_degenerate(problem: &ProblemData) -> bool {
    problem.signal.iter().any(|a| a.factor.iter().all(|z| *z == linalg::ZERO))
}

/// Embedded real data shared by all programs of one search.
struct Embedded {
    a: Vec<Mat>,
    c: Vec<Mat>,
    q: Vec<Mat>,
    a_f: Vec<Mat>,
    c_f: Vec<Mat>,
    q_f: Vec<Option<Mat>>,
    budgets: Vec<f64>,
    /// Scale of the variable: `W = ω · unembed(X̃)`.
    omega: f64,
    trace_bound: f64,
}

impl Embedded {
    fn new(problem: &ProblemData) -> Result<Self> {
        let trace_bound = problem
            .trace_bound()
            .ok_or_else(|| Error::Unbounded("no positive definite power constraint bounds tr(W)".into()))?;
        let omega = problem
            .constraints
            .iter()
            .map(|c| c.budget / c.matrix.dense.trace().re)
            .fold(f64::INFINITY, f64::min);
        Ok(Self {
            a: problem.signal.iter().map(|m| linalg::embed(&m.dense)).collect(),
            c: problem.interference.iter().map(|m| linalg::embed(&m.dense)).collect(),
            q: problem.constraints.iter().map(|c| linalg::embed(&c.matrix.dense)).collect(),
            a_f: problem.signal.iter().map(|m| linalg::embed(&m.factor)).collect(),
            c_f: problem.interference.iter().map(|m| linalg::embed(&m.factor)).collect(),
            q_f: problem
                .constraints
                .iter()
                .map(|c| (4 * c.matrix.factor.ncols() <= problem.dim).then(|| linalg::embed(&c.matrix.factor)))
                .collect(),
            budgets: problem.constraints.iter().map(|c| c.budget).collect(),
            omega,
            trace_bound,
        })
    }

    fn users(&self) -> usize {
        self.a.len()
    }

    fn sinr_row(&self, u: usize, gamma: f64) -> Mat {
        let s = self.omega / (2.0 * gamma);
        &self.a[u] * s - &self.c[u] * (s * gamma)
    }

    fn sinr_factor(&self, u: usize, gamma: f64) -> LowRank {
        let (ka, kc) = (self.a_f[u].ncols(), self.c_f[u].ncols());
        let mut uu = Mat::zeros(self.a_f[u].nrows(), ka + kc);
        uu.columns_mut(0, ka).copy_from(&self.a_f[u]);
        uu.columns_mut(ka, kc).copy_from(&self.c_f[u]);
        let sa = self.omega / (2.0 * gamma);
        let sc = -self.omega / 2.0;
        LowRank { u: uu, s: Vector::from_fn(ka + kc, |i, _| if i < ka { sa } else { sc }) }
    }

    fn power_row(&self, s: usize) -> Mat {
        &self.q[s] * (self.omega / (2.0 * self.budgets[s]))
    }

    fn power_factor(&self, s: usize) -> Option<LowRank> {
        let scale = self.omega / (2.0 * self.budgets[s]);
        self.q_f[s].as_ref().map(|u| LowRank { u: u.clone(), s: Vector::from_element(u.ncols(), scale) })
    }

    fn recover(&self, x: &Mat) -> CMat {
        linalg::hermitize(&linalg::unembed(x)) * Complex64::new(self.omega, 0.0)
    }

    /// Margin program at level `gamma`; LP variables are
    /// `[t', e_1..e_M, u_1..u_S]` with `τ = γ (t' − t_0)`.
    fn margin_program(&self, gamma: f64, d: &[f64]) -> (SdpProblem, f64) {
        let m = self.users();
        let s_count = self.q.len();
        let n = self.a[0].nrows();
        let p = 1 + m + s_count;
        let t0 = 2.0 / d.iter().copied().fold(f64::INFINITY, f64::min);
        let mut a = Vec::with_capacity(m + s_count);
        let mut a_factors = Vec::with_capacity(m + s_count);
        let mut a_lin = Mat::zeros(m + s_count, p);
        let mut b = Vector::zeros(m + s_count);
        for u in 0..m {
            a.push(self.sinr_row(u, gamma));
            a_factors.push(Some(self.sinr_factor(u, gamma)));
            a_lin[(u, 0)] = -d[u];
            a_lin[(u, 1 + u)] = -1.0;
            b[u] = 1.0 - d[u] * t0;
        }
        for s in 0..s_count {
            a.push(self.power_row(s));
            a_factors.push(self.power_factor(s));
            a_lin[(m + s, 1 + m + s)] = 1.0;
            b[m + s] = 1.0;
        }
        let mut c_lin = Vector::zeros(p);
        c_lin[0] = -1.0;
        (SdpProblem { c: Mat::zeros(n, n), c_lin, a, a_lin, b, a_factors }, t0)
    }

    /// Upper bound on the optimum implied by any nonnegative multipliers of
    /// the SINR rows (`lambda`) and power rows (`mu`) at level `gamma`.
    fn dual_bound(&self, gamma: f64, lambda: &[f64], mu: &[f64]) -> f64 {
        let total: f64 = lambda.iter().sum();
        if !(total > 0.0) {
            return f64::INFINITY;
        }
        let n = self.a[0].nrows();
        let mut e = Mat::zeros(n, n);
        let mut cw = Mat::zeros(n, n);
        for (u, &l) in lambda.iter().enumerate() {
            if l > 0.0 {
                add_scaled(&mut e, l, &self.a[u]);
                add_scaled(&mut e, -l * gamma, &self.c[u]);
                add_scaled(&mut cw, l, &self.c[u]);
            }
        }
        let mut bsum = 0.0;
        for (s, &mu_s) in mu.iter().enumerate() {
            if mu_s > 0.0 {
                add_scaled(&mut e, -mu_s, &self.q[s]);
                bsum += mu_s * self.budgets[s];
            }
        }
        let lmax_e = linalg::sym_eigenvalues(&e).max();
        let big = bsum + lmax_e.max(0.0) * self.trace_bound;
        let ratio = big / total;
        if ratio >= gamma {
            ratio
        } else {
            let c_max = linalg::sym_eigenvalues(&cw).max().max(0.0) * self.trace_bound;
            (gamma * c_max + big) / (c_max + total)
        }
    }
}

struct MarginOutcome {
    w: CMat,
    margin: f64,
    upper: f64,
    status: SdpStatus,
    iters: usize,
}

fn solve_margin(emb: &Embedded, gamma: f64, d: &[f64], settings: &SdpSettings) -> MarginOutcome {
    let (prog, t0) = emb.margin_program(gamma, d);
    let sol = prog.solve(settings);
    let m = emb.users();
    let lambda: Vec<f64> = (0..m).map(|u| sol.y[u].max(0.0) / gamma).collect();
    let mu: Vec<f64> = (0..emb.q.len()).map(|s| (-sol.y[m + s]).max(0.0) / emb.budgets[s]).collect();
    let upper = if sol.status == SdpStatus::NumericalFailure {
        f64::INFINITY
    } else {
        emb.dual_bound(gamma, &lambda, &mu)
    };
    MarginOutcome {
        w: emb.recover(&sol.x),
        margin: gamma * (sol.x_lin[0] - t0),
        upper,
        status: sol.status,
        iters: sol.iterations,
    }
}

/// Scales `w` onto the tightest power constraint.
fn push_to_budget(problem: &ProblemData, w: &CMat) -> CMat {
    let scale = problem.max_feasible_scale(w);
    if scale.is_finite() && scale > 0.0 {
        w * Complex64::new(scale, 0.0)
    } else {
        w.clone()
    }
}

/// Projects onto the PSD cone by clipping negative eigenvalues.
fn clip_psd(w: &CMat) -> CMat {
    let eig = linalg::eigh(w);
    let n = w.nrows();
    let mut scaled = eig.vectors.clone();
    for j in 0..n {
        let v = eig.values[j].max(0.0);
        for i in 0..n {
            scaled[(i, j)] *= Complex64::new(v, 0.0);
        }
    }
    linalg::hermitize(&(&scaled * eig.vectors.adjoint()))
}

/// Best rank-`rank` approximation `Σ_{j<rank} λ_j v_j v_jᴴ`.
fn truncate(w: &CMat, rank: usize) -> CMat {
    let eig = linalg::eigh(w);
    let n = w.nrows();
    let mut f = CMat::zeros(n, rank);
    for c in 0..rank {
        let j = n - 1 - c;
        let s = Complex64::new(eig.values[j].max(0.0).sqrt(), 0.0);
        for i in 0..n {
            f[(i, c)] = eig.vectors[(i, j)] * s;
        }
    }
    linalg::hermitize(&(&f * f.adjoint()))
}

/// Rank reduction on the optimal face. Moves `W = V Vᴴ` along
/// `V (I − tΔ) Vᴴ`, with `Δ` chosen so that `(A_u − γ C_u) • W` and `Q_s • W`
/// stay fixed for the active users (SINR at `γ`) and active budgets. The
/// step stops where the rank drops or where an inactive constraint becomes
/// tight, which then joins the active set. The result keeps every SINR at or
/// above `γ`, every budget satisfied, and has `r² ≤` the number of active
/// constraints.
pub fn reduce_rank(problem: &ProblemData, w: &CMat, gamma: f64, rank_tol: f64) -> CMat {
    let n = w.nrows();
    let eig = linalg::eigh(w);
    let lmax = eig.values.last().copied().unwrap_or(0.0);
    if lmax <= 0.0 {
        return w.clone();
    }
    let keep: Vec<usize> = (0..n).filter(|&j| eig.values[j] > rank_tol * lmax).collect();
    if keep.len() <= 1 {
        return w.clone();
    }
    let mut v = CMat::from_fn(n, keep.len(), |i, c| eig.vectors[(i, keep[c])] * eig.values[keep[c]].sqrt());
    let users = problem.num_users();
    // the functionals compressed to the column space of V
    let mut bs: Vec<CMat> = problem
        .signal
        .iter()
        .zip(&problem.interference)
        .map(|(a, c)| {
            let fa = a.factor.adjoint() * &v;
            let fc = c.factor.adjoint() * &v;
            fa.adjoint() * fa - fc.adjoint() * fc * Complex64::new(gamma, 0.0)
        })
        .collect();
    bs.extend(problem.constraints.iter().map(|c| v.adjoint() * &c.matrix.dense * &v));
    let bound = |i: usize| if i < users { gamma } else { problem.constraints[i - users].budget };
    // slack ≥ 0 for every functional: f_u − γ for users, b_s − q_s for budgets
    let slack = |i: usize, b: &CMat| {
        let f = b.trace().re;
        if i < users { f - bound(i) } else { bound(i) - f }
    };
    let mut active: Vec<bool> = bs.iter().enumerate().map(|(i, b)| slack(i, b) <= 1e-9 * bound(i)).collect();

    for _ in 0..4 * (n + bs.len()) {
        let r = v.ncols();
        if r <= 1 {
            break;
        }
        // tr(B Δ) in the real coordinates of Hermitian Δ: diagonal, then
        // (Re, Im) of each upper entry
        let coords = |b: &CMat| {
            let mut row = Vec::with_capacity(r * r);
            for i in 0..r {
                row.push(b[(i, i)].re);
                for j in i + 1..r {
                    row.push(2.0 * b[(j, i)].re);
                    row.push(-2.0 * b[(j, i)].im);
                }
            }
            DVector::from_vec(row)
        };
        let mut basis: Vec<DVector<f64>> = Vec::new();
        for (b, _) in bs.iter().zip(&active).filter(|x| *x.1) {
            let mut k = coords(b);
            for _ in 0..2 {
                for q in &basis {
                    let d = q.dot(&k);
                    k.axpy(-d, q, 1.0);
                }
            }
            let norm = k.norm();
            if norm > 1e-12 * b.norm().max(f64::MIN_POSITIVE) {
                basis.push(k / norm);
            }
        }
        if basis.len() >= r * r {
            break;
        }
        // a coordinate direction with a large component off the row space
        let mut best = DVector::zeros(r * r);
        for e in 0..r * r {
            let mut d = DVector::zeros(r * r);
            d[e] = 1.0;
            for _ in 0..2 {
                for q in &basis {
                    let p = q.dot(&d);
                    d.axpy(-p, q, 1.0);
                }
            }
            if d.norm() > best.norm() {
                best = d;
                if best.norm() > 0.5 {
                    break;
                }
            }
        }
        if best.norm() < 1e-8 {
            break;
        }
        let mut delta = CMat::zeros(r, r);
        let mut col = 0;
        for i in 0..r {
            delta[(i, i)] = Complex64::new(best[col], 0.0);
            col += 1;
            for j in i + 1..r {
                let z = Complex64::new(best[col], best[col + 1]);
                delta[(i, j)] = z;
                delta[(j, i)] = z.conj();
                col += 2;
            }
        }
        let ev = linalg::eigvalsh(&delta);
        // for each sign: the full step that zeroes an eigenvalue of I − tΔ,
        // cut short by the first inactive constraint to become tight
        let plan = |sign: f64| -> Option<(f64, Option<usize>)> {
            let top = if sign > 0.0 { ev[r - 1] } else { -ev[0] };
            if top <= 0.0 {
                return None;
            }
            let mut t = 1.0 / top;
            let mut block = None;
            for (i, b) in bs.iter().enumerate().filter(|(i, _)| !active[*i]) {
                let c = sign * linalg::inner(b, &delta);
                // slack(t) = slack − t c for users, slack + t c for budgets
                let rate = if i < users { c } else { -c };
                if rate > 0.0 {
                    let lim = slack(i, b).max(0.0) / rate;
                    if lim < t {
                        t = lim;
                        block = Some(i);
                    }
                }
            }
            Some((t * sign, block))
        };
        let (t, block) = match (plan(1.0), plan(-1.0)) {
            (Some(p @ (_, None)), _) | (_, Some(p @ (_, None))) => p,
            (Some(p), Some(q)) => {
                if p.0.abs() * ev[r - 1] >= q.0.abs() * -ev[0] { p } else { q }
            }
            (Some(p), None) | (None, Some(p)) => p,
            (None, None) => break,
        };
        let s = linalg::eigh(&(CMat::identity(r, r) - &delta * Complex64::new(t, 0.0)));
        let smax = s.values[r - 1];
        let kept: Vec<usize> = (0..r).filter(|&j| s.values[j] > 1e-10 * smax).collect();
        let u = CMat::from_fn(r, kept.len(), |i, c| s.vectors[(i, kept[c])] * s.values[kept[c]].max(0.0).sqrt());
        v = &v * &u;
        for b in bs.iter_mut() {
            *b = u.adjoint() * &*b * &u;
        }
        if let Some(i) = block {
            active[i] = true;
        } else if kept.len() >= r {
            break;
        }
    }
    linalg::hermitize(&(&v * v.adjoint()))
}

fn initial_point(problem: &ProblemData) -> CMat {
    push_to_budget(problem, &CMat::identity(problem.dim, problem.dim))
}

fn normalizers(problem: &ProblemData, w: &CMat) -> Vec<f64> {
    problem.interference.iter().map(|c| c.inner(w).max(0.0) + 1.0).collect()
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("gamma must be a finite nonnegative number, got {gamma}")));
    }
    Ok(())
}

/// Decides whether SINR level `gamma` is achievable and, if so, returns a
/// minimum-power design with `D_0 • W` reported as `min_power`.
pub fn solve_feasibility(problem: &ProblemData, gamma: f64) -> Result<FeasibilityResult> {
    solve_feasibility_with(problem, gamma, &SdpSettings::default())
}

pub fn solve_feasibility_with(problem: &ProblemData, gamma: f64, settings: &SdpSettings) -> Result<FeasibilityResult> {
    check_gamma(gamma)?;
    let n = problem.dim;
    if gamma == 0.0 {
        return Ok(FeasibilityResult {
            status: FeasibilityStatus::Feasible,
            w: Some(CMat::zeros(n, n)),
            min_power: 0.0,
            ipm_iters: 0,
        });
    }
    let infeasible = |iters| FeasibilityResult { status: FeasibilityStatus::Infeasible, w: None, min_power: f64::NAN, ipm_iters: iters };
    if problem.constraints.is_empty() {
        return Err(Error::Unbounded("power-minimization needs at least one power constraint".into()));
    }
    if is_degenerate(problem) || gamma > gamma_high(problem)? {
        return Ok(infeasible(0));
    }
    let emb = Embedded::new(problem)?;
    let d = normalizers(problem, &initial_point(problem));
    let phase1 = solve_margin(&emb, gamma, &d, settings);
    let mut iters = phase1.iters;
    if phase1.status == SdpStatus::NumericalFailure {
        return Ok(FeasibilityResult { status: FeasibilityStatus::NumericalFailure, w: None, min_power: f64::NAN, ipm_iters: iters });
    }
    if phase1.upper < gamma || phase1.margin < -1e-7 * gamma {
        return Ok(infeasible(iters));
    }

    let certify = |w: &CMat| -> Option<CMat> {
        let w = clip_psd(w);
        let w = raise_to_level(problem, &w, gamma)?;
        let ok_sinr = problem.min_sinr(&w).ok()? >= gamma * (1.0 - 1e-7);
        let ok_power = problem
            .constraints
            .iter()
            .all(|c| c.matrix.inner(&w) <= c.budget * (1.0 + 1e-7));
        (ok_sinr && ok_power).then_some(w)
    };

    let mut best = certify(&phase1.w);
    let phase2 = power_min_program(&emb, gamma).solve(settings);
    iters += phase2.iterations;
    if phase2.status != SdpStatus::NumericalFailure {
        if let Some(w2) = certify(&emb.recover(&phase2.x)) {
            let p2 = problem.constraints[0].matrix.inner(&w2);
            if best.as_ref().map_or(true, |b| p2 < problem.constraints[0].matrix.inner(b)) {
                best = Some(w2);
            }
        }
    }
    match best {
        Some(w) => {
            let min_power = problem.constraints[0].matrix.inner(&w);
            Ok(FeasibilityResult { status: FeasibilityStatus::Feasible, w: Some(w), min_power, ipm_iters: iters })
        }
        None if phase1.margin >= 0.0 => Ok(FeasibilityResult {
            status: FeasibilityStatus::NumericalFailure,
            w: None,
            min_power: f64::NAN,
            ipm_iters: iters,
        }),
        None => Ok(infeasible(iters)),
    }
}

/// Smallest uniform up-scaling that lifts every SINR to `gamma`, if the
/// power budgets allow it.
fn raise_to_level(problem: &ProblemData, w: &CMat, gamma: f64) -> Option<CMat> {
    let mut need: f64 = 1.0;
    for u in 0..problem.num_users() {
        let excess = problem.signal[u].inner(w) - gamma * problem.interference[u].inner(w);
        if excess <= 0.0 {
            return Some(w.clone()).filter(|_| gamma == 0.0);
        }
        need = need.max(gamma / excess);
    }
    let room = problem.max_feasible_scale(w);
    if need <= 1.0 {
        Some(w.clone())
    } else if need <= room {
        Some(w * Complex64::new(need, 0.0))
    } else {
        Some(w * Complex64::new(room, 0.0))
    }
}

/// `min Q_0 • W` subject to the SINR rows at `gamma` and `Q_s • W ≤ b_s`, `s ≥ 1`.
fn power_min_program(emb: &Embedded, gamma: f64) -> SdpProblem {
    let m = emb.users();
    let s_count = emb.q.len() - 1;
    let p = m + s_count;
    let mut a = Vec::with_capacity(m + s_count);
    let mut a_factors = Vec::with_capacity(m + s_count);
    let mut a_lin = Mat::zeros(m + s_count, p);
    let mut b = Vector::zeros(m + s_count);
    for u in 0..m {
        a.push(emb.sinr_row(u, gamma));
        a_factors.push(Some(emb.sinr_factor(u, gamma)));
        a_lin[(u, u)] = -1.0;
        b[u] = 1.0;
    }
    for s in 0..s_count {
        a.push(emb.power_row(s + 1));
        a_factors.push(emb.power_factor(s + 1));
        a_lin[(m + s, m + s)] = 1.0;
        b[m + s] = 1.0;
    }
    SdpProblem { c: emb.power_row(0), c_lin: Vector::zeros(p), a, a_lin, b, a_factors }
}

/// Relaxed optimum with the default bracket tolerance.
pub fn solve_sdr_default(problem: &ProblemData) -> Result<SdrSolution> {
    solve_sdr_with(problem, &SdrOptions::default())
}

/// Relaxed optimum; the search stops once the certified bracket is at most
/// `tol_gamma` wide.
pub fn solve_sdr(problem: &ProblemData, tol_gamma: f64) -> Result<SdrSolution> {
    if !(tol_gamma > 0.0) {
        return Err(Error::Domain(format!("tol_gamma must be positive, got {tol_gamma}")));
    }
    solve_sdr_with(problem, &SdrOptions { tolerance: GammaTolerance::Absolute(tol_gamma), ..SdrOptions::default() })
}

pub fn solve_sdr_with(problem: &ProblemData, options: &SdrOptions) -> Result<SdrSolution> {
    let n = problem.dim;
    let high = gamma_high(problem)?;
    let mut diag = SdrDiagnostics { gamma_high: high, bracket_width: 0.0, ipm_iterations: 0, steps: Vec::new() };
    if is_degenerate(problem) {
        return Ok(SdrSolution { w_star: CMat::zeros(n, n), gamma_star: 0.0, rank: 0, sdr_rate: 0.0, diagnostics: diag });
    }
    let emb = Embedded::new(problem)?;

    let mut best = initial_point(problem);
    let mut lo = problem.min_sinr(&best)?;
    let mut hi = high;
    let mut next = lo;
    let mut failures = 0;
    let mut stalled = 0;
    for _ in 0..options.max_steps {
        if options.tolerance.met(lo, hi, high) {
            break;
        }
        let gamma = next.max(f64::MIN_POSITIVE);
        let d = normalizers(problem, &best);
        // loose interior-point tolerances while the bracket is still wide
        let loose = (1e-2 * (hi - lo) / (1.0 + hi)).min(1e-3);
        let ipm = SdpSettings {
            gap_tol: options.ipm.gap_tol.max(loose),
            feas_tol: options.ipm.feas_tol.max(loose),
            ..options.ipm
        };
        let out = solve_margin(&emb, gamma, &d, &ipm);
        diag.ipm_iterations += out.iters;
        let prev_gap = hi - lo;
        if out.status == SdpStatus::NumericalFailure {
            failures += 1;
            diag.steps.push(SearchStep { gamma, margin: out.margin, lower: lo, upper: hi, ipm_status: out.status, ipm_iters: out.iters });
            if failures >= 3 {
                return Err(Error::NumericalFailure(format!(
                    "interior-point solver failed repeatedly near gamma = {gamma:.6e} (bracket [{lo:.6e}, {hi:.6e}])"
                )));
            }
            next = 0.5 * (lo + hi);
            continue;
        }
        let candidate = push_to_budget(problem, &clip_psd(&out.w));
        let value = problem.min_sinr(&candidate)?;
        if value > lo {
            lo = value;
            best = candidate;
        }
        hi = hi.min(out.upper).max(lo);
        diag.steps.push(SearchStep { gamma, margin: out.margin, lower: lo, upper: hi, ipm_status: out.status, ipm_iters: out.iters });
        debug!("sdr step gamma={gamma:.6e} margin={:.3e} bracket=[{lo:.9e}, {hi:.9e}] ipm={}", out.margin, out.iters);

        // Dinkelbach step from the best point; fall back to bisection when it
        // stops making progress.
        next = if hi - lo <= 0.75 * prev_gap { lo } else { 0.5 * (lo + hi) };

        // At full interior-point accuracy the certified bracket cannot shrink
        // below the solver's own error.
        let at_floor = ipm.gap_tol <= options.ipm.gap_tol;
        stalled = if at_floor && hi - lo > 0.9 * prev_gap { stalled + 1 } else { 0 };
        if stalled >= 3 {
            warn!("sdr search stalled with bracket width {:.3e}", hi - lo);
            break;
        }
    }
    let mut rank = rank_of(&best, options.rank_tol);
    if rank > 0 && rank < n {
        // drop the sub-threshold eigenvalues so that W* has exactly that rank
        // and keep the result whenever it is still within tolerance of `hi`
        let trimmed = push_to_budget(problem, &truncate(&best, rank));
        let v = problem.min_sinr(&trimmed)?;
        if v >= lo || (v > 0.0 && options.tolerance.met(v, hi, high)) {
            best = trimmed;
        }
        rank = rank_of(&best, options.rank_tol);
    }
    if rank > 1 {
        let level = problem.min_sinr(&best)?;
        let reduced = push_to_budget(problem, &reduce_rank(problem, &best, level, options.rank_tol));
        let v = problem.min_sinr(&reduced)?;
        if v >= lo || (v > 0.0 && options.tolerance.met(v, hi, high)) {
            debug!("rank reduced from {rank} to {}", rank_of(&reduced, options.rank_tol));
            best = reduced;
            rank = rank_of(&best, options.rank_tol);
        }
    }
    let gamma_star = problem.min_sinr(&best)?;
    diag.bracket_width = hi - gamma_star.min(hi);
    Ok(SdrSolution {
        rank,
        sdr_rate: gamma_star.ln_1p(),
        w_star: best,
        gamma_star,
        diagnostics: diag,
    })
}

/// Feasibility margins `b_s − Q_s • W` relative to `b_s`, negative when violated.
pub fn power_slack(problem: &ProblemData, w: &CMat) -> DVector<f64> {
    DVector::from_iterator(
        problem.constraints.len(),
        problem.constraints.iter().map(|c| 1.0 - c.matrix.inner(w) / c.budget),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{build_distributed_problem, build_mimo_problem, build_mimo_problem_with};
    use crate::scenario::{db_to_linear, generate_channels, NetworkConfig, Topology};

    fn instance(l: usize, g: usize, per_group: usize, seed: u64) -> ProblemData {
        let cfg = NetworkConfig::uniform(l, g, per_group, 1.0, 0.5, 0.5, db_to_linear(6.0), None);
        build_mimo_problem(&cfg, &generate_channels(&cfg, seed).unwrap()).unwrap()
    }

    /// Single user, total power only: `γ* = aᴴ (C + D_0 / P̄_0)⁻¹ a` for `A = a aᴴ`.
    fn single_user_optimum(p: &ProblemData) -> f64 {
        let a = p.signal[0].factor.column(0).into_owned();
        let d0 = &p.constraints[0];
        let m = &p.interference[0].dense + &d0.matrix.dense * Complex64::new(1.0 / d0.budget, 0.0);
        let x = m.lu().solve(&a).unwrap();
        (a.adjoint() * x)[(0, 0)].re
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_of(&CMat::identity(4, 4), 1e-6), 4);
        let w = crate::linalg::CVec::from_fn(3, |i, _| Complex64::new(1.0 + i as f64, -0.5));
        assert_eq!(rank_of(&linalg::outer(&w), 1e-6), 1);
        let mut d = CMat::zeros(4, 4);
        d[(0, 0)] = Complex64::new(1.0, 0.0);
        d[(1, 1)] = Complex64::new(1e-9, 0.0);
        assert_eq!(rank_of(&d, 1e-6), 1);
        assert_eq!(rank_of(&CMat::zeros(3, 3), 1e-6), 0);
    }

    #[test]
    fn zero_level_is_trivially_feasible() {
        let p = instance(2, 1, 1, 3);
        let r = solve_feasibility(&p, 0.0).unwrap();
        assert_eq!(r.status, FeasibilityStatus::Feasible);
        assert_eq!(r.min_power, 0.0);
        assert!(r.w.unwrap().iter().all(|z| *z == linalg::ZERO));
        assert!(solve_feasibility(&p, -1.0).is_err());
    }

    #[test]
    fn above_upper_bound_is_infeasible() {
        let p = instance(2, 2, 1, 4);
        let high = gamma_high(&p).unwrap();
        let r = solve_feasibility(&p, high * 1.01).unwrap();
        assert_eq!(r.status, FeasibilityStatus::Infeasible);
    }

    #[test]
    fn single_user_matches_closed_form() {
        for seed in 0..4 {
            let p = instance(2, 1, 1, seed);
            let exact = single_user_optimum(&p);
            let sol = solve_sdr(&p, 1e-7).unwrap();
            assert!((sol.gamma_star - exact).abs() <= 1e-6 * exact, "{} vs {exact}", sol.gamma_star);
            assert_eq!(sol.rank, 1);
            assert_eq!(solve_feasibility(&p, 0.99 * exact).unwrap().status, FeasibilityStatus::Feasible);
            assert_eq!(solve_feasibility(&p, 1.01 * exact).unwrap().status, FeasibilityStatus::Infeasible);
        }
    }

    #[test]
    fn distributed_single_user_matches_closed_form() {
        let cfg = NetworkConfig::uniform(3, 1, 1, 1.0, 0.5, 0.5, 2.0, None).with_topology(Topology::Distributed);
        let ch = generate_channels(&cfg, 9).unwrap();
        let bare = build_distributed_problem(&cfg, &ch, &[]).unwrap();
        let d = CMat::from_diagonal(&bare.relay_input_cov.diagonal());
        let p = build_distributed_problem(&cfg, &ch, &[(d, 2.0)]).unwrap();
        let exact = single_user_optimum(&p);
        let sol = solve_sdr(&p, 1e-8).unwrap();
        assert!((sol.gamma_star - exact).abs() <= 1e-6 * exact);
    }

    #[test]
    fn zero_channel_gives_zero() {
        let cfg = NetworkConfig::uniform(2, 2, 1, 1.0, 1.0, 1.0, 4.0, None);
        let mut ch = generate_channels(&cfg, 1).unwrap();
        for g in ch.g.iter_mut() {
            g.fill(linalg::ZERO);
        }
        let p = build_mimo_problem(&cfg, &ch).unwrap();
        let sol = solve_sdr_default(&p).unwrap();
        assert_eq!(sol.gamma_star, 0.0);
        assert_eq!(sol.rank, 0);
        assert_eq!(sol.sdr_rate, 0.0);
    }

    #[test]
    fn rejects_nonpositive_tolerance() {
        let p = instance(2, 1, 1, 0);
        assert!(solve_sdr(&p, 0.0).is_err());
        assert!(solve_sdr(&p, -1e-3).is_err());
    }

    #[test]
    fn certificate_and_bracket() {
        for seed in 0..3 {
            let p = instance(3, 2, 2, seed);
            let tol = 1e-6;
            let sol = solve_sdr(&p, tol).unwrap();
            assert!(sol.diagnostics.bracket_width <= tol);
            let achieved = p.min_sinr(&sol.w_star).unwrap();
            assert!(achieved >= sol.gamma_star * (1.0 - 1e-6));
            assert!((achieved - sol.gamma_star).abs() <= tol + 1e-6);
            assert!(power_slack(&p, &sol.w_star).iter().all(|&s| s >= -1e-6));
            assert!(linalg::is_psd(&sol.w_star, 1e-9));
            assert!(sol.gamma_star <= sol.diagnostics.gamma_high);
            assert!((sol.sdr_rate - sol.gamma_star.ln_1p()).abs() < 1e-15);
            // no feasible design beats the certified upper end
            let hi = sol.gamma_star + sol.diagnostics.bracket_width;
            assert_ne!(solve_feasibility(&p, hi * 1.001).unwrap().status, FeasibilityStatus::Feasible);
        }
    }

    #[test]
    fn budget_scaling_is_monotone() {
        let cfg = NetworkConfig::uniform(3, 2, 1, 1.0, 0.5, 0.5, 2.0, Some(0.8));
        let ch = generate_channels(&cfg, 5).unwrap();
        let mut last = 0.0;
        for alpha in [1.0, 1.5, 3.0, 10.0] {
            let mut c = cfg.clone();
            c.total_power_budget *= alpha;
            c.per_antenna_budgets = c.per_antenna_budgets.map(|v| v.iter().map(|b| b * alpha).collect());
            let sol = solve_sdr(&build_mimo_problem(&c, &ch).unwrap(), 1e-7).unwrap();
            assert!(sol.gamma_star >= last - 1e-6, "{} < {last}", sol.gamma_star);
            last = sol.gamma_star;
        }
    }

    #[test]
    fn feasibility_is_monotone_in_level() {
        let p = instance(3, 2, 1, 8);
        let star = solve_sdr(&p, 1e-7).unwrap().gamma_star;
        let mut prev_feasible = true;
        for frac in [0.2, 0.5, 0.8, 0.95, 0.999, 1.01, 1.2, 2.0] {
            let r = solve_feasibility(&p, frac * star).unwrap();
            let ok = r.status == FeasibilityStatus::Feasible;
            assert!(prev_feasible || !ok, "feasible again at {frac}");
            assert_eq!(ok, frac < 1.0, "level fraction {frac}");
            prev_feasible = ok;
        }
    }

    #[test]
    fn feasible_designs_meet_all_constraints() {
        let cfg = NetworkConfig::uniform(3, 2, 1, 1.0, 0.5, 0.5, 4.0, Some(1.0));
        let ch = generate_channels(&cfg, 2).unwrap();
        let extra = vec![(CMat::identity(9, 9), 3.0)];
        let p = build_mimo_problem_with(&cfg, &ch, &extra).unwrap();
        let star = solve_sdr(&p, 1e-7).unwrap().gamma_star;
        let gamma = 0.9 * star;
        let r = solve_feasibility(&p, gamma).unwrap();
        assert_eq!(r.status, FeasibilityStatus::Feasible);
        let w = r.w.unwrap();
        assert!(p.min_sinr(&w).unwrap() >= gamma * (1.0 - 1e-7));
        assert!(power_slack(&p, &w).iter().all(|&s| s >= -1e-7));
        assert!((r.min_power - p.constraints[0].matrix.inner(&w)).abs() < 1e-12);
        assert!(r.ipm_iters > 0);
    }

    #[test]
    fn rank_reduction_preserves_functionals() {
        let p = instance(3, 2, 2, 21);
        let w = push_to_budget(&p, &CMat::identity(p.dim, p.dim));
        let level = p.min_sinr(&w).unwrap();
        let out = reduce_rank(&p, &w, level, 1e-9);
        let r = rank_of(&out, 1e-9);
        assert!(r * r <= p.num_users() + p.constraints.len(), "rank {r}");
        let f = |u: usize, x: &CMat| p.signal[u].inner(x) - level * p.interference[u].inner(x);
        for u in 0..p.num_users() {
            // active users keep their value, the others stay above the level
            if (f(u, &w) - level).abs() <= 1e-9 * level {
                assert!((f(u, &out) - f(u, &w)).abs() <= 1e-8 * level);
            }
            assert!(p.sinr(&out, u).unwrap() >= level * (1.0 - 1e-8));
        }
        for c in &p.constraints {
            assert!(c.matrix.inner(&out) <= c.budget * (1.0 + 1e-8));
        }
    }

    #[test]
    fn two_users_give_rank_one() {
        for seed in 0..4 {
            let p = instance(4, 2, 1, 40 + seed);
            let sol = solve_sdr_with(&p, &SdrOptions { tolerance: GammaTolerance::Relative(1e-6), ..SdrOptions::default() }).unwrap();
            assert_eq!(sol.rank, 1, "seed {seed}");
        }
    }
}
