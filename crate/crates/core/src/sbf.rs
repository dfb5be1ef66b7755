//! Stochastic beamforming: a fresh weight vector `w(t)` is drawn in every
//! symbol slot from a zero-mean Gaussian or elliptic distribution with
//! covariance `Ω`.
//!
//! With rank-one signal matrices, `wᴴA w / (A • Ω)` has the same law `ξ` for
//! every user, so the rate is `E_ξ[ln(1 + ξ Γ)]` with `Γ` the smallest
//! averaged SINR `A • Ω / (C • Ω + 1)`:
//!
//! * Gaussian: `ξ ~ Exp(1)`, rate `e^{1/Γ} E1(1/Γ)`;
//! * elliptic of rank `r`: `ξ / r ~ Beta(1, r − 1)`, closed form in harmonic
//!   numbers and an alternating binomial sum.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};
use crate::problem::ProblemData;
use crate::rng::{self, Purpose, StreamRng};
use crate::special::{binomial, exp_e1, harmonic, QuadResult, Quadrature, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum SbfKind {
    Gaussian,
    Elliptic,
}

/// A stochastic beamformer with covariance `Ω`, sampled through the
/// rank-truncated factor `Lf` (`Lfᴴ Lf = Ω` up to the dropped eigenvalues).
#[derive(Debug, Clone)]
pub struct SbfScheme {
    pub kind: SbfKind,
    pub covariance: CMat,
    /// `r × n`, rows `√λ_j v_jᴴ`.
    pub factor: CMat,
    pub rank: usize,
}

impl SbfScheme {
    /// Factors `omega`, dropping eigenvalues at or below `rel_tol · λ_max`.
    pub fn new(kind: SbfKind, omega: &CMat, rel_tol: f64) -> Result<Self> {
        let (factor, rank) = factorize_covariance(omega, rel_tol)?;
        if kind == SbfKind::Elliptic && rank == 0 {
            return Err(Error::Domain("elliptic beamforming needs a covariance of rank at least 1".into()));
        }
        Ok(Self { kind, covariance: linalg::hermitize(omega), factor, rank })
    }

    pub fn dim(&self) -> usize {
        self.factor.ncols()
    }

    /// One weight vector from the scheme's distribution.
    pub fn sample(&self, rng: &mut StreamRng) -> CVec {
        match self.kind {
            SbfKind::Gaussian => sample_gaussian_weight(self, rng),
            SbfKind::Elliptic => sample_elliptic_weight(self, rng),
        }
    }
}

/// `(Lf, r)` with `Lfᴴ Lf = Ω` on the eigenpairs above `rel_tol · λ_max`.
pub fn factorize_covariance(omega: &CMat, rel_tol: f64) -> Result<(CMat, usize)> {
    linalg::psd_factor(omega, rel_tol)
}

/// `w = Lfᴴ α`, `α ~ CN(0, I_r)`.
pub fn sample_gaussian_weight(scheme: &SbfScheme, rng: &mut StreamRng) -> CVec {
    let alpha = rng::complex_normal_vector(rng, scheme.rank);
    scheme.factor.ad_mul(&alpha)
}

/// `w = Lfᴴ α · √r / ‖α‖`, `α ~ CN(0, I_r)`.
pub fn sample_elliptic_weight(scheme: &SbfScheme, rng: &mut StreamRng) -> CVec {
    let r = scheme.rank;
    loop {
        let alpha = rng::complex_normal_vector(rng, r);
        let norm = alpha.norm();
        if norm > 0.0 {
            let scale = num_complex::Complex64::new((r as f64).sqrt() / norm, 0.0);
            return scheme.factor.ad_mul(&alpha) * scale;
        }
    }
}

/// Range `[r λ_min, r λ_max]` of `wᴴQw` over elliptic draws, from the
/// eigenvalues of `Lf Q Lfᴴ` (the nonzero spectrum of `Q^{1/2} Ω Q^{1/2}`).
/// When that `r × r` matrix is singular the lower end is 0.
pub fn elliptic_power_bounds(scheme: &SbfScheme, q: &CMat) -> Result<(f64, f64)> {
    if scheme.kind != SbfKind::Elliptic {
        return Err(Error::Domain("power bounds apply to the elliptic scheme only".into()));
    }
    if q.nrows() != scheme.dim() || q.ncols() != scheme.dim() {
        return Err(Error::DimensionMismatch { field: "q", detail: format!("expected {0}×{0}", scheme.dim()) });
    }
    let ev = linalg::eigvalsh(q);
    let scale = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if ev.first().is_some_and(|&m| m < -1e-10 * scale) {
        return Err(Error::NotPsd { min_eig: ev[0], max_eig: *ev.last().unwrap() });
    }
    let m = &scheme.factor * q * scheme.factor.adjoint();
    let ev = linalg::eigvalsh(&m);
    let r = scheme.rank as f64;
    let hi = ev.last().copied().unwrap_or(0.0).max(0.0);
    let lo = ev.first().copied().unwrap_or(0.0).max(0.0);
    Ok((r * lo, r * hi))
}

/// `∫₀^∞ ln(1 + tγ) e^{−t} dt = e^{1/γ} E1(1/γ)` in nats.
pub fn sbf_rate_gaussian<F: Scalar>(gamma: F) -> F {
    if gamma.is_nan() || gamma < F::zero() {
        return F::nan();
    }
    if gamma == F::zero() {
        return F::zero();
    }
    if gamma.is_infinite() {
        return gamma;
    }
    exp_e1(gamma.recip())
}

/// Direct quadrature of the Gaussian rate on `[0, T]`, `T = max(50, 50 / max(γ, 1))`,
/// with the neglected tail `∫_T^∞ ln(1 + tγ) e^{−t} dt ≤ e^{−T} (ln(1 + Tγ) + 1/T)`
/// added to the error estimate.
pub fn sbf_rate_gaussian_quadrature(gamma: f64) -> QuadResult<f64> {
    let t_end = 50f64.max(50.0 / gamma.max(1.0));
    let mut res = Quadrature::<f64>::with_abs_tol(1e-13).integrate(|t| (t * gamma).ln_1p() * (-t).exp(), 0.0, t_end);
    res.abs_error += (-t_end).exp() * ((t_end * gamma).ln_1p() + 1.0 / t_end);
    res
}

/// `H_{r−1} − ln r`, the large-SINR limit of the elliptic rate gap.
pub fn gap_bound_elliptic<F: Scalar>(r: usize) -> Result<F> {
    if r < 1 {
        return Err(Error::Domain(format!("rank must be at least 1, got {r}")));
    }
    Ok(harmonic::<F>(r - 1) - F::from_usize(r).unwrap().ln())
}

/// Density of `ξ` for the elliptic scheme of rank `r ≥ 2` on `[0, r]`.
pub fn elliptic_density(t: f64, r: usize) -> f64 {
    let rf = r as f64;
    if !(0.0..=rf).contains(&t) {
        return 0.0;
    }
    (1.0 - 1.0 / rf) * (1.0 - t / rf).powi(r as i32 - 2)
}

/// Evaluation path chosen by [`sbf_rate_elliptic_detail`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EllipticPath {
    ClosedForm,
    Quadrature,
}

/// Closed form is used up to this rank when its rounding estimate allows.
pub const ELLIPTIC_CLOSED_FORM_MAX_RANK: usize = 25;
const ELLIPTIC_ROUNDING_LIMIT: f64 = 1e-12;

/// Elliptic rate `E[ln(1 + ξγ)]` for rank `r`, in nats.
pub fn sbf_rate_elliptic<F: Scalar>(gamma: F, r: usize) -> Result<F> {
    sbf_rate_elliptic_detail(gamma, r).map(|(v, _)| v)
}

/// Elliptic rate together with the evaluation path. The closed form
///
/// ```text
/// (1 + 1/(rγ))^{r−1} [ ln(1 + rγ) − H_{r−1} − Σ_{k=1}^{r−1} C(r−1,k) (−1)^k / (k (1 + rγ)^k) ]
/// ```
///
/// loses accuracy when the bracket cancels (small `rγ`, large `r`); its
/// rounding error is estimated from the term magnitudes and, past the limit,
/// the integral `∫_0^{ln(1+rγ)} (1 − (e^s − 1)/(rγ))^{r−1} ds` is integrated
/// instead.
pub fn sbf_rate_elliptic_detail<F: Scalar>(gamma: F, r: usize) -> Result<(F, EllipticPath)> {
    if r < 1 {
        return Err(Error::Domain(format!("rank must be at least 1, got {r}")));
    }
    if gamma.is_nan() || gamma < F::zero() {
        return Err(Error::Domain(format!("gamma must be nonnegative, got {gamma:?}")));
    }
    if gamma == F::zero() {
        return Ok((F::zero(), EllipticPath::ClosedForm));
    }
    if r == 1 {
        return Ok((gamma.ln_1p(), EllipticPath::ClosedForm));
    }
    let n = r - 1;
    let rg = F::from_usize(r).unwrap() * gamma;
    if r <= ELLIPTIC_CLOSED_FORM_MAX_RANK {
        let x = (F::one() + rg).recip();
        let log_term = rg.ln_1p();
        let h = harmonic::<F>(n);
        // terms C(n,k) (−1)^k x^k / k, accumulated from the smallest end
        let mut sum = F::zero();
        let mut abs_sum = F::zero();
        for k in (1..=n).rev() {
            let kf = F::from_usize(k).unwrap();
            let t = binomial::<F>(n, k) * x.powi(k as i32) / kf;
            abs_sum = abs_sum + t;
            sum = if k % 2 == 1 { sum - t } else { sum + t };
        }
        let prefactor = (F::one() + rg.recip()).powi(n as i32);
        let bracket = log_term - h - sum;
        let value = prefactor * bracket;
        let rounding = F::epsilon() * F::from_usize(n + 3).unwrap() * prefactor * (log_term + h + abs_sum);
        if rounding <= F::lit(ELLIPTIC_ROUNDING_LIMIT) * value.abs().max(F::one()) && rounding.is_finite() {
            return Ok((value, EllipticPath::ClosedForm));
        }
    }
    Ok((elliptic_rate_quadrature(gamma, r), EllipticPath::Quadrature))
}

fn elliptic_rate_quadrature<F: Scalar>(gamma: F, r: usize) -> F {
    let n = (r - 1) as i32;
    let rg = F::from_usize(r).unwrap() * gamma;
    let upper = rg.ln_1p();
    let integrand = |s: F| {
        let base = F::one() - s.exp_m1() / rg;
        if base <= F::zero() {
            F::zero()
        } else {
            base.powi(n)
        }
    };
    let tol = F::lit(1e-14).max(F::epsilon() * F::lit(16.0));
    Quadrature { abs_tol: tol, rel_tol: tol, max_subdivisions: 4000 }.integrate(integrand, F::zero(), upper).value
}

/// Worst averaged SINR `min_u A_u • Ω / (C_u • Ω + 1)` and its user.
pub fn worst_averaged_sinr(problem: &ProblemData, omega: &CMat) -> Result<(f64, usize)> {
    if omega.nrows() != problem.dim || omega.ncols() != problem.dim {
        return Err(Error::DimensionMismatch {
            field: "omega",
            detail: format!("expected {0}×{0}, got {1}×{2}", problem.dim, omega.nrows(), omega.ncols()),
        });
    }
    let mut best = (f64::INFINITY, 0);
    for u in 0..problem.num_users() {
        let v = problem.sinr(omega, u)?;
        if v < best.0 {
            best = (v, u);
        }
    }
    Ok(best)
}

/// Stochastic beamforming rate of `scheme` on `problem`, in nats.
pub fn sbf_rate(problem: &ProblemData, scheme: &SbfScheme) -> Result<f64> {
    let (gamma, _) = worst_averaged_sinr(problem, &scheme.covariance)?;
    let gamma = gamma.max(0.0);
    match scheme.kind {
        SbfKind::Gaussian => Ok(sbf_rate_gaussian(gamma)),
        SbfKind::Elliptic => sbf_rate_elliptic(gamma, scheme.rank),
    }
}

/// Sample mean of `ln(1 + wᴴA_u w / (C_u • Ω + 1))` for the worst user `u`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MonteCarloRate {
    pub mean: f64,
    pub std_err: f64,
    pub user: usize,
    pub draws: usize,
}

/// Monte Carlo estimate of the rate, for comparison with [`sbf_rate`].
pub fn sbf_rate_monte_carlo(problem: &ProblemData, scheme: &SbfScheme, draws: usize, seed: u64) -> Result<MonteCarloRate> {
    if draws < 2 {
        return Err(Error::Domain("at least two draws are required".into()));
    }
    let (_, user) = worst_averaged_sinr(problem, &scheme.covariance)?;
    let denom = problem.interference[user].inner(&scheme.covariance) + 1.0;
    let purpose = match scheme.kind {
        SbfKind::Gaussian => Purpose::GaussianSbf,
        SbfKind::Elliptic => Purpose::EllipticSbf,
    };
    const CHUNK: usize = 1000;
    let (sum, sum_sq) = (0..draws.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::stream(seed, purpose, &[c as u64]);
            let mut acc = (0.0, 0.0);
            for _ in 0..CHUNK.min(draws - c * CHUNK) {
                let w = scheme.sample(&mut rng);
                let v = (problem.signal[user].quad(&w) / denom).ln_1p();
                acc.0 += v;
                acc.1 += v * v;
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let nf = draws as f64;
    let mean = sum / nf;
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    Ok(MonteCarloRate { mean, std_err: (var / nf).sqrt(), user, draws })
}
