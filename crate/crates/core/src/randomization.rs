//! Rank-one extraction from the relaxed optimum by Gaussian randomization,
//! the associated worst-case gap bound and empirical tail checks.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};
use crate::problem::ProblemData;
use crate::rng::{self, Purpose};
use crate::sdr::SdrSolution;

/// Eigenvalues below this fraction of `λ_max` are clipped before sampling.
pub const SAMPLING_CLIP: f64 = 1e-12;

/// Rank-one (BF-AF) design.
#[derive(Debug, Clone, Serialize)]
pub struct BfSolution {
    #[serde(skip)]
    pub w_hat: CVec,
    /// `θ = min_sinr(ŵŵᴴ)`.
    pub achieved_sinr: f64,
    /// `ln(1 + θ)`.
    pub bf_rate: f64,
    /// Number of randomizations evaluated; 0 when `W*` was already rank one.
    pub num_randomizations: usize,
    /// Index of the winning draw (0-based); 0 for the rank-one shortcut.
    pub winning_index: usize,
}

/// Factor `F` (n × r) with `F Fᴴ = W` after clipping eigenvalues below
/// `SAMPLING_CLIP · λ_max`.
pub fn sampling_factor(w: &CMat) -> CMat {
    let eig = linalg::eigh(w);
    let n = w.nrows();
    let lmax = eig.values.last().copied().unwrap_or(0.0);
    if !(lmax > 0.0) {
        return CMat::zeros(n, 0);
    }
    let keep: Vec<usize> = (0..n).rev().filter(|&j| eig.values[j] > SAMPLING_CLIP * lmax).collect();
    let mut f = CMat::zeros(n, keep.len());
    for (c, &j) in keep.iter().enumerate() {
        let s = eig.values[j].sqrt();
        for i in 0..n {
            f[(i, c)] = eig.vectors[(i, j)] * s;
        }
    }
    f
}

/// One draw `ξ ~ CN(0, F Fᴴ)`.
pub fn draw<R: rand::Rng + ?Sized>(factor: &CMat, rng: &mut R) -> CVec {
    let z = rng::complex_normal_vector(rng, factor.ncols());
    factor * z
}

/// Largest scaling `t` such that `t² ξᴴQ_sξ ≤ b_s` for every constraint;
/// constraints with `ξᴴQ_sξ = 0` are skipped. `None` if every ratio is
/// infinite.
pub fn budget_scale(problem: &ProblemData, xi: &CVec) -> Option<f64> {
    let t2 = problem
        .constraints
        .iter()
        .filter_map(|c| {
            let p = c.matrix.quad(xi);
            (p > 0.0).then(|| c.budget / p)
        })
        .fold(f64::INFINITY, f64::min);
    t2.is_finite().then(|| t2.sqrt())
}

fn scale_to_budget(problem: &ProblemData, xi: &CVec) -> CVec {
    match budget_scale(problem, xi) {
        Some(t) => xi * num_complex::Complex64::new(t, 0.0),
        None => xi.clone(),
    }
}

/// `ln(1 + min_sinr(w wᴴ))`.
pub fn bf_rate(w: &CVec, problem: &ProblemData) -> Result<f64> {
    Ok(problem.min_sinr_vec(w)?.max(0.0).ln_1p())
}

/// Gaussian randomization on the relaxed optimum: `n` draws `ξ ~ CN(0, W*)`,
/// each scaled onto the tightest power constraint; the draw with the largest
/// minimum SINR wins. A rank-one `W*` is returned directly.
pub fn gaussian_randomize(sdr: &SdrSolution, problem: &ProblemData, n: usize, seed: u64) -> Result<BfSolution> {
    randomize_matrix(&sdr.w_star, sdr.rank, problem, n, seed)
}

/// As [`gaussian_randomize`] for an explicit PSD matrix `w` of known numerical rank.
pub fn randomize_matrix(w: &CMat, rank: usize, problem: &ProblemData, n: usize, seed: u64) -> Result<BfSolution> {
    if n == 0 {
        return Err(Error::Domain("number of randomizations must be at least 1".into()));
    }
    if w.nrows() != problem.dim || w.ncols() != problem.dim {
        return Err(Error::DimensionMismatch {
            field: "w_star",
            detail: format!("expected {0}×{0}, got {1}×{2}", problem.dim, w.nrows(), w.ncols()),
        });
    }
    let finish = |w_hat: CVec, count: usize, index: usize| -> Result<BfSolution> {
        let w_hat = linalg::normalize_phase(&w_hat);
        let theta = problem.min_sinr_vec(&w_hat)?.max(0.0);
        Ok(BfSolution { w_hat, achieved_sinr: theta, bf_rate: theta.ln_1p(), num_randomizations: count, winning_index: index })
    };
    if rank == 0 {
        return finish(CVec::zeros(problem.dim), 0, 0);
    }
    if rank == 1 {
        let eig = linalg::eigh(w);
        let j = problem.dim - 1;
        let v = eig.vectors.column(j).into_owned() * num_complex::Complex64::new(eig.values[j].max(0.0).sqrt(), 0.0);
        return finish(scale_to_budget(problem, &v), 0, 0);
    }

    let factor = sampling_factor(w);
    let (index, _, best) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, Purpose::Randomization, &[i as u64]);
            let xi = scale_to_budget(problem, &draw(&factor, &mut rng));
            let theta = problem.min_sinr_vec(&xi).unwrap_or(0.0);
            (i, theta, xi)
        })
        .reduce_with(|a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a })
        .expect("n ≥ 1");
    finish(best, n, index)
}

/// Worst-case randomization gap `ln M + ln(ln(3(L+1)) + 1/6) + ln 48` in nats.
pub fn theorem1_gap_bound(num_users: usize, num_relay_antennas: usize) -> Result<f64> {
    if num_users < 1 {
        return Err(Error::Domain(format!("number of users must be at least 1, got {num_users}")));
    }
    if num_relay_antennas < 2 {
        return Err(Error::Domain(format!("the bound assumes L ≥ 2, got L = {num_relay_antennas}")));
    }
    let l = num_relay_antennas as f64;
    Ok((num_users as f64).ln() + ((3.0 * (l + 1.0)).ln() + 1.0 / 6.0).ln() + 48f64.ln())
}

/// Empirical probability of a tail event against its analytic bound.
#[derive(Debug, Clone, Serialize)]
pub struct TailCheck {
    pub label: String,
    pub empirical: f64,
    pub bound: f64,
    /// Binomial standard error of `empirical`.
    pub std_err: f64,
    pub draws: usize,
}

impl TailCheck {
    fn new(label: String, hits: usize, draws: usize, bound: f64) -> Self {
        let p = hits as f64 / draws as f64;
        Self { label, empirical: p, bound, std_err: (p * (1.0 - p) / draws as f64).sqrt(), draws }
    }

    /// `empirical ≤ bound + 3σ̂`.
    pub fn passes(&self) -> bool {
        self.empirical <= self.bound + 3.0 * self.std_err
    }

    /// `bound + 3σ̂ − empirical`.
    pub fn margin(&self) -> f64 {
        self.bound + 3.0 * self.std_err - self.empirical
    }
}

/// Draws `Ŵ = ξξᴴ`, `ξ ~ CN(0, W*)`, and counts for each user the event
/// `SINR(Ŵ) ≤ β · SINR(W*)` (bound `3β / (1 − 2β)`), and for each power
/// constraint the event `Q_s • Ŵ ≥ ρ Q_s • W*` (bound `exp(−(ρ − 1)/6)`).
pub fn tail_checks(
    problem: &ProblemData,
    w_star: &CMat,
    beta: f64,
    rho: f64,
    draws: usize,
    seed: u64,
) -> Result<(Vec<TailCheck>, Vec<TailCheck>)> {
    if !(beta > 0.0 && beta < 0.5) {
        return Err(Error::Domain(format!("beta must lie in (0, 1/2), got {beta}")));
    }
    if !(rho > 1.0) {
        return Err(Error::Domain(format!("rho must exceed 1, got {rho}")));
    }
    if draws == 0 {
        return Err(Error::Domain("at least one draw is required".into()));
    }
    let users = problem.num_users();
    let sinr_star: Vec<f64> = (0..users).map(|u| problem.sinr(w_star, u)).collect::<Result<_>>()?;
    let power_star: Vec<f64> = problem.constraints.iter().map(|c| c.matrix.inner(w_star)).collect();
    let factor = sampling_factor(w_star);
    const CHUNK: usize = 1000;
    let chunks = draws.div_ceil(CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::stream(seed, Purpose::Verification, &[c as u64]);
            let mut e = vec![0usize; users];
            let mut f = vec![0usize; power_star.len()];
            for _ in 0..CHUNK.min(draws - c * CHUNK) {
                let xi = draw(&factor, &mut rng);
                for u in 0..users {
                    if problem.sinr_vec(&xi, u) <= beta * sinr_star[u] {
                        e[u] += 1;
                    }
                }
                for (s, con) in problem.constraints.iter().enumerate() {
                    if con.matrix.quad(&xi) >= rho * power_star[s] {
                        f[s] += 1;
                    }
                }
            }
            (e, f)
        })
        .reduce(
            || (vec![0; users], vec![0; power_star.len()]),
            |mut a, b| {
                a.0.iter_mut().zip(&b.0).for_each(|(x, y)| *x += y);
                a.1.iter_mut().zip(&b.1).for_each(|(x, y)| *x += y);
                a
            },
        );
    let sinr_tail_bound = 3.0 * beta / (1.0 - 2.0 * beta);
    let power_tail_bound = (-(rho - 1.0) / 6.0).exp();
    let e = counts
        .0
        .iter()
        .enumerate()
        .map(|(u, &h)| TailCheck::new(format!("sinr_tail_user_{u}"), h, draws, sinr_tail_bound))
        .collect();
    let f = counts
        .1
        .iter()
        .enumerate()
        .map(|(s, &h)| {
            // a constraint with zero power at W* sees zero power almost surely
            let bound = if power_star[s] > 0.0 { power_tail_bound } else { 0.0 };
            TailCheck::new(format!("power_tail_constraint_{s}"), h, draws, bound)
        })
        .collect();
    Ok((e, f))
}
