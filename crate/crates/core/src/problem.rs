//! Assembly of the Hermitian data matrices of the max-min-fair design problem
//! and evaluation of SINRs and powers for candidate designs.
//!
//! For a MIMO relay the weight vector is `w = vec(V)` (column-major, length
//! `L²`) and
//!
//! * `A_{k,i} = P_k (f_k* ⊗ g_{k,i})(f_k* ⊗ g_{k,i})ᴴ / σ_{k,i}²`
//! * `C_{k,i} = Σ_{m≠k} P_m (f_m* ⊗ g_{k,i})(·)ᴴ / σ_{k,i}² + Σ_L ⊗ g_{k,i} g_{k,i}ᴴ / σ_{k,i}²`
//! * `D_0 = R* ⊗ I_L`, `D_ℓ = R* ⊗ e_ℓ e_ℓᴴ` with `R = Σ_j P_j f_j f_jᴴ + Σ_L`.
//!
//! For distributed relays (`V` diagonal) the Hadamard forms
//! `Ā_{k,i} = P_k (f_k ⊙ g_{k,i}*)(·)ᴴ / σ²` are used. With that convention the
//! weight vector `v` maps to the relay matrix `V = Diag(v*)`; see
//! [`relay_matrix`].

use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, ZERO};
use crate::scenario::{ChannelRealization, NetworkConfig, Topology};

/// A Hermitian PSD matrix together with an explicit factor `F` (n × r) such
/// that `M = F Fᴴ`; quadratic forms go through the factor.
#[derive(Debug, Clone)]
pub struct HermitianPsd {
    pub dense: CMat,
    pub factor: CMat,
}

impl HermitianPsd {
    pub fn from_factor(factor: CMat) -> Self {
        let dense = &factor * factor.adjoint();
        Self { dense, factor }
    }

    fn from_columns(n: usize, cols: &[CVec]) -> Self {
        let mut f = CMat::zeros(n, cols.len());
        for (j, c) in cols.iter().enumerate() {
            f.set_column(j, c);
        }
        Self::from_factor(f)
    }

    /// Wraps a dense PSD matrix, deriving the factor by eigen-decomposition.
    pub fn from_dense(dense: CMat) -> Result<Self> {
        let (rows, _) = linalg::psd_factor(&dense, 1e-10)?;
        Ok(Self {
            factor: rows.adjoint(),
            dense: linalg::hermitize(&dense),
        })
    }

    pub fn dim(&self) -> usize {
        self.dense.nrows()
    }

    /// `xᴴ M x`.
    pub fn quad(&self, x: &CVec) -> f64 {
        let mut acc = 0.0;
        for col in self.factor.column_iter() {
            let mut s = ZERO;
            for (c, xi) in col.iter().zip(x.iter()) {
                s += c.conj() * xi;
            }
            acc += s.norm_sqr();
        }
        acc
    }

    /// `M • W`.
    pub fn inner(&self, w: &CMat) -> f64 {
        linalg::inner(&self.dense, w)
    }
}

/// One power-type constraint `Q • W ≤ budget`.
#[derive(Debug, Clone)]
pub struct PowerConstraint {
    pub matrix: HermitianPsd,
    pub budget: f64,
}

/// Assembled problem data for one channel realization.
#[derive(Debug, Clone)]
pub struct ProblemData {
    pub topology: Topology,
    pub dim: usize,
    pub num_relay_antennas: usize,
    pub signal: Vec<HermitianPsd>,
    pub interference: Vec<HermitianPsd>,
    /// In MIMO mode entry 0 is `(D_0, P̄_0)`, followed by `(D_ℓ, P̄_ℓ)` when
    /// per-antenna budgets are configured, then any extra constraints.
    pub constraints: Vec<PowerConstraint>,
    /// `(group, index-within-group)` for each flat user index.
    pub users: Vec<(usize, usize)>,
    pub relay_input_cov: CMat,
}

fn relay_input_cov(config: &NetworkConfig, ch: &ChannelRealization) -> CMat {
    let l = config.num_relay_antennas;
    let mut r = CMat::zeros(l, l);
    for (f, &p) in ch.f.iter().zip(&config.tx_powers) {
        r += linalg::outer(f) * Complex64::new(p, 0.0);
    }
    for (ell, &s) in config.relay_noise_vars.iter().enumerate() {
        r[(ell, ell)] += Complex64::new(s, 0.0);
    }
    r
}

fn unit(l: usize, ell: usize) -> CVec {
    let mut e = CVec::zeros(l);
    e[ell] = linalg::ONE;
    e
}

fn kron_vec(a: &CVec, b: &CVec) -> CVec {
    let mut out = CVec::zeros(a.len() * b.len());
    for (j, aj) in a.iter().enumerate() {
        for (i, bi) in b.iter().enumerate() {
            out[j * b.len() + i] = aj * bi;
        }
    }
    out
}

fn check_extra(extra: &[(CMat, f64)], n: usize, offset: usize) -> Result<Vec<PowerConstraint>> {
    extra
        .iter()
        .enumerate()
        .map(|(s, (q, b))| {
            if q.nrows() != n || q.ncols() != n {
                return Err(Error::DimensionMismatch {
                    field: "extra_constraints",
                    detail: format!("constraint {s} is {}x{}, expected {n}x{n}", q.nrows(), q.ncols()),
                });
            }
            if !(*b > 0.0) {
                return Err(Error::NonPositiveParameter { field: "extra_constraints", value: *b });
            }
            let herm_err = (q - q.adjoint()).norm();
            if herm_err > 1e-10 * q.norm().max(1.0) || !linalg::is_psd(q, 1e-10) {
                return Err(Error::NonPsdConstraint { index: offset + s });
            }
            let matrix = HermitianPsd::from_dense(q.clone())
                .map_err(|_| Error::NonPsdConstraint { index: offset + s })?;
            Ok(PowerConstraint { matrix, budget: *b })
        })
        .collect()
}

/// Builds the MIMO-relay problem (`n = L²`).
pub fn build_mimo_problem(config: &NetworkConfig, channels: &ChannelRealization) -> Result<ProblemData> {
    build_mimo_problem_with(config, channels, &[])
}

/// MIMO-relay problem with additional `wᴴ Q w ≤ b` constraints appended.
pub fn build_mimo_problem_with(
    config: &NetworkConfig,
    channels: &ChannelRealization,
    extra_constraints: &[(CMat, f64)],
) -> Result<ProblemData> {
    config.validate()?;
    if config.topology != Topology::Mimo {
        return Err(Error::TopologyMismatch { expected: "MIMO", actual: config.topology.name() });
    }
    channels.check_dims(config)?;
    let l = config.num_relay_antennas;
    let n = l * l;
    let users = config.user_pairs();

    let mut signal = Vec::with_capacity(users.len());
    let mut interference = Vec::with_capacity(users.len());
    for (u, &(k, _)) in users.iter().enumerate() {
        let g = &channels.g[u];
        let inv_noise = 1.0 / config.user_noise_vars[u];
        let a = kron_vec(&channels.f[k].conjugate(), g) * Complex64::new((config.tx_powers[k] * inv_noise).sqrt(), 0.0);
        signal.push(HermitianPsd::from_columns(n, &[a]));

        let mut cols = Vec::with_capacity(config.num_groups - 1 + l);
        for m in (0..config.num_groups).filter(|&m| m != k) {
            let scale = (config.tx_powers[m] * inv_noise).sqrt();
            cols.push(kron_vec(&channels.f[m].conjugate(), g) * Complex64::new(scale, 0.0));
        }
        for ell in 0..l {
            let scale = (config.relay_noise_vars[ell] * inv_noise).sqrt();
            cols.push(kron_vec(&unit(l, ell), g) * Complex64::new(scale, 0.0));
        }
        interference.push(HermitianPsd::from_columns(n, &cols));
    }

    // R* = B Bᴴ with B = [√P_j f_j*, σ_ℓ e_ℓ]
    let mut b_cols: Vec<CVec> = channels
        .f
        .iter()
        .zip(&config.tx_powers)
        .map(|(f, &p)| f.conjugate() * Complex64::new(p.sqrt(), 0.0))
        .collect();
    b_cols.extend(
        config
            .relay_noise_vars
            .iter()
            .enumerate()
            .map(|(ell, &s)| unit(l, ell) * Complex64::new(s.sqrt(), 0.0)),
    );

    let total_cols: Vec<CVec> = b_cols
        .iter()
        .flat_map(|b| (0..l).map(move |ell| kron_vec(b, &unit(l, ell))))
        .collect();
    let mut constraints = vec![PowerConstraint {
        matrix: HermitianPsd::from_columns(n, &total_cols),
        budget: config.total_power_budget,
    }];
    if let Some(budgets) = &config.per_antenna_budgets {
        for (ell, &budget) in budgets.iter().enumerate() {
            let e = unit(l, ell);
            let cols: Vec<CVec> = b_cols.iter().map(|b| kron_vec(b, &e)).collect();
            constraints.push(PowerConstraint { matrix: HermitianPsd::from_columns(n, &cols), budget });
        }
    }
    let offset = constraints.len();
    constraints.extend(check_extra(extra_constraints, n, offset)?);

    Ok(ProblemData {
        topology: Topology::Mimo,
        dim: n,
        num_relay_antennas: l,
        signal,
        interference,
        constraints,
        users,
        relay_input_cov: relay_input_cov(config, channels),
    })
}

/// Builds the distributed-relay problem (`n = L`); the constraint list is
/// exactly `extra_constraints`.
pub fn build_distributed_problem(
    config: &NetworkConfig,
    channels: &ChannelRealization,
    extra_constraints: &[(CMat, f64)],
) -> Result<ProblemData> {
    config.validate()?;
    if config.topology != Topology::Distributed {
        return Err(Error::TopologyMismatch { expected: "Distributed", actual: config.topology.name() });
    }
    channels.check_dims(config)?;
    let l = config.num_relay_antennas;
    let users = config.user_pairs();
    let hadamard = |f: &CVec, g: &CVec| CVec::from_fn(l, |i, _| f[i] * g[i].conj());

    let mut signal = Vec::with_capacity(users.len());
    let mut interference = Vec::with_capacity(users.len());
    for (u, &(k, _)) in users.iter().enumerate() {
        let g = &channels.g[u];
        let inv_noise = 1.0 / config.user_noise_vars[u];
        let a = hadamard(&channels.f[k], g) * Complex64::new((config.tx_powers[k] * inv_noise).sqrt(), 0.0);
        signal.push(HermitianPsd::from_columns(l, &[a]));

        let mut cols = Vec::new();
        for m in (0..config.num_groups).filter(|&m| m != k) {
            let scale = (config.tx_powers[m] * inv_noise).sqrt();
            cols.push(hadamard(&channels.f[m], g) * Complex64::new(scale, 0.0));
        }
        for ell in 0..l {
            let scale = (g[ell].norm_sqr() * config.relay_noise_vars[ell] * inv_noise).sqrt();
            cols.push(unit(l, ell) * Complex64::new(scale, 0.0));
        }
        interference.push(HermitianPsd::from_columns(l, &cols));
    }

    Ok(ProblemData {
        topology: Topology::Distributed,
        dim: l,
        num_relay_antennas: l,
        signal,
        interference,
        constraints: check_extra(extra_constraints, l, 0)?,
        users,
        relay_input_cov: relay_input_cov(config, channels),
    })
}

/// Relay weighting matrix for a weight vector: `unvec(w)` for a MIMO relay,
/// `Diag(w*)` for distributed relays.
pub fn relay_matrix(problem: &ProblemData, w: &CVec) -> CMat {
    let l = problem.num_relay_antennas;
    match problem.topology {
        Topology::Mimo => linalg::unvec(w, l),
        Topology::Distributed => CMat::from_diagonal(&w.conjugate()),
    }
}

/// SINR of user `(k, i)` evaluated directly from the relay matrix `V` and
/// the channels, without vectorization.
pub fn sinr_direct(
    config: &NetworkConfig,
    channels: &ChannelRealization,
    relay: &CMat,
    user: usize,
) -> f64 {
    let (k, _) = config.user_pairs()[user];
    let g = &channels.g[user];
    let gv = g.adjoint() * relay;
    let signal = config.tx_powers[k] * (&gv * &channels.f[k])[(0, 0)].norm_sqr();
    let mut denom = config.user_noise_vars[user];
    for m in (0..config.num_groups).filter(|&m| m != k) {
        denom += config.tx_powers[m] * (&gv * &channels.f[m])[(0, 0)].norm_sqr();
    }
    for (ell, &s) in config.relay_noise_vars.iter().enumerate() {
        denom += s * gv[(0, ell)].norm_sqr();
    }
    signal / denom
}

impl ProblemData {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    /// Flat index of user `i` in group `k`.
    pub fn user_index(&self, k: usize, i: usize) -> Option<usize> {
        self.users.iter().position(|&p| p == (k, i))
    }

    fn check_dim(&self, rows: usize, cols: usize) -> Result<()> {
        if rows != self.dim || cols != self.dim {
            return Err(Error::DimensionMismatch {
                field: "W",
                detail: format!("expected {0}x{0}, got {rows}x{cols}", self.dim),
            });
        }
        Ok(())
    }

    /// `(A_u • W) / (C_u • W + 1)` for flat user index `u`.
    pub fn sinr(&self, w: &CMat, user: usize) -> Result<f64> {
        self.check_dim(w.nrows(), w.ncols())?;
        if user >= self.num_users() {
            return Err(Error::IndexOutOfRange { index: user, len: self.num_users() });
        }
        Ok(self.sinr_unchecked(w, user))
    }

    fn sinr_unchecked(&self, w: &CMat, user: usize) -> f64 {
        let num = self.signal[user].inner(w).max(0.0);
        let den = self.interference[user].inner(w).max(0.0) + 1.0;
        num / den
    }

    /// Minimum SINR over all users.
    pub fn min_sinr(&self, w: &CMat) -> Result<f64> {
        self.check_dim(w.nrows(), w.ncols())?;
        Ok((0..self.num_users())
            .map(|u| self.sinr_unchecked(w, u))
            .fold(f64::INFINITY, f64::min))
    }

    /// Per-user SINR of the rank-one design `w wᴴ`.
    pub fn sinr_vec(&self, w: &CVec, user: usize) -> f64 {
        self.signal[user].quad(w) / (self.interference[user].quad(w) + 1.0)
    }

    /// Minimum SINR of the rank-one design `w wᴴ`.
    pub fn min_sinr_vec(&self, w: &CVec) -> Result<f64> {
        if w.len() != self.dim {
            return Err(Error::DimensionMismatch {
                field: "w",
                detail: format!("expected length {}, got {}", self.dim, w.len()),
            });
        }
        Ok((0..self.num_users())
            .map(|u| self.sinr_vec(w, u))
            .fold(f64::INFINITY, f64::min))
    }

    /// `Q_s • W`.
    pub fn power(&self, w: &CMat, s: usize) -> Result<f64> {
        self.check_dim(w.nrows(), w.ncols())?;
        let c = self
            .constraints
            .get(s)
            .ok_or(Error::IndexOutOfRange { index: s, len: self.constraints.len() })?;
        Ok(c.matrix.inner(w))
    }

    /// Largest `c` such that `c·W` satisfies every power constraint.
    pub fn max_feasible_scale(&self, w: &CMat) -> f64 {
        self.constraints
            .iter()
            .map(|c| {
                let p = c.matrix.inner(w);
                if p > 0.0 { c.budget / p } else { f64::INFINITY }
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Upper bound on `tr(W)` implied by the positive definite constraints,
    /// `min_s b_s / λ_min(Q_s)`; `None` if no constraint is positive definite.
    pub fn trace_bound(&self) -> Option<f64> {
        self.constraints
            .iter()
            .filter_map(|c| {
                let lmin = linalg::lambda_min(&c.matrix.dense);
                let lmax = linalg::lambda_max(&c.matrix.dense);
                (lmin > 1e-12 * lmax).then(|| c.budget / lmin)
            })
            .reduce(f64::min)
    }

    /// Writes every data matrix as plain text: a header line per matrix
    /// (`A <u>`, `C <u>`, `Q <s> <budget>`) followed by `dim` rows of
    /// `re im` pairs in row-major order.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "dim {} users {} constraints {}", self.dim, self.num_users(), self.constraints.len())?;
        let dump = |out: &mut W, m: &CMat| -> std::io::Result<()> {
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols())
                    .map(|j| format!("{:.17e} {:.17e}", m[(i, j)].re, m[(i, j)].im))
                    .collect();
                writeln!(out, "{}", row.join(" "))?;
            }
            Ok(())
        };
        for u in 0..self.num_users() {
            writeln!(out, "A {u}")?;
            dump(&mut out, &self.signal[u].dense)?;
            writeln!(out, "C {u}")?;
            dump(&mut out, &self.interference[u].dense)?;
        }
        for (s, c) in self.constraints.iter().enumerate() {
            writeln!(out, "Q {s} {:.17e}", c.budget)?;
            dump(&mut out, &c.matrix.dense)?;
        }
        Ok(())
    }
}

/// Free-function forms of the evaluation operations.
pub fn sinr(w: &CMat, problem: &ProblemData, user: usize) -> Result<f64> {
    problem.sinr(w, user)
}

pub fn min_sinr(w: &CMat, problem: &ProblemData) -> Result<f64> {
    problem.min_sinr(w)
}

pub fn power(w: &CMat, problem: &ProblemData, s: usize) -> Result<f64> {
    problem.power(w, s)
}
