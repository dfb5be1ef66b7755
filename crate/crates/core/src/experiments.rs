//! Monte Carlo rate sweeps over channel realizations.

use std::io::Write;
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::problem::{build_distributed_problem, build_mimo_problem, ProblemData};
use crate::randomization::gaussian_randomize;
use crate::rng::{derive_seed, Purpose};
use crate::sbf::{sbf_rate, SbfKind, SbfScheme};
use crate::scenario::{db_to_linear, generate_channels, ChannelRealization, NetworkConfig, Topology};
use crate::sdr::{solve_sdr_with, GammaTolerance, SdrOptions, DEFAULT_RANK_TOL};

/// Quantity varied along a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVariable {
    /// `P̄_0` in dB.
    TotalPower,
    /// Common per-antenna budget in dB, applied to every antenna.
    PerAntennaPower,
    /// Total number of users, split as evenly as possible over the groups.
    NumUsers,
    /// Per-antenna constraints kept on the first `c` antennas; the budget
    /// comes from `base_config.per_antenna_budgets`.
    NumPerAntennaConstraints,
}

fn default_draws() -> usize {
    100
}
fn default_randomizations() -> usize {
    1000
}
fn default_tolerance() -> GammaTolerance {
    GammaTolerance::Relative(1e-5)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base_config: NetworkConfig,
    pub sweep_variable: SweepVariable,
    pub sweep_values: Vec<f64>,
    #[serde(default = "default_draws")]
    pub num_channel_draws: usize,
    #[serde(default = "default_randomizations")]
    pub num_randomizations: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Worker threads; `None` uses the global rayon pool.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default = "default_tolerance")]
    pub sdr_tolerance: GammaTolerance,
}

impl SweepSpec {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.base_config.validate()?;
        if self.sweep_values.is_empty() {
            return Err(Error::InvalidSweep("sweep_values is empty".into()));
        }
        if self.sweep_values.windows(2).any(|w| !(w[1] > w[0])) || self.sweep_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSweep("sweep_values must be finite and strictly increasing".into()));
        }
        if self.num_channel_draws == 0 {
            return Err(Error::InvalidSweep("num_channel_draws must be at least 1".into()));
        }
        if self.num_randomizations == 0 {
            return Err(Error::InvalidSweep("num_randomizations must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidSweep("threads must be at least 1".into()));
        }
        for &v in &self.sweep_values {
            self.config_at(v)?;
        }
        Ok(())
    }

    /// Network configuration at one sweep value.
    pub fn config_at(&self, value: f64) -> Result<NetworkConfig> {
        let mut cfg = self.base_config.clone();
        let l = cfg.num_relay_antennas;
        let count = |v: f64, what: &str| -> Result<usize> {
            if v < 0.0 || v.fract() != 0.0 {
                return Err(Error::InvalidSweep(format!("{what} must be a nonnegative integer, got {v}")));
            }
            Ok(v as usize)
        };
        match self.sweep_variable {
            SweepVariable::TotalPower => cfg.total_power_budget = db_to_linear(value),
            SweepVariable::PerAntennaPower => cfg.per_antenna_budgets = Some(vec![db_to_linear(value); l]),
            SweepVariable::NumUsers => {
                let m = count(value, "number of users")?;
                let g = cfg.num_groups;
                if m < g {
                    return Err(Error::InvalidSweep(format!("{m} users cannot fill {g} groups")));
                }
                cfg.group_sizes = (0..g).map(|k| m / g + usize::from(k < m % g)).collect();
                let noise = cfg.user_noise_vars.first().copied().unwrap_or(1.0);
                cfg.user_noise_vars = vec![noise; m];
            }
            SweepVariable::NumPerAntennaConstraints => {
                let c = count(value, "number of per-antenna constraints")?;
                if c > l {
                    return Err(Error::InvalidSweep(format!("{c} per-antenna constraints exceed L = {l}")));
                }
                if cfg.per_antenna_budgets.is_none() {
                    return Err(Error::InvalidSweep("base_config.per_antenna_budgets is required".into()));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Number of per-antenna constraints kept at `value` (all when not swept).
    fn active_antennas(&self, value: f64) -> Option<usize> {
        (self.sweep_variable == SweepVariable::NumPerAntennaConstraints).then_some(value as usize)
    }
}

/// Problem data for `config`: the MIMO builder, or for distributed relays the
/// weight-norm constraint `‖v‖² ≤ P̄_0` plus `|v_ℓ|² ≤ P̄_ℓ` when configured.
pub fn build_problem(config: &NetworkConfig, channels: &ChannelRealization) -> Result<ProblemData> {
    match config.topology {
        Topology::Mimo => build_mimo_problem(config, channels),
        Topology::Distributed => {
            let l = config.num_relay_antennas;
            let mut extra = vec![(CMat::identity(l, l), config.total_power_budget)];
            if let Some(b) = &config.per_antenna_budgets {
                for (ell, &budget) in b.iter().enumerate() {
                    let mut e = CMat::zeros(l, l);
                    e[(ell, ell)] = linalg::ONE;
                    extra.push((e, budget));
                }
            }
            build_distributed_problem(config, channels, &extra)
        }
    }
}

/// Keeps the total-power constraint and the first `count` per-antenna ones.
pub fn keep_per_antenna(problem: &mut ProblemData, count: usize) {
    problem.constraints.truncate(1 + count);
}

/// Rates (nats) of all four schemes on one channel realization.
#[derive(Debug, Clone, Serialize)]
pub struct InstanceRates {
    pub sdr: f64,
    pub bf: f64,
    pub sbf_gaussian: f64,
    pub sbf_elliptic: f64,
    pub gamma_star: f64,
    pub rank: usize,
    /// The randomized design beat the relaxed point returned by the search
    /// and replaced it as `W*`.
    pub promoted: bool,
    pub ipm_iterations: usize,
}

/// Solves the relaxation, randomizes and evaluates both stochastic schemes
/// with `Ω = W*`.
pub fn evaluate_instance(problem: &ProblemData, sdr_options: &SdrOptions, randomizations: usize, seed: u64) -> Result<InstanceRates> {
    let mut sdr = solve_sdr_with(problem, sdr_options)?;
    let bf = gaussian_randomize(&sdr, problem, randomizations, seed)?;
    let mut promoted = false;
    if bf.achieved_sinr > sdr.gamma_star {
        // ŵŵᴴ is feasible for the relaxation and certifies a larger value
        sdr.w_star = linalg::outer(&bf.w_hat);
        sdr.gamma_star = bf.achieved_sinr;
        sdr.sdr_rate = bf.bf_rate;
        sdr.rank = 1;
        promoted = true;
    }
    let (g, e) = if sdr.rank == 0 {
        (0.0, 0.0)
    } else {
        let gauss = SbfScheme::new(SbfKind::Gaussian, &sdr.w_star, sdr_options.rank_tol)?;
        let ellip = SbfScheme::new(SbfKind::Elliptic, &sdr.w_star, sdr_options.rank_tol)?;
        (sbf_rate(problem, &gauss)?, sbf_rate(problem, &ellip)?)
    };
    Ok(InstanceRates {
        sdr: sdr.sdr_rate,
        bf: bf.bf_rate,
        sbf_gaussian: g,
        sbf_elliptic: e,
        gamma_star: sdr.gamma_star,
        rank: sdr.rank,
        promoted,
        ipm_iterations: sdr.diagnostics.ipm_iterations,
    })
}

/// Outcome of one `(sweep value, channel draw)` task.
#[derive(Debug, Clone, Serialize)]
pub struct DrawResult {
    pub value_index: usize,
    pub draw: usize,
    pub channel_seed: u64,
    /// `None` when the solver failed on this draw.
    pub rates: Option<InstanceRates>,
    pub error: Option<String>,
}

/// Per-sweep-value averages in bits/s/Hz.
#[derive(Debug, Clone, Serialize)]
pub struct RateRow {
    pub sweep_value: f64,
    pub r_sdr: f64,
    pub r_bf: f64,
    pub r_sbf_gauss: f64,
    pub r_sbf_ellip: f64,
    pub se_sdr: f64,
    pub se_bf: f64,
    pub se_gauss: f64,
    pub se_ellip: f64,
    pub mean_rank: f64,
    pub failed_draws: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    pub draws: Vec<DrawResult>,
}

pub const CSV_HEADER: [&str; 11] = [
    "sweep_value",
    "r_sdr",
    "r_bf",
    "r_sbf_gauss",
    "r_sbf_ellip",
    "se_sdr",
    "se_bf",
    "se_gauss",
    "se_ellip",
    "mean_rank",
    "failed_draws",
];

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

impl RateReport {
    /// Writes the report as CSV with [`CSV_HEADER`].
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            let v = [r.sweep_value, r.r_sdr, r.r_bf, r.r_sbf_gauss, r.r_sbf_ellip, r.se_sdr, r.se_bf, r.se_gauss, r.se_ellip, r.mean_rank];
            let mut rec: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            rec.push(r.failed_draws.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// Successful draws at sweep position `value_index`.
    pub fn rates_at(&self, value_index: usize) -> impl Iterator<Item = &InstanceRates> {
        self.draws.iter().filter(move |d| d.value_index == value_index).filter_map(|d| d.rates.as_ref())
    }
}

/// Channel seed of draw `d`: shared by every sweep value, so all points of a
/// sweep see the same realizations.
pub fn channel_seed(master: u64, draw: usize) -> u64 {
    derive_seed(master, Purpose::Channels, &[draw as u64])
}

/// Randomization seed of task `(value_index, draw)`.
pub fn randomization_seed(master: u64, value_index: usize, draw: usize) -> u64 {
    derive_seed(master, Purpose::Randomization, &[value_index as u64, draw as u64])
}

fn run_task(spec: &SweepSpec, sdr_options: &SdrOptions, value_index: usize, draw: usize) -> DrawResult {
    let value = spec.sweep_values[value_index];
    let seed = channel_seed(spec.master_seed, draw);
    let outcome = (|| -> Result<InstanceRates> {
        let cfg = spec.config_at(value)?;
        let ch = generate_channels(&cfg, seed)?;
        let mut problem = build_problem(&cfg, &ch)?;
        if let Some(c) = spec.active_antennas(value) {
            keep_per_antenna(&mut problem, c);
        }
        evaluate_instance(&problem, sdr_options, spec.num_randomizations, randomization_seed(spec.master_seed, value_index, draw))
    })();
    match outcome {
        Ok(rates) => DrawResult { value_index, draw, channel_seed: seed, rates: Some(rates), error: None },
        Err(e) => {
            warn!("sweep value {value} draw {draw}: {e}");
            DrawResult { value_index, draw, channel_seed: seed, rates: None, error: Some(e.to_string()) }
        }
    }
}

/// Runs every `(sweep value, draw)` pair and averages per sweep value.
/// The result depends only on the spec, not on the thread count.
pub fn run_sweep(spec: &SweepSpec) -> Result<RateReport> {
    spec.validate()?;
    let sdr_options = SdrOptions { tolerance: spec.sdr_tolerance, rank_tol: DEFAULT_RANK_TOL, ..SdrOptions::default() };
    let tasks: Vec<(usize, usize)> = (0..spec.sweep_values.len())
        .flat_map(|v| (0..spec.num_channel_draws).map(move |d| (v, d)))
        .collect();
    let work = || -> Vec<DrawResult> { tasks.par_iter().map(|&(v, d)| run_task(spec, &sdr_options, v, d)).collect() };
    let draws = match spec.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidSweep(format!("cannot start {t} worker threads: {e}")))?
            .install(work),
        None => work(),
    };

    let bits = std::f64::consts::LN_2;
    let rows = spec
        .sweep_values
        .iter()
        .enumerate()
        .map(|(vi, &value)| {
            let ok: Vec<&InstanceRates> = draws.iter().filter(|d| d.value_index == vi).filter_map(|d| d.rates.as_ref()).collect();
            let col = |f: fn(&InstanceRates) -> f64| mean_se(&ok.iter().map(|r| f(r) / bits).collect::<Vec<_>>());
            let (r_sdr, se_sdr) = col(|r| r.sdr);
            let (r_bf, se_bf) = col(|r| r.bf);
            let (r_g, se_g) = col(|r| r.sbf_gaussian);
            let (r_e, se_e) = col(|r| r.sbf_elliptic);
            let mean_rank = mean_se(&ok.iter().map(|r| r.rank as f64).collect::<Vec<_>>()).0;
            let failed = spec.num_channel_draws - ok.len();
            let promoted = ok.iter().filter(|r| r.promoted).count();
            info!("sweep value {value}: {} draws, {failed} failed, {promoted} promoted", ok.len());
            RateRow {
                sweep_value: value,
                r_sdr,
                r_bf,
                r_sbf_gauss: r_g,
                r_sbf_ellip: r_e,
                se_sdr,
                se_bf,
                se_gauss: se_g,
                se_ellip: se_e,
                mean_rank,
                failed_draws: failed,
            }
        })
        .collect();
    Ok(RateReport { rows, draws })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(variable: SweepVariable, values: Vec<f64>) -> SweepSpec {
        SweepSpec {
            base_config: NetworkConfig::uniform(2, 2, 1, 1.0, 0.5, 0.5, 2.0, Some(1.0)),
            sweep_variable: variable,
            sweep_values: values,
            num_channel_draws: 3,
            num_randomizations: 20,
            master_seed: 5,
            threads: None,
            sdr_tolerance: default_tolerance(),
        }
    }

    #[test]
    fn validation() {
        assert!(spec(SweepVariable::TotalPower, vec![]).validate().is_err());
        assert!(spec(SweepVariable::TotalPower, vec![1.0, 1.0]).validate().is_err());
        assert!(spec(SweepVariable::TotalPower, vec![2.0, 1.0]).validate().is_err());
        assert!(spec(SweepVariable::NumUsers, vec![1.5]).validate().is_err());
        assert!(spec(SweepVariable::NumUsers, vec![1.0]).validate().is_err());
        assert!(spec(SweepVariable::NumPerAntennaConstraints, vec![0.0, 3.0]).validate().is_err());
        let mut s = spec(SweepVariable::TotalPower, vec![0.0]);
        s.num_channel_draws = 0;
        assert!(s.validate().is_err());
        assert!(spec(SweepVariable::TotalPower, vec![0.0, 3.0]).validate().is_ok());
    }

    #[test]
    fn sweep_configs() {
        let s = spec(SweepVariable::NumUsers, vec![2.0, 5.0]);
        let c = s.config_at(5.0).unwrap();
        assert_eq!(c.group_sizes, vec![3, 2]);
        assert_eq!(c.user_noise_vars.len(), 5);
        let s = spec(SweepVariable::TotalPower, vec![10.0]);
        assert!((s.config_at(10.0).unwrap().total_power_budget - 10.0).abs() < 1e-12);
        let s = spec(SweepVariable::PerAntennaPower, vec![-10.0]);
        assert_eq!(s.config_at(-10.0).unwrap().per_antenna_budgets.unwrap().len(), 2);
    }

    #[test]
    fn spec_json_defaults() {
        let json = r#"{
            "base_config": {"num_relay_antennas": 2, "num_groups": 1, "group_sizes": [2],
                "tx_powers": [1.0], "relay_noise_vars": [1.0, 1.0], "user_noise_vars": [1.0, 1.0],
                "total_power_budget": 2.0, "topology": "MIMO"},
            "sweep_variable": "TotalPower",
            "sweep_values": [0, 3]
        }"#;
        let s = SweepSpec::from_json_str(json).unwrap();
        assert_eq!(s.num_channel_draws, 100);
        assert_eq!(s.num_randomizations, 1000);
        assert!(SweepSpec::from_json_str(&json.replace("\"TotalPower\"", "\"Nope\"")).is_err());
    }

    #[test]
    fn small_sweep_rows() {
        let s = spec(SweepVariable::NumPerAntennaConstraints, vec![0.0, 1.0, 2.0]);
        let report = run_sweep(&s).unwrap();
        assert_eq!(report.rows.len(), 3);
        assert_eq!(report.draws.len(), 9);
        for row in &report.rows {
            assert_eq!(row.failed_draws, 0);
            for r in [row.r_bf, row.r_sbf_gauss, row.r_sbf_ellip] {
                assert!(r >= 0.0 && r <= row.r_sdr + 1e-9);
            }
        }
        for d in &report.draws {
            let r = d.rates.as_ref().unwrap();
            assert!(r.bf <= r.sdr + 1e-12);
        }
        // more constraints never help
        assert!(report.rows[0].r_sdr >= report.rows[2].r_sdr - 1e-6);
        let csv = report.to_csv_string().unwrap();
        assert!(csv.starts_with(&CSV_HEADER.join(",")));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn distributed_problem_constraints() {
        let cfg = NetworkConfig::uniform(3, 1, 2, 1.0, 0.5, 0.5, 2.0, Some(1.0)).with_topology(Topology::Distributed);
        let p = build_problem(&cfg, &generate_channels(&cfg, 1).unwrap()).unwrap();
        assert_eq!(p.dim, 3);
        assert_eq!(p.constraints.len(), 4);
        assert_eq!(p.constraints[0].budget, 2.0);
    }

    #[test]
    fn constraint_spectra_are_finite() {
        // this realization once produced NaN eigenvalues from the QR solver
        let p0 = crate::scenario::db_to_linear(2.0 + 14.0 * 0.4);
        let cfg = NetworkConfig::uniform(8, 2, 4, 1.0, 0.25, 0.25, p0, Some(0.5 * p0));
        let ch = generate_channels(&cfg, 9014).unwrap();
        let p = build_problem(&cfg, &ch).unwrap();
        for c in &p.constraints {
            let ev = crate::linalg::eigvalsh(&c.matrix.dense);
            assert!(ev.iter().all(|x| x.is_finite()));
            assert!(ev[0] > -1e-12 * ev[ev.len() - 1]);
        }
    }
}
