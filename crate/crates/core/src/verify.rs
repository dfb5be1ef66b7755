//! Self-checks of the rate formulas, bounds and randomization tail events.

use std::io::Write;

use num_rational::Ratio;
use serde::Serialize;

use crate::error::Result;
use crate::experiments::build_problem;
use crate::randomization::{tail_checks, theorem1_gap_bound};
use crate::sbf::{elliptic_density, gap_bound_elliptic, sbf_rate_elliptic, sbf_rate_gaussian, sbf_rate_gaussian_quadrature};
use crate::scenario::{generate_channels, NetworkConfig};
use crate::sdr::solve_sdr_default;
use crate::special::{alternating_binomial_sum, harmonic_exact, Quadrature, EULER_GAMMA};

/// One verification entry. `margin` is positive when the check passes with
/// room to spare, in the units of the checked quantity.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub check_name: String,
    pub passed: bool,
    pub margin: f64,
}

impl CheckResult {
    fn within(name: impl Into<String>, error: f64, tol: f64) -> Self {
        Self { check_name: name.into(), passed: error <= tol, margin: tol - error }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["check_name", "status", "margin"])?;
        for c in &self.checks {
            w.write_record([c.check_name.as_str(), if c.passed { "pass" } else { "fail" }, &c.margin.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Log-spaced SINR grid from 10⁻³ to 10³ with `n` points.
pub fn gamma_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / (n - 1) as f64)).collect()
}

/// `∫₀^r ln(1 + tγ) p(t) dt` for the elliptic density, integrated directly.
pub fn elliptic_rate_by_density(gamma: f64, r: usize) -> f64 {
    if r == 1 {
        return gamma.ln_1p();
    }
    Quadrature::<f64>::with_abs_tol(1e-13)
        .integrate(|t| (t * gamma).ln_1p() * elliptic_density(t, r), 0.0, r as f64)
        .value
}

fn identity_checks(out: &mut Vec<CheckResult>) {
    for n in 1..=20u32 {
        let lhs: Ratio<i128> = alternating_binomial_sum(n);
        let rhs: Ratio<i128> = -harmonic_exact::<Ratio<i128>>(n);
        out.push(CheckResult {
            check_name: format!("binomial_identity_n{n}"),
            passed: lhs == rhs,
            margin: if lhs == rhs { 0.0 } else { -1.0 },
        });
    }
}

fn density_checks(out: &mut Vec<CheckResult>) {
    let q = Quadrature::<f64>::with_abs_tol(1e-13);
    let gauss_mass = q.integrate(|t| (-t).exp(), 0.0, 60.0).value;
    let gauss_mean = q.integrate(|t| t * (-t).exp(), 0.0, 60.0).value;
    out.push(CheckResult::within("gaussian_density_mass", (gauss_mass - 1.0).abs(), 1e-10));
    out.push(CheckResult::within("gaussian_density_mean", (gauss_mean - 1.0).abs(), 1e-10));
    let (mut mass_err, mut mean_err) = (0.0f64, 0.0f64);
    for r in 2..=12 {
        let rf = r as f64;
        mass_err = mass_err.max((q.integrate(|t| elliptic_density(t, r), 0.0, rf).value - 1.0).abs());
        mean_err = mean_err.max((q.integrate(|t| t * elliptic_density(t, r), 0.0, rf).value - 1.0).abs());
    }
    out.push(CheckResult::within("elliptic_density_mass", mass_err, 1e-10));
    out.push(CheckResult::within("elliptic_density_mean", mean_err, 1e-10));
}

fn rate_checks(out: &mut Vec<CheckResult>) {
    let mut worst = 0.0f64;
    for &g in &gamma_grid(20) {
        for r in 1..=12 {
            let closed = sbf_rate_elliptic(g, r).expect("valid arguments");
            worst = worst.max((closed - elliptic_rate_by_density(g, r)).abs());
        }
    }
    out.push(CheckResult::within("elliptic_closed_form_vs_quadrature", worst, 1e-8));

    let g1 = sbf_rate_gaussian(1.0f64);
    let q1 = sbf_rate_gaussian_quadrature(1.0).value;
    out.push(CheckResult::within("gaussian_rate_at_1_vs_quadrature", (g1 - q1).abs(), 1e-10));
    out.push(CheckResult::within("gaussian_rate_at_1_value", (g1 - 0.596347).abs(), 1e-6));

    let mut gauss_worst = 0.0f64;
    for &g in &gamma_grid(20) {
        gauss_worst = gauss_worst.max((sbf_rate_gaussian(g) - sbf_rate_gaussian_quadrature(g).value).abs());
    }
    out.push(CheckResult::within("gaussian_closed_form_vs_quadrature", gauss_worst, 1e-10));

    let big = 1e8f64;
    let gap = big.ln_1p() - sbf_rate_gaussian(big);
    out.push(CheckResult::within("gaussian_gap_limit", (gap - EULER_GAMMA).abs(), 1e-6));

    // ordering and monotone Gaussian gap on a grid
    let grid = gamma_grid(40);
    let mut order_margin = f64::INFINITY;
    let mut prev_gap = 0.0;
    let mut mono_margin = f64::INFINITY;
    for &g in &grid {
        let full = g.ln_1p();
        let gs = sbf_rate_gaussian(g);
        for r in 2..=16 {
            let e = sbf_rate_elliptic(g, r).expect("valid arguments");
            order_margin = order_margin.min(e - gs).min(gs).min(full - e);
        }
        let gap = full - gs;
        mono_margin = mono_margin.min(gap - prev_gap);
        prev_gap = gap;
    }
    out.push(CheckResult { check_name: "rate_ordering".into(), passed: order_margin > 0.0, margin: order_margin });
    out.push(CheckResult { check_name: "gaussian_gap_monotone".into(), passed: mono_margin >= -1e-12, margin: mono_margin });
}

fn bound_checks(out: &mut Vec<CheckResult>) {
    let mut prev = -1.0;
    let mut margin = f64::INFINITY;
    for r in 1..=1000 {
        let b: f64 = gap_bound_elliptic(r).expect("r ≥ 1");
        margin = margin.min(b - prev).min(0.5772157 - b);
        prev = b;
    }
    out.push(CheckResult { check_name: "elliptic_gap_bound_increasing_below_limit".into(), passed: margin > 0.0, margin });
    let r2: f64 = gap_bound_elliptic(2).expect("r ≥ 1");
    out.push(CheckResult::within("elliptic_gap_bound_r2", (r2 - (1.0 - 2f64.ln())).abs(), 1e-12));

    // large-SINR elliptic gap approaches H_{r−1} − ln r
    let mut worst = 0.0f64;
    for r in 1..=16 {
        let g = 1e10f64;
        let gap = g.ln_1p() - sbf_rate_elliptic(g, r).expect("valid arguments");
        worst = worst.max((gap - gap_bound_elliptic::<f64>(r).expect("r ≥ 1")).abs());
    }
    out.push(CheckResult::within("elliptic_gap_limit", worst, 1e-8));

    let t1 = theorem1_gap_bound(1, 2).expect("valid");
    let t2 = theorem1_gap_bound(16, 8).expect("valid");
    let expect1 = (9f64.ln() + 1.0 / 6.0).ln() + 48f64.ln();
    let expect2 = 16f64.ln() + (27f64.ln() + 1.0 / 6.0).ln() + 48f64.ln();
    out.push(CheckResult::within("randomization_gap_bound_values", (t1 - expect1).abs().max((t2 - expect2).abs()), 1e-12));
}

/// Tail-event frequencies of Gaussian randomization on one random instance
/// (L = 8, G = 2, M = 16, total plus per-antenna budgets).
fn tail_event_checks(seed: u64, draws: usize, out: &mut Vec<CheckResult>) -> Result<()> {
    let cfg = NetworkConfig::uniform(8, 2, 8, 1.0, 0.25, 0.25, 4.0, Some(0.6));
    let ch = generate_channels(&cfg, seed)?;
    let problem = build_problem(&cfg, &ch)?;
    let sdr = solve_sdr_default(&problem)?;
    let m = problem.num_users() as f64;
    let l = cfg.num_relay_antennas as f64;
    let beta = 1.0 / (8.0 * m);
    let rho = 6.0 * (3.0 * (l + 1.0)).ln() + 1.0;
    let (users, powers) = tail_checks(&problem, &sdr.w_star, beta, rho, draws, seed)?;
    for c in users.iter().chain(&powers) {
        out.push(CheckResult { check_name: c.label.clone(), passed: c.passes(), margin: c.margin() });
    }
    Ok(())
}

/// Runs every check. Numerical failures in the tail-event instance are
/// reported as a failed entry rather than an error.
pub fn verify_suite(seed: u64) -> VerifyReport {
    let mut checks = Vec::new();
    identity_checks(&mut checks);
    density_checks(&mut checks);
    rate_checks(&mut checks);
    bound_checks(&mut checks);
    if let Err(e) = tail_event_checks(seed, 100_000, &mut checks) {
        log::warn!("tail checks: {e}");
        checks.push(CheckResult { check_name: "tail_checks_instance".into(), passed: false, margin: f64::NAN });
    }
    VerifyReport { checks }
}
