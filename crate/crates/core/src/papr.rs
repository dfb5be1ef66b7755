//! Symbol-level simulation of the relay transmit signal and per-antenna PAPR
//! statistics.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};
use crate::rng::{complex_normal, stream, Purpose, StreamRng};
use crate::sbf::{SbfKind, SbfScheme};
use crate::scenario::{ChannelRealization, NetworkConfig, Topology};

pub const DEFAULT_BLOCK_LEN: usize = 4800;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modulation {
    Qam64,
}

impl FromStr for Modulation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "qam64" | "64qam" => Ok(Modulation::Qam64),
            _ => Err(Error::UnsupportedModulation(s.to_string())),
        }
    }
}

impl Modulation {
    /// Constellation points, scaled to unit average power.
    pub fn constellation(self) -> Vec<Complex64> {
        match self {
            Modulation::Qam64 => {
                let scale = 1.0 / 42f64.sqrt();
                let levels: Vec<f64> = (0..8).map(|k| (2 * k - 7) as f64 * scale).collect();
                levels.iter().flat_map(|&i| levels.iter().map(move |&q| Complex64::new(i, q))).collect()
            }
        }
    }
}

/// Weighting scheme applied at the relay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PaprScheme {
    Bf,
    GaussianSbf,
    EllipticSbf,
}

impl FromStr for PaprScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bf" => Ok(PaprScheme::Bf),
            "gauss" | "gaussian" => Ok(PaprScheme::GaussianSbf),
            "ellip" | "elliptic" => Ok(PaprScheme::EllipticSbf),
            _ => Err(Error::Domain(format!("unknown scheme `{s}` (expected bf, gauss or ellip)"))),
        }
    }
}

impl fmt::Display for PaprScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PaprScheme::Bf => "bf",
            PaprScheme::GaussianSbf => "gauss",
            PaprScheme::EllipticSbf => "ellip",
        })
    }
}

/// Relay weights: one fixed vector, or a fresh draw per symbol slot.
#[derive(Debug, Clone, Copy)]
pub enum RelayWeights<'a> {
    Fixed(&'a CVec),
    Stochastic(&'a SbfScheme),
}

/// Transmitted symbols.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SymbolSource {
    Random(Modulation),
    /// Same unit-power symbol in every slot for every transmitter.
    Constant(Complex64),
}

#[derive(Debug, Clone)]
pub struct PaprSetup<'a> {
    pub config: &'a NetworkConfig,
    pub channels: &'a ChannelRealization,
    pub weights: RelayWeights<'a>,
    pub symbols: SymbolSource,
    pub relay_noise: bool,
    pub block_len: usize,
}

/// `x = V r` without forming `V`: `V = unvec(w)` (MIMO) or `Diag(w*)`.
fn apply_relay(topology: Topology, l: usize, w: &[Complex64], r: &[Complex64], x: &mut [Complex64]) {
    match topology {
        Topology::Mimo => {
            x.fill(Complex64::new(0.0, 0.0));
            for (m, &rm) in r.iter().enumerate() {
                let col = &w[m * l..(m + 1) * l];
                for (xl, &v) in x.iter_mut().zip(col) {
                    *xl += v * rm;
                }
            }
        }
        Topology::Distributed => {
            for ((xl, wl), rl) in x.iter_mut().zip(w).zip(r) {
                *xl = wl.conj() * rl;
            }
        }
    }
}

impl PaprSetup<'_> {
    fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.channels.check_dims(self.config)?;
        let n = self.config.weight_dim();
        let dim = match self.weights {
            RelayWeights::Fixed(w) => w.len(),
            RelayWeights::Stochastic(s) => s.dim(),
        };
        if dim != n {
            return Err(Error::DimensionMismatch { field: "relay weights", detail: format!("expected length {n}, got {dim}") });
        }
        if let RelayWeights::Stochastic(s) = self.weights {
            if s.kind == SbfKind::Elliptic && s.rank == 0 {
                return Err(Error::Domain("elliptic weights need a covariance of rank at least 1".into()));
            }
        }
        if self.block_len == 0 {
            return Err(Error::Domain("block length must be at least 1".into()));
        }
        Ok(())
    }

    /// Per-antenna PAPR (linear) of one block; antennas that carry no signal
    /// are reported as `None`.
    pub fn block_papr(&self, block: usize, seed: u64) -> Vec<Option<f64>> {
        let cfg = self.config;
        let l = cfg.num_relay_antennas;
        let n = cfg.weight_dim();
        let path = [block as u64];
        let mut sym_rng = stream(seed, Purpose::Symbols, &path);
        let mut noise_rng = stream(seed, Purpose::RelayNoise, &path);
        let mut w_rng: StreamRng = match self.weights {
            RelayWeights::Stochastic(s) if s.kind == SbfKind::Elliptic => stream(seed, Purpose::EllipticSbf, &path),
            _ => stream(seed, Purpose::GaussianSbf, &path),
        };
        let points = match self.symbols {
            SymbolSource::Random(m) => m.constellation(),
            SymbolSource::Constant(_) => Vec::new(),
        };
        let amp: Vec<f64> = cfg.tx_powers.iter().map(|p| p.sqrt()).collect();
        let noise_sd: Vec<f64> = cfg.relay_noise_vars.iter().map(|v| v.sqrt()).collect();
        // column j of the channel matrix, stored contiguously
        let f: Vec<&[Complex64]> = self.channels.f.iter().map(|v| v.as_slice()).collect();

        let mut r = vec![Complex64::new(0.0, 0.0); l];
        let mut x = vec![Complex64::new(0.0, 0.0); l];
        let mut w = vec![Complex64::new(0.0, 0.0); n];
        let mut alpha = vec![Complex64::new(0.0, 0.0); match self.weights {
            RelayWeights::Stochastic(s) => s.rank,
            RelayWeights::Fixed(_) => 0,
        }];
        if let RelayWeights::Fixed(v) = self.weights {
            w.copy_from_slice(v.as_slice());
        }
        let mut peak = vec![0.0f64; l];
        let mut total = vec![0.0f64; l];

        for _ in 0..self.block_len {
            r.fill(Complex64::new(0.0, 0.0));
            for (j, fj) in f.iter().enumerate() {
                let s = match self.symbols {
                    SymbolSource::Random(_) => points[sym_rng.gen_range(0..points.len())],
                    SymbolSource::Constant(c) => c,
                } * amp[j];
                for (rl, &fl) in r.iter_mut().zip(fj.iter()) {
                    *rl += fl * s;
                }
            }
            if self.relay_noise {
                for (rl, &sd) in r.iter_mut().zip(&noise_sd) {
                    *rl += complex_normal(&mut noise_rng) * sd;
                }
            }
            if let RelayWeights::Stochastic(s) = self.weights {
                sample_into(s, &mut w_rng, &mut alpha, &mut w);
            }
            apply_relay(cfg.topology, l, &w, &r, &mut x);
            for ((p, t), xl) in peak.iter_mut().zip(total.iter_mut()).zip(&x) {
                let e = xl.norm_sqr();
                *t += e;
                if e > *p {
                    *p = e;
                }
            }
        }
        peak.iter()
            .zip(&total)
            .map(|(&p, &t)| (t > 0.0).then(|| p * self.block_len as f64 / t))
            .collect()
    }
}

/// Draws `w = Lfᴴα` (scaled to `‖α‖² = r` for the elliptic kind) into `w`.
fn sample_into(scheme: &SbfScheme, rng: &mut StreamRng, alpha: &mut [Complex64], w: &mut [Complex64]) {
    let r = scheme.rank;
    if r == 0 {
        w.fill(Complex64::new(0.0, 0.0));
        return;
    }
    let scale = loop {
        let mut norm2 = 0.0;
        for a in alpha.iter_mut() {
            *a = complex_normal(rng);
            norm2 += a.norm_sqr();
        }
        match scheme.kind {
            SbfKind::Gaussian => break 1.0,
            SbfKind::Elliptic if norm2 > 0.0 => break (r as f64 / norm2).sqrt(),
            SbfKind::Elliptic => continue,
        }
    };
    let fac: &CMat = &scheme.factor;
    for (j, wj) in w.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, a) in alpha.iter().enumerate() {
            acc += fac[(i, j)].conj() * a;
        }
        *wj = acc * scale;
    }
}

/// PAPR thresholds in dB: 0 to 12 in steps of 0.25.
pub fn default_thresholds() -> Vec<f64> {
    (0..=48).map(|k| k as f64 * 0.25).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct PaprReport {
    pub scheme: PaprScheme,
    pub thresholds_db: Vec<f64>,
    /// Fraction of (block, antenna) samples whose PAPR exceeds each threshold.
    pub ccdf: Vec<f64>,
    /// PAPR samples in dB, in block-major order.
    pub samples_db: Vec<f64>,
}

impl PaprReport {
    /// Smallest PAPR (dB) exceeded by at most a fraction `level` of samples.
    pub fn papr_at_ccdf(&self, level: f64) -> f64 {
        let mut s = self.samples_db.clone();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        if n == 0 {
            return f64::NAN;
        }
        let allowed = (level * n as f64).floor() as usize;
        s[n - 1 - allowed.min(n - 1)]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["threshold_db", "ccdf"])?;
        for (t, c) in self.thresholds_db.iter().zip(&self.ccdf) {
            w.write_record([t.to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Empirical CCDF of per-antenna PAPR over `num_blocks` blocks.
pub fn papr_ccdf(setup: &PaprSetup<'_>, scheme: PaprScheme, num_blocks: usize, seed: u64) -> Result<PaprReport> {
    setup.validate()?;
    if num_blocks == 0 {
        return Err(Error::Domain("need at least one block".into()));
    }
    let per_block: Vec<Vec<Option<f64>>> = (0..num_blocks).into_par_iter().map(|b| setup.block_papr(b, seed)).collect();
    let samples_db: Vec<f64> = per_block.into_iter().flatten().flatten().map(|p| 10.0 * p.log10()).collect();
    let thresholds_db = default_thresholds();
    let n = samples_db.len().max(1) as f64;
    let ccdf = thresholds_db
        .iter()
        .map(|&t| samples_db.iter().filter(|&&s| s > t).count() as f64 / n)
        .collect();
    Ok(PaprReport { scheme, thresholds_db, ccdf, samples_db })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::outer;
    use crate::problem::{build_distributed_problem, build_mimo_problem, relay_matrix};
    use crate::rng::complex_normal_vector;
    use crate::scenario::generate_channels;

    fn setup_for<'a>(cfg: &'a NetworkConfig, ch: &'a ChannelRealization, weights: RelayWeights<'a>) -> PaprSetup<'a> {
        PaprSetup { config: cfg, channels: ch, weights, symbols: SymbolSource::Random(Modulation::Qam64), relay_noise: true, block_len: 256 }
    }

    #[test]
    fn qam64_unit_power() {
        let c = Modulation::Qam64.constellation();
        assert_eq!(c.len(), 64);
        let p = c.iter().map(|z| z.norm_sqr()).sum::<f64>() / 64.0;
        assert!((p - 1.0).abs() < 1e-14);
        assert!("64-QAM".parse::<Modulation>().is_ok());
        assert!(matches!("16qam".parse::<Modulation>(), Err(Error::UnsupportedModulation(_))));
    }

    #[test]
    fn relay_application_matches_matrix() {
        for topo in [Topology::Mimo, Topology::Distributed] {
            let cfg = NetworkConfig::uniform(3, 1, 2, 1.0, 1.0, 1.0, 1.0, None).with_topology(topo);
            let ch = generate_channels(&cfg, 2).unwrap();
            let p = match topo {
                Topology::Mimo => build_mimo_problem(&cfg, &ch).unwrap(),
                Topology::Distributed => build_distributed_problem(&cfg, &ch, &[(CMat::identity(3, 3), 1.0)]).unwrap(),
            };
            let mut rng = stream(4, Purpose::Verification, &[]);
            let w = complex_normal_vector(&mut rng, p.dim);
            let r = complex_normal_vector(&mut rng, 3);
            let want = relay_matrix(&p, &w) * &r;
            let mut x = vec![Complex64::new(0.0, 0.0); 3];
            apply_relay(topo, 3, w.as_slice(), r.as_slice(), &mut x);
            for i in 0..3 {
                assert!((x[i] - want[i]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_symbols_give_unit_papr() {
        let cfg = NetworkConfig::uniform(4, 2, 1, 1.0, 1.0, 1.0, 1.0, None);
        let ch = generate_channels(&cfg, 9).unwrap();
        let mut rng = stream(1, Purpose::Verification, &[]);
        let w = complex_normal_vector(&mut rng, 16);
        let mut s = setup_for(&cfg, &ch, RelayWeights::Fixed(&w));
        s.symbols = SymbolSource::Constant(Complex64::new(1.0, 0.0));
        s.relay_noise = false;
        let rep = papr_ccdf(&s, PaprScheme::Bf, 3, 0).unwrap();
        assert_eq!(rep.samples_db.len(), 12);
        assert!(rep.samples_db.iter().all(|p| p.abs() < 1e-12));
        // the 0 dB bin can catch roundoff above exactly 1
        assert!(rep.ccdf[1..].iter().all(|&c| c == 0.0));
    }

    #[test]
    fn ccdf_is_nonincreasing_and_reproducible() {
        let cfg = NetworkConfig::uniform(2, 1, 2, 1.0, 0.5, 1.0, 1.0, None);
        let ch = generate_channels(&cfg, 3).unwrap();
        let mut rng = stream(2, Purpose::Verification, &[]);
        let v = complex_normal_vector(&mut rng, 4);
        let omega = outer(&v) + outer(&complex_normal_vector(&mut rng, 4));
        let scheme = SbfScheme::new(SbfKind::Gaussian, &omega, 1e-9).unwrap();
        let s = setup_for(&cfg, &ch, RelayWeights::Stochastic(&scheme));
        let a = papr_ccdf(&s, PaprScheme::GaussianSbf, 40, 11).unwrap();
        let b = papr_ccdf(&s, PaprScheme::GaussianSbf, 40, 11).unwrap();
        assert_eq!(a.samples_db, b.samples_db);
        assert!(a.ccdf.windows(2).all(|p| p[1] <= p[0]));
        assert!(a.samples_db.iter().all(|&p| p >= 0.0));
        assert_eq!(a.thresholds_db.len(), 49);
    }

    #[test]
    fn elliptic_weights_have_fixed_norm() {
        let mut rng = stream(5, Purpose::Verification, &[]);
        let omega = outer(&complex_normal_vector(&mut rng, 4)) + outer(&complex_normal_vector(&mut rng, 4));
        let scheme = SbfScheme::new(SbfKind::Elliptic, &omega, 1e-9).unwrap();
        let mut alpha = vec![Complex64::new(0.0, 0.0); scheme.rank];
        let mut w = vec![Complex64::new(0.0, 0.0); 4];
        let trace: f64 = (0..4).map(|i| omega[(i, i)].re).sum();
        let norm = |w: &[Complex64]| w.iter().map(|z| z.norm_sqr()).sum::<f64>();
        // ‖w‖² = r·αᴴ(LfLfᴴ)α/‖α‖² lies between r·λmin and r·λmax of Ω's nonzero part
        let lam = crate::linalg::eigvalsh(&omega);
        for _ in 0..100 {
            sample_into(&scheme, &mut rng, &mut alpha, &mut w);
            let e = norm(&w);
            assert!(e <= 2.0 * lam[3] * (1.0 + 1e-9) && e >= 2.0 * lam[2] * (1.0 - 1e-9), "{e} {lam:?} {trace}");
        }
    }

    #[test]
    fn quantile_helper() {
        let rep = PaprReport { scheme: PaprScheme::Bf, thresholds_db: vec![], ccdf: vec![], samples_db: (1..=100).map(f64::from).collect() };
        assert_eq!(rep.papr_at_ccdf(0.01), 99.0);
        assert_eq!(rep.papr_at_ccdf(0.0), 100.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = NetworkConfig::uniform(2, 1, 1, 1.0, 1.0, 1.0, 1.0, None);
        let ch = generate_channels(&cfg, 1).unwrap();
        let w = CVec::zeros(3);
        let s = setup_for(&cfg, &ch, RelayWeights::Fixed(&w));
        assert!(papr_ccdf(&s, PaprScheme::Bf, 1, 0).is_err());
        let w = CVec::zeros(4);
        let s = setup_for(&cfg, &ch, RelayWeights::Fixed(&w));
        assert!(papr_ccdf(&s, PaprScheme::Bf, 0, 0).is_err());
        // zero weights: no antenna carries signal
        assert!(papr_ccdf(&s, PaprScheme::Bf, 2, 0).unwrap().samples_db.is_empty());
    }
}
