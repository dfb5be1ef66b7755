use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use relay_sbf::experiments::{build_problem, evaluate_instance};
use relay_sbf::papr::{papr_ccdf, Modulation, PaprScheme, PaprSetup, RelayWeights, SymbolSource, DEFAULT_BLOCK_LEN};
use relay_sbf::randomization::gaussian_randomize;
use relay_sbf::rng::{derive_seed, Purpose};
use relay_sbf::sdr::{solve_sdr_with, GammaTolerance, SdrOptions};
use relay_sbf::verify::verify_suite;
use relay_sbf::{generate_channels, run_sweep, NetworkConfig, Result, SbfKind, SbfScheme, SweepSpec};

#[derive(Parser)]
#[command(version, about = "Relay beamforming: SDR, randomization and stochastic beamforming experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one channel realization and print gamma*, rank and the four rates (bits/s/Hz).
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Keep the per-antenna budgets from the config (ignored otherwise).
        #[arg(long)]
        per_antenna: bool,
        #[arg(long, default_value_t = 1000)]
        randomizations: usize,
        /// Also print a header line.
        #[arg(long)]
        header: bool,
    },
    /// Run a Monte Carlo sweep and write the rate report as CSV.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the thread count in the spec.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Simulate per-antenna PAPR of one design and write its CCDF.
    Papr {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        scheme: PaprScheme,
        #[arg(long, default_value_t = 10_000)]
        blocks: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_BLOCK_LEN)]
        block_len: usize,
        #[arg(long, default_value = "qam64")]
        modulation: Modulation,
        #[arg(long, default_value_t = 1000)]
        randomizations: usize,
    },
    /// Run the verification suite; exits nonzero if any check fails.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn create(path: &PathBuf) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn sdr_options() -> SdrOptions {
    SdrOptions { tolerance: GammaTolerance::Relative(1e-5), ..SdrOptions::default() }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Solve { config, seed, per_antenna, randomizations, header } => {
            let mut cfg = NetworkConfig::from_json_file(&config)?;
            if !per_antenna {
                cfg.per_antenna_budgets = None;
            }
            let ch = generate_channels(&cfg, seed)?;
            let problem = build_problem(&cfg, &ch)?;
            let rates = evaluate_instance(&problem, &sdr_options(), randomizations, derive_seed(seed, Purpose::Randomization, &[]))?;
            let bits = std::f64::consts::LN_2;
            let mut w = csv::Writer::from_writer(io::stdout());
            if header {
                w.write_record(["gamma_star", "rank", "r_sdr", "r_bf", "r_sbf_gauss", "r_sbf_ellip"])?;
            }
            w.write_record([
                rates.gamma_star.to_string(),
                rates.rank.to_string(),
                (rates.sdr / bits).to_string(),
                (rates.bf / bits).to_string(),
                (rates.sbf_gaussian / bits).to_string(),
                (rates.sbf_elliptic / bits).to_string(),
            ])?;
            w.flush()?;
            Ok(true)
        }
        Command::Sweep { spec, out, threads } => {
            let mut spec = SweepSpec::from_json_file(&spec)?;
            if threads.is_some() {
                spec.threads = threads;
            }
            let report = run_sweep(&spec)?;
            let mut f = create(&out)?;
            report.write_csv(&mut f)?;
            f.flush()?;
            Ok(true)
        }
        Command::Papr { config, scheme, blocks, out, seed, block_len, modulation, randomizations } => {
            let cfg = NetworkConfig::from_json_file(&config)?;
            let ch = generate_channels(&cfg, seed)?;
            let problem = build_problem(&cfg, &ch)?;
            let sdr = solve_sdr_with(&problem, &sdr_options())?;
            let bf;
            let sbf;
            let weights = match scheme {
                PaprScheme::Bf => {
                    bf = gaussian_randomize(&sdr, &problem, randomizations, derive_seed(seed, Purpose::Randomization, &[]))?;
                    RelayWeights::Fixed(&bf.w_hat)
                }
                PaprScheme::GaussianSbf | PaprScheme::EllipticSbf => {
                    let kind = if scheme == PaprScheme::GaussianSbf { SbfKind::Gaussian } else { SbfKind::Elliptic };
                    sbf = SbfScheme::new(kind, &sdr.w_star, sdr_options().rank_tol)?;
                    RelayWeights::Stochastic(&sbf)
                }
            };
            let setup = PaprSetup {
                config: &cfg,
                channels: &ch,
                weights,
                symbols: SymbolSource::Random(modulation),
                relay_noise: true,
                block_len,
            };
            let report = papr_ccdf(&setup, scheme, blocks, seed)?;
            let mut f = create(&out)?;
            report.write_csv(&mut f)?;
            f.flush()?;
            Ok(true)
        }
        Command::Verify { seed, out } => {
            let report = verify_suite(seed);
            let mut f = create(&out)?;
            report.write_csv(&mut f)?;
            f.flush()?;
            for c in report.checks.iter().filter(|c| !c.passed) {
                eprintln!("FAIL {} (margin {})", c.check_name, c.margin);
            }
            Ok(report.all_passed())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
