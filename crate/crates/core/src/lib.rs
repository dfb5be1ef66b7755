//! Relay beamforming for multigroup multicast amplify-and-forward networks:
//! semidefinite relaxation, Gaussian randomization, and the Gaussian and
//! elliptic stochastic beamforming schemes, with a Monte Carlo harness.
//!
//! Scalar rate formulas and quadrature are generic over [`special::Scalar`];
//! matrix code and the SDP solver work in `f64`. The aliases below fix the
//! generic types to `f64`.

pub mod error;
pub mod experiments;
pub mod linalg;
pub mod papr;
pub mod problem;
pub mod randomization;
pub mod rng;
pub mod scenario;
pub mod sbf;
pub mod sdp;
pub mod sdr;
pub mod special;
pub mod verify;

pub use error::{Error, Result};
pub use experiments::{run_sweep, RateReport, SweepSpec, SweepVariable};
pub use problem::{build_distributed_problem, build_mimo_problem, ProblemData};
pub use randomization::{gaussian_randomize, BfSolution};
pub use sbf::{sbf_rate, SbfKind, SbfScheme};
pub use scenario::{generate_channels, ChannelRealization, NetworkConfig, Topology};
pub use sdr::{solve_sdr, SdrSolution};

pub type Real = f64;
pub type Quadrature = special::Quadrature<f64>;
pub type QuadResult = special::QuadResult<f64>;
