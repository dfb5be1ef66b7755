//! Deterministic random streams.
//!
//! Every consumer of randomness (channel generation, randomization draws,
//! stochastic beamformer sampling, symbol simulation) gets its own generator
//! derived from `(master_seed, purpose, indices)`, so results do not depend
//! on evaluation order or on how work is split across threads.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags separating the independent random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Channels = 1,
    Randomization = 2,
    GaussianSbf = 3,
    EllipticSbf = 4,
    Symbols = 5,
    RelayNoise = 6,
    Verification = 7,
    Instance = 8,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed, a purpose tag and a path of indices into one seed.
pub fn derive_seed(master: u64, purpose: Purpose, path: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ 0x5DEE_CE66_D1CE_4E5B);
    h = splitmix64(h ^ purpose as u64);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0xA076_1D64_78BD_642F)));
    }
    h
}

/// Generator for the stream identified by `(master, purpose, path)`.
pub fn stream(master: u64, purpose: Purpose, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, purpose, path))
}

/// One draw from CN(0, 1): independent real and imaginary parts of variance 1/2.
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Vector of i.i.d. CN(0, 1) entries.
pub fn complex_normal_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> DVector<Complex64> {
    DVector::from_fn(len, |_, _| complex_normal(rng))
}
