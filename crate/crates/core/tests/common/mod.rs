//! Oracles shared by the integration tests. Nothing here calls into the
//! library's numerical routines.
#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use relay_sbf::{ChannelRealization, NetworkConfig};
use serde::Deserialize;

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

pub struct Integrator {
    rule: Vec<(f64, f64)>,
    pub tol: f64,
}

impl Integrator {
    pub fn new(tol: f64) -> Self {
        Self { rule: gauss_legendre(20), tol }
    }

    fn panel<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64) -> f64 {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        self.rule.iter().map(|&(x, w)| w * f(c + h * x)).sum::<f64>() * h
    }

    fn refine<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (l, r) = (self.panel(f, a, m), self.panel(f, m, b));
        if (l + r - whole).abs() <= tol || depth > 60 {
            return l + r;
        }
        self.refine(f, a, m, l, 0.5 * tol, depth + 1) + self.refine(f, m, b, r, 0.5 * tol, depth + 1)
    }

    /// Adaptive bisection until a panel and its halves agree to the local tolerance.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        let whole = self.panel(&f, a, b);
        self.refine(&f, a, b, whole, self.tol, 0)
    }
}

/// `∫₀^r ln(1 + tγ) (1 − 1/r)(1 − t/r)^{r−2} dt`; a point mass at 1 for r = 1.
pub fn elliptic_rate_oracle(gamma: f64, r: usize) -> f64 {
    if r == 1 {
        return gamma.ln_1p();
    }
    let rf = r as f64;
    let q = Integrator::new(1e-14);
    // split at 1/γ where the logarithm bends
    let knee = (1.0 / gamma).min(rf);
    let f = |t: f64| (t * gamma).ln_1p() * (1.0 - 1.0 / rf) * (1.0 - t / rf).powi(r as i32 - 2);
    q.integrate(f, 0.0, knee) + q.integrate(f, knee, rf)
}

/// `∫₀^∞ ln(1 + tγ) e^{−t} dt`, truncated at 80.
pub fn gaussian_rate_oracle(gamma: f64) -> f64 {
    let q = Integrator::new(1e-14);
    let f = |t: f64| (t * gamma).ln_1p() * (-t).exp();
    let knee = (1.0 / gamma).min(80.0);
    q.integrate(f, 0.0, knee) + q.integrate(f, knee, 20.0f64.max(knee)) + q.integrate(f, 20.0f64.max(knee), 80.0)
}

/// Real symmetric eigenpairs by cyclic Jacobi rotations (unsorted).
pub fn jacobi(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = m.norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[(i, j)].powi(2)).sum();
        if off.sqrt() < 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[(p, q)] == 0.0 {
                    continue;
                }
                // angle zeroing m[p][q]
                let phi = 0.5 * (2.0 * m[(p, q)]).atan2(m[(q, q)] - m[(p, p)]);
                let (s, c) = phi.sin_cos();
                let rot = |x: &mut DMatrix<f64>, cols: bool| {
                    for k in 0..n {
                        let (a, b) = if cols { (x[(k, p)], x[(k, q)]) } else { (x[(p, k)], x[(q, k)]) };
                        let (na, nb) = (c * a - s * b, s * a + c * b);
                        if cols {
                            x[(k, p)] = na;
                            x[(k, q)] = nb;
                        } else {
                            x[(p, k)] = na;
                            x[(q, k)] = nb;
                        }
                    }
                };
                rot(&mut m, true);
                rot(&mut m, false);
                rot(&mut v, true);
            }
        }
    }
    ((0..n).map(|i| m[(i, i)]).collect(), v)
}

pub fn harmonic(n: usize) -> f64 {
    (1..=n).map(|k| 1.0 / k as f64).sum()
}

#[derive(Deserialize)]
pub struct ReferenceInstance {
    pub name: String,
    pub config: NetworkConfig,
    pub f: Vec<Vec<[f64; 2]>>,
    pub g: Vec<Vec<[f64; 2]>>,
    pub gamma_star: f64,
}

impl ReferenceInstance {
    pub fn channels(&self) -> ChannelRealization {
        let conv = |vs: &Vec<Vec<[f64; 2]>>| -> Vec<DVector<Complex64>> {
            vs.iter().map(|v| DVector::from_iterator(v.len(), v.iter().map(|&[re, im]| Complex64::new(re, im)))).collect()
        };
        ChannelRealization { f: conv(&self.f), g: conv(&self.g), seed: 0 }
    }
}

#[derive(Deserialize)]
struct ReferenceFile {
    instances: Vec<ReferenceInstance>,
}

pub fn reference_instances() -> Vec<ReferenceInstance> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/sdr_reference.json");
    let text = std::fs::read_to_string(&path).expect("fixture file present");
    serde_json::from_str::<ReferenceFile>(&text).expect("fixture parses").instances
}
