//! Scalar special functions shared by the rate formulas: adaptive
//! Gauss–Kronrod quadrature, the scaled exponential integral `e^x E1(x)`,
//! harmonic numbers and the alternating binomial sum identity.
//!
//! Everything here is generic over [`Scalar`], so the same code runs in
//! `f32`, `f64` or (for the purely algebraic identities) exact rationals.

use std::fmt::Debug;

use num_traits::{Float, FloatConst, FromPrimitive, Num};

/// Floating point scalar accepted by the generic numerical routines.
pub trait Scalar: Float + FloatConst + FromPrimitive + Debug + Send + Sync + 'static {
    /// Lossless-enough conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Euler–Mascheroni constant, the large-SINR limit of the Gaussian rate gap.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

// 15-point Kronrod abscissae (positive half, descending) and weights with the
// embedded 7-point Gauss weights on the odd-indexed nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult<F> {
    pub value: F,
    pub abs_error: F,
    pub subdivisions: usize,
    pub converged: bool,
}

/// Globally adaptive G7/K15 integrator: the panel with the largest error
/// estimate is bisected until the summed estimate meets the tolerance.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature<F> {
    pub abs_tol: F,
    pub rel_tol: F,
    pub max_subdivisions: usize,
}

impl<F: Scalar> Default for Quadrature<F> {
    fn default() -> Self {
        Self {
            abs_tol: F::lit(1e-12),
            rel_tol: F::zero(),
            max_subdivisions: 2000,
        }
    }
}

struct Panel<F> {
    a: F,
    b: F,
    value: F,
    error: F,
}

impl<F: Scalar> Quadrature<F> {
    pub fn with_abs_tol(abs_tol: F) -> Self {
        Self {
            abs_tol,
            ..Self::default()
        }
    }

    fn kronrod<G: Fn(F) -> F>(f: &G, a: F, b: F) -> (F, F) {
        let half = F::lit(0.5);
        let center = half * (a + b);
        let half_len = half * (b - a);
        let fc = f(center);
        let mut res_k = fc * F::lit(WGK[7]);
        let mut res_g = fc * F::lit(WG[3]);
        for j in 0..7 {
            let dx = half_len * F::lit(XGK[j]);
            let s = f(center - dx) + f(center + dx);
            res_k = res_k + F::lit(WGK[j]) * s;
            if j % 2 == 1 {
                res_g = res_g + F::lit(WG[j / 2]) * s;
            }
        }
        let value = res_k * half_len;
        let error = ((res_k - res_g) * half_len).abs();
        (value, error)
    }

    /// Integrates `f` over the finite interval `[a, b]`.
    pub fn integrate<G: Fn(F) -> F>(&self, f: G, a: F, b: F) -> QuadResult<F> {
        if a == b {
            return QuadResult {
                value: F::zero(),
                abs_error: F::zero(),
                subdivisions: 0,
                converged: true,
            };
        }
        let (value, error) = Self::kronrod(&f, a, b);
        let mut panels = vec![Panel { a, b, value, error }];
        let mut total = value;
        let mut total_err = error;
        let mut subdivisions = 0;
        loop {
            let tol = self.abs_tol.max(self.rel_tol * total.abs());
            if total_err <= tol {
                break;
            }
            if subdivisions >= self.max_subdivisions {
                return QuadResult {
                    value: total,
                    abs_error: total_err,
                    subdivisions,
                    converged: false,
                };
            }
            let (worst, _) = panels
                .iter()
                .enumerate()
                .fold((0, F::neg_infinity()), |acc, (i, p)| {
                    if p.error > acc.1 {
                        (i, p.error)
                    } else {
                        acc
                    }
                });
            let p = panels.swap_remove(worst);
            let mid = F::lit(0.5) * (p.a + p.b);
            if mid <= p.a || mid >= p.b {
                // panel can no longer be split in this precision
                panels.push(p);
                return QuadResult {
                    value: total,
                    abs_error: total_err,
                    subdivisions,
                    converged: false,
                };
            }
            let (v1, e1) = Self::kronrod(&f, p.a, mid);
            let (v2, e2) = Self::kronrod(&f, mid, p.b);
            total = total - p.value + v1 + v2;
            total_err = total_err - p.error + e1 + e2;
            panels.push(Panel { a: p.a, b: mid, value: v1, error: e1 });
            panels.push(Panel { a: mid, b: p.b, value: v2, error: e2 });
            subdivisions += 1;
            if subdivisions % 64 == 0 {
                // refresh the running sums against drift
                total = panels.iter().fold(F::zero(), |s, p| s + p.value);
                total_err = panels.iter().fold(F::zero(), |s, p| s + p.error);
            }
        }
        QuadResult {
            value: total,
            abs_error: total_err,
            subdivisions,
            converged: true,
        }
    }
}

/// `e^x · E1(x)` for `x > 0`, where `E1(x) = ∫_x^∞ e^{-t}/t dt`.
///
/// Uses the power series below 1 and a modified-Lentz continued fraction
/// above, which yields the scaled value directly and never overflows.
pub fn exp_e1<F: Scalar>(x: F) -> F {
    assert!(x > F::zero(), "exp_e1 requires x > 0");
    let eps = F::epsilon();
    if x < F::one() {
        let mut sum = F::zero();
        let mut term = F::one();
        let mut k = F::one();
        loop {
            term = -term * x / k;
            let contrib = term / k;
            sum = sum + contrib;
            if contrib.abs() < eps * sum.abs().max(eps) {
                break;
            }
            k = k + F::one();
        }
        let e1 = -F::lit(EULER_GAMMA) - x.ln() - sum;
        x.exp() * e1
    } else {
        let tiny = F::min_positive_value() / eps;
        let two = F::lit(2.0);
        let mut b = x + F::one();
        let mut c = F::one() / tiny;
        let mut d = F::one() / b;
        let mut h = d;
        let mut i = F::one();
        for _ in 0..10_000 {
            let an = -i * i;
            b = b + two;
            d = F::one() / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h = h * del;
            if (del - F::one()).abs() < eps {
                break;
            }
            i = i + F::one();
        }
        h
    }
}

/// Harmonic number `H_n = Σ_{k=1}^n 1/k`, with `H_0 = 0`.
pub fn harmonic<F: Scalar>(n: usize) -> F {
    (1..=n).rev().fold(F::zero(), |acc, k| acc + F::one() / F::from_usize(k).unwrap())
}

/// Binomial coefficient as a scalar, computed by the multiplicative formula.
pub fn binomial<F: Scalar>(n: usize, k: usize) -> F {
    if k > n {
        return F::zero();
    }
    let k = k.min(n - k);
    (0..k).fold(F::one(), |acc, i| {
        acc * F::from_usize(n - i).unwrap() / F::from_usize(i + 1).unwrap()
    })
}

/// `Σ_{k=1}^n C(n,k) (-1)^k / k` in any numeric type with division.
///
/// Over exact rationals this equals `-H_n` identically.
pub fn alternating_binomial_sum<T>(n: u32) -> T
where
    T: Num + Clone + FromPrimitive,
{
    let mut total = T::zero();
    let mut coeff = T::one();
    for k in 1..=n {
        coeff = coeff * T::from_u32(n - k + 1).unwrap() / T::from_u32(k).unwrap();
        let term = coeff.clone() / T::from_u32(k).unwrap();
        total = if k % 2 == 1 { total - term } else { total + term };
    }
    total
}

/// `H_n` in any numeric type with division (exact over rationals).
pub fn harmonic_exact<T>(n: u32) -> T
where
    T: Num + Clone + FromPrimitive,
{
    (1..=n).fold(T::zero(), |acc, k| acc + T::one() / T::from_u32(k).unwrap())
}
