//! Randomized properties of the rate formulas and the Hermitian helpers.

mod common;

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use relay_sbf::linalg::{self, CMat};
use relay_sbf::sbf::{gap_bound_elliptic, sbf_rate_elliptic, sbf_rate_gaussian};

fn hermitian(n: usize) -> impl Strategy<Value = CMat> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n).prop_map(move |v| {
        let a = DMatrix::from_iterator(n, n, v.into_iter().map(|(re, im)| Complex64::new(re, im)));
        (&a + a.adjoint()) * Complex64::new(0.5, 0.0)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rates_are_ordered(log_gamma in -3.0f64..4.0, r in 1usize..24) {
        let g = 10f64.powf(log_gamma);
        let gs = sbf_rate_gaussian(g);
        let e = sbf_rate_elliptic(g, r).unwrap();
        prop_assert!(gs > 0.0);
        prop_assert!(gs <= e + 1e-12);
        prop_assert!(e <= g.ln_1p() + 1e-12);
        prop_assert!(g.ln_1p() - e <= gap_bound_elliptic::<f64>(r).unwrap() + 1e-10);
    }

    #[test]
    fn elliptic_rate_matches_integral(log_gamma in -3.0f64..3.0, r in 1usize..13) {
        let g = 10f64.powf(log_gamma);
        let got = sbf_rate_elliptic(g, r).unwrap();
        prop_assert!((got - common::elliptic_rate_oracle(g, r)).abs() <= 1e-9 * got.max(1e-3));
    }

    #[test]
    fn eigh_reconstructs(a in hermitian(5)) {
        let eig = linalg::eigh(&a);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(5, eig.values.iter().map(|&x| Complex64::new(x, 0.0))));
        let rec = &eig.vectors * d * eig.vectors.adjoint();
        prop_assert!((rec - &a).norm() <= 1e-10 * a.norm().max(1.0));
        prop_assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn embedding_round_trips(a in hermitian(4)) {
        prop_assert!((linalg::unembed(&linalg::embed(&a)) - &a).norm() < 1e-14);
    }
}
