//! Stationary covariance structure from a spectral density: spectral
//! moments, covariance derivatives, the `(X', X'', X)` covariance and its
//! block factor, and assumption diagnostics.

mod assumptions;
mod covariance;
mod model;

pub use assumptions::{direction_grid, AssumptionReport, Verdict};
pub use covariance::{CovarianceAtLag, CovarianceStructure, DerivativeTensors, Layout};
pub use model::{Family, SpectralModel};

#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    fn model_strategy() -> impl Strategy<Value = SpectralModel> {
        prop_oneof![
            (1usize..=3).prop_map(|d| SpectralModel::gaussian_isotropic(d, 1.0).unwrap()),
            prop::collection::vec(0.3f64..3.0, 1..=3)
                .prop_map(|s| SpectralModel::gaussian_anisotropic(s, 2.0).unwrap()),
            (1usize..=2, 0.5f64..3.0).prop_map(|(d, r)| SpectralModel::bump(d, r, 1.0).unwrap()),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn odd_moments_vanish(m in model_strategy(), seed in 0u64..1000) {
            let d = m.dim();
            let mut alpha = vec![0usize; d];
            let order = [1usize, 3][(seed % 2) as usize];
            for k in 0..order {
                alpha[(seed as usize + k) % d] += 1;
            }
            prop_assert!(m.spectral_moment(&alpha).unwrap().abs() < 1e-12);
        }

        #[test]
        fn second_derivative_at_zero_is_minus_m2(m in model_strategy()) {
            let d = m.dim();
            let c = m.covariance_at(&vec![0.0; d]);
            let m2 = m.second_moment_matrix().unwrap();
            for i in 0..d {
                for j in 0..d {
                    prop_assert!((c.derivs.get(&[i, j]) + m2[i][j]).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn psi_is_even(m in model_strategy(), t in prop::collection::vec(-4.0f64..4.0, 3)) {
            let d = m.dim();
            let t = &t[..d];
            let neg: Vec<f64> = t.iter().map(|x| -x).collect();
            prop_assert!((m.covariance_at(t).psi - m.covariance_at(&neg).psi).abs() < 1e-12);
        }

        #[test]
        fn factor_reconstructs_xi(m in model_strategy()) {
            let cs = m.covariance_structure().unwrap();
            let rec = &cs.lambda * cs.lambda.transpose();
            prop_assert!((rec - &cs.xi).abs().max() <= 1e-10);
            let d = m.dim();
            for g in 0..d {
                for h in d..cs.layout.len() {
                    prop_assert_eq!(cs.xi[(g, h)], 0.0);
                }
            }
        }
    }

    #[test]
    fn psi_at_zero_for_gaussian_families() {
        for m in [
            SpectralModel::gaussian_isotropic(2, 1.5).unwrap(),
            SpectralModel::gaussian_anisotropic(vec![0.5, 2.0], 1.0).unwrap(),
        ] {
            let c = m.covariance_at(&[0.0, 0.0]);
            let expected = [0usize, 2, 4]
                .iter()
                .flat_map(|&j| c.derivs.order(j).iter().map(|v| v.abs()))
                .fold(0.0f64, f64::max);
            assert_eq!(c.psi, expected);
        }
    }
}
