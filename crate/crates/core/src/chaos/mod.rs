//! Wiener chaos expansion of critical-point counts: Hermite machinery,
//! coefficient estimation and the chaotic variance components.

mod coeffs;
mod hermite;
mod variance;

pub use coeffs::{
    hermite_coefficients, hermite_rank, read_coefficient_csv, ChaosExpansion, Coefficient, CoefficientTable,
    DEFAULT_COEFF_MC, ZERO_FLAG_SIGMAS,
};
pub use hermite::{
    coeff_delta, hermite, hermite_all, hermite_at_zero, mehler_cov, permanent, wick4, wick_h2, MultiIndex,
    MEHLER_ORDER_LIMIT,
};
pub use variance::{
    arcones_check, arcones_psi, chaotic_variance_profile, chaotic_variance_terms, limit_variance_convolution,
    ArconesOutcome, SpectralKernelSet, CONVOLUTION_ORDER_LIMIT, LAG_CUTOFF,
};
