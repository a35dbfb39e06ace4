//! Critical points of stationary Gaussian random fields: spectral models,
//! random-wave synthesis, critical-point census, Kac-Rice moments, Wiener
//! chaos expansions and a Monte Carlo CLT harness.

pub mod census;
pub mod chaos;
pub mod error;
pub mod field;
pub mod harness;
pub mod kac_rice;
pub mod quad;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use field::{synthesize, FieldRealization, Jet};
pub use spectral::{AssumptionReport, CovarianceStructure, Family, Layout, SpectralModel};
