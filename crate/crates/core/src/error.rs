use thiserror::Error;

/// Errors raised by the critfield pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("degenerate model: block {block} of the covariance is singular (min pivot {min_pivot:e})")]
    DegenerateModel { block: &'static str, min_pivot: f64 },

    #[error("quadrature did not converge: achieved error {achieved:e}, requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("frequency sampler gave up after {attempts} rejections")]
    Sampler { attempts: usize },

    #[error("degenerate Hessian: eigenvalue {eigenvalue:e} inside the window +/-{window:e}")]
    DegenerateHessian { eigenvalue: f64, window: f64 },

    #[error("boundary degeneracy: outward derivative {derivative:e} at {location:?}")]
    BoundaryDegeneracy { derivative: f64, location: Vec<f64> },

    #[error("census integrity: Euler characteristic {chi} (expected 1)")]
    CensusIntegrity { chi: i64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Capability(String),

    #[error("non-degeneracy violated: {0}")]
    NonDegeneracy(String),

    #[error("assumption (A5) violated: Var(X''(0) mu) is singular for mu = {mu:?}")]
    A5Violation { mu: Vec<f64> },

    #[error("multi-index order {order} exceeds the diagram-formula limit {limit}")]
    OrderTooLarge { order: usize, limit: usize },

    #[error("Arcones inequality inapplicable: Psi = {psi} > 1")]
    Inapplicable { psi: f64 },

    #[error("experiment integrity: {replaced} replacement draws exceed the budget {budget}")]
    ExperimentIntegrity { replaced: usize, budget: usize },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
