//! Error types shared across the crate.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    /// Invalid model or operation parameter (e.g. `p <= 1`, `|d| >= 1`).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Invalid configuration (grid too small, unknown keys, bad files).
    #[error("configuration error: {0}")]
    Config(String),

    /// Field/grid shape mismatch.
    #[error("shape error: {0}")]
    Shape(String),

    /// Evaluation requested outside the domain of definition.
    /// `critical` carries the boundary value when one exists (e.g. the
    /// blow-up time of a heteroclinic orbit).
    #[error("domain error: {message}")]
    Domain { message: String, critical: Option<f64> },

    /// Linear algebra / quadrature failure with a condition estimate.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Modulation fit failure; carries the best iterate diagnostics.
    #[error("fit error: {message} (residual {residual:.3e} after {iterations} iterations)")]
    Fit { message: String, residual: f64, iterations: usize },

    /// Parameters left the admissible soliton region during a fit.
    #[error("region error: {0}")]
    Region(String),

    /// Requested time schedule violates the required ordering.
    #[error("schedule error: {0}")]
    Schedule(String),

    /// Transformation window is empty.
    #[error("window error: {0}")]
    Window(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn domain(msg: impl Into<String>, critical: Option<f64>) -> Self {
        Error::Domain { message: msg.into(), critical }
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
