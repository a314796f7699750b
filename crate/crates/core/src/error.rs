use thiserror::Error;

use crate::expr::ParseError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point ({x}, {y}) lies outside the chart domain of the {metric} metric")]
    OutsideChart { x: f64, y: f64, metric: String },

    #[error("non-positive conformal factor {rho} at ({x}, {y})")]
    NonPositiveFactor { x: f64, y: f64, rho: f64 },

    #[error("stencil at grid index ({i}, {j}) leaves the Dirichlet domain")]
    Stencil { i: usize, j: usize },

    #[error("{what} is not symmetric positive definite")]
    NotPositiveDefinite { what: &'static str },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("refinement levels are not nested: spacing {coarse} is not twice {fine}")]
    NonNestedSpacings { coarse: f64, fine: f64 },

    #[error("a refinement study needs at least {needed} levels, got {got}")]
    TooFewLevels { needed: usize, got: usize },

    #[error("flow stalled: time step {dt:e} underflowed at t = {t}")]
    FlowStalled { t: f64, dt: f64 },

    #[error("map image escaped the target chart at grid index ({i}, {j})")]
    Escaped { i: usize, j: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
}

impl Error {
    /// True for errors caused by a point leaving a chart domain.
    pub fn is_domain_error(&self) -> bool {
        matches!(self, Error::OutsideChart { .. } | Error::Escaped { .. })
    }
}
