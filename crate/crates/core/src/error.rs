use thiserror::Error;

use crate::bzgrid::Axis;

/// Errors raised by the model, lattice and simulation engines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum HopfError {
    #[error("gap closes at k = ({kx:.6}, {ky:.6}, {kz:.6}): |u| = {norm:.3e}")]
    GaplessPoint { kx: f64, ky: f64, kz: f64, norm: f64 },

    #[error("map g is degenerate at k = ({kx:.6}, {ky:.6}, {kz:.6})")]
    DegenerateEta { kx: f64, ky: f64, kz: f64 },

    #[error("point lies within {delta:e} of the stereographic pole (eta4 = {eta4})")]
    PoleSingular { eta4: f64, delta: f64 },

    #[error("{what} index {index} out of range [0, {len})")]
    IndexOutOfRange { what: &'static str, index: usize, len: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("neighbouring states are orthogonal at site {site:?} along {axis:?} (|overlap| = {overlap:.3e})")]
    OrthogonalNeighbors { site: [usize; 3], axis: Axis, overlap: f64 },

    #[error("layer {layer} normal to {axis:?} carries net Berry flux {flux}")]
    NonzeroNetFlux { axis: Axis, layer: usize, flux: i64 },

    #[error("contour chaining failed: {0}")]
    ResolutionTooCoarse(String),

    #[error("curve passes within the pole tolerance of both stereographic charts")]
    ChartExhausted,

    #[error("curves approach within {distance:.3e} (tolerance {tol:e})")]
    CurvesTooClose { distance: f64, tol: f64 },

    #[error("polyline is not closed")]
    NotClosed,

    #[error("loop does not contract on the torus (winding {winding:?})")]
    NonContractible { winding: [i64; 3] },

    #[error("coordinate systems differ: {0}")]
    CoordinateMismatch(String),

    #[error("maximum-likelihood ascent did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize, best_log_likelihood: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, HopfError>;

impl HopfError {
    /// Stable variant name for machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            HopfError::GaplessPoint { .. } => "GaplessPoint",
            HopfError::DegenerateEta { .. } => "DegenerateEta",
            HopfError::PoleSingular { .. } => "PoleSingular",
            HopfError::IndexOutOfRange { .. } => "IndexOutOfRange",
            HopfError::EmptyInput(_) => "EmptyInput",
            HopfError::OrthogonalNeighbors { .. } => "OrthogonalNeighbors",
            HopfError::NonzeroNetFlux { .. } => "NonzeroNetFlux",
            HopfError::ResolutionTooCoarse(_) => "ResolutionTooCoarse",
            HopfError::ChartExhausted => "ChartExhausted",
            HopfError::CurvesTooClose { .. } => "CurvesTooClose",
            HopfError::NotClosed => "NotClosed",
            HopfError::NonContractible { .. } => "NonContractible",
            HopfError::CoordinateMismatch(_) => "CoordinateMismatch",
            HopfError::NonConvergence { .. } => "NonConvergence",
            HopfError::InvalidArgument(_) => "InvalidArgument",
        }
    }
}
