use thiserror::Error;

use crate::deviations::DeviationReport;
use crate::lyapunov::{AvalancheReport, MultiscaleReport};

/// Which hypothesis of the avalanche principle failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum AvalancheHypothesis {
    /// `min ‖A_j‖ ≥ μ ≥ n`
    MinimalNorm,
    /// pairwise defect at most `½ log μ`
    PairDefect,
    Both,
}

/// Which inductive-step hypothesis failed at the small scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum InductionHypothesis {
    /// `L_{N0}, L_{2N0} ≥ γ S`
    Positivity,
    /// `L_{N0} − L_{2N0} ≤ γ S / 40`
    Decrement,
    Both,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("frequency is rational to working precision after {terms} continued-fraction terms")]
    RationalFrequency { terms: usize },

    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("|Im z| = {y} is outside the holomorphy strip of width {width}")]
    OutsideStrip { y: f64, width: f64 },

    #[error("truncation degree {degree} exceeds the {stored} stored Fourier modes")]
    DegreeExceedsStored { degree: usize, stored: usize },

    #[error("no transversality certificate up to derivative order {m_max}")]
    NotTransversalUpToM { m_max: usize },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("scale N = {n} is below the substitution threshold {threshold:.1}")]
    ScaleTooSmall { n: usize, threshold: f64 },

    #[error("avalanche hypothesis violated ({which:?})")]
    AvalancheHypothesis {
        which: AvalancheHypothesis,
        report: Box<AvalancheReport>,
    },

    #[error("inductive-step hypothesis violated at N0 ({which:?})")]
    InductionHypothesis {
        which: InductionHypothesis,
        report: Box<MultiscaleReport>,
    },

    #[error("integer overflow: {0}")]
    Overflow(String),

    #[error("every deviation fraction is zero (deviation set below sampling resolution)")]
    AllZeroFractions { reports: Vec<DeviationReport> },

    #[error("IDS grid too coarse: increment {increment:.4} at E = {energy}")]
    GridTooCoarse { increment: f64, energy: f64 },

    #[error("E = {energy} is within {tolerance:e} of an eigenvalue")]
    NearSingular { energy: f64, tolerance: f64 },

    #[error("no eigenvalues in [{lo}, {hi}]")]
    NoEigenvaluesInBand { lo: f64, hi: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
