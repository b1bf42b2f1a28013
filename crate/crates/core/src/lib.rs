//! Numerical laboratory for one-frequency quasi-periodic Schrödinger
//! cocycles with Gevrey potentials.
//!
//! The operator is `(Hu)_n = u_{n+1} + u_{n-1} + λ v(x + nω) u_n` on `ℓ²(Z)`;
//! its transfer matrices, Lyapunov exponents, large-deviation behaviour and
//! finite-box spectra are computed by the modules below.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arithmetic;
pub mod cocycle;
pub mod deviations;
pub mod error;
pub mod fit;
pub mod gevrey;
pub mod lyapunov;
pub mod spectral;

pub use arithmetic::{best_approximants, diophantine_margin, torus_dist, Approximant, Frequency};
pub use cocycle::{
    default_s_lambda, shift_defect, substitute_defect, transfer_log_norm, transfer_product,
    CocycleParams, LogProduct, SL2,
};
pub use deviations::{
    fejer_coeffs, kernel_value, ldt_empirical, shift_average, DeviationReport, FejerKernel,
};
pub use error::{Error, Result};
pub use fit::LineFit;
pub use gevrey::{
    loja_exponent_fit, truncate, EnergySet, FourierPotential, LojaFit, Potential,
    TruncatedPotential,
};
pub use lyapunov::{
    avalanche_check, finite_lyapunov, lyapunov_curve, multiscale_estimate, AvalancheReport,
    LyapunovCurve, MultiscaleConfig, MultiscaleReport,
};
pub use spectral::{
    eigenvalue_count, green_entry, ids, localize_eigenvectors, thouless_residual, IdsCurve,
    LocalizedState, SpectralBox,
};
