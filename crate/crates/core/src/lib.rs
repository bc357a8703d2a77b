//! Continuous-variable entanglement distillation of non-Gaussian mixtures.
//!
//! A two-mode squeezed state is sent through a channel whose transmittance
//! fluctuates between discrete levels, producing a mixture of Gaussian
//! states. A weak homodyne tap on the transmitted mode heralds the strongly
//! entangled components. This crate computes the covariance-matrix algebra,
//! entanglement bounds and post-selected moments in closed form, and checks
//! all of it against a brute-force quadrature sampler.
//!
//! Module map:
//!
//! - [`gaussian`]: two-mode covariance matrices, symplectic eigenvalues,
//!   log-negativity, conditional-entropy bound, mixture upper bound.
//! - [`channel`]: source, fluctuating-loss channel, presets, Gaussian mixtures
//!   and their marginals.
//! - [`distill`]: tap and threshold heralding, conditional moments, sweeps and
//!   log-negativity error bars.
//! - [`montecarlo`]: seeded quadrature sampler and empirical estimators.
//! - [`records`] and [`scenario`]: record files, scenario configuration and
//!   the artifacts written by the `cvdistill` binary.
//!
//! Quadratures are ordered `(x_A, p_A, x_B, p_B)` and measured in shot-noise
//! units (vacuum variance 1).

// `!(x >= y)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod distill;
pub mod error;
pub mod gaussian;
pub mod montecarlo;
pub mod records;
pub mod scenario;
pub mod special;

pub use channel::{
    channel_preset, marginal_pdf, mixture_cm_via_averages, mixture_from_channel, subchannel_cm, ChannelPreset,
    GaussianMixture, LossChannel, Quadrature, SourceParams,
};
pub use distill::{
    conditional_moments_p, conditional_moments_x, detected_variance, distill, ln_error_monte_carlo,
    success_probability, threshold_sweep, DistillationResult, LnError, SweepRow, TapConfig,
};
pub use error::{Error, Result};
pub use gaussian::{
    conditional_entropy_lower_bound, entropy_f, gaussian_log_negativity, ptranspose, symplectic_eigenvalues,
    symplectic_eigenvalues_closed_form, symplectic_invariants, upper_bound_ln_mixture, EntanglementInterval,
    TwoModeCovariance,
};
pub use montecarlo::{acceptance_rate, empirical_cm, kurtosis_diagnostic, EstimatedCM, QuadratureRecord, Sampler};

/// Numerical tolerances shared by every module.
pub mod tol {
    /// Slack on physicality checks (symplectic eigenvalues >= 1 - PHYSICAL)
    /// and on clamping of tiny negative discriminants.
    pub const PHYSICAL: f64 = 1e-9;
    /// Allowed deviation of a probability vector's sum from one.
    pub const WEIGHT_SUM: f64 = 1e-9;
    /// Below this total success probability a selection is degenerate.
    pub const MIN_SUCCESS: f64 = 1e-300;
    /// Diagonal jitter used when a covariance matrix only barely fails a
    /// Cholesky factorization.
    pub const FACTOR_JITTER: f64 = 1e-12;
    /// Agreement required between the printed closed forms and the
    /// truncated-Gaussian derivation before a discrepancy is reported.
    pub const PRINTED_FORM: f64 = 1e-9;
}
