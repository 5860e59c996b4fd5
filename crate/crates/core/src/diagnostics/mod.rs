//! Monte Carlo probes of moment bounds, support, the martingale problem,
//! uniqueness of marginals and the Markov property. Every probe returns a
//! [`DiagnosticReport`] carrying its estimate, standard error and verdict.

mod integrals;
mod marginal;
mod martingale;
mod report;
mod support;

pub use integrals::{
    fit_khasminskii_c, floor_sweep, khasminskii_bound, khasminskii_estimate, khasminskii_report, novikov_chain_bound,
    novikov_estimate, novikov_report, path_integrals, IntegralObserver, KhasminskiiParams, SingularIntegrand,
    SmallnessOptions,
};
pub use marginal::{
    ks_threshold, marginal_compare, restart_consistency, weighted_ks_statistic, KS_COEFFICIENT_1PCT,
};
pub use martingale::{fit_dt_slope, martingale_residual, residual_report, residual_terms, ResidualOptions, ResidualTerms};
pub use report::{Check, DiagnosticReport, Verdict};
pub use support::{default_c_tol, support_report};
