//! Frequency-domain limit laws of causal linear processes, checked at desk
//! scale: exact pathwise decompositions, analytic condition evaluators, and a
//! freeze-the-past / resample-the-future Monte Carlo protocol for the
//! conditional (quenched) limit distributions of normalized discrete Fourier
//! transform paths.

pub mod conditions;
pub mod error;
pub mod model;
pub mod quenched;
pub mod rng;
mod special;
pub mod stats;
pub mod transform;

pub use conditions::{
    classify_frequency, classify_frequency_with_roots, ergodic_average_check, evaluate_conditions,
    sigma2_estimator, sigma2_finite_n_exact, ConditionReport, ErgodicCheck, ErgodicFunctional,
    Estimate, FrequencyClass, Verdict,
};
pub use error::{CoreError, Result};
pub use model::{
    cond_exp_x, projection_coef, sample_past, simulate_future, CoefficientFamily,
    CoefficientKind, CondBase, InnovationDistribution, InnovationKind, InnovationView,
    PastRealization, TrajectoryBundle,
};
pub use quenched::{
    averaged_w1_samples, past_dispersion_check, path_max_samples, run_anisotropy_probe,
    run_averaged_frequency_test, run_fdd_test, run_path_functional_test, w_samples,
    DispersionReport, FddTestReport, MixtureStats, PathFunctionalReport, PathSource,
    QuenchedExperiment, ReportKind, ThetaMode, TimePointStats, TolerancePolicy,
};
pub use transform::{
    decay_diagnostic, decomposition_residual, decomposition_terms, default_grid_points,
    dft_partial, doob_max_check, m_path, martingale_approximant, rotated_prefix_sums,
    transfer_partial, transfer_prefix, transfer_series, w_path, ComplexPath, DecayMatrix,
    DecompositionCheck, DecompositionTerms, DoobCheck, MartingaleApproximant, MartingaleOrder,
    Rotor, SeriesValue,
};

/// Run `f` under the thread cap requested via `QDFTLAB_THREADS` (if set).
/// Replicate aggregation is index-ordered everywhere, so results are
/// independent of the pool size.
pub fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    match std::env::var("QDFTLAB_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        Some(threads) if threads >= 1 => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("failed to build thread pool")
            .install(f),
        _ => f(),
    }
}
