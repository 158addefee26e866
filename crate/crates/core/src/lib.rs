//! Schatten-2p norm estimation from a single Gaussian sketch.
//!
//! The estimator averages products of Gram-matrix entries along increasing
//! cycles of sketch columns. Alongside it live the variance bounds and
//! expansions, a seeded Monte Carlo harness and a set of deterministic
//! self-checks.
//!
//! ```
//! use schatten_core::{derive_trial_rng, gaussian_sketch_diag, theta_hat, SingularSpectrum};
//!
//! let s = SingularSpectrum::new(vec![1.0, 0.5, 0.25]).unwrap();
//! let y = gaussian_sketch_diag(&s, 16, derive_trial_rng(7, 0)).unwrap();
//! let est = theta_hat(&y, 2).unwrap();
//! assert!(est.value.is_finite());
//! ```

pub mod bounds;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod linalg;
pub mod sketch;
pub mod spectra;
pub mod verify;

pub use bounds::{
    binomial, binomial_f64, c_coeff, expected_f, f_upper, first_order_estimate, kv_bound,
    log_binomial, schatten_product_leq, second_order_estimate, theorem2_bound, tuple_count,
    BoundSet,
};
pub use error::{Error, Result};
pub use estimator::{
    cycle_product, gram, hutchinson_power, theta_hat, theta_hat_bruteforce, Cycle, EstimatorSample,
    GramMatrix, Workspace, BRUTEFORCE_LIMIT,
};
pub use experiments::{
    emit_csv, estimator_samples, figure_configs, mc_check_lemma_f, parse_csv,
    run_variance_experiment, sample_variance, variance_report, ExperimentConfig, LemmaCheck,
    SampleStats, SkippedCell, TrialsPolicy, VarianceReport, VarianceRow,
};
pub use linalg::Matrix;
pub use sketch::{
    derive_trial_rng, gaussian_sketch_dense, gaussian_sketch_diag, RngStream, SketchMatrix,
    SketchOrigin, SketchSource,
};
pub use spectra::{
    block_replicate, builtin_spectrum, schatten_power, BuiltinSpectrum, SingularSpectrum,
    SpectrumSpec,
};
pub use verify::{run_checks, CheckOutcome};
