//! Shared fixtures for the benchmarks.

use schatten_core::{
    builtin_spectrum, derive_trial_rng, gaussian_sketch_diag, BuiltinSpectrum, SingularSpectrum,
    SketchMatrix,
};

/// `0.8, 0.8², …, 0.8ⁿ`.
pub fn geometric(n: usize) -> SingularSpectrum {
    builtin_spectrum(BuiltinSpectrum::Geometric { rho: 0.8, n }).unwrap()
}

/// A fixed sketch of `geometric(n)` with `k` columns.
pub fn sketch(n: usize, k: usize) -> SketchMatrix {
    gaussian_sketch_diag(&geometric(n), k, derive_trial_rng(1, 0)).unwrap()
}
