//! Seeded Gaussian sketches `Y = AΩ`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::spectra::SingularSpectrum;

/// A deterministic stream of standard normal variates, identified by a
/// master seed and a stream (trial) index.
///
/// Backed by ChaCha8 with the master seed as key and the stream index as
/// the ChaCha stream id, so every `(master_seed, stream_index)` pair owns a
/// separate keystream.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_index: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_index);
        Self {
            master_seed,
            stream_index,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Next N(0, 1) draw.
    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = self.next_normal());
    }

    /// Uniform draw in `[0, 1)`.
    pub fn next_uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

/// Stream for trial `trial_index` under `master_seed`. Pure: the same pair
/// always yields the same sequence.
pub fn derive_trial_rng(master_seed: u64, trial_index: u64) -> RngStream {
    RngStream::new(master_seed, trial_index)
}

/// Where a sketch came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SketchSource {
    /// Diagonal fast path over a singular spectrum with this many stored values.
    Spectrum { len: usize },
    /// Dense `m×n` input matrix.
    Dense { rows: usize, cols: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SketchOrigin {
    pub source: SketchSource,
    pub master_seed: u64,
    pub stream_index: u64,
}

/// The sketch `Y` (rows × k).
#[derive(Debug, Clone, PartialEq)]
pub struct SketchMatrix {
    data: Matrix,
    origin: SketchOrigin,
}

impl SketchMatrix {
    /// Wraps an externally produced sketch. Useful when `Y` comes from data
    /// rather than from one of the generators here.
    pub fn from_matrix(data: Matrix, master_seed: u64, stream_index: u64) -> Result<Self> {
        if data.cols() == 0 {
            return Err(Error::invalid("sketch must have at least one column"));
        }
        if !data.is_finite() {
            return Err(Error::invalid("sketch contains non-finite entries"));
        }
        let origin = SketchOrigin {
            source: SketchSource::Dense {
                rows: data.rows(),
                cols: data.cols(),
            },
            master_seed,
            stream_index,
        };
        Ok(Self { data, origin })
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn k(&self) -> usize {
        self.data.cols()
    }

    pub fn rows(&self) -> usize {
        self.data.rows()
    }

    pub fn origin(&self) -> SketchOrigin {
        self.origin
    }

    pub fn into_matrix(self) -> Matrix {
        self.data
    }
}

/// Fills `out` (row-major `len×k`) with the diagonal sketch and returns it
/// as a matrix. Normals are consumed column-major over Ω.
pub(crate) fn diag_sketch_matrix(
    values: &[f64],
    k: usize,
    rng: &mut RngStream,
    mut buf: Vec<f64>,
) -> Matrix {
    let n = values.len();
    buf.clear();
    buf.resize(n * k, 0.0);
    for l in 0..k {
        for (t, &sigma) in values.iter().enumerate() {
            buf[t * k + l] = sigma * rng.next_normal();
        }
    }
    Matrix::from_row_major(n, k, buf).expect("buffer sized above")
}

/// Sketch of `diag(s)`: `Y[t][l] = σ_t · ω_{t,l}`, cost O(n·k).
pub fn gaussian_sketch_diag(
    s: &SingularSpectrum,
    k: usize,
    mut rng: RngStream,
) -> Result<SketchMatrix> {
    if k == 0 {
        return Err(Error::invalid("sketch width k must be at least 1"));
    }
    let origin = SketchOrigin {
        source: SketchSource::Spectrum { len: s.len() },
        master_seed: rng.master_seed(),
        stream_index: rng.stream_index(),
    };
    let data = diag_sketch_matrix(s.values(), k, &mut rng, Vec::new());
    Ok(SketchMatrix { data, origin })
}

/// Sketch `Y = AΩ` of a dense `m×n` matrix with Ω drawn column-major.
pub fn gaussian_sketch_dense(a: &Matrix, k: usize, mut rng: RngStream) -> Result<SketchMatrix> {
    if k == 0 {
        return Err(Error::invalid("sketch width k must be at least 1"));
    }
    if a.is_empty() {
        return Err(Error::invalid("cannot sketch an empty matrix"));
    }
    if !a.is_finite() {
        return Err(Error::invalid("input matrix has non-finite entries"));
    }
    let n = a.cols();
    let mut omega = Matrix::zeros(n, k);
    for l in 0..k {
        for j in 0..n {
            omega[(j, l)] = rng.next_normal();
        }
    }
    let data = a.matmul(&omega)?;
    Ok(SketchMatrix {
        data,
        origin: SketchOrigin {
            source: SketchSource::Dense {
                rows: a.rows(),
                cols: a.cols(),
            },
            master_seed: rng.master_seed(),
            stream_index: rng.stream_index(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma).powi(2);
            sbb += (y - mb).powi(2);
        }
        sab / (saa * sbb).sqrt()
    }

    fn draws(seed: u64, idx: u64, n: usize) -> Vec<f64> {
        let mut r = derive_trial_rng(seed, idx);
        (0..n).map(|_| r.next_normal()).collect()
    }

    #[test]
    fn streams_are_deterministic() {
        assert_eq!(draws(42, 7, 100), draws(42, 7, 100));
    }

    #[test]
    fn streams_are_decorrelated() {
        let base = draws(42, 0, 10_000);
        assert!(corr(&base, &draws(42, 1, 10_000)).abs() < 0.05);
        assert!(corr(&base, &draws(43, 0, 10_000)).abs() < 0.05);
        assert_ne!(draws(42, 0, 4), draws(42, 1, 4));
    }

    #[test]
    fn zero_spectrum_gives_zero_sketch() {
        let s = SingularSpectrum::new(vec![0.0; 5]).unwrap();
        let y = gaussian_sketch_diag(&s, 3, derive_trial_rng(1, 0)).unwrap();
        assert!(y.data().as_slice().iter().all(|&x| x == 0.0));
        assert_eq!((y.rows(), y.k()), (5, 3));
    }

    #[test]
    fn width_zero_rejected() {
        let s = SingularSpectrum::new(vec![1.0]).unwrap();
        assert!(gaussian_sketch_diag(&s, 0, derive_trial_rng(1, 0)).is_err());
        assert!(gaussian_sketch_dense(&Matrix::identity(2), 0, derive_trial_rng(1, 0)).is_err());
        assert!(gaussian_sketch_dense(&Matrix::zeros(0, 0), 2, derive_trial_rng(1, 0)).is_err());
    }

    #[test]
    fn dense_zero_gives_zero() {
        let y = gaussian_sketch_dense(&Matrix::zeros(3, 4), 2, derive_trial_rng(9, 9)).unwrap();
        assert!(y.data().as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn dense_diag_matches_fast_path() {
        let s = SingularSpectrum::new(vec![2.0, 1.0, 0.5, 0.0]).unwrap();
        let fast = gaussian_sketch_diag(&s, 5, derive_trial_rng(3, 11)).unwrap();
        let dense =
            gaussian_sketch_dense(&Matrix::diag(s.values()), 5, derive_trial_rng(3, 11)).unwrap();
        assert_eq!(fast.data(), dense.data());
    }

    #[test]
    fn regeneration_is_bit_identical_and_scale_equivariant() {
        let s = SingularSpectrum::new(vec![1.0, 0.3, 0.1]).unwrap();
        let a = gaussian_sketch_diag(&s, 4, derive_trial_rng(5, 2)).unwrap();
        let b = gaussian_sketch_diag(&s, 4, derive_trial_rng(5, 2)).unwrap();
        assert_eq!(a, b);
        let c = gaussian_sketch_diag(&s.scaled(2.5).unwrap(), 4, derive_trial_rng(5, 2)).unwrap();
        for (x, y) in a.data().as_slice().iter().zip(c.data().as_slice()) {
            assert!((2.5 * x - y).abs() <= 1e-15 * y.abs());
        }
    }

    #[test]
    fn identity_columns_have_chi_square_mean() {
        let n = 8;
        let s = SingularSpectrum::new(vec![1.0; n]).unwrap();
        let cols = 100_000;
        let y = gaussian_sketch_diag(&s, cols, derive_trial_rng(17, 0)).unwrap();
        let norms: Vec<f64> = (0..cols)
            .map(|l| (0..n).map(|t| y.data()[(t, l)].powi(2)).sum())
            .collect();
        let mean = norms.iter().sum::<f64>() / cols as f64;
        let var = norms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (cols - 1) as f64;
        assert!((mean - n as f64).abs() < 4.0 * (var / cols as f64).sqrt());
    }

    #[test]
    fn single_entry_is_standard_normal() {
        let sigma = 3.0;
        let s = SingularSpectrum::new(vec![sigma]).unwrap();
        let trials = 1_000_000u64;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for i in 0..trials {
            let y = gaussian_sketch_diag(&s, 1, derive_trial_rng(2024, i)).unwrap();
            let z = y.data()[(0, 0)] / sigma;
            sum += z;
            sumsq += z * z;
        }
        let n = trials as f64;
        let mean = sum / n;
        let var = (sumsq - n * mean * mean) / (n - 1.0);
        assert!(mean.abs() < 4e-3, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }
}
