//! The increasing-cycle estimator of `‖A‖_{2p}^{2p}`, its brute-force
//! oracle and the Hutchinson baseline.
//!
//! Given a sketch `Y` with `k` columns, let `Z = YᵀY` and `T` the strict
//! upper triangle of `Z`. Then
//!
//! ```text
//! θ̂_{2p} = C(k,p)⁻¹ · trace(T^{p-1} Z)
//!        = C(k,p)⁻¹ · Σ_{i₁<…<i_p} Z_{i₁i₂} Z_{i₂i₃} ⋯ Z_{i_p i₁}
//! ```
//!
//! is an unbiased estimator of `‖A‖_{2p}^{2p}` for Gaussian Ω.

use crate::bounds::binomial_f64;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::sketch::{RngStream, SketchMatrix};
use crate::spectra::SingularSpectrum;

/// Largest number of increasing cycles the brute-force oracle will visit.
pub const BRUTEFORCE_LIMIT: u64 = 1_000_000;

/// `Z = YᵀY`, exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    z: Matrix,
}

impl GramMatrix {
    /// Wraps a square matrix, symmetrising it as `(Z + Zᵀ)/2`.
    pub fn from_matrix(mut z: Matrix) -> Result<Self> {
        if z.rows() != z.cols() || z.rows() == 0 {
            return Err(Error::invalid(format!(
                "Gram matrix must be square and nonempty, got {}x{}",
                z.rows(),
                z.cols()
            )));
        }
        if !z.is_finite() {
            return Err(Error::invalid("Gram matrix has non-finite entries"));
        }
        let k = z.rows();
        for i in 0..k {
            for j in i + 1..k {
                let avg = 0.5 * (z[(i, j)] + z[(j, i)]);
                z[(i, j)] = avg;
                z[(j, i)] = avg;
            }
        }
        Ok(Self { z })
    }

    pub fn k(&self) -> usize {
        self.z.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.z
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.z[(i, j)]
    }
}

/// `Z = YᵀY`.
pub fn gram(y: &SketchMatrix) -> GramMatrix {
    let k = y.k();
    let (mut buf, mut z) = (Vec::new(), Vec::new());
    linalg::gram_into(y.data(), &mut buf, &mut z);
    GramMatrix {
        z: Matrix::from_row_major(k, k, z).expect("k*k entries"),
    }
}

/// A sequence of distinct 0-based column indices `(i₁, …, i_p)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cycle {
    indices: Vec<usize>,
}

impl Cycle {
    /// Validates that the indices are distinct and below `k`.
    pub fn new(indices: Vec<usize>, k: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::invalid("a cycle needs at least one index"));
        }
        let mut seen = vec![false; k];
        for &i in &indices {
            if i >= k {
                return Err(Error::invalid(format!(
                    "cycle index {i} out of range for k = {k}"
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid(format!("cycle index {i} repeated")));
            }
        }
        Ok(Self { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// `Z_τ = Π_ℓ Z_{i_ℓ, i_{ℓ+1}}` with `i_{p+1} = i₁`.
pub fn cycle_product(z: &GramMatrix, tau: &Cycle) -> f64 {
    cycle_product_raw(z.matrix(), tau.indices())
}

pub(crate) fn cycle_product_raw(z: &Matrix, idx: &[usize]) -> f64 {
    let p = idx.len();
    (0..p).map(|l| z[(idx[l], idx[(l + 1) % p])]).product()
}

/// One realisation of `θ̂_{2p}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorSample {
    pub value: f64,
    pub p: usize,
    pub k: usize,
    pub master_seed: u64,
    pub trial_index: u64,
}

impl EstimatorSample {
    /// The unnormalised `Θ̂_{2p} = C(k,p) · θ̂_{2p}`.
    pub fn rescaled(&self) -> f64 {
        self.value * binomial_f64(self.k as u64, self.p as u64)
    }
}

fn check_order(p: usize, k: usize) -> Result<()> {
    if p == 0 {
        return Err(Error::invalid("order p must be at least 1"));
    }
    if p > k {
        return Err(Error::OrderExceedsWidth { p, k });
    }
    Ok(())
}

/// Scratch buffers for repeated estimator evaluations. Reusing one per
/// worker avoids reallocating the k×k products on every trial.
#[derive(Debug, Default)]
pub struct Workspace {
    cols: Vec<f64>,
    z: Vec<f64>,
    pow: Vec<f64>,
    tmp: Vec<f64>,
    pub(crate) sketch: Vec<f64>,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// `θ̂_{2p}` of the row-major sketch `y` (rows × k).
    pub fn theta_hat(&mut self, y: &Matrix, p: usize) -> Result<f64> {
        let k = y.cols();
        check_order(p, k)?;
        linalg::gram_into(y, &mut self.cols, &mut self.z);
        Ok(self.theta_from_gram(k, p))
    }

    /// Same as [`Workspace::theta_hat`] but starting from a Gram matrix.
    pub fn theta_hat_gram(&mut self, z: &GramMatrix, p: usize) -> Result<f64> {
        let k = z.k();
        check_order(p, k)?;
        self.z.clear();
        self.z.extend_from_slice(z.matrix().as_slice());
        Ok(self.theta_from_gram(k, p))
    }

    fn theta_from_gram(&mut self, k: usize, p: usize) -> f64 {
        let z = &self.z;
        let trace = match p {
            1 => (0..k).map(|i| z[i * k + i]).sum::<f64>(),
            // T⁰ = I, so trace(TZ) = Σ_{i<j} Z_ij².
            2 => (0..k)
                .map(|i| {
                    z[i * k + i + 1..(i + 1) * k]
                        .iter()
                        .map(|v| v * v)
                        .sum::<f64>()
                })
                .sum(),
            _ => {
                // T itself is read straight out of Z: the kernel only touches
                // entries strictly above the diagonal.
                self.pow.clear();
                self.pow.extend_from_slice(z);
                for offset in 1..p - 1 {
                    linalg::upper_shifted_mul(&self.pow, offset, z, k, &mut self.tmp);
                    std::mem::swap(&mut self.pow, &mut self.tmp);
                }
                // ⟨T^{p-1}, Zᵀ⟩ over the support of T^{p-1} (j ≥ i + p - 1).
                let off = p - 1;
                (0..k.saturating_sub(off))
                    .map(|i| {
                        let row = i * k;
                        linalg::dot(
                            &self.pow[row + i + off..row + k],
                            &z[row + i + off..row + k],
                        )
                    })
                    .sum()
            }
        };
        trace / binomial_f64(k as u64, p as u64)
    }
}

/// Runs the estimator on one sketch.
pub fn theta_hat(y: &SketchMatrix, p: usize) -> Result<EstimatorSample> {
    let value = Workspace::new().theta_hat(y.data(), p)?;
    let origin = y.origin();
    Ok(EstimatorSample {
        value,
        p,
        k: y.k(),
        master_seed: origin.master_seed,
        trial_index: origin.stream_index,
    })
}

/// Averages `Z_τ` over every increasing p-cycle, visiting them in
/// lexicographic order. Exponential cost; refuses more than
/// [`BRUTEFORCE_LIMIT`] cycles.
pub fn theta_hat_bruteforce(z: &GramMatrix, p: usize) -> Result<f64> {
    let k = z.k();
    check_order(p, k)?;
    let count = binomial_f64(k as u64, p as u64);
    if count > BRUTEFORCE_LIMIT as f64 {
        return Err(Error::BudgetExceeded {
            count,
            limit: BRUTEFORCE_LIMIT,
        });
    }
    let mut idx: Vec<usize> = (0..p).collect();
    let (mut sum, mut visited) = (0.0, 0u64);
    loop {
        sum += cycle_product_raw(z.matrix(), &idx);
        visited += 1;
        // next combination
        let mut h = p;
        while h > 0 && idx[h - 1] == k - p + h - 1 {
            h -= 1;
        }
        if h == 0 {
            break;
        }
        idx[h - 1] += 1;
        for g in h..p {
            idx[g] = idx[g - 1] + 1;
        }
    }
    Ok(sum / visited as f64)
}

/// Gaussian Hutchinson estimate of `trace((AᵀA)^p) = ‖A‖_{2p}^{2p}` for
/// diagonal `A`, averaging `probes` quadratic forms `Σ_t σ_t^{2p} ω_t²`.
/// Its variance is `2‖A‖_{4p}^{4p} / probes`.
pub fn hutchinson_power(
    s: &SingularSpectrum,
    p: usize,
    probes: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    if p == 0 {
        return Err(Error::invalid("order p must be at least 1"));
    }
    if probes == 0 {
        return Err(Error::invalid("need at least one probe"));
    }
    let weights: Vec<f64> = s.values().iter().map(|v| v.powi(2 * p as i32)).collect();
    let mut total = 0.0;
    for _ in 0..probes {
        let mut q = 0.0;
        for &w in &weights {
            let g = rng.next_normal();
            q += w * g * g;
        }
        total += q;
    }
    Ok(total / probes as f64)
}
