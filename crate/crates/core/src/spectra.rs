//! Singular spectra and Schatten norm powers.
//!
//! Orthogonal invariance of the Gaussian sketch means a matrix can be
//! replaced by the diagonal matrix of its singular values, so every
//! experiment works directly on a [`SingularSpectrum`].

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Nonnegative singular values in non-increasing order, plus the ambient
/// dimension `n`. Values beyond the stored ones are implicitly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularSpectrum {
    values: Vec<f64>,
    nominal_n: usize,
}

impl SingularSpectrum {
    /// Builds a spectrum whose ambient dimension equals the number of values.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::with_nominal_n(values, n)
    }

    /// Builds a spectrum with an explicit ambient dimension `nominal_n`,
    /// which must be at least the number of stored values.
    pub fn with_nominal_n(mut values: Vec<f64>, nominal_n: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("spectrum must contain at least one value"));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid(format!(
                "singular values must be finite and nonnegative, got {bad}"
            )));
        }
        if nominal_n < values.len() {
            return Err(Error::invalid(format!(
                "nominal dimension {nominal_n} is smaller than the {} stored values",
                values.len()
            )));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        // -0.0 sorts below +0.0 under total_cmp; normalise so equality is structural.
        values.iter_mut().for_each(|v| *v += 0.0);
        Ok(Self { values, nominal_n })
    }

    /// Singular values, largest first.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn nominal_n(&self) -> usize {
        self.nominal_n
    }

    pub fn is_zero(&self) -> bool {
        self.values[0] == 0.0
    }

    /// `‖A‖_q^q = Σ σ_i^q`, summed from the smallest term up.
    pub fn schatten_power(&self, q: u32) -> Result<f64> {
        if q == 0 {
            return Err(Error::invalid("Schatten exponent q must be at least 1"));
        }
        Ok(self.schatten_power_unchecked(q))
    }

    pub(crate) fn schatten_power_unchecked(&self, q: u32) -> f64 {
        debug_assert!(q >= 1);
        self.values.iter().rev().map(|&s| pow_u(s, q)).sum()
    }

    /// Multiplies every singular value by `c >= 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::invalid(format!(
                "scale factor must be finite and >= 0, got {c}"
            )));
        }
        Self::with_nominal_n(self.values.iter().map(|v| v * c).collect(), self.nominal_n)
    }
}

/// `x^q` by binary exponentiation.
#[inline]
pub(crate) fn pow_u(x: f64, q: u32) -> f64 {
    x.powi(q as i32)
}

/// Convenience wrapper for [`SingularSpectrum::schatten_power`].
pub fn schatten_power(s: &SingularSpectrum, q: u32) -> Result<f64> {
    s.schatten_power(q)
}

/// The test spectra used throughout the experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BuiltinSpectrum {
    /// `(ρ, ρ², …, ρⁿ)` for `ρ ∈ (0, 1]`.
    Geometric { rho: f64, n: usize },
    /// `(1, 2^{-α}, …, n^{-α})` for `α ≥ 0`.
    Algebraic { alpha: f64, n: usize },
    /// `n` ones.
    Identity { n: usize },
}

/// Materialises one of the built-in spectra.
pub fn builtin_spectrum(kind: BuiltinSpectrum) -> Result<SingularSpectrum> {
    match kind {
        BuiltinSpectrum::Geometric { rho, n } => {
            check_n(n)?;
            if !(rho > 0.0 && rho <= 1.0) {
                return Err(Error::invalid(format!(
                    "geometric ratio must lie in (0, 1], got {rho}"
                )));
            }
            let values = (1..=n).map(|i| rho.powi(i as i32)).collect();
            SingularSpectrum::new(values)
        }
        BuiltinSpectrum::Algebraic { alpha, n } => {
            check_n(n)?;
            if !(alpha.is_finite() && alpha >= 0.0) {
                return Err(Error::invalid(format!(
                    "algebraic exponent must be >= 0, got {alpha}"
                )));
            }
            let values = (1..=n).map(|i| (i as f64).powf(-alpha)).collect();
            SingularSpectrum::new(values)
        }
        BuiltinSpectrum::Identity { n } => {
            check_n(n)?;
            SingularSpectrum::new(vec![1.0; n])
        }
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::invalid("spectrum dimension n must be positive"))
    } else {
        Ok(())
    }
}

/// Spectrum of the block-diagonal matrix `diag(A, A, …)` with `2^{t-1}`
/// copies of `A`.
pub fn block_replicate(base: &SingularSpectrum, t: u32) -> Result<SingularSpectrum> {
    if t == 0 {
        return Err(Error::invalid("replication level t must be at least 1"));
    }
    if t > 40 {
        return Err(Error::invalid(format!(
            "replication level t = {t} is unreasonably large"
        )));
    }
    let copies = 1usize << (t - 1);
    let mut values = Vec::with_capacity(base.len() * copies);
    for _ in 0..copies {
        values.extend_from_slice(base.values());
    }
    SingularSpectrum::with_nominal_n(values, base.nominal_n() * copies)
}

/// Parsed form of the textual spectrum grammar:
///
/// ```text
/// geometric:rho=0.8,n=100
/// algebraic:alpha=2,n=100
/// identity:n=100
/// replicate:base=<spec>,t=4
/// explicit:v1,v2,...
/// ```
#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumSpec {
    Builtin(BuiltinSpectrum),
    Replicate { base: Box<SpectrumSpec>, t: u32 },
    Explicit(Vec<f64>),
}

impl SpectrumSpec {
    pub fn build(&self) -> Result<SingularSpectrum> {
        match self {
            SpectrumSpec::Builtin(b) => builtin_spectrum(*b),
            SpectrumSpec::Replicate { base, t } => block_replicate(&base.build()?, *t),
            SpectrumSpec::Explicit(v) => SingularSpectrum::new(v.clone()),
        }
    }
}

impl FromStr for SpectrumSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let fail = |reason: &str| Error::SpectrumSyntax {
            spec: s.to_string(),
            reason: reason.to_string(),
        };
        let s = s.trim();
        let (kind, rest) = s.split_once(':').ok_or_else(|| fail("missing `kind:`"))?;
        match kind {
            "geometric" => {
                let kv = key_values(rest).map_err(|r| fail(&r))?;
                let rho = lookup(&kv, "rho").map_err(|r| fail(&r))?;
                let n = lookup(&kv, "n").map_err(|r| fail(&r))?;
                expect_keys(&kv, &["rho", "n"]).map_err(|r| fail(&r))?;
                Ok(SpectrumSpec::Builtin(BuiltinSpectrum::Geometric { rho, n }))
            }
            "algebraic" => {
                let kv = key_values(rest).map_err(|r| fail(&r))?;
                let alpha = lookup(&kv, "alpha").map_err(|r| fail(&r))?;
                let n = lookup(&kv, "n").map_err(|r| fail(&r))?;
                expect_keys(&kv, &["alpha", "n"]).map_err(|r| fail(&r))?;
                Ok(SpectrumSpec::Builtin(BuiltinSpectrum::Algebraic {
                    alpha,
                    n,
                }))
            }
            "identity" => {
                let kv = key_values(rest).map_err(|r| fail(&r))?;
                let n = lookup(&kv, "n").map_err(|r| fail(&r))?;
                expect_keys(&kv, &["n"]).map_err(|r| fail(&r))?;
                Ok(SpectrumSpec::Builtin(BuiltinSpectrum::Identity { n }))
            }
            "replicate" => {
                // The base spec may itself contain commas, so peel `t=` off
                // whichever end it sits on.
                let (base, t) = if let Some(tail) = rest.strip_prefix("t=") {
                    let (t, base) = tail.split_once(',').ok_or_else(|| fail("missing base"))?;
                    (base, t)
                } else {
                    let (base, t) = rest.rsplit_once(',').ok_or_else(|| fail("missing t"))?;
                    let t = t
                        .strip_prefix("t=")
                        .ok_or_else(|| fail("expected `t=` last"))?;
                    (base, t)
                };
                let base = base
                    .strip_prefix("base=")
                    .ok_or_else(|| fail("expected `base=`"))?;
                let t: u32 = t
                    .trim()
                    .parse()
                    .map_err(|_| fail("t must be a positive integer"))?;
                Ok(SpectrumSpec::Replicate {
                    base: Box::new(base.parse()?),
                    t,
                })
            }
            "explicit" => {
                let values = rest
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| fail(&format!("bad value: {e}")))?;
                Ok(SpectrumSpec::Explicit(values))
            }
            other => Err(fail(&format!("unknown spectrum kind `{other}`"))),
        }
    }
}

impl fmt::Display for SpectrumSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpectrumSpec::Builtin(BuiltinSpectrum::Geometric { rho, n }) => {
                write!(f, "geometric:rho={rho},n={n}")
            }
            SpectrumSpec::Builtin(BuiltinSpectrum::Algebraic { alpha, n }) => {
                write!(f, "algebraic:alpha={alpha},n={n}")
            }
            SpectrumSpec::Builtin(BuiltinSpectrum::Identity { n }) => write!(f, "identity:n={n}"),
            SpectrumSpec::Replicate { base, t } => write!(f, "replicate:base={base},t={t}"),
            SpectrumSpec::Explicit(v) => {
                f.write_str("explicit:")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{x}")?;
                }
                Ok(())
            }
        }
    }
}

fn key_values(rest: &str) -> std::result::Result<Vec<(&str, &str)>, String> {
    rest.split(',')
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| format!("expected key=value, got `{kv}`"))
        })
        .collect()
}

fn lookup<T: FromStr>(kv: &[(&str, &str)], key: &str) -> std::result::Result<T, String> {
    let raw = kv
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| format!("missing `{key}`"))?;
    raw.parse()
        .map_err(|_| format!("bad value for `{key}`: `{raw}`"))
}

fn expect_keys(kv: &[(&str, &str)], allowed: &[&str]) -> std::result::Result<(), String> {
    match kv.iter().find(|(k, _)| !allowed.contains(k)) {
        Some((k, _)) => Err(format!("unexpected key `{k}`")),
        None => Ok(()),
    }
}
