//! Seeded Monte Carlo harness for the empirical variance of `θ̂_{2p}`.
//!
//! A run is a grid of `(p, k)` cells over one spectrum. Trial `i` of the
//! whole run uses [`derive_trial_rng`]`(master_seed, i)`, with indices
//! allocated contiguously per cell in config order (p outer, k inner).
//! Trials run in parallel, but per-trial values are collected in index
//! order and reduced with a fixed pairwise tree, so the report does not
//! depend on the number of workers.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{expected_f, f_upper, BoundSet};
use crate::error::{Error, Result};
use crate::estimator::{cycle_product_raw, Workspace};
use crate::linalg::{self, Matrix};
use crate::sketch::{derive_trial_rng, diag_sketch_matrix, RngStream};
use crate::spectra::{SingularSpectrum, SpectrumSpec};

/// Header of the variance CSV.
pub const CSV_HEADER: &str =
    "n,p,k,trials,mean_estimate,empirical_variance,variance_stderr,truth_2p,kv,thm2,first_order,second_order";

/// How many trials to run per cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialsPolicy {
    /// 100 000 trials when `k < 100`, 3 000 otherwise.
    Paper,
    Explicit(u64),
}

impl TrialsPolicy {
    pub fn trials_for(self, k: u64) -> u64 {
        match self {
            TrialsPolicy::Paper if k < 100 => 100_000,
            TrialsPolicy::Paper => 3_000,
            TrialsPolicy::Explicit(t) => t,
        }
    }
}

impl Serialize for TrialsPolicy {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TrialsPolicy::Paper => ser.serialize_str("paper"),
            TrialsPolicy::Explicit(t) => ser.serialize_u64(*t),
        }
    }
}

impl<'de> Deserialize<'de> for TrialsPolicy {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Name(String),
        }
        match Raw::deserialize(de)? {
            Raw::Count(t) => Ok(TrialsPolicy::Explicit(t)),
            Raw::Name(s) if s == "paper" => Ok(TrialsPolicy::Paper),
            Raw::Name(s) => Err(serde::de::Error::custom(format!(
                "trials_policy must be \"paper\" or a trial count, got \"{s}\""
            ))),
        }
    }
}

/// One experiment grid. Deserialised from the JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub spectrum_spec: String,
    pub p_list: Vec<u64>,
    pub k_list: Vec<u64>,
    pub trials_policy: TrialsPolicy,
    pub master_seed: u64,
    pub output_path: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.spectrum()?;
        if self.p_list.is_empty() || self.k_list.is_empty() {
            return Err(Error::Config("p_list and k_list must be nonempty".into()));
        }
        if self.p_list.contains(&0) || self.k_list.contains(&0) {
            return Err(Error::Config("p and k values must be positive".into()));
        }
        if self.k_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("k_list must be strictly increasing".into()));
        }
        if let TrialsPolicy::Explicit(t) = self.trials_policy {
            if t < 2 {
                return Err(Error::Config(
                    "at least 2 trials per cell are required".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn spectrum(&self) -> Result<SingularSpectrum> {
        self.spectrum_spec.parse::<SpectrumSpec>()?.build()
    }
}

/// One `(p, k)` cell of a variance experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceRow {
    pub n: u64,
    pub p: u64,
    pub k: u64,
    pub trials: u64,
    pub mean_estimate: f64,
    pub empirical_variance: f64,
    pub variance_stderr: f64,
    pub truth_2p: f64,
    pub kv: f64,
    pub thm2: f64,
    pub first_order: f64,
    pub second_order: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkippedCell {
    pub p: u64,
    pub k: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VarianceReport {
    pub rows: Vec<VarianceRow>,
    /// Cells dropped because `p > k`.
    pub skipped: Vec<SkippedCell>,
}

/// Sample mean, unbiased variance and the standard error of that variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleStats {
    pub mean: f64,
    pub variance: f64,
    pub variance_stderr: f64,
}

/// Deterministic pairwise (tree) summation.
fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if xs.len() <= LEAF {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Mean, unbiased variance (divisor `T − 1`) and
/// `sqrt((m₄ − (T−3)/(T−1)·var²)/T)` with `m₄` the fourth central moment.
pub fn sample_variance(samples: &[f64]) -> Result<SampleStats> {
    let t = samples.len();
    if t < 2 {
        return Err(Error::invalid(format!("need at least 2 samples, got {t}")));
    }
    let tf = t as f64;
    let mean = pairwise_sum(samples) / tf;
    let sq: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
    let variance = pairwise_sum(&sq) / (tf - 1.0);
    let quart: Vec<f64> = sq.iter().map(|d2| d2 * d2).collect();
    let m4 = pairwise_sum(&quart) / tf;
    let vv = (m4 - (tf - 3.0) / (tf - 1.0) * variance * variance) / tf;
    Ok(SampleStats {
        mean,
        variance,
        variance_stderr: vv.max(0.0).sqrt(),
    })
}

/// Runs `trials` estimator evaluations on sketches of `s` with width `k`,
/// using streams `first_index .. first_index + trials`.
pub fn estimator_samples(
    s: &SingularSpectrum,
    p: usize,
    k: usize,
    trials: u64,
    master_seed: u64,
    first_index: u64,
) -> Result<Vec<f64>> {
    if p == 0 || p > k {
        return Err(Error::OrderExceedsWidth { p, k });
    }
    let values = s.values();
    let out = (0..trials)
        .into_par_iter()
        .map_init(Workspace::new, |ws, i| {
            let mut rng = derive_trial_rng(master_seed, first_index + i);
            let buf = std::mem::take(&mut ws.sketch);
            let y = diag_sketch_matrix(values, k, &mut rng, buf);
            let v = ws.theta_hat(&y, p).expect("order checked above");
            ws.sketch = y.into_vec();
            v
        })
        .collect();
    Ok(out)
}

/// Computes the report without touching the filesystem.
pub fn variance_report(cfg: &ExperimentConfig) -> Result<VarianceReport> {
    cfg.validate()?;
    let s = cfg.spectrum()?;
    let mut report = VarianceReport::default();
    let mut next_index = 0u64;
    for &p in &cfg.p_list {
        for &k in &cfg.k_list {
            if p > k {
                warn!("skipping cell p = {p}, k = {k}: p exceeds k");
                report.skipped.push(SkippedCell { p, k });
                continue;
            }
            let trials = cfg.trials_policy.trials_for(k);
            info!("cell p = {p}, k = {k}: {trials} trials from stream {next_index}");
            let samples = estimator_samples(
                &s,
                p as usize,
                k as usize,
                trials,
                cfg.master_seed,
                next_index,
            )?;
            next_index += trials;
            let stats = sample_variance(&samples)?;
            let bounds = BoundSet::compute(k, p, &s)?;
            report.rows.push(VarianceRow {
                n: s.nominal_n() as u64,
                p,
                k,
                trials,
                mean_estimate: stats.mean,
                empirical_variance: stats.variance,
                variance_stderr: stats.variance_stderr,
                truth_2p: bounds.truth_2p,
                kv: bounds.kv,
                thm2: bounds.thm2,
                first_order: bounds.first_order,
                second_order: bounds.second_order,
            });
        }
    }
    Ok(report)
}

/// Runs the grid and writes the CSV to `cfg.output_path`. The output file
/// is opened before any trial runs, so a bad path fails fast.
pub fn run_variance_experiment(cfg: &ExperimentConfig) -> Result<VarianceReport> {
    cfg.validate()?;
    let path = &cfg.output_path;
    let existed = path.exists();
    fs::OpenOptions::new()
        .write(true)
        .create(true)
        .truncate(false)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let report = match variance_report(cfg) {
        Ok(r) if !r.rows.is_empty() => r,
        other => {
            if !existed {
                let _ = fs::remove_file(path);
            }
            other?;
            return Err(Error::Config("every cell was skipped (p > k)".into()));
        }
    };
    emit_csv(&report, path)?;
    Ok(report)
}

fn fmt_f64(out: &mut String, x: f64) {
    // 17 significant digits round-trip every finite double.
    if x.is_finite() {
        let _ = write!(out, "{x:.16e}");
    } else {
        let _ = write!(out, "{x}");
    }
}

/// Serialises a report to CSV text.
pub fn report_to_csv(report: &VarianceReport) -> String {
    let mut out = String::with_capacity(64 + 256 * report.rows.len());
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        let _ = write!(out, "{},{},{},{}", r.n, r.p, r.k, r.trials);
        for x in [
            r.mean_estimate,
            r.empirical_variance,
            r.variance_stderr,
            r.truth_2p,
            r.kv,
            r.thm2,
            r.first_order,
            r.second_order,
        ] {
            out.push(',');
            fmt_f64(&mut out, x);
        }
        out.push('\n');
    }
    out
}

/// Writes the report as CSV. An empty report is an error and creates no file.
pub fn emit_csv(report: &VarianceReport, path: &Path) -> Result<()> {
    if report.rows.is_empty() {
        return Err(Error::invalid("refusing to write an empty report"));
    }
    let text = report_to_csv(report);
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Parses CSV text produced by [`emit_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<VarianceRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => {
            return Err(Error::invalid(format!(
                "unexpected CSV header: {:?}",
                other.unwrap_or("")
            )))
        }
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 12 {
            return Err(Error::invalid(format!(
                "row {}: expected 12 fields, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        let int = |i: usize| -> Result<u64> {
            fields[i].trim().parse().map_err(|_| {
                Error::invalid(format!("row {}, column {}: bad integer", lineno + 2, i + 1))
            })
        };
        let real = |i: usize| -> Result<f64> {
            fields[i].trim().parse().map_err(|_| {
                Error::invalid(format!("row {}, column {}: bad number", lineno + 2, i + 1))
            })
        };
        rows.push(VarianceRow {
            n: int(0)?,
            p: int(1)?,
            k: int(2)?,
            trials: int(3)?,
            mean_estimate: real(4)?,
            empirical_variance: real(5)?,
            variance_stderr: real(6)?,
            truth_2p: real(7)?,
            kv: real(8)?,
            thm2: real(9)?,
            first_order: real(10)?,
            second_order: real(11)?,
        });
    }
    Ok(rows)
}

/// Outcome of a Monte Carlo check of `E[f]` for one canonical tuple pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaCheck {
    pub estimate: f64,
    pub stderr: f64,
    /// Exact expectation (`r ≤ 1`) or upper bound (`r ≥ 2`).
    pub reference: f64,
    pub is_bound: bool,
}

impl LemmaCheck {
    /// Two-sided agreement for exact references, one-sided for bounds.
    pub fn consistent(&self, z: f64) -> bool {
        if self.is_bound {
            self.estimate <= self.reference + z * self.stderr
        } else {
            (self.estimate - self.reference).abs() <= z * self.stderr
        }
    }
}

/// The canonical pair of increasing p-tuples with `r` shared indices
/// (0-based): `i = (0, …, p−1)`, `j = (0, …, r−1, p, …, 2p−r−1)`.
pub fn canonical_tuples(p: usize, r: usize) -> (Vec<usize>, Vec<usize>) {
    let i: Vec<usize> = (0..p).collect();
    let j: Vec<usize> = (0..r).chain(p..2 * p - r).collect();
    (i, j)
}

/// Estimates `E[f] = E[Z_{τ_i} · Z_{τ_j}]` for the canonical tuple pair with
/// `r` shared indices by direct sampling, and pairs it with the closed-form
/// value (`r ≤ 1`) or upper bound (`r ≥ 2`).
pub fn mc_check_lemma_f(
    r: usize,
    p: usize,
    k: usize,
    s: &SingularSpectrum,
    trials: u64,
    rng: &mut RngStream,
) -> Result<LemmaCheck> {
    if p == 0 || r > p {
        return Err(Error::invalid(format!(
            "need 1 <= p and r <= p, got p = {p}, r = {r}"
        )));
    }
    if 2 * p - r > k {
        return Err(Error::invalid(format!(
            "a tuple pair with {r} shared indices needs k >= {}, got {k}",
            2 * p - r
        )));
    }
    if trials < 2 {
        return Err(Error::invalid("need at least 2 trials"));
    }
    let (ti, tj) = canonical_tuples(p, r);
    let (mut buf, mut cols, mut z) = (Vec::new(), Vec::new(), Vec::new());
    let mut samples = Vec::with_capacity(trials as usize);
    for _ in 0..trials {
        let y = diag_sketch_matrix(s.values(), k, rng, std::mem::take(&mut buf));
        linalg::gram_into(&y, &mut cols, &mut z);
        let zm = Matrix::from_row_major(k, k, std::mem::take(&mut z)).expect("k*k");
        samples.push(cycle_product_raw(&zm, &ti) * cycle_product_raw(&zm, &tj));
        z = zm.into_vec();
        buf = y.into_vec();
    }
    let stats = sample_variance(&samples)?;
    let (reference, is_bound) = if r <= 1 {
        (expected_f(r as u32, s, p as u64)?, false)
    } else {
        (f_upper(r as u32, s, p as u64)?, true)
    };
    Ok(LemmaCheck {
        estimate: stats.mean,
        stderr: (stats.variance / trials as f64).sqrt(),
        reference,
        is_bound,
    })
}

/// Doubling k grid from 10 to 1280.
pub const FIGURE_K_LIST: [u64; 8] = [10, 20, 40, 80, 160, 320, 640, 1280];

/// The complete figure grids (default trial policy), one config per output
/// CSV under `dir`. Slow: the largest cells take hours.
pub fn figure_configs(dir: &Path, master_seed: u64) -> Vec<ExperimentConfig> {
    let grid = |name: &str, spec: &str, p: &[u64]| ExperimentConfig {
        spectrum_spec: spec.to_string(),
        p_list: p.to_vec(),
        k_list: FIGURE_K_LIST.to_vec(),
        trials_policy: TrialsPolicy::Paper,
        master_seed,
        output_path: dir.join(format!("{name}.csv")),
    };
    let mut out = vec![
        grid("harmonic_p3", "algebraic:alpha=1,n=10", &[3]),
        grid("geometric", "geometric:rho=0.8,n=100", &[4, 6, 8]),
        grid("algebraic2", "algebraic:alpha=2,n=100", &[3, 5, 7]),
        grid("algebraic4", "algebraic:alpha=4,n=100", &[2, 6, 10]),
        grid("identity", "identity:n=100", &[2, 4, 6]),
    ];
    for t in 1..=10 {
        out.push(ExperimentConfig {
            spectrum_spec: format!("replicate:base=algebraic:alpha=4,n=10,t={t}"),
            p_list: vec![5],
            k_list: vec![100],
            trials_policy: TrialsPolicy::Paper,
            master_seed,
            output_path: dir.join(format!("replicate_t{t:02}.csv")),
        });
    }
    out
}
