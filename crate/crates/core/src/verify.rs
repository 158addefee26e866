//! Deterministic self-checks behind `schatten verify`.
//!
//! Every battery here is exact or seeded, so a pass/fail verdict needs no
//! statistical tolerance. The statistical suites live in the test harness.

use num_bigint::BigUint;
use num_traits::Zero;

use crate::bounds::{
    binomial, first_order_estimate, schatten_product_leq, second_order_estimate, theorem2_bound,
    tuple_count,
};
use crate::estimator::{gram, theta_hat, theta_hat_bruteforce};
use crate::linalg::Matrix;
use crate::sketch::{derive_trial_rng, gaussian_sketch_diag, RngStream, SketchMatrix};
use crate::spectra::{builtin_spectrum, BuiltinSpectrum, SingularSpectrum};

/// Result of one battery.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            name,
            passed,
            detail,
        }
    }
}

const SEED: u64 = 0x5eed;

/// Fast estimator against the cycle-enumeration oracle for every `k ≤ 8`,
/// `p ≤ min(k, 4)` and 20 seeds on `geometric(0.8, 5)`.
pub fn oracle_equivalence() -> CheckOutcome {
    let s = builtin_spectrum(BuiltinSpectrum::Geometric { rho: 0.8, n: 5 }).expect("valid builtin");
    let (mut worst, mut cases, mut failures) = (0.0f64, 0u32, 0u32);
    for k in 1..=8usize {
        for seed in 0..20u64 {
            let y = gaussian_sketch_diag(&s, k, derive_trial_rng(SEED + seed, k as u64))
                .expect("k >= 1");
            let z = gram(&y);
            for p in 1..=k.min(4) {
                let fast = theta_hat(&y, p).expect("p <= k").value;
                let brute = theta_hat_bruteforce(&z, p).expect("small k");
                let err = (fast - brute).abs() / (1.0 + brute.abs());
                worst = worst.max(err);
                cases += 1;
                if err > 1e-9 {
                    failures += 1;
                }
            }
        }
    }
    CheckOutcome::new(
        "oracle equivalence",
        failures == 0,
        format!("{cases} cases, {failures} failures, worst scaled error {worst:.3e}"),
    )
}

/// `Σ_r tuple_count(k,p,r) = C(k,p)²` for `k ≤ 12`, `p ≤ min(k, 5)`.
pub fn tuple_count_identity() -> CheckOutcome {
    let mut bad = Vec::new();
    let mut cases = 0;
    for k in 1..=12u64 {
        for p in 1..=k.min(5) {
            let total = (0..=p).fold(BigUint::zero(), |acc, r| {
                acc + tuple_count(k, p, r).expect("valid arguments")
            });
            let c = binomial(k, p);
            cases += 1;
            if total != &c * &c {
                bad.push((k, p));
            }
        }
    }
    CheckOutcome::new(
        "tuple-count identity",
        bad.is_empty(),
        format!("{cases} (k, p) pairs, mismatches {bad:?}"),
    )
}

fn increasing_tuples(k: u64, p: u64) -> Vec<Vec<u64>> {
    fn go(start: u64, k: u64, left: u64, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..k {
            cur.push(i);
            go(i + 1, k, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, k, p, &mut Vec::new(), &mut out);
    out
}

/// `tuple_count` against exhaustive enumeration of tuple pairs for
/// `k ≤ 6`, `p ≤ 3`.
pub fn tuple_count_enumeration() -> CheckOutcome {
    let mut bad = Vec::new();
    for k in 1..=6u64 {
        for p in 1..=k.min(3) {
            let tuples = increasing_tuples(k, p);
            let mut counts = vec![0u64; p as usize + 1];
            for a in &tuples {
                for b in &tuples {
                    let shared = a.iter().filter(|x| b.contains(x)).count();
                    counts[shared] += 1;
                }
            }
            for (r, &n) in counts.iter().enumerate() {
                if tuple_count(k, p, r as u64).expect("valid arguments") != BigUint::from(n) {
                    bad.push((k, p, r));
                }
            }
        }
    }
    CheckOutcome::new(
        "tuple-count enumeration",
        bad.is_empty(),
        format!("mismatches (k, p, r): {bad:?}"),
    )
}

fn random_spectrum(rng: &mut RngStream) -> SingularSpectrum {
    let n = 1 + (rng.next_uniform() * 40.0) as usize;
    let scale = 10f64.powf(4.0 * rng.next_uniform() - 2.0);
    let values = (0..n).map(|_| scale * rng.next_uniform()).collect();
    SingularSpectrum::new(values).expect("finite nonnegative values")
}

/// `‖A‖_c^c ‖A‖_d^d ≤ ‖A‖_{c−1}^{c−1} ‖A‖_{d+1}^{d+1}` on `spectra` random
/// spectra for every `2 ≤ c ≤ d ≤ 12`.
pub fn schatten_inequality(spectra: usize) -> CheckOutcome {
    let mut rng = derive_trial_rng(SEED, u64::MAX);
    let (mut cases, mut failures) = (0u64, 0u64);
    for _ in 0..spectra {
        let s = random_spectrum(&mut rng);
        for c in 2..=12 {
            for d in c..=12 {
                cases += 1;
                if !schatten_product_leq(&s, c, d).expect("2 <= c <= d") {
                    failures += 1;
                }
            }
        }
    }
    CheckOutcome::new(
        "Schatten product inequality",
        failures == 0,
        format!("{cases} cases, {failures} failures"),
    )
}

/// For `p = 1` the estimator is `‖Y‖_F²/k` up to rounding.
pub fn trace_identity() -> CheckOutcome {
    let mut worst = 0.0f64;
    for i in 0..100u64 {
        let mut rng = derive_trial_rng(SEED, 1_000 + i);
        let (rows, k) = (1 + (i % 7) as usize, 1 + (i % 13) as usize);
        let mut data = vec![0.0; rows * k];
        rng.fill_normal(&mut data);
        let m = Matrix::from_row_major(rows, k, data).expect("sized");
        let expected = m.frobenius_sq() / k as f64;
        let y = SketchMatrix::from_matrix(m, SEED, i).expect("finite");
        let got = theta_hat(&y, 1).expect("k >= 1").value;
        worst = worst.max((got - expected).abs() / expected.abs().max(f64::MIN_POSITIVE));
    }
    CheckOutcome::new(
        "p = 1 trace identity",
        worst <= 1e-12,
        format!("worst relative error {worst:.3e}"),
    )
}

/// `k · thm2 / (2p²‖A‖_{4p}^{4p})` at `k = 10⁵` for `p ∈ {2, 3}` on the
/// harmonic spectrum `1, 1/2, …, 1/10`.
pub fn asymptotic_consistency() -> CheckOutcome {
    let s =
        builtin_spectrum(BuiltinSpectrum::Algebraic { alpha: 1.0, n: 10 }).expect("valid builtin");
    let k = 100_000u64;
    let mut ratios = Vec::new();
    for p in [2u64, 3] {
        let thm2 = theorem2_bound(k, p, &s).expect("p <= k");
        let lead = first_order_estimate(k, p, &s).expect("valid");
        ratios.push(thm2 / lead);
    }
    CheckOutcome::new(
        "asymptotic consistency",
        ratios.iter().all(|r| (0.95..=1.05).contains(r)),
        format!("ratios {ratios:?}"),
    )
}

/// The second-order expansion never falls below the first-order term.
pub fn expansion_ordering() -> CheckOutcome {
    let mut rng = derive_trial_rng(SEED, u64::MAX - 1);
    let mut failures = 0;
    for _ in 0..200 {
        let s = random_spectrum(&mut rng);
        let p = 1 + (rng.next_uniform() * 8.0) as u64;
        let k = p + (rng.next_uniform() * 500.0) as u64;
        let first = first_order_estimate(k, p, &s).expect("valid");
        let second = second_order_estimate(k, p, &s).expect("valid");
        if second < first * (1.0 - 1e-12) {
            failures += 1;
        }
    }
    CheckOutcome::new(
        "second order >= first order",
        failures == 0,
        format!("200 cases, {failures} failures"),
    )
}

/// Runs the batteries. Quick mode is the oracle equivalence, the tuple
/// identity and the inequality battery; the full set adds the rest.
pub fn run_checks(quick: bool) -> Vec<CheckOutcome> {
    let mut out = vec![
        oracle_equivalence(),
        tuple_count_identity(),
        schatten_inequality(1000),
    ];
    if !quick {
        out.extend([
            tuple_count_enumeration(),
            trace_identity(),
            asymptotic_consistency(),
            expansion_ordering(),
        ]);
    }
    out
}
