//! Closed-form variance quantities for `θ̂_{2p}`.
//!
//! Every function takes the spectrum and works with Schatten powers
//! `N(q) = ‖A‖_q^q`. All variance quantities are reported for the
//! normalised estimator `θ̂_{2p}`, i.e. bounds on `Var(Θ̂_{2p})` are divided
//! by `C(k,p)²`.

use num_bigint::BigUint;
use num_traits::One;

use crate::error::{Error, Result};
use crate::spectra::SingularSpectrum;

/// Above this many factors `log_binomial` switches from an explicit sum of
/// logarithms to log-gamma differences.
const LOG_SUM_CUTOFF: u64 = 256;

/// `ln C(k, j)`. Returns `-∞` when `j > k` (the coefficient is zero).
pub fn log_binomial(k: u64, j: u64) -> f64 {
    if j > k {
        return f64::NEG_INFINITY;
    }
    let m = j.min(k - j);
    if m == 0 {
        return 0.0;
    }
    if m <= LOG_SUM_CUTOFF {
        // Σ ln((k-m+i)/i): each term carries one rounding, so the absolute
        // error stays near m ulps of ln C instead of ulps of ln Γ(k+1).
        let base = (k - m) as f64;
        (1..=m).map(|i| (base / i as f64 + 1.0).ln()).sum()
    } else {
        libm::lgamma(k as f64 + 1.0)
            - libm::lgamma(j as f64 + 1.0)
            - libm::lgamma((k - j) as f64 + 1.0)
    }
}

/// `C(k, j)` as a double, by the multiplicative formula. Exact whenever the
/// result is below 2⁵³; `0` when `j > k`.
pub fn binomial_f64(k: u64, j: u64) -> f64 {
    if j > k {
        return 0.0;
    }
    let m = j.min(k - j);
    let mut c = 1.0f64;
    for i in 1..=m {
        // c·(k-m+i) is divisible by i, so this stays integral while exact.
        c = c * (k - m + i) as f64 / i as f64;
    }
    c
}

/// Exact `C(k, j)`; zero when `j > k`.
pub fn binomial(k: u64, j: u64) -> BigUint {
    if j > k {
        return BigUint::default();
    }
    let m = j.min(k - j);
    let mut c = BigUint::one();
    for i in 1..=m {
        c *= k - m + i;
        c /= i;
    }
    c
}

/// Number of pairs of increasing p-tuples over `[k]` sharing exactly `r`
/// indices: `C(k, 2p-r) · C(2p-r, p) · C(p, r)`.
pub fn tuple_count(k: u64, p: u64, r: u64) -> Result<BigUint> {
    if p == 0 || p > k {
        return Err(Error::invalid(format!(
            "need 1 <= p <= k, got p = {p}, k = {k}"
        )));
    }
    if r > p {
        return Err(Error::invalid(format!(
            "repeated-index count r = {r} exceeds p = {p}"
        )));
    }
    let distinct = 2 * p - r;
    Ok(binomial(k, distinct) * binomial(distinct, p) * binomial(p, r))
}

/// `tuple_count(k,p,r) / C(k,p)²`, evaluated in log space.
fn tuple_weight(k: u64, p: u64, r: u64) -> f64 {
    let distinct = 2 * p - r;
    if distinct > k {
        return 0.0;
    }
    (log_binomial(k, distinct) + log_binomial(distinct, p) + log_binomial(p, r)
        - 2.0 * log_binomial(k, p))
    .exp()
}

/// `C(k,2p)·C(2p,p)/C(k,p)² − 1 = Π_{i<p} (1 − p/(k−i)) − 1`, without the
/// cancellation of subtracting two numbers near one.
fn no_repeat_coefficient(k: u64, p: u64) -> f64 {
    if 2 * p > k {
        return -1.0;
    }
    let pf = p as f64;
    let log_prod: f64 = (0..p).map(|i| (-pf / (k - i) as f64).ln_1p()).sum();
    log_prod.exp_m1()
}

fn check_kp(k: u64, p: u64) -> Result<()> {
    if p == 0 {
        return Err(Error::invalid("order p must be at least 1"));
    }
    if k == 0 {
        return Err(Error::invalid("sketch width k must be at least 1"));
    }
    Ok(())
}

/// Schatten powers needed by the bounds for a given `p`.
struct Norms<'a> {
    s: &'a SingularSpectrum,
}

impl Norms<'_> {
    fn pow(&self, q: u64) -> f64 {
        self.s.schatten_power_unchecked(q as u32)
    }

    /// `‖A‖_{2p}^{4p}`
    fn n2p_sq(&self, p: u64) -> f64 {
        let v = self.pow(2 * p);
        v * v
    }
}

/// The earlier worst-case variance bound
/// `2^{12p} p^{6p} 3^p · max{n^{p-2}/k^p, 1/k, n^{1/2-1/p}/k} · ‖A‖_{2p}^{4p}`
/// with `n` the nominal dimension of `s`. Evaluated in log space; may
/// overflow to `+∞` for very large `p`.
pub fn kv_bound(k: u64, p: u64, s: &SingularSpectrum) -> Result<f64> {
    check_kp(k, p)?;
    let norm = Norms { s }.pow(2 * p);
    if norm == 0.0 {
        return Ok(0.0);
    }
    let (n, kf, pf) = (s.nominal_n() as f64, k as f64, p as f64);
    let ln_n = n.ln();
    let ln_k = kf.ln();
    let candidates = [
        (pf - 2.0) * ln_n - pf * ln_k,
        -ln_k,
        (0.5 - 1.0 / pf) * ln_n - ln_k,
    ];
    let ln_max = candidates.into_iter().fold(f64::NEG_INFINITY, f64::max);
    let ln_const = 12.0 * pf * std::f64::consts::LN_2 + 6.0 * pf * pf.ln() + pf * 3f64.ln();
    Ok((ln_const + ln_max + 2.0 * norm.ln()).exp())
}

/// Coefficient `c(r, ℓ)` of the bound on `E[f]` for `r ≥ 3` repeated indices.
pub fn c_coeff(r: u32, l: u32) -> Result<f64> {
    if r == 0 || l == 0 || l > r {
        return Err(Error::invalid(format!(
            "need 1 <= l <= r, got r = {r}, l = {l}"
        )));
    }
    let three = |e: u32| 3f64.powi(e as i32);
    Ok(match l {
        1 => three(r),
        2 => three(r - 2) * (2f64.powi(r as i32 + 1) - 1.0),
        _ => three(r - l) * (l as f64).powi(r as i32),
    })
}

/// Exact `E[f]` for a pair of increasing p-tuples with `r ∈ {0, 1}` shared
/// indices: `‖A‖_{2p}^{4p}` for `r = 0`, `‖A‖_{2p}^{4p} + 2‖A‖_{4p}^{4p}`
/// for `r = 1`.
pub fn expected_f(r: u32, s: &SingularSpectrum, p: u64) -> Result<f64> {
    if p == 0 {
        return Err(Error::invalid("order p must be at least 1"));
    }
    let norms = Norms { s };
    match r {
        0 => Ok(norms.n2p_sq(p)),
        1 => Ok(norms.n2p_sq(p) + 2.0 * norms.pow(4 * p)),
        _ => Err(Error::invalid(format!(
            "expected_f is exact only for r <= 1 (got r = {r}); use f_upper"
        ))),
    }
}

/// Upper bound on `E[f]` for `2 ≤ r ≤ p` shared indices.
pub fn f_upper(r: u32, s: &SingularSpectrum, p: u64) -> Result<f64> {
    if r < 2 {
        return Err(Error::invalid(format!("f_upper needs r >= 2, got {r}")));
    }
    if r as u64 > p {
        return Err(Error::invalid(format!("r = {r} exceeds p = {p}")));
    }
    let norms = Norms { s };
    let n4 = norms.pow(4);
    if r == 2 {
        return Ok(6.0 * norms.pow(4 * p) + 3.0 * n4 * norms.pow(4 * p - 4));
    }
    let mut total = 0.0;
    for l in 1..=r {
        let shift = 4 * (l as u64 - 1);
        total += c_coeff(r, l)? * n4.powi(l as i32 - 1) * norms.pow(4 * p - shift);
    }
    Ok(total)
}

/// Upper bound on `Var(θ̂_{2p})`: the second-moment decomposition over the
/// number of shared indices, with exact terms for `r ≤ 1`, bounded terms
/// for `r ≥ 2`, divided by `C(k,p)²`.
pub fn theorem2_bound(k: u64, p: u64, s: &SingularSpectrum) -> Result<f64> {
    check_kp(k, p)?;
    if p > k {
        return Err(Error::invalid(format!(
            "order p = {p} exceeds sketch width k = {k}"
        )));
    }
    let norms = Norms { s };
    let mut total = no_repeat_coefficient(k, p) * norms.n2p_sq(p);
    for r in 1..=p {
        let w = tuple_weight(k, p, r);
        if w == 0.0 {
            continue;
        }
        let ef = if r == 1 {
            expected_f(1, s, p)?
        } else {
            f_upper(r as u32, s, p)?
        };
        total += w * ef;
    }
    Ok(total.max(0.0))
}

/// Leading-order variance `2p²‖A‖_{4p}^{4p}/k`.
pub fn first_order_estimate(k: u64, p: u64, s: &SingularSpectrum) -> Result<f64> {
    check_kp(k, p)?;
    let pf = p as f64;
    Ok(2.0 * pf * pf * Norms { s }.pow(4 * p) / k as f64)
}

/// First-order estimate plus the `1/k²` correction
/// `p²(p−1)²/k² · (‖A‖_{4p}^{4p} + 1.5‖A‖_4^4‖A‖_{4p−4}^{4p−4} − 0.5‖A‖_{2p}^{4p})`.
pub fn second_order_estimate(k: u64, p: u64, s: &SingularSpectrum) -> Result<f64> {
    let first = first_order_estimate(k, p, s)?;
    if p == 1 {
        return Ok(first);
    }
    let norms = Norms { s };
    let (pf, kf) = (p as f64, k as f64);
    let coeff = pf * pf * (pf - 1.0) * (pf - 1.0) / (kf * kf);
    let bracket =
        norms.pow(4 * p) + 1.5 * norms.pow(4) * norms.pow(4 * p - 4) - 0.5 * norms.n2p_sq(p);
    Ok(first + coeff * bracket)
}

/// Checks `‖A‖_c^c ‖A‖_d^d ≤ ‖A‖_{c−1}^{c−1} ‖A‖_{d+1}^{d+1}` with 1e-12
/// relative slack.
pub fn schatten_product_leq(s: &SingularSpectrum, c: u32, d: u32) -> Result<bool> {
    if c < 2 || d < c {
        return Err(Error::invalid(format!(
            "need 2 <= c <= d, got c = {c}, d = {d}"
        )));
    }
    let lhs = s.schatten_power_unchecked(c) * s.schatten_power_unchecked(d);
    let rhs = s.schatten_power_unchecked(c - 1) * s.schatten_power_unchecked(d + 1);
    Ok(lhs <= rhs * (1.0 + 1e-12))
}

/// All variance quantities for one `(k, p, spectrum)` cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSet {
    pub kv: f64,
    pub thm2: f64,
    pub first_order: f64,
    pub second_order: f64,
    pub truth_2p: f64,
}

impl BoundSet {
    pub fn compute(k: u64, p: u64, s: &SingularSpectrum) -> Result<Self> {
        Ok(Self {
            kv: kv_bound(k, p, s)?,
            thm2: theorem2_bound(k, p, s)?,
            first_order: first_order_estimate(k, p, s)?,
            second_order: second_order_estimate(k, p, s)?,
            truth_2p: s.schatten_power(2 * p as u32)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn harmonic() -> SingularSpectrum {
        SingularSpectrum::new((1..=10).map(|i| 1.0 / i as f64).collect()).unwrap()
    }

    fn ident(n: usize) -> SingularSpectrum {
        SingularSpectrum::new(vec![1.0; n]).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn small_binomials() {
        assert_eq!(log_binomial(5, 0), 0.0);
        assert_eq!(log_binomial(10, 3).exp().round(), 120.0);
        assert_eq!(log_binomial(3, 5), f64::NEG_INFINITY);
        assert_eq!(binomial_f64(10, 3), 120.0);
        assert_eq!(binomial_f64(3, 5), 0.0);
        assert_eq!(binomial(52, 5), BigUint::from(2_598_960u32));
        assert_eq!(binomial_f64(50, 25), 126_410_606_437_752.0);
    }

    #[test]
    fn large_binomial_against_big_integer() {
        // C(1280, 20) = 49349108294535360346695786201508112752712640
        let exact: f64 = "49349108294535360346695786201508112752712640"
            .parse()
            .unwrap();
        assert_eq!(
            binomial(1280, 20).to_string(),
            "49349108294535360346695786201508112752712640"
        );
        assert!(rel(log_binomial(1280, 20).exp(), exact) < 1e-12);
        // lgamma branch
        let big = log_binomial(100_000, 50_000);
        let by_sum: f64 = (1..=50_000u64)
            .map(|i| (50_000.0 / i as f64 + 1.0).ln())
            .sum();
        assert!((big - by_sum).abs() < 1e-8 * by_sum);
    }

    #[test]
    fn kv_values() {
        let one = SingularSpectrum::new(vec![1.0]).unwrap();
        assert!(rel(kv_bound(1, 1, &one).unwrap(), 12288.0) < 1e-13);
        // n = 10, k = 100, p = 3, ‖A‖₆ = 1 (high-precision evaluation: 10550981454662240323.0)
        let unit = SingularSpectrum::with_nominal_n(vec![1.0], 10).unwrap();
        assert!(rel(kv_bound(100, 3, &unit).unwrap(), 10550981454662240323.0) < 1e-12);
        let s = harmonic();
        let scaled = s.scaled(2f64.powf(1.0 / 6.0)).unwrap();
        assert!(
            rel(
                kv_bound(40, 3, &scaled).unwrap(),
                4.0 * kv_bound(40, 3, &s).unwrap()
            ) < 1e-12
        );
    }

    #[test]
    fn c_values() {
        assert_eq!(c_coeff(1, 1).unwrap(), 3.0);
        assert_eq!(c_coeff(3, 2).unwrap(), 45.0);
        assert_eq!(c_coeff(4, 3).unwrap(), 243.0);
        assert!(c_coeff(3, 4).is_err());
        assert!(c_coeff(3, 0).is_err());
        for r in 1..=12u32 {
            for l in 1..=r {
                let c = c_coeff(r, l).unwrap();
                assert!(c > 0.0 && c.fract() == 0.0);
            }
            if r >= 2 {
                assert!(c_coeff(r, 2).unwrap() > 3f64.powi(r as i32 - 2) * 2f64.powi(r as i32));
            }
        }
    }

    #[test]
    fn tuple_counts() {
        assert_eq!(tuple_count(4, 2, 1).unwrap(), BigUint::from(24u32));
        for p in 1..=5u64 {
            assert_eq!(tuple_count(2 * p, p, 0).unwrap(), binomial(2 * p, p));
        }
        assert_eq!(tuple_count(3, 2, 0).unwrap(), BigUint::default());
        assert!(tuple_count(3, 4, 0).is_err());
        assert!(tuple_count(5, 2, 3).is_err());
        for k in 1..=12u64 {
            for p in 1..=k.min(5) {
                let total: BigUint = (0..=p).map(|r| tuple_count(k, p, r).unwrap()).sum();
                let ckp = binomial(k, p);
                assert_eq!(total, &ckp * &ckp);
            }
        }
    }

    #[test]
    fn expected_f_values() {
        let one = SingularSpectrum::new(vec![1.0]).unwrap();
        assert_eq!(expected_f(0, &one, 1).unwrap(), 1.0);
        for (n, p) in [(3usize, 1u64), (10, 2), (7, 5)] {
            let nf = n as f64;
            assert_eq!(expected_f(1, &ident(n), p).unwrap(), nf * nf + 2.0 * nf);
        }
        assert!(expected_f(2, &one, 3).is_err());
    }

    #[test]
    fn f_upper_values() {
        for n in [1usize, 4, 9] {
            let nf = n as f64;
            assert_eq!(f_upper(2, &ident(n), 2).unwrap(), 6.0 * nf + 3.0 * nf * nf);
        }
        let one = SingularSpectrum::new(vec![1.0]).unwrap();
        assert_eq!(f_upper(3, &one, 3).unwrap(), 99.0);
        assert!(f_upper(1, &one, 3).is_err());
        assert!(f_upper(4, &one, 3).is_err());
    }

    #[test]
    fn p1_bound_is_exact_hutchinson_variance() {
        // Exact simplification for p = 1 on I_n: 2n/k.
        for (n, k) in [(1usize, 1u64), (5, 3), (100, 20), (10, 1000)] {
            let got = theorem2_bound(k, 1, &ident(n)).unwrap();
            assert!(rel(got, 2.0 * n as f64 / k as f64) < 1e-12, "n={n} k={k}");
        }
    }

    #[test]
    fn harmonic_reference_value() {
        // Exact rational evaluation of the full bound at k = 20, p = 3.
        let got = theorem2_bound(20, 3, &harmonic()).unwrap();
        assert!(rel(got, 1.1796363034485626) < 1e-12, "{got}");
        assert!(theorem2_bound(2, 3, &harmonic()).is_err());
    }

    #[test]
    fn bound_edge_widths() {
        let s = harmonic();
        for p in 1..=6u64 {
            for k in p..=2 * p + 1 {
                let b = theorem2_bound(k, p, &s).unwrap();
                assert!(b.is_finite() && b >= 0.0, "k={k} p={p}");
            }
        }
        assert!(theorem2_bound(1_000_000, 30, &s).unwrap().is_finite());
    }

    #[test]
    fn asymptotic_first_order() {
        let s = harmonic();
        for p in [2u64, 3] {
            let k = 100_000u64;
            let ratio = k as f64 * theorem2_bound(k, p, &s).unwrap()
                / (2.0 * (p * p) as f64 * s.schatten_power(4 * p as u32).unwrap());
            assert!((0.95..=1.05).contains(&ratio), "p={p} ratio={ratio}");
        }
    }

    #[test]
    fn expansions() {
        let nf = 7.0;
        let id = ident(7);
        assert_eq!(first_order_estimate(4, 1, &id).unwrap(), 2.0 * nf / 4.0);
        assert_eq!(
            second_order_estimate(4, 1, &id).unwrap(),
            first_order_estimate(4, 1, &id).unwrap()
        );
        let k = 13.0;
        let want = 8.0 * nf / k + (4.0 * nf + 4.0 * nf * nf) / (k * k);
        assert!(rel(second_order_estimate(13, 2, &id).unwrap(), want) < 1e-14);
        let s = harmonic();
        // 18 · Σ i⁻¹² / 100
        assert!(
            rel(
                first_order_estimate(100, 3, &s).unwrap(),
                0.18004429557950433
            ) < 1e-14
        );
        assert_eq!(
            first_order_estimate(100, 3, &s).unwrap(),
            2.0 * first_order_estimate(200, 3, &s).unwrap()
        );
        assert!(
            rel(
                second_order_estimate(20, 3, &s).unwrap(),
                1.0903398936813713
            ) < 1e-13
        );
    }

    #[test]
    fn product_inequality_degenerate() {
        let one = SingularSpectrum::new(vec![1.0]).unwrap();
        assert!(schatten_product_leq(&one, 2, 2).unwrap());
        assert!(schatten_product_leq(&ident(5), 3, 9).unwrap());
        assert!(schatten_product_leq(&one, 1, 2).is_err());
        assert!(schatten_product_leq(&one, 4, 3).is_err());
    }

    #[test]
    fn bound_set() {
        let b = BoundSet::compute(20, 3, &harmonic()).unwrap();
        assert!(b.kv > b.thm2 && b.thm2 > 0.0);
        assert!(b.second_order >= b.first_order);
        assert!(rel(b.truth_2p, 1.0173415124414316) < 1e-15);
        let zero = SingularSpectrum::new(vec![0.0; 3]).unwrap();
        let z = BoundSet::compute(10, 2, &zero).unwrap();
        assert_eq!(
            (z.kv, z.thm2, z.first_order, z.second_order, z.truth_2p),
            (0.0, 0.0, 0.0, 0.0, 0.0)
        );
    }

    proptest! {
        #[test]
        fn second_order_dominates_first(v in prop::collection::vec(0.0f64..1.0, 1..15), p in 2u64..8, k in 1u64..500) {
            let s = SingularSpectrum::new(v).unwrap();
            prop_assert!(second_order_estimate(k, p, &s).unwrap() >= first_order_estimate(k, p, &s).unwrap());
        }

        #[test]
        fn bounds_are_homogeneous(v in prop::collection::vec(0.05f64..1.0, 1..10), p in 1u64..5, extra in 0u64..40, c in 0.5f64..2.0) {
            let s = SingularSpectrum::new(v).unwrap();
            let sc = s.scaled(c).unwrap();
            let k = p + extra;
            let f = c.powi(4 * p as i32);
            let a = BoundSet::compute(k, p, &s).unwrap();
            let b = BoundSet::compute(k, p, &sc).unwrap();
            for (x, y) in [(a.kv, b.kv), (a.thm2, b.thm2), (a.first_order, b.first_order), (a.second_order, b.second_order)] {
                prop_assert!((x * f - y).abs() <= 1e-10 * y.abs().max(1e-300));
            }
        }

        #[test]
        fn product_inequality_holds(v in prop::collection::vec(0.0f64..1.0, 1..30), c in 2u32..12, extra in 0u32..10) {
            let s = SingularSpectrum::new(v).unwrap();
            let d = (c + extra).min(12);
            prop_assert!(schatten_product_leq(&s, c.min(d), d).unwrap());
        }
    }
}
