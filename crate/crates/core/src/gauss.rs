//! Exact continued-fraction oracle.
//!
//! The digit process of the Gauss map is the one setting where the limit
//! laws tested elsewhere have closed-form constants: the maxima of the
//! digits of a uniform point satisfy the Frechet law with scale 1/log 2,
//! and the liminf law holds with the same constant.
//!
//! A binary double is a dyadic rational, so its continued fraction is
//! computed exactly by Euclid's algorithm rather than by the float
//! recursion a_k = floor(1/x), x -> 1/x - a_k, which drifts off the true
//! expansion after roughly 15 digits. Exactness ends anyway once the
//! dyadic denominator is consumed (around 35-45 digits for a random
//! uniform draw); streams renew from fresh uniform draws at that point, or
//! at the 40-digit cap, whichever comes first.

use crate::rng::trial_rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Renewal period of digit streams: dyadic inputs carry no information
/// beyond this depth.
pub const DIGIT_CAP: u32 = 40;

/// A continued-fraction expansion prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CfExpansion {
    pub digits: Vec<u64>,
    /// The input was rational and its expansion ended before the requested
    /// number of digits.
    pub terminated: bool,
}

/// Exact continued fraction digits of num/den in (0, 1).
pub fn cf_digits_rational(num: u128, den: u128, n: usize) -> CfExpansion {
    assert!(num < den && num > 0);
    let mut digits = Vec::with_capacity(n.min(64));
    let (mut p, mut q) = (num, den);
    while digits.len() < n {
        if p == 0 {
            return CfExpansion {
                digits,
                terminated: true,
            };
        }
        let a = q / p;
        let r = q % p;
        digits.push(a.min(u64::MAX as u128) as u64);
        q = p;
        p = r;
    }
    CfExpansion {
        digits,
        terminated: false,
    }
}

/// Continued fraction digits of a double in (0, 1), exact for the dyadic
/// rational the double represents.
pub fn cf_digits(x: f64, n: usize) -> CfExpansion {
    assert!(x > 0.0 && x < 1.0, "input must lie in (0, 1)");
    // x = m * 2^-e exactly, with m odd after reduction
    let bits = x.to_bits();
    let raw_exp = ((bits >> 52) & 0x7ff) as i64;
    let mantissa = if raw_exp == 0 {
        bits & ((1u64 << 52) - 1)
    } else {
        (bits & ((1u64 << 52) - 1)) | (1u64 << 52)
    };
    let e = 1075 - raw_exp.max(1); // x = mantissa * 2^-e
    let tz = mantissa.trailing_zeros() as i64;
    let m = mantissa >> tz;
    let e = e - tz;
    if e > 100 {
        // below 2^-47-ish scales the first digit alone exhausts u64; treat
        // as an effectively-zero input that terminated immediately
        return CfExpansion {
            digits: vec![],
            terminated: true,
        };
    }
    cf_digits_rational(m as u128, 1u128 << e, n)
}

/// The Galambos limit law exp(-1/(s log 2)) for normalized digit maxima.
pub fn galambos_cdf(s: f64) -> f64 {
    assert!(s > 0.0);
    (-1.0 / (s * std::f64::consts::LN_2)).exp()
}

/// Philipp's liminf constant 1/log 2.
pub fn philipp_constant() -> f64 {
    std::f64::consts::LOG2_E
}

/// Digits are only emitted while the remaining state holds at least this
/// much entropy; beyond it the finite dyadic input starts suppressing
/// large digits (a digit of size T needs log2 T bits), which would bias
/// maxima statistics low.
pub const RENEW_MIN_DEN: u64 = 1 << 26;

/// Endless digit stream: exact digits of fresh uniform draws, renewed at
/// termination, at [`DIGIT_CAP`] digits, or when the remaining state
/// drops below [`RENEW_MIN_DEN`].
#[derive(Debug, Clone)]
pub struct DigitStream {
    rng: ChaCha8Rng,
    num: u64,
    den: u64,
    in_chunk: u32,
    /// Number of renewals so far (the very first draw counts).
    pub renewals: u64,
}

impl DigitStream {
    pub fn new(seed: u64, trial: u64) -> Self {
        let mut s = DigitStream {
            rng: trial_rng(seed, trial),
            num: 0,
            den: 1 << 53,
            in_chunk: 0,
            renewals: 0,
        };
        s.renew();
        s
    }

    fn renew(&mut self) {
        self.num = self.rng.gen_range(1..(1u64 << 53));
        self.den = 1 << 53;
        self.in_chunk = 0;
        self.renewals += 1;
    }
}

impl Iterator for DigitStream {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        if self.num == 0 || self.den < RENEW_MIN_DEN || self.in_chunk >= DIGIT_CAP {
            self.renew();
        }
        let a = self.den / self.num;
        let r = self.den % self.num;
        self.den = self.num;
        self.num = r;
        self.in_chunk += 1;
        Some(a)
    }
}

/// Per-trial maxima of the first n digits of fresh uniform points.
pub fn max_digit_samples(n: usize, trials: usize, seed: u64) -> Vec<u64> {
    (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            DigitStream::new(seed, trial)
                .take(n)
                .max()
                .expect("n >= 1")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rational_example_terminates() {
        // 7/3 = 2 + 1/3
        let e = cf_digits_rational(3, 7, 10);
        assert_eq!(e.digits, vec![2, 3]);
        assert!(e.terminated);
    }

    #[test]
    fn golden_ratio_digits_are_ones() {
        // Fibonacci convergents carry the identity exactly
        let (mut a, mut b) = (1u128, 1u128);
        for _ in 0..80 {
            let t = a + b;
            a = b;
            b = t;
        }
        let e = cf_digits_rational(a, b, 50);
        assert!(!e.terminated);
        assert_eq!(e.digits, vec![1u64; 50]);

        // the double itself is exact to ~35 digits before its dyadic tail
        // shows through
        let e = cf_digits((5.0_f64.sqrt() - 1.0) / 2.0, 35);
        assert_eq!(e.digits, vec![1u64; 35]);
    }

    #[test]
    fn float_digits_match_rational_digits() {
        // 0.40625 = 13/32 exactly
        let e = cf_digits(0.40625, 10);
        let r = cf_digits_rational(13, 32, 10);
        assert_eq!(e, r);
        assert!(e.terminated);
    }

    #[test]
    fn reconstruction_error_bound() {
        // |x - h_n/k_n| <= 1/(k_n k_{n+1}): for x = m/2^e this reads
        // |m k_n - h_n 2^e| * k_{n+1} <= 2^e, checked in exact integers
        let mut rng = trial_rng(42, 0);
        let mut checked = 0;
        for _ in 0..1000 {
            // draw a 53-bit dyadic uniform, as the streams do
            let m: u64 = rng.gen_range(1..(1u64 << 53));
            let e = 53u32;
            let exp = cf_digits_rational(m as u128, 1u128 << e, 31);
            // check at depth 30 or at the deepest convergent the (finite
            // dyadic) expansion affords
            if exp.digits.len() < 2 {
                continue;
            }
            let n = exp.digits.len().min(31) - 1;
            let (mut h0, mut h1) = (1u128, 0u128);
            let (mut k0, mut k1) = (0u128, 1u128);
            for &a in &exp.digits[..n] {
                let h2 = a as u128 * h1 + h0;
                let k2 = a as u128 * k1 + k0;
                h0 = h1;
                h1 = h2;
                k0 = k1;
                k1 = k2;
            }
            let k_next = exp.digits[n] as u128 * k1 + k0;
            let num = (m as u128 * k1).abs_diff(h1 << e);
            assert!(
                (num as f64) * (k_next as f64) <= (1u128 << e) as f64 * (1.0 + 1e-9),
                "m = {m}: |m k - h 2^e| = {num}, k' = {k_next}"
            );
            checked += 1;
        }
        assert!(checked > 990, "only {checked} expansions checked");
    }

    #[test]
    fn galambos_values() {
        assert_relative_eq!(
            galambos_cdf(1.0 / std::f64::consts::LN_2),
            (-1.0_f64).exp(),
            epsilon = 1e-12
        );
        assert!(galambos_cdf(1e6) > 0.999);
        assert!(galambos_cdf(1e-3) < 1e-10);
    }

    #[test]
    fn philipp_value() {
        assert_relative_eq!(philipp_constant(), 1.4426950408889634);
        assert_relative_eq!(philipp_constant(), 1.0 / std::f64::consts::LN_2);
    }

    #[test]
    fn stream_is_deterministic() {
        let a: Vec<u64> = DigitStream::new(5, 3).take(100).collect();
        let b: Vec<u64> = DigitStream::new(5, 3).take(100).collect();
        assert_eq!(a, b);
        let c: Vec<u64> = DigitStream::new(5, 4).take(100).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn stream_stays_sane_across_renewals() {
        // digits after the 40-digit renewal boundary still follow the
        // digit law: positive, and no astronomical artifacts
        for t in 0..50 {
            let digits: Vec<u64> = DigitStream::new(77, t).take(5000).collect();
            assert!(digits.iter().all(|&d| d >= 1));
            // P(digit > 1e9 somewhere in 5000 draws) ~ 7e-6
            assert!(
                digits.iter().all(|&d| d < 1_000_000_000),
                "trial {t} produced a wild digit"
            );
        }
        // the digit law at index 45 (past one renewal) still matches
        let trials = 100_000;
        let mut ones = 0u64;
        for t in 0..trials {
            if DigitStream::new(78, t).nth(45).unwrap() == 1 {
                ones += 1;
            }
        }
        let got = ones as f64 / trials as f64;
        let expect = (1.0 + 1.0 / 3.0_f64).log2(); // 0.415
        assert!((got - expect).abs() < 6e-3, "got {got}, expect {expect}");
    }

    #[test]
    fn stream_digit_law_uniform_start() {
        // first digit of a uniform draw: P(a_1 = m) = 1/(m(m+1))
        let trials = 200_000;
        let mut counts = [0u64; 6];
        for t in 0..trials {
            let d = DigitStream::new(11, t).next().unwrap();
            if (1..=5).contains(&d) {
                counts[d as usize] += 1;
            }
        }
        for m in 1..=5u64 {
            let expect = 1.0 / (m as f64 * (m as f64 + 1.0));
            let got = counts[m as usize] as f64 / trials as f64;
            assert!(
                (got - expect).abs() < 4e-3,
                "m = {m}: got {got}, expect {expect}"
            );
        }
    }

    #[test]
    fn stream_digit_law_equilibrates_to_gauss_measure() {
        // deep digits follow P(a = m) = log2(1 + 1/(m(m+2)))
        let trials = 200_000;
        let mut counts = [0u64; 6];
        for t in 0..trials {
            let d = DigitStream::new(13, t).nth(9).unwrap();
            if (1..=5).contains(&d) {
                counts[d as usize] += 1;
            }
        }
        for m in 1..=5u64 {
            let mf = m as f64;
            let expect = (1.0 + 1.0 / (mf * (mf + 2.0))).log2();
            let got = counts[m as usize] as f64 / trials as f64;
            assert!(
                (got - expect).abs() < 4e-3,
                "m = {m}: got {got}, expect {expect}"
            );
        }
    }

    #[test]
    fn max_digit_sampler_is_deterministic_and_parallel_stable() {
        let a = max_digit_samples(50, 400, 99);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| max_digit_samples(50, 400, 99));
        assert_eq!(a, b);
    }

    #[test]
    fn single_digit_max_is_first_digit() {
        for t in 0..50 {
            let via_sampler = max_digit_samples(1, t as usize + 1, 7)[t as usize];
            let direct = DigitStream::new(7, t).next().unwrap();
            assert_eq!(via_sampler, direct);
        }
    }
}
