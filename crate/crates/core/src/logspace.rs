//! Log-space arithmetic shared by every dynamic program in the crate.
//!
//! Partition functions are accumulated as logarithms so that sentences with
//! large scores or many paths never overflow `f64`.

use crate::error::{Error, Result};

/// Score assigned to structurally forbidden entries (masked segments).
///
/// A finite sentinel keeps `x - max` well defined when every input of a
/// reduction is masked; `exp(MASKED - finite)` underflows to exactly zero.
pub const MASKED: f64 = -1e30;

/// `log Σ exp(vᵢ)` computed with the max-shift trick.
///
/// ```
/// let z = segchain::logspace::log_sum_exp(&[1000.0, 1000.0]).unwrap();
/// assert!((z - (1000.0 + 2f64.ln())).abs() < 1e-12);
/// ```
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    match values {
        [] => Err(Error::EmptyReduction),
        [x] => Ok(*x),
        _ => Ok(lse_nonempty(values.iter().copied())),
    }
}

/// Two-argument log-add. `log_add(-inf, x) == x`.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Streaming log-sum-exp accumulator. Starts at log 0.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogAccumulator {
    max: f64,
    sum: f64,
    count: usize,
    first: f64,
}

impl LogAccumulator {
    pub(crate) fn new() -> Self {
        LogAccumulator {
            max: f64::NEG_INFINITY,
            sum: 0.0,
            count: 0,
            first: f64::NEG_INFINITY,
        }
    }

    #[inline]
    pub(crate) fn push(&mut self, x: f64) {
        if self.count == 0 {
            self.first = x;
            self.max = x;
            self.sum = 1.0;
        } else if x > self.max {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.sum += (x - self.max).exp();
        }
        self.count += 1;
    }

    /// Result of the reduction; a single pushed value is returned unchanged.
    #[inline]
    pub(crate) fn value(&self) -> f64 {
        match self.count {
            0 => f64::NEG_INFINITY,
            1 => self.first,
            _ => self.max + self.sum.ln(),
        }
    }
}

fn lse_nonempty(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn symmetric_pair() {
        let z = log_sum_exp(&[0.0, 0.0]).unwrap();
        assert!((z - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn singleton_identity() {
        for x in [-1e6, -3.25, 0.0, 7.5, 1e6] {
            assert_eq!(log_sum_exp(&[x]).unwrap(), x);
        }
    }

    #[test]
    fn large_values_do_not_overflow() {
        let z = log_sum_exp(&[1000.0, 1000.0]).unwrap();
        assert!((z - (1000.0 + std::f64::consts::LN_2)).abs() < 1e-12);
        let z = log_sum_exp(&[1e6, -1e6]).unwrap();
        assert_eq!(z, 1e6);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(log_sum_exp(&[]), Err(Error::EmptyReduction)));
    }

    #[test]
    fn masked_values_vanish() {
        let z = log_sum_exp(&[MASKED, 1.5]).unwrap();
        assert_eq!(z, 1.5);
        let z = log_sum_exp(&[MASKED, MASKED]).unwrap();
        assert!(z.is_finite() && z < -1e29);
    }

    #[test]
    fn accumulator_matches_batch() {
        let xs = [0.3, -2.0, 5.0, 4.9, -100.0];
        let mut acc = LogAccumulator::new();
        for &x in &xs {
            acc.push(x);
        }
        assert!((acc.value() - log_sum_exp(&xs).unwrap()).abs() < 1e-12);
        assert_eq!(LogAccumulator::new().value(), f64::NEG_INFINITY);
    }

    #[test]
    fn log_add_handles_neg_infinity() {
        assert_eq!(log_add(f64::NEG_INFINITY, 2.0), 2.0);
        assert_eq!(log_add(f64::NEG_INFINITY, f64::NEG_INFINITY), f64::NEG_INFINITY);
        assert!((log_add(0.0, 0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn permutation_invariant(mut xs in prop::collection::vec(-1e6f64..1e6, 1..12), seed in any::<u64>()) {
            let before = log_sum_exp(&xs).unwrap();
            // deterministic shuffle
            let n = xs.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                xs.swap(i, (s >> 33) as usize % (i + 1));
            }
            let after = log_sum_exp(&xs).unwrap();
            prop_assert!((before - after).abs() <= 1e-9 * before.abs().max(1.0));
            prop_assert!(before.is_finite());
        }

        #[test]
        fn monotone_in_each_argument(xs in prop::collection::vec(-50f64..50.0, 1..8), idx in 0usize..8, bump in 0.0f64..10.0) {
            let idx = idx % xs.len();
            let mut ys = xs.clone();
            ys[idx] += bump;
            prop_assert!(log_sum_exp(&ys).unwrap() >= log_sum_exp(&xs).unwrap() - 1e-12);
        }
    }
}
