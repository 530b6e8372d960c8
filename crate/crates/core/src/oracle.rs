//! Infinite-precision reference arithmetic: the interval an ideal coder
//! would reach, and exact products of rational probabilities.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::codec::QuantizedPmf;

/// `log2(x)` for a positive big integer, to double precision.
pub fn log2_big(x: &BigUint) -> f64 {
    assert!(!x.is_zero(), "log2 of zero");
    let shift = x.bits().saturating_sub(64);
    ((x >> shift).to_u64().unwrap() as f64).log2() + shift as f64
}

/// The exact interval `[low, low + width)` after coding a sequence, with
/// every step's interval taken from a quantized table of fixed precision.
/// Both ends are stored as numerators over `2^(precision * steps)`.
#[derive(Debug, Clone)]
pub struct ExactInterval {
    precision: u32,
    steps: u64,
    low: BigUint,
    width: BigUint,
}

impl ExactInterval {
    pub fn new(precision: u32) -> Self {
        ExactInterval {
            precision,
            steps: 0,
            low: BigUint::zero(),
            width: BigUint::one(),
        }
    }

    pub fn push(&mut self, pmf: &QuantizedPmf, symbol: usize) {
        assert_eq!(pmf.precision(), self.precision, "mixed precisions");
        let (lo, hi) = pmf.interval(symbol);
        self.low = (&self.low << self.precision) + &self.width * lo;
        self.width *= hi - lo;
        self.steps += 1;
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn scale_bits(&self) -> u64 {
        u64::from(self.precision) * self.steps
    }

    /// `-log2 P` of the whole sequence.
    pub fn neg_log2_prob(&self) -> f64 {
        self.scale_bits() as f64 - log2_big(&self.width)
    }

    /// `ceil(-log2 P)`, exactly.
    pub fn ceil_neg_log2_prob(&self) -> u64 {
        self.scale_bits() - (self.width.bits() - 1)
    }

    /// The classical bound on an ideal arithmetic code, `ceil(-log2 P) + 1`.
    pub fn code_length_bound(&self) -> u64 {
        self.ceil_neg_log2_prob() + 1
    }

    /// Length of the shortest `k` such that some dyadic interval
    /// `[c / 2^k, (c + 1) / 2^k)` fits inside the coded interval.
    pub fn shortest_codeword_bits(&self) -> u64 {
        let s = self.scale_bits();
        let high = &self.low + &self.width;
        (0..=s)
            .find(|&k| {
                // c = ceil(low / 2^(s - k)); the codeword fits if (c + 1) * 2^(s - k) <= high.
                let unit = BigUint::one() << (s - k);
                let c = (&self.low + &unit - 1u32) / &unit;
                (c + 1u32) * unit <= high
            })
            .expect("a codeword of s bits always fits")
    }
}

/// An exact product of rational probabilities.
#[derive(Debug, Clone)]
pub struct ExactProduct {
    num: BigUint,
    den: BigUint,
}

impl Default for ExactProduct {
    fn default() -> Self {
        ExactProduct {
            num: BigUint::one(),
            den: BigUint::one(),
        }
    }
}

impl ExactProduct {
    pub fn mul(&mut self, num: u64, den: u64) {
        assert!(num > 0 && num <= den, "probability {num}/{den}");
        self.num *= num;
        self.den *= den;
    }

    pub fn neg_log2(&self) -> f64 {
        log2_big(&self.den) - log2_big(&self.num)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::quantize_pmf;

    #[test]
    fn dyadic_sequence() {
        let pmf = quantize_pmf(&[0.5, 0.25, 0.25], 16).unwrap();
        let mut iv = ExactInterval::new(16);
        for s in [0, 1, 0] {
            iv.push(&pmf, s);
        }
        assert_eq!(iv.ceil_neg_log2_prob(), 4);
        assert_eq!(iv.neg_log2_prob(), 4.0);
        assert_eq!(iv.code_length_bound(), 5);
        // [0, 1/16) is itself dyadic.
        assert_eq!(iv.shortest_codeword_bits(), 4);
    }

    #[test]
    fn codeword_within_bound() {
        let pmf = quantize_pmf(&[0.7, 0.2, 0.1], 16).unwrap();
        let mut iv = ExactInterval::new(16);
        for (i, s) in [0, 2, 1, 1, 0, 0, 2, 0, 1].into_iter().enumerate() {
            iv.push(&pmf, s);
            assert!(iv.shortest_codeword_bits() <= iv.code_length_bound(), "step {i}");
            let exact = iv.neg_log2_prob();
            assert_eq!(iv.ceil_neg_log2_prob(), (exact - 1e-9).ceil() as u64);
        }
    }

    #[test]
    fn log2_of_large_values() {
        let x = BigUint::one() << 1000u32;
        assert_eq!(log2_big(&x), 1000.0);
        let y = BigUint::from(3u32) << 500u32;
        assert!((log2_big(&y) - (500.0 + 3f64.log2())).abs() < 1e-12);
    }

    #[test]
    fn rational_product() {
        let mut p = ExactProduct::default();
        p.mul(1, 2);
        p.mul(1, 4);
        p.mul(3, 6);
        assert_eq!(p.neg_log2(), 4.0);
    }
}
