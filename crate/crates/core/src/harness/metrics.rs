use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Total code length in bits of the scored positions: `-sum(log2 p)`.
pub fn total_bits(log2_probs: &[f64]) -> Result<f64> {
    let mut sum = 0.0;
    for (position, &l) in log2_probs.iter().enumerate() {
        if !l.is_finite() || l > 0.0 {
            return Err(Error::NonFinite { position });
        }
        sum -= l;
    }
    Ok(sum)
}

/// The count a per-unit figure implies for a known total: `total / per_unit`.
/// Two different units of the same text give their count ratio this way.
pub fn implied_count(total_bits: f64, bits_per_unit: f64) -> f64 {
    total_bits / bits_per_unit
}

/// The total a per-unit figure implies: `per_unit * count`.
pub fn implied_total(bits_per_unit: f64, count: f64) -> f64 {
    bits_per_unit * count
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub total_bits: f64,
    pub n_tokens: u64,
    pub n_chars: u64,
    pub n_bytes: u64,
    pub bpt: f64,
    pub bpc: f64,
    pub bpb: f64,
    pub rate: f64,
    pub payload_bytes: Option<u64>,
}

impl MetricsReport {
    pub fn new(total_bits: f64, n_tokens: u64, n_chars: u64, n_bytes: u64, payload_bytes: Option<u64>) -> Result<Self> {
        if n_tokens == 0 || n_chars == 0 || n_bytes == 0 {
            return Err(Error::InvalidConfig(format!(
                "metrics need positive counts, got {n_tokens} tokens, {n_chars} chars, {n_bytes} bytes"
            )));
        }
        if !total_bits.is_finite() || total_bits < 0.0 {
            return Err(Error::InvalidConfig(format!("total bits {total_bits} is not a length")));
        }
        let rate = match payload_bytes {
            Some(p) => p as f64 / n_bytes as f64,
            None => total_bits / (8.0 * n_bytes as f64),
        };
        Ok(MetricsReport {
            total_bits,
            n_tokens,
            n_chars,
            n_bytes,
            bpt: total_bits / n_tokens as f64,
            bpc: total_bits / n_chars as f64,
            bpb: total_bits / n_bytes as f64,
            rate,
            payload_bytes,
        })
    }

    /// Pools several reports: lengths and counts add up, so the per-unit
    /// figures are weighted by size.
    pub fn merge<'a>(reports: impl IntoIterator<Item = &'a MetricsReport>) -> Result<Self> {
        let mut total = 0.0;
        let (mut t, mut c, mut b) = (0, 0, 0);
        let mut payload = Some(0);
        for r in reports {
            total += r.total_bits;
            t += r.n_tokens;
            c += r.n_chars;
            b += r.n_bytes;
            payload = payload.zip(r.payload_bytes).map(|(x, y)| x + y);
        }
        if b == 0 {
            return Err(Error::InvalidConfig("nothing to merge".into()));
        }
        Self::new(total, t, c, b, payload)
    }

    pub fn theoretical_rate(&self) -> f64 {
        self.total_bits / (8.0 * self.n_bytes as f64)
    }

    /// Largest relative deviation of `bpt*n_tokens`, `bpc*n_chars` and
    /// `bpb*n_bytes` from the total.
    pub fn identity_error(&self) -> f64 {
        let l = self.total_bits;
        [
            implied_total(self.bpt, self.n_tokens as f64),
            implied_total(self.bpc, self.n_chars as f64),
            implied_total(self.bpb, self.n_bytes as f64),
        ]
        .iter()
        .map(|v| if l == 0.0 { v.abs() } else { ((v - l) / l).abs() })
        .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totals() {
        assert_eq!(total_bits(&[-8.0; 100]).unwrap(), 800.0);
        assert_eq!(total_bits(&[]).unwrap(), 0.0);
        assert!(matches!(total_bits(&[-1.0, f64::NAN]), Err(Error::NonFinite { position: 1 })));
        assert!(total_bits(&[0.5]).is_err());
    }

    #[test]
    fn per_unit_figures() {
        let r = MetricsReport::new(1000.0, 100, 250, 300, None).unwrap();
        assert_eq!(r.bpt, 10.0);
        assert_eq!(r.bpc, 4.0);
        assert!((r.rate - 1000.0 / 2400.0).abs() < 1e-15);
        assert!(r.identity_error() < 1e-12);
        let p = MetricsReport::new(1000.0, 100, 250, 300, Some(126)).unwrap();
        assert_eq!(p.rate, 0.42);
        assert!(MetricsReport::new(1.0, 0, 1, 1, None).is_err());
    }

    #[test]
    fn merging_pools_counts() {
        let a = MetricsReport::new(800.0, 100, 100, 100, Some(100)).unwrap();
        let b = MetricsReport::new(100.0, 50, 50, 100, None).unwrap();
        let m = MetricsReport::merge([&a, &b]).unwrap();
        assert_eq!(m.total_bits, 900.0);
        assert_eq!(m.n_bytes, 200);
        assert_eq!(m.bpb, 4.5);
        assert_eq!(m.payload_bytes, None);
    }

    #[test]
    fn implied_counts() {
        let l = implied_total(2.0, 1000.0);
        assert_eq!(implied_count(l, 0.5), 4000.0);
    }
}
