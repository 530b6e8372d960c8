//! Inputs shared by the benchmarks.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_bytes(seed: u64, len: usize) -> Vec<u8> {
    let mut data = vec![0; len];
    ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut data);
    data
}

/// Word salad over a small vocabulary, compressible enough that the
/// adaptive models have something to learn.
pub fn text_like(seed: u64, len: usize) -> Vec<u8> {
    const WORDS: [&str; 16] = [
        "the", "of", "compression", "model", "and", "a", "rate", "to", "in", "is", "that", "data", "for", "byte",
        "month", "with",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(len + 16);
    while out.len() < len {
        let w = WORDS[rng.random_range(0..WORDS.len()).min(rng.random_range(0..WORDS.len()))];
        out.extend_from_slice(w.as_bytes());
        out.push(if rng.random_bool(0.08) { b'\n' } else { b' ' });
    }
    out.truncate(len);
    out
}

pub fn as_symbols(data: &[u8]) -> Vec<u32> {
    data.iter().map(|&b| u32::from(b)).collect()
}

/// A normalized distribution with a geometric tail, for quantizer benches.
pub fn geometric_probs(alphabet: usize, ratio: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..alphabet).map(|i| ratio.powi(i as i32)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inputs_are_seeded_and_sized() {
        assert_eq!(random_bytes(1, 100), random_bytes(1, 100));
        assert_ne!(random_bytes(1, 100), random_bytes(2, 100));
        let t = text_like(3, 1000);
        assert_eq!(t.len(), 1000);
        assert!(t.iter().all(|b| b.is_ascii()));
        let p = geometric_probs(256, 0.9);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
