//! Seeded self-check: the finite-precision coder against the exact-interval
//! reference, and the bridge conformance suite against every mock mode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bridge::{run_conformance, ConformanceReport, Endpoint, MockMode};
use crate::codec::{quantize_weights, ArithmeticDecoder, ArithmeticEncoder, CoderConfig, QuantizedPmf};
use crate::error::Result;
use crate::oracle::ExactInterval;

/// Slack allowed between the coder's output and the ideal code length.
pub const ORACLE_SLACK_BITS: u64 = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCase {
    pub index: usize,
    pub len: usize,
    pub alphabet: usize,
    pub payload_bits: u64,
    pub oracle_bound: u64,
    pub decoded: bool,
}

impl OracleCase {
    pub fn passed(&self) -> bool {
        self.decoded && self.payload_bits <= self.oracle_bound + ORACLE_SLACK_BITS
    }
}

fn random_table(rng: &mut ChaCha8Rng, alphabet: usize, precision: u32) -> Result<QuantizedPmf> {
    let skew = rng.random_range(0..4u32);
    let weights: Vec<u64> = (0..alphabet)
        .map(|_| match skew {
            0 => rng.random_range(1..=100),
            1 => 1u64 << rng.random_range(0..40),
            2 => u64::from(rng.random_bool(0.1)) * rng.random_range(1..1_000_000),
            _ => rng.random_range(0..3),
        })
        .collect();
    if weights.iter().all(|&w| w == 0) {
        return QuantizedPmf::uniform(alphabet, precision);
    }
    quantize_weights(&weights, precision)
}

/// Codes one random sequence of at most `max_len` symbols, each under its
/// own random table, and compares against the exact interval.
pub fn oracle_case(seed: u64, index: usize, max_len: usize, cfg: &CoderConfig) -> Result<OracleCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let len = rng.random_range(1..=max_len);
    let alphabet = rng.random_range(2..=300usize.min(1 << cfg.precision));
    let mut tables = Vec::with_capacity(len);
    let mut symbols = Vec::with_capacity(len);
    let mut exact = ExactInterval::new(cfg.precision);
    let mut enc = ArithmeticEncoder::new(*cfg)?;
    for _ in 0..len {
        let t = random_table(&mut rng, alphabet, cfg.precision)?;
        let s = if rng.random_bool(0.2) {
            (0..alphabet).min_by_key(|&s| t.freq(s)).unwrap_or(0)
        } else {
            t.symbol_for(rng.random_range(0..t.total()))
        };
        enc.encode(&t, s)?;
        exact.push(&t, s);
        symbols.push(s);
        tables.push(t);
    }
    let (payload, bits) = enc.finish();
    let mut dec = ArithmeticDecoder::new(*cfg, &payload, bits)?;
    let decoded = tables
        .iter()
        .zip(&symbols)
        .all(|(t, &s)| dec.decode(t).map(|d| d == s).unwrap_or(false));
    Ok(OracleCase {
        index,
        len,
        alphabet,
        payload_bits: bits,
        oracle_bound: exact.code_length_bound(),
        decoded,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub oracle_cases: usize,
    pub oracle_failures: Vec<OracleCase>,
    pub max_excess_bits: i64,
    pub conformance: Vec<ConformanceReport>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.oracle_failures.is_empty() && self.conformance.iter().all(ConformanceReport::passed)
    }
}

pub fn run_selftest(seed: u64, cases: usize) -> Result<SelftestReport> {
    let cfg = CoderConfig::default();
    let mut failures = Vec::new();
    let mut max_excess = i64::MIN;
    for i in 0..cases {
        let c = oracle_case(seed, i, 256, &cfg)?;
        max_excess = max_excess.max(c.payload_bits as i64 - c.oracle_bound as i64);
        if !c.passed() {
            failures.push(c);
        }
    }
    let conformance = MockMode::ALL
        .iter()
        .map(|&m| run_conformance(&Endpoint::Mock(m), seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(SelftestReport {
        seed,
        oracle_cases: cases,
        oracle_failures: failures,
        max_excess_bits: if cases == 0 { 0 } else { max_excess },
        conformance,
    })
}
