//! Finite-precision binary arithmetic coder with pending-bit underflow
//! handling (the Witten-Neal-Cleary construction on B-bit registers).

use serde::{Deserialize, Serialize};

use super::bits::{BitReader, BitWriter};
use super::pmf::{QuantizedPmf, MAX_PRECISION};
use crate::error::{Error, Result};
use crate::models::{Model, ModelContext};

pub const DEFAULT_REGISTER_BITS: u32 = 32;
pub const DEFAULT_PRECISION: u32 = 16;
pub const MAX_REGISTER_BITS: u32 = 32;

/// Register width `B` and frequency precision `F`, with `F <= B - 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoderConfig {
    pub register_bits: u32,
    pub precision: u32,
}

impl Default for CoderConfig {
    fn default() -> Self {
        CoderConfig {
            register_bits: DEFAULT_REGISTER_BITS,
            precision: DEFAULT_PRECISION,
        }
    }
}

impl CoderConfig {
    pub fn new(register_bits: u32, precision: u32) -> Result<Self> {
        let cfg = CoderConfig {
            register_bits,
            precision,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_precision(precision: u32) -> Result<Self> {
        Self::new(DEFAULT_REGISTER_BITS, precision)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_PRECISION).contains(&self.precision) {
            return Err(Error::InvalidConfig(format!(
                "precision F={} outside 1..={MAX_PRECISION}",
                self.precision
            )));
        }
        if self.register_bits > MAX_REGISTER_BITS || self.precision + 2 > self.register_bits {
            return Err(Error::InvalidConfig(format!(
                "register width B={} must satisfy F+2 <= B <= {MAX_REGISTER_BITS} (F={})",
                self.register_bits, self.precision
            )));
        }
        Ok(())
    }

    fn top(&self) -> u64 {
        (1u64 << self.register_bits) - 1
    }

    fn half(&self) -> u64 {
        1u64 << (self.register_bits - 1)
    }

    fn quarter(&self) -> u64 {
        1u64 << (self.register_bits - 2)
    }
}

/// One independently decodable arithmetic-coded chunk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkFrame {
    pub symbol_count: u32,
    pub bit_length: u32,
    pub payload: Vec<u8>,
}

impl ChunkFrame {
    pub fn payload_bytes(&self) -> usize {
        self.payload.len()
    }
}

/// Register contents, exposed for inspection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoderState {
    pub low: u64,
    pub high: u64,
    pub pending_bits: u64,
    pub code: u64,
}

pub struct ArithmeticEncoder {
    cfg: CoderConfig,
    low: u64,
    high: u64,
    pending: u64,
    out: BitWriter,
}

impl ArithmeticEncoder {
    pub fn new(cfg: CoderConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(ArithmeticEncoder {
            cfg,
            low: 0,
            high: cfg.top(),
            pending: 0,
            out: BitWriter::new(),
        })
    }

    pub fn state(&self) -> CoderState {
        CoderState {
            low: self.low,
            high: self.high,
            pending_bits: self.pending,
            code: 0,
        }
    }

    fn emit(&mut self, bit: bool) {
        self.out.push(bit);
        self.out.push_repeated(!bit, self.pending);
        self.pending = 0;
    }

    pub fn encode(&mut self, pmf: &QuantizedPmf, symbol: usize) -> Result<()> {
        if pmf.precision() != self.cfg.precision {
            return Err(Error::InvalidPmf(format!(
                "table precision {} differs from coder precision {}",
                pmf.precision(),
                self.cfg.precision
            )));
        }
        if symbol >= pmf.alphabet_size() {
            return Err(Error::InvalidPmf(format!(
                "symbol {symbol} outside alphabet of {}",
                pmf.alphabet_size()
            )));
        }
        let (lo, hi) = pmf.interval(symbol);
        let range = self.high - self.low + 1;
        let shift = self.cfg.precision;
        self.high = self.low + ((range * u64::from(hi)) >> shift) - 1;
        self.low += (range * u64::from(lo)) >> shift;

        let (half, quarter) = (self.cfg.half(), self.cfg.quarter());
        loop {
            if self.high < half {
                self.emit(false);
            } else if self.low >= half {
                self.emit(true);
                self.low -= half;
                self.high -= half;
            } else if self.low >= quarter && self.high < half + quarter {
                self.pending += 1;
                self.low -= quarter;
                self.high -= quarter;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
        }
        Ok(())
    }

    /// Emits the terminal bits and returns `(payload, bit_length)`.
    ///
    /// The tail selects the quarter point inside `[low, high]`: one bit,
    /// its pending complements, and one disambiguation bit. A reader that
    /// pads with zeros lands exactly on that point.
    pub fn finish(mut self) -> (Vec<u8>, u64) {
        self.pending += 1;
        let bit = self.low >= self.cfg.quarter();
        self.emit(bit);
        self.out.into_parts()
    }
}

pub struct ArithmeticDecoder<'a> {
    cfg: CoderConfig,
    low: u64,
    high: u64,
    code: u64,
    reader: BitReader<'a>,
    index: usize,
}

impl<'a> ArithmeticDecoder<'a> {
    pub fn new(cfg: CoderConfig, payload: &'a [u8], bit_length: u64) -> Result<Self> {
        cfg.validate()?;
        let mut reader = BitReader::new(payload, bit_length);
        let mut code = 0;
        for _ in 0..cfg.register_bits {
            let bit = reader
                .next_bit()
                .map_err(|_| Error::Truncated { symbol_index: 0 })?;
            code = (code << 1) | bit;
        }
        Ok(ArithmeticDecoder {
            cfg,
            low: 0,
            high: cfg.top(),
            code,
            reader,
            index: 0,
        })
    }

    pub fn state(&self) -> CoderState {
        CoderState {
            low: self.low,
            high: self.high,
            pending_bits: 0,
            code: self.code,
        }
    }

    /// Bits consumed from the stream, including zero padding past the end.
    pub fn bits_read(&self) -> u64 {
        self.reader.position()
    }

    pub fn decode(&mut self, pmf: &QuantizedPmf) -> Result<usize> {
        let index = self.index;
        if pmf.precision() != self.cfg.precision {
            return Err(Error::InvalidPmf(format!(
                "table precision {} differs from coder precision {}",
                pmf.precision(),
                self.cfg.precision
            )));
        }
        if self.code < self.low || self.code > self.high {
            return Err(Error::ModelMismatch {
                symbol_index: index,
            });
        }
        let range = self.high - self.low + 1;
        let shift = self.cfg.precision;
        let target = (((self.code - self.low + 1) << shift) - 1) / range;
        if target >= u64::from(pmf.total()) {
            return Err(Error::ModelMismatch {
                symbol_index: index,
            });
        }
        let symbol = pmf.symbol_for(target as u32);
        let (lo, hi) = pmf.interval(symbol);
        self.high = self.low + ((range * u64::from(hi)) >> shift) - 1;
        self.low += (range * u64::from(lo)) >> shift;

        let (half, quarter) = (self.cfg.half(), self.cfg.quarter());
        loop {
            if self.high < half {
                // nothing to subtract
            } else if self.low >= half {
                self.low -= half;
                self.high -= half;
                self.code -= half;
            } else if self.low >= quarter && self.high < half + quarter {
                self.low -= quarter;
                self.high -= quarter;
                self.code -= quarter;
            } else {
                break;
            }
            let bit = self
                .reader
                .next_bit()
                .map_err(|_| Error::Truncated {
                    symbol_index: index,
                })?;
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
            self.code = (self.code << 1) | bit;
        }
        self.index += 1;
        Ok(symbol)
    }
}

/// Per-chunk accounting gathered while encoding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChunkStats {
    /// `-sum(log2 q(x_i))` under the quantized tables actually used.
    pub quantized_bits: f64,
}

fn checked_count(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::InvalidConfig(format!("chunk of {n} symbols is too long")))
}

fn next_table(
    model: &mut dyn Model,
    history: &[u32],
    cfg: &CoderConfig,
    alphabet: usize,
) -> Result<QuantizedPmf> {
    let pmf = model.quantized(&ModelContext::new(history), cfg.precision)?;
    if pmf.alphabet_size() != alphabet {
        return Err(Error::InvalidPmf(format!(
            "model produced a table over {} symbols, expected {alphabet}",
            pmf.alphabet_size()
        )));
    }
    Ok(pmf)
}

/// Encodes one chunk with fresh model state.
pub fn encode_chunk(symbols: &[u32], model: &mut dyn Model, cfg: &CoderConfig) -> Result<ChunkFrame> {
    encode_chunk_with_stats(symbols, model, cfg).map(|(frame, _)| frame)
}

pub fn encode_chunk_with_stats(
    symbols: &[u32],
    model: &mut dyn Model,
    cfg: &CoderConfig,
) -> Result<(ChunkFrame, ChunkStats)> {
    if symbols.is_empty() {
        return Err(Error::InvalidConfig("cannot encode an empty chunk".into()));
    }
    let symbol_count = checked_count(symbols.len())?;
    let alphabet = model.alphabet_size();
    model.begin_chunk(Some(symbols))?;
    let mut enc = ArithmeticEncoder::new(*cfg)?;
    let mut log2_freq_sum = 0.0;
    for (i, &s) in symbols.iter().enumerate() {
        let pmf = next_table(model, &symbols[..i], cfg, alphabet)?;
        enc.encode(&pmf, s as usize)?;
        log2_freq_sum += f64::from(pmf.freq(s as usize)).log2();
    }
    let (payload, bits) = enc.finish();
    let bit_length = u32::try_from(bits)
        .map_err(|_| Error::InvalidConfig(format!("chunk code of {bits} bits is too long")))?;
    let quantized_bits = f64::from(cfg.precision) * symbols.len() as f64 - log2_freq_sum;
    Ok((
        ChunkFrame {
            symbol_count,
            bit_length,
            payload,
        },
        ChunkStats { quantized_bits },
    ))
}

/// Decodes `frame.symbol_count` symbols, replaying the model from fresh state.
pub fn decode_chunk(frame: &ChunkFrame, model: &mut dyn Model, cfg: &CoderConfig) -> Result<Vec<u32>> {
    if frame.symbol_count == 0 {
        return Err(Error::Archive("chunk declares zero symbols".into()));
    }
    let alphabet = model.alphabet_size();
    model.begin_chunk(None)?;
    let mut dec = ArithmeticDecoder::new(*cfg, &frame.payload, u64::from(frame.bit_length))?;
    let mut out = Vec::with_capacity(frame.symbol_count as usize);
    for _ in 0..frame.symbol_count {
        let pmf = next_table(model, &out, cfg, alphabet)?;
        let s = dec.decode(&pmf)?;
        out.push(s as u32);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::pmf::quantize_pmf;
    use crate::models::{AdaptiveModel, FixedModel, UniformModel};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_bytes(n: usize, seed: u64) -> Vec<u32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(0..256)).collect()
    }

    #[test]
    fn config_validation() {
        assert!(CoderConfig::new(32, 16).is_ok());
        assert!(CoderConfig::new(32, 30).is_ok());
        assert!(CoderConfig::new(32, 31).is_err());
        assert!(CoderConfig::new(33, 16).is_err());
        assert!(CoderConfig::new(17, 16).is_err());
        assert!(CoderConfig::new(18, 16).is_ok());
    }

    #[test]
    fn uniform_costs_eight_bits_per_byte() {
        let data = random_bytes(1000, 1);
        let mut model = UniformModel::new(256);
        let frame = encode_chunk(&data, &mut model, &CoderConfig::default()).unwrap();
        assert!((8000..=8008).contains(&frame.bit_length), "{}", frame.bit_length);
        assert_eq!(frame.payload.len(), (frame.bit_length as usize).div_ceil(8));
        assert_eq!(decode_chunk(&frame, &mut model, &CoderConfig::default()).unwrap(), data);
    }

    #[test]
    fn dyadic_fixed_model() {
        let mut model = FixedModel::new(vec![0.5, 0.25, 0.25]).unwrap();
        let cfg = CoderConfig::default();
        let frame = encode_chunk(&[0, 1, 0], &mut model, &cfg).unwrap();
        assert!(frame.bit_length <= 12, "{}", frame.bit_length);
        assert_eq!(decode_chunk(&frame, &mut model, &cfg).unwrap(), vec![0, 1, 0]);
    }

    #[test]
    fn single_symbol_round_trip() {
        let cfg = CoderConfig::default();
        let mut model = UniformModel::new(256);
        for s in [0u32, 1, 127, 255] {
            let frame = encode_chunk(&[s], &mut model, &cfg).unwrap();
            assert_eq!(frame.symbol_count, 1);
            assert_eq!(decode_chunk(&frame, &mut model, &cfg).unwrap(), vec![s]);
        }
    }

    #[test]
    fn adaptive_order2_round_trip() {
        let cfg = CoderConfig::default();
        let data = random_bytes(10_000, 7);
        let mut model = AdaptiveModel::laplace(256, 2).unwrap();
        let frame = encode_chunk(&data, &mut model, &cfg).unwrap();
        assert_eq!(decode_chunk(&frame, &mut model, &cfg).unwrap(), data);
    }

    #[test]
    fn truncated_payload_names_symbol() {
        let cfg = CoderConfig::default();
        let data: Vec<u32> = b"the quick brown fox jumps over the lazy dog, again and again!!"
            .iter()
            .map(|&b| u32::from(b))
            .collect();
        let mut model = AdaptiveModel::laplace(256, 0).unwrap();
        let mut frame = encode_chunk(&data, &mut model, &cfg).unwrap();
        frame.payload.pop();
        match decode_chunk(&frame, &mut model, &cfg) {
            Err(Error::Truncated { symbol_index }) => assert!(symbol_index < data.len()),
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn empty_chunk_rejected() {
        let mut model = UniformModel::new(256);
        assert!(encode_chunk(&[], &mut model, &CoderConfig::default()).is_err());
    }

    #[test]
    fn deterministic_output() {
        let cfg = CoderConfig::default();
        let data = random_bytes(3000, 3);
        let mut m1 = AdaptiveModel::laplace(256, 1).unwrap();
        let mut m2 = AdaptiveModel::laplace(256, 1).unwrap();
        assert_eq!(
            encode_chunk(&data, &mut m1, &cfg).unwrap(),
            encode_chunk(&data, &mut m2, &cfg).unwrap()
        );
    }

    #[test]
    fn never_reads_past_bit_length() {
        let cfg = CoderConfig::default();
        let data = random_bytes(500, 11);
        let mut model = AdaptiveModel::laplace(256, 0).unwrap();
        let frame = encode_chunk(&data, &mut model, &cfg).unwrap();
        // Garbage in the padding bits must not matter.
        let mut dirty = frame.clone();
        let pad = dirty.payload.len() * 8 - dirty.bit_length as usize;
        if pad > 0 {
            *dirty.payload.last_mut().unwrap() |= (1u8 << pad) - 1;
        }
        assert_eq!(decode_chunk(&dirty, &mut model, &cfg).unwrap(), data);
    }

    #[test]
    fn narrow_registers_still_round_trip() {
        let cfg = CoderConfig::new(12, 10).unwrap();
        let data = random_bytes(2000, 5);
        let mut model = AdaptiveModel::laplace(256, 1).unwrap();
        let frame = encode_chunk(&data, &mut model, &cfg).unwrap();
        assert_eq!(decode_chunk(&frame, &mut model, &cfg).unwrap(), data);
    }

    proptest! {
        /// After each renormalization the interval spans more than a quarter
        /// of the register.
        #[test]
        fn register_invariants(data in prop::collection::vec(0usize..3, 1..400)) {
            let cfg = CoderConfig::default();
            let pmf = quantize_pmf(&[0.9, 0.09, 0.01], 16).unwrap();
            let mut enc = ArithmeticEncoder::new(cfg).unwrap();
            for &s in &data {
                enc.encode(&pmf, s).unwrap();
                let st = enc.state();
                prop_assert!(st.low <= st.high);
                prop_assert!(st.high - st.low >= 1u64 << 30);
            }
        }

        #[test]
        fn length_bound(data in prop::collection::vec(0u32..256, 1..2000)) {
            let cfg = CoderConfig::default();
            let mut model = AdaptiveModel::laplace(256, 1).unwrap();
            let (frame, stats) = encode_chunk_with_stats(&data, &mut model, &cfg).unwrap();
            prop_assert!(f64::from(frame.bit_length) <= stats.quantized_bits.ceil() + 8.0);
            prop_assert!(f64::from(frame.bit_length) >= stats.quantized_bits.floor());
        }
    }
}
