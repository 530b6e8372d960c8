//! Frozen order-k byte n-gram with additive smoothing and backoff.
//!
//! Table dump format (little-endian, version 1):
//!
//! ```text
//! magic "MZNG" | u8 version | u8 order | u32 alphabet | u32 delta_num | u32 delta_den
//! for level 0..=order:
//!     u32 context_count
//!     per context, ascending key:  u64 key | u32 entry_count | entry_count x (u32 symbol, u32 count)
//! ```
//!
//! A key packs the context length in bits 48..50 and up to three 16-bit
//! symbols from bit 0 upward, oldest first.

use std::collections::HashMap;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::adaptive::{check_context_alphabet, context_key, Counts, Smoothing, MAX_ORDER};
use super::{check_symbol, Model, ModelContext, ModelOutput, Mode};
use crate::codec::QuantizedPmf;
use crate::error::{Error, Result};

pub const MAX_NGRAM_ORDER: usize = MAX_ORDER;
const MAGIC: [u8; 4] = *b"MZNG";
const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramTables {
    order: usize,
    alphabet: usize,
    smoothing: Smoothing,
    /// `levels[j]` maps a length-j context to its next-symbol counts.
    levels: Vec<HashMap<u64, Counts>>,
}

impl NgramTables {
    pub fn train(data: &[u32], alphabet: usize, order: usize, smoothing: Smoothing) -> Result<Self> {
        check_context_alphabet(alphabet, order)?;
        if data.is_empty() {
            return Err(Error::InvalidConfig("n-gram training data is empty".into()));
        }
        let mut levels = vec![HashMap::new(); order + 1];
        for (i, &s) in data.iter().enumerate() {
            if s as usize >= alphabet {
                return Err(Error::InvalidConfig(format!(
                    "training symbol {s} outside alphabet of {alphabet}"
                )));
            }
            for (j, level) in levels.iter_mut().enumerate().take(order.min(i) + 1) {
                level
                    .entry(context_key(&data[i - j..i]))
                    .or_insert_with(Counts::default)
                    .add(s);
            }
        }
        Ok(NgramTables {
            order,
            alphabet,
            smoothing,
            levels,
        })
    }

    pub fn train_bytes(data: &[u8], order: usize, smoothing: Smoothing) -> Result<Self> {
        let symbols: Vec<u32> = data.iter().map(|&b| u32::from(b)).collect();
        Self::train(&symbols, 256, order, smoothing)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    /// Longest seen context ending at the end of `history`, as (level, key).
    fn lookup(&self, history: &[u32]) -> (usize, u64) {
        let longest = self.order.min(history.len());
        for j in (0..=longest).rev() {
            let key = context_key(&history[history.len() - j..]);
            if self.levels[j].contains_key(&key) {
                return (j, key);
            }
        }
        unreachable!("order-0 context always present after training")
    }

    fn counts(&self, level: usize, key: u64) -> &Counts {
        &self.levels[level][&key]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.order as u8);
        out.extend_from_slice(&(self.alphabet as u32).to_le_bytes());
        out.extend_from_slice(&self.smoothing.num().to_le_bytes());
        out.extend_from_slice(&self.smoothing.den().to_le_bytes());
        for level in &self.levels {
            let mut keys: Vec<&u64> = level.keys().collect();
            keys.sort_unstable();
            out.extend_from_slice(&(keys.len() as u32).to_le_bytes());
            for key in keys {
                let c = &level[key];
                out.extend_from_slice(&key.to_le_bytes());
                out.extend_from_slice(&(c.entries.len() as u32).to_le_bytes());
                for &(s, n) in &c.entries {
                    out.extend_from_slice(&s.to_le_bytes());
                    out.extend_from_slice(&n.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::ModelTable("bad magic".into()));
        }
        let version = r.take(1)?[0];
        if version != VERSION {
            return Err(Error::ModelTable(format!("unsupported version {version}")));
        }
        let order = r.take(1)?[0] as usize;
        let alphabet = r.u32()? as usize;
        check_context_alphabet(alphabet, order).map_err(|e| Error::ModelTable(e.to_string()))?;
        let smoothing =
            Smoothing::new(r.u32()?, r.u32()?).map_err(|e| Error::ModelTable(e.to_string()))?;
        let mut levels = Vec::with_capacity(order + 1);
        for j in 0..=order {
            let n = r.u32()? as usize;
            let mut level = HashMap::with_capacity(n.min(1 << 20));
            for _ in 0..n {
                let key = r.u64()?;
                if key >> 48 != j as u64 {
                    return Err(Error::ModelTable(format!("key {key:#x} filed under level {j}")));
                }
                let m = r.u32()? as usize;
                let mut c = Counts::default();
                for _ in 0..m {
                    let s = r.u32()?;
                    let n = r.u32()?;
                    if s as usize >= alphabet || n == 0 {
                        return Err(Error::ModelTable(format!("bad entry ({s}, {n})")));
                    }
                    if c.entries.last().is_some_and(|e| e.0 >= s) {
                        return Err(Error::ModelTable("entries not sorted".into()));
                    }
                    c.entries.push((s, n));
                    c.total = c
                        .total
                        .checked_add(n)
                        .ok_or_else(|| Error::ModelTable("count overflow".into()))?;
                }
                level.insert(key, c);
            }
            levels.push(level);
        }
        if r.pos != bytes.len() {
            return Err(Error::ModelTable("trailing bytes".into()));
        }
        if !levels[0].contains_key(&context_key(&[])) {
            return Err(Error::ModelTable("missing order-0 counts".into()));
        }
        Ok(NgramTables {
            order,
            alphabet,
            smoothing,
            levels,
        })
    }

    /// First 12 hex digits of the SHA-256 of the table dump.
    pub fn fingerprint(&self) -> String {
        Sha256::digest(self.to_bytes())
            .iter()
            .take(6)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::ModelTable("truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Read-only view over shared [`NgramTables`]; caches quantized tables per
/// context.
#[derive(Debug, Clone)]
pub struct StaticNgramModel {
    tables: Arc<NgramTables>,
    id: String,
    cache: HashMap<(usize, u64), QuantizedPmf>,
    cache_precision: u32,
}

impl StaticNgramModel {
    pub fn new(tables: Arc<NgramTables>) -> Self {
        let id = format!("ngram:o{}:{}", tables.order, tables.fingerprint());
        StaticNgramModel {
            tables,
            id,
            cache: HashMap::new(),
            cache_precision: 0,
        }
    }

    pub fn tables(&self) -> &Arc<NgramTables> {
        &self.tables
    }
}

impl Model for StaticNgramModel {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn alphabet_size(&self) -> usize {
        self.tables.alphabet
    }

    fn begin_chunk(&mut self, _known: Option<&[u32]>) -> Result<()> {
        Ok(())
    }

    fn next_distribution(&mut self, ctx: &ModelContext<'_>, mode: Mode) -> Result<ModelOutput> {
        check_symbol(self.tables.alphabet, ctx)?;
        let t = &self.tables;
        let (level, key) = t.lookup(ctx.symbols_so_far);
        let counts = t.counts(level, key);
        match mode {
            Mode::Metrics => match ctx.target {
                Some(s) => Ok(ModelOutput {
                    log2_probs: None,
                    quantized: None,
                    log2_prob_of_next: Some(counts.log2_prob(s, t.smoothing, t.alphabet)),
                }),
                None => Ok(ModelOutput::from_log2_probs(
                    counts.log2_probs(t.smoothing, t.alphabet),
                    None,
                )),
            },
            Mode::Codec { precision } => {
                if precision != self.cache_precision {
                    self.cache.clear();
                    self.cache_precision = precision;
                }
                let pmf = match self.cache.get(&(level, key)) {
                    Some(p) => p.clone(),
                    None => {
                        let p = counts.quantize(t.smoothing, t.alphabet, precision)?;
                        self.cache.insert((level, key), p.clone());
                        p
                    }
                };
                Ok(ModelOutput::from_quantized(pmf, ctx.target))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(text: &[u8], order: usize) -> StaticNgramModel {
        StaticNgramModel::new(Arc::new(NgramTables::train_bytes(text, order, Smoothing::LAPLACE).unwrap()))
    }

    fn p(m: &mut StaticNgramModel, ctx: &[u8], s: u8) -> f64 {
        let ctx: Vec<u32> = ctx.iter().map(|&b| u32::from(b)).collect();
        m.log2_prob_of_next(&ctx, u32::from(s)).unwrap().exp2()
    }

    #[test]
    fn order0_counts() {
        let mut m = model(b"AAAB", 0);
        assert!((p(&mut m, b"", b'A') - 4.0 / 260.0).abs() < 1e-15);
    }

    #[test]
    fn order1_context() {
        let mut m = model(b"ABAB", 1);
        assert!((p(&mut m, b"A", b'B') - 3.0 / 258.0).abs() < 1e-15);
    }

    #[test]
    fn unseen_context_backs_off() {
        let mut m = model(b"ABAB", 1);
        let mut m0 = model(b"ABAB", 0);
        for s in 0..=255u8 {
            assert_eq!(p(&mut m, b"Z", s), p(&mut m0, b"", s));
        }
    }

    #[test]
    fn dump_round_trip() {
        let t = NgramTables::train_bytes(b"hello world, hello ngram tables", 3, Smoothing::KT).unwrap();
        let back = NgramTables::from_bytes(&t.to_bytes()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.fingerprint(), t.fingerprint());
        let mut bytes = t.to_bytes();
        bytes.pop();
        assert!(NgramTables::from_bytes(&bytes).is_err());
        assert!(NgramTables::from_bytes(b"XXXX").is_err());
    }

    #[test]
    fn training_rejects_bad_input() {
        assert!(NgramTables::train_bytes(b"", 1, Smoothing::LAPLACE).is_err());
        assert!(NgramTables::train_bytes(b"abc", 4, Smoothing::LAPLACE).is_err());
    }

    #[test]
    fn codec_tables_are_cached_and_valid() {
        let mut m = model(b"abcabcabd", 2);
        let ctx = [u32::from(b'a'), u32::from(b'b')];
        let q1 = m.quantized(&ModelContext::new(&ctx), 16).unwrap();
        let q2 = m.quantized(&ModelContext::new(&ctx), 16).unwrap();
        assert_eq!(q1, q2);
        assert_eq!(q1.argmax(), usize::from(b'c'));
    }
}
