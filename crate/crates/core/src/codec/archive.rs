//! `MZP1` container: a fixed header followed by independently coded chunks.
//!
//! ```text
//! magic         4 bytes   "MZP1"
//! version       u8        1
//! B             u8        register width
//! F             u8        frequency precision
//! alphabet_size u32 LE
//! model_id      u16 LE length, then UTF-8 bytes
//! chunk_count   u32 LE
//! per chunk:    u32 LE symbol_count, u32 LE bit_length, ceil(bit_length/8) payload bytes
//! ```

use rayon::prelude::*;

use super::coder::{decode_chunk, encode_chunk, ChunkFrame, CoderConfig};
use crate::error::{Error, Result};
use crate::models::Model;

pub const MAGIC: [u8; 4] = *b"MZP1";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Archive {
    pub version: u8,
    pub config: CoderConfig,
    pub alphabet_size: u32,
    pub model_id: String,
    pub chunks: Vec<ChunkFrame>,
}

impl Archive {
    /// Sum of chunk payload sizes; the header is not counted.
    pub fn payload_bytes(&self) -> u64 {
        self.chunks.iter().map(|c| c.payload.len() as u64).sum()
    }

    pub fn symbol_count(&self) -> u64 {
        self.chunks.iter().map(|c| u64::from(c.symbol_count)).sum()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let id = self.model_id.as_bytes();
        let id_len = u16::try_from(id.len())
            .map_err(|_| Error::Archive(format!("model id of {} bytes is too long", id.len())))?;
        let chunk_count = u32::try_from(self.chunks.len())
            .map_err(|_| Error::Archive("too many chunks".into()))?;
        let mut out = Vec::with_capacity(19 + id.len() + self.payload_bytes() as usize + 8 * self.chunks.len());
        out.extend_from_slice(&MAGIC);
        out.push(self.version);
        out.push(self.config.register_bits as u8);
        out.push(self.config.precision as u8);
        out.extend_from_slice(&self.alphabet_size.to_le_bytes());
        out.extend_from_slice(&id_len.to_le_bytes());
        out.extend_from_slice(id);
        out.extend_from_slice(&chunk_count.to_le_bytes());
        for (i, c) in self.chunks.iter().enumerate() {
            if c.payload.len() != (c.bit_length as usize).div_ceil(8) {
                return Err(Error::Archive(format!(
                    "chunk {i}: {} payload bytes for {} bits",
                    c.payload.len(),
                    c.bit_length
                )));
            }
            out.extend_from_slice(&c.symbol_count.to_le_bytes());
            out.extend_from_slice(&c.bit_length.to_le_bytes());
            out.extend_from_slice(&c.payload);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::Archive("bad magic".into()));
        }
        let version = r.u8("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Archive(format!("unsupported version {version}")));
        }
        let register_bits = u32::from(r.u8("register width")?);
        let precision = u32::from(r.u8("precision")?);
        let config = CoderConfig::new(register_bits, precision)
            .map_err(|e| Error::Archive(e.to_string()))?;
        let alphabet_size = r.u32("alphabet size")?;
        if alphabet_size == 0 || u64::from(alphabet_size) > 1u64 << precision {
            return Err(Error::Archive(format!(
                "alphabet size {alphabet_size} invalid for precision {precision}"
            )));
        }
        let id_len = r.u16("model id length")? as usize;
        let model_id = String::from_utf8(r.take(id_len, "model id")?.to_vec())
            .map_err(|_| Error::Archive("model id is not UTF-8".into()))?;
        let count = r.u32("chunk count")? as usize;
        let mut chunks = Vec::with_capacity(count.min(1 << 16));
        for i in 0..count {
            let symbol_count = r.u32("symbol count")?;
            let bit_length = r.u32("bit length")?;
            if symbol_count == 0 {
                return Err(Error::Archive(format!("chunk {i} declares zero symbols")));
            }
            let payload = r
                .take((bit_length as usize).div_ceil(8), "payload")
                .map_err(|e| e.in_chunk(i))?
                .to_vec();
            chunks.push(ChunkFrame {
                symbol_count,
                bit_length,
                payload,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::Archive(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Archive {
            version,
            config,
            alphabet_size,
            model_id,
            chunks,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Archive(format!("truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

fn check_chunk_size(chunk_size: usize) -> Result<()> {
    if chunk_size == 0 {
        return Err(Error::InvalidConfig("chunk size must be at least 1".into()));
    }
    Ok(())
}

fn header(model: &dyn Model, cfg: &CoderConfig) -> Result<(u32, String)> {
    let alphabet = u32::try_from(model.alphabet_size())
        .map_err(|_| Error::AlphabetTooLarge {
            alphabet: model.alphabet_size(),
            precision: cfg.precision,
        })?;
    Ok((alphabet, model.id()))
}

/// Splits `symbols` into chunks of `chunk_size` and codes each with fresh
/// model state.
pub fn encode_stream(
    symbols: &[u32],
    model: &mut dyn Model,
    cfg: &CoderConfig,
    chunk_size: usize,
) -> Result<Archive> {
    cfg.validate()?;
    check_chunk_size(chunk_size)?;
    let (alphabet_size, model_id) = header(model, cfg)?;
    let chunks = symbols
        .chunks(chunk_size)
        .enumerate()
        .map(|(i, c)| encode_chunk(c, model, cfg).map_err(|e| e.in_chunk(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Archive {
        version: FORMAT_VERSION,
        config: *cfg,
        alphabet_size,
        model_id,
        chunks,
    })
}

fn check_model(archive: &Archive, model: &dyn Model) -> Result<()> {
    if model.id() != archive.model_id {
        return Err(Error::ModelIdMismatch {
            archive: archive.model_id.clone(),
            given: model.id(),
        });
    }
    if model.alphabet_size() != archive.alphabet_size as usize {
        return Err(Error::Archive(format!(
            "archive alphabet {} but model alphabet {}",
            archive.alphabet_size,
            model.alphabet_size()
        )));
    }
    Ok(())
}

pub fn decode_stream(archive: &Archive, model: &mut dyn Model) -> Result<Vec<u32>> {
    check_model(archive, model)?;
    let mut out = Vec::with_capacity(archive.symbol_count() as usize);
    for (i, frame) in archive.chunks.iter().enumerate() {
        let symbols = decode_chunk(frame, model, &archive.config).map_err(|e| e.in_chunk(i))?;
        out.extend_from_slice(&symbols);
    }
    Ok(out)
}

/// Builds a fresh model instance for one worker.
pub type ModelFactory<'a> = dyn Fn() -> Result<Box<dyn Model>> + Sync + 'a;

/// Parallel [`encode_stream`]: every chunk gets its own model from `factory`.
/// Output is identical to the sequential form.
pub fn encode_stream_par(
    symbols: &[u32],
    factory: &ModelFactory<'_>,
    cfg: &CoderConfig,
    chunk_size: usize,
) -> Result<Archive> {
    cfg.validate()?;
    check_chunk_size(chunk_size)?;
    let probe = factory()?;
    let (alphabet_size, model_id) = header(probe.as_ref(), cfg)?;
    let chunks = symbols
        .par_chunks(chunk_size)
        .enumerate()
        .map(|(i, c)| {
            let mut model = factory()?;
            encode_chunk(c, model.as_mut(), cfg).map_err(|e| e.in_chunk(i))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Archive {
        version: FORMAT_VERSION,
        config: *cfg,
        alphabet_size,
        model_id,
        chunks,
    })
}

pub fn decode_stream_par(archive: &Archive, factory: &ModelFactory<'_>) -> Result<Vec<u32>> {
    check_model(archive, factory()?.as_ref())?;
    let parts = archive
        .chunks
        .par_iter()
        .enumerate()
        .map(|(i, frame)| {
            let mut model = factory()?;
            decode_chunk(frame, model.as_mut(), &archive.config).map_err(|e| e.in_chunk(i))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.concat())
}
