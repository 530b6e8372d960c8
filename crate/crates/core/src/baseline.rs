//! Deflate as a classical reference compressor.
//!
//! Lengths are measured on the raw deflate stream. A gzip container adds a
//! fixed [`GZIP_FRAMING_BYTES`] around that stream (10-byte header with no
//! optional fields, 8-byte CRC32 + size trailer), which is never counted.

use std::cell::RefCell;

use flate2::{Compress, Compression, FlushCompress, Status};

use crate::error::{Error, Result};
use crate::models::CodeLength;

pub const GZIP_FRAMING_BYTES: usize = 18;
pub const DEFAULT_LEVEL: u32 = 9;

thread_local! {
    static COMPRESSOR: RefCell<Option<(u32, Compress)>> = const { RefCell::new(None) };
}

/// Raw deflate stream length at `level`. Each thread keeps one compressor
/// and resets it between calls.
pub fn deflate_len_at(data: &[u8], level: u32) -> usize {
    COMPRESSOR.with_borrow_mut(|slot| {
        let c = match slot {
            Some((l, c)) if *l == level => {
                c.reset();
                c
            }
            _ => &mut slot.insert((level, Compress::new(Compression::new(level), false))).1,
        };
        let mut out = Vec::with_capacity(data.len() + data.len() / 64 + 64);
        loop {
            let consumed = c.total_in() as usize;
            match c.compress_vec(&data[consumed..], &mut out, FlushCompress::Finish) {
                Ok(Status::StreamEnd) => return c.total_out() as usize,
                Ok(_) => out.reserve(out.capacity().max(64)),
                Err(e) => unreachable!("deflate of in-memory data failed: {e}"),
            }
        }
    })
}

/// Raw deflate stream length at maximum compression.
pub fn deflate_len(data: &[u8]) -> usize {
    deflate_len_at(data, DEFAULT_LEVEL)
}

pub fn deflate_rate(data: &[u8]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidConfig("rate of empty input is undefined".into()));
    }
    Ok(deflate_len(data) as f64 / data.len() as f64)
}

/// Deflate output length in bits, as a [`CodeLength`].
#[derive(Debug, Clone, Copy)]
pub struct DeflateLength {
    pub level: u32,
}

impl Default for DeflateLength {
    fn default() -> Self {
        DeflateLength { level: DEFAULT_LEVEL }
    }
}

impl CodeLength for DeflateLength {
    fn bits(&self, data: &[u8]) -> Result<f64> {
        Ok(8.0 * deflate_len_at(data, self.level) as f64)
    }
}
