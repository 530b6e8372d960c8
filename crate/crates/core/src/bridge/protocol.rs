//! Protocol v1 messages. One JSON object per line; every message has a
//! `type` tag and a `seq` number. Replies echo the `seq` of the request
//! they answer. See `docs/protocol.md` for the full schema.

use std::fmt;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::codec::QuantizedPmf;
use crate::error::{Error, Result};
use crate::models::ByteTokenMap;

pub const PROTOCOL_VERSION: u32 = 1;

/// Largest precision that fits a frequency row of u16 values.
pub const MAX_WIRE_PRECISION: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BosPolicy {
    #[default]
    None,
    PrependPerChunk,
}

impl BosPolicy {
    /// Extra context positions the policy consumes per chunk.
    pub fn overhead(self) -> usize {
        match self {
            BosPolicy::None => 0,
            BosPolicy::PrependPerChunk => 1,
        }
    }
}

impl fmt::Display for BosPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BosPolicy::None => "none",
            BosPolicy::PrependPerChunk => "prepend_per_chunk",
        })
    }
}

impl std::str::FromStr for BosPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(BosPolicy::None),
            "prepend_per_chunk" => Ok(BosPolicy::PrependPerChunk),
            _ => Err(Error::InvalidConfig(format!("unknown bos policy `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub vocab_size: usize,
    pub context_limit: usize,
    pub byte_token_map: Option<ByteTokenMap>,
    pub bos_policy: BosPolicy,
    pub model_name: String,
}

impl SessionInfo {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::Protocol("hello_ack: field `vocab_size` must be at least 2".into()));
        }
        if self.context_limit < 2 {
            return Err(Error::Protocol(
                "hello_ack: field `context_limit` must be at least 2".into(),
            ));
        }
        if let Some(map) = &self.byte_token_map {
            if map.max_token() as usize >= self.vocab_size {
                return Err(Error::Protocol(format!(
                    "hello_ack: field `byte_token_map` names token {} outside vocabulary of {}",
                    map.max_token(),
                    self.vocab_size
                )));
            }
        }
        if self.model_name.is_empty() {
            return Err(Error::Protocol("hello_ack: field `model_name` is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Metrics,
    Codec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRequest {
    pub seq: u64,
    pub ids: Vec<u32>,
    pub mode: EvalMode,
    /// Required in codec mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<u32>,
    /// First position to return; earlier positions only serve as context.
    #[serde(default)]
    pub score_from: usize,
    /// Codec mode only: also return the row for the position after `ids`.
    #[serde(default)]
    pub next: bool,
    /// Restrict every distribution to the 256 byte tokens, indexed by byte.
    #[serde(default)]
    pub byte_domain: bool,
}

impl EvalRequest {
    pub fn expected_positions(&self) -> usize {
        self.ids.len().saturating_sub(self.score_from) + usize::from(self.next)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResponse {
    pub seq: u64,
    pub bos_policy: BosPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log2_probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<u32>,
    /// Base64 rows of little-endian u16 frequencies, one per position.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Request {
    Hello { seq: u64, protocol: u32, client: String },
    Tokenize { seq: u64, text: String },
    Detokenize { seq: u64, ids: Vec<u32> },
    Eval(EvalRequest),
    Bye { seq: u64 },
}

impl Request {
    pub fn seq(&self) -> u64 {
        match self {
            Request::Hello { seq, .. }
            | Request::Tokenize { seq, .. }
            | Request::Detokenize { seq, .. }
            | Request::Bye { seq } => *seq,
            Request::Eval(r) => r.seq,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum Response {
    HelloAck { seq: u64, protocol: u32, session: SessionInfo },
    Tokenize { seq: u64, ids: Vec<u32> },
    Detokenize { seq: u64, text: String },
    EvalAck(EvalResponse),
    Error { seq: u64, code: String, message: String },
    Bye { seq: u64 },
}

impl Response {
    pub fn seq(&self) -> u64 {
        match self {
            Response::HelloAck { seq, .. }
            | Response::Tokenize { seq, .. }
            | Response::Detokenize { seq, .. }
            | Response::Error { seq, .. }
            | Response::Bye { seq } => *seq,
            Response::EvalAck(r) => r.seq,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Response::HelloAck { .. } => "hello_ack",
            Response::Tokenize { .. } => "tokenize",
            Response::Detokenize { .. } => "detokenize",
            Response::EvalAck(_) => "eval_ack",
            Response::Error { .. } => "error",
            Response::Bye { .. } => "bye",
        }
    }
}

/// Error codes a sidecar may send.
pub mod codes {
    pub const BAD_REQUEST: &str = "bad_request";
    pub const BAD_SEQUENCE: &str = "bad_sequence";
    pub const NO_SESSION: &str = "no_session";
    pub const VERSION_MISMATCH: &str = "version_mismatch";
    pub const CONTEXT_OVERFLOW: &str = "context_overflow";
    pub const OUT_OF_VOCAB: &str = "out_of_vocab";
    pub const BYTE_DOMAIN_UNSUPPORTED: &str = "byte_domain_unsupported";
    pub const INTERNAL: &str = "internal";
}

pub fn encode_row(pmf: &QuantizedPmf) -> Result<String> {
    let mut bytes = Vec::with_capacity(2 * pmf.alphabet_size());
    for s in 0..pmf.alphabet_size() {
        let f = u16::try_from(pmf.freq(s)).map_err(|_| {
            Error::Protocol(format!("frequency {} does not fit a u16 row", pmf.freq(s)))
        })?;
        bytes.extend_from_slice(&f.to_le_bytes());
    }
    Ok(BASE64.encode(bytes))
}

pub fn decode_row(row: &str, alphabet: usize, precision: u32) -> Result<QuantizedPmf> {
    let bytes = BASE64
        .decode(row)
        .map_err(|e| Error::Protocol(format!("row is not base64: {e}")))?;
    if bytes.len() != 2 * alphabet {
        return Err(Error::Protocol(format!(
            "row holds {} bytes, expected {} for {alphabet} symbols",
            bytes.len(),
            2 * alphabet
        )));
    }
    let freqs: Vec<u32> = bytes
        .chunks_exact(2)
        .map(|c| u32::from(u16::from_le_bytes([c[0], c[1]])))
        .collect();
    QuantizedPmf::from_frequencies(&freqs, precision)
        .map_err(|e| Error::Protocol(format!("row violates table invariants: {e}")))
}
