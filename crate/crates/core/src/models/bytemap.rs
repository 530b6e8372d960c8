use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{log2_sum_exp2, ModelOutput};
use crate::error::{Error, Result};

/// Vocabulary ids reserved for the 256 byte values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct ByteTokenMap {
    byte_to_token: [u32; 256],
    token_to_byte: HashMap<u32, u8>,
}

impl ByteTokenMap {
    pub fn new(byte_to_token: &[u32]) -> Result<Self> {
        let table: [u32; 256] = byte_to_token.try_into().map_err(|_| {
            Error::InvalidConfig(format!(
                "byte map needs 256 entries, got {}",
                byte_to_token.len()
            ))
        })?;
        let mut token_to_byte = HashMap::with_capacity(256);
        for (b, &t) in table.iter().enumerate() {
            if token_to_byte.insert(t, b as u8).is_some() {
                return Err(Error::InvalidConfig(format!(
                    "byte map is not injective: token {t} used twice"
                )));
            }
        }
        Ok(ByteTokenMap {
            byte_to_token: table,
            token_to_byte,
        })
    }

    pub fn identity() -> Self {
        Self::offset(0)
    }

    /// Bytes occupy the contiguous ids `offset..offset + 256`.
    pub fn offset(offset: u32) -> Self {
        let ids: Vec<u32> = (0..256).map(|b| b + offset).collect();
        Self::new(&ids).expect("contiguous ids are injective")
    }

    pub fn token(&self, byte: u8) -> u32 {
        self.byte_to_token[byte as usize]
    }

    pub fn byte(&self, token: u32) -> Option<u8> {
        self.token_to_byte.get(&token).copied()
    }

    pub fn tokens(&self) -> &[u32; 256] {
        &self.byte_to_token
    }

    pub fn max_token(&self) -> u32 {
        self.byte_to_token.iter().copied().max().unwrap_or(0)
    }
}

impl TryFrom<Vec<u32>> for ByteTokenMap {
    type Error = Error;

    fn try_from(v: Vec<u32>) -> Result<Self> {
        Self::new(&v)
    }
}

impl From<ByteTokenMap> for Vec<u32> {
    fn from(m: ByteTokenMap) -> Self {
        m.byte_to_token.to_vec()
    }
}

/// Keeps the 256 byte tokens of a vocabulary-wide distribution and
/// renormalizes them, indexed by byte value.
pub fn restrict_to_bytes(full: &ModelOutput, map: &ByteTokenMap) -> Result<ModelOutput> {
    let log2_probs = full
        .log2_probs
        .as_ref()
        .ok_or_else(|| Error::InvalidPmf("restriction needs real log-probabilities".into()))?;
    let mut selected = Vec::with_capacity(256);
    for &t in map.tokens() {
        let l = log2_probs.get(t as usize).copied().ok_or_else(|| {
            Error::InvalidConfig(format!(
                "byte token {t} outside vocabulary of {}",
                log2_probs.len()
            ))
        })?;
        selected.push(l);
    }
    let norm = log2_sum_exp2(&selected);
    if !norm.is_finite() {
        return Err(Error::InvalidPmf("byte tokens carry no probability mass".into()));
    }
    for l in &mut selected {
        *l -= norm;
    }
    Ok(ModelOutput::from_log2_probs(selected, None))
}
