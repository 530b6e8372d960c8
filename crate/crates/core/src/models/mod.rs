//! Probability sources. Every model answers the same question: the
//! distribution of the next symbol given the symbols seen so far in the
//! current chunk. Metrics mode answers in real log2-probabilities; codec mode
//! answers with a [`QuantizedPmf`].

mod adaptive;
mod bytemap;
mod fixed;
mod ngram;
mod predictor;
mod registry;
mod uniform;

pub use adaptive::{AdaptiveModel, Smoothing};
pub use bytemap::{restrict_to_bytes, ByteTokenMap};
pub use fixed::FixedModel;
pub use ngram::{NgramTables, StaticNgramModel, MAX_NGRAM_ORDER};
pub use predictor::{compressor_predictor, CodeLength, CompressorPredictor};
pub use registry::{ModelSpec, SharedFactory, SIDECAR_ENV};
pub use uniform::UniformModel;

use crate::bridge::BosPolicy;
use crate::codec::QuantizedPmf;
use crate::error::{Error, Result};

/// The conditioning prefix for one prediction.
#[derive(Debug, Clone, Copy)]
pub struct ModelContext<'a> {
    pub symbols_so_far: &'a [u32],
    /// The realized next symbol, when known (teacher forcing).
    pub target: Option<u32>,
}

impl<'a> ModelContext<'a> {
    pub fn new(symbols_so_far: &'a [u32]) -> Self {
        ModelContext {
            symbols_so_far,
            target: None,
        }
    }

    pub fn with_target(symbols_so_far: &'a [u32], target: u32) -> Self {
        ModelContext {
            symbols_so_far,
            target: Some(target),
        }
    }

    pub fn position(&self) -> usize {
        self.symbols_so_far.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Metrics,
    Codec { precision: u32 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelOutput {
    pub log2_probs: Option<Vec<f64>>,
    pub quantized: Option<QuantizedPmf>,
    pub log2_prob_of_next: Option<f64>,
}

impl ModelOutput {
    pub fn from_log2_probs(log2_probs: Vec<f64>, target: Option<u32>) -> Self {
        let log2_prob_of_next = target.and_then(|t| log2_probs.get(t as usize).copied());
        ModelOutput {
            log2_probs: Some(log2_probs),
            quantized: None,
            log2_prob_of_next,
        }
    }

    pub fn from_quantized(pmf: QuantizedPmf, target: Option<u32>) -> Self {
        let log2_prob_of_next = target.map(|t| pmf.log2_prob(t as usize));
        ModelOutput {
            log2_probs: None,
            quantized: Some(pmf),
            log2_prob_of_next,
        }
    }

    pub fn probs(&self) -> Option<Vec<f64>> {
        self.log2_probs
            .as_ref()
            .map(|l| l.iter().map(|v| v.exp2()).collect())
    }
}

pub trait Model: Send {
    /// Canonical identifier, recorded in archive headers.
    fn id(&self) -> String;

    fn alphabet_size(&self) -> usize;

    /// Resets per-chunk state. `known` carries the whole chunk when the
    /// caller has it up front (encoding, teacher-forced scoring), which lets
    /// remote models batch their work.
    ///
    /// Between two calls, the contexts passed to the model must each extend
    /// the previous one; stateful models update incrementally and only
    /// detect rewinds and a changed last symbol.
    fn begin_chunk(&mut self, known: Option<&[u32]>) -> Result<()>;

    fn next_distribution(&mut self, ctx: &ModelContext<'_>, mode: Mode) -> Result<ModelOutput>;

    fn quantized(&mut self, ctx: &ModelContext<'_>, precision: u32) -> Result<QuantizedPmf> {
        self.next_distribution(ctx, Mode::Codec { precision })?
            .quantized
            .ok_or_else(|| Error::InvalidPmf(format!("model `{}` returned no table", self.id())))
    }

    /// Teacher-forced log2-probabilities of `window[score_from..]`, each
    /// conditioned on everything before it inside the window.
    fn score_window(&mut self, window: &[u32], score_from: usize) -> Result<Vec<f64>> {
        self.begin_chunk(Some(window))?;
        (score_from..window.len())
            .map(|j| self.log2_prob_of_next(&window[..j], window[j]))
            .collect()
    }

    /// How the first position of a chunk is scored.
    fn bos_policy(&self) -> BosPolicy {
        BosPolicy::None
    }

    /// Text to symbols. Local models read UTF-8 bytes.
    fn tokenize(&mut self, text: &str) -> Result<Vec<u32>> {
        if self.alphabet_size() < 256 {
            return Err(Error::InvalidConfig(format!(
                "model `{}` has no byte alphabet to tokenize with",
                self.id()
            )));
        }
        Ok(text.bytes().map(u32::from).collect())
    }

    fn detokenize(&mut self, ids: &[u32]) -> Result<String> {
        let bytes = ids
            .iter()
            .map(|&t| u8::try_from(t).map_err(|_| Error::InvalidPmf(format!("id {t} is not a byte"))))
            .collect::<Result<Vec<u8>>>()?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidPmf(format!("detokenized text: {e}")))
    }

    fn log2_prob_of_next(&mut self, symbols_so_far: &[u32], symbol: u32) -> Result<f64> {
        let ctx = ModelContext::with_target(symbols_so_far, symbol);
        let out = self.next_distribution(&ctx, Mode::Metrics)?;
        out.log2_prob_of_next
            .or_else(|| out.log2_probs.as_ref().and_then(|l| l.get(symbol as usize).copied()))
            .ok_or_else(|| {
                Error::InvalidPmf(format!("model `{}` has no probability for {symbol}", self.id()))
            })
    }
}

impl<M: Model + ?Sized> Model for Box<M> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn alphabet_size(&self) -> usize {
        (**self).alphabet_size()
    }

    fn begin_chunk(&mut self, known: Option<&[u32]>) -> Result<()> {
        (**self).begin_chunk(known)
    }

    fn next_distribution(&mut self, ctx: &ModelContext<'_>, mode: Mode) -> Result<ModelOutput> {
        (**self).next_distribution(ctx, mode)
    }

    fn quantized(&mut self, ctx: &ModelContext<'_>, precision: u32) -> Result<QuantizedPmf> {
        (**self).quantized(ctx, precision)
    }

    fn log2_prob_of_next(&mut self, symbols_so_far: &[u32], symbol: u32) -> Result<f64> {
        (**self).log2_prob_of_next(symbols_so_far, symbol)
    }

    fn score_window(&mut self, window: &[u32], score_from: usize) -> Result<Vec<f64>> {
        (**self).score_window(window, score_from)
    }

    fn bos_policy(&self) -> BosPolicy {
        (**self).bos_policy()
    }

    fn tokenize(&mut self, text: &str) -> Result<Vec<u32>> {
        (**self).tokenize(text)
    }

    fn detokenize(&mut self, ids: &[u32]) -> Result<String> {
        (**self).detokenize(ids)
    }
}

/// Scores every position of `symbols` under teacher forcing, starting from
/// fresh model state: element `j` is `log2 P(x_j | x_0..x_{j-1})`.
pub fn score_sequence(model: &mut dyn Model, symbols: &[u32]) -> Result<Vec<f64>> {
    model.score_window(symbols, 0)
}

/// `log2(sum(2^x))`, stable for very negative inputs.
pub fn log2_sum_exp2(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp2()).sum::<f64>().log2()
}

pub(crate) fn check_symbol(alphabet: usize, ctx: &ModelContext<'_>) -> Result<()> {
    if let Some(t) = ctx.target {
        if t as usize >= alphabet {
            return Err(Error::InvalidPmf(format!(
                "symbol {t} outside alphabet of {alphabet}"
            )));
        }
    }
    Ok(())
}
