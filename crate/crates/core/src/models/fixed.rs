use super::{check_symbol, Model, ModelContext, ModelOutput, Mode};
use crate::codec::{quantize_pmf, QuantizedPmf};
use crate::error::{Error, Result};

/// A memoryless source with a fixed distribution.
#[derive(Debug, Clone)]
pub struct FixedModel {
    probs: Vec<f64>,
    log2_probs: Vec<f64>,
    table: Option<QuantizedPmf>,
}

impl FixedModel {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        // Validates the distribution.
        quantize_pmf(&probs, 16).or_else(|e| match e {
            Error::AlphabetTooLarge { .. } => quantize_pmf(&probs, 30),
            e => Err(e),
        })?;
        let log2_probs = probs.iter().map(|p| p.log2()).collect();
        Ok(FixedModel {
            probs,
            log2_probs,
            table: None,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

impl Model for FixedModel {
    fn id(&self) -> String {
        format!("fixed:a{}", self.probs.len())
    }

    fn alphabet_size(&self) -> usize {
        self.probs.len()
    }

    fn begin_chunk(&mut self, _known: Option<&[u32]>) -> Result<()> {
        Ok(())
    }

    fn next_distribution(&mut self, ctx: &ModelContext<'_>, mode: Mode) -> Result<ModelOutput> {
        check_symbol(self.probs.len(), ctx)?;
        match mode {
            Mode::Metrics => Ok(ModelOutput::from_log2_probs(self.log2_probs.clone(), ctx.target)),
            Mode::Codec { precision } => {
                let pmf = self.quantized(ctx, precision)?;
                Ok(ModelOutput::from_quantized(pmf, ctx.target))
            }
        }
    }

    fn quantized(&mut self, _ctx: &ModelContext<'_>, precision: u32) -> Result<QuantizedPmf> {
        match &self.table {
            Some(t) if t.precision() == precision => Ok(t.clone()),
            _ => {
                let t = quantize_pmf(&self.probs, precision)?;
                self.table = Some(t.clone());
                Ok(t)
            }
        }
    }

    fn log2_prob_of_next(&mut self, _symbols_so_far: &[u32], symbol: u32) -> Result<f64> {
        self.log2_probs
            .get(symbol as usize)
            .copied()
            .ok_or_else(|| Error::InvalidPmf(format!("symbol {symbol} outside alphabet")))
    }
}
