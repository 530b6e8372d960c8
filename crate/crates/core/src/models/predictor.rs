use super::{check_symbol, log2_sum_exp2, Model, ModelContext, ModelOutput, Mode};
use crate::codec::quantize_pmf;
use crate::error::{Error, Result};

/// A compressor seen only through the length of its output.
pub trait CodeLength: Send + Sync {
    fn bits(&self, data: &[u8]) -> Result<f64>;
}

impl<F> CodeLength for F
where
    F: Fn(&[u8]) -> f64 + Send + Sync,
{
    fn bits(&self, data: &[u8]) -> Result<f64> {
        Ok(self(data))
    }
}

/// Next-byte distribution `P(b) ∝ 2^(l(prefix) - l(prefix·b))` over all 256
/// one-byte extensions. Costs 257 compressor calls.
pub fn compressor_predictor(prefix: &[u8], compress_len: &dyn CodeLength) -> Result<ModelOutput> {
    let base = compress_len.bits(prefix)?;
    let mut buf = Vec::with_capacity(prefix.len() + 1);
    buf.extend_from_slice(prefix);
    buf.push(0);
    let mut exps = Vec::with_capacity(256);
    for b in 0..=255u8 {
        *buf.last_mut().unwrap() = b;
        let l = compress_len.bits(&buf)?;
        if !l.is_finite() || !base.is_finite() {
            return Err(Error::NonFinite { position: prefix.len() });
        }
        exps.push(base - l);
    }
    let norm = log2_sum_exp2(&exps);
    for e in &mut exps {
        *e -= norm;
    }
    Ok(ModelOutput::from_log2_probs(exps, None))
}

/// Wraps a [`CodeLength`] as a byte model.
pub struct CompressorPredictor<L> {
    length: L,
    id: String,
}

impl<L: CodeLength> CompressorPredictor<L> {
    pub fn new(length: L, id: impl Into<String>) -> Self {
        CompressorPredictor {
            length,
            id: id.into(),
        }
    }
}

impl<L: CodeLength> Model for CompressorPredictor<L> {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn alphabet_size(&self) -> usize {
        256
    }

    fn begin_chunk(&mut self, _known: Option<&[u32]>) -> Result<()> {
        Ok(())
    }

    fn next_distribution(&mut self, ctx: &ModelContext<'_>, mode: Mode) -> Result<ModelOutput> {
        check_symbol(256, ctx)?;
        let prefix: Vec<u8> = ctx
            .symbols_so_far
            .iter()
            .map(|&s| {
                u8::try_from(s).map_err(|_| Error::InvalidPmf(format!("symbol {s} is not a byte")))
            })
            .collect::<Result<_>>()?;
        let out = compressor_predictor(&prefix, &self.length)?;
        match mode {
            Mode::Metrics => Ok(ModelOutput::from_log2_probs(
                out.log2_probs.unwrap(),
                ctx.target,
            )),
            Mode::Codec { precision } => {
                let probs = out.probs().unwrap();
                Ok(ModelOutput::from_quantized(quantize_pmf(&probs, precision)?, ctx.target))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Memoryless source with P(b) = 2^-(b+1) for b < 254 and P(254) = P(255) = 2^-255.
    fn dyadic_bits(b: u8) -> f64 {
        f64::from(b.min(254)) + 1.0
    }

    #[test]
    fn constant_length_is_uniform() {
        let out = compressor_predictor(b"xyz", &|_: &[u8]| 100.0).unwrap();
        for p in out.probs().unwrap() {
            assert!((p - 1.0 / 256.0).abs() < 1e-15);
        }
    }

    #[test]
    fn ideal_compressor_recovers_source() {
        let ideal = |d: &[u8]| d.iter().map(|&b| dyadic_bits(b)).sum::<f64>();
        let out = compressor_predictor(b"\x00\x03\x01", &ideal).unwrap();
        let l = out.log2_probs.unwrap();
        for b in 0..=255u8 {
            assert!((l[b as usize] + dyadic_bits(b)).abs() < 1e-12, "byte {b}");
        }
    }

    #[test]
    fn empty_prefix_normalizes() {
        let len = |d: &[u8]| (d.len() * 8) as f64 + f64::from(d.first().copied().unwrap_or(0) % 7);
        let out = compressor_predictor(b"", &len).unwrap();
        let sum: f64 = out.probs().unwrap().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn as_model() {
        let ideal = |d: &[u8]| d.iter().map(|&b| dyadic_bits(b)).sum::<f64>();
        let mut m = CompressorPredictor::new(ideal, "ideal");
        assert_eq!(m.log2_prob_of_next(&[1, 2], 0).unwrap(), -1.0);
        let q = m.quantized(&ModelContext::new(&[]), 16).unwrap();
        assert_eq!(q.argmax(), 0);
        assert!(m.log2_prob_of_next(&[300], 0).is_err());
    }
}
