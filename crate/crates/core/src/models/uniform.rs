use super::{check_symbol, Model, ModelContext, ModelOutput, Mode};
use crate::codec::QuantizedPmf;
use crate::error::Result;

/// Every symbol equally likely, independent of context.
#[derive(Debug, Clone)]
pub struct UniformModel {
    alphabet: usize,
    table: Option<QuantizedPmf>,
}

impl UniformModel {
    pub fn new(alphabet: usize) -> Self {
        assert!(alphabet >= 1, "uniform model needs a non-empty alphabet");
        UniformModel {
            alphabet,
            table: None,
        }
    }
}

impl Model for UniformModel {
    fn id(&self) -> String {
        if self.alphabet == 256 {
            "uniform".into()
        } else {
            format!("uniform:a{}", self.alphabet)
        }
    }

    fn alphabet_size(&self) -> usize {
        self.alphabet
    }

    fn begin_chunk(&mut self, _known: Option<&[u32]>) -> Result<()> {
        Ok(())
    }

    fn next_distribution(&mut self, ctx: &ModelContext<'_>, mode: Mode) -> Result<ModelOutput> {
        check_symbol(self.alphabet, ctx)?;
        match mode {
            Mode::Metrics => {
                let l = -(self.alphabet as f64).log2();
                Ok(ModelOutput::from_log2_probs(vec![l; self.alphabet], ctx.target))
            }
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
                let t = QuantizedPmf::uniform(self.alphabet, precision)?;
                self.table = Some(t.clone());
                Ok(t)
            }
        }
    }

    fn log2_prob_of_next(&mut self, _symbols_so_far: &[u32], _symbol: u32) -> Result<f64> {
        Ok(-(self.alphabet as f64).log2())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minus_eight_bits_everywhere() {
        let mut m = UniformModel::new(256);
        for ctx in [&[][..], &[1, 2, 3][..]] {
            let out = m.next_distribution(&ModelContext::new(ctx), Mode::Metrics).unwrap();
            assert!(out.log2_probs.unwrap().iter().all(|&l| l == -8.0));
        }
        assert_eq!(m.log2_prob_of_next(&[9], 200).unwrap(), -8.0);
        let q = m.quantized(&ModelContext::new(&[]), 16).unwrap();
        assert!((0..256).all(|s| q.freq(s) == 256));
    }

    #[test]
    fn odd_alphabet_quantizes() {
        let mut m = UniformModel::new(3);
        let q = m.quantized(&ModelContext::new(&[]), 4).unwrap();
        assert_eq!(q.frequencies(), vec![6, 5, 5]);
    }
}
