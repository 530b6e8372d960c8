use super::client::{Endpoint, EvalParams, EvalResult, Session};
use super::protocol::BosPolicy;
use crate::codec::QuantizedPmf;
use crate::error::{Error, Result};
use crate::harness::Domain;
use crate::models::{check_symbol, Model, ModelContext, ModelOutput, Mode};

enum Cached {
    Metrics(Vec<f64>),
    Codec { precision: u32, rows: Vec<QuantizedPmf> },
}

/// A sidecar session seen as a [`Model`].
///
/// In the byte domain the alphabet is the 256 byte values and the session's
/// byte map translates them to token ids; otherwise symbols are token ids.
/// When the whole chunk is known up front, one request covers it; otherwise
/// each position costs a request carrying the full prefix.
pub struct BridgeModel {
    session: Session,
    domain: Domain,
    known: Option<Vec<u32>>,
    cached: Option<Cached>,
}

impl BridgeModel {
    pub fn open(endpoint: &Endpoint, domain: Domain) -> Result<Self> {
        Self::new(Session::open(endpoint)?, domain)
    }

    pub fn new(session: Session, domain: Domain) -> Result<Self> {
        if domain == Domain::Bytes && session.info().byte_token_map.is_none() {
            return Err(Error::ByteDomainUnsupported {
                model: session.info().model_name.clone(),
            });
        }
        Ok(BridgeModel {
            session,
            domain,
            known: None,
            cached: None,
        })
    }

    pub fn session(&mut self) -> &mut Session {
        &mut self.session
    }

    fn wire_ids(&self, symbols: &[u32]) -> Result<Vec<u32>> {
        match (self.domain, &self.session.info().byte_token_map) {
            (Domain::Bytes, Some(map)) => symbols
                .iter()
                .map(|&s| {
                    u8::try_from(s)
                        .map(|b| map.token(b))
                        .map_err(|_| Error::InvalidPmf(format!("symbol {s} is not a byte")))
                })
                .collect(),
            _ => Ok(symbols.to_vec()),
        }
    }

    fn params<'a>(&self, p: EvalParams<'a>) -> EvalParams<'a> {
        if self.domain == Domain::Bytes {
            p.bytes()
        } else {
            p
        }
    }

    fn metrics(&mut self, ids: &[u32], score_from: usize) -> Result<Vec<f64>> {
        let p = self.params(EvalParams::metrics(ids, score_from));
        match self.session.eval(&p)? {
            EvalResult::Metrics(l) => Ok(l),
            EvalResult::Codec(_) => unreachable!("checked by the session"),
        }
    }

    fn codec(&mut self, ids: &[u32], precision: u32, score_from: usize, next: bool) -> Result<Vec<QuantizedPmf>> {
        let p = self.params(EvalParams::codec(ids, precision, score_from, next));
        match self.session.eval(&p)? {
            EvalResult::Codec(rows) => Ok(rows),
            EvalResult::Metrics(_) => unreachable!("checked by the session"),
        }
    }

    /// Position `j` of the known chunk, if `history` is its prefix.
    fn known_position(&self, history: &[u32]) -> Option<usize> {
        let known = self.known.as_ref()?;
        let j = history.len();
        (j < known.len() && (j == 0 || history[j - 1] == known[j - 1])).then_some(j)
    }
}

impl Model for BridgeModel {
    fn id(&self) -> String {
        let info = self.session.info();
        match self.domain {
            Domain::Bytes => format!("bridge:{}", info.model_name),
            Domain::TextTokens => format!("bridge:{}:tokens", info.model_name),
        }
    }

    fn alphabet_size(&self) -> usize {
        match self.domain {
            Domain::Bytes => 256,
            Domain::TextTokens => self.session.info().vocab_size,
        }
    }

    fn begin_chunk(&mut self, known: Option<&[u32]>) -> Result<()> {
        self.known = known.map(<[u32]>::to_vec);
        self.cached = None;
        Ok(())
    }

    fn next_distribution(&mut self, ctx: &ModelContext<'_>, mode: Mode) -> Result<ModelOutput> {
        check_symbol(self.alphabet_size(), ctx)?;
        let history = ctx.symbols_so_far;
        let known_j = self.known_position(history);
        match mode {
            Mode::Metrics => {
                let target = ctx.target.ok_or_else(|| {
                    Error::InvalidConfig(
                        "bridge models report only the probability of a realized symbol".into(),
                    )
                })?;
                let l = match known_j {
                    Some(j) if self.known.as_ref().unwrap()[j] == target => {
                        if !matches!(self.cached, Some(Cached::Metrics(_))) {
                            let ids = self.wire_ids(self.known.as_ref().unwrap())?;
                            self.cached = Some(Cached::Metrics(self.metrics(&ids, 0)?));
                        }
                        match &self.cached {
                            Some(Cached::Metrics(l)) => l[j],
                            _ => unreachable!(),
                        }
                    }
                    _ => {
                        let mut ids = self.wire_ids(history)?;
                        ids.extend(self.wire_ids(&[target])?);
                        self.metrics(&ids, history.len())?[0]
                    }
                };
                Ok(ModelOutput {
                    log2_probs: None,
                    quantized: None,
                    log2_prob_of_next: Some(l),
                })
            }
            Mode::Codec { precision } => {
                let pmf = match known_j {
                    Some(j) => {
                        let fresh = !matches!(&self.cached, Some(Cached::Codec { precision: p, .. }) if *p == precision);
                        if fresh {
                            let ids = self.wire_ids(self.known.as_ref().unwrap())?;
                            let rows = self.codec(&ids, precision, 0, false)?;
                            self.cached = Some(Cached::Codec { precision, rows });
                        }
                        match &self.cached {
                            Some(Cached::Codec { rows, .. }) => rows[j].clone(),
                            _ => unreachable!(),
                        }
                    }
                    None => {
                        let ids = self.wire_ids(history)?;
                        self.codec(&ids, precision, history.len(), true)?.remove(0)
                    }
                };
                Ok(ModelOutput::from_quantized(pmf, ctx.target))
            }
        }
    }

    fn bos_policy(&self) -> BosPolicy {
        self.session.info().bos_policy
    }

    fn score_window(&mut self, window: &[u32], score_from: usize) -> Result<Vec<f64>> {
        let ids = self.wire_ids(window)?;
        self.metrics(&ids, score_from)
    }

    fn tokenize(&mut self, text: &str) -> Result<Vec<u32>> {
        match self.domain {
            Domain::Bytes => Ok(text.bytes().map(u32::from).collect()),
            Domain::TextTokens => self.session.tokenize(text),
        }
    }

    fn detokenize(&mut self, ids: &[u32]) -> Result<String> {
        match self.domain {
            Domain::Bytes => {
                let bytes: Vec<u8> = ids
                    .iter()
                    .map(|&s| u8::try_from(s).map_err(|_| Error::InvalidPmf(format!("symbol {s} is not a byte"))))
                    .collect::<Result<_>>()?;
                String::from_utf8(bytes).map_err(|e| Error::InvalidPmf(e.to_string()))
            }
            Domain::TextTokens => self.session.detokenize(ids),
        }
    }
}
