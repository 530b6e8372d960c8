//! Reference sidecar that speaks protocol v1 with small in-process models.
//! Byte tokenizer, no BOS, context limit 4096.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use super::protocol::{
    codes, encode_row, BosPolicy, EvalMode, EvalRequest, EvalResponse, Request, Response,
    SessionInfo, MAX_WIRE_PRECISION, PROTOCOL_VERSION,
};
use crate::codec::quantize_pmf;
use crate::error::{Error, Result};
use crate::models::{
    restrict_to_bytes, AdaptiveModel, ByteTokenMap, Model, ModelContext, Mode, Smoothing,
    UniformModel,
};

pub const MOCK_CONTEXT_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MockMode {
    /// Uniform over 256 byte tokens.
    #[default]
    Uniform,
    /// Adaptive order-0 counts, Laplace smoothing.
    Order0,
    /// Adaptive order-2 counts, KT smoothing.
    Ngram,
    /// 4 special tokens ahead of the bytes (vocabulary 260), adaptive
    /// order-1 Laplace counts over the whole vocabulary.
    Special,
    /// Order-0 counts over 256 ids, but no byte tokens are advertised.
    NoBytes,
}

impl MockMode {
    pub const ALL: [MockMode; 5] = [
        MockMode::Uniform,
        MockMode::Order0,
        MockMode::Ngram,
        MockMode::Special,
        MockMode::NoBytes,
    ];

    fn vocab_size(self) -> usize {
        match self {
            MockMode::Special => 260,
            _ => 256,
        }
    }

    fn byte_map(self) -> Option<ByteTokenMap> {
        match self {
            MockMode::Special => Some(ByteTokenMap::offset(4)),
            MockMode::NoBytes => None,
            _ => Some(ByteTokenMap::identity()),
        }
    }

    fn model(self) -> Box<dyn Model> {
        let v = self.vocab_size();
        match self {
            MockMode::Uniform => Box::new(UniformModel::new(v)),
            MockMode::Order0 | MockMode::NoBytes => Box::new(AdaptiveModel::laplace(v, 0).unwrap()),
            MockMode::Ngram => Box::new(AdaptiveModel::new(v, 2, Smoothing::KT).unwrap()),
            MockMode::Special => Box::new(AdaptiveModel::laplace(v, 1).unwrap()),
        }
    }

    pub fn session_info(self) -> SessionInfo {
        SessionInfo {
            vocab_size: self.vocab_size(),
            context_limit: MOCK_CONTEXT_LIMIT,
            byte_token_map: self.byte_map(),
            bos_policy: BosPolicy::None,
            model_name: format!("mock-{self}"),
        }
    }
}

impl fmt::Display for MockMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MockMode::Uniform => "uniform",
            MockMode::Order0 => "order0",
            MockMode::Ngram => "ngram",
            MockMode::Special => "special",
            MockMode::NoBytes => "nobytes",
        })
    }
}

impl FromStr for MockMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MockMode::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown mock mode `{s}`")))
    }
}

struct Reject(&'static str, String);

type Handled = std::result::Result<Response, Reject>;

/// Protocol state machine of the mock. Feed it request lines.
pub struct MockSidecar {
    mode: MockMode,
    info: SessionInfo,
    greeted: bool,
    last_seq: u64,
    done: bool,
}

impl MockSidecar {
    pub fn new(mode: MockMode) -> Self {
        MockSidecar {
            mode,
            info: mode.session_info(),
            greeted: false,
            last_seq: 0,
            done: false,
        }
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// The reply line for one request line, without the trailing newline.
    pub fn handle_line(&mut self, line: &str) -> String {
        let response = match serde_json::from_str::<Request>(line) {
            Ok(req) => {
                let seq = req.seq();
                self.handle(req).unwrap_or_else(|Reject(code, message)| Response::Error {
                    seq,
                    code: code.into(),
                    message,
                })
            }
            Err(e) => {
                let (code, message) = classify_parse_error(line, &e);
                Response::Error {
                    seq: 0,
                    code: code.into(),
                    message,
                }
            }
        };
        serde_json::to_string(&response).expect("responses serialize")
    }

    fn handle(&mut self, req: Request) -> Handled {
        let seq = req.seq();
        if seq <= self.last_seq {
            return Err(Reject(
                codes::BAD_SEQUENCE,
                format!("seq {seq} does not exceed previous {}", self.last_seq),
            ));
        }
        self.last_seq = seq;
        match req {
            Request::Hello { protocol, .. } => {
                if protocol != PROTOCOL_VERSION {
                    return Err(Reject(
                        codes::VERSION_MISMATCH,
                        format!("mock speaks v{PROTOCOL_VERSION}, client sent v{protocol}"),
                    ));
                }
                self.greeted = true;
                Ok(Response::HelloAck {
                    seq,
                    protocol: PROTOCOL_VERSION,
                    session: self.info.clone(),
                })
            }
            _ if !self.greeted => Err(Reject(codes::NO_SESSION, "send hello first".into())),
            Request::Tokenize { text, .. } => Ok(Response::Tokenize {
                seq,
                ids: text.bytes().map(|b| self.byte_token(b)).collect(),
            }),
            Request::Detokenize { ids, .. } => {
                let bytes = ids
                    .iter()
                    .map(|&t| self.token_byte(t))
                    .collect::<std::result::Result<Vec<u8>, Reject>>()?;
                let text = String::from_utf8(bytes)
                    .map_err(|e| Reject(codes::BAD_REQUEST, format!("ids are not UTF-8: {e}")))?;
                Ok(Response::Detokenize { seq, text })
            }
            Request::Eval(r) => self.eval(r).map(Response::EvalAck),
            Request::Bye { .. } => {
                self.done = true;
                Ok(Response::Bye { seq })
            }
        }
    }

    fn byte_token(&self, b: u8) -> u32 {
        match &self.info.byte_token_map {
            Some(map) => map.token(b),
            None => u32::from(b),
        }
    }

    fn token_byte(&self, t: u32) -> std::result::Result<u8, Reject> {
        let b = match &self.info.byte_token_map {
            Some(map) => map.byte(t),
            None => u8::try_from(t).ok(),
        };
        b.ok_or_else(|| Reject(codes::BAD_REQUEST, format!("id {t} is not a byte token")))
    }

    fn eval(&self, r: EvalRequest) -> std::result::Result<EvalResponse, Reject> {
        let vocab = self.info.vocab_size;
        if let Some(&t) = r.ids.iter().find(|&&t| t as usize >= vocab) {
            return Err(Reject(codes::OUT_OF_VOCAB, format!("id {t} outside vocabulary of {vocab}")));
        }
        let len = r.ids.len() + usize::from(r.next) + self.info.bos_policy.overhead();
        if len > self.info.context_limit {
            return Err(Reject(
                codes::CONTEXT_OVERFLOW,
                format!("{len} positions exceed the limit of {}", self.info.context_limit),
            ));
        }
        if r.score_from > r.ids.len() {
            return Err(Reject(
                codes::BAD_REQUEST,
                format!("score_from {} beyond {} ids", r.score_from, r.ids.len()),
            ));
        }
        let byte_map = match (r.byte_domain, &self.info.byte_token_map) {
            (false, _) => None,
            (true, Some(map)) => Some(map),
            (true, None) => {
                return Err(Reject(
                    codes::BYTE_DOMAIN_UNSUPPORTED,
                    format!("{} reserves no byte tokens", self.info.model_name),
                ))
            }
        };
        let mut model = self.mode.model();
        let internal = |e: Error| Reject(codes::INTERNAL, e.to_string());
        model.begin_chunk(Some(&r.ids)).map_err(internal)?;
        let mut out = EvalResponse {
            seq: r.seq,
            bos_policy: self.info.bos_policy,
            log2_probs: None,
            precision: None,
            rows: None,
        };
        match r.mode {
            EvalMode::Metrics => {
                if r.next {
                    return Err(Reject(codes::BAD_REQUEST, "`next` needs codec mode".into()));
                }
                let mut probs = Vec::with_capacity(r.ids.len() - r.score_from);
                for j in r.score_from..r.ids.len() {
                    let l = match byte_map {
                        None => model.log2_prob_of_next(&r.ids[..j], r.ids[j]).map_err(internal)?,
                        Some(map) => {
                            let b = self.token_byte(r.ids[j])?;
                            let full = model
                                .next_distribution(&ModelContext::new(&r.ids[..j]), Mode::Metrics)
                                .map_err(internal)?;
                            restrict_to_bytes(&full, map).map_err(internal)?.log2_probs.unwrap()
                                [b as usize]
                        }
                    };
                    probs.push(l);
                }
                out.log2_probs = Some(probs);
            }
            EvalMode::Codec => {
                let precision = r
                    .precision
                    .ok_or_else(|| Reject(codes::BAD_REQUEST, "codec mode needs `precision`".into()))?;
                let alphabet = if byte_map.is_some() { 256 } else { vocab };
                if !(1..=MAX_WIRE_PRECISION).contains(&precision) || (1usize << precision) < alphabet {
                    return Err(Reject(
                        codes::BAD_REQUEST,
                        format!("precision {precision} unusable for {alphabet} symbols"),
                    ));
                }
                if byte_map.is_some() {
                    for &t in &r.ids {
                        self.token_byte(t)?;
                    }
                }
                let identity = byte_map.is_none_or(|m| *m == ByteTokenMap::identity() && vocab == 256);
                let end = r.ids.len() + usize::from(r.next);
                let mut rows = Vec::with_capacity(end - r.score_from);
                for j in r.score_from..end {
                    let ctx = ModelContext::new(&r.ids[..j]);
                    let pmf = if identity {
                        model.quantized(&ctx, precision).map_err(internal)?
                    } else {
                        let full = model.next_distribution(&ctx, Mode::Metrics).map_err(internal)?;
                        let probs = restrict_to_bytes(&full, byte_map.unwrap())
                            .map_err(internal)?
                            .probs()
                            .unwrap();
                        quantize_pmf(&probs, precision).map_err(internal)?
                    };
                    rows.push(encode_row(&pmf).map_err(internal)?);
                }
                out.precision = Some(precision);
                out.rows = Some(rows);
            }
        }
        Ok(out)
    }
}

fn classify_parse_error(line: &str, e: &serde_json::Error) -> (&'static str, String) {
    let ty = serde_json::from_str::<serde_json::Value>(line)
        .ok()
        .and_then(|v| v.get("type").and_then(|t| t.as_str()).map(str::to_owned));
    match ty {
        Some(t) if !["hello", "tokenize", "detokenize", "eval", "bye"].contains(&t.as_str()) => {
            (codes::BAD_REQUEST, format!("unknown message type `{t}`"))
        }
        _ => (codes::BAD_REQUEST, format!("malformed request: {e}")),
    }
}

/// Serves one session: reads request lines until `bye` or end of input.
pub fn serve(mode: MockMode, reader: impl BufRead, mut writer: impl Write) -> std::io::Result<()> {
    let mut mock = MockSidecar::new(mode);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = mock.handle_line(&line);
        writer.write_all(reply.as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        if mock.is_done() {
            break;
        }
    }
    Ok(())
}
