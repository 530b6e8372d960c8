use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::thread::JoinHandle;

use super::mock::{self, MockMode};
use super::protocol::{
    decode_row, EvalMode, EvalRequest, EvalResponse, Request, Response, SessionInfo,
    MAX_WIRE_PRECISION, PROTOCOL_VERSION,
};
use crate::codec::QuantizedPmf;
use crate::error::{Error, Result};

/// Where a sidecar lives.
///
/// * `stdio:<program> [args...]` spawns a subprocess and talks over its pipes.
/// * `tcp:<host>:<port>` connects to a listening socket.
/// * `mock[:<mode>]` runs the built-in mock on a thread.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Stdio { program: String, args: Vec<String> },
    Tcp(String),
    Mock(MockMode),
}

impl FromStr for Endpoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("bad endpoint `{s}`"));
        match s.split_once(':') {
            None if s == "mock" => Ok(Endpoint::Mock(MockMode::default())),
            Some(("mock", mode)) => Ok(Endpoint::Mock(mode.parse()?)),
            Some(("tcp", addr)) if addr.contains(':') => Ok(Endpoint::Tcp(addr.to_owned())),
            Some(("stdio", cmd)) => {
                let mut words = cmd.split_whitespace().map(str::to_owned);
                let program = words.next().ok_or_else(bad)?;
                Ok(Endpoint::Stdio {
                    program,
                    args: words.collect(),
                })
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Stdio { program, args } => {
                write!(f, "stdio:{program}")?;
                for a in args {
                    write!(f, " {a}")?;
                }
                Ok(())
            }
            Endpoint::Tcp(addr) => write!(f, "tcp:{addr}"),
            Endpoint::Mock(mode) => write!(f, "mock:{mode}"),
        }
    }
}

/// Parameters of one evaluation call; the session fills in `seq`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalParams<'a> {
    pub ids: &'a [u32],
    pub mode: EvalMode,
    pub precision: Option<u32>,
    pub score_from: usize,
    pub next: bool,
    pub byte_domain: bool,
}

impl<'a> EvalParams<'a> {
    pub fn metrics(ids: &'a [u32], score_from: usize) -> Self {
        EvalParams {
            ids,
            mode: EvalMode::Metrics,
            precision: None,
            score_from,
            next: false,
            byte_domain: false,
        }
    }

    pub fn codec(ids: &'a [u32], precision: u32, score_from: usize, next: bool) -> Self {
        EvalParams {
            ids,
            mode: EvalMode::Codec,
            precision: Some(precision),
            score_from,
            next,
            byte_domain: false,
        }
    }

    pub fn bytes(mut self) -> Self {
        self.byte_domain = true;
        self
    }
}

/// A validated evaluation reply.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalResult {
    Metrics(Vec<f64>),
    Codec(Vec<QuantizedPmf>),
}

/// One ordered request/response stream with a sidecar.
pub struct Session {
    reader: Box<dyn BufRead + Send>,
    writer: Option<Box<dyn Write + Send>>,
    seq: u64,
    info: SessionInfo,
    child: Option<Child>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
    closed: bool,
}

impl Session {
    pub fn open(endpoint: &Endpoint) -> Result<Session> {
        match endpoint {
            Endpoint::Stdio { program, args } => {
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| Error::io(format!("spawning sidecar `{program}`"), e))?;
                let stdin = child.stdin.take().unwrap();
                let stdout = child.stdout.take().unwrap();
                let mut s = Session::handshake(Box::new(BufReader::new(stdout)), Box::new(stdin))?;
                s.child = Some(child);
                Ok(s)
            }
            Endpoint::Tcp(addr) => {
                let stream = TcpStream::connect(addr)
                    .map_err(|e| Error::io(format!("connecting to {addr}"), e))?;
                let read = stream
                    .try_clone()
                    .map_err(|e| Error::io("cloning socket", e))?;
                Session::handshake(Box::new(BufReader::new(read)), Box::new(stream))
            }
            &Endpoint::Mock(mode) => {
                let (req_rx, req_tx) = std::io::pipe().map_err(|e| Error::io("creating pipe", e))?;
                let (resp_rx, resp_tx) = std::io::pipe().map_err(|e| Error::io("creating pipe", e))?;
                let thread = std::thread::spawn(move || mock::serve(mode, BufReader::new(req_rx), resp_tx));
                let mut s = Session::handshake(Box::new(BufReader::new(resp_rx)), Box::new(req_tx))?;
                s.thread = Some(thread);
                Ok(s)
            }
        }
    }

    /// Runs the `hello` exchange over an already connected stream pair.
    pub fn handshake(reader: Box<dyn BufRead + Send>, writer: Box<dyn Write + Send>) -> Result<Session> {
        let mut s = Session {
            reader,
            writer: Some(writer),
            seq: 0,
            info: SessionInfo {
                vocab_size: 0,
                context_limit: 0,
                byte_token_map: None,
                bos_policy: Default::default(),
                model_name: String::new(),
            },
            child: None,
            thread: None,
            closed: false,
        };
        let seq = s.next_seq();
        let hello = Request::Hello {
            seq,
            protocol: PROTOCOL_VERSION,
            client: format!("modelzip/{}", env!("CARGO_PKG_VERSION")),
        };
        let line = s.send_raw(&serde_json::to_string(&hello)?)?;
        let value: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| Error::Protocol(format!("hello_ack is not JSON: {e}")))?;
        match value.get("type").and_then(|t| t.as_str()) {
            Some("hello_ack") => {}
            Some("error") => {
                let field = |k: &str| value.get(k).and_then(|v| v.as_str()).unwrap_or("").to_owned();
                return Err(Error::Remote {
                    code: field("code"),
                    message: field("message"),
                });
            }
            other => {
                return Err(Error::Protocol(format!(
                    "expected hello_ack, got {}",
                    other.unwrap_or("a message without `type`")
                )))
            }
        }
        let protocol: u32 = hello_field(&value, &["protocol"])?;
        if protocol != PROTOCOL_VERSION {
            return Err(Error::VersionMismatch {
                ours: PROTOCOL_VERSION,
                theirs: protocol,
            });
        }
        let reply_seq: u64 = hello_field(&value, &["seq"])?;
        if reply_seq != seq {
            return Err(Error::Protocol(format!(
                "reply seq {reply_seq} does not match request seq {seq}"
            )));
        }
        s.info = SessionInfo {
            vocab_size: hello_field(&value, &["session", "vocab_size"])?,
            context_limit: hello_field(&value, &["session", "context_limit"])?,
            byte_token_map: hello_field(&value, &["session", "byte_token_map"])?,
            bos_policy: hello_field(&value, &["session", "bos_policy"])?,
            model_name: hello_field(&value, &["session", "model_name"])?,
        };
        s.info.validate()?;
        Ok(s)
    }

    pub fn info(&self) -> &SessionInfo {
        &self.info
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    fn writer(&mut self) -> Result<&mut Box<dyn Write + Send>> {
        self.writer
            .as_mut()
            .ok_or_else(|| Error::Protocol("session is closed".into()))
    }

    /// Sends one line and returns the reply line verbatim.
    pub fn send_raw(&mut self, line: &str) -> Result<String> {
        let w = self.writer()?;
        w.write_all(line.as_bytes())
            .and_then(|_| w.write_all(b"\n"))
            .and_then(|_| w.flush())
            .map_err(|e| Error::io("writing to sidecar", e))?;
        let mut reply = String::new();
        let n = self
            .reader
            .read_line(&mut reply)
            .map_err(|e| Error::io("reading from sidecar", e))?;
        if n == 0 {
            return Err(Error::Protocol("sidecar closed the stream".into()));
        }
        Ok(reply.trim_end_matches(['\r', '\n']).to_owned())
    }

    /// Reserves a sequence number for a hand-built request.
    pub fn reserve_seq(&mut self) -> u64 {
        self.next_seq()
    }

    fn call(&mut self, req: &Request) -> Result<Response> {
        let line = serde_json::to_string(req)?;
        let reply = self.send_raw(&line)?;
        let resp: Response = serde_json::from_str(&reply)
            .map_err(|e| Error::Protocol(format!("bad reply to {}: {e}", request_name(req))))?;
        if resp.seq() != req.seq() {
            return Err(Error::Protocol(format!(
                "reply seq {} does not match request seq {}",
                resp.seq(),
                req.seq()
            )));
        }
        match resp {
            Response::Error { code, message, .. } => Err(Error::Remote { code, message }),
            r => Ok(r),
        }
    }

    pub fn tokenize(&mut self, text: &str) -> Result<Vec<u32>> {
        let seq = self.next_seq();
        match self.call(&Request::Tokenize {
            seq,
            text: text.to_owned(),
        })? {
            Response::Tokenize { ids, .. } => {
                if let Some(&t) = ids.iter().find(|&&t| t as usize >= self.info.vocab_size) {
                    return Err(Error::Protocol(format!("tokenizer produced id {t} outside vocabulary")));
                }
                Ok(ids)
            }
            other => Err(unexpected("tokenize", &other)),
        }
    }

    pub fn detokenize(&mut self, ids: &[u32]) -> Result<String> {
        let seq = self.next_seq();
        match self.call(&Request::Detokenize {
            seq,
            ids: ids.to_vec(),
        })? {
            Response::Detokenize { text, .. } => Ok(text),
            other => Err(unexpected("detokenize", &other)),
        }
    }

    /// Builds the wire request for `params` without sending it.
    pub fn eval_request(&mut self, p: &EvalParams<'_>) -> Result<EvalRequest> {
        let positions = p.ids.len() + usize::from(p.next) + self.info.bos_policy.overhead();
        if positions > self.info.context_limit {
            return Err(Error::ContextOverflow {
                len: positions,
                limit: self.info.context_limit,
            });
        }
        if p.byte_domain && self.info.byte_token_map.is_none() {
            return Err(Error::ByteDomainUnsupported {
                model: self.info.model_name.clone(),
            });
        }
        if p.score_from > p.ids.len() {
            return Err(Error::InvalidConfig(format!(
                "score_from {} beyond {} ids",
                p.score_from,
                p.ids.len()
            )));
        }
        if let Some(f) = p.precision {
            if f > MAX_WIRE_PRECISION {
                return Err(Error::InvalidConfig(format!(
                    "precision {f} exceeds the wire limit of {MAX_WIRE_PRECISION}"
                )));
            }
        }
        Ok(EvalRequest {
            seq: self.next_seq(),
            ids: p.ids.to_vec(),
            mode: p.mode,
            precision: p.precision,
            score_from: p.score_from,
            next: p.next,
            byte_domain: p.byte_domain,
        })
    }

    pub fn eval(&mut self, p: &EvalParams<'_>) -> Result<EvalResult> {
        let req = self.eval_request(p)?;
        match self.call(&Request::Eval(req.clone()))? {
            Response::EvalAck(resp) => self.check_eval(&req, resp),
            other => Err(unexpected("eval_ack", &other)),
        }
    }

    fn check_eval(&self, req: &EvalRequest, resp: EvalResponse) -> Result<EvalResult> {
        let want = req.expected_positions();
        if resp.bos_policy != self.info.bos_policy {
            return Err(Error::Protocol(format!(
                "eval_ack reports bos_policy {}, session declared {}",
                resp.bos_policy, self.info.bos_policy
            )));
        }
        match req.mode {
            EvalMode::Metrics => {
                let l = resp
                    .log2_probs
                    .ok_or_else(|| Error::Protocol("eval_ack: field `log2_probs` missing".into()))?;
                if l.len() != want {
                    return Err(Error::Protocol(format!(
                        "eval_ack: {} log-probabilities for {want} positions",
                        l.len()
                    )));
                }
                if let Some(i) = l.iter().position(|v| !v.is_finite() || *v > 0.0) {
                    return Err(Error::NonFinite {
                        position: req.score_from + i,
                    });
                }
                Ok(EvalResult::Metrics(l))
            }
            EvalMode::Codec => {
                let precision = req.precision.unwrap_or(0);
                if resp.precision != Some(precision) {
                    return Err(Error::Protocol(format!(
                        "eval_ack: precision {:?} does not match requested {precision}",
                        resp.precision
                    )));
                }
                let rows = resp
                    .rows
                    .ok_or_else(|| Error::Protocol("eval_ack: field `rows` missing".into()))?;
                if rows.len() != want {
                    return Err(Error::Protocol(format!(
                        "eval_ack: {} rows for {want} positions",
                        rows.len()
                    )));
                }
                let alphabet = if req.byte_domain { 256 } else { self.info.vocab_size };
                rows.iter()
                    .map(|r| decode_row(r, alphabet, precision))
                    .collect::<Result<_>>()
                    .map(EvalResult::Codec)
            }
        }
    }

    /// Sends `bye` and waits for the sidecar to finish.
    pub fn close(mut self) -> Result<()> {
        self.shutdown()
    }

    fn shutdown(&mut self) -> Result<()> {
        if self.closed {
            return Ok(());
        }
        self.closed = true;
        let seq = self.next_seq();
        let result = match self.call(&Request::Bye { seq }) {
            Ok(Response::Bye { .. }) => Ok(()),
            Ok(other) => Err(unexpected("bye", &other)),
            Err(e) => Err(e),
        };
        self.writer = None;
        if let Some(mut child) = self.child.take() {
            let _ = child.wait();
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
        result
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}

/// Reads one field of a `hello_ack`, naming it in any error.
fn hello_field<T: serde::de::DeserializeOwned>(value: &serde_json::Value, path: &[&str]) -> Result<T> {
    let name = path.join(".");
    let v = path
        .iter()
        .try_fold(value, |v, k| v.get(k))
        .ok_or_else(|| Error::Protocol(format!("hello_ack: field `{name}` is missing")))?;
    serde_json::from_value(v.clone()).map_err(|e| Error::Protocol(format!("hello_ack: field `{name}`: {e}")))
}

fn request_name(req: &Request) -> &'static str {
    match req {
        Request::Hello { .. } => "hello",
        Request::Tokenize { .. } => "tokenize",
        Request::Detokenize { .. } => "detokenize",
        Request::Eval(_) => "eval",
        Request::Bye { .. } => "bye",
    }
}

fn unexpected(want: &str, got: &Response) -> Error {
    Error::Protocol(format!("expected {want}, got {}", got.type_name()))
}
