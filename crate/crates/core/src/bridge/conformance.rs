//! Checks a sidecar against protocol v1. Every check runs even when an
//! earlier one fails, so one report lists every problem.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::Value;

use super::client::{Endpoint, EvalParams, EvalResult, Session};
use super::protocol::{codes, EvalMode, EvalRequest, Request};
use super::remote::BridgeModel;
use crate::codec::{decode_chunk, encode_chunk, CoderConfig};
use crate::error::{Error, Result};
use crate::harness::Domain;

const PRECISION: u32 = 16;
const CHUNK_LEN: usize = 96;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConformanceReport {
    pub endpoint: String,
    pub model_name: String,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

struct Suite {
    checks: Vec<CheckResult>,
}

impl Suite {
    fn check(&mut self, name: &'static str, f: impl FnOnce() -> Result<String>) {
        let (passed, detail) = match f() {
            Ok(d) => (true, d),
            Err(e) => (false, e.to_string()),
        };
        self.checks.push(CheckResult { name, passed, detail });
    }
}

fn fail(msg: impl Into<String>) -> Error {
    Error::Protocol(msg.into())
}

fn random_text(rng: &mut ChaCha8Rng, max_chars: usize) -> String {
    const POOL: &[char] = &[
        'a', 'b', 'e', 't', 'z', ' ', ' ', '.', ',', '\n', '0', '7', 'Q', 'é', 'ß', 'ж', '中', '文', '😀', '\u{7f}',
    ];
    let n = rng.random_range(0..=max_chars);
    (0..n).map(|_| POOL[rng.random_range(0..POOL.len())]).collect()
}

fn raw(session: &mut Session, req: &Request) -> Result<Value> {
    let line = session.send_raw(&serde_json::to_string(req)?)?;
    serde_json::from_str(&line).map_err(|e| fail(format!("reply is not JSON: {e}")))
}

fn error_code(v: &Value) -> Option<&str> {
    (v.get("type")?.as_str()? == "error").then(|| v.get("code")?.as_str())?
}

fn without_seq(mut v: Value) -> Value {
    if let Some(o) = v.as_object_mut() {
        o.remove("seq");
    }
    v
}

fn metrics(s: &mut Session, p: &EvalParams<'_>) -> Result<Vec<f64>> {
    match s.eval(p)? {
        EvalResult::Metrics(l) => Ok(l),
        EvalResult::Codec(_) => Err(fail("metrics request answered with rows")),
    }
}

fn rows(s: &mut Session, p: &EvalParams<'_>) -> Result<Vec<crate::codec::QuantizedPmf>> {
    match s.eval(p)? {
        EvalResult::Codec(r) => Ok(r),
        EvalResult::Metrics(_) => Err(fail("codec request answered with log-probabilities")),
    }
}

/// Runs the full suite against a fresh session on `endpoint`.
pub fn run_conformance(endpoint: &Endpoint, seed: u64) -> Result<ConformanceReport> {
    let mut suite = Suite { checks: Vec::new() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut session = match Session::open(endpoint) {
        Ok(s) => s,
        Err(e) => {
            suite.checks.push(CheckResult {
                name: "handshake",
                passed: false,
                detail: e.to_string(),
            });
            return Ok(ConformanceReport {
                endpoint: endpoint.to_string(),
                model_name: String::new(),
                seed,
                checks: suite.checks,
            });
        }
    };
    let info = session.info().clone();
    suite.check("handshake", || {
        Ok(format!(
            "{}: vocab {}, context {}, bos {}, byte map {}",
            info.model_name,
            info.vocab_size,
            info.context_limit,
            info.bos_policy,
            if info.byte_token_map.is_some() { "present" } else { "absent" }
        ))
    });

    suite.check("tokenize_empty", || {
        let ids = session.tokenize("")?;
        if ids.is_empty() {
            Ok("\"\" -> []".into())
        } else {
            Err(fail(format!("\"\" tokenized to {ids:?}")))
        }
    });

    suite.check("tokenize_round_trip", || {
        let mut skipped = 0;
        for _ in 0..100 {
            let text = random_text(&mut rng, 40);
            let ids = session.tokenize(&text)?;
            if session.detokenize(&ids)? != text {
                skipped += 1;
            }
        }
        Ok(format!("{} of 100 strings round-trip, {skipped} would be skipped", 100 - skipped))
    });

    // A valid chunk in the sidecar's own vocabulary.
    let mut chunk = Vec::new();
    while chunk.len() < CHUNK_LEN {
        let text = random_text(&mut rng, 64);
        match session.tokenize(&text) {
            Ok(ids) => chunk.extend(ids),
            Err(_) => break,
        }
    }
    chunk.truncate(CHUNK_LEN.min(info.context_limit.saturating_sub(1 + info.bos_policy.overhead())));
    if chunk.is_empty() {
        chunk.push(0);
    }

    let mut full_metrics = Vec::new();
    suite.check("metrics_shape", || {
        full_metrics = metrics(&mut session, &EvalParams::metrics(&chunk, 0))?;
        Ok(format!("{} finite log-probabilities <= 0", full_metrics.len()))
    });

    suite.check("metrics_score_from", || {
        let k = chunk.len() / 3;
        let tail = metrics(&mut session, &EvalParams::metrics(&chunk, k))?;
        if tail[..] == full_metrics[k.min(full_metrics.len())..] {
            Ok(format!("score_from {k} returns the matching suffix"))
        } else {
            Err(fail("suffix differs from the full request"))
        }
    });

    let mut full_rows = Vec::new();
    suite.check("codec_rows", || {
        full_rows = rows(&mut session, &EvalParams::codec(&chunk, PRECISION, 0, false))?;
        let with_next = rows(&mut session, &EvalParams::codec(&chunk, PRECISION, 0, true))?;
        if with_next[..chunk.len()] != full_rows[..] {
            return Err(fail("rows change when `next` is set"));
        }
        let tail = rows(&mut session, &EvalParams::codec(&chunk, PRECISION, chunk.len(), true))?;
        if tail[0] != with_next[chunk.len()] {
            return Err(fail("prefix-only request disagrees with the full request"));
        }
        Ok(format!("{} valid rows at F={PRECISION}, `next` consistent", full_rows.len()))
    });

    suite.check("metrics_codec_consistency", || {
        let mut worst: f64 = 0.0;
        for (j, (&l, row)) in full_metrics.iter().zip(&full_rows).enumerate() {
            let p = l.exp2();
            let loss = -row.log2_prob(chunk[j] as usize) + l;
            if p >= (-f64::from(PRECISION - 2)).exp2() {
                let bound = 2.0 * (-f64::from(PRECISION)).exp2() / p;
                if loss > bound + 1e-12 {
                    return Err(fail(format!(
                        "position {j}: quantization costs {loss:.3e} bits, bound {bound:.3e}"
                    )));
                }
            }
            worst = worst.max(loss);
        }
        Ok(format!("largest quantization loss {worst:.3e} bits"))
    });

    suite.check("determinism", || {
        for mode in [EvalMode::Metrics, EvalMode::Codec] {
            let mut replies = Vec::new();
            for _ in 0..2 {
                let mut p = EvalParams::metrics(&chunk, 0);
                if mode == EvalMode::Codec {
                    p = EvalParams::codec(&chunk, PRECISION, 0, false);
                }
                let req = session.eval_request(&p)?;
                replies.push(without_seq(raw(&mut session, &Request::Eval(req))?));
            }
            if replies[0] != replies[1] {
                return Err(fail(format!("{mode:?} replies differ between identical requests")));
            }
        }
        Ok("identical requests, identical replies".into())
    });

    suite.check("codec_round_trip", || {
        let cfg = CoderConfig::with_precision(PRECISION)?;
        let mut done = Vec::new();
        let mut domains = vec![Domain::TextTokens];
        if info.byte_token_map.is_some() {
            domains.push(Domain::Bytes);
        }
        for domain in domains {
            let mut model = BridgeModel::open(endpoint, domain)?;
            let symbols: Vec<u32> = match domain {
                Domain::TextTokens => chunk.clone(),
                Domain::Bytes => (0..64).map(|_| rng.random_range(0..256)).collect(),
            };
            let frame = encode_chunk(&symbols, &mut model, &cfg)?;
            let back = decode_chunk(&frame, &mut model, &cfg)?;
            if back != symbols {
                return Err(fail(format!("{domain:?} chunk did not decode to itself")));
            }
            done.push(format!("{domain:?} {} symbols in {} bits", symbols.len(), frame.bit_length));
        }
        Ok(done.join("; "))
    });

    suite.check("byte_domain", || match &info.byte_token_map {
        Some(map) => {
            let bytes: Vec<u8> = (0..48).map(|_| rng.random()).collect();
            let ids: Vec<u32> = bytes.iter().map(|&b| map.token(b)).collect();
            let l = metrics(&mut session, &EvalParams::metrics(&ids, 0).bytes())?;
            let r = rows(&mut session, &EvalParams::codec(&ids, PRECISION, 0, false).bytes())?;
            if r.iter().any(|row| row.alphabet_size() != 256) {
                return Err(fail("byte-domain rows are not over 256 symbols"));
            }
            Ok(format!("{} byte positions scored and quantized", l.len()))
        }
        None => {
            let req = EvalRequest {
                seq: session.reserve_seq(),
                ids: chunk.clone(),
                mode: EvalMode::Metrics,
                precision: None,
                score_from: 0,
                next: false,
                byte_domain: true,
            };
            let v = raw(&mut session, &Request::Eval(req))?;
            match error_code(&v) {
                Some(codes::BYTE_DOMAIN_UNSUPPORTED) => Ok("byte-domain request rejected".into()),
                _ => Err(fail(format!("expected byte_domain_unsupported, got {v}"))),
            }
        }
    });

    suite.check("context_overflow", || {
        let n = info.context_limit + 1;
        let req = EvalRequest {
            seq: session.reserve_seq(),
            ids: vec![chunk[0]; n],
            mode: EvalMode::Metrics,
            precision: None,
            score_from: 0,
            next: false,
            byte_domain: false,
        };
        let v = raw(&mut session, &Request::Eval(req))?;
        match error_code(&v) {
            Some(codes::CONTEXT_OVERFLOW) => Ok(format!("{n} ids rejected")),
            _ => Err(fail(format!("expected context_overflow, got {v}"))),
        }
    });

    suite.check("malformed_request", || {
        let v: Value = serde_json::from_str(&session.send_raw("{\"type\": \"eval\", \"seq\":")?)
            .map_err(|e| fail(format!("reply is not JSON: {e}")))?;
        if error_code(&v).is_none() {
            return Err(fail(format!("expected an error reply, got {v}")));
        }
        let seq = session.reserve_seq();
        let v: Value = serde_json::from_str(&session.send_raw(&format!("{{\"type\":\"frobnicate\",\"seq\":{seq}}}"))?)
            .map_err(|e| fail(format!("reply is not JSON: {e}")))?;
        if error_code(&v).is_none() {
            return Err(fail(format!("unknown type accepted: {v}")));
        }
        session.tokenize("still alive")?;
        Ok("errors reported, session usable afterwards".into())
    });

    suite.check("sequence_ids", || {
        let stale = Request::Tokenize {
            seq: 1,
            text: "x".into(),
        };
        let v = raw(&mut session, &stale)?;
        match error_code(&v) {
            Some(codes::BAD_SEQUENCE) => Ok("replies echo seq; stale seq rejected".into()),
            _ => Err(fail(format!("stale seq accepted: {v}"))),
        }
    });

    suite.check("bye", || {
        session.close()?;
        Ok("clean shutdown".into())
    });

    Ok(ConformanceReport {
        endpoint: endpoint.to_string(),
        model_name: info.model_name,
        seed,
        checks: suite.checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::MockMode;

    #[test]
    fn every_mock_mode_conforms() {
        for mode in MockMode::ALL {
            let report = run_conformance(&Endpoint::Mock(mode), 7).unwrap();
            for c in &report.checks {
                assert!(c.passed, "{mode}: {} failed: {}", c.name, c.detail);
            }
            assert_eq!(report.checks.len(), 14);
        }
    }
}
