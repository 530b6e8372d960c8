//! Acceptance suite: one line per criterion, `PASS` or `FAIL`, then a
//! non-zero exit if anything failed.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use modelzip::baseline::{deflate_len, deflate_rate, DeflateLength};
use modelzip::bridge::{run_conformance, BridgeModel, Endpoint, MockMode};
use modelzip::codec::archive::FORMAT_VERSION;
use modelzip::codec::{decode_chunk, decode_stream, encode_chunk_with_stats, encode_stream, Archive, CoderConfig};
use modelzip::harness::{
    evaluate_document, evaluate_documents, implied_count, implied_total, month_reports, read_rows, DocumentReport,
    Domain, EvalConfig, MetricsReport, Outcome, ReportRow,
};
use modelzip::models::{
    compressor_predictor, AdaptiveModel, CompressorPredictor, FixedModel, Model, NgramTables, SharedFactory,
    Smoothing, StaticNgramModel, UniformModel,
};
use modelzip::selftest::oracle_case;
use modelzip::temporal::{format_gap, format_percent, summarize, MonthlySeries};
use modelzip::{Document, YearMonth};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn enwiki() -> Vec<u8> {
    std::fs::read(fixture("enwiki_sample.txt")).expect("enwiki fixture")
}

fn scored(o: Outcome) -> Result<DocumentReport, String> {
    match o {
        Outcome::Scored(r) => Ok(r),
        Outcome::Skipped { doc_id, reason } => Err(format!("{doc_id} skipped: {reason}")),
    }
}

/// Twenty documents cut from the text fixture at paragraph boundaries.
fn fixture_documents(text: &[u8], count: usize, target: usize) -> Vec<Document> {
    let text = std::str::from_utf8(text).expect("fixture is UTF-8");
    let mut docs = Vec::new();
    let mut rest = text;
    while docs.len() < count && !rest.is_empty() {
        let mut cut = target.min(rest.len());
        while !rest.is_char_boundary(cut) {
            cut += 1;
        }
        if let Some(nl) = rest[cut..].find('\n') {
            cut += nl + 1;
        } else {
            cut = rest.len();
        }
        let month = YearMonth::new(2017 + (docs.len() / 12) as u16, (docs.len() % 12 + 1) as u8).unwrap();
        docs.push(Document::text(format!("doc{:02}", docs.len()), &rest[..cut]).with_month(month));
        rest = &rest[cut..];
    }
    docs
}

struct Candidate {
    name: String,
    factory: SharedFactory,
    alphabet: usize,
    max_len: usize,
}

fn candidates(ngram: Arc<NgramTables>) -> Vec<Candidate> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let skewed: Vec<f64> = {
        let w: Vec<f64> = (0..256).map(|i| if i % 17 == 0 { 1e-7 } else { rng.random_range(0.0..1.0f64).powi(4) + 1e-9 }).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    };
    let local = |name: &str, max_len: usize, f: SharedFactory| Candidate {
        name: name.into(),
        factory: f,
        alphabet: 256,
        max_len,
    };
    let mut out = vec![
        local("uniform", 100_000, Arc::new(|| Ok(Box::new(UniformModel::new(256)) as Box<dyn Model>))),
        local("adaptive:o0", 100_000, Arc::new(|| Ok(Box::new(AdaptiveModel::laplace(256, 0)?) as Box<dyn Model>))),
        local("adaptive:o1:kt", 100_000, Arc::new(|| Ok(Box::new(AdaptiveModel::kt(256, 1)?) as Box<dyn Model>))),
        local("adaptive:o2", 100_000, Arc::new(|| Ok(Box::new(AdaptiveModel::laplace(256, 2)?) as Box<dyn Model>))),
        local(
            "adaptive:o3:d1/8",
            100_000,
            Arc::new(|| Ok(Box::new(AdaptiveModel::new(256, 3, Smoothing::new(1, 8)?)?) as Box<dyn Model>)),
        ),
        local("fixed", 100_000, Arc::new(move || Ok(Box::new(FixedModel::new(skewed.clone())?) as Box<dyn Model>))),
        local(
            "ngram:o2",
            100_000,
            Arc::new(move || Ok(Box::new(StaticNgramModel::new(ngram.clone())) as Box<dyn Model>)),
        ),
        local(
            "deflate-predictor",
            16,
            Arc::new(|| Ok(Box::new(CompressorPredictor::new(DeflateLength::default(), "deflate-predictor")) as Box<dyn Model>)),
        ),
    ];
    for (mode, domain) in [
        (MockMode::Order0, Domain::Bytes),
        (MockMode::Ngram, Domain::Bytes),
        (MockMode::Special, Domain::Bytes),
        (MockMode::Special, Domain::TextTokens),
        (MockMode::NoBytes, Domain::TextTokens),
    ] {
        out.push(Candidate {
            name: format!("bridge:mock:{mode}:{domain}"),
            factory: Arc::new(move || Ok(Box::new(BridgeModel::open(&Endpoint::Mock(mode), domain)?) as Box<dyn Model>)),
            alphabet: if mode == MockMode::Special && domain == Domain::TextTokens { 260 } else { 256 },
            max_len: 1024,
        });
    }
    out
}

fn random_sequence(rng: &mut ChaCha8Rng, len: usize, alphabet: usize, text: &[u8]) -> Vec<u32> {
    match rng.random_range(0..3) {
        0 => (0..len).map(|_| rng.random_range(0..alphabet as u32)).collect(),
        1 => {
            let mut s = Vec::with_capacity(len);
            let mut cur = rng.random_range(0..alphabet as u32);
            while s.len() < len {
                if rng.random_bool(0.05) {
                    cur = rng.random_range(0..alphabet as u32);
                }
                s.push(cur);
            }
            s
        }
        _ => {
            let start = rng.random_range(0..text.len() - len.min(text.len()) + 1);
            let mut s: Vec<u32> = text[start..].iter().take(len).map(|&b| u32::from(b)).collect();
            while s.len() < len {
                s.push(u32::from(b' '));
            }
            s
        }
    }
}

struct RoundTripStats {
    sequences: usize,
    symbols: usize,
    chunks: usize,
    mismatches: Vec<String>,
    bound_violations: Vec<String>,
    max_excess: f64,
}

fn run_round_trips(count: usize) -> Result<RoundTripStats, String> {
    let text = enwiki();
    let ngram = Arc::new(NgramTables::train_bytes(&text[..text.len() / 2], 2, Smoothing::KT).map_err(|e| e.to_string())?);
    let models = candidates(ngram);
    let cfg = CoderConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut stats = RoundTripStats {
        sequences: 0,
        symbols: 0,
        chunks: 0,
        mismatches: Vec::new(),
        bound_violations: Vec::new(),
        max_excess: f64::MIN,
    };
    for i in 0..count {
        let cand = &models[i % models.len()];
        let chunk_size = if i % 2 == 0 { 16 } else { 2048 };
        let len = (10f64.powf(rng.random_range(0.0..5.0)) as usize).clamp(1, cand.max_len);
        let symbols = random_sequence(&mut rng, len, cand.alphabet, &text);
        let tag = format!("#{i} {} len={len} C={chunk_size}", cand.name);

        let mut model = (cand.factory)().map_err(|e| format!("{tag}: {e}"))?;
        let mut chunks = Vec::new();
        for c in symbols.chunks(chunk_size) {
            let (frame, s) = encode_chunk_with_stats(c, model.as_mut(), &cfg).map_err(|e| format!("{tag}: {e}"))?;
            let bound = (s.quantized_bits - 1e-6).ceil() + 8.0;
            stats.max_excess = stats.max_excess.max(f64::from(frame.bit_length) - s.quantized_bits);
            if f64::from(frame.bit_length) > bound {
                stats.bound_violations.push(format!("{tag}: {} bits > {bound}", frame.bit_length));
            }
            chunks.push(frame);
        }
        let archive = Archive {
            version: FORMAT_VERSION,
            config: cfg,
            alphabet_size: model.alphabet_size() as u32,
            model_id: model.id(),
            chunks,
        };
        let bytes = archive.to_bytes().map_err(|e| format!("{tag}: {e}"))?;
        let parsed = Archive::from_bytes(&bytes).map_err(|e| format!("{tag}: {e}"))?;
        let mut fresh = (cand.factory)().map_err(|e| format!("{tag}: {e}"))?;
        match decode_stream(&parsed, fresh.as_mut()) {
            Ok(d) if d == symbols => {}
            Ok(_) => stats.mismatches.push(format!("{tag}: decoded sequence differs")),
            Err(e) => stats.mismatches.push(format!("{tag}: {e}")),
        }
        stats.sequences += 1;
        stats.symbols += len;
        stats.chunks += archive.chunks.len();
    }
    Ok(stats)
}

fn round_trip_and_bound() -> (Verdict, Verdict) {
    let t = Instant::now();
    let stats = match run_round_trips(1000) {
        Ok(s) => s,
        Err(e) => return (Err(e.clone()), Err(e)),
    };
    let secs = t.elapsed().as_secs_f64();
    let rt = if stats.mismatches.is_empty() && secs < 60.0 {
        Ok(format!(
            "{} sequences, {} symbols, 0 mismatches, {secs:.1} s",
            stats.sequences, stats.symbols
        ))
    } else {
        Err(format!(
            "{} mismatches, {secs:.1} s; first: {:?}",
            stats.mismatches.len(),
            stats.mismatches.first()
        ))
    };
    let bound = if stats.bound_violations.is_empty() {
        Ok(format!(
            "{} chunks, 0 violations, worst payload excess over -sum log2 q {:.3} bits",
            stats.chunks, stats.max_excess
        ))
    } else {
        Err(format!(
            "{} violations; first: {:?}",
            stats.bound_violations.len(),
            stats.bound_violations.first()
        ))
    };
    (rt, bound)
}

fn oracle_equivalence() -> Verdict {
    let cfg = CoderConfig::default();
    let mut worst = i64::MIN;
    for i in 0..100 {
        let c = oracle_case(99, i, 256, &cfg).map_err(|e| e.to_string())?;
        worst = worst.max(c.payload_bits as i64 - c.oracle_bound as i64);
        if !c.passed() {
            return Err(format!("case {i}: {c:?}"));
        }
    }
    Ok(format!("100 sequences, worst excess over ceil(-log2 P)+1 is {worst} bits"))
}

fn uniform_calibration() -> Verdict {
    let mut data = vec![0u8; 1 << 20];
    ChaCha8Rng::seed_from_u64(1).fill_bytes(&mut data);
    let mut cfg = EvalConfig::chunked(2048);
    cfg.physical = true;
    let r = scored(evaluate_document(&Document::bytes("random", data), &mut UniformModel::new(256), &cfg).map_err(|e| e.to_string())?)?;
    let m = r.metrics;
    if m.bpb == 8.0 && (1.0..=1.001).contains(&m.rate) {
        Ok(format!("bpb {:.3}, physical rate {:.6}", m.bpb, m.rate))
    } else {
        Err(format!("bpb {}, physical rate {}", m.bpb, m.rate))
    }
}

fn metric_identity() -> Verdict {
    let text = enwiki();
    let docs = fixture_documents(&text, 24, 20_000);
    let mut rows = Vec::new();
    let mut cfg = EvalConfig::chunked(2048);
    cfg.physical = true;
    for spec in ["uniform", "adaptive:o2", "bridge:mock:special"] {
        let factory = spec.parse::<modelzip::ModelSpec>().and_then(|s| s.factory(Domain::Bytes)).map_err(|e| e.to_string())?;
        let reports = evaluate_documents(&docs, &factory, &cfg, 1)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(scored)
            .collect::<Result<Vec<_>, _>>()?;
        for r in &reports {
            rows.push(ReportRow::new(spec, "enwiki", r.year_month, &cfg, &r.metrics, r.bos_policy).with_doc(&r.doc_id));
        }
        for (ym, m) in month_reports(&reports).map_err(|e| e.to_string())? {
            rows.push(ReportRow::new(spec, "enwiki", ym, &cfg, &m, Default::default()));
        }
    }
    let fixture_rows = read_rows(&fixture("llama2_7b_wikitext_monthly.csv")).map_err(|e| e.to_string())?;
    rows.extend(fixture_rows);
    let worst = rows.iter().map(|r| r.metrics().identity_error()).fold(0.0, f64::max);
    if worst <= 1e-9 {
        Ok(format!("{} rows, worst relative deviation {worst:.2e}", rows.len()))
    } else {
        Err(format!("worst relative deviation {worst:e}"))
    }
}

fn published_rates_consistency() -> Verdict {
    let published = [
        ("Qwen-7B", 12_382_000u64, 2.7511, 0.6215),
        ("Baichuan2-7B", 12_824_000, 2.7135, 0.6346),
        ("Chatglm3-6B", 13_531_000, 2.6951, 0.6652),
        ("Llama-2-7B", 14_324_000, 2.3086, 0.6032),
        ("Mistral-7B", 14_006_000, 2.3929, 0.6113),
    ];
    let mut bytes = Vec::new();
    for (name, tokens, bpt, bpb) in published {
        let total = implied_total(bpt, tokens as f64);
        let n_bytes = implied_count(total, bpb);
        let m = MetricsReport::new(total, tokens, n_bytes.round() as u64, n_bytes.round() as u64, None).map_err(|e| e.to_string())?;
        if (m.bpt - bpt).abs() > 1e-12 || (m.bpb - bpb).abs() > 1e-4 || m.identity_error() > 1e-9 {
            return Err(format!("{name}: recomputed bpt {} bpb {}", m.bpt, m.bpb));
        }
        bytes.push(n_bytes);
    }
    let lo = bytes.iter().copied().fold(f64::MAX, f64::min);
    let hi = bytes.iter().copied().fold(f64::MIN, f64::max);
    let spread = hi / lo - 1.0;
    if spread <= 0.002 {
        Ok(format!("n_bytes {:.2}M..{:.2}M, spread {:.3}%", lo / 1e6, hi / 1e6, spread * 100.0))
    } else {
        Err(format!("spread {:.3}%", spread * 100.0))
    }
}

fn sliding_equivalence() -> Verdict {
    let text = enwiki();
    let (train, test) = text.split_at(text.len() / 2);
    let docs = fixture_documents(test, 20, 12_000);
    if docs.len() != 20 {
        return Err(format!("only {} fixture documents", docs.len()));
    }
    let tables = Arc::new(NgramTables::train_bytes(train, 2, Smoothing::KT).map_err(|e| e.to_string())?);
    let mut bitwise = 0;
    let mut worse_docs = 0;
    let (mut chunked_total, mut sliding_total) = (0.0, 0.0);
    for doc in &docs {
        for model in [
            Box::new(AdaptiveModel::kt(256, 2).unwrap()) as Box<dyn Model>,
            Box::new(StaticNgramModel::new(tables.clone())),
        ] {
            let mut model = model;
            let a = scored(evaluate_document(doc, &mut model, &EvalConfig::chunked(2048)).map_err(|e| e.to_string())?)?;
            let b = scored(evaluate_document(doc, &mut model, &EvalConfig::sliding(2048, 2048)).map_err(|e| e.to_string())?)?;
            if a.metrics.total_bits.to_bits() != b.metrics.total_bits.to_bits() {
                return Err(format!("{} {}: S=C gives {} vs {}", doc.id, model.id(), b.metrics.total_bits, a.metrics.total_bits));
            }
            bitwise += 1;
        }
        let mut ngram = StaticNgramModel::new(tables.clone());
        let c = scored(evaluate_document(doc, &mut ngram, &EvalConfig::chunked(2048)).map_err(|e| e.to_string())?)?;
        let s = scored(evaluate_document(doc, &mut ngram, &EvalConfig::sliding(2048, 512)).map_err(|e| e.to_string())?)?;
        if s.metrics.total_bits > c.metrics.total_bits {
            worse_docs += 1;
        }
        chunked_total += c.metrics.total_bits;
        sliding_total += s.metrics.total_bits;
    }
    let summary = format!(
        "{bitwise} bit-identical S=C runs; order-2 n-gram corpus L sliding {sliding_total:.1} vs chunked {chunked_total:.1} ({worse_docs} of {} documents individually worse)",
        docs.len()
    );
    if sliding_total <= chunked_total {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn temporal_fixture() -> Verdict {
    let rows = read_rows(&fixture("llama2_7b_wikitext_monthly.csv")).map_err(|e| e.to_string())?;
    let series = MonthlySeries::from_rows(&rows).map_err(|e| e.to_string())?;
    let [s] = series.as_slice() else {
        return Err(format!("expected one series, got {}", series.len()));
    };
    let t = summarize(s, "2022-12".parse().unwrap()).map_err(|e| e.to_string())?;
    let shown = (
        format_percent(t.rate_avg),
        format_percent(t.rate_test),
        format_gap(t.gap),
        format_percent(t.rate_future_estimate),
    );
    let expected = ("7.349".to_string(), "7.539".to_string(), "+.219".to_string(), "7.758".to_string());
    let exact = (t.gap - 0.00219).abs() < 1e-15 && (t.rate_future_estimate - 0.07758).abs() < 1e-15;
    if shown == expected && exact && t.arrow() == "↑" && (t.train_months, t.test_months) == (72, 11) {
        Ok(format!("avg {} | 2023 {} ↑ {} | future {}", shown.0, shown.1, shown.2, shown.3))
    } else {
        Err(format!("got {shown:?}, gap {}, future {}", t.gap, t.rate_future_estimate))
    }
}

fn argmax(p: &[f64]) -> usize {
    (0..p.len()).fold(0, |best, i| if p[i] > p[best] { i } else { best })
}

fn compressor_as_predictor() -> Verdict {
    let full: Vec<u8> = b"ab".iter().copied().cycle().take(64).collect();
    let prefix = &full[..63];
    let out = compressor_predictor(prefix, &DeflateLength::default()).map_err(|e| e.to_string())?;
    let p = out.probs().ok_or("no distribution")?;
    // Independent oracle: the extension deflate codes shortest.
    let lens: Vec<usize> = (0..=255u8)
        .map(|b| {
            let mut v = prefix.to_vec();
            v.push(b);
            deflate_len(&v)
        })
        .collect();
    let shortest = *lens.iter().min().unwrap();
    let winners: Vec<usize> = (0..256).filter(|&b| lens[b] == shortest).collect();
    let got = argmax(&p);
    if winners != [usize::from(b'b')] || got != usize::from(b'b') {
        return Err(format!("argmax {got}, oracle winners {winners:?}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(0..200);
        let prefix: Vec<u8> = (0..n)
            .map(|_| if rng.random_bool(0.5) { rng.random() } else { b"the "[rng.random_range(0..4)] })
            .collect();
        let p = compressor_predictor(&prefix, &DeflateLength::default()).map_err(|e| e.to_string())?.probs().ok_or("no distribution")?;
        worst = worst.max((p.iter().sum::<f64>() - 1.0).abs());
    }
    if worst <= 1e-12 {
        Ok(format!("argmax after 63 bytes of \"abab…\" is 'b' (p={:.4}); worst |sum-1| {worst:.1e}", p[usize::from(b'b')]))
    } else {
        Err(format!("worst |sum-1| {worst:e}"))
    }
}

fn gzip_baseline() -> Verdict {
    let text = enwiki();
    if text.len() < 1 << 20 {
        return Err(format!("sample is only {} bytes", text.len()));
    }
    let rate = deflate_rate(&text).map_err(|e| e.to_string())?;
    let mut random = vec![0u8; 1 << 20];
    ChaCha8Rng::seed_from_u64(9).fill_bytes(&mut random);
    let rrate = deflate_rate(&random).map_err(|e| e.to_string())?;
    if (rate - 0.378).abs() <= 0.05 && (1.0..=1.01).contains(&rrate) {
        Ok(format!("enwiki sample ({} bytes) {rate:.4}, random {rrate:.5}", text.len()))
    } else {
        Err(format!("enwiki {rate}, random {rrate}"))
    }
}

fn protocol_conformance() -> Verdict {
    let mut checks = 0;
    for mode in MockMode::ALL {
        let r = run_conformance(&Endpoint::Mock(mode), 42).map_err(|e| e.to_string())?;
        if !r.passed() {
            let f: Vec<_> = r.failures().map(|c| format!("{}: {}", c.name, c.detail)).collect();
            return Err(format!("mock:{mode}: {f:?}"));
        }
        checks += r.checks.len();
    }
    let text = enwiki();
    let cfg = CoderConfig::default();
    let sample: Vec<u32> = text[..6000].iter().map(|&b| u32::from(b)).collect();
    let mut coded = 0;
    for mode in [MockMode::Order0, MockMode::Ngram, MockMode::Special] {
        let mut enc = BridgeModel::open(&Endpoint::Mock(mode), Domain::Bytes).map_err(|e| e.to_string())?;
        let archive = encode_stream(&sample, &mut enc, &cfg, 2048).map_err(|e| e.to_string())?;
        let mut dec = BridgeModel::open(&Endpoint::Mock(mode), Domain::Bytes).map_err(|e| e.to_string())?;
        if decode_stream(&archive, &mut dec).map_err(|e| e.to_string())? != sample {
            return Err(format!("mock:{mode}: codec round trip differs"));
        }
        let frame = &archive.chunks[0];
        let mut dec = BridgeModel::open(&Endpoint::Mock(mode), Domain::Bytes).map_err(|e| e.to_string())?;
        if decode_chunk(frame, &mut dec, &cfg).map_err(|e| e.to_string())? != sample[..2048] {
            return Err(format!("mock:{mode}: single chunk differs"));
        }
        coded += 1;
    }
    Ok(format!("{checks} checks over {} mock modes; {coded} codec round trips", MockMode::ALL.len()))
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let started = Instant::now();
    let (rt, bound) = round_trip_and_bound();
    let mut results: Vec<(&str, Verdict)> = vec![("lossless round trip", rt), ("coding-length bound", bound)];
    let rest: [Criterion; 9] = [
        ("exact-rational oracle equivalence", oracle_equivalence),
        ("uniform-model calibration", uniform_calibration),
        ("metric identity", metric_identity),
        ("published rate consistency", published_rates_consistency),
        ("sliding-window equivalence", sliding_equivalence),
        ("temporal summary fixture", temporal_fixture),
        ("compressor as predictor", compressor_as_predictor),
        ("gzip baseline sanity", gzip_baseline),
        ("protocol conformance", protocol_conformance),
    ];
    for (name, f) in rest {
        results.push((name, f()));
    }
    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1} s",
        results.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
