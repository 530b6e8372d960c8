use std::io::{BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use modelzip::bridge::{run_conformance, serve_mock, Endpoint, MockMode};
use modelzip::codec::{decode_stream_par, encode_stream_par};
use modelzip::corpus::{ingest, IngestRules};
use modelzip::harness::{evaluate_documents, read_rows, run_rows, write_rows, DocumentReport, Outcome};
use modelzip::io_util::{read, write_atomic};
use modelzip::models::{NgramTables, Smoothing, StaticNgramModel, SIDECAR_ENV};
use modelzip::selftest::run_selftest;
use modelzip::temporal::{emit_report, render_table, summarize_all};
use modelzip::{
    Archive, CorpusManifest, Domain, EvalConfig, MetricsReport, Model, ModelSpec, MonthlySeries, YearMonth,
};
use serde::Serialize;
use serde_json::json;

use crate::config::{sibling, RunConfig};
use crate::{Cli, CoderArgs, Command, Failure};

type CmdResult = Result<(), Failure>;

struct Settings {
    file: RunConfig,
    file_has_step: bool,
    jobs: usize,
    seed: u64,
}

pub fn dispatch(cli: Cli) -> CmdResult {
    let (file, file_has_step) = RunConfig::load_or_default(cli.config.as_deref())?;
    let jobs = match cli.jobs.or(file.jobs) {
        Some(0) => return Err(Failure::user("invalid_config", "--jobs must be at least 1")),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, usize::from),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let s = Settings {
        file,
        file_has_step,
        jobs,
        seed,
    };
    match cli.command {
        Command::Compress {
            input,
            output,
            model,
            coder,
        } => compress(&s, &input, &output, model, &coder),
        Command::Decompress { input, output, model } => decompress(&s, &input, &output, model),
        Command::Eval {
            manifest,
            model,
            mode,
            coder,
            step,
            domain,
            physical,
            dataset,
            out,
            docs_out,
        } => {
            let mut cfg = coder_config(&s, &coder);
            if let Some(m) = mode {
                cfg.mode = m.parse()?;
            }
            if let Some(d) = domain {
                cfg.domain = d.parse()?;
            }
            if let Some(p) = physical {
                cfg.physical = p;
            }
            match step {
                Some(st) => cfg.step = st,
                None if !s.file_has_step => cfg.step = cfg.context,
                None => {}
            }
            let manifest = manifest
                .or_else(|| s.file.manifest.clone())
                .ok_or_else(|| Failure::user("invalid_config", "no corpus given; pass --manifest"))?;
            let dataset = dataset.or_else(|| s.file.dataset.clone());
            eval(&s, &manifest, model, dataset, cfg, &out, docs_out)
        }
        Command::Report { rows, cutoff, out } => {
            let cutoff = match cutoff {
                Some(c) => c.parse().map_err(|e| Failure::user("invalid_config", format!("--cutoff: {e}")))?,
                None => s
                    .file
                    .cutoff
                    .ok_or_else(|| Failure::user("invalid_config", "no cutoff given; pass --cutoff YYYY-MM"))?,
            };
            report(&rows, cutoff, &out)
        }
        Command::Ingest { dir, out, dataset } => {
            let m = ingest(&dir, dataset.as_deref(), &IngestRules::default())?;
            m.save(&out)?;
            let months = m.months();
            print_json(&json!({
                "dataset": m.dataset,
                "documents": m.entries.len(),
                "months": months.len(),
                "first_month": months.first(),
                "last_month": months.last(),
                "manifest": out,
            }))
        }
        Command::Selftest { cases } => {
            let r = run_selftest(s.seed, cases)?;
            print_json(&r)?;
            if r.passed() {
                Ok(())
            } else {
                Err(Failure::internal(
                    "selftest_failed",
                    format!("{} oracle failures; see the report on stdout", r.oracle_failures.len()),
                ))
            }
        }
        Command::Conformance { endpoint } => {
            let endpoint = match endpoint {
                Some(e) => e,
                None => std::env::var(SIDECAR_ENV).map_err(|_| {
                    Failure::user("invalid_config", format!("no endpoint given and ${SIDECAR_ENV} is unset"))
                })?,
            };
            let r = run_conformance(&endpoint.parse()?, s.seed)?;
            print_json(&r)?;
            if r.passed() {
                Ok(())
            } else {
                let failed: Vec<&str> = r.failures().map(|c| c.name).collect();
                Err(Failure::user("conformance_failed", format!("failed checks: {}", failed.join(", "))))
            }
        }
        Command::Train {
            inputs,
            order,
            smoothing,
            out,
        } => train(&inputs, order, &smoothing, &out),
        Command::MockSidecar { mode, listen } => mock_sidecar(mode.parse()?, listen.as_deref()),
    }
}

fn coder_config(s: &Settings, args: &CoderArgs) -> EvalConfig {
    let mut cfg = s.file.eval;
    if let Some(c) = args.context {
        cfg.context = c;
    }
    if let Some(p) = args.precision {
        cfg.precision = p;
    }
    if let Some(b) = args.register_bits {
        cfg.register_bits = b;
    }
    cfg
}

fn model_spec(s: &Settings, flag: Option<String>) -> Result<ModelSpec, Failure> {
    match flag.or_else(|| s.file.model.clone()) {
        Some(m) => Ok(m.parse()?),
        None if std::env::var_os(SIDECAR_ENV).is_some() => Ok(ModelSpec::Bridge { endpoint: None }),
        None => Err(Failure::user(
            "invalid_config",
            format!("no model given; pass --model or set ${SIDECAR_ENV}"),
        )),
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::internal("thread_pool", e.to_string()))
}

fn compress(s: &Settings, input: &Path, output: &Path, model: Option<String>, coder: &CoderArgs) -> CmdResult {
    let cfg = coder_config(s, coder);
    let coder = cfg.coder()?;
    let spec = model_spec(s, model)?;
    let factory = spec.factory(Domain::Bytes)?;
    let data = read(input)?;
    let symbols: Vec<u32> = data.iter().map(|&b| u32::from(b)).collect();
    let archive = pool(s.jobs)?.install(|| encode_stream_par(&symbols, &*factory, &coder, cfg.context))?;
    let bytes = archive.to_bytes()?;
    write_atomic(output, &bytes)?;
    let rate = (!data.is_empty()).then(|| archive.payload_bytes() as f64 / data.len() as f64);
    print_json(&json!({
        "model": archive.model_id,
        "input_bytes": data.len(),
        "payload_bytes": archive.payload_bytes(),
        "archive_bytes": bytes.len(),
        "chunks": archive.chunks.len(),
        "rate": rate,
    }))
}

fn decompress(s: &Settings, input: &Path, output: &Path, model: Option<String>) -> CmdResult {
    let archive = Archive::from_bytes(&read(input)?)?;
    if archive.alphabet_size != 256 {
        return Err(Failure::user(
            "archive",
            format!("archive codes {} symbols, not bytes", archive.alphabet_size),
        ));
    }
    let factory = model_spec(s, model)?.factory(Domain::Bytes)?;
    let symbols = pool(s.jobs)?.install(|| decode_stream_par(&archive, &*factory))?;
    if symbols.len() as u64 != archive.symbol_count() {
        return Err(Failure::internal(
            "symbol_count",
            format!("decoded {} symbols, archive holds {}", symbols.len(), archive.symbol_count()),
        ));
    }
    let data = symbols
        .iter()
        .map(|&x| u8::try_from(x))
        .collect::<Result<Vec<u8>, _>>()
        .map_err(|_| Failure::internal("archive", "decoded a symbol outside the byte range"))?;
    write_atomic(output, &data)?;
    print_json(&json!({
        "model": archive.model_id,
        "output_bytes": data.len(),
        "symbols": archive.symbol_count(),
    }))
}

#[derive(Serialize)]
struct Skip<'a> {
    doc_id: &'a str,
    reason: &'a str,
}

fn eval(
    s: &Settings,
    manifest_path: &Path,
    model: Option<String>,
    dataset: Option<String>,
    cfg: EvalConfig,
    out: &Path,
    docs_out: Option<PathBuf>,
) -> CmdResult {
    cfg.validate()?;
    let spec = model_spec(s, model)?;
    let manifest = CorpusManifest::load(manifest_path)?;
    let dataset = dataset.unwrap_or_else(|| manifest.dataset.clone());
    let docs = manifest.load_all()?;
    let factory = spec.factory(cfg.domain)?;
    let model_id = factory()?.id();
    let outcomes = evaluate_documents(&docs, &factory, &cfg, s.jobs)?;

    let mut reports: Vec<DocumentReport> = Vec::new();
    let mut skipped = Vec::new();
    for o in &outcomes {
        match o {
            Outcome::Scored(r) => reports.push(r.clone()),
            Outcome::Skipped { doc_id, reason } => skipped.push(Skip { doc_id, reason }),
        }
    }
    if reports.is_empty() {
        return Err(Failure::user("no_documents", "no document in the corpus could be scored"));
    }
    let (doc_rows, month_rows) = run_rows(&model_id, &dataset, &cfg, &reports)?;
    let docs_out = docs_out.unwrap_or_else(|| sibling(out, "docs", None));
    let meta_out = sibling(out, "meta", Some("json"));
    write_rows(out, &month_rows)?;
    write_rows(&docs_out, &doc_rows)?;
    RunConfig {
        model: Some(spec.to_string()),
        dataset: Some(dataset.clone()),
        manifest: Some(std::path::absolute(manifest_path).unwrap_or_else(|_| manifest_path.to_owned())),
        eval: cfg,
        jobs: Some(s.jobs),
        seed: None,
        cutoff: s.file.cutoff,
        tool_version: Some(env!("CARGO_PKG_VERSION").to_owned()),
    }
    .save(&meta_out)?;

    let total = MetricsReport::merge(reports.iter().map(|r| &r.metrics))?;
    print_json(&json!({
        "model": model_id,
        "dataset": dataset,
        "mode": cfg.mode,
        "C": cfg.context,
        "S": cfg.effective_step(),
        "documents": outcomes.len(),
        "scored": reports.len(),
        "skipped": skipped,
        "months": month_rows.len(),
        "total": total,
        "rows": out,
        "doc_rows": docs_out,
        "meta": meta_out,
    }))
}

fn report(rows: &[PathBuf], cutoff: YearMonth, out: &Path) -> CmdResult {
    if rows.is_empty() {
        return Err(Failure::user("invalid_config", "no rows given; pass --rows FILE"));
    }
    let mut all = Vec::new();
    for p in rows {
        all.extend(read_rows(p)?);
    }
    let series = MonthlySeries::from_rows(&all)?;
    let summaries = summarize_all(&series, cutoff)?;
    emit_report(&summaries, &series, out)?;
    print!("{}", render_table(&summaries));
    Ok(())
}

fn train(inputs: &[PathBuf], order: usize, smoothing: &str, out: &Path) -> CmdResult {
    let smoothing: Smoothing = smoothing.parse()?;
    let mut data = Vec::new();
    for p in inputs {
        data.extend(read(p)?);
    }
    let tables = NgramTables::train_bytes(&data, order, smoothing)?;
    write_atomic(out, &tables.to_bytes())?;
    let id = StaticNgramModel::new(Arc::new(tables)).id();
    print_json(&json!({
        "model": ModelSpec::Ngram { path: out.to_owned() }.to_string(),
        "id": id,
        "order": order,
        "smoothing": smoothing.to_string(),
        "training_bytes": data.len(),
    }))
}

fn mock_sidecar(mode: MockMode, listen: Option<&str>) -> CmdResult {
    let io = |e: std::io::Error| Failure::internal("io", e.to_string());
    let Some(addr) = listen else {
        return serve_mock(mode, std::io::stdin().lock(), std::io::stdout().lock()).map_err(io);
    };
    let listener = TcpListener::bind(addr).map_err(io)?;
    let endpoint = Endpoint::Tcp(listener.local_addr().map_err(io)?.to_string());
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", json!({"listening": endpoint.to_string()}))
        .and_then(|()| out.flush())
        .map_err(io)?;
    drop(out);
    for stream in listener.incoming() {
        let stream = stream.map_err(io)?;
        let reader = BufReader::new(stream.try_clone().map_err(io)?);
        std::thread::spawn(move || serve_mock(mode, reader, stream));
    }
    Ok(())
}

fn print_json(value: &impl Serialize) -> CmdResult {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|e| Failure::internal("json", e.to_string()))?;
    writeln!(out)
        .and_then(|()| out.flush())
        .map_err(|e| Failure::internal("io", e.to_string()))
}
