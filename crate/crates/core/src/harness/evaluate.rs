use std::collections::BTreeMap;

use rayon::prelude::*;

use super::metrics::{total_bits, MetricsReport};
use super::windows::make_windows;
use super::{Domain, EvalConfig};
use crate::bridge::BosPolicy;
use crate::codec::{decode_stream, encode_stream};
use crate::corpus::{Document, Modality};
use crate::error::{Error, Result};
use crate::models::{Model, SharedFactory};
use crate::month::YearMonth;

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentReport {
    pub doc_id: String,
    pub year_month: Option<YearMonth>,
    pub metrics: MetricsReport,
    pub bos_policy: BosPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Scored(DocumentReport),
    Skipped { doc_id: String, reason: String },
}

impl Outcome {
    pub fn doc_id(&self) -> &str {
        match self {
            Outcome::Scored(r) => &r.doc_id,
            Outcome::Skipped { doc_id, .. } => doc_id,
        }
    }
}

/// Scores one document window by window; optionally codes it for real.
pub fn evaluate_document(doc: &Document, model: &mut dyn Model, cfg: &EvalConfig) -> Result<Outcome> {
    cfg.validate()?;
    if doc.data.is_empty() {
        return Err(Error::InvalidConfig("document is empty".into()));
    }
    let skip = |reason: String| {
        Ok(Outcome::Skipped {
            doc_id: doc.id.clone(),
            reason,
        })
    };
    let n_bytes = doc.data.len() as u64;
    let (symbols, n_chars) = match (cfg.domain, doc.modality) {
        (Domain::Bytes, _) => {
            if model.alphabet_size() != 256 {
                return Err(Error::ByteDomainUnsupported { model: model.id() });
            }
            let n_chars = match doc.modality {
                Modality::Text => doc.as_text()?.chars().count() as u64,
                Modality::Bytes => n_bytes,
            };
            (doc.data.iter().map(|&b| u32::from(b)).collect::<Vec<u32>>(), n_chars)
        }
        (Domain::TextTokens, Modality::Bytes) => {
            return skip("binary document cannot be tokenized as text".into());
        }
        (Domain::TextTokens, Modality::Text) => {
            let text = doc.as_text()?;
            let ids = model.tokenize(text)?;
            if model.detokenize(&ids)? != text {
                return skip("tokenizer round trip changed the text".into());
            }
            if ids.is_empty() {
                return skip("tokenizer produced no tokens".into());
            }
            (ids, text.chars().count() as u64)
        }
    };

    let windows = make_windows(symbols.len(), cfg.mode, cfg.context, cfg.effective_step())?;
    let mut log2_probs = Vec::with_capacity(symbols.len());
    for w in &windows {
        let l = model.score_window(&symbols[w.start..w.end], w.score_from - w.start)?;
        if l.len() != w.end - w.score_from {
            return Err(Error::Protocol(format!(
                "model scored {} positions of a {}-position window",
                l.len(),
                w.end - w.score_from
            )));
        }
        log2_probs.extend(l);
    }
    let bits = total_bits(&log2_probs)?;

    let payload = if cfg.physical {
        let coder = cfg.coder()?;
        let archive = encode_stream(&symbols, model, &coder, cfg.context)?;
        if decode_stream(&archive, model)? != symbols {
            return Err(Error::ModelMismatch {
                symbol_index: symbols.len(),
            });
        }
        Some(archive.payload_bytes())
    } else {
        None
    };

    Ok(Outcome::Scored(DocumentReport {
        doc_id: doc.id.clone(),
        year_month: doc.year_month,
        metrics: MetricsReport::new(bits, symbols.len() as u64, n_chars, n_bytes, payload)?,
        bos_policy: model.bos_policy(),
    }))
}

/// Evaluates documents in parallel, each worker holding its own model.
/// Results come back sorted by document id.
pub fn evaluate_documents(
    docs: &[Document],
    factory: &SharedFactory,
    cfg: &EvalConfig,
    jobs: usize,
) -> Result<Vec<Outcome>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let mut out = pool.install(|| {
        docs.par_iter()
            .map_init(
                || None::<Box<dyn Model>>,
                |slot, doc| {
                    let model = match slot {
                        Some(m) => m,
                        None => slot.insert(factory().map_err(|e| e.in_document(&doc.id))?),
                    };
                    evaluate_document(doc, model.as_mut(), cfg).map_err(|e| e.in_document(&doc.id))
                },
            )
            .collect::<Result<Vec<Outcome>>>()
    })?;
    out.sort_by(|a, b| a.doc_id().cmp(b.doc_id()));
    Ok(out)
}

/// Pools document reports per month.
pub fn month_reports(reports: &[DocumentReport]) -> Result<BTreeMap<Option<YearMonth>, MetricsReport>> {
    let mut groups: BTreeMap<Option<YearMonth>, Vec<&MetricsReport>> = BTreeMap::new();
    for r in reports {
        groups.entry(r.year_month).or_default().push(&r.metrics);
    }
    groups
        .into_iter()
        .map(|(ym, ms)| Ok((ym, MetricsReport::merge(ms)?)))
        .collect()
}
