//! Likelihood evaluation of documents under a model, and the compression
//! metrics derived from it.

mod evaluate;
mod metrics;
mod rows;
mod windows;

pub use evaluate::{evaluate_document, evaluate_documents, month_reports, DocumentReport, Outcome};
pub use metrics::{implied_count, implied_total, total_bits, MetricsReport};
pub use rows::{read_rows, rows_from_bytes, rows_to_bytes, run_rows, write_rows, ReportRow, RowFormat};
pub use windows::{make_windows, Window, WindowMode};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec::CoderConfig;
use crate::error::{Error, Result};

/// What a model sees: tokenizer output, or raw bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    TextTokens,
    #[default]
    Bytes,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::TextTokens => "text_tokens",
            Domain::Bytes => "bytes",
        })
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text_tokens" | "tokens" | "text" => Ok(Domain::TextTokens),
            "bytes" => Ok(Domain::Bytes),
            _ => Err(Error::InvalidConfig(format!("unknown domain `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub context: usize,
    pub mode: WindowMode,
    /// Sliding mode only; chunked mode always steps by `context`.
    pub step: usize,
    pub domain: Domain,
    pub precision: u32,
    pub register_bits: u32,
    /// Also arithmetic-code every document and report the payload rate.
    pub physical: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            context: 2048,
            mode: WindowMode::Chunked,
            step: 2048,
            domain: Domain::Bytes,
            precision: 16,
            register_bits: 32,
            physical: false,
        }
    }
}

impl EvalConfig {
    pub fn chunked(context: usize) -> Self {
        EvalConfig {
            context,
            step: context,
            ..Default::default()
        }
    }

    pub fn sliding(context: usize, step: usize) -> Self {
        EvalConfig {
            context,
            step,
            mode: WindowMode::Sliding,
            ..Default::default()
        }
    }

    /// The step actually taken between windows.
    pub fn effective_step(&self) -> usize {
        match self.mode {
            WindowMode::Chunked => self.context,
            WindowMode::Sliding => self.step,
        }
    }

    pub fn coder(&self) -> Result<CoderConfig> {
        CoderConfig::new(self.register_bits, self.precision)
    }

    pub fn validate(&self) -> Result<()> {
        if self.context == 0 {
            return Err(Error::InvalidConfig("context size must be positive".into()));
        }
        let s = self.effective_step();
        if s == 0 || s > self.context {
            return Err(Error::InvalidConfig(format!(
                "step {s} must lie in 1..={}",
                self.context
            )));
        }
        if self.physical && s != self.context {
            return Err(Error::InvalidConfig(
                "physical compression codes disjoint chunks; use chunked mode or step = context".into(),
            ));
        }
        self.coder()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        EvalConfig::default().validate().unwrap();
        EvalConfig::sliding(2048, 512).validate().unwrap();
        assert!(EvalConfig::sliding(2048, 4096).validate().is_err());
        let mut c = EvalConfig::sliding(2048, 512);
        c.physical = true;
        assert!(c.validate().is_err());
        c.step = 2048;
        c.validate().unwrap();
        assert_eq!(EvalConfig::chunked(16).effective_step(), 16);
    }

    #[test]
    fn config_json_defaults() {
        let c: EvalConfig = serde_json::from_str(r#"{"context": 512, "domain": "text_tokens"}"#).unwrap();
        assert_eq!(c.context, 512);
        assert_eq!(c.domain, Domain::TextTokens);
        assert_eq!(c.precision, 16);
        assert!(serde_json::from_str::<EvalConfig>(r#"{"contxt": 1}"#).is_err());
    }
}
