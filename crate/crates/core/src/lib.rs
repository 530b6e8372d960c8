//! Lossless compression with arithmetic coding over pluggable probability
//! models, and the compression-rate evaluation harness built on it.

pub mod baseline;
pub mod bridge;
pub mod codec;
pub mod corpus;
pub mod error;
pub mod harness;
pub mod io_util;
pub mod models;
pub mod month;
pub mod oracle;
pub mod selftest;
pub mod temporal;

pub use codec::{decode_stream, encode_stream, Archive, CoderConfig, QuantizedPmf};
pub use corpus::{CorpusManifest, Document, Modality};
pub use error::{Error, Result};
pub use harness::{Domain, EvalConfig, MetricsReport, ReportRow, WindowMode};
pub use models::{Mode, Model, ModelContext, ModelOutput, ModelSpec};
pub use month::YearMonth;
pub use temporal::{MonthlySeries, TemporalSummary};
