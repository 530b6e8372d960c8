mod commands;
mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

/// Lossless compression with pluggable probability models, and
/// compression-based evaluation of those models.
#[derive(Debug, Parser)]
#[command(name = "modelzip", version)]
pub struct Cli {
    /// Documents evaluated in parallel; compress and decompress use it for chunks.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Run settings in the same JSON shape as the metadata `eval` writes.
    /// Flags win over the file, the file wins over defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Seed for the randomized checks in `selftest` and `conformance`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct CoderArgs {
    /// Symbols per independently coded chunk.
    #[arg(long)]
    pub context: Option<usize>,

    /// Frequency table precision F in bits.
    #[arg(long)]
    pub precision: Option<u32>,

    /// Coder register width B in bits.
    #[arg(long)]
    pub register_bits: Option<u32>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compress a file into an MZP1 archive.
    Compress {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        model: Option<String>,
        #[command(flatten)]
        coder: CoderArgs,
    },
    /// Restore a file from an MZP1 archive.
    Decompress {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        model: Option<String>,
    },
    /// Score a corpus and write per-document and per-month rows.
    Eval {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Model spec, or a bridge endpoint such as `stdio:python sidecar.py`.
        #[arg(long)]
        model: Option<String>,
        /// `chunked` or `sliding`.
        #[arg(long)]
        mode: Option<String>,
        #[command(flatten)]
        coder: CoderArgs,
        /// Sliding step S; defaults to the context size when unset.
        #[arg(long)]
        step: Option<usize>,
        /// `bytes` or `text_tokens`.
        #[arg(long)]
        domain: Option<String>,
        /// Also arithmetic-code every document and report the payload rate.
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        physical: Option<bool>,
        /// Dataset name for the rows; defaults to the manifest's.
        #[arg(long)]
        dataset: Option<String>,
        /// Month rows (`.csv` or `.jsonl`).
        #[arg(long)]
        out: PathBuf,
        /// Document rows; defaults to `<out stem>.docs.<ext>`.
        #[arg(long)]
        docs_out: Option<PathBuf>,
    },
    /// Temporal train/test summary from month rows.
    Report {
        #[arg(long)]
        rows: Vec<PathBuf>,
        /// Last training month, `YYYY-MM`; later months are the test period.
        #[arg(long)]
        cutoff: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a corpus manifest from a directory tree.
    Ingest {
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dataset: Option<String>,
    },
    /// Exact-interval oracle suite plus protocol conformance on every mock mode.
    Selftest {
        #[arg(long, default_value_t = 100)]
        cases: usize,
    },
    /// Run the protocol conformance suite against a sidecar.
    Conformance {
        /// Endpoint; defaults to `$MODELZIP_SIDECAR`.
        #[arg(long)]
        endpoint: Option<String>,
    },
    /// Train a static byte n-gram table.
    Train {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        order: usize,
        /// `laplace`, `kt`, or `d<num>/<den>`.
        #[arg(long, default_value = "kt")]
        smoothing: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the built-in mock sidecar on stdio, or on TCP with `--listen`.
    MockSidecar {
        #[arg(long, default_value = "order0")]
        mode: String,
        #[arg(long)]
        listen: Option<String>,
    },
}

/// Why a command did not succeed, as printed on stderr.
#[derive(Debug)]
pub struct Failure {
    pub kind: String,
    pub message: String,
    pub code: u8,
}

impl Failure {
    pub fn user(kind: &str, message: impl Into<String>) -> Self {
        Failure {
            kind: kind.to_owned(),
            message: message.into(),
            code: 1,
        }
    }

    pub fn internal(kind: &str, message: impl Into<String>) -> Self {
        Failure {
            kind: kind.to_owned(),
            message: message.into(),
            code: 2,
        }
    }
}

impl From<modelzip::Error> for Failure {
    fn from(e: modelzip::Error) -> Self {
        Failure {
            kind: e.kind().to_owned(),
            message: e.to_string(),
            code: if e.is_user_error() { 1 } else { 2 },
        }
    }
}

pub fn run(argv: impl IntoIterator<Item = impl Into<OsString> + Clone>) -> Result<(), Failure> {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(Failure::user("usage", e.render().to_string().trim_end())),
    };
    commands::dispatch(cli)
}

fn main() -> ExitCode {
    match run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let body = json!({"error": {"kind": f.kind, "message": f.message, "exit_code": f.code}});
            let mut err = std::io::stderr().lock();
            let _ = writeln!(err, "{body}");
            ExitCode::from(f.code)
        }
    }
}
