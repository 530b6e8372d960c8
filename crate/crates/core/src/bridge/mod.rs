//! External probability providers over protocol v1: newline-delimited JSON
//! on a sidecar's stdio or a TCP stream.

mod client;
mod conformance;
mod mock;
pub mod protocol;
mod remote;

pub use client::{Endpoint, EvalParams, EvalResult, Session};
pub use conformance::{run_conformance, CheckResult, ConformanceReport};
pub use mock::{serve as serve_mock, MockMode, MockSidecar, MOCK_CONTEXT_LIMIT};
pub use protocol::{BosPolicy, SessionInfo, PROTOCOL_VERSION};
pub use remote::BridgeModel;
