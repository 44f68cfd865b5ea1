//! LLM-as-judge hallucination and NLI analysis of anatomy-specific
//! descriptions against full reports.

pub mod aggregate;
pub mod client;
pub mod prompt;
pub mod verdict;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use aggregate::{aggregate_verdicts, mean_row, AnatomyStats, JudgeTable, MEAN_ROW};
pub use client::{request_hash, EndpointConfig, JudgeClient, Transport, UreqTransport};
pub use prompt::{build_judge_prompt, JUDGE_PROMPT, VERDICT_KEYS};
pub use verdict::{validate_verdict, JudgeVerdict, NliStatus, VerdictError, YesNo};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JudgeError {
    #[error("generated text and reference report must be nonempty")]
    EmptyInput,
    #[error("request {hash}: {message}")]
    Transport { hash: String, message: String },
    #[error("request {hash}: timed out")]
    Timeout { hash: String },
    #[error("request {hash}: gave up after {attempts} attempts: {last}")]
    RetriesExhausted { hash: String, attempts: u32, last: String },
    #[error("verdict cache: {0}")]
    Cache(String),
}

/// One judged pair as stored in verdict JSONL files. `verdict` is absent
/// when the call failed or the response did not validate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub id: String,
    pub anatomy: String,
    pub request_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<JudgeVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Table over stored verdict records.
pub fn aggregate_records(records: &[VerdictRecord]) -> JudgeTable {
    aggregate_verdicts(records.iter().map(|r| (r.anatomy.as_str(), r.verdict.as_ref())))
}
