//! Evaluation of grounded outputs: parsing, union-merge IoU, micro/macro
//! aggregation and pluggable text scoring.

mod evaluate;
mod geometry;
pub mod metrics;
pub mod parse;

use thiserror::Error;

pub use evaluate::{evaluate_task, grg_match_iou, EvalReport, Prediction, SampleRow, REPORT_SCHEMA_VERSION};
pub use geometry::{grounding_iou, union_area, union_area_boxes};
pub use metrics::{aggregate_iou, lexical_fact_score, IouSummary, LexicalFactScorer, TextScorer};
pub use parse::{parse_output, ParseError, ParseMode, ParsedOutput};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("ground truth has no boxes")]
    EmptyGroundTruth,
    #[error("prediction id {0:?} does not match any gold record")]
    UnknownId(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("gold record {id:?} is invalid: {reason}")]
    InvalidGold { id: String, reason: String },
}
