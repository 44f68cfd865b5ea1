//! Data orchestration and evaluation toolkit for curriculum-guided,
//! multi-task training on grounded chest X-ray tasks.

pub mod augment;
pub mod bbox;
pub mod curriculum;
pub mod evalkit;
pub mod http;
pub mod ingest;
pub mod io;
pub mod judge;
pub mod record;
pub mod taskgen;

pub use bbox::{BoxError, NormBox, Rect};
pub use record::{AnnotationRecord, DataSourceId, Finding, InstructionInstance, Split, Task, TaskFamily};
