//! Annotation records, rendered instruction triplets and data-source ids.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbox::NormBox;

/// Supervision task of a single record. The three AGRG variants are the
/// subtasks of anatomy-grounded report generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "PG")]
    Pg,
    #[serde(rename = "GRG")]
    Grg,
    #[serde(rename = "AGRG_LOCATE")]
    AgrgLocate,
    #[serde(rename = "AGRG_DESCRIBE")]
    AgrgDescribe,
    #[serde(rename = "AGRG_BOTH")]
    AgrgBoth,
    #[serde(rename = "DETECTION")]
    Detection,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::Pg,
        Task::Grg,
        Task::AgrgLocate,
        Task::AgrgDescribe,
        Task::AgrgBoth,
        Task::Detection,
    ];

    pub const AGRG_SUBTASKS: [Task; 3] = [Task::AgrgLocate, Task::AgrgDescribe, Task::AgrgBoth];

    pub fn family(self) -> TaskFamily {
        match self {
            Task::Pg => TaskFamily::Pg,
            Task::Grg => TaskFamily::Grg,
            Task::AgrgLocate | Task::AgrgDescribe | Task::AgrgBoth => TaskFamily::Agrg,
            Task::Detection => TaskFamily::Detection,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Task::Pg => "PG",
            Task::Grg => "GRG",
            Task::AgrgLocate => "AGRG_LOCATE",
            Task::AgrgDescribe => "AGRG_DESCRIBE",
            Task::AgrgBoth => "AGRG_BOTH",
            Task::Detection => "DETECTION",
        }
    }

    pub fn from_code(s: &str) -> Option<Task> {
        Task::ALL.into_iter().find(|t| t.code() == s)
    }

    /// Whether the task's response carries box coordinates.
    pub fn has_boxes(self) -> bool {
        matches!(self, Task::Pg | Task::Grg | Task::AgrgLocate | Task::AgrgBoth | Task::Detection)
    }

    /// Whether the task's response carries free text worth scoring.
    pub fn has_text(self) -> bool {
        matches!(self, Task::Grg | Task::AgrgDescribe | Task::AgrgBoth)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Task family of a data source: a source is a dataset paired with one family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TaskFamily {
    Pg,
    Grg,
    Agrg,
    Detection,
}

impl fmt::Display for TaskFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskFamily::Pg => "PG",
            TaskFamily::Grg => "GRG",
            TaskFamily::Agrg => "AGRG",
            TaskFamily::Detection => "DETECTION",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Val,
    Test,
}

/// A dataset paired with its supervision family, e.g. PadChest-GR/PG.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DataSourceId {
    pub name: String,
    pub task: TaskFamily,
}

/// One phrase of a grounded report with its boxes. Text-only findings have
/// no boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub phrase: String,
    #[serde(default)]
    pub boxes: Vec<NormBox>,
}

/// One image–finding unit.
///
/// `text` holds the phrase (PG), the description (AGRG describe/both) or is
/// absent (AGRG locate). GRG records keep their phrases in `findings`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub source_id: String,
    pub task: Task,
    pub category: String,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub boxes: Vec<NormBox>,
    #[serde(default)]
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub findings: Vec<Finding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub has_abnormality: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub has_device: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("{task} record is missing required field `{field}`")]
    MissingField { task: Task, field: &'static str },
}

fn non_empty(s: &Option<String>) -> bool {
    s.as_deref().is_some_and(|t| !t.trim().is_empty())
}

impl AnnotationRecord {
    /// Minimal record for `task`; callers fill in the task-specific fields.
    pub fn new(image_id: impl Into<String>, source_id: impl Into<String>, task: Task, category: impl Into<String>) -> Self {
        AnnotationRecord {
            image_id: image_id.into(),
            source_id: source_id.into(),
            task,
            category: category.into(),
            text: None,
            boxes: Vec::new(),
            split: Split::Train,
            id: None,
            findings: Vec::new(),
            label: None,
            has_abnormality: None,
            has_device: None,
        }
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = Some(text.into());
        self
    }

    pub fn with_boxes(mut self, boxes: Vec<NormBox>) -> Self {
        self.boxes = boxes;
        self
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// Stable identifier used to join predictions to gold records.
    pub fn key(&self) -> String {
        match &self.id {
            Some(id) => id.clone(),
            None => format!("{}:{}:{}", self.image_id, self.task.code(), self.category),
        }
    }

    /// Checks the per-task field requirements.
    pub fn validate(&self) -> Result<(), RecordError> {
        let missing = |field| Err(RecordError::MissingField { task: self.task, field });
        if self.category.trim().is_empty() {
            return missing("category");
        }
        match self.task {
            Task::Pg | Task::Detection => {
                if !non_empty(&self.text) {
                    return missing("text");
                }
                if self.boxes.is_empty() {
                    return missing("boxes");
                }
            }
            Task::Grg => {
                if self.findings.is_empty() {
                    return missing("findings");
                }
                if self.findings.iter().any(|f| f.phrase.trim().is_empty()) {
                    return missing("findings.phrase");
                }
            }
            Task::AgrgLocate => {
                if self.boxes.is_empty() {
                    return missing("boxes");
                }
            }
            Task::AgrgDescribe => {
                if !non_empty(&self.text) {
                    return missing("text");
                }
            }
            Task::AgrgBoth => {
                if self.boxes.is_empty() {
                    return missing("boxes");
                }
                if !non_empty(&self.text) {
                    return missing("text");
                }
            }
        }
        Ok(())
    }

    /// All boxes carried by the record, including those of GRG findings.
    pub fn all_boxes(&self) -> Vec<NormBox> {
        let mut out = self.boxes.clone();
        for f in &self.findings {
            out.extend_from_slice(&f.boxes);
        }
        out
    }
}

/// `(image, instruction, response)` triplet with the record it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionInstance {
    pub image_id: String,
    pub source_id: String,
    pub task: Task,
    pub category: String,
    pub instruction: String,
    pub response: String,
    pub structured: AnnotationRecord,
}
