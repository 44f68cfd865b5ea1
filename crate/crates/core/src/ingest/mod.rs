//! Loading of source annotation formats into [`AnnotationRecord`]s, synthetic
//! fixtures, and stratified benchmark subsets.
//!
//! Input schemas, one JSON object per line:
//!
//! | format | fields |
//! |---|---|
//! | `scene_graph` | `image_id, location, box?, sentence?, split?, has_abnormality?, has_device?` |
//! | `phrase_boxes` | `image_id, phrase, boxes, category?, label?, split?` |
//! | `grounded_report` | `image_id, findings: [{phrase, boxes}], split?` |
//! | `detection` | `image_id, findings: [{label, boxes}], split?` |
//! | `records` | an [`AnnotationRecord`] |
//!
//! Every row may carry an `id`; otherwise ids are derived from the image id
//! and the row number.

mod fixture;
pub mod prompts;
mod subset;

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbox::{BoxError, NormBox};
use crate::record::{AnnotationRecord, Finding, Split, Task, TaskFamily};

pub use fixture::{make_fixture_dataset, FixtureSource, FixtureSpec};
pub use subset::{build_benchmark_subset, BenchmarkSubsetSpec, Stratum, StratumShortfall, SubsetError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    SceneGraph,
    PhraseBoxes,
    GroundedReport,
    Detection,
    Records,
}

impl FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s.replace('-', "_").as_str() {
            "scene_graph" => InputFormat::SceneGraph,
            "phrase_boxes" => InputFormat::PhraseBoxes,
            "grounded_report" => InputFormat::GroundedReport,
            "detection" => InputFormat::Detection,
            "records" => InputFormat::Records,
            _ => return Err(format!("unknown input format {s:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadOptions {
    /// Dataset name used to build source ids such as `vindr-cxr-pg`.
    pub dataset: String,
    /// Fail on the first malformed row; otherwise malformed rows are logged
    /// and skipped.
    pub strict: bool,
}

impl LoadOptions {
    pub fn new(dataset: impl Into<String>) -> Self {
        LoadOptions { dataset: dataset.into(), strict: true }
    }
}

/// Source id of a dataset–family pair.
pub fn source_id(dataset: &str, family: TaskFamily) -> String {
    format!("{}-{}", dataset, family.to_string().to_lowercase())
}

/// Short detection labels and the phrases they stand for.
pub const LABEL_PHRASES: &[(&str, &str)] = &[
    ("ILD", "Interstitial lung disease"),
    ("Enlarged PA", "Enlarged pulmonary artery"),
    ("COPD", "Chronic obstructive pulmonary disease"),
    ("Nodule/Mass", "Nodule or mass"),
    ("Lung Opacity", "Lung opacity"),
    ("Other lesion", "Other lesion"),
    ("Other disease", "Other disease"),
];

/// Phrase for a detection label; unknown labels pass through unchanged.
pub fn label_phrase(label: &str) -> &str {
    let label = label.trim();
    LABEL_PHRASES.iter().find(|(k, _)| k.eq_ignore_ascii_case(label)).map_or(label, |(_, v)| v)
}

/// Phrase used for an image whose detection row lists no finding.
pub const NO_FINDING: &str = "No finding";

#[derive(Deserialize)]
struct SceneGraphRow {
    #[serde(default)]
    id: Option<String>,
    image_id: String,
    location: String,
    #[serde(default, rename = "box")]
    bbox: Option<NormBox>,
    #[serde(default)]
    sentence: Option<String>,
    #[serde(default)]
    split: Split,
    #[serde(default)]
    has_abnormality: Option<bool>,
    #[serde(default)]
    has_device: Option<bool>,
}

#[derive(Deserialize)]
struct PhraseBoxesRow {
    #[serde(default)]
    id: Option<String>,
    image_id: String,
    phrase: String,
    boxes: Vec<NormBox>,
    #[serde(default)]
    category: Option<String>,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    split: Split,
}

#[derive(Deserialize)]
struct GroundedReportRow {
    #[serde(default)]
    id: Option<String>,
    image_id: String,
    findings: Vec<Finding>,
    #[serde(default)]
    split: Split,
}

#[derive(Deserialize)]
struct DetectionFinding {
    label: String,
    #[serde(default)]
    boxes: Vec<NormBox>,
}

#[derive(Deserialize)]
struct DetectionRow {
    #[serde(default)]
    id: Option<String>,
    image_id: String,
    findings: Vec<DetectionFinding>,
    #[serde(default)]
    split: Split,
}

fn clamp_all(boxes: Vec<NormBox>) -> Result<Vec<NormBox>, String> {
    boxes.iter().map(|b| b.clamp().map_err(|e: BoxError| format!("{e}: {b:?}"))).collect()
}

fn non_blank(s: Option<String>) -> Option<String> {
    s.map(|t| t.trim().to_string()).filter(|t| !t.is_empty())
}

struct RowCtx<'a> {
    dataset: &'a str,
    line: usize,
}

impl RowCtx<'_> {
    fn id(&self, given: &Option<String>, image_id: &str, suffix: &str) -> String {
        match given {
            Some(id) if suffix.is_empty() => id.clone(),
            Some(id) => format!("{id}/{suffix}"),
            None if suffix.is_empty() => format!("{image_id}/{}", self.line),
            None => format!("{image_id}/{}/{suffix}", self.line),
        }
    }

    fn record(&self, image_id: &str, family: TaskFamily, task: Task, category: &str, split: Split) -> AnnotationRecord {
        AnnotationRecord::new(image_id, source_id(self.dataset, family), task, category).with_split(split)
    }
}

fn scene_graph(ctx: &RowCtx, row: SceneGraphRow) -> Result<Vec<AnnotationRecord>, String> {
    let location = row.location.trim();
    if location.is_empty() {
        return Err("empty location".into());
    }
    let bbox = row.bbox.map(|b| b.clamp().map_err(|e| format!("{e}: {b:?}"))).transpose()?;
    let sentence = non_blank(row.sentence);
    let subtasks: &[Task] = match (&bbox, &sentence) {
        (Some(_), Some(_)) => &[Task::AgrgBoth, Task::AgrgLocate, Task::AgrgDescribe],
        (Some(_), None) => &[Task::AgrgLocate],
        (None, Some(_)) => &[Task::AgrgDescribe],
        (None, None) => return Err("row has neither box nor sentence".into()),
    };
    Ok(subtasks
        .iter()
        .map(|&task| {
            let mut r = ctx.record(&row.image_id, TaskFamily::Agrg, task, location, row.split);
            r.id = Some(ctx.id(&row.id, &row.image_id, task.code()));
            if task != Task::AgrgDescribe {
                r.boxes = bbox.into_iter().collect();
            }
            if task != Task::AgrgLocate {
                r.text = sentence.clone();
            }
            r.has_abnormality = row.has_abnormality;
            r.has_device = row.has_device;
            r
        })
        .collect())
}

fn phrase_boxes(ctx: &RowCtx, row: PhraseBoxesRow) -> Result<Vec<AnnotationRecord>, String> {
    let phrase = row.phrase.trim();
    if phrase.is_empty() {
        return Err("empty phrase".into());
    }
    if row.boxes.is_empty() {
        return Err("phrase has no boxes".into());
    }
    let label = non_blank(row.label);
    let category = non_blank(row.category).or_else(|| label.clone()).unwrap_or_else(|| phrase.to_string());
    let mut r = ctx.record(&row.image_id, TaskFamily::Pg, Task::Pg, &category, row.split).with_text(phrase).with_boxes(clamp_all(row.boxes)?);
    r.id = Some(ctx.id(&row.id, &row.image_id, ""));
    r.label = label;
    Ok(vec![r])
}

fn grounded_report(ctx: &RowCtx, row: GroundedReportRow) -> Result<Vec<AnnotationRecord>, String> {
    if row.findings.is_empty() {
        return Err("report has no findings".into());
    }
    let mut findings = Vec::with_capacity(row.findings.len());
    for f in row.findings {
        if f.phrase.trim().is_empty() {
            return Err("finding with empty phrase".into());
        }
        findings.push(Finding { phrase: f.phrase.trim().to_string(), boxes: clamp_all(f.boxes)? });
    }
    let mut r = ctx.record(&row.image_id, TaskFamily::Grg, Task::Grg, "report", row.split);
    r.id = Some(ctx.id(&row.id, &row.image_id, ""));
    r.findings = findings;
    Ok(vec![r])
}

fn detection(ctx: &RowCtx, row: DetectionRow) -> Result<Vec<AnnotationRecord>, String> {
    // boxes of repeated labels are merged under the label's first appearance
    let mut labels: Vec<(String, Vec<NormBox>)> = Vec::new();
    for f in row.findings {
        let label = f.label.trim().to_string();
        if label.is_empty() {
            return Err("finding with empty label".into());
        }
        let boxes = clamp_all(f.boxes)?;
        match labels.iter_mut().find(|(l, _)| *l == label) {
            Some((_, b)) => b.extend(boxes),
            None => labels.push((label, boxes)),
        }
    }
    let mut out = Vec::new();
    let (local, global): (Vec<_>, Vec<_>) = labels.into_iter().partition(|(_, b)| !b.is_empty());
    for (label, boxes) in &local {
        let mut r = ctx
            .record(&row.image_id, TaskFamily::Pg, Task::Pg, label, row.split)
            .with_text(label_phrase(label))
            .with_boxes(boxes.clone());
        r.id = Some(ctx.id(&row.id, &row.image_id, &format!("PG/{label}")));
        out.push(r);
    }
    let mut findings: Vec<Finding> = local
        .iter()
        .chain(&global)
        .map(|(label, boxes)| Finding { phrase: label_phrase(label).to_string(), boxes: boxes.clone() })
        .collect();
    if findings.is_empty() {
        findings.push(Finding { phrase: NO_FINDING.into(), boxes: Vec::new() });
    }
    let mut report = ctx.record(&row.image_id, TaskFamily::Grg, Task::Grg, "report", row.split);
    report.id = Some(ctx.id(&row.id, &row.image_id, "GRG"));
    report.findings = findings;
    out.push(report);
    Ok(out)
}

fn parse_row<T: DeserializeOwned>(text: &str) -> Result<T, String> {
    serde_json::from_str(text).map_err(|e| e.to_string())
}

fn convert_line(format: InputFormat, ctx: &RowCtx, text: &str) -> Result<Vec<AnnotationRecord>, String> {
    match format {
        InputFormat::SceneGraph => scene_graph(ctx, parse_row(text)?),
        InputFormat::PhraseBoxes => phrase_boxes(ctx, parse_row(text)?),
        InputFormat::GroundedReport => grounded_report(ctx, parse_row(text)?),
        InputFormat::Detection => detection(ctx, parse_row(text)?),
        InputFormat::Records => {
            let rec: AnnotationRecord = parse_row(text)?;
            rec.validate().map_err(|e| e.to_string())?;
            Ok(vec![rec])
        }
    }
}

/// Converts JSONL rows of `format` into records, in input order. Blank lines
/// are ignored.
pub fn read_records<R: BufRead>(reader: R, format: InputFormat, opts: &LoadOptions) -> Result<Vec<AnnotationRecord>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ctx = RowCtx { dataset: &opts.dataset, line: i + 1 };
        let converted = convert_line(format, &ctx, &line).and_then(|recs| {
            for r in &recs {
                r.validate().map_err(|e| e.to_string())?;
            }
            Ok(recs)
        });
        match converted {
            Ok(recs) => out.extend(recs),
            Err(reason) if opts.strict => return Err(IngestError::Format { line: i + 1, reason }),
            Err(reason) => log::warn!("skipping line {}: {reason}", i + 1),
        }
    }
    Ok(out)
}

/// [`read_records`] on a file.
pub fn load_records(path: &Path, format: InputFormat, opts: &LoadOptions) -> Result<Vec<AnnotationRecord>, IngestError> {
    read_records(BufReader::new(File::open(path)?), format, opts)
}
