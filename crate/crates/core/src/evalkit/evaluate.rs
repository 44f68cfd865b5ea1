use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bbox::NormBox;
use crate::record::{AnnotationRecord, Finding, Task};
use crate::taskgen::{render_instruction, strip_box_groups};

use super::geometry::grounding_iou;
use super::metrics::{aggregate_iou, TextScorer};
use super::parse::{parse_output, ParseMode};
use super::EvalError;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// One model output keyed by the gold record's [`AnnotationRecord::key`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub id: String,
    pub class: String,
    pub iou: Option<f64>,
    pub text_score: Option<f64>,
    pub parsed: bool,
    pub salvaged: bool,
    pub missing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub task: Task,
    pub mode: ParseMode,
    pub scorer: String,
    pub n: usize,
    pub parse_failures: usize,
    pub missing_predictions: usize,
    pub salvaged: usize,
    pub micro_iou: Option<f64>,
    pub macro_iou: Option<f64>,
    pub per_class_iou: BTreeMap<String, f64>,
    pub mean_text_score: Option<f64>,
    pub rows: Vec<SampleRow>,
}

/// Greedy GRG pairing: gold findings in order each take the unmatched
/// predicted finding with the highest IoU. Unmatched gold findings score 0.
/// Returns `None` when no gold finding carries boxes.
pub fn grg_match_iou(gold: &[Finding], pred: &[Finding]) -> Option<f64> {
    let gold_boxed: Vec<&[NormBox]> = gold.iter().filter(|f| !f.boxes.is_empty()).map(|f| f.boxes.as_slice()).collect();
    if gold_boxed.is_empty() {
        return None;
    }
    let mut used = vec![false; pred.len()];
    let mut total = 0.0;
    for g in &gold_boxed {
        let mut best: Option<(usize, f64)> = None;
        for (j, p) in pred.iter().enumerate() {
            if used[j] || p.boxes.is_empty() {
                continue;
            }
            let iou = grounding_iou(g, &p.boxes).expect("gold boxes are non-empty");
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((j, iou));
            }
        }
        if let Some((j, iou)) = best.filter(|&(_, iou)| iou > 0.0) {
            used[j] = true;
            total += iou;
        }
    }
    Some(total / gold_boxed.len() as f64)
}

fn gold_text(rec: &AnnotationRecord) -> Result<String, EvalError> {
    match rec.task {
        Task::Grg => {
            let inst = render_instruction(rec).map_err(|e| EvalError::InvalidGold { id: rec.key(), reason: e.to_string() })?;
            Ok(strip_box_groups(&inst.response))
        }
        _ => Ok(rec.text.clone().unwrap_or_default()),
    }
}

fn score_sample(
    rec: &AnnotationRecord,
    output: Option<&str>,
    mode: ParseMode,
    scorer: &dyn TextScorer,
) -> Result<SampleRow, EvalError> {
    let task = rec.task;
    let wants_iou = task.has_boxes() && !rec.all_boxes().is_empty();
    let wants_text = task.has_text();
    let mut row = SampleRow {
        id: rec.key(),
        class: rec.category.clone(),
        iou: None,
        text_score: None,
        parsed: false,
        salvaged: false,
        missing: output.is_none(),
    };
    let parsed = output.and_then(|o| parse_output(o, task, mode).ok());
    let Some(p) = parsed else {
        row.iou = wants_iou.then_some(0.0);
        row.text_score = wants_text.then_some(0.0);
        return Ok(row);
    };
    row.parsed = true;
    row.salvaged = p.salvaged;
    if wants_iou {
        row.iou = Some(match task {
            Task::Grg => grg_match_iou(&rec.findings, &p.findings).unwrap_or(0.0),
            _ => grounding_iou(&rec.boxes, &p.boxes)?,
        });
    }
    if wants_text {
        let reference = gold_text(rec)?;
        let candidate = match task {
            Task::Grg => strip_box_groups(output.unwrap_or_default()),
            _ => p.description.clone().unwrap_or_default(),
        };
        row.text_score = Some(scorer.score(&candidate, &reference).clamp(0.0, 1.0));
    }
    Ok(row)
}

/// Scores predictions against the gold records of `task`. Every gold record
/// of that task is a sample; one without a prediction scores 0.
pub fn evaluate_task(
    preds: &[Prediction],
    gold: &[AnnotationRecord],
    task: Task,
    mode: ParseMode,
    scorer: &dyn TextScorer,
) -> Result<EvalReport, EvalError> {
    let mut gold_by_id: HashMap<String, &AnnotationRecord> = HashMap::new();
    for rec in gold.iter().filter(|r| r.task == task) {
        if gold_by_id.insert(rec.key(), rec).is_some() {
            return Err(EvalError::DuplicateId(rec.key()));
        }
    }
    let mut pred_by_id: HashMap<&str, &str> = HashMap::new();
    for p in preds {
        if !gold_by_id.contains_key(&p.id) {
            return Err(EvalError::UnknownId(p.id.clone()));
        }
        if pred_by_id.insert(&p.id, &p.output).is_some() {
            return Err(EvalError::DuplicateId(p.id.clone()));
        }
    }

    let mut ids: Vec<&String> = gold_by_id.keys().collect();
    ids.sort();
    let mut rows: Vec<SampleRow> = ids
        .par_iter()
        .map(|id| score_sample(gold_by_id[*id], pred_by_id.get(id.as_str()).copied(), mode, scorer))
        .collect::<Result<_, _>>()?;
    rows.sort_by(|a, b| a.id.cmp(&b.id));

    let iou_rows: Vec<(&str, f64)> = rows.iter().filter_map(|r| r.iou.map(|v| (r.class.as_str(), v))).collect();
    let summary = aggregate_iou(&iou_rows);
    let texts: Vec<f64> = rows.iter().filter_map(|r| r.text_score).collect();
    let mean_text_score = (!texts.is_empty()).then(|| texts.iter().sum::<f64>() / texts.len() as f64);

    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        task,
        mode,
        scorer: scorer.name().to_string(),
        n: rows.len(),
        parse_failures: rows.iter().filter(|r| !r.parsed).count(),
        missing_predictions: rows.iter().filter(|r| r.missing).count(),
        salvaged: rows.iter().filter(|r| r.salvaged).count(),
        micro_iou: summary.as_ref().map(|s| s.micro),
        macro_iou: summary.as_ref().map(|s| s.macro_),
        per_class_iou: summary.map(|s| s.per_class).unwrap_or_default(),
        mean_text_score,
        rows,
    })
}
