//! Micro/macro IoU aggregation and text scoring.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouSummary {
    /// Mean over samples.
    pub micro: f64,
    /// Mean over classes of per-class means.
    pub macro_: f64,
    pub per_class: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, usize>,
}

/// Micro and macro averages of `(class, iou)` rows; `None` for no rows.
pub fn aggregate_iou<S: AsRef<str>>(rows: &[(S, f64)]) -> Option<IouSummary> {
    if rows.is_empty() {
        return None;
    }
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (class, iou) in rows {
        let e = sums.entry(class.as_ref().to_string()).or_default();
        e.0 += iou;
        e.1 += 1;
    }
    let micro = rows.iter().map(|(_, v)| v).sum::<f64>() / rows.len() as f64;
    let per_class: BTreeMap<String, f64> = sums.iter().map(|(k, (s, n))| (k.clone(), s / *n as f64)).collect();
    let macro_ = per_class.values().sum::<f64>() / per_class.len() as f64;
    Some(IouSummary {
        micro,
        macro_,
        per_class,
        counts: sums.into_iter().map(|(k, (_, n))| (k, n)).collect(),
    })
}

/// Scores a candidate text against a reference in `[0, 1]`.
pub trait TextScorer: Sync {
    fn name(&self) -> &str;
    fn score(&self, candidate: &str, reference: &str) -> f64;
}

/// Deterministic lexical stand-in for a clinical fact-consistency metric.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalFactScorer;

impl TextScorer for LexicalFactScorer {
    fn name(&self) -> &str {
        "lexical-fact-f1"
    }

    fn score(&self, candidate: &str, reference: &str) -> f64 {
        lexical_fact_score(candidate, reference)
    }
}

fn tokens(s: &str) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for t in s.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        *m.entry(t.to_lowercase()).or_insert(0) += 1;
    }
    m
}

/// F1 over multisets of lowercased alphanumeric tokens.
pub fn lexical_fact_score(candidate: &str, reference: &str) -> f64 {
    let c = tokens(candidate);
    let r = tokens(reference);
    let nc: usize = c.values().sum();
    let nr: usize = r.values().sum();
    match (nc, nr) {
        (0, 0) => return 1.0,
        (0, _) | (_, 0) => return 0.0,
        _ => {}
    }
    let common: usize = c.iter().map(|(t, n)| (*n).min(r.get(t).copied().unwrap_or(0))).sum();
    if common == 0 {
        return 0.0;
    }
    let p = common as f64 / nc as f64;
    let rc = common as f64 / nr as f64;
    2.0 * p * rc / (p + rc)
}
