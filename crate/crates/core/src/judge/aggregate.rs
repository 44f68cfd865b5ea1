//! Per-anatomy hallucination and NLI rates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::verdict::{JudgeVerdict, NliStatus};

pub const MEAN_ROW: &str = "Mean Anatomies";

/// Rates are percentages of `n`, the number of valid verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnatomyStats {
    pub anatomy: String,
    pub n: usize,
    pub abn_halluc_rate: f64,
    pub abn_correct_rate: f64,
    pub dev_halluc_rate: f64,
    pub dev_correct_rate: f64,
    pub contradiction_rate: f64,
    pub entailment_rate: f64,
    pub neutral_rate: f64,
}

/// Rows sorted by anatomy, the unweighted mean row, and the number of
/// unusable verdicts per anatomy (excluded from every denominator).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeTable {
    pub anatomies: Vec<AnatomyStats>,
    /// `None` when no anatomy has a valid verdict.
    pub mean: Option<AnatomyStats>,
    pub verdict_failures: BTreeMap<String, usize>,
}

#[derive(Default)]
struct Counts {
    n: usize,
    abn_halluc: usize,
    abn_correct: usize,
    dev_halluc: usize,
    dev_correct: usize,
    contradiction: usize,
    entailment: usize,
    neutral: usize,
}

impl Counts {
    fn add(&mut self, v: &JudgeVerdict) {
        self.n += 1;
        self.abn_halluc += v.gen_has_hallucinated_abnormalities.is_yes() as usize;
        self.abn_correct += v.gen_has_correct_abnormalities.is_yes() as usize;
        self.dev_halluc += v.gen_has_hallucinated_devices.is_yes() as usize;
        self.dev_correct += v.gen_has_correct_devices.is_yes() as usize;
        match v.nli_status {
            NliStatus::Contradiction => self.contradiction += 1,
            NliStatus::Entailment => self.entailment += 1,
            NliStatus::Neutral => self.neutral += 1,
        }
    }

    fn stats(&self, anatomy: &str) -> AnatomyStats {
        let pct = |c: usize| 100.0 * c as f64 / self.n as f64;
        AnatomyStats {
            anatomy: anatomy.to_string(),
            n: self.n,
            abn_halluc_rate: pct(self.abn_halluc),
            abn_correct_rate: pct(self.abn_correct),
            dev_halluc_rate: pct(self.dev_halluc),
            dev_correct_rate: pct(self.dev_correct),
            contradiction_rate: pct(self.contradiction),
            entailment_rate: pct(self.entailment),
            neutral_rate: pct(self.neutral),
        }
    }
}

/// Unweighted mean of the rows; `n` is their total.
pub fn mean_row(rows: &[AnatomyStats]) -> Option<AnatomyStats> {
    if rows.is_empty() {
        return None;
    }
    let k = rows.len() as f64;
    let m = |f: fn(&AnatomyStats) -> f64| rows.iter().map(f).sum::<f64>() / k;
    Some(AnatomyStats {
        anatomy: MEAN_ROW.to_string(),
        n: rows.iter().map(|r| r.n).sum(),
        abn_halluc_rate: m(|r| r.abn_halluc_rate),
        abn_correct_rate: m(|r| r.abn_correct_rate),
        dev_halluc_rate: m(|r| r.dev_halluc_rate),
        dev_correct_rate: m(|r| r.dev_correct_rate),
        contradiction_rate: m(|r| r.contradiction_rate),
        entailment_rate: m(|r| r.entailment_rate),
        neutral_rate: m(|r| r.neutral_rate),
    })
}

/// One row per anatomy with at least one valid verdict. `None` verdicts are
/// counted in `verdict_failures` only. Independent of row order.
pub fn aggregate_verdicts<'a, I>(rows: I) -> JudgeTable
where
    I: IntoIterator<Item = (&'a str, Option<&'a JudgeVerdict>)>,
{
    let mut counts: BTreeMap<&str, Counts> = BTreeMap::new();
    let mut verdict_failures: BTreeMap<String, usize> = BTreeMap::new();
    for (anatomy, v) in rows {
        match v {
            Some(v) => counts.entry(anatomy).or_default().add(v),
            None => *verdict_failures.entry(anatomy.to_string()).or_default() += 1,
        }
    }
    let anatomies: Vec<AnatomyStats> = counts.iter().map(|(a, c)| c.stats(a)).collect();
    JudgeTable { mean: mean_row(&anatomies), anatomies, verdict_failures }
}
