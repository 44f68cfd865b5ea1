//! Stage loop: warm-up, then cyclic train / evaluate / re-weight.

use std::collections::BTreeMap;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{agent, post_json};
use crate::io::derive_seed;
use crate::record::{AnnotationRecord, Task};

use super::{advance_stage, CurriculumConfig, CurriculumError, CurriculumState, MetricPair, Pool, Sampler, SourceMetrics};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct LearnerError(pub String);

/// The model side of the loop: consumes training samples and reports
/// metrics on evaluation subsets.
pub trait Learner {
    fn train(&mut self, batch: &[&AnnotationRecord]) -> Result<(), LearnerError>;
    fn evaluate(&mut self, source: &str, subset: &[&AnnotationRecord]) -> Result<SourceMetrics, LearnerError>;
}

/// `e0·exp(−k·n) + floor`.
pub fn simulated_error(e0: f64, k: f64, n: u64, floor: f64) -> f64 {
    e0 * (-k * n as f64).exp() + floor
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryParams {
    pub e0: f64,
    pub k: f64,
    pub floor: f64,
}

/// Deterministic learner whose per-category error decays with the number of
/// training samples of that category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedLearner {
    pub default: CategoryParams,
    /// Overrides keyed by category name.
    #[serde(default)]
    pub categories: BTreeMap<String, CategoryParams>,
    #[serde(skip)]
    seen: BTreeMap<(String, String), u64>,
}

impl SimulatedLearner {
    pub fn new(default: CategoryParams, categories: BTreeMap<String, CategoryParams>) -> Self {
        SimulatedLearner { default, categories, seen: BTreeMap::new() }
    }

    pub fn seen(&self, source: &str, category: &str) -> u64 {
        self.seen.get(&(source.to_string(), category.to_string())).copied().unwrap_or(0)
    }

    pub fn error(&self, source: &str, category: &str) -> f64 {
        let p = self.categories.get(category).unwrap_or(&self.default);
        simulated_error(p.e0, p.k, self.seen(source, category), p.floor).clamp(0.0, 1.0)
    }
}

#[derive(Default)]
struct Mean {
    iou: (f64, usize),
    text: (f64, usize),
}

impl Mean {
    fn add(&mut self, task: Task, v: f64) {
        if task.has_boxes() {
            self.iou.0 += v;
            self.iou.1 += 1;
        }
        if task.has_text() {
            self.text.0 += v;
            self.text.1 += 1;
        }
    }

    fn pair(&self) -> MetricPair {
        let m = |(s, n): (f64, usize)| (n > 0).then(|| s / n as f64);
        MetricPair { iou: m(self.iou), text_score: m(self.text) }
    }
}

impl Learner for SimulatedLearner {
    fn train(&mut self, batch: &[&AnnotationRecord]) -> Result<(), LearnerError> {
        for r in batch {
            *self.seen.entry((r.source_id.clone(), r.category.clone())).or_default() += 1;
        }
        Ok(())
    }

    fn evaluate(&mut self, source: &str, subset: &[&AnnotationRecord]) -> Result<SourceMetrics, LearnerError> {
        let mut overall = Mean::default();
        let mut per_cat: BTreeMap<String, Mean> = BTreeMap::new();
        let mut per_sub: BTreeMap<Task, BTreeMap<String, Mean>> = BTreeMap::new();
        for r in subset {
            let score = 1.0 - self.error(source, &r.category);
            overall.add(r.task, score);
            per_cat.entry(r.category.clone()).or_default().add(r.task, score);
            if r.task.family() == crate::record::TaskFamily::Agrg {
                per_sub.entry(r.task).or_default().entry(r.category.clone()).or_default().add(r.task, score);
            }
        }
        let o = overall.pair();
        Ok(SourceMetrics {
            source: source.to_string(),
            iou: o.iou,
            text_score: o.text_score,
            per_category: per_cat.into_iter().map(|(k, m)| (k, m.pair())).collect(),
            per_subtask: per_sub.into_iter().map(|(t, cats)| (t, cats.into_iter().map(|(k, m)| (k, m.pair())).collect())).collect(),
        })
    }
}

/// Remote learner: `POST {base}/train` with `{"records": [...]}` and
/// `POST {base}/evaluate` with `{"source": ..., "records": [...]}`, the latter
/// answering with a [`SourceMetrics`] object.
pub struct HttpLearner {
    base_url: String,
    agent: ureq::Agent,
}

impl HttpLearner {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Self {
        HttpLearner { base_url: base_url.into().trim_end_matches('/').to_string(), agent: agent(timeout) }
    }

    fn call(&self, path: &str, body: serde_json::Value) -> Result<String, LearnerError> {
        let url = format!("{}/{path}", self.base_url);
        post_json(&self.agent, &url, &[], &body.to_string()).map_err(|e| LearnerError(format!("{url}: {e}")))
    }
}

impl Learner for HttpLearner {
    fn train(&mut self, batch: &[&AnnotationRecord]) -> Result<(), LearnerError> {
        self.call("train", serde_json::json!({ "records": batch })).map(|_| ())
    }

    fn evaluate(&mut self, source: &str, subset: &[&AnnotationRecord]) -> Result<SourceMetrics, LearnerError> {
        let text = self.call("evaluate", serde_json::json!({ "source": source, "records": subset }))?;
        serde_json::from_str(&text).map_err(|e| LearnerError(format!("malformed metrics: {e}")))
    }
}

/// `[start, end)` step ranges: the warm-up stage, then re-weighting stages.
pub fn stage_bounds(cfg: &CurriculumConfig) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    if cfg.total_steps == 0 {
        return out;
    }
    out.push((0, cfg.warmup_steps));
    let mut start = cfg.warmup_steps;
    while start < cfg.total_steps {
        let end = (start + cfg.reweight_interval).min(cfg.total_steps);
        out.push((start, end));
        start = end;
    }
    out
}

/// Up to `n` records stratified by category: proportional quotas with the
/// remainder to the largest fractional parts, then uniform within category.
pub fn stratified_subset<'a, R: Rng + ?Sized>(records: &[&'a AnnotationRecord], n: usize, rng: &mut R) -> Vec<&'a AnnotationRecord> {
    if n >= records.len() {
        return records.to_vec();
    }
    let mut by_cat: BTreeMap<&str, Vec<&'a AnnotationRecord>> = BTreeMap::new();
    for r in records {
        by_cat.entry(&r.category).or_default().push(r);
    }
    let total = records.len();
    let mut quotas: Vec<(usize, usize, &str)> = by_cat.iter().map(|(c, v)| (n * v.len() / total, (n * v.len()) % total, *c)).collect();
    let mut left = n - quotas.iter().map(|q| q.0).sum::<usize>();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| quotas[b].1.cmp(&quotas[a].1).then(a.cmp(&b)));
    for i in order {
        if left == 0 {
            break;
        }
        quotas[i].0 += 1;
        left -= 1;
    }
    let mut out = Vec::with_capacity(n);
    for (q, _, c) in quotas {
        let cands = &by_cat[c];
        let mut idx = rand::seq::index::sample(rng, cands.len(), q).into_vec();
        idx.sort_unstable();
        out.extend(idx.into_iter().map(|i| cands[i]));
    }
    out
}

type CellMap<T> = BTreeMap<String, BTreeMap<String, BTreeMap<String, T>>>;

fn group_key(subtask: Option<Task>) -> String {
    subtask.map_or_else(|| "all".to_string(), |t| t.code().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub stage: usize,
    pub start_step: usize,
    pub end_step: usize,
    pub inter: BTreeMap<String, f64>,
    /// source → subtask (`all` outside AGRG) → category → probability.
    pub intra: CellMap<f64>,
    /// Samples drawn per cell, keyed like `intra`.
    pub samples: CellMap<usize>,
    /// Metrics reported at the end of the stage.
    pub metrics: Vec<SourceMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumLog {
    pub config: CurriculumConfig,
    pub seed: u64,
    pub stages: Vec<StageLog>,
    pub final_state: CurriculumState,
}

fn intra_map(state: &CurriculumState) -> CellMap<f64> {
    state
        .sources
        .iter()
        .map(|s| {
            let groups = s
                .intra
                .iter()
                .map(|g| (group_key(g.subtask), g.categories.iter().map(|c| (c.category.clone(), c.prob)).collect()))
                .collect();
            (s.source.clone(), groups)
        })
        .collect()
}

/// Runs every stage on `train`, evaluating each source on a per-stage
/// stratified subset of `val`. Sources without validation records are not
/// evaluated. Deterministic per seed for a deterministic learner.
pub fn run_curriculum(
    cfg: &CurriculumConfig,
    train: &[AnnotationRecord],
    val: &[AnnotationRecord],
    learner: &mut dyn Learner,
    seed: u64,
) -> Result<CurriculumLog, CurriculumError> {
    cfg.validate()?;
    let pool = Pool::new(train);
    let mut state = CurriculumState::initial(&pool);
    let mut val_by_source: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
    for r in val {
        val_by_source.entry(&r.source_id).or_default().push(r);
    }

    let bounds = stage_bounds(cfg);
    let mut stages = Vec::with_capacity(bounds.len());
    for (stage, &(start, end)) in bounds.iter().enumerate() {
        let learner_err = |e: LearnerError| CurriculumError::Learner { stage, source: e };
        let sampler = Sampler::new(&state, &pool)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "train", stage as u64));
        let mut samples: CellMap<usize> = BTreeMap::new();
        let mut batch = Vec::with_capacity((end - start) * cfg.samples_per_step);
        for _ in 0..(end - start) * cfg.samples_per_step {
            let Some(d) = sampler.draw(&mut rng) else { break };
            *samples
                .entry(d.source.to_string())
                .or_default()
                .entry(group_key(d.subtask))
                .or_default()
                .entry(d.category.to_string())
                .or_default() += 1;
            batch.push(&train[d.index]);
        }
        learner.train(&batch).map_err(learner_err)?;

        let mut metrics = Vec::new();
        for s in &state.sources {
            let Some(pool_val) = val_by_source.get(s.source.as_str()) else { continue };
            let mut erng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("eval/{}", s.source), stage as u64));
            let subset = stratified_subset(pool_val, cfg.eval_size(&s.source), &mut erng);
            metrics.push(learner.evaluate(&s.source, &subset).map_err(learner_err)?);
        }
        stages.push(StageLog {
            stage,
            start_step: start,
            end_step: end,
            inter: state.inter(),
            intra: intra_map(&state),
            samples,
            metrics: metrics.clone(),
        });
        if stage + 1 < bounds.len() {
            state = advance_stage(cfg, &state, &metrics)?;
        }
    }
    Ok(CurriculumLog { config: cfg.clone(), seed, stages, final_state: state })
}
