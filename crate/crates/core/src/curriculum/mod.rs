//! Error-aware two-level curriculum: per-source weights (inter) and
//! per-category weights within a source (intra), re-estimated at every stage
//! boundary from evaluation metrics.

mod runner;
mod sampler;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::{Task, TaskFamily};

pub use runner::{
    run_curriculum, simulated_error, stage_bounds, stratified_subset, CategoryParams, CurriculumLog, HttpLearner, Learner,
    LearnerError, SimulatedLearner, StageLog,
};
pub use sampler::{draw_sample, Pool, Sampler};

/// Sum-to-one tolerance of every emitted distribution.
pub const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Natural,
    Uniform,
    Curriculum,
}

/// Which distribution is being built. Intra carries the source's family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Inter,
    Intra(TaskFamily),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurriculumError {
    #[error("metric entry has neither IoU nor text score")]
    NoMetrics,
    #[error("curriculum strategy lacks metrics for {0}")]
    MissingMetrics(String),
    #[error("no records for positive-probability cell {source_id}/{category}")]
    EmptyLeaf { source_id: String, category: String },
    #[error("invalid curriculum config: {0}")]
    InvalidConfig(String),
    #[error("stage {stage}: learner failed: {source}")]
    Learner { stage: usize, source: LearnerError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurriculumConfig {
    pub alpha: f64,
    pub warmup_steps: usize,
    pub reweight_interval: usize,
    pub total_steps: usize,
    pub samples_per_step: usize,
    pub inter_strategy: Strategy,
    pub intra_strategy: Strategy,
    /// Evaluation subset size per source id.
    pub eval_subset_sizes: BTreeMap<String, usize>,
    /// Size for sources missing from `eval_subset_sizes`.
    pub default_eval_size: usize,
    /// Floor mixed into every curriculum distribution: `p' = (1 - K·m)·p + m`.
    pub min_prob: f64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig {
            alpha: 0.8,
            warmup_steps: 3000,
            reweight_interval: 3000,
            total_steps: 6000,
            samples_per_step: 1,
            inter_strategy: Strategy::Curriculum,
            intra_strategy: Strategy::Curriculum,
            eval_subset_sizes: [
                ("chest-imagenome-agrg".to_string(), 200),
                ("padchest-gr-pg".to_string(), 150),
                ("padchest-gr-grg".to_string(), 150),
                ("ms-cxr-pg".to_string(), 100),
            ]
            .into(),
            default_eval_size: 100,
            min_prob: 0.0,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<(), CurriculumError> {
        let bad = |m: &str| Err(CurriculumError::InvalidConfig(m.into()));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if self.warmup_steps > self.total_steps {
            return bad("warmup_steps exceeds total_steps");
        }
        if self.warmup_steps == 0 && self.total_steps > 0 {
            return bad("warmup_steps must be positive");
        }
        if self.reweight_interval == 0 && self.total_steps > self.warmup_steps {
            return bad("reweight_interval must be positive");
        }
        if !(0.0..=1.0).contains(&self.min_prob) {
            return bad("min_prob must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn eval_size(&self, source: &str) -> usize {
        self.eval_subset_sizes.get(source).copied().unwrap_or(self.default_eval_size)
    }
}

/// IoU and text score of one evaluation unit; either may be undefined.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricPair {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iou: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_score: Option<f64>,
}

impl MetricPair {
    pub fn iou(v: f64) -> Self {
        MetricPair { iou: Some(v), text_score: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SourceMetrics {
    pub source: String,
    #[serde(default)]
    pub iou: Option<f64>,
    #[serde(default)]
    pub text_score: Option<f64>,
    #[serde(default)]
    pub per_category: BTreeMap<String, MetricPair>,
    /// AGRG only: per-category metrics of each subtask.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_subtask: BTreeMap<Task, BTreeMap<String, MetricPair>>,
}

impl SourceMetrics {
    pub fn overall(&self) -> MetricPair {
        MetricPair { iou: self.iou, text_score: self.text_score }
    }
}

/// `α·IoU + (1−α)·text`; a single defined metric is used alone.
pub fn aggregate_score(m: &MetricPair, alpha: f64) -> Result<f64, CurriculumError> {
    match (m.iou, m.text_score) {
        (Some(i), Some(t)) => Ok(alpha * i + (1.0 - alpha) * t),
        (Some(v), None) | (None, Some(v)) => Ok(v),
        (None, None) => Err(CurriculumError::NoMetrics),
    }
}

fn uniform(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

/// `p_i = e_i / Σe`; uniform when all errors are equal, including all zero.
pub fn normalize_errors(errors: &[f64]) -> Vec<f64> {
    if errors.is_empty() {
        return Vec::new();
    }
    if errors.iter().all(|&e| e == errors[0]) {
        return uniform(errors.len());
    }
    let total: f64 = errors.iter().sum();
    errors.iter().map(|e| e / total).collect()
}

/// Distribution over `K = sizes.len()` items. `errors` is required by the
/// curriculum strategy only. GRG intra distributions are always uniform.
pub fn build_distribution(level: Level, strategy: Strategy, sizes: &[usize], errors: Option<&[f64]>) -> Result<Vec<f64>, CurriculumError> {
    let k = sizes.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    if level == Level::Intra(TaskFamily::Grg) {
        return Ok(uniform(k));
    }
    Ok(match strategy {
        Strategy::Uniform => uniform(k),
        Strategy::Natural => {
            let total: usize = sizes.iter().sum();
            if total == 0 {
                uniform(k)
            } else {
                sizes.iter().map(|&s| s as f64 / total as f64).collect()
            }
        }
        Strategy::Curriculum => {
            let e = errors.ok_or_else(|| CurriculumError::MissingMetrics(format!("{level:?} distribution")))?;
            if e.len() != k {
                return Err(CurriculumError::MissingMetrics(format!("{level:?}: {} errors for {k} items", e.len())));
            }
            normalize_errors(e)
        }
    })
}

/// Mixes a floor into `p`; `K·m ≥ 1` degenerates to uniform.
fn with_floor(p: Vec<f64>, m: f64) -> Vec<f64> {
    let k = p.len() as f64;
    if m <= 0.0 || p.is_empty() {
        return p;
    }
    if k * m >= 1.0 {
        return uniform(p.len());
    }
    p.into_iter().map(|v| (1.0 - k * m) * v + m).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryState {
    pub category: String,
    pub size: usize,
    pub error: Option<f64>,
    pub prob: f64,
}

/// Category distribution of one source, or of one AGRG subtask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntraState {
    pub subtask: Option<Task>,
    pub categories: Vec<CategoryState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceState {
    pub source: String,
    pub family: TaskFamily,
    pub size: usize,
    pub score: Option<f64>,
    pub error: Option<f64>,
    pub prob: f64,
    pub intra: Vec<IntraState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub stage_index: usize,
    pub sources: Vec<SourceState>,
}

impl CurriculumState {
    /// Stage 0: uniform at both levels over the pool's sources and categories.
    pub fn initial(pool: &Pool) -> Self {
        let sources: Vec<SourceState> = pool
            .sources()
            .map(|(name, sp)| {
                let intra: Vec<IntraState> = sp
                    .groups()
                    .map(|(subtask, cats)| {
                        let p = uniform(cats.len());
                        IntraState {
                            subtask,
                            categories: cats
                                .iter()
                                .zip(p)
                                .map(|((c, idx), prob)| CategoryState { category: c.clone(), size: idx.len(), error: None, prob })
                                .collect(),
                        }
                    })
                    .collect();
                SourceState { source: name.clone(), family: sp.family, size: sp.size(), score: None, error: None, prob: 0.0, intra }
            })
            .collect();
        let p = uniform(sources.len());
        CurriculumState {
            stage_index: 0,
            sources: sources.into_iter().zip(p).map(|(s, prob)| SourceState { prob, ..s }).collect(),
        }
    }

    pub fn inter(&self) -> BTreeMap<String, f64> {
        self.sources.iter().map(|s| (s.source.clone(), s.prob)).collect()
    }

    pub fn source(&self, name: &str) -> Option<&SourceState> {
        self.sources.iter().find(|s| s.source == name)
    }

    /// Checks normalization of every distribution.
    pub fn check(&self) -> Result<(), String> {
        let check = |ps: Vec<f64>, what: &str| {
            let total: f64 = ps.iter().sum();
            if ps.iter().any(|&p| !(p >= 0.0)) || (!ps.is_empty() && (total - 1.0).abs() > PROB_TOL) {
                return Err(format!("{what} sums to {total}"));
            }
            Ok(())
        };
        check(self.sources.iter().map(|s| s.prob).collect(), "inter distribution")?;
        for s in &self.sources {
            for g in &s.intra {
                check(g.categories.iter().map(|c| c.prob).collect(), &format!("intra distribution of {}", s.source))?;
            }
        }
        Ok(())
    }
}

fn intra_metrics<'a>(m: &'a SourceMetrics, subtask: Option<Task>) -> &'a BTreeMap<String, MetricPair> {
    subtask.and_then(|t| m.per_subtask.get(&t)).filter(|c| !c.is_empty()).unwrap_or(&m.per_category)
}

/// Per-category errors of one group; unevaluated categories take the mean
/// error of the evaluated ones.
fn category_errors(g: &IntraState, metrics: &BTreeMap<String, MetricPair>, alpha: f64, source: &str) -> Result<Vec<Option<f64>>, CurriculumError> {
    let mut errs = Vec::with_capacity(g.categories.len());
    for c in &g.categories {
        errs.push(match metrics.get(&c.category) {
            Some(m) => Some(1.0 - aggregate_score(m, alpha)?),
            None => None,
        });
    }
    let known: Vec<f64> = errs.iter().flatten().copied().collect();
    if known.is_empty() {
        return Err(CurriculumError::MissingMetrics(format!("categories of {source}")));
    }
    Ok(errs)
}

/// Re-weights `state` from `metrics` for the next stage.
pub fn advance_stage(cfg: &CurriculumConfig, state: &CurriculumState, metrics: &[SourceMetrics]) -> Result<CurriculumState, CurriculumError> {
    let by_source: BTreeMap<&str, &SourceMetrics> = metrics.iter().map(|m| (m.source.as_str(), m)).collect();
    let mut next = state.clone();
    next.stage_index += 1;

    for s in next.sources.iter_mut() {
        s.score = by_source.get(s.source.as_str()).map(|m| aggregate_score(&m.overall(), cfg.alpha)).transpose()?;
        s.error = s.score.map(|v| 1.0 - v);
    }
    let sizes: Vec<usize> = next.sources.iter().map(|s| s.size).collect();
    let inter_errors: Option<Vec<f64>> = match cfg.inter_strategy {
        Strategy::Curriculum => Some(
            next.sources
                .iter()
                .map(|s| s.error.ok_or_else(|| CurriculumError::MissingMetrics(s.source.clone())))
                .collect::<Result<_, _>>()?,
        ),
        _ => None,
    };
    let mut p = build_distribution(Level::Inter, cfg.inter_strategy, &sizes, inter_errors.as_deref())?;
    if cfg.inter_strategy == Strategy::Curriculum {
        p = with_floor(p, cfg.min_prob);
    }
    for (s, prob) in next.sources.iter_mut().zip(p) {
        s.prob = prob;
    }

    for s in next.sources.iter_mut() {
        let level = Level::Intra(s.family);
        let curriculum = cfg.intra_strategy == Strategy::Curriculum && s.family != TaskFamily::Grg;
        for g in s.intra.iter_mut() {
            let sizes: Vec<usize> = g.categories.iter().map(|c| c.size).collect();
            let errors = if curriculum {
                let m = by_source.get(s.source.as_str()).ok_or_else(|| CurriculumError::MissingMetrics(s.source.clone()))?;
                let errs = category_errors(g, intra_metrics(m, g.subtask), cfg.alpha, &s.source)?;
                let known: Vec<f64> = errs.iter().flatten().copied().collect();
                let fill = known.iter().sum::<f64>() / known.len() as f64;
                for (c, e) in g.categories.iter_mut().zip(&errs) {
                    c.error = *e;
                }
                Some(errs.into_iter().map(|e| e.unwrap_or(fill)).collect::<Vec<f64>>())
            } else {
                None
            };
            let mut p = build_distribution(level, cfg.intra_strategy, &sizes, errors.as_deref())?;
            if curriculum {
                p = with_floor(p, cfg.min_prob);
            }
            for (c, prob) in g.categories.iter_mut().zip(p) {
                c.prob = prob;
            }
        }
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use super::Strategy;
    use proptest::prelude::*;

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_score(&MetricPair { iou: Some(1.0), text_score: Some(1.0) }, 0.8).unwrap(), 1.0);
        assert_abs_diff_eq!(aggregate_score(&MetricPair { iou: Some(0.5), text_score: Some(0.25) }, 0.8).unwrap(), 0.45, epsilon = 1e-15);
        assert_eq!(aggregate_score(&MetricPair::iou(0.6), 0.8).unwrap(), 0.6);
        assert_eq!(aggregate_score(&MetricPair { iou: None, text_score: Some(0.3) }, 0.8).unwrap(), 0.3);
        assert_eq!(aggregate_score(&MetricPair::default(), 0.8), Err(CurriculumError::NoMetrics));
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_errors(&[0.2, 0.2]), vec![0.5, 0.5]);
        let p = normalize_errors(&[0.3, 0.1]);
        assert_abs_diff_eq!(p[0], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.25, epsilon = 1e-15);
        assert_eq!(normalize_errors(&[0.0, 0.0, 0.0]), vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn distribution_examples() {
        let p = build_distribution(Level::Inter, Strategy::Natural, &[815, 3185], None).unwrap();
        assert_abs_diff_eq!(p[0], 0.20375, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.79625, epsilon = 1e-15);
        assert_eq!(build_distribution(Level::Inter, Strategy::Uniform, &[1, 2, 3, 4], None).unwrap(), vec![0.25; 4]);
        let p = build_distribution(Level::Inter, Strategy::Curriculum, &[1, 1], Some(&[0.1, 0.5])).unwrap();
        assert_abs_diff_eq!(p[0], 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 5.0 / 6.0, epsilon = 1e-15);
        assert!(matches!(
            build_distribution(Level::Inter, Strategy::Curriculum, &[1, 1], None),
            Err(CurriculumError::MissingMetrics(_))
        ));
        let grg = build_distribution(Level::Intra(TaskFamily::Grg), Strategy::Curriculum, &[1, 9], Some(&[0.9, 0.1])).unwrap();
        assert_eq!(grg, vec![0.5, 0.5]);
    }

    #[test]
    fn floor_mixing() {
        let p = with_floor(vec![1.0, 0.0], 0.1);
        assert_abs_diff_eq!(p[0], 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.1, epsilon = 1e-15);
        assert_eq!(with_floor(vec![1.0, 0.0], 0.0), vec![1.0, 0.0]);
        assert_eq!(with_floor(vec![1.0, 0.0], 0.6), vec![0.5, 0.5]);
    }

    #[test]
    fn config_validation() {
        assert!(CurriculumConfig::default().validate().is_ok());
        assert!(CurriculumConfig { alpha: 1.5, ..Default::default() }.validate().is_err());
        assert!(CurriculumConfig { warmup_steps: 7000, ..Default::default() }.validate().is_err());
        let c: CurriculumConfig = serde_json::from_str(r#"{"inter_strategy":"natural"}"#).unwrap();
        assert_eq!((c.inter_strategy, c.alpha, c.eval_size("ms-cxr-pg"), c.eval_size("x")), (Strategy::Natural, 0.8, 100, 100));
        assert_eq!(c.eval_size("chest-imagenome-agrg"), 200);
    }

    fn sum(p: &[f64]) -> f64 {
        p.iter().sum()
    }

    proptest! {
        #[test]
        fn distributions_are_normalized(errors in prop::collection::vec(0.0f64..1.0, 1..12), sizes in prop::collection::vec(0usize..5000, 1..12)) {
            let p = normalize_errors(&errors);
            prop_assert!((sum(&p) - 1.0).abs() <= PROB_TOL && p.iter().all(|&v| v >= 0.0));
            let q = build_distribution(Level::Inter, Strategy::Natural, &sizes, None).unwrap();
            prop_assert!((sum(&q) - 1.0).abs() <= PROB_TOL && q.iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn strict_argmax_error_gets_strict_argmax_prob(errors in prop::collection::vec(0.0f64..1.0, 2..12)) {
            let max = errors.iter().cloned().fold(f64::MIN, f64::max);
            prop_assume!(errors.iter().filter(|&&e| e == max).count() == 1);
            let p = normalize_errors(&errors);
            let i = errors.iter().position(|&e| e == max).unwrap();
            prop_assert!(p.iter().enumerate().all(|(j, &v)| j == i || v < p[i]));
        }

        #[test]
        fn strategy_reductions(e in 0.0f64..1.0, n in 1usize..100_000, k in 1usize..40) {
            let uni = build_distribution(Level::Inter, Strategy::Uniform, &vec![n; k], None).unwrap();
            prop_assert_eq!(&build_distribution(Level::Inter, Strategy::Natural, &vec![n; k], None).unwrap(), &uni);
            prop_assert_eq!(&build_distribution(Level::Inter, Strategy::Curriculum, &vec![n; k], Some(&vec![e; k])).unwrap(), &uni);
        }
    }
}
