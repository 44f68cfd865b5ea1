//! Hierarchical seeded sampling: source, then AGRG subtask, then category,
//! then a record uniformly within the category, with replacement.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::record::{AnnotationRecord, Task, TaskFamily};

use super::{CurriculumError, CurriculumState};

/// Record indices of one source, grouped by AGRG subtask (`None` for other
/// families) and category.
#[derive(Debug, Clone)]
pub struct SourcePool {
    pub family: TaskFamily,
    groups: BTreeMap<Option<Task>, BTreeMap<String, Vec<usize>>>,
}

impl SourcePool {
    pub fn size(&self) -> usize {
        self.groups.values().flat_map(|g| g.values()).map(Vec::len).sum()
    }

    pub fn groups(&self) -> impl Iterator<Item = (Option<Task>, &BTreeMap<String, Vec<usize>>)> {
        self.groups.iter().map(|(k, v)| (*k, v))
    }
}

/// Records indexed by source, subtask and category.
#[derive(Debug, Clone)]
pub struct Pool<'a> {
    records: &'a [AnnotationRecord],
    sources: BTreeMap<String, SourcePool>,
}

impl<'a> Pool<'a> {
    pub fn new(records: &'a [AnnotationRecord]) -> Self {
        let mut sources: BTreeMap<String, SourcePool> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            let family = r.task.family();
            let sp = sources.entry(r.source_id.clone()).or_insert_with(|| SourcePool { family, groups: BTreeMap::new() });
            let subtask = (sp.family == TaskFamily::Agrg).then_some(r.task);
            sp.groups.entry(subtask).or_default().entry(r.category.clone()).or_default().push(i);
        }
        Pool { records, sources }
    }

    pub fn records(&self) -> &'a [AnnotationRecord] {
        self.records
    }

    pub fn sources(&self) -> impl Iterator<Item = (&String, &SourcePool)> {
        self.sources.iter()
    }

    pub fn source(&self, name: &str) -> Option<&SourcePool> {
        self.sources.get(name)
    }
}

struct GroupSampler<'p> {
    subtask: Option<Task>,
    categories: Vec<&'p str>,
    leaves: Vec<&'p [usize]>,
    dist: WeightedIndex<f64>,
}

struct SourceSampler<'p> {
    name: &'p str,
    groups: Vec<GroupSampler<'p>>,
}

/// One draw: the record index and the cell it came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Drawn<'p> {
    pub index: usize,
    pub source: &'p str,
    pub subtask: Option<Task>,
    pub category: &'p str,
}

/// Precomputed hierarchical sampler for one stage's distributions.
pub struct Sampler<'p> {
    inter: Option<WeightedIndex<f64>>,
    sources: Vec<SourceSampler<'p>>,
}

fn weighted(ps: &[f64]) -> Option<WeightedIndex<f64>> {
    WeightedIndex::new(ps.iter().copied()).ok()
}

impl<'p> Sampler<'p> {
    /// Checks that every positive-probability cell has records.
    pub fn new(state: &'p CurriculumState, pool: &'p Pool<'_>) -> Result<Self, CurriculumError> {
        let empty = |source: &str, category: &str| CurriculumError::EmptyLeaf { source_id: source.into(), category: category.into() };
        let mut sources = Vec::with_capacity(state.sources.len());
        for s in &state.sources {
            let sp = pool.source(&s.source);
            let mut groups = Vec::new();
            for g in &s.intra {
                let cells = sp.and_then(|sp| sp.groups.get(&g.subtask));
                let mut leaves = Vec::with_capacity(g.categories.len());
                for c in &g.categories {
                    let leaf = cells.and_then(|m| m.get(&c.category)).map(Vec::as_slice).unwrap_or(&[]);
                    if leaf.is_empty() && c.prob > 0.0 {
                        return Err(empty(&s.source, &c.category));
                    }
                    leaves.push(leaf);
                }
                let probs: Vec<f64> = g.categories.iter().map(|c| c.prob).collect();
                if let Some(dist) = weighted(&probs) {
                    groups.push(GroupSampler {
                        subtask: g.subtask,
                        categories: g.categories.iter().map(|c| c.category.as_str()).collect(),
                        leaves,
                        dist,
                    });
                }
            }
            if groups.is_empty() && s.prob > 0.0 {
                return Err(empty(&s.source, "*"));
            }
            sources.push(SourceSampler { name: &s.source, groups });
        }
        let probs: Vec<f64> = state.sources.iter().map(|s| s.prob).collect();
        Ok(Sampler { inter: weighted(&probs), sources })
    }

    /// `None` only when the state has no source with positive probability.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Drawn<'p>> {
        let s = &self.sources[self.inter.as_ref()?.sample(rng)];
        // AGRG subtasks are chosen uniformly; other families have one group
        let g = &s.groups[rng.random_range(0..s.groups.len())];
        let c = g.dist.sample(rng);
        let leaf = g.leaves[c];
        Some(Drawn { index: leaf[rng.random_range(0..leaf.len())], source: s.name, subtask: g.subtask, category: g.categories[c] })
    }
}

/// Single hierarchical draw.
pub fn draw_sample<'a, R: Rng + ?Sized>(state: &CurriculumState, pool: &Pool<'a>, rng: &mut R) -> Result<&'a AnnotationRecord, CurriculumError> {
    let sampler = Sampler::new(state, pool)?;
    let d = sampler.draw(rng).ok_or_else(|| CurriculumError::EmptyLeaf { source_id: "*".into(), category: "*".into() })?;
    Ok(&pool.records()[d.index])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbox::NormBox;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pg(source: &str, category: &str, i: usize) -> AnnotationRecord {
        AnnotationRecord::new(format!("{source}/{category}/{i}"), source, Task::Pg, category)
            .with_text(category)
            .with_boxes(vec![NormBox::new(0.5, 0.5, 0.2, 0.2).unwrap()])
    }

    #[test]
    fn single_cell_always_same_record() {
        let recs = vec![pg("s", "a", 0)];
        let pool = Pool::new(&recs);
        let state = CurriculumState::initial(&pool);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            assert_eq!(draw_sample(&state, &pool, &mut rng).unwrap(), &recs[0]);
        }
    }

    #[test]
    fn reproducible_sequences() {
        let recs: Vec<_> = (0..50).map(|i| pg(if i % 2 == 0 { "s1" } else { "s2" }, ["a", "b", "c"][i % 3], i)).collect();
        let pool = Pool::new(&recs);
        let state = CurriculumState::initial(&pool);
        let sampler = Sampler::new(&state, &pool).unwrap();
        let seq = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100).map(|_| sampler.draw(&mut rng).unwrap().index).collect::<Vec<_>>()
        };
        assert_eq!(seq(7), seq(7));
        assert_ne!(seq(7), seq(8));
    }

    #[test]
    fn empirical_frequencies_match() {
        let recs = vec![pg("s1", "a", 0), pg("s2", "a", 1)];
        let pool = Pool::new(&recs);
        let mut state = CurriculumState::initial(&pool);
        state.sources[0].prob = 0.75;
        state.sources[1].prob = 0.25;
        let sampler = Sampler::new(&state, &pool).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100_000;
        let first = (0..n).filter(|_| sampler.draw(&mut rng).unwrap().source == "s1").count() as f64 / n as f64;
        let l1 = (first - 0.75).abs() + ((1.0 - first) - 0.25).abs();
        assert!(l1 < 0.01, "L1 = {l1}");
    }

    #[test]
    fn agrg_subtasks_are_separate_groups() {
        let b = NormBox::new(0.5, 0.5, 0.2, 0.2).unwrap();
        let recs = vec![
            AnnotationRecord::new("i", "cig-agrg", Task::AgrgLocate, "spine").with_boxes(vec![b]),
            AnnotationRecord::new("i", "cig-agrg", Task::AgrgDescribe, "spine").with_text("Normal."),
            AnnotationRecord::new("i", "cig-agrg", Task::AgrgDescribe, "abdomen").with_text("Normal."),
        ];
        let pool = Pool::new(&recs);
        let state = CurriculumState::initial(&pool);
        let intra = &state.sources[0].intra;
        assert_eq!(intra.len(), 2);
        assert_eq!(intra[0].subtask, Some(Task::AgrgLocate));
        assert_eq!(intra[1].categories.len(), 2);
        state.check().unwrap();
    }

    #[test]
    fn empty_leaf_is_reported() {
        let recs = vec![pg("s", "a", 0)];
        let pool = Pool::new(&recs);
        let mut state = CurriculumState::initial(&pool);
        state.sources[0].intra[0].categories[0].category = "zzz".into();
        assert_eq!(
            Sampler::new(&state, &pool).err(),
            Some(CurriculumError::EmptyLeaf { source_id: "s".into(), category: "zzz".into() })
        );
    }
}
