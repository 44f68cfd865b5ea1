//! Stratified AGRG benchmark subset: a findings partition balanced over
//! (location, abnormality, device) and a text-free partition balanced over
//! locations.

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::{AnnotationRecord, Task, TaskFamily};
use crate::taskgen::is_empty_description;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Stratum {
    pub location: String,
    pub has_abnormality: bool,
    pub has_device: bool,
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/abnormal={}/device={}", self.location, self.has_abnormality, self.has_device)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkSubsetSpec {
    pub n_with_findings: usize,
    pub n_without: usize,
    /// Strata of the findings partition; derived from the pool when empty.
    #[serde(default)]
    pub strata: Vec<Stratum>,
}

impl BenchmarkSubsetSpec {
    pub fn total(&self) -> usize {
        self.n_with_findings + self.n_without
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumShortfall {
    /// A [`Stratum`] for the findings partition, a bare location otherwise.
    pub stratum: String,
    pub available: usize,
    pub requested: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubsetError {
    #[error("insufficient pool: {}", .0.iter().map(|s| format!("{} has {} of {}", s.stratum, s.available, s.requested)).collect::<Vec<_>>().join("; "))]
    InsufficientStratum(Vec<StratumShortfall>),
    #[error("no strata to allocate {0} records over")]
    NoStrata(usize),
}

struct Group<'a> {
    rep: &'a AnnotationRecord,
    has_findings: bool,
}

fn rank(task: Task) -> u8 {
    match task {
        Task::AgrgBoth => 0,
        Task::AgrgDescribe => 1,
        _ => 2,
    }
}

/// One group per (image, location); the representative is the most complete
/// record of the group.
fn group_pool(pool: &[AnnotationRecord]) -> Vec<Group<'_>> {
    let mut groups: BTreeMap<(&str, &str), Vec<&AnnotationRecord>> = BTreeMap::new();
    for r in pool.iter().filter(|r| r.task.family() == TaskFamily::Agrg) {
        groups.entry((r.image_id.as_str(), r.category.as_str())).or_default().push(r);
    }
    groups
        .into_values()
        .map(|recs| {
            let has_findings = recs.iter().any(|r| r.text.as_deref().is_some_and(|t| !is_empty_description(t)));
            let rep = *recs.iter().min_by_key(|r| rank(r.task)).expect("groups are non-empty");
            Group { rep, has_findings }
        })
        .collect()
}

fn stratum_of(r: &AnnotationRecord) -> Stratum {
    Stratum {
        location: r.category.clone(),
        has_abnormality: r.has_abnormality.unwrap_or(false),
        has_device: r.has_device.unwrap_or(false),
    }
}

/// Splits `n` over `k` buckets as evenly as possible, earlier buckets first.
fn even_allocation(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
}

fn allocate<'a, K: Ord + Clone + fmt::Display>(
    keys: &[K],
    n: usize,
    buckets: &BTreeMap<K, Vec<&'a AnnotationRecord>>,
    rng: &mut ChaCha8Rng,
    shortfalls: &mut Vec<StratumShortfall>,
) -> Vec<&'a AnnotationRecord> {
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    for (key, want) in keys.iter().zip(even_allocation(n, keys.len())) {
        let cands = buckets.get(key).map(Vec::as_slice).unwrap_or(&[]);
        if cands.len() < want {
            shortfalls.push(StratumShortfall { stratum: key.to_string(), available: cands.len(), requested: want });
            continue;
        }
        let mut idx = rand::seq::index::sample(rng, cands.len(), want).into_vec();
        idx.sort_unstable();
        out.extend(idx.into_iter().map(|i| cands[i]));
    }
    out
}

/// Draws the benchmark subset from AGRG records carrying abnormality and
/// device flags. Output: the findings partition in stratum order, then the
/// text-free partition in location order.
pub fn build_benchmark_subset(
    pool: &[AnnotationRecord],
    spec: &BenchmarkSubsetSpec,
    seed: u64,
) -> Result<Vec<AnnotationRecord>, SubsetError> {
    let groups = group_pool(pool);
    let mut with: BTreeMap<Stratum, Vec<&AnnotationRecord>> = BTreeMap::new();
    let mut without: BTreeMap<String, Vec<&AnnotationRecord>> = BTreeMap::new();
    for g in &groups {
        if g.has_findings {
            with.entry(stratum_of(g.rep)).or_default().push(g.rep);
        } else {
            without.entry(g.rep.category.clone()).or_default().push(g.rep);
        }
    }

    let strata: Vec<Stratum> = if spec.strata.is_empty() { with.keys().cloned().collect() } else { spec.strata.clone() };
    let locations: Vec<String> = if spec.strata.is_empty() {
        without.keys().cloned().collect()
    } else {
        let mut seen = Vec::new();
        for s in &spec.strata {
            if !seen.contains(&s.location) {
                seen.push(s.location.clone());
            }
        }
        seen
    };
    if spec.n_with_findings > 0 && strata.is_empty() {
        return Err(SubsetError::NoStrata(spec.n_with_findings));
    }
    if spec.n_without > 0 && locations.is_empty() {
        return Err(SubsetError::NoStrata(spec.n_without));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shortfalls = Vec::new();
    let mut chosen = allocate(&strata, spec.n_with_findings, &with, &mut rng, &mut shortfalls);
    chosen.extend(allocate(&locations, spec.n_without, &without, &mut rng, &mut shortfalls));
    if !shortfalls.is_empty() {
        return Err(SubsetError::InsufficientStratum(shortfalls));
    }
    Ok(chosen.into_iter().cloned().collect())
}
