//! Seeded synthetic datasets with the schema of the real sources.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bbox::NormBox;
use crate::io::derive_seed;
use crate::record::{AnnotationRecord, Finding, Split, Task, TaskFamily};

use super::source_id;

/// Record counts per category for one dataset–family source. For AGRG the
/// categories are locations and each count is a number of (image, location)
/// units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSource {
    pub dataset: String,
    pub family: TaskFamily,
    #[serde(default)]
    pub split: Split,
    pub categories: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub sources: Vec<FixtureSource>,
}

impl FixtureSpec {
    pub fn single(dataset: &str, family: TaskFamily, split: Split, categories: &[(&str, usize)]) -> Self {
        FixtureSpec {
            sources: vec![FixtureSource {
                dataset: dataset.into(),
                family,
                split,
                categories: categories.iter().map(|(k, n)| (k.to_string(), *n)).collect(),
            }],
        }
    }
}

const P_ABNORMAL: f64 = 0.4;
const P_DEVICE: f64 = 0.2;
const P_EXTRA_BOX: f64 = 0.2;
const P_GLOBAL_FINDING: f64 = 0.5;

/// Box on the 0.01 grid, fully in frame, with sides in `[0.05, 0.30]`.
fn random_box(rng: &mut ChaCha8Rng) -> NormBox {
    let w = rng.random_range(5..=30u32);
    let h = rng.random_range(5..=30u32);
    let cx = rng.random_range(w.div_ceil(2)..=100 - w.div_ceil(2));
    let cy = rng.random_range(h.div_ceil(2)..=100 - h.div_ceil(2));
    let f = |v: u32| v as f64 / 100.0;
    NormBox::new(f(cx), f(cy), f(w), f(h)).expect("grid box is valid").clamp().expect("grid box is in frame")
}

fn description(location: &str, abnormal: bool, device: bool) -> String {
    match (abnormal, device) {
        (false, false) => format!("The {location} is unremarkable."),
        (true, false) => format!("There is an opacity projecting over the {location}."),
        (false, true) => format!("A support device projects over the {location}."),
        (true, true) => format!("There is an opacity and a support device over the {location}."),
    }
}

fn source_records(seed: u64, src: &FixtureSource) -> Vec<AnnotationRecord> {
    let sid = source_id(&src.dataset, src.family);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &sid, 0));
    let mut out = Vec::new();
    for (category, &count) in &src.categories {
        for i in 0..count {
            let image_id = format!("{}/{}/{:05}", sid, category, i);
            let task = match src.family {
                TaskFamily::Pg => Task::Pg,
                TaskFamily::Grg => Task::Grg,
                TaskFamily::Detection => Task::Detection,
                TaskFamily::Agrg => [Task::AgrgLocate, Task::AgrgDescribe, Task::AgrgBoth][i % 3],
            };
            let mut r = AnnotationRecord::new(image_id.clone(), sid.clone(), task, category.clone()).with_split(src.split);
            r.id = Some(format!("{image_id}/{}", task.code()));
            match task {
                Task::Pg | Task::Detection => {
                    r.text = Some(category.clone());
                    r.boxes.push(random_box(&mut rng));
                    if rng.random_bool(P_EXTRA_BOX) {
                        r.boxes.push(random_box(&mut rng));
                    }
                }
                Task::Grg => {
                    r.findings.push(Finding { phrase: category.clone(), boxes: vec![random_box(&mut rng)] });
                    if rng.random_bool(P_GLOBAL_FINDING) {
                        r.findings.push(Finding { phrase: "No pleural effusion".into(), boxes: Vec::new() });
                    }
                }
                Task::AgrgLocate => {
                    r.boxes.push(random_box(&mut rng));
                    r.has_abnormality = Some(false);
                    r.has_device = Some(false);
                }
                Task::AgrgDescribe | Task::AgrgBoth => {
                    let abnormal = rng.random_bool(P_ABNORMAL);
                    let device = rng.random_bool(P_DEVICE);
                    if task == Task::AgrgBoth {
                        r.boxes.push(random_box(&mut rng));
                    }
                    r.text = Some(description(category, abnormal, device));
                    r.has_abnormality = Some(abnormal);
                    r.has_device = Some(device);
                }
            }
            out.push(r);
        }
    }
    out
}

/// Deterministic synthetic records: sources in spec order, categories in
/// name order. Each source draws from its own seed stream.
pub fn make_fixture_dataset(seed: u64, spec: &FixtureSpec) -> Vec<AnnotationRecord> {
    spec.sources.iter().flat_map(|s| source_records(seed, s)).collect()
}
