//! Random record generators shared by the integration tests.
#![allow(dead_code)]

use curekit::{AnnotationRecord, Finding, NormBox, Task};
use rand::Rng;

const WORDS: [&str; 16] = [
    "mild", "left", "right", "basal", "opacity", "effusion", "pleural", "nodule", "heart", "enlarged", "upper", "lobe", "catheter", "tip",
    "lung", "apex",
];

pub fn words<R: Rng>(rng: &mut R, lo: usize, hi: usize) -> String {
    let n = rng.random_range(lo..=hi);
    let mut s: Vec<&str> = (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
    let first = s[0].to_string();
    let cap = first[..1].to_uppercase() + &first[1..];
    s[0] = &cap;
    s.join(" ")
}

/// In-frame box with a 0.01 margin so 2-decimal rounding never leaves the frame.
pub fn rand_box<R: Rng>(rng: &mut R) -> NormBox {
    let w: f64 = rng.random_range(0.01..0.5);
    let h: f64 = rng.random_range(0.01..0.5);
    let cx = rng.random_range(w / 2.0 + 0.01..1.0 - w / 2.0 - 0.01);
    let cy = rng.random_range(h / 2.0 + 0.01..1.0 - h / 2.0 - 0.01);
    NormBox::new(cx, cy, w, h).unwrap()
}

pub fn rand_record<R: Rng>(rng: &mut R, i: usize) -> AnnotationRecord {
    let task = [Task::Pg, Task::Grg, Task::AgrgLocate, Task::AgrgDescribe, Task::AgrgBoth][i % 5];
    let boxes = |rng: &mut R, lo, hi| (0..rng.random_range(lo..=hi)).map(|_| rand_box(rng)).collect::<Vec<_>>();
    match task {
        Task::Pg => {
            let phrase = words(rng, 1, 4);
            let b = boxes(rng, 1, 4);
            AnnotationRecord::new(format!("i{i}"), "src-pg", task, phrase.clone()).with_text(phrase).with_boxes(b)
        }
        Task::Grg => {
            let mut r = AnnotationRecord::new(format!("i{i}"), "src-grg", task, "report");
            r.findings = (0..rng.random_range(1..=4)).map(|_| Finding { phrase: words(rng, 1, 6), boxes: boxes(rng, 0, 3) }).collect();
            r
        }
        _ => {
            let location = words(rng, 1, 3).to_lowercase();
            let mut r = AnnotationRecord::new(format!("i{i}"), "src-agrg", task, location);
            if task.has_boxes() {
                r.boxes = boxes(rng, 1, 3);
            }
            if task.has_text() {
                r.text = Some(words(rng, 2, 8) + ".");
            }
            r
        }
    }
}

pub fn boxes_close(a: &[NormBox], b: &[NormBox]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_array().iter().zip(y.to_array()).all(|(p, q)| (p - q).abs() <= 0.005 + 1e-9))
}
