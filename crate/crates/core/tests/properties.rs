use std::collections::BTreeMap;

use curekit::augment::{clahe, IntensityGrid};
use curekit::evalkit::{evaluate_task, grounding_iou, lexical_fact_score, parse_output, LexicalFactScorer, ParseMode, Prediction};
use curekit::ingest::{build_benchmark_subset, make_fixture_dataset, read_records, BenchmarkSubsetSpec, FixtureSource, FixtureSpec, InputFormat, LoadOptions};
use curekit::io::to_jsonl_string;
use curekit::taskgen::{is_empty_description, render_instruction, AGRG9};
use curekit::{NormBox, Split, Task, TaskFamily};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;
use common::{boxes_close, rand_box, rand_record};

fn boxes(seed: u64, n: usize) -> Vec<NormBox> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rand_box(&mut rng)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn records_reload_losslessly(seed in any::<u64>(), sizes in prop::collection::vec(1usize..12, 1..4)) {
        let families = [TaskFamily::Pg, TaskFamily::Grg, TaskFamily::Agrg];
        let sources = sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| FixtureSource {
                dataset: format!("d{i}"),
                family: families[i % 3],
                split: Split::Train,
                categories: BTreeMap::from([("alpha".to_string(), n), ("beta".to_string(), n + 1)]),
            })
            .collect();
        let recs = make_fixture_dataset(seed, &FixtureSpec { sources });
        let text = to_jsonl_string(&recs).unwrap();
        let back = read_records(text.as_bytes(), InputFormat::Records, &LoadOptions::new("x")).unwrap();
        prop_assert_eq!(back, recs);
    }

    #[test]
    fn text_free_partition_is_balanced(n_without in 0usize..120, n_with in 0usize..60, seed in any::<u64>()) {
        let cats: Vec<(&str, usize)> = AGRG9.iter().map(|l| (*l, 90)).collect();
        let pool = make_fixture_dataset(11, &FixtureSpec::single("cig", TaskFamily::Agrg, Split::Test, &cats));
        let spec = BenchmarkSubsetSpec { n_with_findings: n_with, n_without, strata: vec![] };
        let sub = build_benchmark_subset(&pool, &spec, seed).unwrap();
        let mut per_loc: BTreeMap<&str, usize> = AGRG9.iter().map(|l| (*l, 0)).collect();
        for r in sub.iter().filter(|r| r.text.as_deref().is_none_or(is_empty_description)) {
            *per_loc.get_mut(r.category.as_str()).unwrap() += 1;
        }
        let (lo, hi) = (per_loc.values().min().unwrap(), per_loc.values().max().unwrap());
        prop_assert!(hi - lo <= 1, "{:?}", per_loc);
        prop_assert_eq!(sub.len(), n_with + n_without);
    }

    #[test]
    fn render_is_total_deterministic_and_parses_back(seed in any::<u64>(), slot in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rec = rand_record(&mut rng, slot);
        let a = render_instruction(&rec).unwrap();
        prop_assert_eq!(&a, &render_instruction(&rec).unwrap());
        let p = parse_output(&a.response, rec.task, ParseMode::Strict).unwrap();
        if rec.task == Task::Grg {
            prop_assert_eq!(p.findings.len(), rec.findings.len());
            for (x, y) in p.findings.iter().zip(&rec.findings) {
                prop_assert!(boxes_close(&x.boxes, &y.boxes));
            }
        } else {
            prop_assert!(boxes_close(&p.boxes, &rec.boxes));
        }
    }

    #[test]
    fn clahe_stays_within_levels(
        w in 8usize..40,
        h in 8usize..40,
        max_level in 1u16..4096,
        clip in prop_oneof![Just(f64::INFINITY), 0.5f64..10.0],
        gx in 1usize..4,
        gy in 1usize..4,
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = IntensityGrid::new(w, h, max_level, (0..w * h).map(|_| rng.random_range(0..=max_level)).collect()).unwrap();
        let out = clahe(&img, clip, (gx, gy)).unwrap();
        prop_assert!(out.values.iter().all(|&v| v <= max_level));
        prop_assert_eq!(out, clahe(&img, clip, (gx, gy)).unwrap());

        let flat = IntensityGrid::filled(w, h, max_level, rng.random_range(0..=max_level));
        let once = clahe(&flat, clip, (gx, gy)).unwrap();
        prop_assert!(once.values.iter().all(|&v| v == once.values[0]));
        let unclipped = clahe(&flat, f64::INFINITY, (gx, gy)).unwrap();
        prop_assert_eq!(clahe(&unclipped, f64::INFINITY, (gx, gy)).unwrap(), unclipped);
    }

    #[test]
    fn iou_self_is_one_and_order_free(seed in any::<u64>(), ng in 1usize..7, np in 1usize..7, rot in 0usize..7) {
        let gt = boxes(seed, ng);
        let pred = boxes(seed ^ 0x9e37, np);
        prop_assert_eq!(grounding_iou(&gt, &gt).unwrap(), 1.0);
        let iou = grounding_iou(&gt, &pred).unwrap();
        prop_assert!((0.0..=1.0).contains(&iou));
        let mut g2 = gt.clone();
        g2.reverse();
        let mut p2 = pred.clone();
        p2.rotate_left(rot % np);
        prop_assert!((grounding_iou(&g2, &p2).unwrap() - iou).abs() <= 1e-12);
    }

    #[test]
    fn scores_are_unit_bounded(a in "[a-z ]{0,40}", b in "[a-z ]{0,40}", seed in any::<u64>()) {
        let s = lexical_fact_score(&a, &b);
        prop_assert!((0.0..=1.0).contains(&s));

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gold: Vec<_> = (0..5).map(|i| {
            let mut r = rand_record(&mut rng, 4);
            r.id = Some(format!("r{i}"));
            r
        }).collect();
        let preds: Vec<Prediction> = gold
            .iter()
            .enumerate()
            .map(|(i, r)| Prediction { id: r.key(), output: if i % 2 == 0 { render_instruction(r).unwrap().response } else { a.clone() } })
            .collect();
        let rep = evaluate_task(&preds, &gold, Task::AgrgBoth, ParseMode::Lenient, &LexicalFactScorer).unwrap();
        for row in &rep.rows {
            for v in [row.iou, row.text_score].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
        for v in [rep.micro_iou, rep.macro_iou, rep.mean_text_score].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
