//! Subcommand implementations.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use curekit::augment::{augment_instance_traced, preprocess_eval, IntensityGrid};
use curekit::curriculum::{
    advance_stage, run_curriculum, CurriculumState, HttpLearner, Learner, Pool, Sampler, SimulatedLearner, SourceMetrics,
};
use curekit::evalkit::{evaluate_task, LexicalFactScorer, Prediction};
use curekit::ingest::{read_records, LoadOptions};
use curekit::io::{derive_seed, read_jsonl, to_jsonl_string};
use curekit::judge::{aggregate_records, build_judge_prompt, request_hash, validate_verdict, JudgeClient, VerdictRecord};
use curekit::taskgen::{expand_padchest_labels, render_instruction, strip_box_groups};
use curekit::{AnnotationRecord, InstructionInstance, Task};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ToolConfig;
use crate::output::Run;
use crate::{Cli, Command};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Domain(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Domain(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn domain<E: std::error::Error + Send + Sync + 'static>(e: E) -> CliError {
    CliError::Domain(e.into())
}

fn pick(flag: &Option<PathBuf>, config: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.clone().or_else(|| config.clone()).ok_or_else(|| CliError::Usage(format!("--{name} is required")))
}

fn parse_jsonl<T: serde::de::DeserializeOwned>(bytes: &[u8], path: &Path) -> Result<Vec<T>> {
    read_jsonl(bytes).with_context(|| format!("parsing {}", path.display())).map_err(CliError::Domain)
}

fn parse_json<T: serde::de::DeserializeOwned>(bytes: &[u8], path: &Path) -> Result<T> {
    serde_json::from_slice(bytes).with_context(|| format!("parsing {}", path.display())).map_err(CliError::Domain)
}

fn jsonl<T: Serialize>(items: &[T]) -> Result<Vec<u8>> {
    Ok(to_jsonl_string(items).map_err(domain)?.into_bytes())
}

fn pretty<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(v).map_err(domain)?;
    out.push(b'\n');
    Ok(out)
}

/// Reference report for one judged item.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub id: String,
    pub anatomy: String,
    pub report: String,
}

#[derive(Serialize)]
struct Preprocessed {
    meta: curekit::augment::PreprocessMeta,
    image: IntensityGrid,
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = ToolConfig::load(cli.config.as_deref()).map_err(|e| CliError::Usage(format!("{e:#}")))?;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    let seed = || cfg.seed.ok_or_else(|| CliError::Usage("--seed is required for this subcommand".into()));
    let mut run = Run {
        command: std::env::args().skip(1).collect::<Vec<_>>().join(" "),
        seed: None,
        config_hash: String::new(),
        inputs: BTreeMap::new(),
    };
    let out = cli.out.as_deref();

    let bytes = match &cli.command {
        Command::Ingest { input, format, dataset, lenient } => {
            let data = run.input(input)?;
            let opts = LoadOptions { dataset: dataset.clone(), strict: !lenient };
            let recs = read_records(data.as_slice(), *format, &opts).map_err(domain)?;
            log::info!("ingested {} records from {}", recs.len(), input.display());
            jsonl(&recs)?
        }
        Command::GenTasks { records, expand_padchest } => {
            let path = pick(records, &cfg.paths.records, "records")?;
            let mut recs: Vec<AnnotationRecord> = parse_jsonl(&run.input(&path)?, &path)?;
            if *expand_padchest {
                recs = expand_padchest_labels(recs);
            }
            let insts = recs
                .iter()
                .map(|r| render_instruction(r).with_context(|| format!("record {}", r.key())))
                .collect::<anyhow::Result<Vec<InstructionInstance>>>()?;
            jsonl(&insts)?
        }
        Command::Augment { instances, trace } => {
            let seed = seed()?;
            run.seed = Some(seed);
            cfg.augment.validate().map_err(domain)?;
            let path = pick(instances, &cfg.paths.triplets, "instances")?;
            let insts: Vec<InstructionInstance> = parse_jsonl(&run.input(&path)?, &path)?;
            let outcomes: Vec<_> = insts
                .iter()
                .enumerate()
                .map(|(i, inst)| augment_instance_traced(inst, &cfg.augment, derive_seed(seed, "augment", i as u64)))
                .collect();
            if *trace {
                jsonl(&outcomes)?
            } else {
                jsonl(&outcomes.into_iter().map(|o| o.instance).collect::<Vec<_>>())?
            }
        }
        Command::Plan { records, state, metrics } => {
            cfg.curriculum.validate().map_err(domain)?;
            let path = pick(records, &cfg.paths.records, "records")?;
            let recs: Vec<AnnotationRecord> = parse_jsonl(&run.input(&path)?, &path)?;
            let pool = Pool::new(&recs);
            let current = load_state(&mut run, state.as_ref().or(cfg.paths.weights.as_ref()), &pool)?;
            let next = match metrics {
                Some(m) => {
                    let ms: Vec<SourceMetrics> = parse_jsonl(&run.input(m)?, m)?;
                    advance_stage(&cfg.curriculum, &current, &ms).map_err(domain)?
                }
                None => current,
            };
            pretty(&next)?
        }
        Command::Sample { records, state, n } => {
            let seed = seed()?;
            run.seed = Some(seed);
            let path = pick(records, &cfg.paths.records, "records")?;
            let recs: Vec<AnnotationRecord> = parse_jsonl(&run.input(&path)?, &path)?;
            let pool = Pool::new(&recs);
            let st = load_state(&mut run, state.as_ref().or(cfg.paths.weights.as_ref()), &pool)?;
            let sampler = Sampler::new(&st, &pool).map_err(domain)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "sample", 0));
            let drawn: Vec<&AnnotationRecord> = (0..*n).filter_map(|_| sampler.draw(&mut rng)).map(|d| &recs[d.index]).collect();
            jsonl(&drawn)?
        }
        Command::Simulate { records, val, learner, learner_url, learner_timeout_ms } => {
            let seed = seed()?;
            run.seed = Some(seed);
            let path = pick(records, &cfg.paths.records, "records")?;
            let train: Vec<AnnotationRecord> = parse_jsonl(&run.input(&path)?, &path)?;
            let val_recs: Vec<AnnotationRecord> = match val {
                Some(v) => parse_jsonl(&run.input(v)?, v)?,
                None => train.clone(),
            };
            let mut l: Box<dyn Learner> = match (learner, learner_url) {
                (Some(p), _) => Box::new(parse_json::<SimulatedLearner>(&run.input(p)?, p)?),
                (None, Some(url)) => Box::new(HttpLearner::new(url.clone(), Duration::from_millis(*learner_timeout_ms))),
                (None, None) => return Err(CliError::Usage("one of --learner or --learner-url is required".into())),
            };
            let log = run_curriculum(&cfg.curriculum, &train, &val_recs, l.as_mut(), seed).map_err(domain)?;
            pretty(&log)?
        }
        Command::Eval { pred, gold, task, mode } => {
            let task = Task::from_code(task).ok_or_else(|| CliError::Usage(format!("unknown task {task:?}")))?;
            let gold = pick(gold, &cfg.paths.records, "gold")?;
            let preds: Vec<Prediction> = parse_jsonl(&run.input(pred)?, pred)?;
            let gold_recs: Vec<AnnotationRecord> = parse_jsonl(&run.input(&gold)?, &gold)?;
            let mode = mode.map(Into::into).unwrap_or(cfg.parse_mode);
            let report = evaluate_task(&preds, &gold_recs, task, mode, &LexicalFactScorer).map_err(domain)?;
            pretty(&report)?
        }
        Command::Judge { pred, gold, endpoint, model, lenient, parallelism } => {
            let gold = pick(gold, &cfg.paths.reports, "gold")?;
            let preds: Vec<Prediction> = parse_jsonl(&run.input(pred)?, pred)?;
            let reports: Vec<ReportRow> = parse_jsonl(&run.input(&gold)?, &gold)?;
            let mut ep = cfg.judge.clone();
            if let Some(u) = endpoint {
                ep.url = u.clone();
            }
            if let Some(m) = model {
                ep.model = m.clone();
            }
            if let Some(p) = parallelism {
                ep.parallelism = *p;
            }
            if ep.url.is_empty() {
                return Err(CliError::Usage("--endpoint is required".into()));
            }
            let client = JudgeClient::new(ep);
            judge_rows(&client, &preds, &reports, *lenient)?
        }
        Command::JudgeAggregate { input } => {
            let rows: Vec<VerdictRecord> = parse_jsonl(&run.input(input)?, input)?;
            pretty(&aggregate_records(&rows))?
        }
        Command::Preprocess { image } => {
            let img: IntensityGrid = parse_json(&run.input(image)?, image)?;
            img.validate().map_err(domain)?;
            let (image, meta) = preprocess_eval(&img).map_err(domain)?;
            pretty(&Preprocessed { meta, image })?
        }
    };
    run.config_hash = cfg.hash();
    run.emit(out, &bytes)?;
    Ok(())
}

fn load_state(run: &mut Run, path: Option<&PathBuf>, pool: &Pool) -> Result<CurriculumState> {
    let Some(p) = path else { return Ok(CurriculumState::initial(pool)) };
    let st: CurriculumState = parse_json(&run.input(p)?, p)?;
    st.check().map_err(|e| anyhow!("invalid state {}: {e}", p.display()))?;
    Ok(st)
}

fn judge_rows(client: &JudgeClient, preds: &[Prediction], reports: &[ReportRow], lenient: bool) -> Result<Vec<u8>> {
    let by_id: HashMap<&str, &str> = preds.iter().map(|p| (p.id.as_str(), p.output.as_str())).collect();
    let model = client.config().model.clone();
    let prompts: Vec<std::result::Result<String, String>> = reports
        .iter()
        .map(|r| {
            let gen = by_id.get(r.id.as_str()).ok_or_else(|| "missing prediction".to_string())?;
            build_judge_prompt(&strip_box_groups(gen), &r.report).map_err(|e| e.to_string())
        })
        .collect();
    let to_send: Vec<String> = prompts.iter().filter_map(|p| p.as_ref().ok().cloned()).collect();
    let mut replies = client.call_many(&to_send).into_iter();
    let mut out = Vec::with_capacity(reports.len());
    let mut failures = 0;
    for (r, p) in reports.iter().zip(&prompts) {
        let mut rec = VerdictRecord { id: r.id.clone(), anatomy: r.anatomy.clone(), request_hash: String::new(), raw: None, verdict: None, error: None };
        match p {
            Err(e) => rec.error = Some(e.clone()),
            Ok(prompt) => {
                rec.request_hash = request_hash(&model, prompt);
                match replies.next().expect("one reply per prompt") {
                    Err(e) => rec.error = Some(e.to_string()),
                    Ok(raw) => {
                        match validate_verdict(&raw, lenient) {
                            Ok(v) => rec.verdict = Some(v),
                            Err(e) => rec.error = Some(e.to_string()),
                        }
                        rec.raw = Some(raw);
                    }
                }
            }
        }
        failures += rec.verdict.is_none() as usize;
        out.push(rec);
    }
    if failures > 0 {
        log::warn!("{failures} of {} items have no valid verdict", out.len());
    }
    jsonl(&out)
}
