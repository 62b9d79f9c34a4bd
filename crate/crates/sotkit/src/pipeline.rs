//! The batch commands: ingest, gen-sot, filter, stats, eval and demo.
//!
//! Every command reads its inputs, works over the questions with a bounded
//! worker pool, and writes outputs in input order through atomic renames, so
//! identical inputs and seed give byte-identical files.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sot_core::eval::{evaluate, grounding_box, EvalRecord, MetricsReport};
use sot_core::llm_gen::{build_prompt, generate_offline, PromptTemplate};
use sot_core::scene_graph::sample_balanced;
use sot_core::sot::{filter_document, parse, serialize, FilterReason};
use sot_core::{IngestWarning, QuestionRecord, SceneGraph, SoTTrace};

use crate::client::{generate_candidate, AuditLog, AuditRecord, ClientError, CompletionService, GenError, HttpService, SystemClock};
use crate::config::PipelineConfig;
use crate::corpus::{read_corpus, write_corpus, CorpusEntry, CorpusMeta, UNFILTERED};
use crate::error::PipelineError;
use crate::io::{from_jsonl, load_questions, load_scene_graphs, read_input, to_jsonl, write_atomic};
use crate::judge::{judge_answer, JudgeReport, DEFAULT_JUDGE_TEMPLATE};

pub const GENERATED: &str = "generated.sot";
pub const GEN_FAILURES: &str = "gen_failures.jsonl";
pub const AUDIT_LOG: &str = "audit.jsonl";
pub const ACCEPTED: &str = "accepted.sot";
pub const REJECTIONS: &str = "rejections.jsonl";
pub const INGEST_WARNINGS: &str = "ingest_warnings.txt";
pub const INGEST_REPORT: &str = "ingest_report.json";
pub const FILTER_REPORT: &str = "filter_report.json";
pub const STATS: &str = "stats.json";
pub const METRICS: &str = "metrics.json";
pub const JUDGE: &str = "judge.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenMode {
    Offline,
    Llm,
}

/// Scene graphs and questions ready for processing.
pub struct Inputs {
    pub graphs: Vec<SceneGraph>,
    pub questions: Vec<QuestionRecord>,
    pub warnings: Vec<IngestWarning>,
    index: HashMap<String, usize>,
}

impl Inputs {
    pub fn scene(&self, image_id: &str) -> Option<&SceneGraph> {
        self.index.get(image_id).map(|&i| &self.graphs[i])
    }
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, PipelineError> {
    p.as_deref()
        .ok_or_else(|| PipelineError::Config(format!("no {what} path configured")))
}

/// Loads both documents, drops questions without a scene graph and applies
/// the per-type sample when one is configured.
pub fn load_inputs(cfg: &PipelineConfig) -> Result<Inputs, PipelineError> {
    let (graphs, mut warnings) = load_scene_graphs(required(&cfg.paths.scene_graphs, "scene_graphs")?)?;
    let (questions, qw) = load_questions(required(&cfg.paths.questions, "questions")?)?;
    warnings.extend(qw);
    let index: HashMap<String, usize> = graphs
        .iter()
        .enumerate()
        .map(|(i, g)| (g.image_id().to_string(), i))
        .collect();
    let mut kept = Vec::with_capacity(questions.len());
    for q in questions {
        if index.contains_key(&q.image_id) {
            kept.push(q);
        } else {
            warnings.push(IngestWarning::SkippedQuestion {
                reason: format!("no scene graph for image {}", q.image_id),
                question_id: q.question_id,
            });
        }
    }
    if cfg.sample_per_type > 0 {
        kept = sample_balanced(&kept, cfg.sample_per_type, cfg.seed);
    }
    Ok(Inputs {
        graphs,
        questions: kept,
        warnings,
        index,
    })
}

fn pool(cfg: &PipelineConfig) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| PipelineError::Internal(e.to_string()))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), PipelineError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| PipelineError::Internal(e.to_string()))?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestReport {
    pub images: usize,
    pub objects: usize,
    pub questions: usize,
    pub question_types: BTreeMap<String, usize>,
    pub warnings: usize,
}

pub fn cmd_ingest(cfg: &PipelineConfig) -> Result<IngestReport, PipelineError> {
    let inputs = load_inputs(cfg)?;
    let out = cfg.out_dir();
    let mut text = String::new();
    for w in &inputs.warnings {
        let _ = writeln!(text, "{w}");
    }
    write_atomic(&out.join(INGEST_WARNINGS), text.as_bytes())?;
    let mut question_types = BTreeMap::new();
    for q in &inputs.questions {
        *question_types.entry(q.question_type.clone()).or_insert(0) += 1;
    }
    let report = IngestReport {
        images: inputs.graphs.len(),
        objects: inputs.graphs.iter().map(SceneGraph::len).sum(),
        questions: inputs.questions.len(),
        question_types,
        warnings: inputs.warnings.len(),
    };
    write_json(&out.join(INGEST_REPORT), &report)?;
    Ok(report)
}

/// A question that produced no trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenFailure {
    pub question_id: String,
    pub image_id: String,
    /// `program`, `execution`, `format` or `client`.
    pub stage: String,
    pub code: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenReport {
    pub questions: usize,
    pub generated: usize,
    pub failures: usize,
    /// Responses that could not be read as a result block.
    pub format_errors: usize,
}

enum Outcome {
    Trace(String),
    Failed(GenFailure),
}

fn failure(q: &QuestionRecord, stage: &str, code: &str, detail: String) -> Outcome {
    Outcome::Failed(GenFailure {
        question_id: q.question_id.clone(),
        image_id: q.image_id.clone(),
        stage: stage.into(),
        code: code.into(),
        detail,
    })
}

pub fn load_template(cfg: &PipelineConfig) -> Result<PromptTemplate, PipelineError> {
    let shipped = PromptTemplate::shipped();
    match &cfg.paths.template {
        Some(p) => shipped
            .with_text(&read_input(p)?)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", p.display()))),
        None => Ok(shipped),
    }
}

/// Generates one SoT per question. In `Llm` mode `service` is used when
/// given, otherwise an HTTP client is built from the configuration.
pub fn cmd_gen(
    cfg: &PipelineConfig,
    mode: GenMode,
    service: Option<&dyn CompletionService>,
) -> Result<GenReport, PipelineError> {
    let inputs = load_inputs(cfg)?;
    let exec = cfg.exec_config()?;
    let out = cfg.out_dir();
    let pool = pool(cfg)?;

    let outcomes: Vec<Outcome> = match mode {
        GenMode::Offline => pool.install(|| {
            inputs
                .questions
                .par_iter()
                .map(|q| {
                    let sg = inputs.scene(&q.image_id).expect("questions are matched to scenes");
                    match generate_offline(q, sg, &exec) {
                        Ok(t) => Outcome::Trace(serialize(&t).into_string()),
                        Err(e) => {
                            let stage = match e {
                                sot_core::llm_gen::OfflineError::Program(_) => "program",
                                sot_core::llm_gen::OfflineError::Execution(_) => "execution",
                            };
                            failure(q, stage, e.code(), e.to_string())
                        }
                    }
                })
                .collect()
        }),
        GenMode::Llm => {
            let template = load_template(cfg)?;
            let owned;
            let service: &dyn CompletionService = match service {
                Some(s) => s,
                None => {
                    let client = cfg.client_config()?;
                    owned = HttpService::new(client, Arc::new(SystemClock::default()));
                    &owned
                }
            };
            let audit = AuditLog::open(&out.join(AUDIT_LOG))
                .map_err(|e| PipelineError::Internal(format!("audit log: {e}")))?;
            pool.install(|| {
                inputs
                    .questions
                    .par_iter()
                    .map(|q| -> Result<Outcome, PipelineError> {
                        let sg = inputs.scene(&q.image_id).expect("questions are matched to scenes");
                        let prompt = build_prompt(q, sg, &template)
                            .map_err(|e| PipelineError::Config(e.to_string()))?;
                        match generate_candidate(&prompt, service, sg, &exec) {
                            Ok(t) => Ok(Outcome::Trace(serialize(&t).into_string())),
                            Err(GenError::Format { error, response }) => {
                                audit
                                    .record(&AuditRecord {
                                        question_id: q.question_id.clone(),
                                        image_id: q.image_id.clone(),
                                        error: error.to_string(),
                                        response,
                                    })
                                    .map_err(|e| PipelineError::Internal(format!("audit log: {e}")))?;
                                Ok(failure(q, "format", "malformed_argument", error.to_string()))
                            }
                            Err(GenError::Client(e @ ClientError::Status { code, .. }))
                                if (400..500).contains(&code) && code != 429 =>
                            {
                                Ok(failure(q, "client", "rejected_request", e.to_string()))
                            }
                            Err(GenError::Client(e)) => Err(PipelineError::Endpoint(e.to_string())),
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()
            })?
        }
    };

    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (q, o) in inputs.questions.iter().zip(outcomes) {
        match o {
            Outcome::Trace(document) => entries.push(CorpusEntry {
                document,
                meta: CorpusMeta {
                    question_id: q.question_id.clone(),
                    image_id: q.image_id.clone(),
                    ground_truth: q.answer.clone(),
                    verdict: UNFILTERED.into(),
                },
            }),
            Outcome::Failed(f) => failures.push(f),
        }
    }
    write_corpus(&out.join(GENERATED), &entries)?;
    write_atomic(&out.join(GEN_FAILURES), to_jsonl(&failures).as_bytes())?;
    Ok(GenReport {
        questions: inputs.questions.len(),
        generated: entries.len(),
        format_errors: failures.iter().filter(|f| f.stage == "format").count(),
        failures: failures.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub question_id: String,
    pub image_id: String,
    pub reason: FilterReason,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterReport {
    pub generated: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub by_reason: BTreeMap<String, usize>,
    /// Model responses that never became a document; counted as malformed.
    pub unreadable_responses: usize,
}

pub fn cmd_filter(cfg: &PipelineConfig) -> Result<FilterReport, PipelineError> {
    let out = cfg.out_dir();
    let fcfg = cfg.filter_config()?;
    let generated = read_corpus(&out.join(GENERATED))?;
    let verdicts: Vec<_> = pool(cfg)?.install(|| {
        generated
            .par_iter()
            .map(|e| filter_document(&e.document, &e.meta.ground_truth, &fcfg))
            .collect()
    });
    let mut accepted = Vec::new();
    let mut rejections = Vec::new();
    let mut by_reason = BTreeMap::new();
    for (e, v) in generated.iter().zip(verdicts) {
        if v.accepted {
            let mut e = e.clone();
            e.meta.verdict = v.reason.as_str().to_string();
            accepted.push(e);
        } else {
            *by_reason.entry(v.reason.as_str().to_string()).or_insert(0) += 1;
            rejections.push(Rejection {
                question_id: e.meta.question_id.clone(),
                image_id: e.meta.image_id.clone(),
                reason: v.reason,
                detail: v.detail,
            });
        }
    }
    let failures_path = out.join(GEN_FAILURES);
    let unreadable_responses = if failures_path.exists() {
        let f: Vec<GenFailure> = from_jsonl(&read_input(&failures_path)?, &failures_path)?;
        f.iter().filter(|f| f.stage == "format").count()
    } else {
        0
    };
    write_corpus(&out.join(ACCEPTED), &accepted)?;
    write_atomic(&out.join(REJECTIONS), to_jsonl(&rejections).as_bytes())?;
    let report = FilterReport {
        generated: generated.len(),
        accepted: accepted.len(),
        rejected: rejections.len(),
        by_reason,
        unreadable_responses,
    };
    write_json(&out.join(FILTER_REPORT), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeCounts {
    pub qa_pairs: usize,
    pub sots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub split: String,
    pub images: usize,
    pub qa_pairs: usize,
    /// Accepted SoTs; zero before `filter` has run.
    pub sots: usize,
    pub by_type: BTreeMap<String, TypeCounts>,
}

impl DatasetStats {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<20} {:>7} {:>9} {:>7}", "split", "images", "QA pairs", "SoTs");
        let _ = writeln!(s, "{:<20} {:>7} {:>9} {:>7}", self.split, self.images, self.qa_pairs, self.sots);
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<20} {:>9} {:>7}", "question type", "QA pairs", "SoTs");
        for (t, c) in &self.by_type {
            let _ = writeln!(s, "{:<20} {:>9} {:>7}", t, c.qa_pairs, c.sots);
        }
        s
    }
}

/// Per-split and per-type counts of QA pairs and accepted SoTs. The split
/// is named after the question file.
pub fn cmd_stats(cfg: &PipelineConfig) -> Result<DatasetStats, PipelineError> {
    let inputs = load_inputs(cfg)?;
    let accepted_path = cfg.out_dir().join(ACCEPTED);
    let accepted: BTreeSet<String> = if accepted_path.exists() {
        read_corpus(&accepted_path)?
            .into_iter()
            .map(|e| e.meta.question_id)
            .collect()
    } else {
        BTreeSet::new()
    };
    let mut by_type: BTreeMap<String, TypeCounts> = BTreeMap::new();
    let mut images = BTreeSet::new();
    let mut sots = 0;
    for q in &inputs.questions {
        images.insert(q.image_id.as_str());
        let c = by_type.entry(q.question_type.clone()).or_insert(TypeCounts { qa_pairs: 0, sots: 0 });
        c.qa_pairs += 1;
        if accepted.contains(&q.question_id) {
            c.sots += 1;
            sots += 1;
        }
    }
    let split = required(&cfg.paths.questions, "questions")?
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stats = DatasetStats {
        split,
        images: images.len(),
        qa_pairs: inputs.questions.len(),
        sots,
        by_type,
    };
    write_json(&cfg.out_dir().join(STATS), &stats)?;
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub metrics: MetricsReport,
    /// Questions with no prediction; scored as wrong answers.
    pub missing_predictions: usize,
    pub judge: Option<JudgeReport>,
}

/// Scores a prediction corpus against the questions. Gold traces and boxes
/// come from running each question's program. With `judge`, answers are
/// also sent to the external judge and reported separately.
pub fn cmd_eval(
    cfg: &PipelineConfig,
    judge: Option<&dyn CompletionService>,
) -> Result<EvalOutcome, PipelineError> {
    let inputs = load_inputs(cfg)?;
    let exec = cfg.exec_config()?;
    let out = cfg.out_dir();
    let pred_path = cfg.paths.predictions.clone().unwrap_or_else(|| out.join(ACCEPTED));
    let mut predictions: HashMap<String, String> = HashMap::new();
    for e in read_corpus(&pred_path)? {
        predictions.entry(e.meta.question_id).or_insert(e.document);
    }
    let missing_predictions = inputs
        .questions
        .iter()
        .filter(|q| !predictions.contains_key(&q.question_id))
        .count();
    let records: Vec<EvalRecord> = pool(cfg)?.install(|| {
        inputs
            .questions
            .par_iter()
            .map(|q| {
                let sg = inputs.scene(&q.image_id).expect("questions are matched to scenes");
                let gold_trace = generate_offline(q, sg, &exec).ok();
                let predicted_trace = predictions.get(&q.question_id).and_then(|d| parse(d).ok());
                EvalRecord {
                    question_id: q.question_id.clone(),
                    predicted_answer: predicted_trace
                        .as_ref()
                        .map(|t| t.final_answer().to_string())
                        .unwrap_or_default(),
                    gold_answer: q.answer.clone(),
                    predicted_bbox: predicted_trace.as_ref().and_then(grounding_box),
                    gold_bbox: gold_trace.as_ref().and_then(grounding_box),
                    predicted_trace,
                    gold_trace,
                }
            })
            .collect()
    });
    let metrics = evaluate(&records, &cfg.thresholds, cfg.threshold_rule());
    write_json(&out.join(METRICS), &metrics)?;

    let judge = match judge {
        None => None,
        Some(service) => {
            let results: Vec<Result<bool, ClientError>> = pool(cfg)?.install(|| {
                inputs
                    .questions
                    .par_iter()
                    .zip(records.par_iter())
                    .map(|(q, r)| judge_answer(service, DEFAULT_JUDGE_TEMPLATE, &q.text, &r.gold_answer, &r.predicted_answer))
                    .collect()
            });
            let judged = results.iter().filter(|r| r.is_ok()).count();
            let agreed = results.iter().filter(|r| matches!(r, Ok(true))).count();
            let report = JudgeReport {
                judged,
                agreed,
                failures: results.len() - judged,
                agreement: if judged == 0 { 0.0 } else { agreed as f64 / judged as f64 },
            };
            write_json(&out.join(JUDGE), &report)?;
            Some(report)
        }
    };
    Ok(EvalOutcome {
        metrics,
        missing_predictions,
        judge,
    })
}

/// The question's offline SoT, one numbered step per line, followed by the
/// full document.
pub fn cmd_demo(cfg: &PipelineConfig, question_id: &str) -> Result<String, PipelineError> {
    let inputs = load_inputs(cfg)?;
    let q = inputs
        .questions
        .iter()
        .find(|q| q.question_id == question_id)
        .ok_or_else(|| PipelineError::Input(format!("unknown question {question_id}")))?;
    let sg = inputs.scene(&q.image_id).expect("questions are matched to scenes");
    let trace = generate_offline(q, sg, &cfg.exec_config()?)
        .map_err(|e| PipelineError::Input(format!("{question_id}: {e}")))?;
    let doc = serialize(&trace);
    let mut s = String::new();
    let _ = writeln!(s, "question: {}", q.text);
    let _ = writeln!(s, "answer:   {}", q.answer);
    for (i, st) in trace.steps().iter().enumerate() {
        let one = SoTTrace::new(vec![st.clone()]).expect("one step");
        let _ = writeln!(s, "{:>2}. {}", i + 1, serialize(&one));
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "{doc}");
    Ok(s)
}
