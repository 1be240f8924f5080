//! Grading: ask every exam question against every pooled passage.

mod answer;
mod segment;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use log::{info, warn};
use serde::{Deserialize, Serialize};

pub use answer::{normalize_answer, parse_self_rating, verify_answer, UNANSWERABLE_PHRASES};
pub use segment::{response_hash, segment_response, SegmentationConfig};

use crate::error::{Error, Result};
use crate::formats::GradeStore;
use crate::gateway::{render_grading_prompt, CompletionRequest, Gateway, PromptTemplate, RequestKey, Task};
use crate::model::{ExamQuestion, Grade, GradeKey, GradeMode, Judgment, Passage, QuestionBank, Run};

/// Pool depth per run when collecting passages to grade.
pub const DEFAULT_POOL_DEPTH: usize = 20;

const STORE_BATCH: usize = 256;

/// Grades one (question, passage) pair with a single completion request.
pub fn grade_pair(gateway: &Gateway, question: &ExamQuestion, passage: &Passage, mode: GradeMode) -> Result<Grade> {
    let (template, task) = match mode {
        GradeMode::QaVerified => (PromptTemplate::Qa, Task::Qa),
        GradeMode::SelfRated => (PromptTemplate::SelfRating, Task::SelfRating),
    };
    let gold = match mode {
        GradeMode::QaVerified => Some(
            question
                .gold_answer
                .as_deref()
                .filter(|g| !g.trim().is_empty())
                .ok_or_else(|| {
                    Error::Contract(format!(
                        "question {} has no gold answer; answer verification impossible",
                        question.question_id
                    ))
                })?,
        ),
        GradeMode::SelfRated => None,
    };
    let prompt = render_grading_prompt(
        template,
        &question.text,
        &passage.text,
        gateway.config().max_input_tokens,
        gateway.tokenizer(),
    )?;
    let request = CompletionRequest {
        prompt,
        task,
        key: RequestKey {
            query_id: Some(question.query_id.clone()),
            facet_id: question.facet_id.clone(),
            question_id: Some(question.question_id.clone()),
            passage_id: Some(passage.passage_id.clone()),
        },
    };
    let completion = gateway.complete(&request)?.text;
    let grade = match gold {
        Some(gold) => {
            let verified = verify_answer(&completion, gold);
            Grade::qa_verified(
                &question.query_id,
                &passage.passage_id,
                &question.question_id,
                Some(completion),
                verified,
            )
        }
        None => {
            let rating = parse_self_rating(&completion);
            Grade::self_rated(
                &question.query_id,
                &passage.passage_id,
                &question.question_id,
                Some(completion),
                rating,
            )?
        }
    };
    Ok(grade)
}

/// Passages to grade per query: the top `depth` of every run, then every
/// judged passage, deduplicated in first-seen order.
pub fn build_pool(runs: &[Run], judgments: &[Judgment], depth: usize) -> BTreeMap<String, Vec<String>> {
    let mut pool: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut add = |q: &str, p: &str| {
        if seen.insert((q.to_string(), p.to_string())) {
            pool.entry(q.to_string()).or_default().push(p.to_string());
        }
    };
    for run in runs {
        for query_id in run.query_ids() {
            for passage_id in run.top(query_id, depth) {
                add(query_id, passage_id);
            }
        }
    }
    for j in judgments {
        add(&j.query_id, &j.passage_id);
    }
    pool
}

/// A pair that could not be graded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipEntry {
    pub query_id: String,
    pub passage_id: String,
    pub question_id: String,
    pub mode: GradeMode,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct GradingSummary {
    /// Pairs in scope: questions times pooled passages, per query.
    pub pairs: usize,
    pub already_graded: usize,
    pub requested: usize,
    pub graded: usize,
    pub skipped: Vec<SkipEntry>,
    /// Questions left out of answer verification for lack of a gold answer.
    pub questions_without_gold: usize,
    pub duration: Duration,
}

#[derive(Debug, Clone)]
pub struct GradingOptions {
    pub mode: GradeMode,
    /// Defaults to `<store>.skipped.jsonl`; `None` disables the file.
    pub skip_log: Option<PathBuf>,
}

impl GradingOptions {
    pub fn new(mode: GradeMode, store: &GradeStore) -> Self {
        let mut name = store.path().as_os_str().to_owned();
        name.push(".skipped.jsonl");
        GradingOptions {
            mode,
            skip_log: Some(PathBuf::from(name)),
        }
    }
}

struct Job<'a> {
    question: &'a ExamQuestion,
    passage: &'a Passage,
}

/// Grades every (question, passage) pair of the bank against the pooled
/// passages of its query and appends the grades to `store`.
///
/// Pairs already present in the store are not re-requested, so an
/// interrupted run can be resumed. Requests fan out over
/// `gateway.config().parallelism` workers; grades are written by this
/// thread in a fixed order, making the store contents reproducible.
pub fn grade_corpus(
    bank: &QuestionBank,
    passages: &BTreeMap<String, Vec<Passage>>,
    gateway: &Gateway,
    store: &GradeStore,
    options: &GradingOptions,
) -> Result<GradingSummary> {
    let started = Instant::now();
    let mode = options.mode;
    let mut writer = store.writer()?;
    let existing: HashSet<GradeKey> = store.read()?.iter().map(Grade::key).collect();

    let mut summary = GradingSummary::default();
    let mut jobs = Vec::new();
    for (query_id, questions) in bank.iter() {
        let pool = dedup_passages(passages.get(query_id).map_or(&[], Vec::as_slice));
        for question in questions {
            if mode == GradeMode::QaVerified && !question.supports_verification() {
                summary.questions_without_gold += 1;
                continue;
            }
            for passage in &pool {
                summary.pairs += 1;
                let key = GradeKey {
                    query_id: query_id.to_string(),
                    passage_id: passage.passage_id.clone(),
                    question_id: question.question_id.clone(),
                    mode,
                };
                if existing.contains(&key) {
                    summary.already_graded += 1;
                } else {
                    jobs.push(Job { question, passage });
                }
            }
        }
    }
    if summary.questions_without_gold > 0 {
        warn!(
            "{} questions have no gold answer and are skipped in answer-verification mode",
            summary.questions_without_gold
        );
    }
    summary.requested = jobs.len();
    info!(
        "grading {} pairs ({} already in store) with {} workers",
        jobs.len(),
        summary.already_graded,
        gateway.config().parallelism
    );

    let workers = gateway.config().parallelism.min(jobs.len()).max(1);
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Result<Grade>)>();
    let mut pending: BTreeMap<usize, Result<Grade>> = BTreeMap::new();
    let mut batch: Vec<Grade> = Vec::new();
    let mut emitted = 0usize;
    let mut write_error: Option<Error> = None;

    thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (jobs, next) = (&jobs, &next);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let outcome = grade_pair(gateway, job.question, job.passage, mode);
                if tx.send((i, outcome)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        for (i, outcome) in rx {
            pending.insert(i, outcome);
            while let Some(outcome) = pending.remove(&emitted) {
                let job = &jobs[emitted];
                emitted += 1;
                match outcome {
                    Ok(grade) => batch.push(grade),
                    Err(e) => summary.skipped.push(SkipEntry {
                        query_id: job.question.query_id.clone(),
                        passage_id: job.passage.passage_id.clone(),
                        question_id: job.question.question_id.clone(),
                        mode,
                        error: e.to_string(),
                    }),
                }
                if batch.len() >= STORE_BATCH && write_error.is_none() {
                    summary.graded += batch.len();
                    if let Err(e) = writer.append(&batch) {
                        write_error = Some(e);
                        // stop handing out work
                        next.store(usize::MAX / 2, Ordering::Relaxed);
                    }
                    batch.clear();
                }
            }
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }
    summary.graded += batch.len();
    writer.append(&batch)?;
    drop(writer);

    if let Some(path) = &options.skip_log {
        if !summary.skipped.is_empty() {
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            for entry in &summary.skipped {
                let line = serde_json::to_string(entry)?;
                writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
            }
            warn!("{} pairs failed; see {}", summary.skipped.len(), path.display());
        }
    }
    summary.duration = started.elapsed();
    Ok(summary)
}

fn dedup_passages(passages: &[Passage]) -> Vec<&Passage> {
    let mut seen = BTreeSet::new();
    passages.iter().filter(|p| seen.insert(p.passage_id.as_str())).collect()
}
