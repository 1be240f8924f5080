use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};

use exam_core::formats::{
    load_passages, load_queries, load_question_bank, parse_qrels, parse_run_file, save_question_bank, write_qrels,
    GradeStore,
};
use exam_core::gateway::{
    Backend, BackendConfig, Gateway, HttpBackend, MockBackend, MockFixture, PromptTemplate, API_KEY_ENV,
};
use exam_core::grader::{build_pool, grade_corpus, GradingOptions};
use exam_core::metrics::{
    agreement_tables, build_qrels, correlate, exam_cover, leaderboard, min_answers_sweep, precision_leaderboard,
    read_leaderboard_tsv, write_leaderboard_tsv, AgreementReport, CollapseSpec, GradeIndex, LeaderboardMetric, OVERALL,
};
use exam_core::model::{CoverConfig, Grade, GradeMode, GradePolicy, Judgment, Passage, QuestionBank, Run};
use exam_core::question_bank::diff_banks;

use crate::{
    AgreementArgs, BackendArgs, Command, CorrelateArgs, CoverArgs, DiffArgs, GenerateArgs, GradeArgs, LeaderboardArgs,
    ModeArg, QrelsArgs, TemplateArg,
};

pub fn run(command: Command) -> Result<()> {
    info!("resolved configuration: {command:?}");
    match command {
        Command::Generate(a) => generate(a),
        Command::Grade(a) => grade(a),
        Command::Cover(a) => cover(a),
        Command::Qrels(a) => qrels(a),
        Command::Leaderboard(a) => leaderboard_cmd(a),
        Command::Correlate(a) => correlate_cmd(a),
        Command::Agreement(a) => agreement(a),
        Command::Diff(a) => diff(a),
    }
}

/// 2 for failures of the environment (backend, disk), 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<exam_core::Error>() {
            return if e.is_environmental() { 2 } else { 1 };
        }
        if cause.is::<std::io::Error>() {
            return 2;
        }
    }
    1
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let context = || format!("writing {}", path.display());
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(context)?;
    tmp.write_all(bytes).with_context(context)?;
    tmp.as_file().sync_all().with_context(context)?;
    tmp.persist(path).map_err(|e| e.error).with_context(context)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).context("writing stdout")?;
            Ok(stdout.flush()?)
        }
    }
}

fn load_bank(path: &Path) -> Result<QuestionBank> {
    load_question_bank(&read_text(path)?).with_context(|| format!("loading {}", path.display()))
}

fn load_qrels(path: &Path) -> Result<Vec<Judgment>> {
    parse_qrels(&read_text(path)?).with_context(|| format!("loading {}", path.display()))
}

fn load_grades(path: &Path) -> Result<Vec<Grade>> {
    if !path.exists() {
        bail!("grade store {} does not exist", path.display());
    }
    GradeStore::new(path)
        .read()
        .with_context(|| format!("loading {}", path.display()))
}

fn load_run(path: &Path) -> Result<Run> {
    parse_run_file(&read_text(path)?).with_context(|| format!("loading {}", path.display()))
}

/// Every non-hidden file in `dir`, in file name order.
fn load_runs(dir: &Path) -> Result<Vec<Run>> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let hidden = path.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.'));
        if path.is_file() && !hidden {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        bail!("no run files in {}", dir.display());
    }
    let runs = paths.iter().map(|p| load_run(p)).collect::<Result<Vec<_>>>()?;
    info!("loaded {} runs from {}", runs.len(), dir.display());
    Ok(runs)
}

fn parse_policy(text: &str) -> Result<GradePolicy> {
    Ok(text.parse::<GradePolicy>()?)
}

fn required<'a, T>(value: &'a Option<T>, flag: &str, why: &str) -> Result<&'a T> {
    value.as_ref().ok_or_else(|| anyhow!("--{flag} is required {why}"))
}

fn gateway(args: &BackendArgs) -> Result<Gateway> {
    let mut cfg = BackendConfig::default();
    if let Some(v) = &args.endpoint {
        cfg.endpoint_url = v.clone();
    }
    if let Some(v) = &args.model {
        cfg.model_name = v.clone();
    }
    if let Some(v) = args.max_input_tokens {
        cfg.max_input_tokens = v;
    }
    if let Some(v) = args.parallelism {
        cfg.parallelism = v;
    }
    if let Some(v) = args.max_retries {
        cfg.max_retries = v;
    }
    if let Some(v) = args.timeout {
        cfg.timeout = Duration::from_secs(v);
    }
    if let Some(v) = args.max_new_tokens {
        cfg.max_new_tokens = v;
    }
    cfg.requests_per_second = args.requests_per_second;

    let backend: Arc<dyn Backend> = match args.mock.as_deref() {
        Some("lexical") => Arc::new(MockBackend::lexical()),
        Some(path) => Arc::new(MockBackend::new(MockFixture::load(Path::new(path))?)),
        None => Arc::new(HttpBackend::with_api_key(&cfg, std::env::var(API_KEY_ENV).ok())),
    };
    info!("backend {}: {cfg:?}", backend.id());
    Ok(Gateway::new(backend, cfg)?)
}

fn generate(args: GenerateArgs) -> Result<()> {
    let queries =
        load_queries(&read_text(&args.queries)?).with_context(|| format!("loading {}", args.queries.display()))?;
    let template = match args.template {
        TemplateArg::Dl => PromptTemplate::QuestionGenDl,
        TemplateArg::Car => PromptTemplate::QuestionGenCar,
    };
    let gw = gateway(&args.backend)?;
    let bank = exam_core::question_bank::generate_bank(&queries, template, &gw)?;
    info!(
        "{} questions for {} queries ({} requests)",
        bank.len(),
        queries.len(),
        gw.request_count()
    );
    write_atomic(&args.out, save_question_bank(&bank).as_bytes())
}

fn grade(args: GradeArgs) -> Result<()> {
    let bank = load_bank(&args.bank)?;
    let runs = load_runs(&args.runs)?;
    let judgments = match &args.qrels {
        Some(path) => load_qrels(path)?,
        None => Vec::new(),
    };
    let texts: BTreeMap<String, Passage> = load_passages(&read_text(&args.passages)?)
        .with_context(|| format!("loading {}", args.passages.display()))?
        .into_iter()
        .map(|p| (p.passage_id.clone(), p))
        .collect();

    let mut missing = Vec::new();
    let mut passages: BTreeMap<String, Vec<Passage>> = BTreeMap::new();
    for (query_id, ids) in build_pool(&runs, &judgments, args.depth) {
        let pool = passages.entry(query_id).or_default();
        for id in ids {
            match texts.get(&id) {
                Some(p) => pool.push(p.clone()),
                None => missing.push(id),
            }
        }
    }
    if !missing.is_empty() {
        warn!(
            "{} pooled passages have no text and are not graded (first: {})",
            missing.len(),
            missing[0]
        );
    }

    let mode = match args.mode {
        ModeArg::Qa => GradeMode::QaVerified,
        ModeArg::Rate => GradeMode::SelfRated,
    };
    let gw = gateway(&args.backend)?;
    let store = GradeStore::new(&args.store);
    let options = GradingOptions::new(mode, &store);
    let summary = grade_corpus(&bank, &passages, &gw, &store, &options)?;
    info!(
        "{} pairs: {} already graded, {} graded now, {} skipped in {:.1}s",
        summary.pairs,
        summary.already_graded,
        summary.graded,
        summary.skipped.len(),
        summary.duration.as_secs_f64()
    );
    if !summary.skipped.is_empty() {
        let log = options
            .skip_log
            .as_deref()
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        return Err(exam_core::Error::Backend {
            context: "grading".into(),
            message: format!("{} pairs failed; see {log} and rerun to resume", summary.skipped.len()),
        }
        .into());
    }
    Ok(())
}

fn cover(args: CoverArgs) -> Result<()> {
    let bank = load_bank(&args.bank)?;
    let run = load_run(&args.run)?;
    let policy = parse_policy(&args.policy)?;
    let grades = load_grades(&args.grades)?;
    let index = GradeIndex::new(&grades, policy.mode());
    let report = exam_cover(&run, &bank, &index, &policy, &CoverConfig::new(args.depth)?)?;
    if !report.coverage_gaps.is_empty() {
        warn!("{} top-ranked passages have no grades", report.coverage_gaps.len());
    }
    let mut out = String::from("query\tcover\n");
    for (query, score) in &report.per_query {
        let _ = writeln!(out, "{query}\t{score:.6}");
    }
    let _ = writeln!(out, "all\t{:.6}", report.mean);
    let _ = writeln!(out, "# std_error\t{:.6}", report.std_error);
    let _ = writeln!(out, "# coverage_gaps\t{}", report.coverage_gaps.len());
    emit(args.out.as_deref(), &out)
}

fn qrels(args: QrelsArgs) -> Result<()> {
    let bank = load_bank(&args.bank)?;
    let policy = parse_policy(&args.policy)?;
    let grades = load_grades(&args.grades)?;
    let index = GradeIndex::new(&grades, policy.mode());
    let labels = build_qrels(&index, &bank, &policy, args.graded)?;
    info!("{} labelled pairs", labels.len());
    emit(args.out.as_deref(), &write_qrels(&labels))
}

fn leaderboard_cmd(args: LeaderboardArgs) -> Result<()> {
    let runs = load_runs(&args.runs)?;
    let official: Option<BTreeMap<String, u32>> = match &args.official {
        Some(path) => {
            Some(serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?)
        }
        None => None,
    };
    // None for cover, Some(k) for precision at k
    let k = match args.metric.trim().to_ascii_lowercase().as_str() {
        "cover" => None,
        other => match other.strip_prefix('p').and_then(|k| k.parse::<usize>().ok()) {
            Some(k) if k > 0 => Some(k),
            _ => bail!("invalid metric {:?}; expected cover or p<k>", args.metric),
        },
    };
    let board = match (k, &args.qrels) {
        (Some(k), Some(path)) => {
            let qrels = load_qrels(path)?;
            precision_leaderboard(&runs, &qrels, k, args.level_for_rel, official.as_ref())?
        }
        _ => {
            let why = "for this metric";
            let bank = load_bank(required(&args.bank, "bank", why)?)?;
            let policy = parse_policy(required(&args.policy, "policy", why)?)?;
            let grades = load_grades(required(&args.grades, "grades", why)?)?;
            let index = GradeIndex::new(&grades, policy.mode());
            let metric = match k {
                Some(k) => LeaderboardMetric::ExamQrels { k },
                None => LeaderboardMetric::Cover(CoverConfig::new(args.depth)?),
            };
            leaderboard(&runs, &bank, &index, &policy, metric, official.as_ref())?
        }
    };
    match &board.correlation {
        Ok(c) => info!(
            "spearman {:.3}, kendall {:.3} over {} systems",
            c.spearman, c.kendall, c.n
        ),
        Err(reason) if official.is_some() => warn!("correlation undefined: {reason}"),
        Err(_) => {}
    }
    emit(args.out.as_deref(), &write_leaderboard_tsv(&board))
}

fn correlate_cmd(args: CorrelateArgs) -> Result<()> {
    let scores = |path: &Path| -> Result<BTreeMap<String, f64>> {
        let rows = read_leaderboard_tsv(&read_text(path)?).with_context(|| format!("loading {}", path.display()))?;
        Ok(rows
            .into_iter()
            .filter(|r| r.system != OVERALL)
            .map(|r| (r.system, r.score))
            .collect())
    };
    let stats = correlate(&scores(&args.a)?, &scores(&args.b)?)?;
    let text = format!(
        "spearman\t{:.6}\nkendall\t{:.6}\nn\t{}\n",
        stats.spearman, stats.kendall, stats.n
    );
    emit(args.out.as_deref(), &text)
}

/// Named kinds may share one comma-separated value; a custom spec holds
/// commas of its own and must be given alone.
fn collapse_specs(text: &str, level: u32) -> Result<Vec<CollapseSpec>> {
    if text.trim_start().starts_with("custom:") {
        return Ok(vec![text.trim().parse()?]);
    }
    text.split(',')
        .map(|name| {
            Ok(match name.trim() {
                "graded" => CollapseSpec::graded(level)?,
                "lenient" => CollapseSpec::lenient(level)?,
                "strict" => CollapseSpec::strict(level)?,
                "binary" => CollapseSpec::binary(level)?,
                other => bail!("unknown collapse {other:?}; expected graded, lenient, strict, binary or custom:..."),
            })
        })
        .collect()
}

fn log_join(report: &AgreementReport) {
    info!(
        "{} joined pairs; {} labels without judgment, {} judgments without label",
        report.joined, report.labels_without_judgment, report.judgments_without_label
    );
}

fn agreement(args: AgreementArgs) -> Result<()> {
    let labels = load_qrels(&args.labels)?;
    let judgments = load_qrels(&args.judgments)?;
    let specs = collapse_specs(&args.collapse, args.judgment_level)?;
    let report = agreement_tables(&labels, &judgments, &specs)?;
    log_join(&report);
    let mut text = report.to_text();
    let mut tsv = report.to_tsv();

    if let Some(list) = &args.min_answers {
        let why = "with --min-answers";
        let values = list
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<u32>()
                    .map_err(|_| anyhow!("invalid --min-answers value {v:?}"))
            })
            .collect::<Result<Vec<_>>>()?;
        let bank = load_bank(required(&args.bank, "bank", why)?)?;
        let policy = parse_policy(required(&args.policy, "policy", why)?)?;
        let grades = load_grades(required(&args.grades, "grades", why)?)?;
        let index = GradeIndex::new(&grades, policy.mode());
        for (_, sweep) in min_answers_sweep(&index, &bank, &policy, &judgments, &values, args.judgment_level)? {
            text.push('\n');
            text.push_str(&sweep.to_text());
            tsv.push('\n');
            tsv.push_str(&sweep.to_tsv());
        }
    }
    if let Some(path) = &args.out_tsv {
        write_atomic(path, tsv.as_bytes())?;
    }
    emit(args.out.as_deref(), &text)
}

fn diff(args: DiffArgs) -> Result<()> {
    let old = load_bank(&args.old)?;
    let new = load_bank(&args.new)?;
    let policy = parse_policy(&args.policy)?;
    let grades = load_grades(&args.grades)?;
    let report = diff_banks(&old, &new, &grades, &policy)?;
    info!(
        "{} added, {} removed, {} edited, {} label flips",
        report.added.len(),
        report.removed.len(),
        report.edited.len(),
        report.flips.len()
    );
    emit(args.out.as_deref(), &report.render())
}
