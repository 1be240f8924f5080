use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write;

use super::{build_qrels, correlate, exam_cover, precision_at_k, CorrelationStats, GradeIndex};
use crate::error::{Error, Result};
use crate::model::{CoverConfig, GradePolicy, Judgment, QuestionBank, Run, RunEntry};

/// Name of the synthetic system that pools every submitted passage.
pub const OVERALL: &str = "_overall_";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeaderboardMetric {
    /// EXAM Cover over the top `depth` passages.
    Cover(CoverConfig),
    /// Precision@k against binary labels derived from the grades.
    ExamQrels { k: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderboardRow {
    pub system: String,
    pub score: f64,
    pub std_error: f64,
    pub official_rank: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leaderboard {
    /// Sorted by score descending, ties by system name.
    pub rows: Vec<LeaderboardRow>,
    /// Correlation with the official ranking, or why it is undefined.
    pub correlation: std::result::Result<CorrelationStats, String>,
}

impl Leaderboard {
    pub fn row(&self, system: &str) -> Option<&LeaderboardRow> {
        self.rows.iter().find(|r| r.system == system)
    }
}

/// Scores every run, adds the pooled [`OVERALL`] row and correlates with
/// the official ranks when given.
pub fn leaderboard(
    runs: &[Run],
    bank: &QuestionBank,
    grades: &GradeIndex,
    policy: &GradePolicy,
    metric: LeaderboardMetric,
    official: Option<&BTreeMap<String, u32>>,
) -> Result<Leaderboard> {
    check_unique_tags(runs)?;
    match metric {
        LeaderboardMetric::Cover(cover) => {
            let mut rows = Vec::with_capacity(runs.len() + 1);
            for run in runs {
                let r = exam_cover(run, bank, grades, policy, &cover)?;
                rows.push(row(run.run_tag(), r.mean, r.std_error, official));
            }
            let pooled = union_run(runs, cover.depth(), |_, _| 0);
            let all = CoverConfig::new(usize::MAX)?;
            let r = exam_cover(&pooled, bank, grades, policy, &all)?;
            rows.push(row(OVERALL, r.mean, r.std_error, None));
            Ok(finish(rows, official))
        }
        LeaderboardMetric::ExamQrels { k } => {
            let qrels = build_qrels(grades, bank, policy, false)?;
            precision_leaderboard(runs, &qrels, k, 1, official)
        }
    }
}

/// Precision@k leaderboard against any qrels. The [`OVERALL`] row ranks
/// the pooled top-k passages of all runs by their judgment, best first.
pub fn precision_leaderboard(
    runs: &[Run],
    qrels: &[Judgment],
    k: usize,
    level_for_rel: u32,
    official: Option<&BTreeMap<String, u32>>,
) -> Result<Leaderboard> {
    check_unique_tags(runs)?;
    let mut rows = Vec::with_capacity(runs.len() + 1);
    for run in runs {
        let r = precision_at_k(run, qrels, k, level_for_rel)?;
        rows.push(row(run.run_tag(), r.mean, r.std_error, official));
    }
    let labels: HashMap<(&str, &str), u32> = qrels
        .iter()
        .map(|j| ((j.query_id.as_str(), j.passage_id.as_str()), j.relevance()))
        .collect();
    let pooled = union_run(runs, k, |q, p| labels.get(&(q, p)).copied().unwrap_or(0));
    let r = precision_at_k(&pooled, qrels, k, level_for_rel)?;
    rows.push(row(OVERALL, r.mean, r.std_error, None));
    Ok(finish(rows, official))
}

fn check_unique_tags(runs: &[Run]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for run in runs {
        if run.run_tag() == OVERALL {
            return Err(Error::Validation(format!("run tag {OVERALL} is reserved")));
        }
        if !seen.insert(run.run_tag()) {
            return Err(Error::Validation(format!("run tag {} appears twice", run.run_tag())));
        }
    }
    Ok(())
}

fn row(system: &str, score: f64, std_error: f64, official: Option<&BTreeMap<String, u32>>) -> LeaderboardRow {
    LeaderboardRow {
        system: system.to_string(),
        score,
        std_error,
        official_rank: official.and_then(|o| o.get(system).copied()),
    }
}

/// Union of every run's top `depth` passages per query, ordered by `label`
/// descending, then passage id.
fn union_run(runs: &[Run], depth: usize, label: impl Fn(&str, &str) -> u32) -> Run {
    let mut pool: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for run in runs {
        for q in run.query_ids() {
            pool.entry(q).or_default().extend(run.top(q, depth));
        }
    }
    let mut entries = Vec::new();
    for (q, passages) in pool {
        let mut ranked: Vec<&str> = passages.into_iter().collect();
        ranked.sort_by(|a, b| label(q, b).cmp(&label(q, a)).then_with(|| a.cmp(b)));
        for (i, p) in ranked.into_iter().enumerate() {
            entries.push(RunEntry {
                query_id: q.to_string(),
                passage_id: p.to_string(),
                rank: i as u32 + 1,
                score: 0.0,
            });
        }
    }
    Run::new(OVERALL, entries).expect("pooled run is well formed")
}

fn finish(mut rows: Vec<LeaderboardRow>, official: Option<&BTreeMap<String, u32>>) -> Leaderboard {
    rows.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.system.cmp(&b.system))
    });
    let correlation = match official {
        None => Err("no official ranking given".to_string()),
        Some(_) => {
            let ours: BTreeMap<String, f64> = rows
                .iter()
                .filter(|r| r.system != OVERALL && r.official_rank.is_some())
                .map(|r| (r.system.clone(), r.score))
                .collect();
            // better official rank = smaller number
            let theirs: BTreeMap<String, f64> = rows
                .iter()
                .filter_map(|r| r.official_rank.map(|k| (r.system.clone(), -f64::from(k))))
                .collect();
            correlate(&ours, &theirs).map_err(|e| match e {
                Error::Undefined(reason) => reason,
                other => other.to_string(),
            })
        }
    };
    Leaderboard { rows, correlation }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeOverlap {
    Distinct,
    Overlapping,
}

/// Whether the score ± standard error intervals of two rows are disjoint.
pub fn se_overlap_test(a: &LeaderboardRow, b: &LeaderboardRow) -> SeOverlap {
    let (a_lo, a_hi) = (a.score - a.std_error, a.score + a.std_error);
    let (b_lo, b_hi) = (b.score - b.std_error, b.score + b.std_error);
    if a_hi < b_lo || b_hi < a_lo {
        SeOverlap::Distinct
    } else {
        SeOverlap::Overlapping
    }
}

const TSV_HEADER: &str = "system\tscore\tstd_error\tofficial_rank";

pub fn write_leaderboard_tsv(board: &Leaderboard) -> String {
    let mut out = String::from(TSV_HEADER);
    out.push('\n');
    for r in &board.rows {
        let rank = r.official_rank.map(|k| k.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{}\t{:.6}\t{:.6}\t{}", r.system, r.score, r.std_error, rank);
    }
    match &board.correlation {
        Ok(c) => {
            let _ = writeln!(out, "# spearman\t{:.6}", c.spearman);
            let _ = writeln!(out, "# kendall\t{:.6}", c.kendall);
            let _ = writeln!(out, "# n\t{}", c.n);
        }
        Err(reason) => {
            let _ = writeln!(out, "# correlation\tundefined: {reason}");
        }
    }
    out
}

/// Reads rows written by [`write_leaderboard_tsv`]; comment lines are skipped.
pub fn read_leaderboard_tsv(text: &str) -> Result<Vec<LeaderboardRow>> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() || line.starts_with('#') || line == TSV_HEADER {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 2 {
            return Err(Error::parse(
                "leaderboard",
                line_no,
                "expected system and score columns",
            ));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| Error::parse("leaderboard", line_no, format!("{what} {s:?} is not a number")))
        };
        let score = num(cols[1], "score")?;
        let std_error = match cols.get(2) {
            Some(s) if !s.trim().is_empty() => num(s, "std_error")?,
            _ => 0.0,
        };
        let official_rank = match cols.get(3) {
            Some(s) if !s.trim().is_empty() => Some(
                s.trim()
                    .parse()
                    .map_err(|_| Error::parse("leaderboard", line_no, format!("rank {s:?} is not an integer")))?,
            ),
            _ => None,
        };
        rows.push(LeaderboardRow {
            system: cols[0].to_string(),
            score,
            std_error,
            official_rank,
        });
    }
    Ok(rows)
}
