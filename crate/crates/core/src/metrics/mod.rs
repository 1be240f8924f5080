//! Scoring systems from grades.
//!
//! * EXAM Cover: per query, the fraction of exam questions answered by at
//!   least one of a system's top passages.
//! * EXAM Qrels: per passage, a relevance label derived from the questions
//!   it answers, written as a qrels file and scored with Precision@k.
//! * Leaderboards with standard errors, rank correlation against an
//!   official leaderboard, and agreement tables against official judgments.

mod agreement;
mod correlation;
mod cover;
mod leaderboard;
mod precision;

use std::collections::{BTreeMap, BTreeSet};

pub use agreement::{
    agreement_tables, cohens_kappa, min_answers_sweep, AgreementReport, CollapseKind, CollapseSpec, ConfusionTable,
    KappaResult,
};
pub use correlation::{correlate, kendall_tau, spearman, CorrelationStats};
pub use cover::{exam_cover, CoverReport};
pub use leaderboard::{
    leaderboard, precision_leaderboard, read_leaderboard_tsv, se_overlap_test, write_leaderboard_tsv, Leaderboard,
    LeaderboardMetric, LeaderboardRow, SeOverlap, OVERALL,
};
pub use precision::{precision_at_k, PrecisionReport};

use crate::error::{Error, Result};
use crate::model::{Grade, GradeMode, GradePolicy, Judgment, QuestionBank};

/// Grades of one mode, looked up by (query, passage).
#[derive(Debug, Clone)]
pub struct GradeIndex {
    mode: GradeMode,
    by_pair: BTreeMap<(String, String), Vec<Grade>>,
}

impl GradeIndex {
    /// Keeps only grades of `mode`; later grades of the same key replace earlier ones.
    pub fn new<'a>(grades: impl IntoIterator<Item = &'a Grade>, mode: GradeMode) -> Self {
        let mut by_pair: BTreeMap<(String, String), Vec<Grade>> = BTreeMap::new();
        for g in grades.into_iter().filter(|g| g.mode() == mode) {
            let list = by_pair
                .entry((g.query_id().to_string(), g.passage_id().to_string()))
                .or_default();
            match list.iter_mut().find(|x| x.question_id() == g.question_id()) {
                Some(slot) => *slot = g.clone(),
                None => list.push(g.clone()),
            }
        }
        GradeIndex { mode, by_pair }
    }

    pub fn mode(&self) -> GradeMode {
        self.mode
    }

    pub fn grades(&self, query_id: &str, passage_id: &str) -> &[Grade] {
        self.by_pair
            .get(&(query_id.to_string(), passage_id.to_string()))
            .map_or(&[], Vec::as_slice)
    }

    pub fn is_graded(&self, query_id: &str, passage_id: &str) -> bool {
        !self.grades(query_id, passage_id).is_empty()
    }

    /// Every graded (query, passage) pair, sorted.
    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.by_pair.keys().map(|(q, p)| (q.as_str(), p.as_str()))
    }

    pub(crate) fn check_policy(&self, policy: &GradePolicy) -> Result<()> {
        if policy.mode() != self.mode {
            return Err(Error::Contract(format!(
                "policy {policy} used with {} grades",
                self.mode
            )));
        }
        Ok(())
    }

    /// Ids of bank questions that `passage_id` answers under `policy`.
    pub fn answered<'a>(
        &'a self,
        bank: &QuestionBank,
        query_id: &str,
        passage_id: &str,
        policy: &GradePolicy,
    ) -> Result<BTreeSet<&'a str>> {
        let mut out = BTreeSet::new();
        for g in self.grades(query_id, passage_id) {
            if bank.contains(g.question_id()) && policy.is_correct(g)? {
                out.insert(g.question_id());
            }
        }
        Ok(out)
    }
}

/// Relevance label of one passage from its grades.
///
/// Binary: 1 when at least `policy.min_answers()` questions are answered
/// correctly, else 0. Graded: the highest self-rating (a verified answer
/// counts as 1), 0 without grades.
pub fn relevance_label<'a>(
    grades: impl IntoIterator<Item = &'a Grade>,
    policy: &GradePolicy,
    graded: bool,
) -> Result<u32> {
    if graded {
        let mut best = 0u32;
        for g in grades {
            let value = match (g.rating(), g.verified()) {
                (Some(r), _) => u32::from(r),
                (None, Some(v)) => u32::from(v),
                (None, None) => 0,
            };
            best = best.max(value);
        }
        return Ok(best);
    }
    let mut correct = 0u32;
    for g in grades {
        if policy.is_correct(g)? {
            correct += 1;
        }
    }
    Ok(u32::from(correct >= policy.min_answers()))
}

/// One qrels row per graded (query, passage) pair of a bank query. Only
/// questions currently in the bank contribute to labels.
pub fn build_qrels(
    grades: &GradeIndex,
    bank: &QuestionBank,
    policy: &GradePolicy,
    graded: bool,
) -> Result<Vec<Judgment>> {
    grades.check_policy(policy)?;
    let mut out = Vec::new();
    for (query_id, passage_id) in grades.pairs() {
        if bank.questions(query_id).is_empty() {
            continue;
        }
        let in_bank = grades
            .grades(query_id, passage_id)
            .iter()
            .filter(|g| bank.contains(g.question_id()));
        let label = relevance_label(in_bank, policy, graded)?;
        out.push(Judgment::new(query_id, passage_id, label as i32));
    }
    Ok(out)
}

/// Mean and standard error (sample standard deviation over sqrt(n)).
pub(crate) fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
