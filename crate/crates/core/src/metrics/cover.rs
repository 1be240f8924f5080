use std::collections::{BTreeMap, BTreeSet};

use log::warn;

use super::{mean_and_se, GradeIndex};
use crate::error::Result;
use crate::model::{CoverConfig, GradePolicy, QuestionBank, Run};

#[derive(Debug, Clone, PartialEq)]
pub struct CoverReport {
    /// Score per bank query with at least one question.
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
    pub std_error: f64,
    /// Top-ranked (query, passage) pairs with no grades at all; counted as answering nothing.
    pub coverage_gaps: Vec<(String, String)>,
}

/// EXAM Cover of a run: per query, the number of bank questions answered
/// by any of the top `depth` passages, over the number of bank questions.
///
/// Every bank query with questions is scored, including queries the run
/// did not answer (score 0). Queries with empty banks are left out.
pub fn exam_cover(
    run: &Run,
    bank: &QuestionBank,
    grades: &GradeIndex,
    policy: &GradePolicy,
    cover: &CoverConfig,
) -> Result<CoverReport> {
    grades.check_policy(policy)?;
    let mut per_query = BTreeMap::new();
    let mut gaps = Vec::new();
    for (query_id, questions) in bank.iter() {
        if questions.is_empty() {
            continue;
        }
        let mut answered: BTreeSet<&str> = BTreeSet::new();
        for passage_id in run.top(query_id, cover.depth()) {
            if !grades.is_graded(query_id, passage_id) {
                gaps.push((query_id.to_string(), passage_id.to_string()));
                continue;
            }
            answered.extend(grades.answered(bank, query_id, passage_id, policy)?);
        }
        per_query.insert(query_id.to_string(), answered.len() as f64 / questions.len() as f64);
    }
    if !gaps.is_empty() {
        warn!(
            "run {}: {} top-{} passages have no grades and count as answering nothing",
            run.run_tag(),
            gaps.len(),
            cover.depth()
        );
    }
    let scores: Vec<f64> = per_query.values().copied().collect();
    let (mean, std_error) = mean_and_se(&scores);
    Ok(CoverReport {
        per_query,
        mean,
        std_error,
        coverage_gaps: gaps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ExamQuestion, Grade, GradeMode, RunEntry};

    fn bank(n: usize) -> QuestionBank {
        QuestionBank::from_questions((1..=n).map(|i| ExamQuestion::new(format!("x{i}"), "q1", format!("Q{i}?"))))
            .unwrap()
    }

    fn run(passages: &[&str]) -> Run {
        let entries = passages
            .iter()
            .enumerate()
            .map(|(i, p)| RunEntry {
                query_id: "q1".into(),
                passage_id: p.to_string(),
                rank: i as u32 + 1,
                score: 0.0,
            })
            .collect();
        Run::new("sys", entries).unwrap()
    }

    fn verified(p: &str, q: &str, ok: bool) -> Grade {
        Grade::qa_verified("q1", p, q, None, ok)
    }

    #[test]
    fn union_of_answered_questions() {
        // |Q| = 5; p1 answers {x1, x2}; p2 answers {x2, x3}
        let grades = vec![
            verified("p1", "x1", true),
            verified("p1", "x2", true),
            verified("p1", "x3", false),
            verified("p2", "x2", true),
            verified("p2", "x3", true),
        ];
        let idx = GradeIndex::new(&grades, GradeMode::QaVerified);
        let r = exam_cover(
            &run(&["p1", "p2"]),
            &bank(5),
            &idx,
            &GradePolicy::qa_verified(),
            &CoverConfig::default(),
        )
        .unwrap();
        assert!((r.mean - 0.6).abs() < 1e-12);
        assert!(r.coverage_gaps.is_empty());
    }

    #[test]
    fn nothing_and_everything() {
        let none = vec![verified("p1", "x1", false)];
        let idx = GradeIndex::new(&none, GradeMode::QaVerified);
        let r = exam_cover(
            &run(&["p1"]),
            &bank(2),
            &idx,
            &GradePolicy::qa_verified(),
            &CoverConfig::default(),
        )
        .unwrap();
        assert_eq!(r.mean, 0.0);

        let all = vec![verified("p1", "x1", true), verified("p2", "x2", true)];
        let idx = GradeIndex::new(&all, GradeMode::QaVerified);
        let r = exam_cover(
            &run(&["p1", "p2"]),
            &bank(2),
            &idx,
            &GradePolicy::qa_verified(),
            &CoverConfig::default(),
        )
        .unwrap();
        assert_eq!(r.mean, 1.0);
    }

    #[test]
    fn depth_limits_passages_and_gaps_are_reported() {
        let grades = vec![verified("p2", "x1", true)];
        let idx = GradeIndex::new(&grades, GradeMode::QaVerified);
        let shallow = CoverConfig::new(1).unwrap();
        let r = exam_cover(
            &run(&["p1", "p2"]),
            &bank(1),
            &idx,
            &GradePolicy::qa_verified(),
            &shallow,
        )
        .unwrap();
        assert_eq!(r.mean, 0.0);
        assert_eq!(r.coverage_gaps, vec![("q1".to_string(), "p1".to_string())]);
        let r = exam_cover(
            &run(&["p1", "p2"]),
            &bank(1),
            &idx,
            &GradePolicy::qa_verified(),
            &CoverConfig::default(),
        )
        .unwrap();
        assert_eq!(r.mean, 1.0);
    }

    #[test]
    fn grades_for_removed_questions_do_not_count() {
        let grades = vec![verified("p1", "gone", true)];
        let idx = GradeIndex::new(&grades, GradeMode::QaVerified);
        let r = exam_cover(
            &run(&["p1"]),
            &bank(1),
            &idx,
            &GradePolicy::qa_verified(),
            &CoverConfig::default(),
        )
        .unwrap();
        assert_eq!(r.mean, 0.0);
    }
}
