//! Domain types shared by every stage of the pipeline.
//!
//! Everything here is an immutable value type. Constructors validate the
//! invariants once so downstream code can rely on them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A subtopic of a query; CAR-style collections ask questions per facet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Facet {
    pub facet_id: String,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub facets: Vec<Facet>,
}

impl Query {
    pub fn new(query_id: impl Into<String>, title: impl Into<String>) -> Self {
        Query {
            query_id: query_id.into(),
            title: title.into(),
            facets: Vec::new(),
        }
    }

    pub fn with_facet(mut self, facet_id: impl Into<String>, title: impl Into<String>) -> Self {
        self.facets.push(Facet {
            facet_id: facet_id.into(),
            title: title.into(),
        });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.query_id.trim().is_empty() {
            return Err(Error::Validation("query_id must be non-empty".into()));
        }
        let mut seen = BTreeSet::new();
        for facet in &self.facets {
            if facet.facet_id.trim().is_empty() {
                return Err(Error::Validation(format!(
                    "query {}: facet_id must be non-empty",
                    self.query_id
                )));
            }
            if !seen.insert(facet.facet_id.as_str()) {
                return Err(Error::Validation(format!(
                    "query {}: duplicate facet_id {}",
                    self.query_id, facet.facet_id
                )));
            }
        }
        Ok(())
    }
}

/// Checks a query collection: every query valid, no duplicate query ids.
pub fn validate_queries(queries: &[Query]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for query in queries {
        query.validate()?;
        if !seen.insert(query.query_id.as_str()) {
            return Err(Error::Validation(format!("duplicate query_id {}", query.query_id)));
        }
    }
    Ok(())
}

/// One exam question. A `gold_answer` enables answer-verification grading.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamQuestion {
    pub question_id: String,
    pub query_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub facet_id: Option<String>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
}

impl ExamQuestion {
    pub fn new(question_id: impl Into<String>, query_id: impl Into<String>, text: impl Into<String>) -> Self {
        ExamQuestion {
            question_id: question_id.into(),
            query_id: query_id.into(),
            facet_id: None,
            text: text.into(),
            gold_answer: None,
        }
    }

    pub fn with_facet(mut self, facet_id: impl Into<String>) -> Self {
        self.facet_id = Some(facet_id.into());
        self
    }

    pub fn with_gold_answer(mut self, answer: impl Into<String>) -> Self {
        self.gold_answer = Some(answer.into());
        self
    }

    pub fn supports_verification(&self) -> bool {
        self.gold_answer.as_deref().is_some_and(|a| !a.trim().is_empty())
    }

    fn validate(&self) -> Result<()> {
        if self.question_id.trim().is_empty() {
            return Err(Error::Validation("question_id must be non-empty".into()));
        }
        if self.text.trim().is_empty() {
            return Err(Error::Validation(format!(
                "question {} has empty text",
                self.question_id
            )));
        }
        Ok(())
    }
}

/// The secret exam: an ordered list of questions per query.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QuestionBank {
    queries: BTreeMap<String, Vec<ExamQuestion>>,
    ids: BTreeSet<String>,
}

impl QuestionBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_questions(questions: impl IntoIterator<Item = ExamQuestion>) -> Result<Self> {
        let mut bank = QuestionBank::new();
        for q in questions {
            bank.push(q)?;
        }
        Ok(bank)
    }

    /// Registers a query even if it ends up with no questions.
    pub fn ensure_query(&mut self, query_id: &str) {
        self.queries.entry(query_id.to_string()).or_default();
    }

    pub fn push(&mut self, question: ExamQuestion) -> Result<()> {
        question.validate()?;
        if question.query_id.trim().is_empty() {
            return Err(Error::Validation(format!(
                "question {} has empty query_id",
                question.question_id
            )));
        }
        if !self.ids.insert(question.question_id.clone()) {
            return Err(Error::Validation(format!(
                "duplicate question_id {}",
                question.question_id
            )));
        }
        self.queries
            .entry(question.query_id.clone())
            .or_default()
            .push(question);
        Ok(())
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.queries.keys().map(String::as_str)
    }

    /// Questions for a query, in bank order; empty if the query is unknown.
    pub fn questions(&self, query_id: &str) -> &[ExamQuestion] {
        self.queries.get(query_id).map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[ExamQuestion])> {
        self.queries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn all_questions(&self) -> impl Iterator<Item = &ExamQuestion> {
        self.queries.values().flatten()
    }

    pub fn get(&self, question_id: &str) -> Option<&ExamQuestion> {
        if !self.ids.contains(question_id) {
            return None;
        }
        self.all_questions().find(|q| q.question_id == question_id)
    }

    pub fn contains(&self, question_id: &str) -> bool {
        self.ids.contains(question_id)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// A unit of retrieved or generated text that gets graded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub passage_id: String,
    pub text: String,
}

impl Passage {
    pub fn new(passage_id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let passage = Passage {
            passage_id: passage_id.into(),
            text: text.into(),
        };
        passage.validate()?;
        Ok(passage)
    }

    pub fn validate(&self) -> Result<()> {
        if self.passage_id.trim().is_empty() {
            return Err(Error::Validation("passage_id must be non-empty".into()));
        }
        if self.text.trim().is_empty() {
            return Err(Error::Validation(format!("passage {} has empty text", self.passage_id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub query_id: String,
    pub passage_id: String,
    pub rank: u32,
    pub score: f64,
}

/// A system's ranked passages for every query it answered.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    run_tag: String,
    rankings: BTreeMap<String, Vec<RunEntry>>,
}

impl Run {
    /// Builds a run, sorting each query's entries by rank.
    ///
    /// Rejects rank 0, repeated ranks within a query, and a passage listed
    /// twice for the same query.
    pub fn new(run_tag: impl Into<String>, entries: Vec<RunEntry>) -> Result<Self> {
        let mut rankings: BTreeMap<String, Vec<RunEntry>> = BTreeMap::new();
        for entry in entries {
            if entry.rank == 0 {
                return Err(Error::Validation(format!(
                    "query {} passage {}: rank must be >= 1",
                    entry.query_id, entry.passage_id
                )));
            }
            rankings.entry(entry.query_id.clone()).or_default().push(entry);
        }
        for (query_id, list) in rankings.iter_mut() {
            list.sort_by_key(|e| e.rank);
            for pair in list.windows(2) {
                if pair[0].rank == pair[1].rank {
                    return Err(Error::Validation(format!(
                        "query {query_id}: rank {} appears twice",
                        pair[0].rank
                    )));
                }
            }
            let mut seen = BTreeSet::new();
            for e in list.iter() {
                if !seen.insert(e.passage_id.as_str()) {
                    return Err(Error::Validation(format!(
                        "query {query_id}: passage {} ranked twice",
                        e.passage_id
                    )));
                }
            }
        }
        Ok(Run {
            run_tag: run_tag.into(),
            rankings,
        })
    }

    pub fn run_tag(&self) -> &str {
        &self.run_tag
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.rankings.keys().map(String::as_str)
    }

    pub fn ranking(&self, query_id: &str) -> &[RunEntry] {
        self.rankings.get(query_id).map_or(&[], Vec::as_slice)
    }

    /// Passage ids of the first `depth` entries for a query.
    pub fn top(&self, query_id: &str, depth: usize) -> impl Iterator<Item = &str> {
        self.ranking(query_id).iter().take(depth).map(|e| e.passage_id.as_str())
    }

    pub fn entries(&self) -> impl Iterator<Item = &RunEntry> {
        self.rankings.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.rankings.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradeMode {
    /// Question answered by the model and checked against the gold answer.
    QaVerified,
    /// Model self-rates answerability on a 0-5 scale.
    SelfRated,
}

impl fmt::Display for GradeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GradeMode::QaVerified => "qa_verified",
            GradeMode::SelfRated => "self_rated",
        })
    }
}

pub const MAX_RATING: u8 = 5;

/// Outcome of grading one question against one passage.
///
/// Fields are private so the mode invariant holds for every value: a
/// verified grade has a flag and no rating, a self-rated grade has a rating
/// in `0..=5` and no flag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GradeRecord", into = "GradeRecord")]
pub struct Grade {
    query_id: String,
    passage_id: String,
    question_id: String,
    answer_text: Option<String>,
    outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Verified(bool),
    Rated(u8),
}

/// Identity of a grade in the store; re-grading the same key supersedes it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GradeKey {
    pub query_id: String,
    pub passage_id: String,
    pub question_id: String,
    pub mode: GradeMode,
}

impl Grade {
    pub fn qa_verified(
        query_id: impl Into<String>,
        passage_id: impl Into<String>,
        question_id: impl Into<String>,
        answer_text: Option<String>,
        verified: bool,
    ) -> Self {
        Grade {
            query_id: query_id.into(),
            passage_id: passage_id.into(),
            question_id: question_id.into(),
            answer_text,
            outcome: Outcome::Verified(verified),
        }
    }

    pub fn self_rated(
        query_id: impl Into<String>,
        passage_id: impl Into<String>,
        question_id: impl Into<String>,
        answer_text: Option<String>,
        rating: u8,
    ) -> Result<Self> {
        if rating > MAX_RATING {
            return Err(Error::Validation(format!(
                "self-rating {rating} outside 0..={MAX_RATING}"
            )));
        }
        Ok(Grade {
            query_id: query_id.into(),
            passage_id: passage_id.into(),
            question_id: question_id.into(),
            answer_text,
            outcome: Outcome::Rated(rating),
        })
    }

    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    pub fn passage_id(&self) -> &str {
        &self.passage_id
    }

    pub fn question_id(&self) -> &str {
        &self.question_id
    }

    pub fn answer_text(&self) -> Option<&str> {
        self.answer_text.as_deref()
    }

    pub fn mode(&self) -> GradeMode {
        match self.outcome {
            Outcome::Verified(_) => GradeMode::QaVerified,
            Outcome::Rated(_) => GradeMode::SelfRated,
        }
    }

    pub fn verified(&self) -> Option<bool> {
        match self.outcome {
            Outcome::Verified(v) => Some(v),
            Outcome::Rated(_) => None,
        }
    }

    pub fn rating(&self) -> Option<u8> {
        match self.outcome {
            Outcome::Rated(r) => Some(r),
            Outcome::Verified(_) => None,
        }
    }

    pub fn key(&self) -> GradeKey {
        GradeKey {
            query_id: self.query_id.clone(),
            passage_id: self.passage_id.clone(),
            question_id: self.question_id.clone(),
            mode: self.mode(),
        }
    }
}

/// On-disk shape of a grade; conversion back into [`Grade`] re-checks the mode invariant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct GradeRecord {
    query_id: String,
    passage_id: String,
    question_id: String,
    mode: GradeMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    answer_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    verified: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rating: Option<u8>,
}

impl TryFrom<GradeRecord> for Grade {
    type Error = Error;

    fn try_from(r: GradeRecord) -> Result<Self> {
        match (r.mode, r.verified, r.rating) {
            (GradeMode::QaVerified, Some(v), None) => Ok(Grade::qa_verified(
                r.query_id,
                r.passage_id,
                r.question_id,
                r.answer_text,
                v,
            )),
            (GradeMode::SelfRated, None, Some(rating)) => {
                Grade::self_rated(r.query_id, r.passage_id, r.question_id, r.answer_text, rating)
            }
            (mode, verified, rating) => Err(Error::Validation(format!(
                "grade mode {mode} inconsistent with verified={verified:?} rating={rating:?}"
            ))),
        }
    }
}

impl From<Grade> for GradeRecord {
    fn from(g: Grade) -> Self {
        GradeRecord {
            mode: g.mode(),
            verified: g.verified(),
            rating: g.rating(),
            query_id: g.query_id,
            passage_id: g.passage_id,
            question_id: g.question_id,
            answer_text: g.answer_text,
        }
    }
}

/// What counts as a correctly answered question.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradePolicy {
    mode: GradeMode,
    min_rating: u8,
    min_answers: u32,
}

impl GradePolicy {
    pub fn qa_verified() -> Self {
        GradePolicy {
            mode: GradeMode::QaVerified,
            min_rating: 1,
            min_answers: 1,
        }
    }

    pub fn self_rated(min_rating: u8) -> Result<Self> {
        if !(1..=MAX_RATING).contains(&min_rating) {
            return Err(Error::Validation(format!(
                "min_rating {min_rating} outside 1..={MAX_RATING}"
            )));
        }
        Ok(GradePolicy {
            mode: GradeMode::SelfRated,
            min_rating,
            min_answers: 1,
        })
    }

    pub fn with_min_answers(mut self, min_answers: u32) -> Result<Self> {
        if min_answers == 0 {
            return Err(Error::Validation("min_answers must be >= 1".into()));
        }
        self.min_answers = min_answers;
        Ok(self)
    }

    pub fn mode(&self) -> GradeMode {
        self.mode
    }

    pub fn min_rating(&self) -> u8 {
        self.min_rating
    }

    pub fn min_answers(&self) -> u32 {
        self.min_answers
    }

    /// Whether `grade` counts as a correct answer under this policy.
    pub fn is_correct(&self, grade: &Grade) -> Result<bool> {
        match (self.mode, grade.outcome) {
            (GradeMode::QaVerified, Outcome::Verified(v)) => Ok(v),
            (GradeMode::SelfRated, Outcome::Rated(r)) => Ok(r >= self.min_rating),
            (policy_mode, _) => Err(Error::Contract(format!(
                "policy mode {policy_mode} applied to {} grade",
                grade.mode()
            ))),
        }
    }
}

impl fmt::Display for GradePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mode {
            GradeMode::QaVerified => f.write_str("qa")?,
            GradeMode::SelfRated => write!(f, "rate:{}", self.min_rating)?,
        }
        if self.min_answers != 1 {
            write!(f, "+min-answers={}", self.min_answers)?;
        }
        Ok(())
    }
}

/// Parses `qa` or `rate:<min_rating>`, optionally followed by `+min-answers=<n>`.
impl FromStr for GradePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Validation(format!(
                "invalid policy {s:?}; expected qa | rate:<n>[+min-answers=<n>]"
            ))
        };
        let (base, extra) = match s.split_once('+') {
            Some((b, e)) => (b, Some(e)),
            None => (s, None),
        };
        let policy = match base.trim() {
            "qa" => GradePolicy::qa_verified(),
            other => {
                let level = other.strip_prefix("rate:").ok_or_else(bad)?;
                let level: u8 = level.trim().parse().map_err(|_| bad())?;
                GradePolicy::self_rated(level)?
            }
        };
        match extra {
            None => Ok(policy),
            Some(e) => {
                let n = e.trim().strip_prefix("min-answers=").ok_or_else(bad)?;
                let n: u32 = n.trim().parse().map_err(|_| bad())?;
                policy.with_min_answers(n)
            }
        }
    }
}

/// Shorthand for [`GradePolicy::is_correct`].
pub fn policy_is_correct(grade: &Grade, policy: &GradePolicy) -> Result<bool> {
    policy.is_correct(grade)
}

/// A relevance judgment row as found in qrels files.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Judgment {
    pub query_id: String,
    pub passage_id: String,
    pub grade: i32,
}

impl Judgment {
    pub fn new(query_id: impl Into<String>, passage_id: impl Into<String>, grade: i32) -> Self {
        Judgment {
            query_id: query_id.into(),
            passage_id: passage_id.into(),
            grade,
        }
    }

    /// Grade with negative values (e.g. -2 "junk") clamped to 0.
    pub fn relevance(&self) -> u32 {
        self.grade.max(0) as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoverConfig {
    depth: usize,
}

impl CoverConfig {
    pub const DEFAULT_DEPTH: usize = 20;

    pub fn new(depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Validation("depth must be >= 1".into()));
        }
        Ok(CoverConfig { depth })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }
}

impl Default for CoverConfig {
    fn default() -> Self {
        CoverConfig {
            depth: Self::DEFAULT_DEPTH,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rated(r: u8) -> Grade {
        Grade::self_rated("q1", "p1", "x", None, r).unwrap()
    }

    #[test]
    fn rating_at_threshold_is_correct() {
        let policy = GradePolicy::self_rated(4).unwrap();
        assert!(policy_is_correct(&rated(4), &policy).unwrap());
    }

    #[test]
    fn zero_rating_never_correct() {
        let policy = GradePolicy::self_rated(1).unwrap();
        assert!(!policy_is_correct(&rated(0), &policy).unwrap());
    }

    #[test]
    fn verified_passes_through() {
        let g = Grade::qa_verified("q1", "p1", "x", Some("epidermis".into()), true);
        assert!(policy_is_correct(&g, &GradePolicy::qa_verified()).unwrap());
        let g = Grade::qa_verified("q1", "p1", "x", None, false);
        assert!(!policy_is_correct(&g, &GradePolicy::qa_verified()).unwrap());
    }

    #[test]
    fn mode_mismatch_is_contract_error() {
        let err = policy_is_correct(&rated(3), &GradePolicy::qa_verified()).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn rating_above_five_rejected() {
        assert!(Grade::self_rated("q", "p", "x", None, 6).is_err());
    }

    #[test]
    fn policy_grammar() {
        assert_eq!("qa".parse::<GradePolicy>().unwrap(), GradePolicy::qa_verified());
        let p: GradePolicy = "rate:4+min-answers=2".parse().unwrap();
        assert_eq!(p.min_rating(), 4);
        assert_eq!(p.min_answers(), 2);
        assert_eq!(p.to_string(), "rate:4+min-answers=2");
        assert!("rate:0".parse::<GradePolicy>().is_err());
        assert!("rate:6".parse::<GradePolicy>().is_err());
        assert!("rate:4+min-answers=0".parse::<GradePolicy>().is_err());
        assert!("strict".parse::<GradePolicy>().is_err());
    }

    #[test]
    fn run_sorts_and_validates() {
        let e = |p: &str, rank| RunEntry {
            query_id: "q1".into(),
            passage_id: p.into(),
            rank,
            score: 0.0,
        };
        let run = Run::new("sys", vec![e("b", 2), e("a", 1)]).unwrap();
        let ids: Vec<_> = run.top("q1", 10).collect();
        assert_eq!(ids, ["a", "b"]);
        assert!(Run::new("sys", vec![e("a", 1), e("b", 1)]).is_err());
        assert!(Run::new("sys", vec![e("a", 1), e("a", 2)]).is_err());
        assert!(Run::new("sys", vec![e("a", 0)]).is_err());
    }

    #[test]
    fn bank_rejects_duplicates_and_mismatched_text() {
        let mut bank = QuestionBank::new();
        bank.push(ExamQuestion::new("a", "q1", "What?")).unwrap();
        assert!(bank.push(ExamQuestion::new("a", "q2", "Other?")).is_err());
        assert!(bank.push(ExamQuestion::new("b", "q1", "  ")).is_err());
        assert_eq!(bank.len(), 1);
    }

    #[test]
    fn query_facets_must_be_unique() {
        let q = Query::new("q", "t").with_facet("f", "a").with_facet("f", "b");
        assert!(q.validate().is_err());
        assert!(validate_queries(&[Query::new("q", "t"), Query::new("q", "u")]).is_err());
    }

    #[test]
    fn negative_judgments_clamp() {
        assert_eq!(Judgment::new("q", "p", -2).relevance(), 0);
        assert_eq!(Judgment::new("q", "p", 3).relevance(), 3);
    }

    proptest! {
        #[test]
        fn lowering_threshold_keeps_correct(rating in 0u8..=5, hi in 1u8..=5, lo in 1u8..=5) {
            let (lo, hi) = (lo.min(hi), lo.max(hi));
            let g = rated(rating);
            let strict = GradePolicy::self_rated(hi).unwrap().is_correct(&g).unwrap();
            let lenient = GradePolicy::self_rated(lo).unwrap().is_correct(&g).unwrap();
            prop_assert!(!strict || lenient);
        }

        #[test]
        fn record_conversion_enforces_mode(
            self_rated in any::<bool>(),
            verified in proptest::option::of(any::<bool>()),
            rating in proptest::option::of(0u8..=7),
        ) {
            let record = GradeRecord {
                query_id: "q".into(),
                passage_id: "p".into(),
                question_id: "x".into(),
                mode: if self_rated { GradeMode::SelfRated } else { GradeMode::QaVerified },
                answer_text: None,
                verified,
                rating,
            };
            let valid = if self_rated {
                verified.is_none() && rating.is_some_and(|r| r <= 5)
            } else {
                verified.is_some() && rating.is_none()
            };
            let converted = Grade::try_from(record);
            prop_assert_eq!(converted.is_ok(), valid);
            if let Ok(g) = converted {
                prop_assert_eq!(g.verified().is_some(), !self_rated);
                prop_assert_eq!(g.rating().is_some(), self_rated);
            }
        }
    }
}
