//! Question bank generation from queries, and the effect of bank edits on
//! relevance labels.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use log::{info, warn};

use crate::error::{Error, Result};
use crate::gateway::{render_question_gen_prompt, CompletionRequest, Gateway, PromptTemplate, RequestKey, Task};
use crate::metrics::{relevance_label, GradeIndex};
use crate::model::{validate_queries, ExamQuestion, Facet, Grade, GradePolicy, Query, QuestionBank};

/// Extracts questions from a completion. Tries a bracketed list of quoted
/// strings, then numbered or bulleted lines, then lines ending in `?`.
pub fn parse_question_list(completion: &str) -> Vec<String> {
    for parse in [quoted_list, marked_lines, question_lines] {
        let found = clean(parse(completion));
        if !found.is_empty() {
            return found;
        }
    }
    Vec::new()
}

fn clean(items: Vec<String>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    items
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty() && seen.insert(s.clone()))
        .collect()
}

fn quoted_list(text: &str) -> Vec<String> {
    let (Some(open), Some(close)) = (text.find('['), text.rfind(']')) else {
        return Vec::new();
    };
    if close < open {
        return Vec::new();
    }
    let inner = &text[open + 1..close];
    let mut out = Vec::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c != '"' && c != '\'' {
            continue;
        }
        let quote = c;
        let mut item = String::new();
        let mut closed = false;
        while let Some(d) = chars.next() {
            match d {
                '\\' => match chars.next() {
                    Some('n') => item.push(' '),
                    Some(e) => item.push(e),
                    None => break,
                },
                d if d == quote => {
                    closed = true;
                    break;
                }
                d => item.push(d),
            }
        }
        if closed {
            out.push(item);
        }
    }
    out
}

fn strip_marker(line: &str) -> Option<&str> {
    let line = line.trim_start();
    for bullet in ["- ", "* ", "• "] {
        if let Some(rest) = line.strip_prefix(bullet) {
            return Some(rest);
        }
    }
    let digits = line.chars().take_while(char::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let rest = &line[digits..];
    let rest = rest.strip_prefix(['.', ')', ':'])?;
    rest.starts_with(char::is_whitespace).then_some(rest)
}

fn marked_lines(text: &str) -> Vec<String> {
    text.lines().filter_map(strip_marker).map(str::to_string).collect()
}

fn question_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| l.ends_with('?'))
        .map(str::to_string)
        .collect()
}

struct Unit<'a> {
    query: &'a Query,
    facet: Option<&'a Facet>,
}

/// Generates one question list per query (query template) or per facet
/// (subtopic template). Question ids are `<query_id>/<facet_id or q>/<n>`.
///
/// A unit whose completion fails or parses to nothing is retried once and
/// then kept with zero questions. The bank lists every query, even empty ones.
pub fn generate_bank(queries: &[Query], template: PromptTemplate, gateway: &Gateway) -> Result<QuestionBank> {
    if !template.is_question_gen() {
        return Err(Error::Contract(format!(
            "{template} is not a question-generation template"
        )));
    }
    validate_queries(queries)?;
    let mut units = Vec::new();
    for query in queries {
        match template {
            PromptTemplate::QuestionGenCar => {
                if query.facets.is_empty() {
                    return Err(Error::Validation(format!(
                        "query {} has no facets; the subtopic template needs them",
                        query.query_id
                    )));
                }
                units.extend(query.facets.iter().map(|f| Unit { query, facet: Some(f) }));
            }
            _ => units.push(Unit { query, facet: None }),
        }
    }
    let prompts = units
        .iter()
        .map(|u| render_question_gen_prompt(template, u.query, u.facet))
        .collect::<Result<Vec<_>>>()?;
    info!("generating questions for {} units with {template}", units.len());

    let workers = gateway.config().parallelism.min(units.len()).max(1);
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (units, prompts, next) = (&units, &prompts, &next);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(unit) = units.get(i) else { break };
                let request = CompletionRequest {
                    prompt: prompts[i].clone(),
                    task: Task::QuestionGen,
                    key: RequestKey {
                        query_id: Some(unit.query.query_id.clone()),
                        facet_id: unit.facet.map(|f| f.facet_id.clone()),
                        question_id: None,
                        passage_id: None,
                    },
                };
                if tx.send((i, ask_twice(gateway, &request))).is_err() {
                    break;
                }
            });
        }
    });
    drop(tx);
    let mut results: Vec<(usize, Vec<String>)> = rx.into_iter().collect();
    results.sort_by_key(|(i, _)| *i);

    let mut bank = QuestionBank::new();
    for (i, questions) in results {
        let unit = &units[i];
        let qid = &unit.query.query_id;
        bank.ensure_query(qid);
        let scope = unit.facet.map_or("q", |f| f.facet_id.as_str());
        if questions.is_empty() {
            warn!("no questions generated for query {qid} ({scope})");
        }
        for (n, text) in questions.into_iter().enumerate() {
            let mut q = ExamQuestion::new(format!("{qid}/{scope}/{}", n + 1), qid.clone(), text);
            if let Some(f) = unit.facet {
                q = q.with_facet(f.facet_id.clone());
            }
            bank.push(q)?;
        }
    }
    Ok(bank)
}

fn ask_twice(gateway: &Gateway, request: &CompletionRequest) -> Vec<String> {
    for attempt in 1..=2 {
        match gateway.complete(request) {
            Ok(response) => {
                let questions = parse_question_list(&response.text);
                if !questions.is_empty() {
                    return questions;
                }
                warn!("{}: attempt {attempt} produced no parseable questions", request.key);
            }
            Err(e) => warn!("{}: attempt {attempt} failed: {e}", request.key),
        }
    }
    Vec::new()
}

/// A passage whose binary label changes between two banks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelFlip {
    pub query_id: String,
    pub passage_id: String,
    pub old_label: u32,
    pub new_label: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BankDiffReport {
    pub added: Vec<String>,
    pub removed: Vec<String>,
    pub edited: Vec<String>,
    /// Added questions without grades, and every edited question.
    pub needs_grading: Vec<String>,
    pub flips: Vec<LabelFlip>,
}

impl BankDiffReport {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.edited.is_empty() && self.flips.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (title, ids) in [
            ("added", &self.added),
            ("removed", &self.removed),
            ("edited", &self.edited),
            ("needs grading", &self.needs_grading),
        ] {
            let _ = writeln!(out, "{title}: {}", ids.len());
            for id in ids {
                let _ = writeln!(out, "  {id}");
            }
        }
        let _ = writeln!(out, "label flips: {}", self.flips.len());
        for f in &self.flips {
            let _ = writeln!(
                out,
                "  {} {} {}->{}",
                f.query_id, f.passage_id, f.old_label, f.new_label
            );
        }
        out
    }
}

/// Compares two banks and lists passages whose binary label under `policy`
/// differs. Edited questions keep their existing grades, so they cause no
/// flips until regraded.
pub fn diff_banks(
    old: &QuestionBank,
    new: &QuestionBank,
    grades: &[Grade],
    policy: &GradePolicy,
) -> Result<BankDiffReport> {
    let index = GradeIndex::new(grades, policy.mode());
    let graded_questions: BTreeSet<&str> = grades
        .iter()
        .filter(|g| g.mode() == policy.mode())
        .map(Grade::question_id)
        .collect();

    let mut report = BankDiffReport::default();
    let mut affected: BTreeSet<String> = BTreeSet::new();
    for q in new.all_questions() {
        match old.get(&q.question_id) {
            None => {
                report.added.push(q.question_id.clone());
                if !graded_questions.contains(q.question_id.as_str()) {
                    report.needs_grading.push(q.question_id.clone());
                }
                affected.insert(q.query_id.clone());
            }
            Some(before) if before != q => {
                report.edited.push(q.question_id.clone());
                report.needs_grading.push(q.question_id.clone());
                affected.insert(q.query_id.clone());
                affected.insert(before.query_id.clone());
            }
            Some(_) => {}
        }
    }
    for q in old.all_questions() {
        if !new.contains(&q.question_id) {
            report.removed.push(q.question_id.clone());
            affected.insert(q.query_id.clone());
        }
    }
    for list in [
        &mut report.added,
        &mut report.removed,
        &mut report.edited,
        &mut report.needs_grading,
    ] {
        list.sort();
    }

    let label = |bank: &QuestionBank, q: &str, p: &str| -> Result<u32> {
        let in_bank = index
            .grades(q, p)
            .iter()
            .filter(|g| bank.get(g.question_id()).is_some_and(|x| x.query_id == q));
        relevance_label(in_bank, policy, false)
    };
    let mut by_query: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (q, p) in index.pairs() {
        by_query.entry(q).or_default().push(p);
    }
    for query_id in &affected {
        for &passage_id in by_query.get(query_id.as_str()).map_or(&[][..], Vec::as_slice) {
            let before = label(old, query_id, passage_id)?;
            let after = label(new, query_id, passage_id)?;
            if before != after {
                report.flips.push(LabelFlip {
                    query_id: query_id.clone(),
                    passage_id: passage_id.to_string(),
                    old_label: before,
                    new_label: after,
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{BackendConfig, MockBackend, MockFallback, MockFixture, MockRule};
    use std::sync::Arc;

    #[test]
    fn parse_canonical_list() {
        assert_eq!(parse_question_list(r#"["A?", "B?"]"#), ["A?", "B?"]);
        assert_eq!(
            parse_question_list("Sure! ['What is skin?', \"Why's it thick?\", 'What is skin?']"),
            ["What is skin?", "Why's it thick?"]
        );
    }

    #[test]
    fn parse_fallbacks() {
        assert_eq!(parse_question_list("1. A?\n2. B?"), ["A?", "B?"]);
        assert_eq!(parse_question_list("Questions:\n- A?\n* B\n3) C?"), ["A?", "B", "C?"]);
        assert_eq!(
            parse_question_list("Here:\nWhat is X?\nnot a question\n  Why Y?  "),
            ["What is X?", "Why Y?"]
        );
        assert!(parse_question_list("no questions").is_empty());
        assert!(parse_question_list("[]").is_empty());
        assert!(parse_question_list("").is_empty());
        // a year is not a list marker
        assert!(parse_question_list("2024 was a year").is_empty());
    }

    fn gateway(fixture: MockFixture, parallelism: usize) -> Gateway {
        let config = BackendConfig {
            parallelism,
            ..BackendConfig::default()
        };
        Gateway::new(Arc::new(MockBackend::new(fixture)), config).unwrap()
    }

    fn ten_questions() -> String {
        let qs: Vec<String> = (1..=10).map(|i| format!("\"Question {i}?\"")).collect();
        format!("[{}]", qs.join(", "))
    }

    #[test]
    fn fixed_list_gives_ten_per_query() {
        let fixture = MockFixture {
            rules: vec![MockRule {
                task: Some("question_gen".into()),
                response: Some(ten_questions()),
                ..MockRule::default()
            }],
            fallback: MockFallback::Empty,
        };
        let queries: Vec<Query> = (1..=5)
            .map(|i| Query::new(format!("q{i}"), format!("topic {i}")))
            .collect();
        let bank = generate_bank(&queries, PromptTemplate::QuestionGenDl, &gateway(fixture.clone(), 3)).unwrap();
        assert_eq!(bank.len(), 50);
        assert_eq!(bank.questions("q3")[9].question_id, "q3/q/10");
        let again = generate_bank(&queries, PromptTemplate::QuestionGenDl, &gateway(fixture, 1)).unwrap();
        assert_eq!(bank, again);
    }

    #[test]
    fn garbage_gives_empty_query_after_retry() {
        let fixture = MockFixture {
            rules: vec![],
            fallback: MockFallback::Text("I cannot help with that".into()),
        };
        let gw = gateway(fixture, 1);
        let queries = [Query::new("q1", "skin")];
        let bank = generate_bank(&queries, PromptTemplate::QuestionGenDl, &gw).unwrap();
        assert!(bank.questions("q1").is_empty());
        assert_eq!(bank.query_ids().collect::<Vec<_>>(), ["q1"]);
        assert_eq!(gw.request_count(), 2);
    }

    #[test]
    fn facets_get_their_own_ids() {
        let gw = gateway(MockFixture::default(), 2);
        let queries = [Query::new("tqa2:L_0384", "The Integumentary System")
            .with_facet("f1", "Structure of the Skin")
            .with_facet("f2", "Functions of the Skin")];
        let bank = generate_bank(&queries, PromptTemplate::QuestionGenCar, &gw).unwrap();
        let qs = bank.questions("tqa2:L_0384");
        assert!(!qs.is_empty());
        assert!(qs.iter().any(|q| q.question_id.starts_with("tqa2:L_0384/f1/")));
        assert!(qs.iter().any(|q| q.question_id.starts_with("tqa2:L_0384/f2/")));
        assert!(qs.iter().all(|q| q.gold_answer.is_none()));
        assert!(generate_bank(&[Query::new("q", "t")], PromptTemplate::QuestionGenCar, &gw).is_err());
        assert!(generate_bank(&queries, PromptTemplate::Qa, &gw).is_err());
    }

    fn two_question_bank() -> QuestionBank {
        QuestionBank::from_questions([
            ExamQuestion::new("q1/q/1", "q1", "What is A?"),
            ExamQuestion::new("q1/q/2", "q1", "What is B?"),
        ])
        .unwrap()
    }

    fn grades() -> Vec<Grade> {
        vec![
            Grade::self_rated("q1", "p1", "q1/q/1", None, 5).unwrap(),
            Grade::self_rated("q1", "p1", "q1/q/2", None, 0).unwrap(),
            Grade::self_rated("q1", "p2", "q1/q/1", None, 4).unwrap(),
            Grade::self_rated("q1", "p2", "q1/q/2", None, 4).unwrap(),
        ]
    }

    #[test]
    fn identical_banks_diff_empty() {
        let bank = two_question_bank();
        let policy = GradePolicy::self_rated(4).unwrap();
        let report = diff_banks(&bank, &bank, &grades(), &policy).unwrap();
        assert!(report.is_empty());
        assert!(report.needs_grading.is_empty());
    }

    #[test]
    fn removing_only_answered_question_flips() {
        let old = two_question_bank();
        let new = QuestionBank::from_questions([ExamQuestion::new("q1/q/2", "q1", "What is B?")]).unwrap();
        let policy = GradePolicy::self_rated(4).unwrap();
        let report = diff_banks(&old, &new, &grades(), &policy).unwrap();
        assert_eq!(report.removed, ["q1/q/1"]);
        assert_eq!(
            report.flips,
            [LabelFlip {
                query_id: "q1".into(),
                passage_id: "p1".into(),
                old_label: 1,
                new_label: 0
            }]
        );
    }

    #[test]
    fn ungraded_addition_needs_grading() {
        let old = two_question_bank();
        let mut new = old.clone();
        new.push(ExamQuestion::new("q1/q/3", "q1", "What is C?")).unwrap();
        let policy = GradePolicy::self_rated(4).unwrap();
        let report = diff_banks(&old, &new, &grades(), &policy).unwrap();
        assert_eq!(report.added, ["q1/q/3"]);
        assert_eq!(report.needs_grading, ["q1/q/3"]);
        assert!(report.flips.is_empty());
    }

    #[test]
    fn edits_are_flagged() {
        let old = two_question_bank();
        let new = QuestionBank::from_questions([
            ExamQuestion::new("q1/q/1", "q1", "What exactly is A?"),
            ExamQuestion::new("q1/q/2", "q1", "What is B?"),
        ])
        .unwrap();
        let policy = GradePolicy::self_rated(4).unwrap();
        let report = diff_banks(&old, &new, &grades(), &policy).unwrap();
        assert_eq!(report.edited, ["q1/q/1"]);
        assert_eq!(report.needs_grading, ["q1/q/1"]);
        assert!(report.render().contains("edited: 1\n  q1/q/1\n"));
    }
}
