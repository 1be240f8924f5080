//! Scripted backend for tests and offline runs.
//!
//! A fixture is a JSON document of rules matched in order against each
//! request; the first rule whose fields all match supplies the response.
//! Unmatched requests go to the fallback:
//!
//! ```json
//! {
//!   "rules": [
//!     { "task": "qa", "question_id": "NDQ_007535", "response": "epidermis" },
//!     { "task": "self_rating", "passage_id": "p7", "transient_failures": 2, "response": "4" },
//!     { "task": "qa", "passage_id": "broken", "fail": "model crashed" }
//!   ],
//!   "fallback": "lexical"
//! }
//! ```
//!
//! The `lexical` fallback answers from word overlap between question and
//! context, which gives deterministic but non-trivial grades.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::atomic::{AtomicU32, Ordering};

use serde::{Deserialize, Serialize};

use super::{AttemptError, Backend, BackendConfig, CompletionRequest, Task};
use crate::error::{Error, Result};
use crate::text::{content_terms, is_stopword, stem, words};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub facet_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passage_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    /// Fail with this message on every matching request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail: Option<String>,
    /// Matching requests fail transiently this many times before succeeding.
    #[serde(default)]
    pub transient_failures: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockFallback {
    #[default]
    Lexical,
    Empty,
    Fail,
    Text(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockFixture {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default)]
    pub fallback: MockFallback,
}

impl MockFixture {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Validation(format!("mock fixture {}: {e}", path.display())))
    }
}

pub struct MockBackend {
    fixture: MockFixture,
    failures_served: Vec<AtomicU32>,
}

impl MockBackend {
    pub fn new(fixture: MockFixture) -> Self {
        let failures_served = fixture.rules.iter().map(|_| AtomicU32::new(0)).collect();
        MockBackend {
            fixture,
            failures_served,
        }
    }

    pub fn lexical() -> Self {
        Self::new(MockFixture::default())
    }

    fn matches(rule: &MockRule, request: &CompletionRequest) -> bool {
        let key = &request.key;
        let field = |want: &Option<String>, have: &Option<String>| match want {
            None => true,
            Some(w) => have.as_deref() == Some(w.as_str()),
        };
        rule.task.as_deref().is_none_or(|t| t == request.task.name())
            && field(&rule.query_id, &key.query_id)
            && field(&rule.facet_id, &key.facet_id)
            && field(&rule.question_id, &key.question_id)
            && field(&rule.passage_id, &key.passage_id)
            && rule
                .prompt_contains
                .as_deref()
                .is_none_or(|s| request.prompt.contains(s))
    }
}

impl Backend for MockBackend {
    fn id(&self) -> String {
        "mock".into()
    }

    fn attempt(&self, request: &CompletionRequest, _: &BackendConfig) -> Result<String, AttemptError> {
        for (idx, rule) in self.fixture.rules.iter().enumerate() {
            if !Self::matches(rule, request) {
                continue;
            }
            if let Some(msg) = &rule.fail {
                return Err(AttemptError::Fatal(msg.clone()));
            }
            if rule.transient_failures > 0 {
                let served = self.failures_served[idx].fetch_add(1, Ordering::SeqCst);
                if served < rule.transient_failures {
                    return Err(AttemptError::Transient("HTTP 429 (scripted)".into()));
                }
            }
            return Ok(rule.response.clone().unwrap_or_default());
        }
        match &self.fixture.fallback {
            MockFallback::Lexical => Ok(lexical_response(request)),
            MockFallback::Empty => Ok(String::new()),
            MockFallback::Text(t) => Ok(t.clone()),
            MockFallback::Fail => Err(AttemptError::Fatal(format!(
                "no mock rule for {} [{}]",
                request.task.name(),
                request.key
            ))),
        }
    }
}

fn lexical_response(request: &CompletionRequest) -> String {
    match request.task {
        Task::QuestionGen => lexical_questions(&request.prompt),
        Task::Qa => {
            let (question, context) = split_grading_prompt(&request.prompt);
            lexical_answer(question, context)
        }
        Task::SelfRating => {
            let (question, context) = split_grading_prompt(&request.prompt);
            lexical_rating(question, context).to_string()
        }
    }
}

fn split_grading_prompt(prompt: &str) -> (&str, &str) {
    let Some(ctx_at) = prompt.rfind("\nContext: ") else {
        return ("", "");
    };
    let context = &prompt[ctx_at + "\nContext: ".len()..];
    let head = &prompt[..ctx_at];
    let question = head.rfind("Question: ").map_or("", |i| &head[i + "Question: ".len()..]);
    (question, context)
}

fn lexical_rating(question: &str, context: &str) -> u8 {
    let q: BTreeSet<String> = content_terms(question).into_iter().collect();
    if q.is_empty() {
        return 0;
    }
    let c: BTreeSet<String> = content_terms(context).into_iter().collect();
    let hit = q.intersection(&c).count();
    ((5 * hit) as f64 / q.len() as f64).round() as u8
}

/// First content word of the best-overlapping sentence that the question does not already use.
fn lexical_answer(question: &str, context: &str) -> String {
    let q: BTreeSet<String> = content_terms(question).into_iter().collect();
    let mut best: Option<(usize, &str)> = None;
    for sentence in context.split(['.', '!', '?']) {
        let terms: BTreeSet<String> = content_terms(sentence).into_iter().collect();
        let overlap = terms.intersection(&q).count();
        if overlap > 0 && best.is_none_or(|(b, _)| overlap > b) {
            best = Some((overlap, sentence));
        }
    }
    let Some((_, sentence)) = best else {
        return "unanswerable".into();
    };
    let lower = sentence.to_lowercase();
    let answer = words(&lower)
        .find(|w| !is_stopword(w) && !q.contains(&stem(w)))
        .map_or_else(|| "unanswerable".into(), str::to_string);
    answer
}

fn lexical_questions(prompt: &str) -> String {
    let quoted: Vec<&str> = prompt.split('\'').skip(1).step_by(2).collect();
    let Some(title) = quoted.first().copied() else {
        return "[]".into();
    };
    let subtopic = quoted.iter().copied().find(|s| *s != title);
    let subject = subtopic.unwrap_or(title);
    let mut questions = vec![
        format!("What is {subject}?"),
        format!("How does {subject} work?"),
        format!("Why is {subject} important?"),
        format!("What are the main parts of {subject}?"),
    ];
    if subtopic.is_some() {
        questions.push(format!("How is {subject} related to {title}?"));
    }
    serde_json::to_string(&questions).expect("strings serialize")
}
