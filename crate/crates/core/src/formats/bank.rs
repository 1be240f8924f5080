//! JSON documents: question banks, query collections and passage collections.
//!
//! Question bank layout:
//!
//! ```json
//! {
//!   "queries": [
//!     {
//!       "query_id": "tqa2:L_0384",
//!       "questions": [
//!         { "question_id": "NDQ_007535", "text": "Outer layer of the skin?", "gold_answer": "epidermis" },
//!         { "question_id": "tqa2:L_0384/f1/1", "facet_id": "f1", "text": "How does the skin act as a barrier?" }
//!       ]
//!     }
//!   ]
//! }
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_queries, ExamQuestion, Passage, Query, QuestionBank};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BankDoc {
    queries: Vec<QueryDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryDoc {
    query_id: String,
    #[serde(default)]
    questions: Vec<QuestionDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuestionDoc {
    question_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    facet_id: Option<String>,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold_answer: Option<String>,
}

fn schema_error(e: serde_json::Error) -> Error {
    Error::Validation(format!("question bank: {e}"))
}

pub fn load_question_bank(text: &str) -> Result<QuestionBank> {
    let doc: BankDoc = serde_json::from_str(text).map_err(schema_error)?;
    let mut bank = QuestionBank::new();
    for query in doc.queries {
        if query.query_id.trim().is_empty() {
            return Err(Error::Validation("question bank: empty query_id".into()));
        }
        if bank.query_ids().any(|q| q == query.query_id) {
            return Err(Error::Validation(format!(
                "question bank: query {} listed twice",
                query.query_id
            )));
        }
        bank.ensure_query(&query.query_id);
        for q in query.questions {
            bank.push(ExamQuestion {
                question_id: q.question_id,
                query_id: query.query_id.clone(),
                facet_id: q.facet_id,
                text: q.text,
                gold_answer: q.gold_answer,
            })?;
        }
    }
    Ok(bank)
}

/// Pretty-printed JSON, queries sorted by id, questions in bank order.
pub fn save_question_bank(bank: &QuestionBank) -> String {
    let doc = BankDoc {
        queries: bank
            .iter()
            .map(|(query_id, questions)| QueryDoc {
                query_id: query_id.to_string(),
                questions: questions
                    .iter()
                    .map(|q| QuestionDoc {
                        question_id: q.question_id.clone(),
                        facet_id: q.facet_id.clone(),
                        text: q.text.clone(),
                        gold_answer: q.gold_answer.clone(),
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("bank serializes");
    out.push('\n');
    out
}

/// Loads a JSON array of queries, each with optional facets.
pub fn load_queries(text: &str) -> Result<Vec<Query>> {
    let queries: Vec<Query> = serde_json::from_str(text).map_err(|e| Error::Validation(format!("queries: {e}")))?;
    validate_queries(&queries)?;
    Ok(queries)
}

/// Loads passages from JSON lines, one `{"passage_id": .., "text": ..}` per line.
pub fn load_passages(text: &str) -> Result<Vec<Passage>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let passage: Passage =
            serde_json::from_str(line).map_err(|e| Error::parse("passages", idx + 1, e.to_string()))?;
        passage
            .validate()
            .map_err(|e| Error::parse("passages", idx + 1, e.to_string()))?;
        out.push(passage);
    }
    Ok(out)
}

pub fn write_passages(passages: &[Passage]) -> String {
    let mut out = String::new();
    for p in passages {
        out.push_str(&serde_json::to_string(p).expect("passage serializes"));
        out.push('\n');
    }
    out
}
