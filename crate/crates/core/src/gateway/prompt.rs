//! Prompt templates for question generation and grading.

use std::fmt;

use crate::error::{Error, Result};
use crate::gateway::tokenize::Tokenizer;
use crate::model::{Facet, Query};

const QUESTION_GEN_DL: &str = "Break the query '{query_title}' into concise questions that must be answered. Generate 10 concise insightful questions that reveal whether information relevant for '{query_title}' was provided, showcasing a deep understanding of the subject matter. Avoid basic or introductory-level inquiries. Keep the questions short and in a Python list format.";

const QUESTION_GEN_CAR: &str = "Explore the connection between '{query_title}' with a specific focus on the subtopic '{query_subtopic}'. Generate insightful questions that delve into advanced aspects of '{query_subtopic}', showcasing a deep understanding of the subject matter. Avoid basic or introductory-level inquiries. Give the question set in a Python list format.";

const QA: &str = "provide a complete and concise answer to the question based on the context.
Question: {question}
Context: {context}";

const SELF_RATING: &str = "Can the question be answered based on the available context? choose one:
- 5: The answer is highly relevant, complete, and accurate.
- 4: The answer is mostly relevant and complete but may have minor gaps or inaccuracies.
- 3: The answer is partially relevant and complete, with noticeable gaps or inaccuracies.
- 2: The answer has limited relevance and completeness, with significant gaps or inaccuracies.
- 1: The answer is minimally relevant or complete, with substantial shortcomings.
- 0: The answer is not relevant or complete at all.
Question: {question}
Context: {context}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PromptTemplate {
    /// Splits a query into questions (TREC DL style).
    QuestionGenDl,
    /// Asks for questions about one subtopic of a query (TREC CAR style).
    QuestionGenCar,
    /// Free-text answer, later checked against a gold answer.
    Qa,
    /// 0-5 answerability rating.
    SelfRating,
}

impl PromptTemplate {
    pub fn name(self) -> &'static str {
        match self {
            PromptTemplate::QuestionGenDl => "question_gen_dl",
            PromptTemplate::QuestionGenCar => "question_gen_car",
            PromptTemplate::Qa => "qa",
            PromptTemplate::SelfRating => "self_rating",
        }
    }

    pub fn body(self) -> &'static str {
        match self {
            PromptTemplate::QuestionGenDl => QUESTION_GEN_DL,
            PromptTemplate::QuestionGenCar => QUESTION_GEN_CAR,
            PromptTemplate::Qa => QA,
            PromptTemplate::SelfRating => SELF_RATING,
        }
    }

    pub fn is_question_gen(self) -> bool {
        matches!(self, PromptTemplate::QuestionGenDl | PromptTemplate::QuestionGenCar)
    }

    /// Substitutes `{name}` placeholders in one pass, so bound values are
    /// never re-scanned. Every placeholder must be bound.
    pub fn render(self, bindings: &[(&str, &str)]) -> Result<String> {
        let body = self.body();
        let mut out = String::with_capacity(body.len() + bindings.iter().map(|(_, v)| v.len()).sum::<usize>());
        let mut rest = body;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let close = after
                .find('}')
                .ok_or_else(|| Error::Contract(format!("template {} has an unterminated placeholder", self.name())))?;
            let name = &after[..close];
            let value = bindings
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| {
                    Error::Contract(format!("template {}: placeholder {{{name}}} not bound", self.name()))
                })?;
            out.push_str(value);
            rest = &after[close + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

impl fmt::Display for PromptTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn render_question_gen_prompt(template: PromptTemplate, query: &Query, facet: Option<&Facet>) -> Result<String> {
    if query.title.trim().is_empty() {
        return Err(Error::Validation(format!(
            "query {} has an empty title",
            query.query_id
        )));
    }
    match (template, facet) {
        (PromptTemplate::QuestionGenDl, None) => template.render(&[("query_title", &query.title)]),
        (PromptTemplate::QuestionGenCar, Some(f)) => {
            if f.title.trim().is_empty() {
                return Err(Error::Validation(format!(
                    "query {} facet {} has an empty title",
                    query.query_id, f.facet_id
                )));
            }
            template.render(&[("query_title", &query.title), ("query_subtopic", &f.title)])
        }
        (PromptTemplate::QuestionGenCar, None) => Err(Error::Contract("the subtopic template needs a facet".into())),
        (PromptTemplate::QuestionGenDl, Some(_)) => Err(Error::Contract("the query template takes no facet".into())),
        (other, _) => Err(Error::Contract(format!(
            "{other} is not a question-generation template"
        ))),
    }
}

fn render_grading(template: PromptTemplate, question: &str, context: &str) -> Result<String> {
    if question.trim().is_empty() {
        return Err(Error::Validation("question text is empty".into()));
    }
    template.render(&[("question", question), ("context", context)])
}

pub fn render_qa_prompt(question: &str, context: &str) -> Result<String> {
    render_grading(PromptTemplate::Qa, question, context)
}

pub fn render_self_rating_prompt(question: &str, context: &str) -> Result<String> {
    render_grading(PromptTemplate::SelfRating, question, context)
}

/// Longest prefix of `context` such that the rendered grading prompt fits in
/// `budget` tokens. The question is never shortened: if the template plus
/// question alone exceed the budget, this fails.
pub fn truncate_context<'a>(
    template: PromptTemplate,
    question: &str,
    context: &'a str,
    budget: usize,
    tokenizer: &dyn Tokenizer,
) -> Result<&'a str> {
    let fixed = tokenizer.count(&render_grading(template, question, "")?);
    if fixed > budget {
        return Err(Error::Validation(format!(
            "question plus prompt template need {fixed} tokens, budget is {budget}"
        )));
    }
    if tokenizer.count(&render_grading(template, question, context)?) <= budget {
        return Ok(context);
    }
    // Tokenizers need not be additive across the template boundary, so
    // shrink until the whole prompt fits.
    let mut allowance = budget - fixed;
    loop {
        let prefix = tokenizer.truncate(context, allowance);
        if allowance == 0 || tokenizer.count(&render_grading(template, question, prefix)?) <= budget {
            return Ok(prefix);
        }
        allowance -= 1;
    }
}

/// Renders a grading prompt with the context cut to fit the token budget.
pub fn render_grading_prompt(
    template: PromptTemplate,
    question: &str,
    context: &str,
    budget: usize,
    tokenizer: &dyn Tokenizer,
) -> Result<String> {
    if !matches!(template, PromptTemplate::Qa | PromptTemplate::SelfRating) {
        return Err(Error::Contract(format!("{template} is not a grading template")));
    }
    let context = truncate_context(template, question, context, budget, tokenizer)?;
    render_grading(template, question, context)
}
