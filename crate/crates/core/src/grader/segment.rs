//! Splits long system responses into paragraph-sized passages.

use std::fmt::Write;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gateway::{Tokenizer, WhitespaceTokenizer};
use crate::model::Passage;

#[derive(Clone)]
pub struct SegmentationConfig {
    target_tokens: usize,
    tokenizer: Arc<dyn Tokenizer>,
}

impl SegmentationConfig {
    pub const DEFAULT_TARGET_TOKENS: usize = 400;

    pub fn new(target_tokens: usize, tokenizer: Arc<dyn Tokenizer>) -> Result<Self> {
        if target_tokens < 32 {
            return Err(Error::Validation(format!(
                "target_tokens must be >= 32, got {target_tokens}"
            )));
        }
        Ok(SegmentationConfig {
            target_tokens,
            tokenizer,
        })
    }

    pub fn target_tokens(&self) -> usize {
        self.target_tokens
    }
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            target_tokens: Self::DEFAULT_TARGET_TOKENS,
            tokenizer: Arc::new(WhitespaceTokenizer),
        }
    }
}

impl std::fmt::Debug for SegmentationConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SegmentationConfig")
            .field("target_tokens", &self.target_tokens)
            .finish_non_exhaustive()
    }
}

/// Byte spans of sentences: a sentence ends at `.`, `!` or `?` followed by
/// whitespace, or at a blank line. Spans are trimmed and never empty.
fn sentence_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((idx, ch)) = chars.next() {
        let next = chars.peek().map(|&(_, c)| c);
        let boundary = match ch {
            '.' | '!' | '?' => next.is_none_or(char::is_whitespace),
            '\n' => next == Some('\n'),
            _ => false,
        };
        if boundary {
            let end = idx + ch.len_utf8();
            push_trimmed(text, start, end, &mut spans);
            start = end;
        }
    }
    push_trimmed(text, start, text.len(), &mut spans);
    spans
}

fn push_trimmed(text: &str, start: usize, end: usize, spans: &mut Vec<(usize, usize)>) {
    let piece = &text[start..end];
    let lead = piece.len() - piece.trim_start().len();
    let trimmed = piece.trim();
    if !trimmed.is_empty() {
        spans.push((start + lead, start + lead + trimmed.len()));
    }
}

/// Stable id prefix for a response: hex SHA-256 of its text, cut to 40 chars.
pub fn response_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    let mut hex = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(hex, "{b:02x}");
    }
    hex.truncate(40);
    hex
}

/// Segments `text` into passages of at most `target_tokens` tokens, packing
/// whole sentences greedily. A sentence longer than the budget is split
/// hard at token boundaries. Passage ids are `<hash>/<ordinal>`, 1-based.
pub fn segment_response(text: &str, config: &SegmentationConfig) -> Vec<Passage> {
    let tok = config.tokenizer.as_ref();
    let budget = config.target_tokens;
    let mut chunks: Vec<(usize, usize)> = Vec::new();
    let mut current: Option<(usize, usize, usize)> = None; // start, end, tokens

    for (s, e) in sentence_spans(text) {
        let n = tok.count(&text[s..e]);
        if n > budget {
            if let Some((cs, ce, _)) = current.take() {
                chunks.push((cs, ce));
            }
            let mut offset = s;
            while offset < e {
                let rest = &text[offset..e];
                let mut head = tok.truncate(rest, budget);
                if head.is_empty() {
                    head = rest;
                }
                chunks.push((offset, offset + head.len()));
                let consumed = offset + head.len();
                offset = consumed + (text[consumed..e].len() - text[consumed..e].trim_start().len());
            }
            continue;
        }
        current = match current {
            Some((cs, _, ct)) if ct + n <= budget => Some((cs, e, ct + n)),
            Some((cs, ce, _)) => {
                chunks.push((cs, ce));
                Some((s, e, n))
            }
            None => Some((s, e, n)),
        };
    }
    if let Some((cs, ce, _)) = current {
        chunks.push((cs, ce));
    }

    let hash = response_hash(text);
    chunks
        .into_iter()
        .enumerate()
        .map(|(i, (s, e))| Passage {
            passage_id: format!("{hash}/{}", i + 1),
            text: text[s..e].to_string(),
        })
        .collect()
}
