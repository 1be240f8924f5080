//! Token counting for prompt budgets.

/// Counts tokens and cuts text to a token allowance.
///
/// Swap in a model tokenizer when budgets must be exact at the boundary.
pub trait Tokenizer: Send + Sync {
    fn count(&self, text: &str) -> usize;

    /// Longest prefix of `text` holding at most `max_tokens` tokens.
    fn truncate<'a>(&self, text: &'a str, max_tokens: usize) -> &'a str;
}

/// Whitespace-separated words are tokens.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }

    fn truncate<'a>(&self, text: &'a str, max_tokens: usize) -> &'a str {
        let mut seen = 0;
        let mut in_word = false;
        for (idx, ch) in text.char_indices() {
            if ch.is_whitespace() {
                in_word = false;
            } else if !in_word {
                if seen == max_tokens {
                    return text[..idx].trim_end();
                }
                seen += 1;
                in_word = true;
            }
        }
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_truncates() {
        let t = WhitespaceTokenizer;
        assert_eq!(t.count("  a b\n c "), 3);
        assert_eq!(t.truncate("a b  c d", 2), "a b");
        assert_eq!(t.truncate("a b", 5), "a b");
        assert_eq!(t.truncate("a b", 0), "");
        assert_eq!(t.truncate("", 3), "");
    }
}
