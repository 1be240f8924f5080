//! Interpreting model completions: answer checking and self-rating parsing.

use crate::model::MAX_RATING;
use crate::text::{content_terms, words};

/// Lowercase, drop stopwords, Porter-stem, rejoin with single spaces.
pub fn normalize_answer(text: &str) -> String {
    content_terms(text).join(" ")
}

/// Character-level Levenshtein distance below 20% of the longer string.
fn close_enough(a: &str, b: &str) -> bool {
    let longest = a.chars().count().max(b.chars().count());
    (strsim::levenshtein(a, b) as f64) < 0.2 * longest as f64
}

/// Accepts `predicted` when its normalized form is within edit distance
/// `0.2 * max(len)` of the normalized gold answer. If the gold answer
/// normalizes to nothing (e.g. "no"), the raw trimmed strings are compared
/// with the same rule.
pub fn verify_answer(predicted: &str, gold: &str) -> bool {
    let gold_norm = normalize_answer(gold);
    if gold_norm.is_empty() {
        return close_enough(predicted.trim(), gold.trim());
    }
    close_enough(&normalize_answer(predicted), &gold_norm)
}

/// Phrases treated as "cannot answer" when a completion carries no rating.
pub const UNANSWERABLE_PHRASES: [&str; 8] = [
    "unanswerable",
    "no",
    "no answe",
    "not enough information",
    "unknown",
    "it is not possible to tell",
    "it does not say",
    "no relevant information",
];

/// The first standalone digit 0-5 in the completion. Without one, 0 if the
/// completion expresses unanswerability, else 1.
///
/// "Standalone" means not adjacent to another letter or digit, so "10" or
/// "q3" do not count. The phrase "no" only matches as a whole word.
pub fn parse_self_rating(completion: &str) -> u8 {
    let chars: Vec<char> = completion.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        let Some(d) = c.to_digit(10) else { continue };
        if d > MAX_RATING as u32 {
            continue;
        }
        let before = i.checked_sub(1).map(|j| chars[j]);
        let after = chars.get(i + 1).copied();
        if !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric) {
            return d as u8;
        }
    }
    let lower = completion.to_lowercase();
    let unanswerable = UNANSWERABLE_PHRASES.iter().any(|phrase| {
        if *phrase == "no" {
            words(&lower).any(|w| w == "no")
        } else {
            lower.contains(phrase)
        }
    });
    if unanswerable {
        0
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Textbook dynamic-programming edit distance over chars.
    fn dp_levenshtein(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut prev: Vec<usize> = (0..=b.len()).collect();
        for i in 1..=a.len() {
            let mut cur = vec![i; b.len() + 1];
            for j in 1..=b.len() {
                let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
                cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
            }
            prev = cur;
        }
        prev[b.len()]
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_answer("The Epidermis"), "epidermi");
        assert_eq!(normalize_answer(""), "");
        assert_eq!(normalize_answer("a the of"), "");
        assert_eq!(normalize_answer("the  outer   LAYERS"), "outer layer");
    }

    #[test]
    fn verification_examples() {
        assert!(verify_answer("epidermis", "epidermis"));
        assert!(verify_answer("the epidermis", "epidermis"));
        // "dermi" vs "epidermi": distance 3, bound 0.2 * 8 = 1.6
        assert_eq!(dp_levenshtein("dermi", "epidermi"), 3);
        assert!(!verify_answer("dermis", "epidermis"));
    }

    #[test]
    fn stopword_only_gold_uses_raw_strings() {
        assert!(verify_answer("no", "no"));
        assert!(!verify_answer("yes", "no"));
        assert!(!verify_answer("anything", "   "));
    }

    #[test]
    fn rating_examples() {
        assert_eq!(parse_self_rating("4: The answer is mostly relevant and complete"), 4);
        assert_eq!(parse_self_rating("unanswerable"), 0);
        assert_eq!(parse_self_rating("the context seems related"), 1);
    }

    #[test]
    fn rating_edge_cases() {
        assert_eq!(parse_self_rating("rating: 10 or maybe 3"), 3);
        assert_eq!(parse_self_rating("9"), 1);
        assert_eq!(parse_self_rating("q3 then 2"), 2);
        assert_eq!(parse_self_rating("No."), 0);
        assert_eq!(parse_self_rating("normal skin"), 1);
        assert_eq!(parse_self_rating("There are no answers here"), 0);
        assert_eq!(parse_self_rating("Not enough information"), 0);
        assert_eq!(parse_self_rating(""), 1);
    }

    proptest! {
        #[test]
        fn strsim_matches_dp(a in "[a-zé]{0,12}", b in "[a-zé]{0,12}") {
            prop_assert_eq!(strsim::levenshtein(&a, &b), dp_levenshtein(&a, &b));
        }

        #[test]
        fn verification_reflexive(x in "[A-Za-z ,.]{0,20}[A-Za-z]") {
            prop_assert!(verify_answer(&x, &x));
        }

        #[test]
        fn verification_symmetric_when_gold_has_content(a in "[a-z ]{0,16}", b in "[a-z]{1,8}(s|ing|ed)?") {
            let b_norm = normalize_answer(&b);
            prop_assume!(!b_norm.is_empty() && !normalize_answer(&a).is_empty());
            prop_assert_eq!(verify_answer(&a, &b), verify_answer(&b, &a));
        }

        #[test]
        fn rating_is_total(s in ".{0,64}") {
            prop_assert!(parse_self_rating(&s) <= 5);
        }
    }
}
