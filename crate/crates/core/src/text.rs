//! Word-level text helpers shared by answer checking and the mock backend.

use std::collections::HashSet;
use std::sync::OnceLock;

use rust_stemmers::{Algorithm, Stemmer};

const STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

fn stemmer() -> &'static Stemmer {
    static STEMMER: OnceLock<Stemmer> = OnceLock::new();
    STEMMER.get_or_init(|| Stemmer::create(Algorithm::English))
}

/// Maximal alphanumeric runs of `text`, in order.
pub fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty())
}

pub fn is_stopword(word: &str) -> bool {
    stopwords().contains(word)
}

pub fn stem(word: &str) -> String {
    stemmer().stem(word).into_owned()
}

/// Lowercased, stopword-free, stemmed content terms of `text`.
pub fn content_terms(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    words(&lower).filter(|w| !is_stopword(w)).map(stem).collect()
}
