//! Identifier-aware tokenizer shared by the lexical indexes, the stub
//! embedder, and intent analysis.
//!
//! Text is lowercased and split on any non-alphanumeric character, except
//! that underscores are kept inside words so that identifiers like
//! `tz_localize` survive as compound tokens. Compound identifiers are then
//! additionally split on underscores and lower-to-upper camelCase
//! boundaries, so `tz_localize` yields `tz`, `localize`, and `tz_localize`.
//! No stemming, no stopword removal: API names must match exactly.

/// Tokenize `text` into lowercased tokens, emitting both compound
/// identifiers and their sub-parts.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in split_words(text) {
        let parts = split_identifier(word);
        if parts.len() > 1 {
            // compound identifier: keep the whole thing too
            out.push(word.to_lowercase());
        }
        for p in parts {
            out.push(p);
        }
    }
    out
}

/// True when `word` tokenizes into more than one part, i.e. it looks like
/// a snake_case or camelCase identifier.
pub fn is_compound_identifier(word: &str) -> bool {
    split_identifier(word).len() > 1
}

/// Raw words of `text`: maximal runs of alphanumerics and underscores,
/// in their original (non-lowercased) form.
pub fn split_words(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty() && w.chars().any(|c| c != '_'))
}

fn split_identifier(word: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut current = String::new();
    let mut prev_lower = false;
    for c in word.chars() {
        if c == '_' {
            if !current.is_empty() {
                parts.push(std::mem::take(&mut current));
            }
            prev_lower = false;
            continue;
        }
        if c.is_uppercase() && prev_lower && !current.is_empty() {
            parts.push(std::mem::take(&mut current));
        }
        current.extend(c.to_lowercase());
        prev_lower = c.is_lowercase() || c.is_numeric();
    }
    if !current.is_empty() {
        parts.push(current);
    }
    parts
}
