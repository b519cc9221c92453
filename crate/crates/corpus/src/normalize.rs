//! Caption normalization: lowercase, then split on maximal runs of
//! non-alphanumeric characters.
//!
//! Lowercasing happens before the alphanumeric filter so casings that expand
//! to combining marks (e.g. İ → i + U+0307) are split apart rather than
//! smuggled into tokens; that keeps normalization idempotent on its own
//! space-joined output.

/// Tokenize one caption. Empty tokens are dropped.
pub fn normalize_caption(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}

/// Normalized single-space join, the canonical key for multi-token phrases.
pub fn normalize_phrase(text: &str) -> String {
    normalize_caption(text).join(" ")
}
