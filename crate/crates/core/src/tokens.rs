//! Whitespace token accounting used for every budget and truncation cap.

/// Number of whitespace-delimited tokens in `text`.
pub fn count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Keeps at most `cap` whitespace tokens, re-joined with single spaces.
///
/// Returns the truncated text and its token count.
pub fn truncate(text: &str, cap: usize) -> (String, usize) {
    let kept: Vec<&str> = text.split_whitespace().take(cap).collect();
    let n = kept.len();
    (kept.join(" "), n)
}
