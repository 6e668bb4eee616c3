/// Collapses runs of Unicode whitespace to a single space and trims both ends.
pub fn normalize_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Normalizes and maps the empty result to `None`.
pub fn non_empty(s: &str) -> Option<String> {
    let n = normalize_whitespace(s);
    (!n.is_empty()).then_some(n)
}
