/// Normalized form of a natural-language rule: lowercase, single spaces,
/// no trailing period.
pub fn normalize_rule(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed.trim_end_matches('.').trim_end().to_string()
}
