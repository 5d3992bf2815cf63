//! Pulling programs and numbered lists out of model responses.

use crate::executor::Backend;

/// The program inside a response: the first fenced block if there is one;
/// for the DSL, otherwise the longest line that parses; otherwise the whole
/// response, trimmed.
pub fn extract_program(response: &str, backend: Backend) -> String {
    if let Some(block) = first_fenced_block(response) {
        return block.trim().to_string();
    }
    if backend == Backend::BuiltinDsl {
        let best = response
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && crate::dsl::parse(l).is_ok())
            .max_by_key(|l| l.len());
        if let Some(line) = best {
            return line.to_string();
        }
    }
    response.trim().to_string()
}

fn first_fenced_block(text: &str) -> Option<&str> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    // skip an optional language tag on the opening line
    let body_start = after.find('\n').map(|i| i + 1)?;
    let body = &after[body_start..];
    let end = body.find("```")?;
    Some(&body[..end])
}

/// Items of a numbered list (`1. text` or `1) text`), in order of appearance.
pub fn parse_numbered(text: &str) -> Vec<String> {
    text.lines()
        .filter_map(|line| {
            let line = line.trim();
            let digits = line.find(|c: char| !c.is_ascii_digit())?;
            if digits == 0 {
                return None;
            }
            let rest = line[digits..].strip_prefix(['.', ')'])?;
            let item = rest.trim();
            (!item.is_empty()).then(|| item.to_string())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fenced_block_wins() {
        let text = "Here you go:\n```dsl\nsort | reverse\n```\nand also ```\nidentity\n```";
        assert_eq!(extract_program(text, Backend::BuiltinDsl), "sort | reverse");
        let py = "```python\ndef transform(xs):\n    return xs[::-1]\n```";
        assert_eq!(
            extract_program(py, Backend::ExternalSandbox),
            "def transform(xs):\n    return xs[::-1]"
        );
    }

    #[test]
    fn longest_parseable_line_without_fence() {
        let text = "The program is\nsort\nor better\nsort | unique | reverse\nthanks";
        assert_eq!(extract_program(text, Backend::BuiltinDsl), "sort | unique | reverse");
    }

    #[test]
    fn falls_back_to_whole_text() {
        assert_eq!(extract_program("  no idea here \n", Backend::BuiltinDsl), "no idea here");
        assert_eq!(extract_program("```unterminated", Backend::BuiltinDsl), "```unterminated");
    }

    #[test]
    fn numbered_items() {
        let text = "Summaries:\n1. reverse the list\n2) sort it\n\n  3.   drop evens  \n4.\nx. nope\n10. tenth";
        assert_eq!(
            parse_numbered(text),
            ["reverse the list", "sort it", "drop evens", "tenth"]
        );
        assert!(parse_numbered("no list at all").is_empty());
    }
}
