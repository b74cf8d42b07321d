//! Recovers the JSON value a model was asked to place at the end of its reply.

use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no JSON value found at the end of the response")]
pub struct NoJsonFound;

/// Parses the longest suffix of `text` that is a complete JSON value.
///
/// Trailing whitespace and closing code fences are stripped first. The
/// search window then grows backward from the last character to the start
/// of the string; only positions where a JSON value can begin are tried.
pub fn extract_trailing_json(text: &str) -> Result<Value, NoJsonFound> {
    let body = strip_trailing_fences(text);
    let mut found = None;
    for (start, c) in body.char_indices().rev() {
        if !can_start_value(c) {
            continue;
        }
        if let Ok(v) = serde_json::from_str::<Value>(&body[start..]) {
            found = Some(v);
        }
    }
    found.ok_or(NoJsonFound)
}

fn can_start_value(c: char) -> bool {
    matches!(c, '[' | '{' | '"' | '-' | '0'..='9' | 't' | 'f' | 'n')
}

fn strip_trailing_fences(text: &str) -> &str {
    let mut s = text.trim_end();
    while let Some(rest) = s.strip_suffix("```") {
        s = rest.trim_end();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    #[test]
    fn plan_after_prose() {
        let text = "Here is the plan:\n[{\"tool\":\"semantic_segmentation\",\"inputs\":[\"input_image\"],\"outputs\":[\"seg1\"]}]";
        assert_eq!(
            extract_trailing_json(text).unwrap(),
            json!([{"tool": "semantic_segmentation", "inputs": ["input_image"], "outputs": ["seg1"]}])
        );
    }

    #[test]
    fn nothing_parses() {
        assert_eq!(extract_trailing_json("no brackets here"), Err(NoJsonFound));
        assert_eq!(extract_trailing_json(""), Err(NoJsonFound));
        assert_eq!(extract_trailing_json("[{\"tool\": "), Err(NoJsonFound));
    }

    #[test]
    fn code_fence_and_whitespace() {
        let text = "Sure.\n```json\n[{\"a\": 1}]\n```\n\n";
        assert_eq!(extract_trailing_json(text).unwrap(), json!([{"a": 1}]));
    }

    #[test]
    fn last_value_wins_over_earlier_ones() {
        assert_eq!(extract_trailing_json("[1] then [2]").unwrap(), json!([2]));
    }

    #[test]
    fn longest_suffix() {
        assert_eq!(extract_trailing_json("the answer is -42").unwrap(), json!(-42));
    }

    #[test]
    fn multibyte_prose() {
        assert_eq!(extract_trailing_json("計画は → [\"ü\"]").unwrap(), json!(["ü"]));
    }

    proptest! {
        #[test]
        fn total_on_arbitrary_input(s in any::<String>()) {
            let _ = extract_trailing_json(&s);
        }

        #[test]
        fn total_on_arbitrary_bytes(b in proptest::collection::vec(any::<u8>(), 0..200)) {
            let s = String::from_utf8_lossy(&b);
            let _ = extract_trailing_json(&s);
        }
    }
}
