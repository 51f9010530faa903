use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// A numeric token and its byte span in the source text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumberToken {
    pub value: f64,
    pub span: Range<usize>,
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // Comma grouping only when every group has exactly three digits and no
    // space follows the comma, so "108, 129" stays two numbers.
    RE.get_or_init(|| Regex::new(r"\d{1,3}(?:,\d{3})+(?:\.\d+)?\b|\d+(?:\.\d+)?").unwrap())
}

/// Every decimal number in the text, left to right. Slash pairs such as
/// "120/80" yield both halves.
pub fn extract_numbers(text: &str) -> Vec<NumberToken> {
    number_re()
        .find_iter(text)
        .filter_map(|m| {
            let value = m.as_str().replace(',', "").parse().ok()?;
            Some(NumberToken {
                value,
                span: m.range(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn values(t: &str) -> Vec<f64> {
        extract_numbers(t).into_iter().map(|n| n.value).collect()
    }

    #[test]
    fn examples() {
        assert_eq!(values("was 120/80 mmHg in 45 men"), [120.0, 80.0, 45.0]);
        assert!(values("").is_empty());
        assert_eq!(
            values("13-year-old boys (108 mmHg) and 17-year-old boys (129 mmHg)"),
            [13.0, 108.0, 17.0, 129.0]
        );
    }

    #[test]
    fn spans_and_grouping() {
        let t = "n=1,234; 118.5 mmHg; list 108, 129";
        let toks = extract_numbers(t);
        let v: Vec<_> = toks.iter().map(|n| n.value).collect();
        assert_eq!(v, [1234.0, 118.5, 108.0, 129.0]);
        assert_eq!(&t[toks[1].span.clone()], "118.5");
        assert_eq!(&t[toks[0].span.clone()], "1,234");
    }
}
