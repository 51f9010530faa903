use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;

use super::{BPExtraction, Field};

pub const NOT_AVAILABLE: &str = "N/A";

fn value_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^(\d{1,3}(?:,\d{3})+|\d+(?:\.\d+)?|\.\d+)\s*(?:mm\s?hg)?\s*\.?$").unwrap()
    })
}

fn marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?:[-*•]|\d{1,2}[.)])\s*").unwrap())
}

fn labels() -> &'static HashMap<String, Field> {
    static MAP: OnceLock<HashMap<String, Field>> = OnceLock::new();
    MAP.get_or_init(|| {
        Field::ALL
            .iter()
            .map(|f| (normalize_label(f.label()), *f))
            .collect()
    })
}

fn normalize_label(s: &str) -> String {
    let s = marker_re().replace(s.trim(), "");
    let s = s.trim_end_matches("(mmHg)").trim_end_matches("(mm Hg)");
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn parse_value(raw: &str) -> Option<f64> {
    let caps = value_re().captures(raw.trim())?;
    caps[1].replace(',', "").parse().ok()
}

/// Parses a "Label: value" answer into an extraction.
///
/// Lines are matched by label, not position. Unknown labels, malformed
/// values and the not-available token all leave the field absent; the
/// first occurrence of a label wins. Never fails.
pub fn parse_answer(answer: &str, pmid: &str) -> BPExtraction {
    let mut x = BPExtraction::empty(pmid);
    x.raw_answer = answer.to_string();
    let mut seen = [false; 10];
    for line in answer.lines() {
        let Some((label, value)) = line.split_once(':') else {
            continue;
        };
        let Some(&field) = labels().get(&normalize_label(label)) else {
            continue;
        };
        let idx = field as usize;
        if seen[idx] {
            continue;
        }
        seen[idx] = true;
        x.set(field, parse_value(value));
    }
    x
}

/// Renders the ten fields in canonical order, the inverse of [`parse_answer`].
pub fn render_answer(x: &BPExtraction) -> String {
    let mut out = String::new();
    for f in Field::ALL {
        out.push_str(f.label());
        out.push_str(": ");
        match (f.is_count(), x.get(f)) {
            (_, None) => out.push_str(NOT_AVAILABLE),
            (true, Some(_)) => {
                let n = if f == Field::NMale {
                    x.n_male
                } else {
                    x.n_female
                };
                out.push_str(&n.unwrap().to_string());
            }
            (false, Some(v)) => {
                out.push_str(&v.to_string());
                out.push_str(" mmHg");
            }
        }
        out.push('\n');
    }
    out
}
