//! Deterministic offline extraction backend.
//!
//! Reads counts written as "<n> males/females/men/women/boys/girls" and
//! measurements written as "<mean> ± <sd> mmHg", attributing each
//! measurement to SBP or DBP by the closest preceding systolic/diastolic
//! keyword and to a sex only through an explicit sex word in the same
//! sentence. Pooled values are never split between the sexes.

use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;

use super::answer::render_answer;
use super::backend::{Backend, BackendAnswer, BackendRequest, CallError};
use super::prompt::{PromptTemplate, PLACEHOLDER};
use super::{BPExtraction, Field};

pub const MOCK_BACKEND_ID: &str = "mock";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sex {
    Male,
    Female,
}

struct Patterns {
    sex: Regex,
    count: Regex,
    measurement: Regex,
    quantity: Regex,
    suffix: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| {
        let sex = r"males?|females?|men|women|boys|girls";
        Patterns {
            sex: Regex::new(&format!(r"(?i)\b(?:{sex})\b")).unwrap(),
            count: Regex::new(&format!(
                r"(?i)(?:^|[^\d.,])(\d{{1,3}}(?:,\d{{3}})+|\d+)\s+({sex})\b"
            ))
            .unwrap(),
            measurement: Regex::new(
                r"(?i)(\d+(?:\.\d+)?)\s*(?:±|\+/-|\+-)\s*(\d+(?:\.\d+)?)\s*mm\s?hg",
            )
            .unwrap(),
            quantity: Regex::new(r"(?i)\b(sbp|systolic|dbp|diastolic)\b").unwrap(),
            suffix: Regex::new(&format!(
                r"(?i)^\s*[,;]?\s*(?:\(\s*|in\s+|for\s+|among\s+|of\s+)?(?:the\s+|all\s+)?({sex})\b"
            ))
            .unwrap(),
        }
    })
}

fn sex_of(token: &str) -> Sex {
    let t = token.to_ascii_lowercase();
    if t.starts_with("fem") || t == "women" || t == "girls" {
        Sex::Female
    } else {
        Sex::Male
    }
}

/// Sentence byte ranges; a period followed by a digit is a decimal point.
fn sentences(text: &str) -> Vec<Range<usize>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut start = 0;
    for (i, &b) in bytes.iter().enumerate() {
        if matches!(b, b'.' | b'!' | b'?')
            && bytes.get(i + 1).is_none_or(|n| n.is_ascii_whitespace())
        {
            out.push(start..i + 1);
            start = i + 1;
        }
    }
    if start < text.len() {
        out.push(start..text.len());
    }
    out
}

/// Single sex named in `text` outside the `consumed` spans, if exactly one.
fn sole_sex(text: &str, offset: usize, consumed: &[Range<usize>]) -> Option<Sex> {
    let mut found = None;
    for m in patterns().sex.find_iter(text) {
        let abs = offset + m.start();
        if consumed.iter().any(|r| r.contains(&abs)) {
            continue;
        }
        let s = sex_of(m.as_str());
        match found {
            None => found = Some(s),
            Some(prev) if prev != s => return None,
            _ => {}
        }
    }
    found
}

fn fill(x: &mut BPExtraction, field: Field, value: f64) {
    if x.get(field).is_none() {
        x.set(field, Some(value));
    }
}

/// Rule-based extraction straight from abstract text.
pub fn mock_extraction(abstract_text: &str) -> BPExtraction {
    let p = patterns();
    let mut x = BPExtraction::empty("");

    for caps in p.count.captures_iter(abstract_text) {
        let n: f64 = match caps[1].replace(',', "").parse() {
            Ok(n) => n,
            Err(_) => continue,
        };
        let field = match sex_of(&caps[2]) {
            Sex::Male => Field::NMale,
            Sex::Female => Field::NFemale,
        };
        fill(&mut x, field, n);
    }

    for range in sentences(abstract_text) {
        let sentence = &abstract_text[range.clone()];
        let mut consumed: Vec<Range<usize>> = Vec::new();
        let mut prev_end = 0;
        for caps in p.measurement.captures_iter(sentence) {
            let m = caps.get(0).unwrap();
            let before = &sentence[..m.start()];
            let Some(quantity) = p.quantity.find_iter(before).last() else {
                prev_end = m.end();
                continue;
            };
            let systolic = matches!(
                quantity.as_str().to_ascii_lowercase().as_str(),
                "sbp" | "systolic"
            );
            let sex = if let Some(s) = p.suffix.captures(&sentence[m.end()..]) {
                let tok = s.get(1).unwrap();
                consumed.push(m.end() + tok.start()..m.end() + tok.end());
                Some(sex_of(tok.as_str()))
            } else {
                let segment = &sentence[prev_end..m.start()];
                if p.sex.is_match(segment) {
                    sole_sex(segment, prev_end, &consumed)
                } else {
                    sole_sex(before, 0, &consumed)
                }
            };
            prev_end = m.end();
            let Some(sex) = sex else { continue };
            let (mean_f, sd_f) = match (systolic, sex) {
                (true, Sex::Male) => (Field::SbpMeanMale, Field::SbpSdMale),
                (true, Sex::Female) => (Field::SbpMeanFemale, Field::SbpSdFemale),
                (false, Sex::Male) => (Field::DbpMeanMale, Field::DbpSdMale),
                (false, Sex::Female) => (Field::DbpMeanFemale, Field::DbpSdFemale),
            };
            if x.get(mean_f).is_none() && x.get(sd_f).is_none() {
                x.set(mean_f, caps[1].parse().ok());
                x.set(sd_f, caps[2].parse().ok());
            }
        }
    }
    x
}

/// Mock answer in the exact schema the answer parser reads.
pub fn mock_extract(abstract_text: &str) -> BackendAnswer {
    BackendAnswer {
        text: render_answer(&mock_extraction(abstract_text)),
        backend_id: MOCK_BACKEND_ID.to_string(),
        cached: false,
    }
}

/// [`mock_extract`] behind the backend interface. The abstract is recovered
/// from the prompt by stripping the template text around the placeholder.
#[derive(Debug, Clone)]
pub struct MockBackend {
    head: String,
    tail: String,
}

impl MockBackend {
    pub fn new(template: &PromptTemplate) -> Self {
        let (head, tail) = template.text().split_once(PLACEHOLDER).unwrap();
        Self {
            head: head.to_string(),
            tail: tail.to_string(),
        }
    }
}

impl Backend for MockBackend {
    fn id(&self) -> &str {
        MOCK_BACKEND_ID
    }

    fn complete(&self, request: &BackendRequest) -> Result<String, CallError> {
        let p = request.prompt.as_str();
        let body = p
            .strip_prefix(self.head.as_str())
            .and_then(|r| r.strip_suffix(self.tail.as_str()))
            .unwrap_or(p);
        Ok(mock_extract(body).text)
    }

    fn is_remote(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::parse_answer;

    fn ex(text: &str) -> BPExtraction {
        parse_answer(&mock_extract(text).text, "t")
    }

    #[test]
    fn labeled_example() {
        let x = ex("We enrolled 60 males and 50 females. Male SBP was 130 ± 10 mmHg.");
        assert_eq!(x.n_male, Some(60));
        assert_eq!(x.n_female, Some(50));
        assert_eq!(x.sbp_mean_male, Some(130.0));
        assert_eq!(x.sbp_sd_male, Some(10.0));
        assert_eq!(x.present_count(), 4);
    }

    #[test]
    fn empty_text() {
        assert_eq!(ex("").present_count(), 0);
        assert!(mock_extract("").text.lines().all(|l| l.ends_with("N/A")));
    }

    #[test]
    fn pooled_values_not_linked() {
        assert_eq!(
            ex("Mean blood pressure was 120/80 mmHg.").present_count(),
            0
        );
        let x = ex("In 40 men and 45 women, SBP was 128 ± 12 mmHg.");
        assert_eq!(x.n_male, Some(40));
        assert_eq!(x.sbp_mean_male, None);
        assert_eq!(x.sbp_mean_female, None);
    }

    #[test]
    fn suffix_and_prefix_linking() {
        let x = ex(
            "SBP was 130 ± 10 mmHg in males and 120.5 ± 9.5 mmHg in females. \
                    In boys, DBP was 80 ± 6 mm Hg. Female diastolic pressure was 75 +/- 5 mmHg.",
        );
        assert_eq!(x.sbp_mean_male, Some(130.0));
        assert_eq!(x.sbp_mean_female, Some(120.5));
        assert_eq!(x.sbp_sd_female, Some(9.5));
        assert_eq!(x.dbp_mean_male, Some(80.0));
        assert_eq!(x.dbp_mean_female, Some(75.0));
        assert_eq!(x.dbp_sd_female, Some(5.0));
    }

    #[test]
    fn consumed_suffix_does_not_leak() {
        let x = ex("SBP was 130 ± 10 mmHg in males and DBP 85 ± 6 mmHg.");
        assert_eq!(x.sbp_mean_male, Some(130.0));
        assert_eq!(x.dbp_mean_male, None);
    }

    #[test]
    fn decimals_are_not_counts() {
        let x = ex("Values of 118.5 males were odd.");
        assert_eq!(x.n_male, None);
        assert_eq!(ex("A total of 1,204 women took part.").n_female, Some(1204));
    }

    #[test]
    fn pure() {
        let t = "We enrolled 60 males. Male SBP was 130 ± 10 mmHg.";
        assert_eq!(mock_extract(t), mock_extract(t));
    }

    #[test]
    fn backend_recovers_abstract_from_prompt() {
        let t = PromptTemplate::default();
        let text = "We enrolled 60 males and 50 females.";
        let rec = crate::corpus::AbstractRecord {
            pmid: "1".into(),
            title: String::new(),
            abstract_text: text.into(),
            source_file: String::new(),
        };
        let req = BackendRequest {
            prompt: super::super::build_prompt(&rec, &t),
            model_id: "mock".into(),
            decode_params: Default::default(),
        };
        let out = MockBackend::new(&t).complete(&req).unwrap();
        assert_eq!(out, mock_extract(text).text);
    }
}
