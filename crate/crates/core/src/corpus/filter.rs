use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use super::AbstractRecord;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeywordStageConfig {
    pub stage1_terms: Vec<String>,
    pub stage2_terms: Vec<String>,
    pub case_insensitive: bool,
}

impl Default for KeywordStageConfig {
    fn default() -> Self {
        Self {
            stage1_terms: vec!["blood pressure".into()],
            stage2_terms: vec!["mmHg".into(), "mm Hg".into()],
            case_insensitive: true,
        }
    }
}

impl KeywordStageConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.stage1_terms.is_empty() || self.stage2_terms.is_empty() {
            return Err("keyword term lists must be non-empty".into());
        }
        Ok(())
    }
}

/// Counts surviving each keyword stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub input: u64,
    pub stage1: u64,
    pub stage2: u64,
}

impl AddAssign for FilterStats {
    fn add_assign(&mut self, o: Self) {
        self.input += o.input;
        self.stage1 += o.stage1;
        self.stage2 += o.stage2;
    }
}

/// Substring matcher over abstract text with terms pre-folded once.
#[derive(Debug, Clone)]
pub struct KeywordMatcher {
    terms: Vec<String>,
    case_insensitive: bool,
}

impl KeywordMatcher {
    pub fn new(terms: &[String], case_insensitive: bool) -> Self {
        let terms = terms
            .iter()
            .map(|t| {
                if case_insensitive {
                    t.to_lowercase()
                } else {
                    t.clone()
                }
            })
            .collect();
        Self {
            terms,
            case_insensitive,
        }
    }

    pub fn matches_text(&self, text: &str) -> bool {
        if self.case_insensitive {
            let folded = text.to_lowercase();
            self.terms.iter().any(|t| folded.contains(t.as_str()))
        } else {
            self.terms.iter().any(|t| text.contains(t.as_str()))
        }
    }
}

/// True iff any term occurs in the abstract text. The title is not searched.
pub fn keyword_match(record: &AbstractRecord, terms: &[String], case_insensitive: bool) -> bool {
    KeywordMatcher::new(terms, case_insensitive).matches_text(&record.abstract_text)
}

/// Keeps records passing both keyword stages, in input order.
pub fn filter_corpus(
    records: Vec<AbstractRecord>,
    config: &KeywordStageConfig,
) -> (Vec<AbstractRecord>, FilterStats) {
    let stage1 = KeywordMatcher::new(&config.stage1_terms, config.case_insensitive);
    let stage2 = KeywordMatcher::new(&config.stage2_terms, config.case_insensitive);
    let mut stats = FilterStats {
        input: records.len() as u64,
        ..Default::default()
    };
    let out = records
        .into_iter()
        .filter(|r| {
            if !stage1.matches_text(&r.abstract_text) {
                return false;
            }
            stats.stage1 += 1;
            let pass = stage2.matches_text(&r.abstract_text);
            stats.stage2 += pass as u64;
            pass
        })
        .collect();
    (out, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(pmid: &str, text: &str) -> AbstractRecord {
        AbstractRecord {
            pmid: pmid.into(),
            title: "blood pressure mmHg".into(),
            abstract_text: text.into(),
            source_file: "t".into(),
        }
    }

    fn terms(ts: &[&str]) -> Vec<String> {
        ts.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn keyword_examples() {
        let bp = terms(&["blood pressure"]);
        assert!(keyword_match(
            &rec("1", "Systolic Blood Pressure rose"),
            &bp,
            true
        ));
        assert!(!keyword_match(
            &rec("1", "Systolic Blood Pressure rose"),
            &bp,
            false
        ));
        assert!(!keyword_match(&rec("1", "BP was elevated"), &bp, true));
        let hg = terms(&["mmHg", "mm Hg"]);
        assert!(keyword_match(&rec("1", "was 140 mm Hg at rest"), &hg, true));
        assert!(!keyword_match(
            &rec("1", "was 140 mm  Hg at rest"),
            &hg,
            true
        ));
    }

    #[test]
    fn title_is_not_searched() {
        let r = rec("1", "nothing relevant");
        assert!(!keyword_match(&r, &terms(&["blood pressure"]), true));
    }

    #[test]
    fn planted_corpus() {
        let mut records = Vec::new();
        for i in 0..10 {
            let text = match i {
                0 | 1 => "blood pressure was 120 mmHg",
                2 | 3 => "blood pressure was high",
                4 => "pressure of 12 mmHg in the eye",
                _ => "unrelated",
            };
            records.push(rec(&i.to_string(), text));
        }
        let (out, stats) = filter_corpus(records, &KeywordStageConfig::default());
        assert_eq!(
            stats,
            FilterStats {
                input: 10,
                stage1: 4,
                stage2: 2
            }
        );
        let ids: Vec<_> = out.iter().map(|r| r.pmid.as_str()).collect();
        assert_eq!(ids, ["0", "1"]);
    }

    #[test]
    fn empty_corpus() {
        let (out, stats) = filter_corpus(vec![], &KeywordStageConfig::default());
        assert!(out.is_empty());
        assert_eq!(stats, FilterStats::default());
    }

    proptest! {
        #[test]
        fn adding_terms_is_monotone(text in "[a-zA-Z ]{0,40}", a in "[a-z]{1,3}", b in "[a-z]{1,3}") {
            let r = rec("x", &text);
            let one = keyword_match(&r, std::slice::from_ref(&a), true);
            let two = keyword_match(&r, &[a, b], true);
            prop_assert!(!one || two);
        }

        #[test]
        fn output_is_ordered_subsequence(texts in proptest::collection::vec(
            prop_oneof!["blood pressure mmHg", "blood pressure", "mm Hg", "x"], 0..30)) {
            let records: Vec<_> = texts.iter().enumerate()
                .map(|(i, t)| rec(&i.to_string(), t)).collect();
            let (out, stats) = filter_corpus(records.clone(), &KeywordStageConfig::default());
            prop_assert!(stats.input >= stats.stage1 && stats.stage1 >= stats.stage2);
            prop_assert_eq!(stats.stage2 as usize, out.len());
            let mut it = records.iter();
            for o in &out {
                prop_assert!(it.any(|r| r == o));
            }
        }
    }
}
