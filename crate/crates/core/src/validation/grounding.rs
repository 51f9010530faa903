//! Classifies each extracted value against the numbers printed in the
//! source abstract: present verbatim, obtainable as the arithmetic mean of
//! a few printed numbers, or unsupported.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::numbers::{extract_numbers, NumberToken};
use super::ValidationConfig;
use crate::corpus::AbstractRecord;
use crate::extraction::{BPExtraction, Field};

/// Per-abstract cap on distinct values searched for derived means.
pub const MAX_DERIVED_CANDIDATES: usize = 60;

/// Ordered best to worst: `Exact < Derived < Unsupported < Missing`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verdict {
    Exact,
    Derived,
    Unsupported,
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    Span {
        text: String,
        start: usize,
        end: usize,
    },
    Mean {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldGrounding {
    pub field: Field,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<Evidence>,
}

/// One verdict per field, in canonical field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingReport {
    pub pmid: String,
    pub fields: Vec<FieldGrounding>,
}

impl GroundingReport {
    pub fn verdict(&self, field: Field) -> Verdict {
        self.fields
            .iter()
            .find(|g| g.field == field)
            .map(|g| g.verdict)
            .unwrap_or(Verdict::Missing)
    }

    pub fn get(&self, field: Field) -> Option<&FieldGrounding> {
        self.fields.iter().find(|g| g.field == field)
    }

    /// Every present field is Exact or Derived.
    pub fn fully_grounded(&self) -> bool {
        self.fields
            .iter()
            .all(|g| g.verdict != Verdict::Unsupported)
    }

    pub fn any_unsupported(&self) -> bool {
        self.fields
            .iter()
            .any(|g| g.verdict == Verdict::Unsupported)
    }
}

fn within(a: f64, b: f64, cfg: &ValidationConfig) -> bool {
    (a - b).abs() <= tolerance(b, cfg)
}

fn tolerance(v: f64, cfg: &ValidationConfig) -> f64 {
    cfg.grounding_abs_tolerance + cfg.grounding_rel_tolerance * v.abs()
}

/// Abstract numbers prepared once for all ten fields.
struct Candidates<'a> {
    text: &'a str,
    tokens: Vec<NumberToken>,
    /// Distinct values in order of first appearance, capped, then sorted.
    sorted: Vec<f64>,
}

impl<'a> Candidates<'a> {
    fn new(text: &'a str, pmid: &str) -> Self {
        let tokens = extract_numbers(text);
        let mut seen = HashSet::new();
        let mut distinct: Vec<f64> = tokens
            .iter()
            .map(|t| t.value)
            .filter(|v| seen.insert(v.to_bits()))
            .collect();
        if distinct.len() > MAX_DERIVED_CANDIDATES {
            log::warn!(
                "pmid {pmid}: {} distinct numbers, derived-mean search limited to the first {MAX_DERIVED_CANDIDATES}",
                distinct.len()
            );
            distinct.truncate(MAX_DERIVED_CANDIDATES);
        }
        distinct.sort_by(f64::total_cmp);
        Self {
            text,
            tokens,
            sorted: distinct,
        }
    }

    fn exact(&self, v: f64, cfg: &ValidationConfig) -> Option<Evidence> {
        self.tokens
            .iter()
            .find(|t| within(t.value, v, cfg))
            .map(|t| Evidence::Span {
                text: self.text[t.span.clone()].to_string(),
                start: t.span.start,
                end: t.span.end,
            })
    }

    /// Smallest subset (2..=max size, lexicographic by sorted index) whose
    /// mean matches `v`.
    fn derived(&self, v: f64, cfg: &ValidationConfig) -> Option<Evidence> {
        let mut picked = Vec::new();
        for size in 2..=cfg.max_subset_size.max(1) {
            if size > self.sorted.len() {
                break;
            }
            if self.search(v, size, 0, 0.0, &mut picked, cfg) {
                return Some(Evidence::Mean {
                    values: picked.iter().map(|&i| self.sorted[i]).collect(),
                });
            }
        }
        None
    }

    fn search(
        &self,
        v: f64,
        size: usize,
        from: usize,
        sum: f64,
        picked: &mut Vec<usize>,
        cfg: &ValidationConfig,
    ) -> bool {
        let xs = &self.sorted;
        if picked.len() + 1 == size {
            // Last element: binary search the window that completes the mean.
            let k = size as f64;
            let tol = tolerance(v, cfg);
            let lo = k * (v - tol) - sum;
            let start = from + xs[from..].partition_point(|&x| x < lo);
            for i in start..xs.len() {
                let mean = (sum + xs[i]) / k;
                if mean > v + tol {
                    break;
                }
                if within(mean, v, cfg) {
                    picked.push(i);
                    return true;
                }
            }
            return false;
        }
        let remaining = size - picked.len();
        for i in from..xs.len().saturating_sub(remaining - 1) {
            picked.push(i);
            if self.search(v, size, i + 1, sum + xs[i], picked, cfg) {
                return true;
            }
            picked.pop();
        }
        false
    }
}

/// Grounds every present field of `x` in the abstract text.
pub fn ground_check(
    x: &BPExtraction,
    record: &AbstractRecord,
    cfg: &ValidationConfig,
) -> GroundingReport {
    let candidates = Candidates::new(&record.abstract_text, &x.pmid);
    let fields = Field::ALL
        .iter()
        .map(|&field| {
            let Some(v) = x.get(field) else {
                return FieldGrounding {
                    field,
                    verdict: Verdict::Missing,
                    evidence: None,
                };
            };
            if let Some(e) = candidates.exact(v, cfg) {
                return FieldGrounding {
                    field,
                    verdict: Verdict::Exact,
                    evidence: Some(e),
                };
            }
            match candidates.derived(v, cfg) {
                Some(e) => FieldGrounding {
                    field,
                    verdict: Verdict::Derived,
                    evidence: Some(e),
                },
                None => FieldGrounding {
                    field,
                    verdict: Verdict::Unsupported,
                    evidence: None,
                },
            }
        })
        .collect();
    GroundingReport {
        pmid: x.pmid.clone(),
        fields,
    }
}
