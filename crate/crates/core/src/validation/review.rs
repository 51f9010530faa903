use std::collections::{BTreeMap, HashMap};
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use super::grounding::{GroundingReport, Verdict};
use crate::extraction::{is_complete, BPExtraction, Field};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub exact: u64,
    pub derived: u64,
    pub unsupported: u64,
    pub missing: u64,
}

impl VerdictCounts {
    fn bump(&mut self, v: Verdict) {
        match v {
            Verdict::Exact => self.exact += 1,
            Verdict::Derived => self.derived += 1,
            Verdict::Unsupported => self.unsupported += 1,
            Verdict::Missing => self.missing += 1,
        }
    }
}

impl AddAssign for VerdictCounts {
    fn add_assign(&mut self, o: Self) {
        self.exact += o.exact;
        self.derived += o.derived;
        self.unsupported += o.unsupported;
        self.missing += o.missing;
    }
}

/// Automated counterpart of a manual review of the extractions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewSummary {
    pub extractions: u64,
    pub complete: u64,
    /// Complete, and every field Exact or Derived.
    pub complete_fully_grounded: u64,
    /// Complete, and every field Exact.
    pub complete_all_exact: u64,
    pub complete_with_unsupported: u64,
    /// Keyed by field name, over all extractions.
    pub per_field: BTreeMap<String, VerdictCounts>,
}

impl AddAssign<&ReviewSummary> for ReviewSummary {
    fn add_assign(&mut self, o: &ReviewSummary) {
        self.extractions += o.extractions;
        self.complete += o.complete;
        self.complete_fully_grounded += o.complete_fully_grounded;
        self.complete_all_exact += o.complete_all_exact;
        self.complete_with_unsupported += o.complete_with_unsupported;
        for (k, v) in &o.per_field {
            *self.per_field.entry(k.clone()).or_default() += *v;
        }
    }
}

impl ReviewSummary {
    fn add(&mut self, x: &BPExtraction, r: &GroundingReport) {
        self.extractions += 1;
        for f in Field::ALL {
            self.per_field
                .entry(f.name().to_string())
                .or_default()
                .bump(r.verdict(f));
        }
        if is_complete(x) {
            self.complete += 1;
            if r.fully_grounded() {
                self.complete_fully_grounded += 1;
            }
            if r.fields.iter().all(|g| g.verdict == Verdict::Exact) {
                self.complete_all_exact += 1;
            }
            if r.any_unsupported() {
                self.complete_with_unsupported += 1;
            }
        }
    }
}

/// Aggregates reports joined to extractions by pmid. Extractions without a
/// report are ignored.
pub fn summarize_review(
    reports: &[GroundingReport],
    extractions: &[BPExtraction],
) -> ReviewSummary {
    let by_pmid: HashMap<&str, &GroundingReport> =
        reports.iter().map(|r| (r.pmid.as_str(), r)).collect();
    let mut s = ReviewSummary::default();
    for x in extractions {
        if let Some(r) = by_pmid.get(x.pmid.as_str()) {
            s.add(x, r);
        }
    }
    s
}
