//! Post-extraction gates (completeness, physiological ranges, cohort size)
//! and grounding of extracted values in the abstract text.

mod grounding;
mod numbers;
mod ranges;
mod review;

pub use grounding::{
    ground_check, Evidence, FieldGrounding, GroundingReport, Verdict, MAX_DERIVED_CANDIDATES,
};
pub use numbers::{extract_numbers, NumberToken};
pub use ranges::{passes_cohort_filter, validate_ranges, RangeVerdict, RangeViolation};
pub use review::{summarize_review, ReviewSummary, VerdictCounts};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::AbstractRecord;
use crate::exec::Exec;
use crate::extraction::{is_complete, BPExtraction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    pub dbp_min: f64,
    pub dbp_max: f64,
    pub sbp_min: f64,
    pub sbp_max: f64,
    /// Total cohort must be strictly greater than this.
    pub min_total_cohort: u64,
    pub grounding_rel_tolerance: f64,
    pub grounding_abs_tolerance: f64,
    pub max_subset_size: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            dbp_min: 30.0,
            dbp_max: 120.0,
            sbp_min: 60.0,
            sbp_max: 200.0,
            min_total_cohort: 100,
            grounding_rel_tolerance: 1e-9,
            grounding_abs_tolerance: 0.05,
            max_subset_size: 4,
        }
    }
}

impl ValidationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.dbp_min < self.dbp_max) || !(self.sbp_min < self.sbp_max) {
            return Err("range bounds must satisfy min < max".into());
        }
        if self.grounding_abs_tolerance < 0.0 || self.grounding_rel_tolerance < 0.0 {
            return Err("grounding tolerances must be non-negative".into());
        }
        Ok(())
    }
}

/// An extraction that passed every gate, with its grounding verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedRecord {
    pub extraction: BPExtraction,
    pub grounding: GroundingReport,
}

/// Stage counts along completeness → range → cohort.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCounts {
    pub extractions: u64,
    pub complete: u64,
    pub in_range: u64,
    pub cohort_pass: u64,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationOutcome {
    pub validated: Vec<ValidatedRecord>,
    pub reports: Vec<GroundingReport>,
    pub counts: GateCounts,
    pub summary: ReviewSummary,
}

/// Grounds every extraction and keeps those that are complete, in range
/// and above the cohort threshold, in input order. Extractions whose pmid
/// has no abstract record are grounded against empty text.
pub fn validate_batch(
    extractions: &[BPExtraction],
    records: &[AbstractRecord],
    cfg: &ValidationConfig,
    exec: Exec,
) -> ValidationOutcome {
    let by_pmid: HashMap<&str, &AbstractRecord> =
        records.iter().map(|r| (r.pmid.as_str(), r)).collect();
    let empty = AbstractRecord {
        pmid: String::new(),
        title: String::new(),
        abstract_text: String::new(),
        source_file: String::new(),
    };
    let per_record = exec.map(extractions, |x| {
        let record = by_pmid.get(x.pmid.as_str()).copied().unwrap_or(&empty);
        let report = ground_check(x, record, cfg);
        let complete = is_complete(x);
        let in_range = complete && validate_ranges(x, cfg).passed();
        let cohort = in_range && passes_cohort_filter(x, cfg);
        (report, complete, in_range, cohort)
    });
    let mut out = ValidationOutcome {
        counts: GateCounts {
            extractions: extractions.len() as u64,
            ..Default::default()
        },
        ..Default::default()
    };
    for (x, (report, complete, in_range, cohort)) in extractions.iter().zip(per_record) {
        out.counts.complete += complete as u64;
        out.counts.in_range += in_range as u64;
        out.counts.cohort_pass += cohort as u64;
        if cohort {
            out.validated.push(ValidatedRecord {
                extraction: x.clone(),
                grounding: report.clone(),
            });
        }
        out.reports.push(report);
    }
    out.summary = summarize_review(&out.reports, extractions);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(pmid: &str, n: (u64, u64), sbp_m: f64, dbp_f: f64) -> BPExtraction {
        BPExtraction {
            pmid: pmid.into(),
            n_male: Some(n.0),
            n_female: Some(n.1),
            sbp_mean_male: Some(sbp_m),
            sbp_sd_male: Some(10.0),
            sbp_mean_female: Some(120.0),
            sbp_sd_female: Some(9.0),
            dbp_mean_male: Some(80.0),
            dbp_sd_male: Some(7.0),
            dbp_mean_female: Some(dbp_f),
            dbp_sd_female: Some(6.0),
            raw_answer: String::new(),
        }
    }

    #[test]
    fn gates_in_order() {
        let xs = vec![
            x("ok", (60, 50), 130.0, 75.0),
            x("range", (60, 50), 210.0, 75.0),
            x("cohort", (50, 50), 130.0, 75.0),
            BPExtraction::empty("incomplete"),
        ];
        let out = validate_batch(&xs, &[], &ValidationConfig::default(), Exec::default());
        assert_eq!(
            out.counts,
            GateCounts {
                extractions: 4,
                complete: 3,
                in_range: 2,
                cohort_pass: 1
            }
        );
        assert_eq!(out.validated.len(), 1);
        assert_eq!(out.validated[0].extraction.pmid, "ok");
        assert_eq!(out.reports.len(), 4);
        assert_eq!(out.summary.complete, 3);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let xs: Vec<_> = (0..50)
            .map(|i| x(&i.to_string(), (i, 60), 100.0 + i as f64, 70.0))
            .collect();
        let cfg = ValidationConfig::default();
        let a = validate_batch(&xs, &[], &cfg, Exec::Sequential);
        let b = validate_batch(&xs, &[], &cfg, Exec::Parallel);
        assert_eq!(a.validated, b.validated);
        assert_eq!(a.counts, b.counts);
    }

    #[test]
    fn config_invariants() {
        assert!(ValidationConfig::default().validate().is_ok());
        let bad = ValidationConfig {
            dbp_min: 130.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
