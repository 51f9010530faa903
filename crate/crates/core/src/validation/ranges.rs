use serde::{Deserialize, Serialize};

use super::ValidationConfig;
use crate::extraction::{BPExtraction, Field};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeViolation {
    pub field: Field,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RangeVerdict {
    Pass,
    Fail(Vec<RangeViolation>),
}

impl RangeVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, RangeVerdict::Pass)
    }
}

/// Means must lie within the configured bounds (inclusive); SDs need only
/// be non-negative. Absent fields are not checked.
pub fn validate_ranges(x: &BPExtraction, cfg: &ValidationConfig) -> RangeVerdict {
    let violations: Vec<_> = Field::ALL
        .iter()
        .filter(|f| !f.is_count())
        .filter_map(|&field| {
            let value = x.get(field)?;
            let ok = if field.is_sd() {
                value >= 0.0
            } else if field.is_systolic() {
                (cfg.sbp_min..=cfg.sbp_max).contains(&value)
            } else {
                (cfg.dbp_min..=cfg.dbp_max).contains(&value)
            };
            (!ok).then_some(RangeViolation { field, value })
        })
        .collect();
    if violations.is_empty() {
        RangeVerdict::Pass
    } else {
        RangeVerdict::Fail(violations)
    }
}

/// Total cohort must strictly exceed `min_total_cohort`.
pub fn passes_cohort_filter(x: &BPExtraction, cfg: &ValidationConfig) -> bool {
    match (x.n_male, x.n_female) {
        (Some(m), Some(f)) => m.saturating_add(f) > cfg.min_total_cohort,
        _ => false,
    }
}
