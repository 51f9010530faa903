use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::Comparison;
use crate::corpus::{FilterStats, IngestStats};
use crate::extraction::TelemetrySnapshot;
use crate::validation::{GateCounts, ReviewSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Filter,
    Extract,
    Validate,
    Analyze,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Ingest,
        Stage::Filter,
        Stage::Extract,
        Stage::Validate,
        Stage::Analyze,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Filter => "filter",
            Stage::Extract => "extract",
            Stage::Validate => "validate",
            Stage::Analyze => "analyze",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Completed,
    /// Inputs and outputs matched the previous run; nothing was recomputed.
    Skipped,
    Failed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractStats {
    pub requested: u64,
    pub extracted: u64,
    pub empty_answers: u64,
    pub telemetry: TelemetrySnapshot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SexSummary {
    pub points: u64,
    /// Selected component count; absent when nothing was fitted.
    pub k: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeStats {
    pub male: SexSummary,
    pub female: SexSummary,
    pub comparison: Comparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StageStats {
    Ingest(IngestStats),
    Filter(FilterStats),
    Extract(ExtractStats),
    Validate {
        gates: GateCounts,
        review: ReviewSummary,
    },
    Analyze(AnalyzeStats),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: StageStatus,
    /// Digest of the stage's configuration and upstream outputs.
    pub input_digest: String,
    /// Output path relative to the run directory → sha256 of its bytes.
    pub outputs: BTreeMap<String, String>,
    pub stats: Option<StageStats>,
    pub error: Option<String>,
}

/// Record counts at each narrowing step of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Funnel {
    pub citations: Option<u64>,
    pub ingested: Option<u64>,
    pub stage1: Option<u64>,
    pub filtered: Option<u64>,
    pub extracted: Option<u64>,
    pub complete: Option<u64>,
    pub in_range: Option<u64>,
    pub cohort_pass: Option<u64>,
}

impl Funnel {
    /// Known counts in funnel order.
    pub fn steps(&self) -> Vec<(&'static str, u64)> {
        [
            ("ingested", self.ingested),
            ("keyword stage 1", self.stage1),
            ("keyword stage 2", self.filtered),
            ("extracted", self.extracted),
            ("complete", self.complete),
            ("in range", self.in_range),
            ("cohort", self.cohort_pass),
        ]
        .into_iter()
        .filter_map(|(n, v)| Some((n, v?)))
        .collect()
    }

    pub fn is_monotone(&self) -> bool {
        self.steps().windows(2).all(|w| w[0].1 >= w[1].1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_digest: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub stages: Vec<StageRecord>,
    pub failed_stage: Option<Stage>,
    pub funnel: Funnel,
    /// Backend activity during this invocation only.
    pub telemetry: TelemetrySnapshot,
}

impl RunManifest {
    pub const FILE: &'static str = "manifest.json";

    pub fn load(dir: &Path) -> std::io::Result<Self> {
        super::io::read_json(&dir.join(Self::FILE))
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == stage)
    }

    pub fn stats(&self, stage: Stage) -> Option<&StageStats> {
        self.stage(stage).and_then(|r| r.stats.as_ref())
    }

    pub fn upsert(&mut self, record: StageRecord) {
        match self.stages.iter_mut().find(|r| r.stage == record.stage) {
            Some(slot) => *slot = record,
            None => {
                self.stages.push(record);
                self.stages.sort_by_key(|r| r.stage);
            }
        }
    }

    pub fn refresh_funnel(&mut self) {
        let mut f = Funnel::default();
        for r in &self.stages {
            if r.status == StageStatus::Failed {
                continue;
            }
            match &r.stats {
                Some(StageStats::Ingest(s)) => {
                    f.citations = Some(s.citations);
                    f.ingested = Some(s.records);
                }
                Some(StageStats::Filter(s)) => {
                    f.stage1 = Some(s.stage1);
                    f.filtered = Some(s.stage2);
                }
                Some(StageStats::Extract(s)) => f.extracted = Some(s.extracted),
                Some(StageStats::Validate { gates, .. }) => {
                    f.complete = Some(gates.complete);
                    f.in_range = Some(gates.in_range);
                    f.cohort_pass = Some(gates.cohort_pass);
                }
                Some(StageStats::Analyze(_)) | None => {}
            }
        }
        self.funnel = f;
    }
}
