//! Resumable end-to-end runs: ingest → filter → extract → validate →
//! analyze, each stage writing files under the run directory and recording
//! digests in a manifest so unchanged stages are skipped on the next run.

mod config;
mod fetch;
pub mod io;
mod manifest;
mod outputs;
mod report;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use thiserror::Error;

pub use config::{BackendConfig, BackendKind, PipelineConfig, RunConfig};
pub use fetch::fetch;
pub use manifest::{
    AnalyzeStats, ExtractStats, Funnel, RunManifest, SexSummary, Stage, StageRecord, StageStats,
    StageStatus,
};
pub use outputs::{comparison_json, write_analysis, ANALYSIS_DIR};
pub use report::render_report;

use self::io::{digest_parts, for_each_jsonl, read_jsonl, sha256_file, JsonlWriter};
use crate::analysis::{analyze, AnalysisOutput};
use crate::corpus::{parse_file, AbstractRecord, FilterStats, IngestStats, KeywordMatcher};
use crate::exec::Exec;
use crate::extraction::cache::unix_now;
use crate::extraction::{
    build_prompt, parse_answer, query_backend, BPExtraction, Backend, BackendRequest, Budget,
    DiskCache, MockBackend, QueryContext, QueryError, RateLimiter, RemoteBackend, Telemetry,
};
use crate::validation::{validate_batch, ValidatedRecord};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const FILTERED_FILE: &str = "filtered.jsonl";
pub const EXTRACTIONS_FILE: &str = "extractions.jsonl";
pub const VALIDATED_FILE: &str = "validated.jsonl";
pub const GROUNDING_FILE: &str = "grounding.jsonl";
pub const REVIEW_FILE: &str = "review.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: Stage, message: String },
    #[error("stage {stage}: {message}")]
    Budget { stage: Stage, message: String },
}

impl PipelineError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Stage { .. } => 3,
            PipelineError::Budget { .. } => 4,
        }
    }

    fn stage(stage: Stage, e: impl std::fmt::Display) -> Self {
        PipelineError::Stage {
            stage,
            message: e.to_string(),
        }
    }
}

#[derive(Clone)]
pub struct RunOptions {
    /// Last stage to run.
    pub through: Stage,
    pub exec: Exec,
    /// Recompute every stage even when its recorded digests still match.
    pub force: bool,
    /// Used instead of the configured backend, e.g. in tests.
    pub backend: Option<Arc<dyn Backend>>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            through: Stage::Analyze,
            exec: Exec::default(),
            force: false,
            backend: None,
        }
    }
}

type StageOutput = (Vec<String>, StageStats);

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    opts: &'a RunOptions,
    out: &'a Path,
    previous: Option<RunManifest>,
    manifest: RunManifest,
    telemetry: Arc<Telemetry>,
}

impl Runner<'_> {
    fn output_digest(&self, stage: Stage, file: &str) -> &str {
        self.manifest
            .stage(stage)
            .and_then(|r| r.outputs.get(file))
            .map(String::as_str)
            .unwrap_or("")
    }

    fn up_to_date(&self, stage: Stage, input_digest: &str) -> Option<StageRecord> {
        if self.opts.force {
            return None;
        }
        let prev = self.previous.as_ref()?.stage(stage)?;
        if prev.status == StageStatus::Failed || prev.input_digest != input_digest {
            return None;
        }
        for (file, digest) in &prev.outputs {
            if sha256_file(&self.out.join(file)).ok().as_deref() != Some(digest.as_str()) {
                return None;
            }
        }
        Some(StageRecord {
            status: StageStatus::Skipped,
            ..prev.clone()
        })
    }

    fn step(
        &mut self,
        stage: Stage,
        input_digest: String,
        compute: impl FnOnce(&Self) -> Result<StageOutput, PipelineError>,
    ) -> Result<(), PipelineError> {
        if let Some(record) = self.up_to_date(stage, &input_digest) {
            log::info!("{stage}: up to date, skipped");
            self.manifest.upsert(record);
            return Ok(());
        }
        log::info!("{stage}: running");
        let result = compute(self).and_then(|(files, stats)| {
            let mut outputs = BTreeMap::new();
            for f in files {
                let digest =
                    sha256_file(&self.out.join(&f)).map_err(|e| PipelineError::stage(stage, e))?;
                outputs.insert(f, digest);
            }
            Ok((outputs, stats))
        });
        match result {
            Ok((outputs, stats)) => {
                self.manifest.upsert(StageRecord {
                    stage,
                    status: StageStatus::Completed,
                    input_digest,
                    outputs,
                    stats: Some(stats),
                    error: None,
                });
                Ok(())
            }
            Err(e) => {
                log::error!("{e}");
                self.manifest.upsert(StageRecord {
                    stage,
                    status: StageStatus::Failed,
                    input_digest,
                    outputs: BTreeMap::new(),
                    stats: None,
                    error: Some(e.to_string()),
                });
                self.manifest.failed_stage = Some(stage);
                Err(e)
            }
        }
    }

    fn finish(&mut self) -> Result<(), PipelineError> {
        self.manifest.telemetry = self.telemetry.snapshot();
        self.manifest.finished_unix = unix_now();
        self.manifest.refresh_funnel();
        io::write_json(&self.out.join(RunManifest::FILE), &self.manifest)
            .map_err(|e| PipelineError::Config(format!("cannot write manifest: {e}")))
    }

    fn ingest(&self) -> Result<StageOutput, PipelineError> {
        let err = |e| PipelineError::stage(Stage::Ingest, e);
        let path = self.out.join(RECORDS_FILE);
        let mut writer = JsonlWriter::create(&path).map_err(err)?;
        let mut stats = IngestStats::default();
        let mut seen = HashSet::new();
        if let [single] = self.cfg.inputs.as_slice() {
            if config::is_jsonl(single) {
                for_each_jsonl(single, |r: AbstractRecord| {
                    stats.citations += 1;
                    if !seen.insert(r.pmid.clone()) {
                        stats.duplicate_pmids += 1;
                        return Ok(());
                    }
                    stats.records += 1;
                    writer.push(&r)
                })
                .map_err(err)?;
                writer.finish().map_err(err)?;
                return Ok((vec![RECORDS_FILE.into()], StageStats::Ingest(stats)));
            }
        }
        for batch in self.cfg.inputs.chunks(8) {
            let parsed = self.opts.exec.map(batch, |p: &PathBuf| parse_file(p));
            for result in parsed {
                let (records, file_stats) =
                    result.map_err(|e| PipelineError::stage(Stage::Ingest, e))?;
                stats += file_stats;
                for r in records {
                    if seen.insert(r.pmid.clone()) {
                        writer.push(&r).map_err(err)?;
                    } else {
                        stats.duplicate_pmids += 1;
                        stats.records -= 1;
                    }
                }
            }
        }
        writer.finish().map_err(err)?;
        Ok((vec![RECORDS_FILE.into()], StageStats::Ingest(stats)))
    }

    fn filter(&self) -> Result<StageOutput, PipelineError> {
        let err = |e| PipelineError::stage(Stage::Filter, e);
        let k = &self.cfg.keywords;
        let stage1 = KeywordMatcher::new(&k.stage1_terms, k.case_insensitive);
        let stage2 = KeywordMatcher::new(&k.stage2_terms, k.case_insensitive);
        let mut writer = JsonlWriter::create(&self.out.join(FILTERED_FILE)).map_err(err)?;
        let mut stats = FilterStats::default();
        for_each_jsonl(&self.out.join(RECORDS_FILE), |r: AbstractRecord| {
            stats.input += 1;
            if !stage1.matches_text(&r.abstract_text) {
                return Ok(());
            }
            stats.stage1 += 1;
            if !stage2.matches_text(&r.abstract_text) {
                return Ok(());
            }
            stats.stage2 += 1;
            writer.push(&r)
        })
        .map_err(err)?;
        writer.finish().map_err(err)?;
        Ok((vec![FILTERED_FILE.into()], StageStats::Filter(stats)))
    }

    fn extract(&self, backend: &dyn Backend) -> Result<StageOutput, PipelineError> {
        let err = |e| PipelineError::stage(Stage::Extract, e);
        let template = self.cfg.load_template()?;
        let records: Vec<AbstractRecord> =
            read_jsonl(&self.out.join(FILTERED_FILE)).map_err(err)?;
        let cache = DiskCache::open(self.cfg.cache_dir().join(backend.id())).map_err(err)?;
        let b = &self.cfg.backend;
        let limiter = if b.requests_per_second > 0.0 {
            RateLimiter::new(b.requests_per_second, b.burst.max(1))
        } else {
            RateLimiter::unlimited()
        };
        let budget = Budget::new(self.cfg.run.max_requests);
        let before = self.telemetry.snapshot();
        let ctx = QueryContext {
            backend,
            cache: &cache,
            retry: b.retry,
            limiter: &limiter,
            budget: &budget,
            telemetry: &self.telemetry,
        };
        let decode_params = b.decode_params();
        // Once the backend is unreachable, remaining records are not attempted.
        let abort = AtomicBool::new(false);
        let answers = self
            .opts
            .exec
            .map_bounded(&records, self.cfg.run.parallelism, |r| {
                if abort.load(Ordering::Relaxed) {
                    return None;
                }
                let request = BackendRequest {
                    prompt: build_prompt(r, &template),
                    model_id: b.model_id.clone(),
                    decode_params,
                };
                let result =
                    query_backend(&request, &r.pmid, &ctx).map(|a| parse_answer(&a.text, &r.pmid));
                if matches!(
                    result,
                    Err(QueryError::Transport { .. } | QueryError::Cache(_))
                ) {
                    abort.store(true, Ordering::Relaxed);
                }
                Some(result)
            });

        let mut extractions = Vec::with_capacity(records.len());
        let mut empty = 0u64;
        let mut budget_hit = None;
        for answer in answers.into_iter().flatten() {
            match answer {
                Ok(x) => extractions.push(x),
                Err(QueryError::EmptyAnswer { pmid }) => {
                    log::warn!("pmid {pmid}: empty answer, skipped");
                    empty += 1;
                }
                Err(e @ QueryError::BudgetExhausted(_)) => budget_hit = Some(e),
                Err(e) => return Err(PipelineError::stage(Stage::Extract, e)),
            }
        }
        if let Some(e) = budget_hit {
            return Err(PipelineError::Budget {
                stage: Stage::Extract,
                message: format!(
                    "{e}; {} answers are cached and will be reused on the next run",
                    extractions.len()
                ),
            });
        }
        io::write_jsonl(&self.out.join(EXTRACTIONS_FILE), &extractions).map_err(err)?;
        let after = self.telemetry.snapshot();
        let stats = ExtractStats {
            requested: records.len() as u64,
            extracted: extractions.len() as u64,
            empty_answers: empty,
            telemetry: crate::extraction::TelemetrySnapshot {
                calls: after.calls - before.calls,
                cache_hits: after.cache_hits - before.cache_hits,
                retries: after.retries - before.retries,
                empty_answers: after.empty_answers - before.empty_answers,
                latency_ms: after.latency_ms - before.latency_ms,
            },
        };
        Ok((vec![EXTRACTIONS_FILE.into()], StageStats::Extract(stats)))
    }

    fn validate(&self) -> Result<StageOutput, PipelineError> {
        let err = |e| PipelineError::stage(Stage::Validate, e);
        let extractions: Vec<BPExtraction> =
            read_jsonl(&self.out.join(EXTRACTIONS_FILE)).map_err(err)?;
        let records: Vec<AbstractRecord> =
            read_jsonl(&self.out.join(FILTERED_FILE)).map_err(err)?;
        let outcome = validate_batch(&extractions, &records, &self.cfg.validation, self.opts.exec);
        io::write_jsonl(&self.out.join(VALIDATED_FILE), &outcome.validated).map_err(err)?;
        io::write_jsonl(&self.out.join(GROUNDING_FILE), &outcome.reports).map_err(err)?;
        io::write_json(&self.out.join(REVIEW_FILE), &outcome.summary).map_err(err)?;
        Ok((
            vec![
                VALIDATED_FILE.into(),
                GROUNDING_FILE.into(),
                REVIEW_FILE.into(),
            ],
            StageStats::Validate {
                gates: outcome.counts,
                review: outcome.summary,
            },
        ))
    }

    fn analyze(&self) -> Result<StageOutput, PipelineError> {
        let err = |e| PipelineError::stage(Stage::Analyze, e);
        let validated: Vec<ValidatedRecord> =
            read_jsonl(&self.out.join(VALIDATED_FILE)).map_err(err)?;
        let extractions: Vec<BPExtraction> = validated.into_iter().map(|v| v.extraction).collect();
        let result: AnalysisOutput = analyze(&extractions, &self.cfg.analysis, self.opts.exec)
            .map_err(|e| PipelineError::stage(Stage::Analyze, e))?;
        let files = write_analysis(self.out, &result).map_err(err)?;
        let summary = |a: &crate::analysis::SexAnalysis| SexSummary {
            points: a.points.len() as u64,
            k: a.fit.as_ref().map(|f| f.selection.k as u64),
        };
        Ok((
            files,
            StageStats::Analyze(AnalyzeStats {
                male: summary(&result.male),
                female: summary(&result.female),
                comparison: result.comparison,
            }),
        ))
    }
}

fn json_bytes<T: serde::Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).expect("serializable")
}

fn make_backend(cfg: &PipelineConfig) -> Result<Arc<dyn Backend>, PipelineError> {
    let b = &cfg.backend;
    Ok(match b.kind {
        BackendKind::Mock => Arc::new(MockBackend::new(&cfg.load_template()?)),
        BackendKind::Remote => {
            let endpoint = b
                .endpoint
                .clone()
                .ok_or_else(|| PipelineError::Config("remote backend needs an endpoint".into()))?;
            let key = std::env::var(&b.api_key_env)
                .map_err(|_| PipelineError::Config(format!("{} is not set", b.api_key_env)))?;
            Arc::new(RemoteBackend::new(endpoint, key, b.timeout()))
        }
    })
}

/// Runs every stage up to `opts.through`, skipping stages whose inputs and
/// outputs are unchanged since the last run in the same directory. The
/// manifest is written even when a stage fails.
pub fn run(cfg: &PipelineConfig, opts: &RunOptions) -> Result<RunManifest, PipelineError> {
    cfg.validate()?;
    let out = cfg.out_dir.as_path();
    std::fs::create_dir_all(out)
        .map_err(|e| PipelineError::Config(format!("{}: {e}", out.display())))?;
    let previous = RunManifest::load(out).ok();
    let backend = match &opts.backend {
        Some(b) => b.clone(),
        None => make_backend(cfg)?,
    };
    let template = cfg.load_template()?;

    let mut runner = Runner {
        cfg,
        opts,
        out,
        previous,
        manifest: RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_digest: io::sha256_hex(cfg.to_toml().as_bytes()),
            started_unix: unix_now(),
            finished_unix: 0,
            stages: vec![],
            failed_stage: None,
            funnel: Funnel::default(),
            telemetry: Default::default(),
        },
        telemetry: Arc::new(Telemetry::default()),
    };

    let result = (|| {
        let mut inputs: Vec<(String, String)> = Vec::new();
        for p in &cfg.inputs {
            let digest = sha256_file(p).map_err(|e| PipelineError::stage(Stage::Ingest, e))?;
            inputs.push((p.display().to_string(), digest));
        }
        let digest = digest_parts(
            std::iter::once(("stage", b"ingest".as_slice()))
                .chain(inputs.iter().map(|(n, d)| (n.as_str(), d.as_bytes()))),
        );
        runner.step(Stage::Ingest, digest, Runner::ingest)?;
        if opts.through == Stage::Ingest {
            return Ok(());
        }

        let digest = digest_parts([
            ("stage", b"filter".as_slice()),
            (
                "records",
                runner.output_digest(Stage::Ingest, RECORDS_FILE).as_bytes(),
            ),
            ("keywords", &json_bytes(&cfg.keywords)),
        ]);
        runner.step(Stage::Filter, digest, Runner::filter)?;
        if opts.through == Stage::Filter {
            return Ok(());
        }

        let digest = digest_parts([
            ("stage", b"extract".as_slice()),
            (
                "filtered",
                runner
                    .output_digest(Stage::Filter, FILTERED_FILE)
                    .as_bytes(),
            ),
            ("template", template.text().as_bytes()),
            ("backend", backend.id().as_bytes()),
            ("model", cfg.backend.model_id.as_bytes()),
            ("decode", &json_bytes(&cfg.backend.decode_params())),
        ]);
        runner.step(Stage::Extract, digest, |r| r.extract(backend.as_ref()))?;
        if opts.through == Stage::Extract {
            return Ok(());
        }

        let digest = digest_parts([
            ("stage", b"validate".as_slice()),
            (
                "extractions",
                runner
                    .output_digest(Stage::Extract, EXTRACTIONS_FILE)
                    .as_bytes(),
            ),
            (
                "filtered",
                runner
                    .output_digest(Stage::Filter, FILTERED_FILE)
                    .as_bytes(),
            ),
            ("validation", &json_bytes(&cfg.validation)),
        ]);
        runner.step(Stage::Validate, digest, Runner::validate)?;
        if opts.through == Stage::Validate {
            return Ok(());
        }

        let digest = digest_parts([
            ("stage", b"analyze".as_slice()),
            (
                "validated",
                runner
                    .output_digest(Stage::Validate, VALIDATED_FILE)
                    .as_bytes(),
            ),
            ("analysis", &json_bytes(&cfg.analysis)),
        ]);
        runner.step(Stage::Analyze, digest, Runner::analyze)
    })();

    runner.finish()?;
    result.map(|_| runner.manifest)
}
