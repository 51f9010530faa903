use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::analysis::AnalysisConfig;
use crate::corpus::KeywordStageConfig;
use crate::extraction::{DecodeParams, PromptTemplate, RetryPolicy};
use crate::validation::ValidationConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Chat-completions URL of the remote service.
    pub endpoint: Option<String>,
    pub model_id: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub temperature: f64,
    pub max_answer_length: u32,
    pub retry: RetryPolicy,
    /// Remote calls per second; 0 disables the limiter.
    pub requests_per_second: f64,
    pub burst: u32,
    pub timeout_secs: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        let d = DecodeParams::default();
        Self {
            kind: BackendKind::Mock,
            endpoint: None,
            model_id: "gpt-35-turbo".into(),
            api_key_env: "BPMINER_API_KEY".into(),
            temperature: d.temperature,
            max_answer_length: d.max_answer_length,
            retry: RetryPolicy::default(),
            requests_per_second: 5.0,
            burst: 5,
            timeout_secs: 60,
        }
    }
}

impl BackendConfig {
    pub fn decode_params(&self) -> DecodeParams {
        DecodeParams {
            temperature: self.temperature,
            max_answer_length: self.max_answer_length,
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Worker threads for the extraction stage.
    pub parallelism: usize,
    /// Cap on uncached backend requests; unlimited when unset.
    pub max_requests: Option<u64>,
    /// Response cache directory; `<out_dir>/cache` when unset.
    pub cache_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            parallelism: 4,
            max_requests: None,
            cache_dir: None,
        }
    }
}

/// Full configuration of a run, usually loaded from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Baseline XML files (gzipped or plain), or a single `.jsonl` of
    /// abstract records.
    pub inputs: Vec<PathBuf>,
    pub out_dir: PathBuf,
    /// Prompt template file; the built-in template when unset.
    pub template: Option<PathBuf>,
    pub keywords: KeywordStageConfig,
    pub backend: BackendConfig,
    pub validation: ValidationConfig,
    pub analysis: AnalysisConfig,
    pub run: RunConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            inputs: vec![],
            out_dir: PathBuf::from("out"),
            template: None,
            keywords: KeywordStageConfig::default(),
            backend: BackendConfig::default(),
            validation: ValidationConfig::default(),
            analysis: AnalysisConfig::default(),
            run: RunConfig::default(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

impl PipelineConfig {
    /// Reads TOML; relative paths are taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.inputs.iter_mut().for_each(rebase);
        rebase(&mut cfg.out_dir);
        cfg.template.iter_mut().for_each(rebase);
        cfg.run.cache_dir.iter_mut().for_each(rebase);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.run
            .cache_dir
            .clone()
            .unwrap_or_else(|| self.out_dir.join("cache"))
    }

    /// Reads and checks the prompt template.
    pub fn load_template(&self) -> Result<PromptTemplate, PipelineError> {
        match &self.template {
            None => Ok(PromptTemplate::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| config_err(format!("template {}: {e}", p.display())))?;
                PromptTemplate::new(text)
                    .map_err(|e| config_err(format!("template {}: {e}", p.display())))
            }
        }
    }

    /// Checks everything that can be checked before any stage runs.
    pub fn validate(&self) -> Result<(), PipelineError> {
        for p in &self.inputs {
            if !p.is_file() {
                return Err(config_err(format!("input {} does not exist", p.display())));
            }
        }
        let jsonl = self.inputs.iter().filter(|p| is_jsonl(p)).count();
        if jsonl > 0 && self.inputs.len() > 1 {
            return Err(config_err(
                "a .jsonl records input cannot be mixed with other inputs",
            ));
        }
        self.load_template()?;
        self.keywords.validate().map_err(config_err)?;
        self.validation.validate().map_err(config_err)?;
        self.analysis.validate().map_err(config_err)?;
        if self.run.parallelism == 0 {
            return Err(config_err("parallelism must be at least 1"));
        }
        let b = &self.backend;
        if !(b.temperature >= 0.0) || b.max_answer_length == 0 {
            return Err(config_err(
                "temperature must be >= 0 and max_answer_length > 0",
            ));
        }
        if !(b.requests_per_second >= 0.0) {
            return Err(config_err("requests_per_second must be >= 0"));
        }
        if b.kind == BackendKind::Remote {
            if b.endpoint.as_deref().is_none_or(str::is_empty) {
                return Err(config_err("remote backend needs an endpoint"));
            }
            if !std::env::var(&b.api_key_env).is_ok_and(|v| !v.is_empty()) {
                return Err(config_err(format!(
                    "remote backend needs the {} environment variable",
                    b.api_key_env
                )));
            }
        }
        if self.out_dir.exists() && !self.out_dir.is_dir() {
            return Err(config_err(format!(
                "{} is not a directory",
                self.out_dir.display()
            )));
        }
        Ok(())
    }
}

pub(crate) fn is_jsonl(p: &Path) -> bool {
    p.extension().is_some_and(|e| e == "jsonl")
}
