//! `bpminer`: blood-pressure literature mining from PubMed baseline files.

use std::path::PathBuf;
use std::process::ExitCode;

use bpminer::pipeline::{
    fetch, render_report, run, BackendKind, PipelineConfig, PipelineError, RunManifest, RunOptions,
    Stage,
};
use bpminer::synth::fixture_corpus;
use bpminer::Exec;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bpminer", version, about)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Input baseline files or a records .jsonl (overrides `inputs`).
    #[arg(long = "input", global = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, global = true)]
    backend: Option<BackendArg>,
    /// EM seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap on uncached backend requests.
    #[arg(long, global = true)]
    max_requests: Option<u64>,
    /// Concurrent backend requests.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Single-threaded execution.
    #[arg(long, global = true)]
    sequential: bool,
    /// Recompute stages even if up to date.
    #[arg(long, global = true)]
    force: bool,
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Remote,
    Mock,
}

#[derive(Subcommand)]
enum Command {
    /// Download baseline files listed one URL per line.
    Fetch {
        /// File of URLs; `-` reads standard input.
        urls: PathBuf,
        #[arg(long, default_value = "baseline")]
        dest: PathBuf,
    },
    /// Parse baseline files into abstract records.
    Ingest,
    /// Apply the two keyword stages.
    Filter,
    /// Query the backend for the ten variables.
    Extract,
    /// Range, cohort and grounding checks.
    Validate,
    /// Mixture fits, density grids, contours and peaks.
    Analyze,
    /// Every stage, then print the report.
    Run,
    /// Summarize the last run in the run directory.
    Report,
    /// Print the effective configuration as TOML.
    Config,
    /// Write the synthetic 100-abstract fixture corpus.
    Synth {
        #[arg(default_value = "fixture.xml.gz")]
        path: PathBuf,
    },
}

fn load_config(g: &Global) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(out) = &g.out {
        cfg.out_dir = out.clone();
    }
    if !g.inputs.is_empty() {
        cfg.inputs = g.inputs.clone();
    }
    if let Some(b) = g.backend {
        cfg.backend.kind = match b {
            BackendArg::Remote => BackendKind::Remote,
            BackendArg::Mock => BackendKind::Mock,
        };
    }
    if let Some(s) = g.seed {
        cfg.analysis.seed = s;
    }
    if let Some(n) = g.max_requests {
        cfg.run.max_requests = Some(n);
    }
    if let Some(p) = g.parallelism {
        cfg.run.parallelism = p;
    }
    Ok(cfg)
}

fn read_urls(path: &PathBuf) -> std::io::Result<Vec<String>> {
    let text = if path.as_os_str() == "-" {
        std::io::read_to_string(std::io::stdin())?
    } else {
        std::fs::read_to_string(path)?
    };
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    let g = &cli.global;
    let cfg = load_config(g)?;
    let through = match cli.command {
        Command::Ingest => Stage::Ingest,
        Command::Filter => Stage::Filter,
        Command::Extract => Stage::Extract,
        Command::Validate => Stage::Validate,
        Command::Analyze | Command::Run => Stage::Analyze,
        Command::Fetch { urls, dest } => {
            let urls = read_urls(&urls)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", urls.display())))?;
            for p in fetch(&urls, &dest, &cfg.backend.retry)? {
                println!("{}", p.display());
            }
            return Ok(());
        }
        Command::Report => {
            let m = RunManifest::load(&cfg.out_dir).map_err(|e| {
                PipelineError::Config(format!("no run in {}: {e}", cfg.out_dir.display()))
            })?;
            print!("{}", render_report(&m));
            return Ok(());
        }
        Command::Config => {
            print!("{}", cfg.to_toml());
            return Ok(());
        }
        Command::Synth { path } => {
            fixture_corpus()
                .write_gz(&path)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
            println!("{}", path.display());
            return Ok(());
        }
    };
    let opts = RunOptions {
        through,
        exec: if g.sequential {
            Exec::Sequential
        } else {
            Exec::default()
        },
        force: g.force,
        backend: None,
    };
    let manifest = run(&cfg, &opts)?;
    print!("{}", render_report(&manifest));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
