use std::fmt::Write as _;

use super::manifest::{RunManifest, Stage, StageStats, StageStatus};
use crate::analysis::Peak;
use crate::extraction::Field;

fn peak_line(name: &str, p: &Option<Peak>) -> String {
    match p {
        Some(p) => format!(
            "  {name:<7} peak: SBP {:.1} mmHg, DBP {:.1} mmHg (density {:.3e})",
            p.sbp, p.dbp, p.density
        ),
        None => format!("  {name:<7} peak: not available"),
    }
}

/// Human-readable summary of a run manifest. Stages that did not run are
/// listed as such.
pub fn render_report(m: &RunManifest) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "bpminer {} run report", m.tool_version);
    let _ = writeln!(
        out,
        "config digest {}",
        &m.config_digest[..m.config_digest.len().min(16)]
    );
    out.push('\n');

    out.push_str("Stages\n");
    for stage in Stage::ALL {
        let status = match m.stage(stage) {
            None => "not run".to_string(),
            Some(r) => match (r.status, &r.error) {
                (StageStatus::Failed, Some(e)) => format!("FAILED: {e}"),
                (StageStatus::Completed, _) => "completed".into(),
                (StageStatus::Skipped, _) => "up to date".into(),
                (StageStatus::Failed, None) => "FAILED".into(),
            },
        };
        let _ = writeln!(out, "  {:<9} {status}", stage.name());
    }
    out.push('\n');

    out.push_str("Funnel\n");
    if let Some(c) = m.funnel.citations {
        let _ = writeln!(out, "  {:<16} {c}", "citations");
    }
    let steps = m.funnel.steps();
    if steps.is_empty() {
        out.push_str("  (no records processed)\n");
    }
    for (name, n) in steps {
        let _ = writeln!(out, "  {name:<16} {n}");
    }

    if let Some(StageStats::Extract(x)) = m.stats(Stage::Extract) {
        let t = x.telemetry;
        let _ = writeln!(
            out,
            "\nBackend\n  calls {}  cache hits {}  retries {}  empty answers {}",
            t.calls, t.cache_hits, t.retries, x.empty_answers
        );
    }

    if let Some(StageStats::Validate { review, .. }) = m.stats(Stage::Validate) {
        out.push_str("\nGrounding (all extractions)\n");
        let _ = writeln!(
            out,
            "  {:<22} {:>7} {:>7} {:>11} {:>7}",
            "field", "exact", "derived", "unsupported", "missing"
        );
        for f in Field::ALL {
            if let Some(c) = review.per_field.get(f.name()) {
                let _ = writeln!(
                    out,
                    "  {:<22} {:>7} {:>7} {:>11} {:>7}",
                    f.name(),
                    c.exact,
                    c.derived,
                    c.unsupported,
                    c.missing
                );
            }
        }
        let _ = writeln!(
            out,
            "  complete {}: fully grounded {}, all exact {}, with unsupported {}",
            review.complete,
            review.complete_fully_grounded,
            review.complete_all_exact,
            review.complete_with_unsupported
        );
    }

    if let Some(StageStats::Analyze(a)) = m.stats(Stage::Analyze) {
        out.push_str("\nDensity peaks\n");
        for (name, s) in [("male", a.male), ("female", a.female)] {
            let k = s.k.map_or("-".to_string(), |k| k.to_string());
            let _ = writeln!(out, "  {name:<7} studies {}, components {k}", s.points);
        }
        let c = &a.comparison;
        out.push_str(&peak_line("male", &c.male_peak));
        out.push('\n');
        out.push_str(&peak_line("female", &c.female_peak));
        out.push('\n');
        match (c.delta_sbp, c.delta_dbp) {
            (Some(ds), Some(dd)) => {
                let _ = writeln!(out, "  male peak SBP − female peak SBP = {ds:+.1} mmHg");
                let _ = writeln!(out, "  male peak DBP − female peak DBP = {dd:+.1} mmHg");
            }
            _ => out.push_str("  sex difference: not available\n"),
        }
    }

    if let Some(stage) = m.failed_stage {
        let _ = writeln!(out, "\nRun stopped at stage {stage}; rerun to resume.");
    }
    out
}
