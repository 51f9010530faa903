//! Files written by the analysis stage. Every number goes through
//! [`sig6`] (text) or [`round6`] (JSON).

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde_json::{json, Value};

use super::io::{write_atomic, write_json};
use crate::analysis::{AnalysisOutput, Comparison, Peak, SexAnalysis, SexFit};
use crate::numfmt::{round6, sig6};

pub const ANALYSIS_DIR: &str = "analysis";

fn model_json(a: &SexAnalysis, fit: &SexFit) -> Value {
    let m = &fit.selection.model;
    let components: Vec<Value> = m
        .components
        .iter()
        .map(|c| {
            let s = c.gaussian.covariance;
            json!({
                "weight": round6(c.weight),
                "mean": c.gaussian.mean.map(round6),
                "covariance": [s[0].map(round6), s[1].map(round6)],
            })
        })
        .collect();
    let bic: Vec<Value> = fit
        .selection
        .table
        .iter()
        .map(|e| json!({"k": e.k, "bic": e.bic.map(round6)}))
        .collect();
    json!({
        "sex": a.sex.name(),
        "k": m.k(),
        "components": components,
        "log_likelihood": round6(m.meta.log_likelihood),
        "iterations": m.meta.iterations,
        "converged": m.meta.converged,
        "seed": m.meta.seed,
        "bic": bic,
        "points": a.points.len(),
    })
}

fn peak_json(p: &Option<Peak>) -> Value {
    match p {
        Some(p) => {
            json!({"sbp": round6(p.sbp), "dbp": round6(p.dbp), "density": round6(p.density)})
        }
        None => Value::Null,
    }
}

pub fn comparison_json(c: &Comparison) -> Value {
    json!({
        "male_peak": peak_json(&c.male_peak),
        "female_peak": peak_json(&c.female_peak),
        "delta_sbp": c.delta_sbp.map(round6),
        "delta_dbp": c.delta_dbp.map(round6),
    })
}

fn grid_csv(fit: &SexFit) -> (String, String) {
    let g = &fit.grid;
    let mut values = String::new();
    for row in g.values.chunks(g.sbp_axis.n) {
        let line: Vec<String> = row.iter().map(|v| sig6(*v)).collect();
        values.push_str(&line.join(","));
        values.push('\n');
    }
    let mut axes = String::from("axis,min,max,n,step\n");
    for (name, a) in [("sbp", g.sbp_axis), ("dbp", g.dbp_axis)] {
        let _ = writeln!(
            axes,
            "{name},{},{},{},{}",
            sig6(a.min),
            sig6(a.max),
            a.n,
            sig6(a.step())
        );
    }
    (values, axes)
}

fn contours_csv(fit: &SexFit) -> String {
    let mut out = String::from("level,threshold,polyline,closed,sbp,dbp\n");
    for level in &fit.contours {
        for (id, line) in level.polylines.iter().enumerate() {
            let mut pts = line.points.clone();
            if line.closed {
                pts.extend(line.points.first().copied());
            }
            for p in pts {
                let _ = writeln!(
                    out,
                    "{},{},{id},{},{},{}",
                    sig6(level.level),
                    sig6(level.threshold),
                    line.closed,
                    sig6(p[0]),
                    sig6(p[1])
                );
            }
        }
    }
    out
}

fn points_csv(a: &SexAnalysis) -> String {
    let mut out = String::from("pmid,sbp,dbp,weight\n");
    for p in &a.points {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            p.pmid,
            sig6(p.sbp),
            sig6(p.dbp),
            sig6(p.weight)
        );
    }
    out
}

fn ellipses_csv(a: &SexAnalysis) -> String {
    let mut out = String::from("pmid,center_sbp,center_dbp,radius_sbp,radius_dbp\n");
    for e in &a.ellipses {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            e.pmid,
            sig6(e.center[0]),
            sig6(e.center[1]),
            sig6(e.radius_sbp),
            sig6(e.radius_dbp)
        );
    }
    out
}

/// Replaces `<run_dir>/analysis` and returns the written paths relative to
/// `run_dir`, sorted.
pub fn write_analysis(run_dir: &Path, out: &AnalysisOutput) -> io::Result<Vec<String>> {
    let dir = run_dir.join(ANALYSIS_DIR);
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    std::fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, bytes: &[u8]| -> io::Result<()> {
        write_atomic(&dir.join(&name), bytes)?;
        written.push(format!("{ANALYSIS_DIR}/{name}"));
        Ok(())
    };
    for a in [&out.male, &out.female] {
        let sex = a.sex.name();
        put(format!("points_{sex}.csv"), points_csv(a).as_bytes())?;
        put(format!("ellipses_{sex}.csv"), ellipses_csv(a).as_bytes())?;
        if let Some(fit) = &a.fit {
            let mut model = serde_json::to_vec_pretty(&model_json(a, fit)).expect("json");
            model.push(b'\n');
            put(format!("model_{sex}.json"), &model)?;
            let (values, axes) = grid_csv(fit);
            put(format!("grid_{sex}.csv"), values.as_bytes())?;
            put(format!("grid_{sex}_axes.csv"), axes.as_bytes())?;
            put(format!("contours_{sex}.csv"), contours_csv(fit).as_bytes())?;
        }
    }
    write_json(
        &dir.join("comparison.json"),
        &comparison_json(&out.comparison),
    )?;
    written.push(format!("{ANALYSIS_DIR}/comparison.json"));
    written.sort();
    Ok(written)
}
