//! Weighted Gaussian-mixture density estimation over (SBP, DBP) study means
//! and the derived plot data: density grids, peaks, iso-contours and
//! per-study ellipses.

mod contour;
mod em;
mod gaussian;
mod grid;
mod points;
mod select;

pub use contour::{iso_contours, ContourLevel, Polyline};
pub use em::{fit_gmm, log_likelihood, weighted_moments, EmConfig, MONOTONE_TOLERANCE};
pub use gaussian::{Component, FitMeta, Gaussian2D, GaussianMixture};
pub use grid::{
    density_grid, density_grid_with, grid_peak, peak, refine_peak, Axis, DensityGrid, GridBounds,
    Peak,
};
pub use points::{study_ellipses, to_points, Sex, StudyEllipse, StudyPoint};
pub use select::{bic, select_components, BicEntry, Selection, MIN_COMPONENT_SUPPORT};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::extraction::BPExtraction;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AnalysisError {
    #[error("need at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("component {component} degenerate: {reason}")]
    Degenerate { component: usize, reason: String },
    #[error("no component count produced a usable fit")]
    NoModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    /// Fixed component count; BIC selection up to `k_max` when unset.
    pub k: Option<usize>,
    pub k_max: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    pub n_init: usize,
    pub reg: f64,
    pub grid_n: usize,
    pub bounds: GridBounds,
    pub levels: Vec<f64>,
    /// Weight studies by cohort size; every study counts once otherwise.
    pub weighted: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        let em = EmConfig::default();
        Self {
            k: None,
            k_max: 5,
            seed: em.seed,
            tol: em.tol,
            max_iter: em.max_iter,
            n_init: em.n_init,
            reg: em.reg,
            grid_n: 256,
            bounds: GridBounds::default(),
            levels: vec![0.1, 0.25, 0.5, 0.75, 0.9],
            weighted: true,
        }
    }
}

impl AnalysisConfig {
    pub fn em(&self, k: usize) -> EmConfig {
        EmConfig {
            k,
            seed: self.seed,
            tol: self.tol,
            max_iter: self.max_iter,
            n_init: self.n_init,
            reg: self.reg,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.k == Some(0) || self.k_max == 0 {
            return Err("component count must be at least 1".into());
        }
        if self.grid_n < 2 {
            return Err("grid resolution must be at least 2".into());
        }
        if self.levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return Err("contour levels must lie strictly between 0 and 1".into());
        }
        if !(self.reg >= 0.0) || !(self.tol > 0.0) {
            return Err("reg must be >= 0 and tol > 0".into());
        }
        Ok(())
    }
}

/// Everything computed for one sex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SexAnalysis {
    pub sex: Sex,
    pub points: Vec<StudyPoint>,
    pub ellipses: Vec<StudyEllipse>,
    /// Absent when there were no usable points.
    pub fit: Option<SexFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SexFit {
    pub selection: Selection,
    pub grid: DensityGrid,
    pub peak: Peak,
    pub contours: Vec<ContourLevel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub male_peak: Option<Peak>,
    pub female_peak: Option<Peak>,
    /// Male minus female.
    pub delta_sbp: Option<f64>,
    pub delta_dbp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOutput {
    pub male: SexAnalysis,
    pub female: SexAnalysis,
    pub comparison: Comparison,
}

fn analyze_sex(
    records: &[BPExtraction],
    sex: Sex,
    cfg: &AnalysisConfig,
    exec: Exec,
) -> Result<SexAnalysis, AnalysisError> {
    let mut points = to_points(records, sex);
    if !cfg.weighted {
        points.iter_mut().for_each(|p| p.weight = 1.0);
    }
    let ellipses = study_ellipses(records, sex);
    let fit = if points.is_empty() {
        log::warn!("no {} study points; skipping mixture fit", sex.name());
        None
    } else {
        let selection = match cfg.k {
            Some(k) => {
                let model = fit_gmm(&points, &cfg.em(k))?;
                Selection {
                    k,
                    model,
                    table: vec![],
                }
            }
            None => select_components(&points, cfg.k_max, &cfg.em(1), exec)?,
        };
        let grid = density_grid_with(&selection.model, &cfg.bounds, cfg.grid_n, exec)?;
        let peak = refine_peak(&selection.model, &grid);
        let contours = iso_contours(&grid, &cfg.levels)?;
        Some(SexFit {
            selection,
            grid,
            peak,
            contours,
        })
    };
    Ok(SexAnalysis {
        sex,
        points,
        ellipses,
        fit,
    })
}

/// Fits both sexes (concurrently when parallel) and compares their peaks.
pub fn analyze(
    records: &[BPExtraction],
    cfg: &AnalysisConfig,
    exec: Exec,
) -> Result<AnalysisOutput, AnalysisError> {
    let (male, female) = exec.join(
        || analyze_sex(records, Sex::Male, cfg, exec),
        || analyze_sex(records, Sex::Female, cfg, exec),
    );
    let (male, female) = (male?, female?);
    let male_peak = male.fit.as_ref().map(|f| f.peak);
    let female_peak = female.fit.as_ref().map(|f| f.peak);
    let delta = |f: fn(&Peak) -> f64| Some(f(male_peak.as_ref()?) - f(female_peak.as_ref()?));
    let comparison = Comparison {
        male_peak,
        female_peak,
        delta_sbp: delta(|p| p.sbp),
        delta_dbp: delta(|p| p.dbp),
    };
    Ok(AnalysisOutput {
        male,
        female,
        comparison,
    })
}
