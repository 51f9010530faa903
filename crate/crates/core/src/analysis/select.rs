use serde::{Deserialize, Serialize};

use super::em::{fit_gmm, EmConfig};
use super::gaussian::GaussianMixture;
use super::{AnalysisError, StudyPoint};
use crate::exec::Exec;

/// Below this many points' worth of (unweighted) responsibility a
/// component's 2-D covariance is not identifiable.
pub const MIN_COMPONENT_SUPPORT: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BicEntry {
    pub k: usize,
    /// `None` when the fit failed or was rejected as degenerate.
    pub bic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub k: usize,
    pub model: GaussianMixture,
    pub table: Vec<BicEntry>,
}

/// BIC with the sum of point weights as the effective sample size.
pub fn bic(model: &GaussianMixture, points: &[StudyPoint]) -> f64 {
    let n_eff: f64 = points.iter().map(|p| p.weight).sum();
    -2.0 * model.meta.log_likelihood + model.n_parameters() as f64 * n_eff.ln()
}

/// Unweighted responsibility mass per component.
fn support(model: &GaussianMixture, points: &[StudyPoint]) -> Vec<f64> {
    let mut s = vec![0.0; model.k()];
    for p in points {
        let x = [p.sbp, p.dbp];
        let dens: Vec<f64> = model
            .components
            .iter()
            .map(|c| c.weight.ln() + c.gaussian.log_pdf(x))
            .collect();
        let lse = super::gaussian::log_sum_exp(dens.iter().copied());
        for (sj, d) in s.iter_mut().zip(&dens) {
            *sj += (d - lse).exp();
        }
    }
    s
}

/// Fits k = 1..=k_max and keeps the lowest BIC, preferring smaller k on
/// ties. Fits with k > 1 in which some component is supported by fewer
/// than [`MIN_COMPONENT_SUPPORT`] points are rejected, as are failed fits.
pub fn select_components(
    points: &[StudyPoint],
    k_max: usize,
    base: &EmConfig,
    exec: Exec,
) -> Result<Selection, AnalysisError> {
    if k_max == 0 {
        return Err(AnalysisError::InvalidInput(
            "k_max must be at least 1".into(),
        ));
    }
    let ks: Vec<usize> = (1..=k_max).collect();
    let fits = exec.map(&ks, |&k| fit_gmm(points, &EmConfig { k, ..*base }));

    let mut best: Option<(f64, GaussianMixture)> = None;
    let mut first_err = None;
    let mut table = Vec::with_capacity(k_max);
    for (k, fit) in ks.into_iter().zip(fits) {
        let model = match fit {
            Ok(m) => m,
            Err(e) => {
                log::debug!("k={k}: fit failed: {e}");
                first_err.get_or_insert(e);
                table.push(BicEntry { k, bic: None });
                continue;
            }
        };
        if k > 1
            && support(&model, points)
                .iter()
                .any(|&s| s < MIN_COMPONENT_SUPPORT)
        {
            log::debug!(
                "k={k}: rejected, a component has under {MIN_COMPONENT_SUPPORT} points of support"
            );
            table.push(BicEntry { k, bic: None });
            continue;
        }
        let score = bic(&model, points);
        table.push(BicEntry {
            k,
            bic: Some(score),
        });
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, model));
        }
    }
    match best {
        Some((_, model)) => Ok(Selection {
            k: model.k(),
            model,
            table,
        }),
        None => Err(first_err.unwrap_or(AnalysisError::NoModel)),
    }
}
