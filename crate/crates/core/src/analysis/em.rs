//! Weighted expectation-maximization for full-covariance 2-D mixtures.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gaussian::{log_sum_exp, Component, FitMeta, Gaussian2D, GaussianMixture};
use super::{AnalysisError, StudyPoint};

/// Relative slack for the EM objective between iterations, covering
/// floating-point noise in well-conditioned fits.
pub const MONOTONE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub k: usize,
    pub seed: u64,
    /// Stop when the relative log-likelihood improvement falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Independent starts for k > 1; the best final objective is kept.
    pub n_init: usize,
    /// Covariance ridge (mmHg²). Component `j` gets `reg · W / N_j` added
    /// to its diagonal, where `N_j` is its responsibility mass and `W` the
    /// total weight; a single component gets exactly `reg`. This is the
    /// exact maximizer of the log-likelihood penalized by
    /// `reg · W / 2 · Σ_j tr(Σ_j⁻¹)`, so EM stays monotone in that objective.
    pub reg: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            k: 1,
            seed: 42,
            tol: 1e-8,
            max_iter: 500,
            n_init: 4,
            reg: 1e-6,
        }
    }
}

/// Points in canonical (sbp, dbp, pmid, weight) order, so fits do not
/// depend on input order.
pub(crate) fn canonical(points: &[StudyPoint]) -> Vec<StudyPoint> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| {
        a.sbp
            .total_cmp(&b.sbp)
            .then(a.dbp.total_cmp(&b.dbp))
            .then_with(|| a.pmid.cmp(&b.pmid))
            .then(a.weight.total_cmp(&b.weight))
    });
    sorted
}

fn sample_index(rng: &mut ChaCha8Rng, mass: &[f64]) -> usize {
    let total: f64 = mass.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &m) in mass.iter().enumerate() {
        if m <= 0.0 {
            continue;
        }
        acc += m;
        last = i;
        if acc > u {
            return i;
        }
    }
    last
}

/// Weighted k-means++ seeding: first center drawn proportional to weight,
/// later ones proportional to weight times squared distance to the nearest
/// chosen center.
#[cfg(test)]
fn kmeans_pp(points: &[StudyPoint], k: usize, seed: u64) -> Vec<[f64; 2]> {
    seed_centers(points, k, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn seed_centers(points: &[StudyPoint], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let weights: Vec<f64> = points.iter().map(|p| p.weight).collect();
    let first = &points[sample_index(rng, &weights)];
    let mut centers = vec![[first.sbp, first.dbp]];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| sq_dist([p.sbp, p.dbp], centers[0]))
        .collect();
    while centers.len() < k {
        let mass: Vec<f64> = points.iter().zip(&d2).map(|(p, d)| p.weight * d).collect();
        let idx = if mass.iter().sum::<f64>() > 0.0 {
            sample_index(rng, &mass)
        } else {
            sample_index(rng, &weights)
        };
        let c = [points[idx].sbp, points[idx].dbp];
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist([p.sbp, p.dbp], c));
        }
        centers.push(c);
    }
    centers
}

fn sq_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Weighted mean and population covariance of the points, plus `reg` on
/// the diagonal.
pub fn weighted_moments(points: &[StudyPoint], reg: f64) -> Gaussian2D {
    let w: f64 = points.iter().map(|p| p.weight).sum();
    let mx = points.iter().map(|p| p.weight * p.sbp).sum::<f64>() / w;
    let my = points.iter().map(|p| p.weight * p.dbp).sum::<f64>() / w;
    let mut c = [[0.0; 2]; 2];
    for p in points {
        let (dx, dy) = (p.sbp - mx, p.dbp - my);
        c[0][0] += p.weight * dx * dx;
        c[0][1] += p.weight * dx * dy;
        c[1][1] += p.weight * dy * dy;
    }
    c[0][0] = c[0][0] / w + reg;
    c[1][1] = c[1][1] / w + reg;
    c[0][1] /= w;
    c[1][0] = c[0][1];
    Gaussian2D::new([mx, my], c)
}

/// Responsibilities (row per point) and the weighted log-likelihood.
fn e_step(points: &[StudyPoint], comps: &[Component], resp: &mut [f64]) -> f64 {
    let k = comps.len();
    let log_w: Vec<f64> = comps.iter().map(|c| c.weight.ln()).collect();
    let mut ll = 0.0;
    for (i, p) in points.iter().enumerate() {
        let row = &mut resp[i * k..(i + 1) * k];
        for (j, c) in comps.iter().enumerate() {
            row[j] = log_w[j] + c.gaussian.log_pdf([p.sbp, p.dbp]);
        }
        let lse = log_sum_exp(row.iter().copied());
        for r in row.iter_mut() {
            *r = (*r - lse).exp();
        }
        ll += p.weight * lse;
    }
    ll
}

fn m_step(
    points: &[StudyPoint],
    resp: &[f64],
    k: usize,
    reg: f64,
) -> Result<Vec<Component>, AnalysisError> {
    let mut mass = vec![0.0; k];
    let mut sx = vec![[0.0; 2]; k];
    for (i, p) in points.iter().enumerate() {
        for j in 0..k {
            let m = p.weight * resp[i * k + j];
            mass[j] += m;
            sx[j][0] += m * p.sbp;
            sx[j][1] += m * p.dbp;
        }
    }
    let total: f64 = mass.iter().sum();
    let mut comps = Vec::with_capacity(k);
    for j in 0..k {
        if !(mass[j] > 0.0 && mass[j].is_finite()) {
            return Err(AnalysisError::Degenerate {
                component: j,
                reason: "component lost all responsibility".into(),
            });
        }
        let mean = [sx[j][0] / mass[j], sx[j][1] / mass[j]];
        let mut c = [[0.0; 2]; 2];
        for (i, p) in points.iter().enumerate() {
            let m = p.weight * resp[i * k + j];
            let (dx, dy) = (p.sbp - mean[0], p.dbp - mean[1]);
            c[0][0] += m * dx * dx;
            c[0][1] += m * dx * dy;
            c[1][1] += m * dy * dy;
        }
        let ridge = reg * total / mass[j];
        c[0][0] = c[0][0] / mass[j] + ridge;
        c[1][1] = c[1][1] / mass[j] + ridge;
        c[0][1] /= mass[j];
        c[1][0] = c[0][1];
        let gaussian = Gaussian2D::new(mean, c);
        if !gaussian.is_positive_definite() || gaussian.min_eigenvalue() <= 0.0 {
            return Err(AnalysisError::Degenerate {
                component: j,
                reason: format!("covariance not positive definite: {c:?}"),
            });
        }
        comps.push(Component {
            weight: mass[j] / total,
            gaussian,
        });
    }
    Ok(comps)
}

fn validate_points(points: &[StudyPoint], k: usize) -> Result<(), AnalysisError> {
    if k == 0 {
        return Err(AnalysisError::InvalidInput("k must be at least 1".into()));
    }
    if points.len() < k {
        return Err(AnalysisError::InsufficientPoints {
            needed: k,
            got: points.len(),
        });
    }
    if let Some(p) = points.iter().find(|p| {
        !(p.weight > 0.0 && p.weight.is_finite() && p.sbp.is_finite() && p.dbp.is_finite())
    }) {
        return Err(AnalysisError::InvalidInput(format!(
            "point {} has non-finite coordinates or non-positive weight",
            p.pmid
        )));
    }
    Ok(())
}

/// Covariance penalty subtracted from the log-likelihood in the EM objective.
fn penalty(comps: &[Component], reg: f64, total: f64) -> f64 {
    if reg == 0.0 {
        return 0.0;
    }
    let trace_inv: f64 = comps
        .iter()
        .map(|c| {
            let s = c.gaussian.covariance;
            (s[0][0] + s[1][1]) / c.gaussian.det()
        })
        .sum();
    0.5 * reg * total * trace_inv
}

/// Fits a `cfg.k`-component mixture by weighted EM.
///
/// Each of `cfg.n_init` starts seeds means by weighted k-means++ followed by
/// Lloyd iterations and runs EM to convergence; the start with the highest
/// final objective wins (earliest on ties). Components are returned in
/// ascending (SBP, DBP) mean order. Deterministic given the point
/// multiset, `k` and `seed`: points are sorted canonically first and all
/// starts draw from one seeded stream.
pub fn fit_gmm(points: &[StudyPoint], cfg: &EmConfig) -> Result<GaussianMixture, AnalysisError> {
    validate_points(points, cfg.k)?;
    let points = canonical(points);
    let spread = weighted_moments(&points, cfg.reg);
    if !spread.is_positive_definite() {
        return Err(AnalysisError::Degenerate {
            component: 0,
            reason: "initial covariance not positive definite; increase reg".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let starts = if cfg.k == 1 { 1 } else { cfg.n_init.max(1) };
    let mut best: Option<(f64, GaussianMixture)> = None;
    let mut last_err = None;
    for _ in 0..starts {
        let means = lloyd(
            &points,
            seed_centers(&points, cfg.k, &mut rng),
            LLOYD_ITERATIONS,
        );
        match run_em(&points, means, spread.covariance, cfg) {
            Ok((obj, model)) => {
                if best.as_ref().is_none_or(|(b, _)| obj > *b) {
                    best = Some((obj, model));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (best, last_err) {
        (Some((_, mut model)), _) => {
            model.components.sort_by(|a, b| {
                let (p, q) = (a.gaussian.mean, b.gaussian.mean);
                p[0].total_cmp(&q[0]).then(p[1].total_cmp(&q[1]))
            });
            Ok(model)
        }
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!("at least one start"),
    }
}

const LLOYD_ITERATIONS: usize = 50;

/// Weighted Lloyd iterations from the given centers. A center that loses
/// all its points stays where it is.
fn lloyd(points: &[StudyPoint], mut centers: Vec<[f64; 2]>, iterations: usize) -> Vec<[f64; 2]> {
    let k = centers.len();
    for _ in 0..iterations {
        let mut sums = vec![[0.0; 3]; k];
        for p in points {
            let x = [p.sbp, p.dbp];
            let mut j = 0;
            for c in 1..k {
                if sq_dist(x, centers[c]) < sq_dist(x, centers[j]) {
                    j = c;
                }
            }
            sums[j][0] += p.weight * x[0];
            sums[j][1] += p.weight * x[1];
            sums[j][2] += p.weight;
        }
        let next: Vec<[f64; 2]> = sums
            .iter()
            .zip(&centers)
            .map(|(s, c)| {
                if s[2] > 0.0 {
                    [s[0] / s[2], s[1] / s[2]]
                } else {
                    *c
                }
            })
            .collect();
        if next == centers {
            break;
        }
        centers = next;
    }
    centers
}

/// One EM run; returns the final objective and the model.
fn run_em(
    points: &[StudyPoint],
    means: Vec<[f64; 2]>,
    covariance: [[f64; 2]; 2],
    cfg: &EmConfig,
) -> Result<(f64, GaussianMixture), AnalysisError> {
    let k = cfg.k;
    let mut comps: Vec<Component> = means
        .into_iter()
        .map(|mean| Component {
            weight: 1.0 / k as f64,
            gaussian: Gaussian2D::new(mean, covariance),
        })
        .collect();
    let total: f64 = points.iter().map(|p| p.weight).sum();
    let objective = |ll: f64, comps: &[Component]| ll - penalty(comps, cfg.reg, total);
    let mut resp = vec![0.0; points.len() * k];
    let mut ll = e_step(points, &comps, &mut resp);
    let mut obj = objective(ll, &comps);
    let mut trace = vec![obj];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        comps = m_step(points, &resp, k, cfg.reg)?;
        let next = e_step(points, &comps, &mut resp);
        if !next.is_finite() {
            return Err(AnalysisError::Degenerate {
                component: 0,
                reason: "log-likelihood is not finite".into(),
            });
        }
        let next_obj = objective(next, &comps);
        if next_obj < obj - MONOTONE_TOLERANCE * obj.abs().max(1.0) {
            // Only seen with near-singular components, where rounding in the
            // covariance entries exceeds the step's gain; the step ends the run.
            log::debug!("EM objective dipped {obj} -> {next_obj}; stopping");
        }
        trace.push(next_obj);
        let improvement = next_obj - obj;
        ll = next;
        obj = next_obj;
        if improvement.partial_cmp(&(cfg.tol * obj.abs())) != Some(Ordering::Greater) {
            converged = true;
            break;
        }
    }
    Ok((
        obj,
        GaussianMixture {
            components: comps,
            meta: FitMeta {
                log_likelihood: ll,
                iterations,
                seed: cfg.seed,
                converged,
                trace,
            },
        },
    ))
}

/// Weighted log-likelihood of the points under a mixture.
pub fn log_likelihood(model: &GaussianMixture, points: &[StudyPoint]) -> f64 {
    points
        .iter()
        .map(|p| p.weight * model.log_pdf([p.sbp, p.dbp]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pt(sbp: f64, dbp: f64, w: f64) -> StudyPoint {
        StudyPoint {
            sbp,
            dbp,
            weight: w,
            pmid: format!("{sbp}-{dbp}"),
        }
    }

    #[test]
    fn two_point_closed_form() {
        let cfg = EmConfig {
            k: 1,
            reg: 1e-6,
            ..Default::default()
        };
        let m = fit_gmm(&[pt(110.0, 70.0, 1.0), pt(130.0, 90.0, 1.0)], &cfg).unwrap();
        let g = m.components[0].gaussian;
        assert_eq!(g.mean, [120.0, 80.0]);
        assert_relative_eq!(g.covariance[0][0], 100.0 + 1e-6, max_relative = 1e-12);
        assert_relative_eq!(g.covariance[0][1], 100.0, max_relative = 1e-12);
        assert_relative_eq!(g.covariance[1][1], 100.0 + 1e-6, max_relative = 1e-12);
        assert_eq!(m.components[0].weight, 1.0);
    }

    #[test]
    fn copies_of_one_point() {
        let pts: Vec<_> = (0..5).map(|_| pt(125.0, 82.0, 3.0)).collect();
        let m = fit_gmm(&pts, &EmConfig::default()).unwrap();
        let g = m.components[0].gaussian;
        assert_eq!(g.mean, [125.0, 82.0]);
        assert_eq!(g.covariance, [[1e-6, 0.0], [0.0, 1e-6]]);
    }

    #[test]
    fn errors() {
        let cfg = EmConfig {
            k: 3,
            ..Default::default()
        };
        assert!(matches!(
            fit_gmm(&[pt(1.0, 1.0, 1.0)], &cfg),
            Err(AnalysisError::InsufficientPoints { needed: 3, got: 1 })
        ));
        assert!(fit_gmm(&[pt(1.0, 1.0, 0.0)], &EmConfig::default()).is_err());
        let zero_reg = EmConfig {
            reg: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            fit_gmm(&[pt(1.0, 1.0, 1.0), pt(1.0, 1.0, 2.0)], &zero_reg),
            Err(AnalysisError::Degenerate { .. })
        ));
    }

    #[test]
    fn kmeans_pp_is_seeded() {
        let pts: Vec<_> = (0..20)
            .map(|i| pt(100.0 + i as f64, 70.0, 1.0 + i as f64))
            .collect();
        assert_eq!(kmeans_pp(&pts, 3, 7), kmeans_pp(&pts, 3, 7));
        let c = kmeans_pp(&pts, 3, 7);
        assert_eq!(c.len(), 3);
        assert!(c[1] != c[0] && c[2] != c[0] && c[2] != c[1]);
    }
}
