use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Bivariate normal over (SBP, DBP) in mmHg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian2D {
    pub mean: [f64; 2],
    pub covariance: [[f64; 2]; 2],
}

impl Gaussian2D {
    pub fn new(mean: [f64; 2], covariance: [[f64; 2]; 2]) -> Self {
        Self { mean, covariance }
    }

    pub fn isotropic(mean: [f64; 2], variance: f64) -> Self {
        Self::new(mean, [[variance, 0.0], [0.0, variance]])
    }

    pub fn det(&self) -> f64 {
        let c = &self.covariance;
        c[0][0] * c[1][1] - c[0][1] * c[1][0]
    }

    /// Smaller eigenvalue of the covariance.
    pub fn min_eigenvalue(&self) -> f64 {
        let c = &self.covariance;
        let half_trace = 0.5 * (c[0][0] + c[1][1]);
        let half_gap = 0.5 * (c[0][0] - c[1][1]);
        half_trace - (half_gap * half_gap + c[0][1] * c[1][0]).sqrt()
    }

    pub fn is_positive_definite(&self) -> bool {
        let c = &self.covariance;
        c[0][0] > 0.0 && self.det() > 0.0 && self.det().is_finite() && c[0][1] == c[1][0]
    }

    pub fn log_pdf(&self, x: [f64; 2]) -> f64 {
        let c = &self.covariance;
        let det = self.det();
        let dx = x[0] - self.mean[0];
        let dy = x[1] - self.mean[1];
        // d^T C^{-1} d with the 2x2 inverse written out.
        let maha = (c[1][1] * dx * dx - 2.0 * c[0][1] * dx * dy + c[0][0] * dy * dy) / det;
        -(2.0 * PI).ln() - 0.5 * det.ln() - 0.5 * maha
    }

    pub fn pdf(&self, x: [f64; 2]) -> f64 {
        self.log_pdf(x).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub gaussian: Gaussian2D,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitMeta {
    pub log_likelihood: f64,
    pub iterations: usize,
    pub seed: u64,
    pub converged: bool,
    /// EM objective (log-likelihood minus the covariance penalty) after
    /// initialization and after every iteration. Equals the log-likelihood
    /// when `reg` is zero.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub components: Vec<Component>,
    pub meta: FitMeta,
}

impl GaussianMixture {
    /// Mixture with no fit history, e.g. for evaluating known densities.
    pub fn from_components(components: Vec<Component>) -> Self {
        Self {
            components,
            meta: FitMeta::default(),
        }
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn pdf(&self, x: [f64; 2]) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * c.gaussian.pdf(x))
            .sum()
    }

    pub fn log_pdf(&self, x: [f64; 2]) -> f64 {
        log_sum_exp(
            self.components
                .iter()
                .map(|c| c.weight.ln() + c.gaussian.log_pdf(x)),
        )
    }

    /// Free parameters of a full-covariance 2-D mixture.
    pub fn n_parameters(&self) -> usize {
        6 * self.k() - 1
    }
}

pub(crate) fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}
