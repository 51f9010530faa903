use serde::{Deserialize, Serialize};

use super::gaussian::GaussianMixture;
use super::AnalysisError;
use crate::exec::Exec;

/// Uniform axis of `n` cells over `[min, max]`; samples sit at cell centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Axis {
    pub fn step(&self) -> f64 {
        (self.max - self.min) / self.n as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.min + (i as f64 + 0.5) * self.step()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridBounds {
    pub sbp: [f64; 2],
    pub dbp: [f64; 2],
}

impl Default for GridBounds {
    fn default() -> Self {
        Self {
            sbp: [60.0, 200.0],
            dbp: [30.0, 120.0],
        }
    }
}

/// Mixture density at cell centers, mmHg⁻². Row-major with one row per
/// DBP cell: `values[iy * sbp_axis.n + ix]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub sbp_axis: Axis,
    pub dbp_axis: Axis,
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.sbp_axis.n + ix]
    }

    pub fn cell_area(&self) -> f64 {
        self.sbp_axis.step() * self.dbp_axis.step()
    }

    /// Midpoint-rule integral of the density over the bounds.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_area()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

fn check(bounds: &GridBounds, n: usize) -> Result<(), AnalysisError> {
    let ok = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] < r[1];
    if n < 2 || !ok(bounds.sbp) || !ok(bounds.dbp) {
        return Err(AnalysisError::InvalidInput(format!(
            "grid needs non-degenerate bounds and n >= 2 (got {bounds:?}, n={n})"
        )));
    }
    Ok(())
}

pub fn density_grid(
    model: &GaussianMixture,
    bounds: &GridBounds,
    n: usize,
) -> Result<DensityGrid, AnalysisError> {
    density_grid_with(model, bounds, n, Exec::default())
}

/// Evaluates the mixture exactly at every cell center, one row per task.
pub fn density_grid_with(
    model: &GaussianMixture,
    bounds: &GridBounds,
    n: usize,
    exec: Exec,
) -> Result<DensityGrid, AnalysisError> {
    check(bounds, n)?;
    let sbp_axis = Axis {
        min: bounds.sbp[0],
        max: bounds.sbp[1],
        n,
    };
    let dbp_axis = Axis {
        min: bounds.dbp[0],
        max: bounds.dbp[1],
        n,
    };
    let mut values = vec![0.0; n * n];
    exec.for_each_chunk_mut(&mut values, n, |iy, row| {
        let y = dbp_axis.center(iy);
        for (ix, v) in row.iter_mut().enumerate() {
            *v = model.pdf([sbp_axis.center(ix), y]);
        }
    });
    Ok(DensityGrid {
        sbp_axis,
        dbp_axis,
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub sbp: f64,
    pub dbp: f64,
    pub density: f64,
}

/// Highest mode of the mixture inside the bounds: grid argmax, then a
/// fixed-point mode search on the mixture from there.
pub fn peak(model: &GaussianMixture, bounds: &GridBounds, n: usize) -> Result<Peak, AnalysisError> {
    Ok(refine_peak(model, &density_grid(model, bounds, n)?))
}

fn inv2(m: [[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    (det.is_finite() && det > 0.0).then(|| {
        [
            [m[1][1] / det, -m[0][1] / det],
            [-m[1][0] / det, m[0][0] / det],
        ]
    })
}

/// Starts at [`grid_peak`] and iterates `x ← (Σ rⱼΣⱼ⁻¹)⁻¹ Σ rⱼΣⱼ⁻¹μⱼ` with
/// `rⱼ` the component responsibilities at `x`; every fixed point is a
/// stationary point of the density. Falls back to the grid estimate if the
/// search leaves the grid or ends lower.
pub fn refine_peak(model: &GaussianMixture, grid: &DensityGrid) -> Peak {
    let start = grid_peak(grid);
    let precisions: Option<Vec<[[f64; 2]; 2]>> = model
        .components
        .iter()
        .map(|c| inv2(c.gaussian.covariance))
        .collect();
    let Some(precisions) = precisions else {
        return start;
    };
    let (sx, sy) = (grid.sbp_axis, grid.dbp_axis);
    let mut x = [start.sbp, start.dbp];
    for _ in 0..500 {
        let logs: Vec<f64> = model
            .components
            .iter()
            .map(|c| c.weight.ln() + c.gaussian.log_pdf(x))
            .collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut a, mut b) = ([[0.0; 2]; 2], [0.0; 2]);
        for ((c, p), l) in model.components.iter().zip(&precisions).zip(&logs) {
            let r = (l - top).exp();
            let mu = c.gaussian.mean;
            for i in 0..2 {
                for j in 0..2 {
                    a[i][j] += r * p[i][j];
                }
                b[i] += r * (p[i][0] * mu[0] + p[i][1] * mu[1]);
            }
        }
        let Some(ai) = inv2(a) else {
            return start;
        };
        let next = [
            ai[0][0] * b[0] + ai[0][1] * b[1],
            ai[1][0] * b[0] + ai[1][1] * b[1],
        ];
        let moved = (next[0] - x[0]).abs().max((next[1] - x[1]).abs());
        x = next;
        if !(moved > 1e-12 * (1.0 + x[0].abs())) {
            break;
        }
    }
    let inside = x[0] >= sx.min && x[0] <= sx.max && x[1] >= sy.min && x[1] <= sy.max;
    let density = model.pdf(x);
    if inside && density >= model.pdf([start.sbp, start.dbp]) {
        Peak {
            sbp: x[0],
            dbp: x[1],
            density,
        }
    } else {
        start
    }
}

/// Argmax cell center, refined by one parabolic step per axis through the
/// log-density of the neighbouring cells. Ties go to the lowest SBP, then
/// the lowest DBP.
pub fn grid_peak(grid: &DensityGrid) -> Peak {
    let (nx, ny) = (grid.sbp_axis.n, grid.dbp_axis.n);
    let (mut bx, mut by, mut best) = (0, 0, f64::NEG_INFINITY);
    for ix in 0..nx {
        for iy in 0..ny {
            let v = grid.get(ix, iy);
            if v > best {
                (bx, by, best) = (ix, iy, v);
            }
        }
    }
    let refine = |lo: Option<f64>, mid: f64, hi: Option<f64>| -> f64 {
        match (lo, hi) {
            (Some(a), Some(c)) if a > 0.0 && mid > 0.0 && c > 0.0 => {
                let (a, b, c) = (a.ln(), mid.ln(), c.ln());
                let curvature = a - 2.0 * b + c;
                if curvature < 0.0 {
                    (0.5 * (a - c) / curvature).clamp(-0.5, 0.5)
                } else {
                    0.0
                }
            }
            _ => 0.0,
        }
    };
    let dx = refine(
        bx.checked_sub(1).map(|i| grid.get(i, by)),
        best,
        (bx + 1 < nx).then(|| grid.get(bx + 1, by)),
    );
    let dy = refine(
        by.checked_sub(1).map(|i| grid.get(bx, i)),
        best,
        (by + 1 < ny).then(|| grid.get(bx, by + 1)),
    );
    Peak {
        sbp: grid.sbp_axis.center(bx) + dx * grid.sbp_axis.step(),
        dbp: grid.dbp_axis.center(by) + dy * grid.dbp_axis.step(),
        density: best,
    }
}
