use bpminer::analysis::{
    density_grid, fit_gmm, iso_contours, peak, select_components, Component, EmConfig, Gaussian2D,
    GaussianMixture, GridBounds, StudyPoint,
};
use bpminer::synth::{study_cloud, two_clusters};
use bpminer::Exec;
use proptest::prelude::*;

fn points_strategy() -> impl Strategy<Value = Vec<StudyPoint>> {
    prop::collection::vec((90.0..160.0f64, 55.0..100.0f64, 20.0..3000.0f64), 6..40).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (sbp, dbp, weight))| StudyPoint {
                sbp,
                dbp,
                weight,
                pmid: i.to_string(),
            })
            .collect()
    })
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn same_model(a: &GaussianMixture, b: &GaussianMixture, rel: f64) -> bool {
    a.k() == b.k()
        && a.components.iter().zip(&b.components).all(|(x, y)| {
            let (g, h) = (x.gaussian, y.gaussian);
            close(x.weight, y.weight, rel)
                && (0..2).all(|i| close(g.mean[i], h.mean[i], rel))
                && (0..2)
                    .all(|i| (0..2).all(|j| close(g.covariance[i][j], h.covariance[i][j], rel)))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn weight_scale_invariance(pts in points_strategy(), scale in 0.01..100.0f64, k in 1usize..3) {
        let cfg = EmConfig { k, ..Default::default() };
        let scaled: Vec<_> = pts.iter().cloned().map(|mut p| { p.weight *= scale; p }).collect();
        match (fit_gmm(&pts, &cfg), fit_gmm(&scaled, &cfg)) {
            (Ok(a), Ok(b)) => prop_assert!(same_model(&a, &b, 1e-9), "{a:?}\n{b:?}"),
            (a, b) => prop_assert_eq!(a.is_ok(), b.is_ok()),
        }
    }

    #[test]
    fn permutation_invariance(pts in points_strategy(), seed in any::<u64>(), k in 1usize..4) {
        let cfg = EmConfig { k, ..Default::default() };
        let mut shuffled = pts.clone();
        shuffled.reverse();
        let n = shuffled.len();
        shuffled.rotate_left((seed % n as u64) as usize);
        match (fit_gmm(&pts, &cfg), fit_gmm(&shuffled, &cfg)) {
            (Ok(a), Ok(b)) => prop_assert!(same_model(&a, &b, 1e-9)),
            (a, b) => prop_assert_eq!(a.is_ok(), b.is_ok()),
        }
    }

    #[test]
    fn em_objective_never_decreases(pts in points_strategy(), seed in any::<u64>(), k in 1usize..4) {
        let cfg = EmConfig { k, seed, ..Default::default() };
        if let Ok(m) = fit_gmm(&pts, &cfg) {
            // A component collapsed onto collinear points has a condition
            // number near 1e8; its 2x2 covariance entries then cannot resolve
            // the small eigenvalue to better than about 1e-8 relative, which
            // is above the slack below.
            let worst = m.components.iter().map(|c| {
                let g = c.gaussian;
                let tr = g.covariance[0][0] + g.covariance[1][1];
                (tr - g.min_eigenvalue()) / g.min_eigenvalue()
            }).fold(0.0, f64::max);
            prop_assume!(worst < 1e5);
            for w in m.meta.trace.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-10 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn grid_mass_over_eight_sigma(
        mean in (80.0..180.0f64, 40.0..110.0f64),
        sd in (2.0..20.0f64, 2.0..20.0f64),
        rho in -0.8..0.8f64,
    ) {
        let cov = [[sd.0 * sd.0, rho * sd.0 * sd.1], [rho * sd.0 * sd.1, sd.1 * sd.1]];
        let m = GaussianMixture::from_components(vec![Component {
            weight: 1.0,
            gaussian: Gaussian2D::new([mean.0, mean.1], cov),
        }]);
        let b = GridBounds {
            sbp: [mean.0 - 8.0 * sd.0, mean.0 + 8.0 * sd.0],
            dbp: [mean.1 - 8.0 * sd.1, mean.1 + 8.0 * sd.1],
        };
        let mass = density_grid(&m, &b, 256).unwrap().mass();
        prop_assert!((1.0 - 1e-3..=1.0 + 1e-6).contains(&mass), "{mass}");
    }
}

#[test]
fn half_peak_contour_is_the_analytic_circle() {
    for (sigma, n) in [(5.0, 128), (8.0, 200), (12.0, 256)] {
        let center = [131.3, 77.9];
        let m = GaussianMixture::from_components(vec![Component {
            weight: 1.0,
            gaussian: Gaussian2D::isotropic(center, sigma * sigma),
        }]);
        let g = density_grid(&m, &GridBounds::default(), n).unwrap();
        let cell = g.sbp_axis.step().max(g.dbp_axis.step());
        let levels = iso_contours(&g, &[0.5]).unwrap();
        let lines = &levels[0].polylines;
        assert_eq!(lines.len(), 1);
        assert!(lines[0].closed);
        let r = sigma * (2.0 * 2f64.ln()).sqrt();
        for p in &lines[0].points {
            let d = (p[0] - center[0]).hypot(p[1] - center[1]);
            assert!((d - r).abs() < cell, "sigma {sigma}: {d} vs {r}");
        }
    }
}

/// Number of 4-connected components of grid cells above `t`.
fn components_above(g: &bpminer::analysis::DensityGrid, t: f64) -> usize {
    let (nx, ny) = (g.sbp_axis.n, g.dbp_axis.n);
    let mut seen = vec![false; nx * ny];
    let mut count = 0;
    for start in 0..nx * ny {
        if seen[start] || g.values[start] <= t {
            continue;
        }
        count += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            let (x, y) = (i % nx, i / nx);
            let mut nb = vec![];
            if x > 0 {
                nb.push(i - 1)
            }
            if x + 1 < nx {
                nb.push(i + 1)
            }
            if y > 0 {
                nb.push(i - nx)
            }
            if y + 1 < ny {
                nb.push(i + nx)
            }
            for j in nb {
                if !seen[j] && g.values[j] > t {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    count
}

#[test]
fn loop_count_matches_connected_components() {
    let bump = |w: f64, m: [f64; 2], v: f64| Component {
        weight: w,
        gaussian: Gaussian2D::isotropic(m, v),
    };
    let model = GaussianMixture::from_components(vec![
        bump(0.4, [100.0, 60.0], 16.0),
        bump(0.35, [150.0, 95.0], 25.0),
        bump(0.25, [170.0, 55.0], 9.0),
    ]);
    let g = density_grid(&model, &GridBounds::default(), 200).unwrap();
    let levels = [0.05, 0.2, 0.5, 0.8, 0.95];
    for lvl in iso_contours(&g, &levels).unwrap() {
        let closed = lvl.polylines.iter().filter(|p| p.closed).count();
        assert_eq!(lvl.polylines.len(), closed, "level {}", lvl.level);
        assert_eq!(
            closed,
            components_above(&g, lvl.threshold),
            "level {}",
            lvl.level
        );
    }
}

#[test]
fn bic_picks_one_cloud() {
    let mut pts = study_cloud(7, 200, [125.0, 78.0], [4.0, 3.0]);
    pts.iter_mut().for_each(|p| p.weight = 1.0);
    let sel = select_components(&pts, 3, &EmConfig::default(), Exec::default()).unwrap();
    assert_eq!(sel.k, 1, "{:?}", sel.table);
}

#[test]
fn bic_picks_two_clusters() {
    let pts = two_clusters(11, 200, [[115.0, 75.0], [135.0, 88.0]], 25.0);
    let sel = select_components(&pts, 4, &EmConfig::default(), Exec::default()).unwrap();
    assert_eq!(sel.k, 2, "{:?}", sel.table);
}

#[test]
fn selection_is_the_same_in_both_modes() {
    let pts = two_clusters(3, 100, [[112.0, 70.0], [140.0, 90.0]], 30.0);
    let a = select_components(&pts, 4, &EmConfig::default(), Exec::Sequential).unwrap();
    let b = select_components(&pts, 4, &EmConfig::default(), Exec::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn mixture_peak_matches_dense_brute_force() {
    let model = GaussianMixture::from_components(vec![
        Component {
            weight: 0.7,
            gaussian: Gaussian2D::new([118.0, 76.0], [[90.0, 20.0], [20.0, 40.0]]),
        },
        Component {
            weight: 0.3,
            gaussian: Gaussian2D::new([142.0, 90.0], [[40.0, -5.0], [-5.0, 30.0]]),
        },
    ]);
    let p = peak(&model, &GridBounds::default(), 256).unwrap();
    // Brute force on a 0.02 mmHg lattice around the dominant component.
    let (mut best, mut at) = (f64::NEG_INFINITY, [0.0, 0.0]);
    for i in 0..=1000 {
        for j in 0..=1000 {
            let x = [108.0 + 0.02 * i as f64, 66.0 + 0.02 * j as f64];
            let d = model.pdf(x);
            if d > best {
                (best, at) = (d, x);
            }
        }
    }
    assert!(
        (p.sbp - at[0]).abs() <= 0.02 && (p.dbp - at[1]).abs() <= 0.02,
        "{p:?} vs {at:?}"
    );
    assert!(p.density >= best * (1.0 - 1e-9));
}
