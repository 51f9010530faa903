//! Marching-squares iso-lines over a density grid.
//!
//! Samples sit at cell centers; each square between four neighbouring
//! samples contributes up to two segments, with saddles resolved by the
//! mean of the four corners. Segments are stitched through the lattice
//! edges they cross, so every crossing point is shared by at most two
//! segments and the result is a set of simple polylines.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::grid::DensityGrid;
use super::AnalysisError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    /// (sbp, dbp) vertices. A closed polyline does not repeat its first vertex.
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourLevel {
    /// Fraction of the peak density.
    pub level: f64,
    /// Absolute density threshold, mmHg⁻².
    pub threshold: f64,
    pub polylines: Vec<Polyline>,
}

/// Lattice edge: horizontal edges join (ix,iy)-(ix+1,iy), vertical ones
/// (ix,iy)-(ix,iy+1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Edge {
    H(usize, usize),
    V(usize, usize),
}

/// Extracts iso-lines at `level * max(grid)` for every level in (0, 1).
pub fn iso_contours(
    grid: &DensityGrid,
    levels: &[f64],
) -> Result<Vec<ContourLevel>, AnalysisError> {
    if let Some(l) = levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        return Err(AnalysisError::InvalidInput(format!(
            "contour level {l} must lie strictly between 0 and 1"
        )));
    }
    let peak = grid.max_value();
    Ok(levels
        .iter()
        .map(|&level| {
            let threshold = level * peak;
            ContourLevel {
                level,
                threshold,
                polylines: trace(grid, threshold),
            }
        })
        .collect())
}

fn trace(grid: &DensityGrid, thr: f64) -> Vec<Polyline> {
    let (nx, ny) = (grid.sbp_axis.n, grid.dbp_axis.n);
    let inside = |ix: usize, iy: usize| grid.get(ix, iy) > thr;
    let mut links: BTreeMap<Edge, Vec<Edge>> = BTreeMap::new();
    let mut link = |a: Edge, b: Edge| {
        links.entry(a).or_default().push(b);
        links.entry(b).or_default().push(a);
    };

    for iy in 0..ny.saturating_sub(1) {
        for ix in 0..nx.saturating_sub(1) {
            // Corners counter-clockwise from bottom-left.
            let c = [
                inside(ix, iy),
                inside(ix + 1, iy),
                inside(ix + 1, iy + 1),
                inside(ix, iy + 1),
            ];
            let bottom = Edge::H(ix, iy);
            let right = Edge::V(ix + 1, iy);
            let top = Edge::H(ix, iy + 1);
            let left = Edge::V(ix, iy);
            // Edges adjacent to each corner, same order as `c`.
            let around = [(bottom, left), (bottom, right), (right, top), (top, left)];
            let crossed: Vec<Edge> = [
                (c[0] != c[1], bottom),
                (c[1] != c[2], right),
                (c[2] != c[3], top),
                (c[3] != c[0], left),
            ]
            .iter()
            .filter(|(x, _)| *x)
            .map(|(_, e)| *e)
            .collect();
            match crossed.len() {
                0 => {}
                2 => link(crossed[0], crossed[1]),
                4 => {
                    let center = 0.25
                        * (grid.get(ix, iy)
                            + grid.get(ix + 1, iy)
                            + grid.get(ix + 1, iy + 1)
                            + grid.get(ix, iy + 1))
                        > thr;
                    for (corner, &(a, b)) in around.iter().enumerate() {
                        if c[corner] != center {
                            link(a, b);
                        }
                    }
                }
                _ => unreachable!("a square crosses an even number of edges"),
            }
        }
    }

    let point = |e: Edge| -> [f64; 2] {
        let (a, b, horizontal) = match e {
            Edge::H(ix, iy) => ((ix, iy), (ix + 1, iy), true),
            Edge::V(ix, iy) => ((ix, iy), (ix, iy + 1), false),
        };
        let (va, vb) = (grid.get(a.0, a.1), grid.get(b.0, b.1));
        let t = (thr - va) / (vb - va);
        let x0 = grid.sbp_axis.center(a.0);
        let y0 = grid.dbp_axis.center(a.1);
        if horizontal {
            [x0 + t * grid.sbp_axis.step(), y0]
        } else {
            [x0, y0 + t * grid.dbp_axis.step()]
        }
    };

    let mut visited: BTreeMap<Edge, bool> = links.keys().map(|e| (*e, false)).collect();
    let walk = |start: Edge, visited: &mut BTreeMap<Edge, bool>| -> (Vec<[f64; 2]>, bool) {
        let mut pts = vec![point(start)];
        visited.insert(start, true);
        let mut prev = None;
        let mut cur = start;
        loop {
            let next = links[&cur]
                .iter()
                .copied()
                .find(|n| Some(*n) != prev && !visited[n]);
            match next {
                Some(n) => {
                    visited.insert(n, true);
                    pts.push(point(n));
                    prev = Some(cur);
                    cur = n;
                }
                None => {
                    let closed =
                        links[&cur].len() == 2 && links[&cur].contains(&start) && pts.len() > 2;
                    return (pts, closed);
                }
            }
        }
    };

    let mut out = Vec::new();
    // Open chains start and end on the grid border at degree-one edges.
    let ends: Vec<Edge> = links
        .iter()
        .filter(|(_, n)| n.len() == 1)
        .map(|(e, _)| *e)
        .collect();
    for e in ends {
        if !visited[&e] {
            let (points, _) = walk(e, &mut visited);
            out.push(Polyline {
                points,
                closed: false,
            });
        }
    }
    let rest: Vec<Edge> = links.keys().copied().collect();
    for e in rest {
        if !visited[&e] {
            let (points, closed) = walk(e, &mut visited);
            out.push(Polyline { points, closed });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::grid::Axis;

    fn grid_from(values: Vec<f64>, n: usize) -> DensityGrid {
        let axis = Axis {
            min: 0.0,
            max: n as f64,
            n,
        };
        DensityGrid {
            sbp_axis: axis,
            dbp_axis: axis,
            values,
        }
    }

    #[test]
    fn single_bump_is_one_closed_square_loop() {
        let mut v = vec![0.0; 25];
        v[2 * 5 + 2] = 1.0;
        let c = iso_contours(&grid_from(v, 5), &[0.5]).unwrap();
        assert_eq!(c[0].polylines.len(), 1);
        let p = &c[0].polylines[0];
        assert!(p.closed);
        assert_eq!(p.points.len(), 4);
        // Crossings halfway between the bump at (2.5, 2.5) and its neighbours.
        for q in &p.points {
            let d = (q[0] - 2.5).abs() + (q[1] - 2.5).abs();
            assert!((d - 0.5).abs() < 1e-12, "{q:?}");
        }
    }

    #[test]
    fn border_touching_region_gives_open_chain() {
        let mut v = vec![0.0; 16];
        v[0] = 1.0;
        let c = iso_contours(&grid_from(v, 4), &[0.5]).unwrap();
        assert_eq!(c[0].polylines.len(), 1);
        assert!(!c[0].polylines[0].closed);
        assert_eq!(c[0].polylines[0].points.len(), 2);
    }

    #[test]
    fn saddle_resolution() {
        // Diagonal pair inside; center mean 0.5 is below 0.6 and above 0.4.
        let v = vec![1.0, 0.0, 0.0, 1.0];
        let apart = iso_contours(&grid_from(v.clone(), 2), &[0.6]).unwrap();
        assert_eq!(apart[0].polylines.len(), 2);
        let joined = iso_contours(&grid_from(v, 2), &[0.4]).unwrap();
        assert_eq!(joined[0].polylines.len(), 2);
        // Joined case cuts off the two outside corners instead.
        let xs: Vec<_> = joined[0]
            .polylines
            .iter()
            .map(|p| p.points.clone())
            .collect();
        assert_ne!(
            xs,
            apart[0]
                .polylines
                .iter()
                .map(|p| p.points.clone())
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn levels_validated() {
        let g = grid_from(vec![0.0, 1.0, 0.0, 0.0], 2);
        assert!(iso_contours(&g, &[1.0]).is_err());
        assert!(iso_contours(&g, &[0.0]).is_err());
        assert!(iso_contours(&g, &[]).unwrap().is_empty());
    }

    #[test]
    fn deterministic() {
        let v: Vec<f64> = (0..400).map(|i| ((i * 7919) % 113) as f64).collect();
        let g = grid_from(v, 20);
        assert_eq!(
            iso_contours(&g, &[0.3, 0.7]).unwrap(),
            iso_contours(&g, &[0.3, 0.7]).unwrap()
        );
    }
}
