//! Piecewise-linear station surfaces on a regular grid, for maps.

use delaunator::{triangulate, Point};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::ProjPoint;
use crate::scalar::Real;

/// Regular lattice of `nx × ny` nodes including both edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl SurfaceGrid {
    /// Bounding box of `points` on an `nx × ny` lattice.
    pub fn covering<T: Real>(points: &[ProjPoint<T>], nx: usize, ny: usize) -> Self {
        let xs = points.iter().map(|p| p.s1.as_f64());
        let ys = points.iter().map(|p| p.s2.as_f64());
        Self {
            x_min: xs.clone().fold(f64::INFINITY, f64::min),
            x_max: xs.fold(f64::NEG_INFINITY, f64::max),
            y_min: ys.clone().fold(f64::INFINITY, f64::min),
            y_max: ys.fold(f64::NEG_INFINITY, f64::max),
            nx,
            ny,
        }
    }

    pub fn node(&self, i: usize, j: usize) -> (f64, f64) {
        let step = |lo: f64, hi: f64, n: usize, k: usize| {
            if n <= 1 {
                lo
            } else {
                lo + (hi - lo) * k as f64 / (n - 1) as f64
            }
        };
        (
            step(self.x_min, self.x_max, self.nx, i),
            step(self.y_min, self.y_max, self.ny, j),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GriddedField {
    pub grid: SurfaceGrid,
    /// `ny × nx`; row `j` holds the nodes at the `j`-th y level. `None`
    /// outside the convex hull of the stations.
    pub values: DMatrix<Option<f64>>,
}

/// Linear interpolation over the Delaunay triangulation of the stations.
pub fn grid_surface<T: Real>(values: &[T], points: &[ProjPoint<T>], grid: &SurfaceGrid) -> Result<GriddedField> {
    if values.len() != points.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} values for {} stations",
            values.len(),
            points.len()
        )));
    }
    if points.len() < 3 {
        return Err(Error::InsufficientData("a surface needs at least 3 stations".into()));
    }
    if grid.nx == 0 || grid.ny == 0 {
        return Err(Error::InvalidInput("empty surface grid".into()));
    }
    let pts: Vec<Point> = points
        .iter()
        .map(|p| Point {
            x: p.s1.as_f64(),
            y: p.s2.as_f64(),
        })
        .collect();
    let tri = triangulate(&pts);
    if tri.is_empty() {
        return Err(Error::Collinear(
            "stations are collinear; no triangulation exists".into(),
        ));
    }
    let vals: Vec<f64> = values.iter().map(|v| v.as_f64()).collect();
    let triangles: Vec<[usize; 3]> = tri.triangles.chunks_exact(3).map(|t| [t[0], t[1], t[2]]).collect();
    let out = DMatrix::from_fn(grid.ny, grid.nx, |j, i| {
        let (x, y) = grid.node(i, j);
        triangles.iter().find_map(|t| {
            let w = barycentric(&pts[t[0]], &pts[t[1]], &pts[t[2]], x, y)?;
            Some(w[0] * vals[t[0]] + w[1] * vals[t[1]] + w[2] * vals[t[2]])
        })
    });
    Ok(GriddedField {
        grid: *grid,
        values: out,
    })
}

/// Barycentric weights of `(x, y)` in the triangle, or `None` when it lies
/// outside (with a small tolerance so shared edges are covered).
fn barycentric(a: &Point, b: &Point, c: &Point, x: f64, y: f64) -> Option<[f64; 3]> {
    let det = (b.y - c.y) * (a.x - c.x) + (c.x - b.x) * (a.y - c.y);
    if det == 0.0 {
        return None;
    }
    let l1 = ((b.y - c.y) * (x - c.x) + (c.x - b.x) * (y - c.y)) / det;
    let l2 = ((c.y - a.y) * (x - c.x) + (a.x - c.x) * (y - c.y)) / det;
    let l3 = 1.0 - l1 - l2;
    let tol = -1e-10;
    (l1 >= tol && l2 >= tol && l3 >= tol).then_some([l1, l2, l3])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scatter(n: usize, seed: u64) -> Vec<ProjPoint<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| ProjPoint::new(rng.random_range(-50.0..50.0), rng.random_range(0.0..80.0)))
            .collect()
    }

    #[test]
    fn constant_and_planar_reproduction() {
        let pts = scatter(25, 1);
        let grid = SurfaceGrid::covering(&pts, 40, 30);
        let flat = grid_surface(&[3.5; 25], &pts, &grid).unwrap();
        let plane = |p: (f64, f64)| 1.0 + 0.3 * p.0 - 0.7 * p.1;
        let vals: Vec<f64> = pts.iter().map(|p| plane((p.s1, p.s2))).collect();
        let lin = grid_surface(&vals, &pts, &grid).unwrap();
        let mut inside = 0;
        for j in 0..30 {
            for i in 0..40 {
                if let Some(v) = flat.values[(j, i)] {
                    assert!((v - 3.5).abs() < 1e-12);
                    inside += 1;
                }
                if let Some(v) = lin.values[(j, i)] {
                    assert!((v - plane(grid.node(i, j))).abs() < 1e-9);
                }
                assert_eq!(flat.values[(j, i)].is_some(), lin.values[(j, i)].is_some());
            }
        }
        assert!(inside > 0);
    }

    #[test]
    fn outside_hull_is_missing() {
        let pts = [
            ProjPoint::new(0.0, 0.0),
            ProjPoint::new(1.0, 0.0),
            ProjPoint::new(0.0, 1.0),
        ];
        let grid = SurfaceGrid {
            x_min: 0.0,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 1.0,
            nx: 2,
            ny: 2,
        };
        let f = grid_surface(&[1.0, 2.0, 3.0], &pts, &grid).unwrap();
        assert_eq!(f.values[(1, 1)], None);
        assert_eq!(f.values[(0, 0)], Some(1.0));
    }

    #[test]
    fn square_with_raised_corner() {
        let pts = [
            ProjPoint::new(0.0, 0.0),
            ProjPoint::new(1.0, 0.0),
            ProjPoint::new(0.0, 1.0),
            ProjPoint::new(1.0, 1.0),
        ];
        let vals = [0.0, 0.0, 0.0, 1.0];
        let grid = SurfaceGrid {
            x_min: 0.0,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 1.0,
            nx: 11,
            ny: 11,
        };
        let f = grid_surface(&vals, &pts, &grid).unwrap();
        // Either diagonal is a valid Delaunay split. Along 0–3 the raised
        // corner reaches the centre; along 1–2 it does not.
        let centre = f.values[(5, 5)].unwrap();
        let main_diagonal = (centre - 0.5).abs() < 1e-12;
        assert!(main_diagonal || centre.abs() < 1e-12, "centre {centre}");
        // node (0.7, 0.4): barycentric value in the triangle of that split
        let want = if main_diagonal {
            // triangle (0,0),(1,0),(1,1): weight of (1,1) is y
            0.4
        } else {
            // triangle (1,0),(0,1),(1,1): weight of (1,1) is x + y − 1
            0.7 + 0.4 - 1.0
        };
        let got = f.values[(4, 7)].unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn collinear_rejected() {
        let pts: Vec<ProjPoint<f64>> = (0..5).map(|i| ProjPoint::new(i as f64, 2.0 * i as f64)).collect();
        let grid = SurfaceGrid::covering(&pts, 5, 5);
        assert!(matches!(grid_surface(&[1.0; 5], &pts, &grid), Err(Error::Collinear(_))));
    }
}
