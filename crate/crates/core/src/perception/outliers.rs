//! Statistical outlier removal on a voxel hash grid.

use std::collections::HashMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutlierOptions {
    /// Neighbours averaged per point.
    pub k: usize,
    /// Points whose mean neighbour distance exceeds `mean + std_ratio * std` are dropped.
    pub std_ratio: f64,
}

impl Default for OutlierOptions {
    fn default() -> Self {
        Self { k: 8, std_ratio: 2.0 }
    }
}

type Cell = (i64, i64, i64);

struct Grid<'a> {
    points: &'a [Vector3<f64>],
    cell: f64,
    cells: HashMap<Cell, Vec<usize>>,
    span: i64,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [Vector3<f64>], k: usize) -> Self {
        let (lo, hi) = points.iter().fold(
            (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY)),
            |(lo, hi), p| (lo.inf(p), hi.sup(p)),
        );
        let size = (hi - lo).max().max(1e-9);
        // roughly k points per occupied cell for surface-like clouds
        let cell = size * (k as f64 / points.len() as f64).sqrt().clamp(1e-3, 1.0);
        let mut cells: HashMap<Cell, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i);
        }
        Self {
            points,
            cell,
            cells,
            span: (size / cell).ceil() as i64 + 1,
        }
    }

    fn key(p: &Vector3<f64>, cell: f64) -> Cell {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64)
    }

    /// Mean distance from point `i` to its `k` nearest other points.
    fn mean_knn(&self, i: usize, k: usize) -> f64 {
        let q = &self.points[i];
        let c = Self::key(q, self.cell);
        let mut d: Vec<f64> = Vec::new();
        for r in 0..=self.span {
            for dx in -r..=r {
                for dy in -r..=r {
                    for dz in -r..=r {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                            continue;
                        }
                        if let Some(ids) = self.cells.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                            d.extend(ids.iter().filter(|&&j| j != i).map(|&j| (self.points[j] - q).norm()));
                        }
                    }
                }
            }
            if d.len() >= k {
                d.select_nth_unstable_by(k - 1, f64::total_cmp);
                // anything outside the visited shells is farther than r cells
                if d[k - 1] <= r as f64 * self.cell {
                    break;
                }
            }
        }
        let m = k.min(d.len());
        if m == 0 {
            return 0.0;
        }
        d.select_nth_unstable_by(m - 1, f64::total_cmp);
        d[..m].iter().sum::<f64>() / m as f64
    }
}

/// Indices of the points kept by statistical outlier removal.
pub fn inlier_indices(points: &[Vector3<f64>], opts: &OutlierOptions) -> Vec<usize> {
    if points.len() <= opts.k || opts.k == 0 {
        return (0..points.len()).collect();
    }
    let grid = Grid::new(points, opts.k);
    let m: Vec<f64> = (0..points.len()).map(|i| grid.mean_knn(i, opts.k)).collect();
    let n = m.len() as f64;
    let mu = m.iter().sum::<f64>() / n;
    let sd = (m.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n).sqrt();
    let limit = mu + opts.std_ratio * sd;
    (0..points.len()).filter(|&i| m[i] <= limit).collect()
}

pub fn remove_outliers(points: &[Vector3<f64>], opts: &OutlierOptions) -> Vec<Vector3<f64>> {
    inlier_indices(points, opts).into_iter().map(|i| points[i]).collect()
}
