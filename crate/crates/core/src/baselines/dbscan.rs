use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;

/// Label given to points that belong to no cluster.
pub const NOISE: i32 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        Self {
            eps: 2.1,
            min_pts: 10,
        }
    }
}

impl DbscanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::config("dbscan.eps", "must be finite and > 0"));
        }
        if self.min_pts < 1 {
            return Err(Error::config("dbscan.min_pts", "must be >= 1"));
        }
        Ok(())
    }
}

/// Uniform grid with `eps`-sized cells for radius queries.
struct Grid {
    eps: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl Grid {
    fn new(points: &[Point2], eps: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(*p, eps)).or_default().push(i);
        }
        Self { eps, cells }
    }

    fn key(p: Point2, eps: f64) -> (i64, i64) {
        ((p.x / eps).floor() as i64, (p.y / eps).floor() as i64)
    }

    /// Indices within `eps` of `points[i]` (closed ball, `i` included), ascending.
    fn neighbors(&self, points: &[Point2], i: usize) -> Vec<usize> {
        let p = points[i];
        let (cx, cy) = Self::key(p, self.eps);
        let eps2 = self.eps * self.eps;
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(cell) = self.cells.get(&(cx + dx, cy + dy)) {
                    out.extend(cell.iter().copied().filter(|&j| {
                        let (ex, ey) = (points[j].x - p.x, points[j].y - p.y);
                        ex * ex + ey * ey <= eps2
                    }));
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Density-based clustering.
///
/// A point is core when at least `min_pts` points (itself included) lie
/// within `eps`. Clusters are grown from core points in input order, so
/// cluster ids follow the first core point of each cluster. A border point
/// reachable from several clusters joins the first one that reaches it.
pub fn dbscan(points: &[Point2], params: &DbscanParams) -> Result<Vec<i32>> {
    params.validate()?;
    if let Some(i) = points.iter().position(|p| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(Error::invalid(format!("point {i} has non-finite coordinates")));
    }
    let grid = Grid::new(points, params.eps);
    let neighbors: Vec<Vec<usize>> = (0..points.len())
        .map(|i| grid.neighbors(points, i))
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|n| n.len() >= params.min_pts).collect();

    let mut labels = vec![NOISE; points.len()];
    let mut next = 0;
    let mut stack = Vec::new();
    for seed in 0..points.len() {
        if !core[seed] || labels[seed] != NOISE {
            continue;
        }
        labels[seed] = next;
        stack.push(seed);
        while let Some(i) = stack.pop() {
            for &j in &neighbors[i] {
                if labels[j] == NOISE {
                    labels[j] = next;
                    if core[j] {
                        stack.push(j);
                    }
                }
            }
        }
        next += 1;
    }
    Ok(labels)
}
