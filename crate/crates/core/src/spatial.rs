//! Uniform-grid spatial index for fixed-radius neighbor queries.
//!
//! Built once per call site over an immutable point set; queries are
//! read-only and safe to run from multiple workers.

use std::collections::HashMap;

/// 3D grid hash over points, tuned for queries of roughly one cell radius.
pub struct GridIndex {
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<u32>>,
    points: Vec<[f64; 3]>,
}

impl GridIndex {
    pub fn build(points: Vec<[f64; 3]>, cell: f64) -> Self {
        assert!(cell > 0.0, "cell size must be positive");
        let mut cells: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i as u32);
        }
        GridIndex {
            cell,
            cells,
            points,
        }
    }

    fn key(p: &[f64; 3], cell: f64) -> (i64, i64, i64) {
        (
            (p[0] / cell).floor() as i64,
            (p[1] / cell).floor() as i64,
            (p[2] / cell).floor() as i64,
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, idx: u32) -> [f64; 3] {
        self.points[idx as usize]
    }

    /// Indices of all points with distance <= radius from `center`,
    /// in deterministic order.
    pub fn within(&self, center: &[f64; 3], radius: f64, out: &mut Vec<u32>) {
        out.clear();
        let r2 = radius * radius;
        let reach = (radius / self.cell).ceil() as i64;
        let (cx, cy, cz) = Self::key(center, self.cell);
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    if let Some(ids) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &i in ids {
                            let p = &self.points[i as usize];
                            let d2 = (p[0] - center[0]).powi(2)
                                + (p[1] - center[1]).powi(2)
                                + (p[2] - center[2]).powi(2);
                            if d2 <= r2 {
                                out.push(i);
                            }
                        }
                    }
                }
            }
        }
    }

    /// Count of points with distance <= radius, excluding `exclude`.
    pub fn count_within_excluding(&self, center: &[f64; 3], radius: f64, exclude: u32) -> usize {
        let r2 = radius * radius;
        let reach = (radius / self.cell).ceil() as i64;
        let (cx, cy, cz) = Self::key(center, self.cell);
        let mut count = 0;
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    if let Some(ids) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &i in ids {
                            if i == exclude {
                                continue;
                            }
                            let p = &self.points[i as usize];
                            let d2 = (p[0] - center[0]).powi(2)
                                + (p[1] - center[1]).powi(2)
                                + (p[2] - center[2]).powi(2);
                            if d2 <= r2 {
                                count += 1;
                            }
                        }
                    }
                }
            }
        }
        count
    }
}

/// 2D grid over points for nearest-neighbor queries, used by the
/// reference-line comparison.
pub struct GridIndex2d {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<u32>>,
    points: Vec<[f64; 2]>,
    key_min: (i64, i64),
    key_max: (i64, i64),
}

impl GridIndex2d {
    pub fn build(points: Vec<[f64; 2]>, cell: f64) -> Self {
        assert!(cell > 0.0);
        let mut cells: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        let mut key_min = (i64::MAX, i64::MAX);
        let mut key_max = (i64::MIN, i64::MIN);
        for (i, p) in points.iter().enumerate() {
            let key = ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64);
            key_min = (key_min.0.min(key.0), key_min.1.min(key.1));
            key_max = (key_max.0.max(key.0), key_max.1.max(key.1));
            cells.entry(key).or_default().push(i as u32);
        }
        GridIndex2d {
            cell,
            cells,
            points,
            key_min,
            key_max,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distance to the nearest indexed point, scanning grid rings outward.
    pub fn nearest_distance(&self, p: &[f64; 2]) -> Option<f64> {
        if self.points.is_empty() {
            return None;
        }
        let cx = (p[0] / self.cell).floor() as i64;
        let cy = (p[1] / self.cell).floor() as i64;
        // No populated cell lies beyond this Chebyshev distance.
        let max_ring = [
            (cx - self.key_min.0).abs(),
            (cx - self.key_max.0).abs(),
            (cy - self.key_min.1).abs(),
            (cy - self.key_max.1).abs(),
        ]
        .into_iter()
        .max()
        .unwrap();

        let mut best = f64::INFINITY;
        for ring in 0..=max_ring {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    if dx.abs() != ring && dy.abs() != ring {
                        continue; // interior rings already scanned
                    }
                    if let Some(ids) = self.cells.get(&(cx + dx, cy + dy)) {
                        for &i in ids {
                            let q = &self.points[i as usize];
                            let d2 = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
                            if d2 < best {
                                best = d2;
                            }
                        }
                    }
                }
            }
            // Points in ring j > k sit at least k*cell away, so a best
            // within k*cell after fully scanning ring k is final.
            if best.sqrt() <= ring as f64 * self.cell {
                break;
            }
        }
        Some(best.sqrt())
    }
}
