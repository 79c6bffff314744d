//! Quantitative reference-line comparison.
//!
//! Roads are sampled at uniform arc-length spacing; for every sample of
//! the first set the nearest-neighbor distance into the second set is
//! measured, and RMSE, average distance and standard deviation are
//! reported over those distances. The comparison is directional: results
//! are stated generated → reference.

pub mod parse;
pub mod sample;

pub use parse::{parse_file, parse_str, EvalDocument, EvalRoad};
pub use sample::{fresnel, sample_road, ElementSampler, SampledLine};

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::geo::{self, GeoPoint};
use crate::spatial::GridIndex2d;
use crate::xodr::GeometryElement;

/// Comparison statistics over nearest-neighbor distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareStats {
    pub rmse: f64,
    pub avg_distance: f64,
    pub std_dev: f64,
    pub evaluated_length: f64,
}

impl CompareStats {
    /// Text table mirroring the shape of the published evaluation.
    pub fn table(&self, label: &str) -> String {
        format!(
            "comparison ({label})\n\
             RMSE              {:.4} m\n\
             avg. distance     {:.4} m\n\
             std. deviation σ  {:.4} m\n\
             eval. length      {:.1} m\n",
            self.rmse, self.avg_distance, self.std_dev, self.evaluated_length
        )
    }
}

/// Distance statistics from every point of `a` to the nearest point of
/// `b`. Directional by design.
pub fn compare(a: &[SampledLine], b: &[SampledLine]) -> Result<CompareStats> {
    let a_count: usize = a.iter().map(|l| l.points.len()).sum();
    let b_points: Vec<[f64; 2]> = b
        .iter()
        .flat_map(|l| l.points.iter().map(|p| [p.x, p.y]))
        .collect();
    if a_count == 0 || b_points.is_empty() {
        return Err(Error::Validation("cannot compare empty sample sets".into()));
    }
    let cell = a.first().map(|l| l.spacing).unwrap_or(1.0).max(0.5);
    let index = GridIndex2d::build(b_points, cell);

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for line in a {
        for p in &line.points {
            let d = index.nearest_distance(&[p.x, p.y]).unwrap();
            sum += d;
            sum_sq += d * d;
        }
    }
    let n = a_count as f64;
    let avg = sum / n;
    let mean_sq = sum_sq / n;
    let variance = (mean_sq - avg * avg).max(0.0);
    Ok(CompareStats {
        rmse: mean_sq.sqrt(),
        avg_distance: avg,
        std_dev: variance.sqrt(),
        evaluated_length: a.iter().map(|l| l.evaluated_length()).sum(),
    })
}

/// Sample every road of a parsed document.
pub fn sample_document(doc: &EvalDocument, spacing: f64) -> Result<Vec<SampledLine>> {
    doc.roads
        .iter()
        .map(|r| sample_road(&r.geometry, spacing))
        .collect()
}

/// Re-express sampled lines from one projection frame in another.
pub fn reproject_lines(
    lines: &[SampledLine],
    from: &GeoPoint,
    to: &GeoPoint,
) -> Result<Vec<SampledLine>> {
    lines
        .iter()
        .map(|line| {
            let points = line
                .points
                .iter()
                .map(|p| {
                    let g = geo::unproject_tm(&Vector2::new(p.x, p.y), 0.0, from)?;
                    Ok(geo::project_tm(&g, to)?.xy())
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SampledLine {
                points,
                spacing: line.spacing,
            })
        })
        .collect()
}

/// Least-squares rigid 2D alignment (rotation + translation) of `a` onto
/// `b` via iterated nearest-neighbor correspondences. Off by default in
/// the comparison tool.
pub fn align_rigid_2d(a: &[SampledLine], b: &[SampledLine], iterations: usize) -> Vec<SampledLine> {
    let b_points: Vec<[f64; 2]> = b
        .iter()
        .flat_map(|l| l.points.iter().map(|p| [p.x, p.y]))
        .collect();
    if b_points.is_empty() {
        return a.to_vec();
    }
    let cell = a.first().map(|l| l.spacing).unwrap_or(1.0).max(0.5);
    let index = GridIndex2d::build(b_points.clone(), cell);

    let mut current: Vec<SampledLine> = a.to_vec();
    for _ in 0..iterations {
        // nearest correspondences
        let mut pairs: Vec<(Vector2<f64>, Vector2<f64>)> = Vec::new();
        for line in &current {
            for p in &line.points {
                // linear scan over candidate cells is fine here; reuse the
                // index distance then find the matching point brute force
                let mut best = (f64::INFINITY, Vector2::zeros());
                let d = index.nearest_distance(&[p.x, p.y]).unwrap();
                for q in &b_points {
                    let qv = Vector2::new(q[0], q[1]);
                    let dd = (qv - p).norm();
                    if dd <= d + 1e-12 && dd < best.0 {
                        best = (dd, qv);
                    }
                }
                pairs.push((*p, best.1));
            }
        }
        // Kabsch in 2D
        let n = pairs.len() as f64;
        let ca = pairs.iter().map(|(p, _)| p).sum::<Vector2<f64>>() / n;
        let cb = pairs.iter().map(|(_, q)| q).sum::<Vector2<f64>>() / n;
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        let mut syx = 0.0;
        let mut syy = 0.0;
        for (p, q) in &pairs {
            let dp = p - ca;
            let dq = q - cb;
            sxx += dp.x * dq.x;
            sxy += dp.x * dq.y;
            syx += dp.y * dq.x;
            syy += dp.y * dq.y;
        }
        let angle = (sxy - syx).atan2(sxx + syy);
        let (sin_a, cos_a) = angle.sin_cos();
        for line in &mut current {
            for p in &mut line.points {
                let dp = *p - ca;
                *p = Vector2::new(
                    cb.x + cos_a * dp.x - sin_a * dp.y,
                    cb.y + sin_a * dp.x + cos_a * dp.y,
                );
            }
        }
    }
    current
}

/// Positional and heading mismatch at one geometry joint.
#[derive(Debug, Clone)]
pub struct JointReport {
    pub road_id: u64,
    pub element_index: usize,
    pub position_error: f64,
    pub heading_error: f64,
}

/// Evaluate every element at its end against its successor's start.
pub fn continuity_report(road_id: u64, geometry: &[GeometryElement]) -> Vec<JointReport> {
    let mut reports = Vec::new();
    for (i, pair) in geometry.windows(2).enumerate() {
        let sampler = ElementSampler::new(&pair[0]);
        let (end, hdg_end) = sampler.eval(pair[0].length);
        let start = Vector2::new(pair[1].x, pair[1].y);
        let mut dh = (hdg_end - pair[1].hdg) % (2.0 * std::f64::consts::PI);
        if dh > std::f64::consts::PI {
            dh -= 2.0 * std::f64::consts::PI;
        }
        if dh < -std::f64::consts::PI {
            dh += 2.0 * std::f64::consts::PI;
        }
        reports.push(JointReport {
            road_id,
            element_index: i,
            position_error: (end - start).norm(),
            heading_error: dh.abs(),
        });
    }
    reports
}
