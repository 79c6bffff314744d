//! Per-segment point cloud conditioning.
//!
//! All filters return subsets of their input: no point is synthesized and
//! no coordinate is mutated, which also makes every filter idempotent.

use nalgebra::{Matrix3, Vector3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::spatial::GridIndex;

/// One point with normalized reflectivity, in a stated frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    pub pos: Vector3<f64>,
    pub reflectivity: f64,
}

/// An immutable point collection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cloud {
    pub points: Vec<CloudPoint>,
}

impl Cloud {
    pub fn new(points: Vec<CloudPoint>) -> Self {
        Cloud { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn retain(&self, mut keep: impl FnMut(&CloudPoint) -> bool) -> Cloud {
        Cloud {
            points: self.points.iter().filter(|p| keep(p)).copied().collect(),
        }
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.points
            .iter()
            .map(|p| [p.pos.x, p.pos.y, p.pos.z])
            .collect()
    }
}

/// Ground plane n·p = d with upward unit normal.
#[derive(Debug, Clone, Copy)]
pub struct GroundPlane {
    pub normal: Vector3<f64>,
    pub d: f64,
    pub inlier_threshold: f64,
}

impl GroundPlane {
    /// Signed distance; positive above the plane.
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) - self.d
    }
}

/// Discard points above the sensor mounting plane, keeping a slack band
/// for superelevated roads. The cloud must be in the sensor frame, where
/// the sensor sits at z = 0.
pub fn crop_height(cloud: &Cloud, sensor_mount_z: f64, slack: f64) -> Cloud {
    cloud.retain(|p| p.pos.z <= sensor_mount_z + slack)
}

/// Keep points within the maximum road width on both sides of the ego
/// vehicle. The cloud must be in the vehicle frame (y = lateral).
pub fn crop_width(cloud: &Cloud, half_width: f64) -> Cloud {
    cloud.retain(|p| p.pos.y.abs() <= half_width)
}

/// Keep points at or above the reflectivity threshold.
pub fn filter_reflectivity(cloud: &Cloud, threshold: f64) -> Cloud {
    cloud.retain(|p| p.reflectivity >= threshold)
}

/// RANSAC ground plane estimate. Returns the plane and the kept cloud:
/// plane inliers plus everything below the plane (sloping roadsides).
/// Deterministic for a fixed seed.
pub fn fit_ground_plane(
    cloud: &Cloud,
    threshold: f64,
    max_iters: usize,
    seed: u64,
) -> Result<(GroundPlane, Cloud)> {
    let n = cloud.len();
    if n < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "ground plane needs >= 3 points, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut best_count = 0usize;
    let mut best: Option<(Vector3<f64>, f64)> = None;
    let mut needed = max_iters;
    let mut iter = 0;
    while iter < needed.min(max_iters) {
        iter += 1;
        let ia = rng.gen_range(0..n);
        let ib = rng.gen_range(0..n);
        let ic = rng.gen_range(0..n);
        if ia == ib || ib == ic || ia == ic {
            continue;
        }
        let a = cloud.points[ia].pos;
        let b = cloud.points[ib].pos;
        let c = cloud.points[ic].pos;
        let normal = (b - a).cross(&(c - a));
        let norm = normal.norm();
        if norm < 1e-12 {
            continue; // collinear sample
        }
        let normal = normal / norm;
        let d = normal.dot(&a);
        let count = cloud
            .points
            .iter()
            .filter(|p| (normal.dot(&p.pos) - d).abs() <= threshold)
            .count();
        if count > best_count {
            best_count = count;
            best = Some((normal, d));
            // Standard adaptive stop: enough iterations for 99.9%
            // confidence at the current inlier ratio.
            let w = count as f64 / n as f64;
            let denom = (1.0 - w * w * w).max(1e-12).ln();
            needed = ((1.0f64 - 0.999).ln() / denom).ceil().max(1.0) as usize;
        }
    }

    let (normal, d) = best.ok_or_else(|| {
        Error::DegenerateGeometry("all RANSAC samples collinear; cannot fit plane".into())
    })?;

    // Least-squares refinement over the consensus set.
    let inliers: Vec<Vector3<f64>> = cloud
        .points
        .iter()
        .map(|p| p.pos)
        .filter(|p| (normal.dot(p) - d).abs() <= threshold)
        .collect();
    let centroid = inliers.iter().sum::<Vector3<f64>>() / inliers.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in &inliers {
        let q = p - centroid;
        cov += q * q.transpose();
    }
    let eigen = cov.symmetric_eigen();
    let mut min_idx = 0;
    for i in 1..3 {
        if eigen.eigenvalues[i] < eigen.eigenvalues[min_idx] {
            min_idx = i;
        }
    }
    let mut refined: Vector3<f64> = eigen.eigenvectors.column(min_idx).into();
    refined.normalize_mut();
    if refined.z < 0.0 {
        refined = -refined;
    }
    if refined.z == 0.0 {
        return Err(Error::DegenerateGeometry(
            "ground plane estimate is vertical".into(),
        ));
    }
    let refined_d = refined.dot(&centroid);

    let plane = GroundPlane {
        normal: refined,
        d: refined_d,
        inlier_threshold: threshold,
    };
    let kept = cloud.retain(|p| plane.signed_distance(&p.pos) <= threshold);
    if kept.len() < 3 {
        return Err(Error::DegenerateGeometry(
            "ground plane keeps fewer than 3 points".into(),
        ));
    }
    Ok((plane, kept))
}

/// Keep points that have at least `min_neighbors` other surviving points
/// within `radius`. Removal is iterated to a fixpoint so the filter is
/// idempotent.
pub fn remove_radius_outliers(cloud: &Cloud, radius: f64, min_neighbors: usize) -> Cloud {
    if cloud.is_empty() {
        return Cloud::default();
    }
    let index = GridIndex::build(cloud.positions(), radius.max(1e-6));
    let mut alive = vec![true; cloud.len()];
    let mut neighbors = Vec::new();
    loop {
        let mut died = false;
        let mut next = alive.clone();
        for (i, p) in cloud.points.iter().enumerate() {
            if !alive[i] {
                continue;
            }
            index.within(&[p.pos.x, p.pos.y, p.pos.z], radius, &mut neighbors);
            let live = neighbors
                .iter()
                .filter(|&&j| j as usize != i && alive[j as usize])
                .count();
            if live < min_neighbors {
                next[i] = false;
                died = true;
            }
        }
        alive = next;
        if !died {
            break;
        }
    }
    Cloud {
        points: cloud
            .points
            .iter()
            .zip(&alive)
            .filter(|(_, &a)| a)
            .map(|(p, _)| *p)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pt(x: f64, y: f64, z: f64, r: f64) -> CloudPoint {
        CloudPoint {
            pos: Vector3::new(x, y, z),
            reflectivity: r,
        }
    }

    #[test]
    fn height_crop_rules() {
        let cloud = Cloud::new(vec![
            pt(0.0, 0.0, -1.8, 0.5),
            pt(1.0, 0.0, 3.0, 0.5),
            pt(2.0, 0.0, 0.4, 0.5),
        ]);
        let out = crop_height(&cloud, 0.0, 0.5);
        let zs: Vec<f64> = out.points.iter().map(|p| p.pos.z).collect();
        assert_eq!(zs, vec![-1.8, 0.4]);
    }

    #[test]
    fn width_crop_rules() {
        let cloud = Cloud::new(vec![
            pt(0.0, 20.0, 0.0, 0.5),
            pt(0.0, -12.0, 0.0, 0.5),
            pt(0.0, 3.0, 0.0, 0.5),
        ]);
        let out = crop_width(&cloud, 12.25);
        assert_eq!(out.len(), 2);
        assert!(crop_width(&cloud, 0.0).is_empty());
    }

    #[test]
    fn reflectivity_filter_rules() {
        let cloud = Cloud::new(vec![
            pt(0.0, 0.0, 0.0, 0.1),
            pt(0.0, 0.0, 0.0, 0.3),
            pt(0.0, 0.0, 0.0, 0.9),
        ]);
        let out = filter_reflectivity(&cloud, 0.25);
        assert_eq!(out.len(), 2);
        assert!(filter_reflectivity(&Cloud::new(vec![pt(0.0, 0.0, 0.0, 0.04)]), 0.05).is_empty());
        // Threshold is inclusive.
        assert_eq!(
            filter_reflectivity(&Cloud::new(vec![pt(0.0, 0.0, 0.0, 1.0)]), 1.0).len(),
            1
        );
    }

    fn plane_cloud_with_outliers(noise: f64, outlier_ratio: f64, seed: u64) -> Cloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::new();
        let total = 2000;
        let outliers = (total as f64 * outlier_ratio) as usize;
        for _ in 0..total - outliers {
            points.push(pt(
                rng.gen_range(-20.0..20.0),
                rng.gen_range(-10.0..10.0),
                -1.8 + rng.gen_range(-noise..=noise),
                0.3,
            ));
        }
        for _ in 0..outliers {
            points.push(pt(
                rng.gen_range(-20.0..20.0),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(0.0..6.0),
                0.3,
            ));
        }
        Cloud::new(points)
    }

    #[test]
    fn ground_plane_perfect() {
        let cloud = Cloud::new(vec![
            pt(0.0, 0.0, -1.8, 0.3),
            pt(1.0, 0.0, -1.8, 0.3),
            pt(0.0, 1.0, -1.8, 0.3),
            pt(5.0, -3.0, -1.8, 0.3),
        ]);
        let (plane, kept) = fit_ground_plane(&cloud, 0.1, 100, 7).unwrap();
        assert_relative_eq!(plane.normal, Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-9);
        assert_relative_eq!(plane.d, -1.8, epsilon = 1e-9);
        assert_eq!(kept.len(), cloud.len());
    }

    #[test]
    fn ground_plane_recovers_under_outliers() {
        let cloud = plane_cloud_with_outliers(0.02, 0.3, 21);
        let (plane, _) = fit_ground_plane(&cloud, 0.1, 1000, 42).unwrap();
        let angle = plane.normal.angle(&Vector3::new(0.0, 0.0, 1.0)).to_degrees();
        assert!(angle < 0.5, "normal off by {angle}°");
    }

    #[test]
    fn ground_plane_keeps_points_below() {
        let mut points = vec![
            pt(0.0, 0.0, -1.8, 0.3),
            pt(1.0, 0.0, -1.8, 0.3),
            pt(0.0, 1.0, -1.8, 0.3),
            pt(2.0, 2.0, -1.8, 0.3),
            pt(3.0, 1.0, -1.8, 0.3),
            pt(1.0, 3.0, -1.8, 0.3),
        ];
        points.push(pt(4.0, 0.0, -3.0, 0.3)); // roadside ditch, below plane
    points.push(pt(4.0, 1.0, 0.5, 0.3)); // above: removed
        let cloud = Cloud::new(points);
        let (_, kept) = fit_ground_plane(&cloud, 0.1, 200, 3).unwrap();
        assert_eq!(kept.len(), 7);
        assert!(kept.points.iter().any(|p| p.pos.z == -3.0));
        assert!(!kept.points.iter().any(|p| p.pos.z == 0.5));
    }

    #[test]
    fn ground_plane_degenerate_inputs() {
        let two = Cloud::new(vec![pt(0.0, 0.0, 0.0, 0.1), pt(1.0, 0.0, 0.0, 0.1)]);
        assert!(fit_ground_plane(&two, 0.1, 100, 1).is_err());
        let collinear = Cloud::new(vec![
            pt(0.0, 0.0, 0.0, 0.1),
            pt(1.0, 0.0, 0.0, 0.1),
            pt(2.0, 0.0, 0.0, 0.1),
            pt(3.0, 0.0, 0.0, 0.1),
        ]);
        assert!(fit_ground_plane(&collinear, 0.1, 100, 1).is_err());
    }

    #[test]
    fn ground_plane_deterministic_and_seed_stable() {
        let cloud = plane_cloud_with_outliers(0.02, 0.3, 33);
        let (p1, k1) = fit_ground_plane(&cloud, 0.1, 1000, 5).unwrap();
        let (p2, k2) = fit_ground_plane(&cloud, 0.1, 1000, 5).unwrap();
        assert_eq!(p1.normal, p2.normal);
        assert_eq!(k1, k2);
        // Across seeds the refined normals agree within 1 degree.
        let (p3, _) = fit_ground_plane(&cloud, 0.1, 1000, 999).unwrap();
        assert!(p1.normal.angle(&p3.normal).to_degrees() < 1.0);
    }

    #[test]
    fn radius_outlier_rules() {
        // isolated point removed
        let mut points: Vec<CloudPoint> = (0..10)
            .map(|i| pt(0.02 * i as f64, 0.01 * i as f64, 0.0, 0.3))
            .collect();
        points.push(pt(50.0, 0.0, 0.0, 0.3));
        let cloud = Cloud::new(points);
        let out = remove_radius_outliers(&cloud, 0.5, 3);
        assert_eq!(out.len(), 10);

        // two far-apart points both removed
        let pair = Cloud::new(vec![pt(0.0, 0.0, 0.0, 0.3), pt(10.0, 0.0, 0.0, 0.3)]);
        assert!(remove_radius_outliers(&pair, 0.5, 1).is_empty());
    }

    #[test]
    fn filters_are_idempotent_subsets() {
        let cloud = plane_cloud_with_outliers(0.05, 0.2, 8);
        let once = remove_radius_outliers(&cloud, 0.5, 3);
        let twice = remove_radius_outliers(&once, 0.5, 3);
        assert_eq!(once, twice);
        assert!(once.len() <= cloud.len());

        let hc = crop_height(&cloud, 0.0, 0.5);
        assert_eq!(hc, crop_height(&hc, 0.0, 0.5));
        let rf = filter_reflectivity(&cloud, 0.25);
        assert_eq!(rf, filter_reflectivity(&rf, 0.25));
    }
}
