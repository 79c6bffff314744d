//! Least-squares fits from reference polylines to OpenDRIVE records.
//!
//! The plan-view fit is a weighted parametric cubic over a chord-length
//! parameter: segment joints were aligned beforehand, so the first and
//! last points carry extra weight to keep the joints tight. Elevation and
//! superelevation are plain unweighted cubics.

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::xodr::{CubicRecord, GeometryElement, Shape};

/// Weighted least-squares parametric cubic through a polyline.
///
/// The element's local frame is anchored at the first point with the
/// heading chosen so the fitted curve starts tangent-aligned (bV = 0);
/// its length is the numeric arc length of the fitted curve.
pub fn fit_parampoly3(points: &[Vector3<f64>], endpoint_weight: f64) -> Result<GeometryElement> {
    let n = points.len();
    if n < 4 {
        return Err(Error::Fit(format!(
            "parametric cubic needs >= 4 points, got {n}"
        )));
    }

    // Chord-length parameterization over [0, 1].
    let mut params = Vec::with_capacity(n);
    let mut acc = 0.0;
    params.push(0.0);
    for pair in points.windows(2) {
        acc += (pair[1].xy() - pair[0].xy()).norm();
        params.push(acc);
    }
    if acc < 1e-9 {
        return Err(Error::Fit("polyline has zero extent".into()));
    }
    for p in &mut params {
        *p /= acc;
    }

    // Provisional frame: origin at the first point, u along the chord.
    let origin = points[0].xy();
    let chord = points[n - 1].xy() - origin;
    if chord.norm() < 1e-9 {
        return Err(Error::Fit("polyline start and end coincide".into()));
    }
    let chord_hdg = chord.y.atan2(chord.x);
    let (sin_h, cos_h) = chord_hdg.sin_cos();

    // Normal equations for u(p) = b p + c p^2 + d p^3 (and v likewise).
    let mut ata = Matrix3::zeros();
    let mut atu = Vector3::zeros();
    let mut atv = Vector3::zeros();
    for (point, &p) in points.iter().zip(&params) {
        let w = if p == 0.0 || p == 1.0 {
            endpoint_weight
        } else {
            1.0
        };
        let rel = point.xy() - origin;
        let u = cos_h * rel.x + sin_h * rel.y;
        let v = -sin_h * rel.x + cos_h * rel.y;
        let basis = Vector3::new(p, p * p, p * p * p);
        ata += w * basis * basis.transpose();
        atu += w * basis * u;
        atv += w * basis * v;
    }
    let decomp = ata.lu();
    let cu = decomp
        .solve(&atu)
        .ok_or_else(|| Error::Fit("rank-deficient normal equations".into()))?;
    let cv = decomp
        .solve(&atv)
        .ok_or_else(|| Error::Fit("rank-deficient normal equations".into()))?;

    // Rotate the local frame so the fitted tangent at p = 0 defines the
    // heading, making bV exactly zero.
    let theta = cv[0].atan2(cu[0]);
    let (sin_t, cos_t) = theta.sin_cos();
    let rot = |a: f64, b: f64| (cos_t * a + sin_t * b, -sin_t * a + cos_t * b);
    let (bu, _) = rot(cu[0], cv[0]);
    let (cu2, cv2) = rot(cu[1], cv[1]);
    let (du2, dv2) = rot(cu[2], cv[2]);

    let shape = Shape::ParamPoly3 {
        au: 0.0,
        bu,
        cu: cu2,
        du: du2,
        av: 0.0,
        bv: 0.0,
        cv: cv2,
        dv: dv2,
    };
    let speed = |p: f64| {
        let dudp = bu + 2.0 * cu2 * p + 3.0 * du2 * p * p;
        let dvdp = 2.0 * cv2 * p + 3.0 * dv2 * p * p;
        (dudp * dudp + dvdp * dvdp).sqrt()
    };
    let length = adaptive_simpson(&speed, 0.0, 1.0, 1e-9 * acc.max(1.0), 40);

    Ok(GeometryElement {
        s: 0.0,
        x: points[0].x,
        y: points[0].y,
        hdg: chord_hdg + theta,
        length,
        shape,
    })
}

/// Evaluate a parametric cubic element at normalized parameter p, in
/// inertial coordinates.
pub fn eval_parampoly3(elem: &GeometryElement, p: f64) -> Vector2<f64> {
    let Shape::ParamPoly3 {
        au,
        bu,
        cu,
        du,
        av,
        bv,
        cv,
        dv,
    } = elem.shape
    else {
        panic!("not a parametric cubic");
    };
    let u = au + bu * p + cu * p * p + du * p * p * p;
    let v = av + bv * p + cv * p * p + dv * p * p * p;
    let (sin_h, cos_h) = elem.hdg.sin_cos();
    Vector2::new(
        elem.x + u * cos_h - v * sin_h,
        elem.y + u * sin_h + v * cos_h,
    )
}

/// Adaptive Simpson quadrature.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, depth)
}

/// Unweighted least-squares cubic z(s); the abscissa is normalized
/// internally to keep the normal equations conditioned.
pub fn fit_cubic(s: &[f64], z: &[f64]) -> Result<CubicRecord> {
    if s.len() != z.len() || s.len() < 2 {
        return Err(Error::Fit("cubic fit needs matched samples".into()));
    }
    let span = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - s.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = if span > 1e-9 { span } else { 1.0 };
    let s0 = s.iter().cloned().fold(f64::INFINITY, f64::min);

    // With fewer than 4 samples fall back to lower polynomial degrees.
    let degree = (s.len() - 1).min(3);
    let m = degree + 1;
    let mut ata = DMatrix::zeros(m, m);
    let mut atz = DVector::zeros(m);
    for (&si, &zi) in s.iter().zip(z) {
        let x = (si - s0) / scale;
        let mut basis = DVector::zeros(m);
        let mut acc = 1.0;
        for k in 0..m {
            basis[k] = acc;
            acc *= x;
        }
        ata += &basis * basis.transpose();
        atz += &basis * zi;
    }
    let sol = ata
        .lu()
        .solve(&atz)
        .ok_or_else(|| Error::Fit("rank-deficient cubic fit".into()))?;

    // Rescale from normalized x back to ds = si - s0.
    let mut coeffs = [0.0; 4];
    for k in 0..m {
        coeffs[k] = sol[k] / scale.powi(k as i32);
    }
    Ok(CubicRecord {
        s: 0.0,
        a: coeffs[0],
        b: coeffs[1],
        c: coeffs[2],
        d: coeffs[3],
    })
}

/// Elevation cubic from the polyline plus an optional superelevation cubic
/// from lateral marker samples (position, lateral offset left-positive).
/// The joint model is z(s, t) = E(s) + t·G(s); the returned superelevation
/// holds G, the cross-road slope.
pub fn fit_elevation(
    polyline: &[Vector3<f64>],
    lateral_samples: &[(Vector3<f64>, f64)],
) -> Result<(CubicRecord, Option<CubicRecord>)> {
    if polyline.len() < 2 {
        return Err(Error::Fit("elevation fit needs a polyline".into()));
    }
    let mut stations = Vec::with_capacity(polyline.len());
    let mut acc = 0.0;
    stations.push(0.0);
    for pair in polyline.windows(2) {
        acc += (pair[1].xy() - pair[0].xy()).norm();
        stations.push(acc);
    }
    let zs: Vec<f64> = polyline.iter().map(|p| p.z).collect();
    let elevation = fit_cubic(&stations, &zs)?;

    let superelevation = fit_superelevation(polyline, &stations, lateral_samples);
    Ok((elevation, superelevation))
}

fn station_of(polyline: &[Vector3<f64>], stations: &[f64], p: &Vector3<f64>) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    for (i, pair) in polyline.windows(2).enumerate() {
        let a = pair[0].xy();
        let b = pair[1].xy();
        let ab = b - a;
        let len2 = ab.norm_squared();
        if len2 < 1e-18 {
            continue;
        }
        let u = ((p.xy() - a).dot(&ab) / len2).clamp(0.0, 1.0);
        let d = (p.xy() - (a + ab * u)).norm();
        if d < best.0 {
            best = (d, stations[i] + u * len2.sqrt());
        }
    }
    best.1
}

fn fit_superelevation(
    polyline: &[Vector3<f64>],
    stations: &[f64],
    samples: &[(Vector3<f64>, f64)],
) -> Option<CubicRecord> {
    if samples.len() < 8 {
        return None;
    }
    let t_min = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let t_max = samples
        .iter()
        .map(|s| s.1)
        .fold(f64::NEG_INFINITY, f64::max);
    if t_max - t_min < 0.5 {
        return None; // all markers on one line: no cross slope observable
    }

    let span = stations.last().copied().unwrap_or(1.0).max(1.0);
    // z = E(s) + t G(s), both cubic in s/span: 8 unknowns.
    let mut ata = DMatrix::zeros(8, 8);
    let mut atz = DVector::zeros(8);
    for (pos, t) in samples {
        let x = station_of(polyline, stations, pos) / span;
        let mut basis = DVector::zeros(8);
        let mut acc = 1.0;
        for k in 0..4 {
            basis[k] = acc;
            basis[4 + k] = t * acc;
            acc *= x;
        }
        ata += &basis * basis.transpose();
        atz += &basis * pos.z;
    }
    let sol = ata.lu().solve(&atz)?;
    Some(CubicRecord {
        s: 0.0,
        a: sol[4],
        b: sol[5] / span,
        c: sol[6] / span.powi(2),
        d: sol[7] / span.powi(3),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn straight_line_fit_is_degenerate_cubic() {
        let points: Vec<Vector3<f64>> = (0..=20)
            .map(|i| Vector3::new(i as f64 * 5.0, 0.0, 0.0))
            .collect();
        let elem = fit_parampoly3(&points, 10.0).unwrap();
        let Shape::ParamPoly3 {
            au,
            bu,
            cu,
            du,
            av,
            bv,
            cv,
            dv,
        } = elem.shape
        else {
            panic!()
        };
        assert_eq!(au, 0.0);
        assert_eq!(av, 0.0);
        assert_eq!(bv, 0.0);
        assert_relative_eq!(bu, 100.0, epsilon = 1e-6);
        for c in [cu, du, cv, dv] {
            assert!(c.abs() < 1e-6, "coefficient {c} not negligible");
        }
        assert_relative_eq!(elem.length, 100.0, epsilon = 1e-6);
        assert_relative_eq!(elem.hdg, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn arc_fit_stays_within_centimeter() {
        // 100 m of a radius-500 circle.
        let r: f64 = 500.0;
        let points: Vec<Vector3<f64>> = (0..=50)
            .map(|i| {
                let s = i as f64 * 2.0;
                let a = s / r;
                Vector3::new(r * a.sin(), r * (1.0 - a.cos()), 0.0)
            })
            .collect();
        let elem = fit_parampoly3(&points, 10.0).unwrap();
        // max deviation of the fitted curve from the true circle
        let mut max_dev: f64 = 0.0;
        for k in 0..=1000 {
            let p = k as f64 / 1000.0;
            let xy = eval_parampoly3(&elem, p);
            let center_dist = (xy - Vector2::new(0.0, r)).norm();
            max_dev = max_dev.max((center_dist - r).abs());
        }
        assert!(max_dev < 0.01, "deviation {max_dev} m");
        assert_relative_eq!(elem.length, 100.0, epsilon = 1e-3);
    }

    #[test]
    fn endpoint_weighting_bounds_endpoint_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut weighted_ok = 0;
        let mut unweighted_violations = 0;
        let trials = 200;
        for _ in 0..trials {
            // random gentle cubic-ish road stretch plus noise
            let c: f64 = rng.gen_range(-1e-4..1e-4);
            let d: f64 = rng.gen_range(-1e-6..1e-6);
            let len: f64 = rng.gen_range(100.0..400.0);
            let count = 12;
            let points: Vec<Vector3<f64>> = (0..count)
                .map(|i| {
                    let x = i as f64 / (count - 1) as f64 * len;
                    let y = c * x * x + d * x * x * x + rng.gen_range(-0.02..0.02);
                    Vector3::new(x, y, 0.0)
                })
                .collect();
            // residual of each sample at its chord parameter
            let residuals = |elem: &GeometryElement| -> Vec<f64> {
                let mut params = Vec::with_capacity(points.len());
                let mut acc = 0.0;
                params.push(0.0);
                for pair in points.windows(2) {
                    acc += (pair[1].xy() - pair[0].xy()).norm();
                    params.push(acc);
                }
                points
                    .iter()
                    .zip(&params)
                    .map(|(pt, &p)| (eval_parampoly3(elem, p / acc) - pt.xy()).norm())
                    .collect()
            };
            let weighted = fit_parampoly3(&points, 10.0).unwrap();
            let res_w = residuals(&weighted);
            let interior_max = res_w[1..res_w.len() - 1]
                .iter()
                .cloned()
                .fold(0.0f64, f64::max);
            if res_w[0] <= interior_max && res_w[res_w.len() - 1] <= interior_max {
                weighted_ok += 1;
            }
            let unweighted = fit_parampoly3(&points, 1.0).unwrap();
            let res_u = residuals(&unweighted);
            let interior_max_u = res_u[1..res_u.len() - 1]
                .iter()
                .cloned()
                .fold(0.0f64, f64::max);
            if res_u[0] > interior_max_u || res_u[res_u.len() - 1] > interior_max_u {
                unweighted_violations += 1;
            }
        }
        assert_eq!(weighted_ok, trials, "endpoint weighting must always hold");
        assert!(
            unweighted_violations > 0,
            "the unweighted fit should violate the endpoint bound somewhere"
        );
    }

    #[test]
    fn too_few_points_is_a_fit_error() {
        let points = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(2.0, 0.0, 0.0),
        ];
        assert!(matches!(
            fit_parampoly3(&points, 10.0),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn flat_polyline_gives_zero_elevation() {
        let points: Vec<Vector3<f64>> = (0..=10)
            .map(|i| Vector3::new(i as f64 * 10.0, 0.0, 0.0))
            .collect();
        let (elev, sup) = fit_elevation(&points, &[]).unwrap();
        for v in [elev.a, elev.b, elev.c, elev.d] {
            assert!(v.abs() < 1e-9);
        }
        assert!(sup.is_none());
    }

    #[test]
    fn constant_grade_recovered() {
        let points: Vec<Vector3<f64>> = (0..=20)
            .map(|i| {
                let s = i as f64 * 10.0;
                Vector3::new(s, 0.0, 0.02 * s)
            })
            .collect();
        let (elev, _) = fit_elevation(&points, &[]).unwrap();
        assert_relative_eq!(elev.b, 0.02, epsilon = 1e-9);
        assert!(elev.c.abs() < 1e-12 && elev.d.abs() < 1e-12);
    }

    #[test]
    fn superelevation_from_two_marker_lines() {
        // 2% cross slope: left markers higher than right.
        let slope = 0.02;
        let polyline: Vec<Vector3<f64>> = (0..=20)
            .map(|i| Vector3::new(i as f64 * 10.0, 0.0, 0.0))
            .collect();
        let mut samples = Vec::new();
        for i in 0..=20 {
            let x = i as f64 * 10.0;
            for t in [-1.875, 1.875] {
                samples.push((Vector3::new(x, t, slope * t), t));
            }
        }
        let (_, sup) = fit_elevation(&polyline, &samples).unwrap();
        let sup = sup.expect("superelevation observable from two lines");
        assert_relative_eq!(sup.a, slope, epsilon = 1e-9);
        assert!(sup.b.abs() < 1e-12);
    }

    #[test]
    fn single_line_omits_superelevation() {
        let polyline: Vec<Vector3<f64>> = (0..=20)
            .map(|i| Vector3::new(i as f64 * 10.0, 0.0, 0.0))
            .collect();
        let samples: Vec<(Vector3<f64>, f64)> = (0..=20)
            .map(|i| (Vector3::new(i as f64 * 10.0, 1.875, 0.03), 1.875))
            .collect();
        let (_, sup) = fit_elevation(&polyline, &samples).unwrap();
        assert!(sup.is_none());
    }
}
