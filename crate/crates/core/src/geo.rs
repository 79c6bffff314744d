//! Geodetic projection and rigid-frame transforms.
//!
//! Everything downstream of ingestion works in per-segment Euclidean
//! coordinates: GNSS positions go through a conformal transverse Mercator
//! projection whose central meridian sits at the segment origin, and poses
//! are re-expressed relative to the first frame of the segment.
//!
//! Conventions fixed here and used everywhere (including the synthetic
//! oracle):
//! * WGS84 ellipsoid constants live in this module only.
//! * Orientation is intrinsic yaw-pitch-roll (Z, then Y', then X'').
//! * Projection scale factor is 1.0; the origin maps to (0, 0) and
//!   altitude passes through as z.

use nalgebra::{Isometry3, Rotation3, Translation3, UnitQuaternion, Vector2, Vector3};

use crate::error::{Error, Result};

/// WGS84 semi-major axis, meters.
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;

/// Longitude band around the central meridian where the projection is
/// accepted, degrees.
pub const TM_LON_BAND_DEG: f64 = 6.0;

/// A WGS84 geodetic position (degrees, degrees, ellipsoidal meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64, alt: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !lat.is_finite() {
            return Err(Error::Validation(format!("latitude {lat} out of [-90, 90]")));
        }
        if !(-180.0..=180.0).contains(&lon) || !lon.is_finite() {
            return Err(Error::Validation(format!(
                "longitude {lon} out of [-180, 180]"
            )));
        }
        Ok(GeoPoint { lat, lon, alt })
    }
}

/// Rigid transform given as position plus intrinsic Z-Y'-X'' Euler angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    /// Yaw about z, radians.
    pub yaw: f64,
    /// Pitch about the rotated y, radians.
    pub pitch: f64,
    /// Roll about the twice-rotated x, radians.
    pub roll: f64,
}

impl Pose {
    pub fn new(position: Vector3<f64>, yaw: f64, pitch: f64, roll: f64) -> Self {
        Pose {
            position,
            yaw,
            pitch,
            roll,
        }
    }

    pub fn identity() -> Self {
        Pose::new(Vector3::zeros(), 0.0, 0.0, 0.0)
    }

    /// The pose as an isometry mapping local coordinates into the parent frame.
    pub fn isometry(&self) -> Isometry3<f64> {
        // nalgebra's from_euler_angles(r, p, y) builds Rz(y) * Ry(p) * Rx(r),
        // which is exactly intrinsic Z-Y'-X''.
        let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_euler_angles(
            self.roll, self.pitch, self.yaw,
        ));
        Isometry3::from_parts(Translation3::from(self.position), rot)
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.isometry().transform_vector(p) + self.position
    }
}

/// Euclidean frame shared by all frames of one segment.
///
/// The first frame of a segment maps to the identity pose in segment
/// coordinates by construction.
#[derive(Debug, Clone, Copy)]
pub struct SegmentFrameDef {
    /// Pose of the segment origin expressed in the projected plane of
    /// `projection_origin`.
    pub origin_pose: Pose,
    /// Projection origin; equals the GNSS position of the segment's first
    /// frame.
    pub projection_origin: GeoPoint,
}

impl SegmentFrameDef {
    /// Frame definition for a segment whose first frame has the given
    /// geodetic pose. The origin pose position projects to (0, 0, alt).
    pub fn from_first_frame(position: GeoPoint, yaw: f64, pitch: f64, roll: f64) -> Self {
        SegmentFrameDef {
            origin_pose: Pose::new(Vector3::new(0.0, 0.0, position.alt), yaw, pitch, roll),
            projection_origin: position,
        }
    }
}

/// Transform a point from a frame's local coordinates into the segment frame.
///
/// `frame_pose` must be expressed in the same projected plane as
/// `segment_def.origin_pose`; the result is inverse(origin) ∘ frame applied
/// to the point.
pub fn to_segment_frame(
    point: &Vector3<f64>,
    frame_pose: &Pose,
    segment_def: &SegmentFrameDef,
) -> Vector3<f64> {
    let iso = segment_def.origin_pose.isometry().inverse() * frame_pose.isometry();
    iso.transform_point(&(*point).into()).coords
}

/// Inverse of [`to_segment_frame`]: segment coordinates back to the frame's
/// local coordinates.
pub fn from_segment_frame(
    point: &Vector3<f64>,
    frame_pose: &Pose,
    segment_def: &SegmentFrameDef,
) -> Vector3<f64> {
    let iso = frame_pose.isometry().inverse() * segment_def.origin_pose.isometry();
    iso.transform_point(&(*point).into()).coords
}

// --------------------------------------------------------------------------
// Transverse Mercator (Krüger series, 6th order in the third flattening)
// --------------------------------------------------------------------------

struct TmConstants {
    /// Rectifying radius.
    radius: f64,
    alpha: [f64; 6],
    beta: [f64; 6],
    /// First eccentricity.
    e: f64,
}

fn tm_constants() -> TmConstants {
    let n = WGS84_F / (2.0 - WGS84_F);
    let n2 = n * n;
    let n3 = n2 * n;
    let n4 = n3 * n;
    let n5 = n4 * n;
    let n6 = n5 * n;

    let radius = WGS84_A / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0 + n6 / 256.0);

    let alpha = [
        n / 2.0 - 2.0 / 3.0 * n2 + 5.0 / 16.0 * n3 + 41.0 / 180.0 * n4 - 127.0 / 288.0 * n5
            + 7891.0 / 37800.0 * n6,
        13.0 / 48.0 * n2 - 3.0 / 5.0 * n3 + 557.0 / 1440.0 * n4 + 281.0 / 630.0 * n5
            - 1_983_433.0 / 1_935_360.0 * n6,
        61.0 / 240.0 * n3 - 103.0 / 140.0 * n4 + 15061.0 / 26880.0 * n5
            + 167_603.0 / 181_440.0 * n6,
        49561.0 / 161_280.0 * n4 - 179.0 / 168.0 * n5 + 6_601_661.0 / 7_257_600.0 * n6,
        34729.0 / 80640.0 * n5 - 3_418_889.0 / 1_995_840.0 * n6,
        212_378_941.0 / 319_334_400.0 * n6,
    ];
    let beta = [
        n / 2.0 - 2.0 / 3.0 * n2 + 37.0 / 96.0 * n3 - 1.0 / 360.0 * n4 - 81.0 / 512.0 * n5
            + 96199.0 / 604_800.0 * n6,
        1.0 / 48.0 * n2 + 1.0 / 15.0 * n3 - 437.0 / 1440.0 * n4 + 46.0 / 105.0 * n5
            - 1_118_711.0 / 3_870_720.0 * n6,
        17.0 / 480.0 * n3 - 37.0 / 840.0 * n4 - 209.0 / 4480.0 * n5 + 5569.0 / 90720.0 * n6,
        4397.0 / 161_280.0 * n4 - 11.0 / 504.0 * n5 - 830_251.0 / 7_257_600.0 * n6,
        4583.0 / 161_280.0 * n5 - 108_847.0 / 3_991_680.0 * n6,
        20_648_693.0 / 638_668_800.0 * n6,
    ];

    TmConstants {
        radius,
        alpha,
        beta,
        e: (WGS84_F * (2.0 - WGS84_F)).sqrt(),
    }
}

/// Gauss-Schreiber coordinates of a point for a given central meridian.
fn tm_xi_eta(lat_rad: f64, dlon_rad: f64, c: &TmConstants) -> (f64, f64) {
    let sin_lat = lat_rad.sin();
    // Conformal latitude via tau' = sinh(asinh-style expression).
    let t = (sin_lat.atanh() - c.e * (c.e * sin_lat).atanh()).sinh();
    let xi_p = t.atan2(dlon_rad.cos());
    let eta_p = (dlon_rad.sin() / t.hypot(dlon_rad.cos())).asinh();

    let mut xi = xi_p;
    let mut eta = eta_p;
    for (j, a) in c.alpha.iter().enumerate() {
        let k = 2.0 * (j as f64 + 1.0);
        xi += a * (k * xi_p).sin() * (k * eta_p).cosh();
        eta += a * (k * xi_p).cos() * (k * eta_p).sinh();
    }
    (xi, eta)
}

/// Meridian northing of a latitude (distance from the equator along the
/// central meridian in projected coordinates).
fn tm_meridian_northing(lat_rad: f64, c: &TmConstants) -> f64 {
    let (xi, _) = tm_xi_eta(lat_rad, 0.0, c);
    c.radius * xi
}

/// Conformal transverse Mercator projection with central meridian at
/// `origin.lon`, scale 1.0, false easting/northing such that `origin` maps
/// to (0, 0). Altitude passes through as z.
pub fn project_tm(p: &GeoPoint, origin: &GeoPoint) -> Result<Vector3<f64>> {
    let dlon = p.lon - origin.lon;
    if dlon.abs() >= TM_LON_BAND_DEG {
        return Err(Error::ProjectionDomain(format!(
            "longitude {} is {}° from central meridian {} (band ±{}°)",
            p.lon,
            dlon.abs(),
            origin.lon,
            TM_LON_BAND_DEG
        )));
    }
    let c = tm_constants();
    let (xi, eta) = tm_xi_eta(p.lat.to_radians(), dlon.to_radians(), &c);
    let x = c.radius * eta;
    let y = c.radius * xi - tm_meridian_northing(origin.lat.to_radians(), &c);
    Ok(Vector3::new(x, y, p.alt))
}

/// Inverse of [`project_tm`].
pub fn unproject_tm(xy: &Vector2<f64>, alt: f64, origin: &GeoPoint) -> Result<GeoPoint> {
    let c = tm_constants();
    let xi = (xy.y + tm_meridian_northing(origin.lat.to_radians(), &c)) / c.radius;
    let eta = xy.x / c.radius;

    let mut xi_p = xi;
    let mut eta_p = eta;
    for (j, b) in c.beta.iter().enumerate() {
        let k = 2.0 * (j as f64 + 1.0);
        xi_p -= b * (k * xi).sin() * (k * eta).cosh();
        eta_p -= b * (k * xi).cos() * (k * eta).sinh();
    }

    // Conformal latitude, then Newton on the conformal-latitude relation.
    let chi = (xi_p.sin() / eta_p.cosh()).asin();
    let e2 = c.e * c.e;
    let mut lat = chi
        + (e2 / 2.0 + 5.0 * e2 * e2 / 24.0 + e2 * e2 * e2 / 12.0) * (2.0 * chi).sin()
        + (7.0 * e2 * e2 / 48.0 + 29.0 * e2 * e2 * e2 / 240.0) * (4.0 * chi).sin()
        + (7.0 * e2 * e2 * e2 / 120.0) * (6.0 * chi).sin();
    for _ in 0..3 {
        let s = lat.sin();
        let chi_of = (s.atanh() - c.e * (c.e * s).atanh()).tanh().asin();
        let dchi = (1.0 - e2) * chi_of.cos() / (lat.cos() * (1.0 - e2 * s * s));
        lat += (chi - chi_of) / dchi;
    }

    let lon = origin.lon + eta_p.sinh().atan2(xi_p.cos()).to_degrees();
    GeoPoint::new(lat.to_degrees(), lon, alt)
}

// --------------------------------------------------------------------------
// Geodesic distance (Vincenty inverse)
// --------------------------------------------------------------------------

/// Geodesic distance between two points on the WGS84 ellipsoid, meters.
pub fn geodesic_distance(p1: &GeoPoint, p2: &GeoPoint) -> f64 {
    let b = WGS84_A * (1.0 - WGS84_F);
    let u1 = ((1.0 - WGS84_F) * p1.lat.to_radians().tan()).atan();
    let u2 = ((1.0 - WGS84_F) * p2.lat.to_radians().tan()).atan();
    let l = (p2.lon - p1.lon).to_radians();
    let (su1, cu1) = u1.sin_cos();
    let (su2, cu2) = u2.sin_cos();

    let mut lambda = l;
    let mut iterations = 0;
    let (sin_sigma, cos_sigma, sigma, cos_sq_alpha, cos_2sm) = loop {
        let (sl, cl) = lambda.sin_cos();
        let sin_sigma =
            ((cu2 * sl).powi(2) + (cu1 * su2 - su1 * cu2 * cl).powi(2)).sqrt();
        if sin_sigma == 0.0 {
            return 0.0; // coincident points
        }
        let cos_sigma = su1 * su2 + cu1 * cu2 * cl;
        let sigma = sin_sigma.atan2(cos_sigma);
        let sin_alpha = cu1 * cu2 * sl / sin_sigma;
        let cos_sq_alpha = 1.0 - sin_alpha * sin_alpha;
        let cos_2sm = if cos_sq_alpha.abs() < 1e-15 {
            0.0 // equatorial line
        } else {
            cos_sigma - 2.0 * su1 * su2 / cos_sq_alpha
        };
        let c = WGS84_F / 16.0 * cos_sq_alpha * (4.0 + WGS84_F * (4.0 - 3.0 * cos_sq_alpha));
        let lambda_new = l
            + (1.0 - c)
                * WGS84_F
                * sin_alpha
                * (sigma
                    + c * sin_sigma
                        * (cos_2sm + c * cos_sigma * (-1.0 + 2.0 * cos_2sm * cos_2sm)));
        let delta = (lambda_new - lambda).abs();
        lambda = lambda_new;
        iterations += 1;
        if delta < 1e-13 || iterations > 200 {
            break (sin_sigma, cos_sigma, sigma, cos_sq_alpha, cos_2sm);
        }
    };

    let u_sq = cos_sq_alpha * (WGS84_A * WGS84_A - b * b) / (b * b);
    let a_coef = 1.0 + u_sq / 16384.0 * (4096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)));
    let b_coef = u_sq / 1024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)));
    let delta_sigma = b_coef
        * sin_sigma
        * (cos_2sm
            + b_coef / 4.0
                * (cos_sigma * (-1.0 + 2.0 * cos_2sm * cos_2sm)
                    - b_coef / 6.0
                        * cos_2sm
                        * (-3.0 + 4.0 * sin_sigma * sin_sigma)
                        * (-3.0 + 4.0 * cos_2sm * cos_2sm)));
    b * a_coef * (sigma - delta_sigma)
}
