//! Recorded-drive and regulation-profile ingestion.
//!
//! Drives come as two flat CSV files: `frames.csv` holds one row per LiDAR
//! return (`frame_id,t,x,y,z,refl`), `poses.csv` one row per frame
//! (`frame_id,t,lat,lon,alt,yaw,pitch,roll`, angles in radians). The two
//! are joined on `frame_id`; frames without a pose are dropped and counted.

use std::collections::BTreeMap;
use std::path::Path;

use crate::config::parse_ini;
use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::osm::RoadType;

/// One LiDAR return in the sensor frame. Reflectivity is normalized to
/// [0, 1]; out-of-range input is rejected at load time, never clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub reflectivity: f64,
}

/// Geodetic pose of the sensor for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPose {
    pub position: GeoPoint,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

/// One LiDAR sweep with its synchronized pose.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame_id: u64,
    /// Seconds, strictly increasing with frame id within a recording.
    pub t: f64,
    pub points: Vec<LidarPoint>,
    pub pose_geo: GeoPose,
}

/// Counters produced while loading a recording.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    /// Frames dropped because no pose row shared their frame id.
    pub dropped_without_pose: usize,
}

/// Load and join a recording. Frames are returned sorted by time.
pub fn load_recording(frames_path: &Path, poses_path: &Path) -> Result<(Vec<Frame>, LoadStats)> {
    let poses = load_poses(poses_path)?;
    let points = load_points(frames_path)?;

    let mut stats = LoadStats::default();
    let mut frames = Vec::new();
    for (frame_id, pts) in points {
        match poses.get(&frame_id) {
            Some(&(t, pose_geo)) => frames.push(Frame {
                frame_id,
                t,
                points: pts,
                pose_geo,
            }),
            None => stats.dropped_without_pose += 1,
        }
    }
    frames.sort_by(|a, b| a.t.total_cmp(&b.t));

    // t must increase strictly with frame id.
    let mut by_id: Vec<&Frame> = frames.iter().collect();
    by_id.sort_by_key(|f| f.frame_id);
    for pair in by_id.windows(2) {
        if pair[1].t <= pair[0].t {
            return Err(Error::Validation(format!(
                "frame {} (t = {}) does not advance time over frame {} (t = {})",
                pair[1].frame_id, pair[1].t, pair[0].frame_id, pair[0].t
            )));
        }
    }
    Ok((frames, stats))
}

fn load_points(path: &Path) -> Result<BTreeMap<u64, Vec<LidarPoint>>> {
    let file_label = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let mut out: BTreeMap<u64, Vec<LidarPoint>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            Error::parse(&file_label, e.position().map_or(0, |p| p.line()), e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 6 {
            return Err(Error::parse(&file_label, line, "expected 6 fields"));
        }
        let frame_id: u64 = parse_field(&record[0], "frame_id", &file_label, line)?;
        let _t: f64 = parse_field(&record[1], "t", &file_label, line)?;
        let x: f64 = parse_field(&record[2], "x", &file_label, line)?;
        let y: f64 = parse_field(&record[3], "y", &file_label, line)?;
        let z: f64 = parse_field(&record[4], "z", &file_label, line)?;
        let reflectivity: f64 = parse_field(&record[5], "refl", &file_label, line)?;
        if !(0.0..=1.0).contains(&reflectivity) {
            return Err(Error::Validation(format!(
                "{file_label} line {line}: reflectivity {reflectivity} outside [0, 1]"
            )));
        }
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(Error::Validation(format!(
                "{file_label} line {line}: non-finite coordinate"
            )));
        }
        out.entry(frame_id).or_default().push(LidarPoint {
            x,
            y,
            z,
            reflectivity,
        });
    }
    Ok(out)
}

fn load_poses(path: &Path) -> Result<BTreeMap<u64, (f64, GeoPose)>> {
    let file_label = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let mut out = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            Error::parse(&file_label, e.position().map_or(0, |p| p.line()), e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 8 {
            return Err(Error::parse(&file_label, line, "expected 8 fields"));
        }
        let frame_id: u64 = parse_field(&record[0], "frame_id", &file_label, line)?;
        let t: f64 = parse_field(&record[1], "t", &file_label, line)?;
        let lat: f64 = parse_field(&record[2], "lat", &file_label, line)?;
        let lon: f64 = parse_field(&record[3], "lon", &file_label, line)?;
        let alt: f64 = parse_field(&record[4], "alt", &file_label, line)?;
        let yaw: f64 = parse_field(&record[5], "yaw", &file_label, line)?;
        let pitch: f64 = parse_field(&record[6], "pitch", &file_label, line)?;
        let roll: f64 = parse_field(&record[7], "roll", &file_label, line)?;
        out.insert(
            frame_id,
            (
                t,
                GeoPose {
                    position: GeoPoint::new(lat, lon, alt)?,
                    yaw,
                    pitch,
                    roll,
                },
            ),
        );
    }
    Ok(out)
}

fn parse_field<T: std::str::FromStr>(s: &str, name: &str, file: &str, line: u64) -> Result<T> {
    s.trim()
        .parse::<T>()
        .map_err(|_| Error::parse(file, line, format!("field `{name}` unparseable: `{s}`")))
}

/// Write a recording in the exact format [`load_recording`] reads.
/// Floats are printed with shortest round-trip precision, so a load →
/// write → load cycle is lossless.
pub fn write_recording(frames: &[Frame], frames_path: &Path, poses_path: &Path) -> Result<()> {
    use std::io::Write;
    let mut fw = std::io::BufWriter::new(
        std::fs::File::create(frames_path).map_err(|e| Error::io(frames_path, e))?,
    );
    writeln!(fw, "frame_id,t,x,y,z,refl").map_err(|e| Error::io(frames_path, e))?;
    for frame in frames {
        for p in &frame.points {
            writeln!(
                fw,
                "{},{},{},{},{},{}",
                frame.frame_id, frame.t, p.x, p.y, p.z, p.reflectivity
            )
            .map_err(|e| Error::io(frames_path, e))?;
        }
    }
    fw.flush().map_err(|e| Error::io(frames_path, e))?;

    let mut pw = std::io::BufWriter::new(
        std::fs::File::create(poses_path).map_err(|e| Error::io(poses_path, e))?,
    );
    writeln!(pw, "frame_id,t,lat,lon,alt,yaw,pitch,roll").map_err(|e| Error::io(poses_path, e))?;
    for frame in frames {
        let g = &frame.pose_geo;
        writeln!(
            pw,
            "{},{},{},{},{},{},{},{}",
            frame.frame_id,
            frame.t,
            g.position.lat,
            g.position.lon,
            g.position.alt,
            g.yaw,
            g.pitch,
            g.roll
        )
        .map_err(|e| Error::io(poses_path, e))?;
    }
    pw.flush().map_err(|e| Error::io(poses_path, e))?;
    Ok(())
}

// --------------------------------------------------------------------------
// Regulation profiles
// --------------------------------------------------------------------------

/// Per-country, per-road-type lane marking regulations.
#[derive(Debug, Clone, PartialEq)]
pub struct RegulationProfile {
    pub country: String,
    pub road_type: RoadType,
    /// Painted length of a single dashed marking, meters.
    pub dash_length: f64,
    /// Distance between consecutive dash centers, meters.
    pub dash_center_spacing: f64,
    pub lane_width: f64,
    pub shoulder_width: f64,
}

impl RegulationProfile {
    /// Built-in German highway rule set.
    pub fn german_highway() -> Self {
        parse_regulations(DEFAULT_REGULATIONS, "builtin", "DE", RoadType::Highway)
            .expect("builtin profile is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.dash_length <= 0.0
            || self.lane_width <= 0.0
            || self.shoulder_width <= 0.0
            || self.dash_center_spacing <= 0.0
        {
            return Err(Error::Config("regulation lengths must be positive".into()));
        }
        if self.dash_center_spacing <= self.dash_length {
            return Err(Error::Config(
                "dash_center_spacing must exceed dash_length".into(),
            ));
        }
        Ok(())
    }
}

/// Built-in profiles; a file passed on the command line overrides these.
/// The 18 m dash center spacing is the 6 m painted dash plus the 12 m gap.
pub const DEFAULT_REGULATIONS: &str = "\
[DE.highway]
dash_length = 6.0
dash_center_spacing = 18.0
lane_width = 3.75
shoulder_width = 2.5
boundary_marking = solid
reference_line_rule = middle_of_left_lane

[DE.entry_exit]
dash_length = 6.0
dash_center_spacing = 18.0
lane_width = 3.75
shoulder_width = 2.5
boundary_marking = solid
reference_line_rule = middle_of_left_lane

[DE.other]
dash_length = 4.0
dash_center_spacing = 12.0
lane_width = 3.5
shoulder_width = 2.0
boundary_marking = solid
reference_line_rule = middle_of_left_lane
";

/// Load the profile for (country, road type) from a regulations file.
pub fn load_regulations(path: &Path, country: &str, road_type: RoadType) -> Result<RegulationProfile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_regulations(&text, &path.display().to_string(), country, road_type)
}

pub fn parse_regulations(
    text: &str,
    file: &str,
    country: &str,
    road_type: RoadType,
) -> Result<RegulationProfile> {
    let doc = parse_ini(text, file)?;
    let key = format!("{}.{}", country, road_type.as_str());
    let section = doc.get(&key).ok_or_else(|| {
        Error::Config(format!("no regulation profile for `{key}` in {file}"))
    })?;
    let get = |k: &str| -> Result<f64> {
        section
            .get(k)
            .ok_or_else(|| Error::Config(format!("profile `{key}` misses key `{k}`")))?
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("profile `{key}` key `{k}` is not a number")))
    };
    let profile = RegulationProfile {
        country: country.to_string(),
        road_type,
        dash_length: get("dash_length")?,
        dash_center_spacing: get("dash_center_spacing")?,
        lane_width: get("lane_width")?,
        shoulder_width: get("shoulder_width")?,
    };
    profile.validate()?;
    Ok(profile)
}
