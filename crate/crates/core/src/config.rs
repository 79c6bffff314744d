//! Pipeline configuration and the shared INI-style file format.
//!
//! Both the pipeline config and the regulation profiles use the same flat
//! `key = value` format under `[section]` headers. Numeric fields are
//! decimal with at least 6 significant digits.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Parsed INI document: section name → key → value.
pub type IniDoc = BTreeMap<String, BTreeMap<String, String>>;

/// Parse an INI-style document. Lines starting with `#` or `;` are
/// comments; keys outside any section go into the unnamed section "".
pub fn parse_ini(text: &str, file: &str) -> Result<IniDoc> {
    let mut doc: IniDoc = BTreeMap::new();
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = idx as u64 + 1;
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::parse(file, lineno, "unterminated section header"))?;
            section = name.trim().to_string();
            doc.entry(section.clone()).or_default();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(file, lineno, "expected `key = value`"))?;
        doc.entry(section.clone())
            .or_default()
            .insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(doc)
}

fn get_f64(section: &BTreeMap<String, String>, key: &str, default: f64) -> Result<f64> {
    match section.get(key) {
        Some(v) => v
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("key `{key}` is not a number: `{v}`"))),
        None => Ok(default),
    }
}

fn get_usize(section: &BTreeMap<String, String>, key: &str, default: usize) -> Result<usize> {
    match section.get(key) {
        Some(v) => v
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("key `{key}` is not an integer: `{v}`"))),
        None => Ok(default),
    }
}

fn get_u64(section: &BTreeMap<String, String>, key: &str, default: u64) -> Result<u64> {
    match section.get(key) {
        Some(v) => v
            .parse::<u64>()
            .map_err(|_| Error::Config(format!("key `{key}` is not an integer: `{v}`"))),
        None => Ok(default),
    }
}

/// All scalar knobs of the pipeline. Loaded from a `[pipeline]` section.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Initial reflectivity filter threshold, fraction of full scale.
    pub reflectivity_start: f64,
    /// Decrement applied on each adaptive retry.
    pub reflectivity_step: f64,
    /// Lowest threshold the adaptive loop may reach.
    pub reflectivity_floor: f64,
    /// Increment of the chain search distance, meters.
    pub chain_step: f64,
    /// Chain search range as a multiple of the regulatory dash spacing.
    pub chain_max_factor: f64,
    /// Chain fusion range as a multiple of the regulatory dash spacing.
    pub fuse_max_factor: f64,
    /// Clusters longer than this are treated as solid markings, meters.
    pub split_threshold: f64,
    /// Window size the solid clusters are split into, meters.
    pub split_part: f64,
    /// Revisits of an edge closer in time than this merge, hours.
    pub revisit_window: f64,
    /// Maximum point-to-edge distance for map matching, meters.
    pub matching_max_dist: f64,
    /// Lateral joint offset above which a segment pair is flagged, meters.
    pub continuity_flag_threshold: f64,
    /// Weight of first/last polyline points in the parametric curve fit.
    pub endpoint_weight: f64,
    /// Worker pool size.
    pub workers: usize,
    /// Base seed for all randomized steps.
    pub seed: u64,

    // Kernel parameters, defaults recorded here since the method leaves
    // them open.
    /// RANSAC ground plane inlier threshold, meters.
    pub ransac_plane_threshold: f64,
    /// RANSAC ground plane iteration budget.
    pub ransac_plane_iters: usize,
    /// RANSAC marking line inlier threshold, meters.
    pub ransac_line_threshold: f64,
    /// RANSAC marking line iteration budget.
    pub ransac_line_iters: usize,
    /// Radius outlier removal search radius, meters.
    pub outlier_radius: f64,
    /// Minimum neighbor count within `outlier_radius`.
    pub outlier_min_neighbors: usize,
    /// DBSCAN neighborhood radius, meters.
    pub dbscan_eps: f64,
    /// DBSCAN core point threshold.
    pub dbscan_min_pts: usize,
    /// Extra height kept above the sensor plane when cropping, meters.
    pub height_crop_slack: f64,
    /// Reference polyline deduplication radius, meters.
    pub dedupe_radius: f64,
    /// Length of lane fade-in/out sections, meters.
    pub lane_taper_length: f64,
    /// Placeholder ramp spiral length, meters.
    pub ramp_length: f64,
    /// Placeholder ramp end curvature, 1/m.
    pub ramp_curvature: f64,
    /// Nominal ramp extent used to place its start, meters.
    pub ramp_size: f64,
    /// Reference line sampling spacing for evaluation, meters.
    pub sample_spacing: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            reflectivity_start: 0.25,
            reflectivity_step: 0.05,
            reflectivity_floor: 0.05,
            chain_step: 3.0,
            chain_max_factor: 1.5,
            fuse_max_factor: 3.5,
            split_threshold: 12.0,
            split_part: 6.0,
            revisit_window: 8.0,
            matching_max_dist: 30.0,
            continuity_flag_threshold: 0.5,
            endpoint_weight: 10.0,
            workers: 4,
            seed: 0,
            ransac_plane_threshold: 0.10,
            ransac_plane_iters: 1000,
            ransac_line_threshold: 0.05,
            ransac_line_iters: 100,
            outlier_radius: 0.5,
            outlier_min_neighbors: 3,
            dbscan_eps: 0.3,
            dbscan_min_pts: 5,
            height_crop_slack: 0.5,
            dedupe_radius: 0.25,
            lane_taper_length: 60.0,
            ramp_length: 100.0,
            ramp_curvature: 1.0 / 150.0,
            ramp_size: 50.0,
            sample_spacing: 1.0,
        }
    }
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_ini_text(&text, &path.display().to_string())
    }

    pub fn from_ini_text(text: &str, file: &str) -> Result<Self> {
        let doc = parse_ini(text, file)?;
        let empty = BTreeMap::new();
        let s = doc.get("pipeline").unwrap_or(&empty);
        let d = PipelineConfig::default();
        let cfg = PipelineConfig {
            reflectivity_start: get_f64(s, "reflectivity_start", d.reflectivity_start)?,
            reflectivity_step: get_f64(s, "reflectivity_step", d.reflectivity_step)?,
            reflectivity_floor: get_f64(s, "reflectivity_floor", d.reflectivity_floor)?,
            chain_step: get_f64(s, "chain_step", d.chain_step)?,
            chain_max_factor: get_f64(s, "chain_max_factor", d.chain_max_factor)?,
            fuse_max_factor: get_f64(s, "fuse_max_factor", d.fuse_max_factor)?,
            split_threshold: get_f64(s, "split_threshold", d.split_threshold)?,
            split_part: get_f64(s, "split_part", d.split_part)?,
            revisit_window: get_f64(s, "revisit_window", d.revisit_window)?,
            matching_max_dist: get_f64(s, "matching_max_dist", d.matching_max_dist)?,
            continuity_flag_threshold: get_f64(
                s,
                "continuity_flag_threshold",
                d.continuity_flag_threshold,
            )?,
            endpoint_weight: get_f64(s, "endpoint_weight", d.endpoint_weight)?,
            workers: get_usize(s, "workers", d.workers)?,
            seed: get_u64(s, "seed", d.seed)?,
            ransac_plane_threshold: get_f64(s, "ransac_plane_threshold", d.ransac_plane_threshold)?,
            ransac_plane_iters: get_usize(s, "ransac_plane_iters", d.ransac_plane_iters)?,
            ransac_line_threshold: get_f64(s, "ransac_line_threshold", d.ransac_line_threshold)?,
            ransac_line_iters: get_usize(s, "ransac_line_iters", d.ransac_line_iters)?,
            outlier_radius: get_f64(s, "outlier_radius", d.outlier_radius)?,
            outlier_min_neighbors: get_usize(s, "outlier_min_neighbors", d.outlier_min_neighbors)?,
            dbscan_eps: get_f64(s, "dbscan_eps", d.dbscan_eps)?,
            dbscan_min_pts: get_usize(s, "dbscan_min_pts", d.dbscan_min_pts)?,
            height_crop_slack: get_f64(s, "height_crop_slack", d.height_crop_slack)?,
            dedupe_radius: get_f64(s, "dedupe_radius", d.dedupe_radius)?,
            lane_taper_length: get_f64(s, "lane_taper_length", d.lane_taper_length)?,
            ramp_length: get_f64(s, "ramp_length", d.ramp_length)?,
            ramp_curvature: get_f64(s, "ramp_curvature", d.ramp_curvature)?,
            ramp_size: get_f64(s, "ramp_size", d.ramp_size)?,
            sample_spacing: get_f64(s, "sample_spacing", d.sample_spacing)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reflectivity_floor > 0.0
            && self.reflectivity_floor <= self.reflectivity_start
            && self.reflectivity_start <= 1.0)
        {
            return Err(Error::Config(
                "reflectivity thresholds must satisfy 0 < floor <= start <= 1".into(),
            ));
        }
        if self.chain_max_factor < 1.0 || self.fuse_max_factor < 1.0 {
            return Err(Error::Config("search factors must be >= 1".into()));
        }
        if self.workers < 1 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        if self.chain_step <= 0.0 || self.split_part <= 0.0 || self.split_threshold <= 0.0 {
            return Err(Error::Config("lengths must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let text = "# comment\n[a]\nx = 1\n; more\n[b.c]\ny = two words\n";
        let doc = parse_ini(text, "test.ini").unwrap();
        assert_eq!(doc["a"]["x"], "1");
        assert_eq!(doc["b.c"]["y"], "two words");
    }

    #[test]
    fn rejects_malformed_line_with_line_number() {
        let err = parse_ini("[a]\nnonsense\n", "f.ini").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn defaults_match_documented_values() {
        let d = PipelineConfig::default();
        assert_eq!(d.reflectivity_start, 0.25);
        assert_eq!(d.reflectivity_step, 0.05);
        assert_eq!(d.reflectivity_floor, 0.05);
        assert_eq!(d.chain_step, 3.0);
        assert_eq!(d.chain_max_factor, 1.5);
        assert_eq!(d.fuse_max_factor, 3.5);
        assert_eq!(d.split_threshold, 12.0);
        assert_eq!(d.split_part, 6.0);
        assert_eq!(d.revisit_window, 8.0);
        d.validate().unwrap();
    }

    #[test]
    fn config_overrides_and_validation() {
        let cfg =
            PipelineConfig::from_ini_text("[pipeline]\nworkers = 8\nseed = 42\n", "c.ini").unwrap();
        assert_eq!(cfg.workers, 8);
        assert_eq!(cfg.seed, 42);

        let err = PipelineConfig::from_ini_text("[pipeline]\nreflectivity_floor = 0.5\n", "c.ini");
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
