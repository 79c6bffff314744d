//! Segment-parallel generation of ASAM OpenDRIVE road descriptions from
//! sparse LiDAR drives, GNSS/IMU poses and a minimal OpenStreetMap extract.
//!
//! The pipeline splits a recorded drive into segments along OSM edges,
//! extracts lane markings per segment from reflectivity-filtered point
//! clouds, reconstructs the road reference line from the marking layout,
//! and assembles a continuous OpenDRIVE document. A synthetic-scene
//! generator with exact ground truth and a reference-line comparison tool
//! close the loop for quantitative verification.

pub mod config;
pub mod error;
pub mod eval;
pub mod geo;
pub mod ingest;
pub mod markings;
pub mod matching;
pub mod osm;
pub mod pipeline;
pub mod pointcloud;
pub mod refline;
pub mod spatial;
pub mod synth;
pub mod xodr;

pub use error::{Error, Result};
