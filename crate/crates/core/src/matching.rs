//! Per-timestep map matching and segment construction.
//!
//! Each timestep is matched to the nearest OSM edge on its own, without a
//! hidden Markov model, so a bad match never propagates. Maximal runs on
//! one edge form visits; visits of the same edge merge into one segment
//! when they are close enough in time.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::geo::{self, GeoPoint, SegmentFrameDef};
use crate::ingest::Frame;
use crate::osm::{Edge, EdgeId, RoadGraph, WayInfo};

/// Identity of one segment: the edge plus a visit counter that increments
/// when the same edge is revisited outside the merge window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SegmentKey {
    pub edge: EdgeId,
    pub visit: u32,
}

impl std::fmt::Display for SegmentKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}#{}", self.edge, self.visit)
    }
}

/// The parallel work unit: all frames matched to one OSM edge.
#[derive(Debug, Clone)]
pub struct Segment {
    pub key: SegmentKey,
    pub edge: Edge,
    pub way: WayInfo,
    /// Frames in global time order.
    pub frames: Vec<Frame>,
    pub frame_def: SegmentFrameDef,
}

/// Road graph with node positions projected into a common plane for
/// matching.
pub struct ProjectedGraph {
    pub origin: GeoPoint,
    edges: Vec<(EdgeId, Vector2<f64>, Vector2<f64>)>,
}

impl ProjectedGraph {
    pub fn build(graph: &RoadGraph, origin: GeoPoint) -> Result<Self> {
        let mut projected: BTreeMap<u64, Vector2<f64>> = BTreeMap::new();
        for (&id, point) in &graph.nodes {
            let p = geo::project_tm(point, &origin)?;
            projected.insert(id, p.xy());
        }
        let edges = graph
            .edges
            .iter()
            .map(|e| (e.id, projected[&e.node_a], projected[&e.node_b]))
            .collect();
        Ok(ProjectedGraph {
            origin,
            edges,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Perpendicular distance from a position to one edge's line segment.
    pub fn distance_to(&self, pos: &Vector2<f64>, edge: EdgeId) -> Option<f64> {
        self.edges
            .iter()
            .find(|(id, _, _)| *id == edge)
            .map(|(_, a, b)| point_segment_distance(pos, a, b))
    }
}

fn point_segment_distance(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Match one position to the nearest edge. Ties within 1e-9 go to the
/// lowest (way id, index). Returns the edge and its distance, or None when
/// the nearest edge is farther than `max_dist`.
pub fn match_timestep(
    pos: &Vector2<f64>,
    graph: &ProjectedGraph,
    max_dist: f64,
) -> Option<(EdgeId, f64)> {
    let mut best: Option<(EdgeId, f64)> = None;
    for (id, a, b) in &graph.edges {
        let d = point_segment_distance(pos, a, b);
        best = match best {
            None => Some((*id, d)),
            Some((bid, bd)) => {
                if d < bd - 1e-9 || (d <= bd + 1e-9 && *id < bid) {
                    Some((*id, d))
                } else {
                    Some((bid, bd))
                }
            }
        };
    }
    best.filter(|(_, d)| *d <= max_dist)
}

/// Match every frame independently. The result is aligned with the input.
pub fn match_frames(
    frames: &[Frame],
    graph: &ProjectedGraph,
    max_dist: f64,
) -> Result<Vec<Option<(EdgeId, f64)>>> {
    let mut out = Vec::with_capacity(frames.len());
    for frame in frames {
        let p = geo::project_tm(&frame.pose_geo.position, &graph.origin)?;
        out.push(match_timestep(&p.xy(), graph, max_dist));
    }
    Ok(out)
}

/// Reassign isolated one-frame matches to the surrounding run's edge when
/// the distance cost of doing so is below 1 m. Prevents degenerate
/// single-frame segments.
fn fix_flickers(
    frames: &[Frame],
    matches: &mut [Option<(EdgeId, f64)>],
    graph: &ProjectedGraph,
) -> Result<()> {
    for i in 1..matches.len().saturating_sub(1) {
        let (prev, cur, next) = (matches[i - 1], matches[i], matches[i + 1]);
        if let (Some((ep, _)), Some((ec, dc)), Some((en, _))) = (prev, cur, next) {
            if ep == en && ec != ep {
                let pos = geo::project_tm(&frames[i].pose_geo.position, &graph.origin)?;
                if let Some(da) = graph.distance_to(&pos.xy(), ep) {
                    if da - dc < 1.0 {
                        matches[i] = Some((ep, da));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Group matched frames into segments, merging revisits of an edge that
/// fall within `window_hours`. Returns segments in chronological order of
/// their first frame, plus the unmatched frames.
pub fn build_segments(
    frames: Vec<Frame>,
    mut matches: Vec<Option<(EdgeId, f64)>>,
    graph: &RoadGraph,
    projected: &ProjectedGraph,
    window_hours: f64,
) -> Result<(Vec<Segment>, Vec<Frame>)> {
    if frames.len() != matches.len() {
        return Err(Error::Validation(
            "frames and matches must be aligned".into(),
        ));
    }
    fix_flickers(&frames, &mut matches, projected)?;

    // Maximal same-edge runs, in time order.
    struct Visit {
        edge: EdgeId,
        frame_idx: Vec<usize>,
        t_start: f64,
        t_end: f64,
    }
    let window = window_hours * 3600.0;
    let mut visits: Vec<Visit> = Vec::new();
    let mut unmatched = Vec::new();
    let mut matched_frames: Vec<Option<Frame>> = frames.into_iter().map(Some).collect();

    for (i, m) in matches.iter().enumerate() {
        let t = matched_frames[i].as_ref().unwrap().t;
        match m {
            None => {
                unmatched.push(matched_frames[i].take().unwrap());
            }
            Some((edge, _)) => {
                if let Some(last) = visits.last_mut() {
                    // A run also ends when the recording pauses for longer
                    // than the merge window.
                    if last.edge == *edge && t - last.t_end < window {
                        last.frame_idx.push(i);
                        last.t_end = t;
                        continue;
                    }
                }
                visits.push(Visit {
                    edge: *edge,
                    frame_idx: vec![i],
                    t_start: t,
                    t_end: t,
                });
            }
        }
    }

    // Merge visits of the same edge when the time gap stays inside the
    // window; count visit indices per edge in time order.
    let mut groups: Vec<(EdgeId, Vec<usize>, f64)> = Vec::new(); // (edge, frame idx, t_end)
    let mut visit_counter: BTreeMap<EdgeId, u32> = BTreeMap::new();
    let mut keys: Vec<SegmentKey> = Vec::new();

    for visit in visits {
        if let Some(pos) = groups
            .iter()
            .rposition(|(e, _, t_end)| *e == visit.edge && visit.t_start - t_end < window)
        {
            groups[pos].1.extend(visit.frame_idx);
            groups[pos].2 = visit.t_end;
        } else {
            let counter = visit_counter.entry(visit.edge).or_insert(0);
            keys.push(SegmentKey {
                edge: visit.edge,
                visit: *counter,
            });
            *counter += 1;
            groups.push((visit.edge, visit.frame_idx, visit.t_end));
        }
    }

    let mut segments = Vec::new();
    for ((edge_id, frame_idx, _), key) in groups.into_iter().zip(keys) {
        let mut segment_frames: Vec<Frame> = frame_idx
            .into_iter()
            .map(|i| matched_frames[i].take().expect("frame in one segment"))
            .collect();
        segment_frames.sort_by(|a, b| a.t.total_cmp(&b.t));
        let first = &segment_frames[0];
        let frame_def = SegmentFrameDef::from_first_frame(
            first.pose_geo.position,
            first.pose_geo.yaw,
            first.pose_geo.pitch,
            first.pose_geo.roll,
        );
        let edge = graph
            .edge(edge_id)
            .ok_or_else(|| Error::GraphConsistency(format!("unknown edge {edge_id}")))?
            .clone();
        let way = graph
            .ways
            .get(&edge_id.way_id)
            .ok_or_else(|| Error::GraphConsistency(format!("unknown way {}", edge_id.way_id)))?
            .clone();
        segments.push(Segment {
            key,
            edge,
            way,
            frames: segment_frames,
            frame_def,
        });
    }

    segments.sort_by(|a, b| a.frames[0].t.total_cmp(&b.frames[0].t));
    Ok((segments, unmatched))
}

/// Write the audit manifest: one line per segment.
pub fn write_manifest(segments: &[Segment], path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    writeln!(w, "segment_key,way_id,frame_count,t_start,t_end").map_err(|e| Error::io(path, e))?;
    for s in segments {
        writeln!(
            w,
            "{},{},{},{},{}",
            s.key,
            s.way.way_id,
            s.frames.len(),
            s.frames.first().map(|f| f.t).unwrap_or(0.0),
            s.frames.last().map(|f| f.t).unwrap_or(0.0),
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
