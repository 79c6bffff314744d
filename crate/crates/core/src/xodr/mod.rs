//! In-memory OpenDRIVE model and document assembly.
//!
//! Segments are fitted into parametric cubic geometry elements, one road is
//! created per OSM way, lane sections come from the OSM lane count plus
//! the regulation profile, and entry/exit ways become junctions with a
//! placeholder spiral ramp. The reference line sits in the middle of the
//! left lane, encoded through a constant lane offset of half a lane width.

pub mod fit;
pub mod write;

use std::collections::BTreeMap;

use nalgebra::Vector3;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::ingest::RegulationProfile;
use crate::markings::MarkClass;
use crate::matching::SegmentKey;
use crate::osm::WayInfo;
use crate::refline;

/// Plan-view geometry primitive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Line,
    Arc {
        curvature: f64,
    },
    Spiral {
        curv_start: f64,
        curv_end: f64,
    },
    /// Parametric cubic with normalized parameter range. The local frame
    /// is tangent-aligned: aU = aV = bV = 0.
    ParamPoly3 {
        au: f64,
        bu: f64,
        cu: f64,
        du: f64,
        av: f64,
        bv: f64,
        cv: f64,
        dv: f64,
    },
}

/// One plan-view geometry record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryElement {
    /// Start station along the road.
    pub s: f64,
    /// Inertial start position.
    pub x: f64,
    pub y: f64,
    /// Start heading, radians.
    pub hdg: f64,
    /// Arc length of the element.
    pub length: f64,
    pub shape: Shape,
}

/// Cubic polynomial record a + b·ds + c·ds² + d·ds³ starting at `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicRecord {
    pub s: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl CubicRecord {
    pub fn constant(s: f64, a: f64) -> Self {
        CubicRecord {
            s,
            a,
            b: 0.0,
            c: 0.0,
            d: 0.0,
        }
    }

    pub fn eval(&self, ds: f64) -> f64 {
        self.a + self.b * ds + self.c * ds * ds + self.d * ds * ds * ds
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaneType {
    Driving,
    Shoulder,
    /// Center lane and other zero-width lanes.
    None,
}

impl LaneType {
    pub fn as_str(&self) -> &'static str {
        match self {
            LaneType::Driving => "driving",
            LaneType::Shoulder => "shoulder",
            LaneType::None => "none",
        }
    }
}

/// One lane of a lane section (right side; ids are negative).
#[derive(Debug, Clone, PartialEq)]
pub struct LaneSpec {
    pub id: i32,
    pub lane_type: LaneType,
    /// Width polynomial relative to the section start.
    pub width: CubicRecord,
    /// Road mark at the outer (right) boundary of this lane.
    pub road_mark: MarkClass,
    pub predecessor: Option<i32>,
    pub successor: Option<i32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneSectionModel {
    pub s: f64,
    /// Road mark on the center lane (left road edge).
    pub center_mark: MarkClass,
    /// Right lanes ordered from id -1 downward.
    pub lanes: Vec<LaneSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    Road,
    Junction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Contact {
    Start,
    End,
}

impl Contact {
    pub fn as_str(&self) -> &'static str {
        match self {
            Contact::Start => "start",
            Contact::End => "end",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoadLink {
    pub kind: LinkKind,
    pub id: u64,
    pub contact: Contact,
}

/// One OpenDRIVE road assembled from the segments of a single OSM way.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadModel {
    pub road_id: u64,
    pub name: String,
    pub way_id: u64,
    pub length: f64,
    pub geometry: Vec<GeometryElement>,
    pub elevation: Vec<CubicRecord>,
    pub superelevation: Vec<CubicRecord>,
    pub lane_offset: Vec<CubicRecord>,
    pub sections: Vec<LaneSectionModel>,
    pub predecessor: Option<RoadLink>,
    pub successor: Option<RoadLink>,
    /// Junction id when this road is a connecting (ramp) road.
    pub junction: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionModel {
    pub id: u64,
    pub incoming_road: u64,
    pub connecting_road: u64,
    pub contact: Contact,
    pub lane_links: Vec<(i32, i32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JunctionModel {
    pub junction_id: u64,
    pub name: String,
    pub connections: Vec<ConnectionModel>,
}

/// The in-memory OpenDRIVE document.
#[derive(Debug, Clone, PartialEq)]
pub struct XodrDocument {
    pub name: String,
    /// Projection origin recorded in the header geo reference.
    pub geo_origin: GeoPoint,
    pub roads: Vec<RoadModel>,
    pub junctions: Vec<JunctionModel>,
}

impl XodrDocument {
    pub fn empty(name: &str, geo_origin: GeoPoint) -> Self {
        XodrDocument {
            name: name.to_string(),
            geo_origin,
            roads: Vec::new(),
            junctions: Vec::new(),
        }
    }

    pub fn road(&self, id: u64) -> Option<&RoadModel> {
        self.roads.iter().find(|r| r.road_id == id)
    }

    /// Referential integrity: links and junction connections must point at
    /// existing roads and lanes.
    pub fn validate_references(&self) -> Result<()> {
        for road in &self.roads {
            for link in [road.predecessor, road.successor].into_iter().flatten() {
                match link.kind {
                    LinkKind::Road => {
                        if self.road(link.id).is_none() {
                            return Err(Error::Assembly(format!(
                                "road {} links to missing road {}",
                                road.road_id, link.id
                            )));
                        }
                    }
                    LinkKind::Junction => {
                        if !self.junctions.iter().any(|j| j.junction_id == link.id) {
                            return Err(Error::Assembly(format!(
                                "road {} links to missing junction {}",
                                road.road_id, link.id
                            )));
                        }
                    }
                }
            }
            // lane links point at lanes of the adjacent section
            for (i, section) in road.sections.iter().enumerate() {
                for lane in &section.lanes {
                    if let Some(pred) = lane.predecessor {
                        let exists = if i > 0 {
                            road.sections[i - 1].lanes.iter().any(|l| l.id == pred)
                        } else {
                            road.predecessor.map_or(true, |link| match link.kind {
                                LinkKind::Road => self.road(link.id).map_or(false, |r| {
                                    r.sections
                                        .last()
                                        .map_or(false, |s| s.lanes.iter().any(|l| l.id == pred))
                                }),
                                LinkKind::Junction => true,
                            })
                        };
                        if !exists {
                            return Err(Error::Assembly(format!(
                                "road {} section {} lane {} has dangling predecessor {}",
                                road.road_id, i, lane.id, pred
                            )));
                        }
                    }
                    if let Some(succ) = lane.successor {
                        let exists = if i + 1 < road.sections.len() {
                            road.sections[i + 1].lanes.iter().any(|l| l.id == succ)
                        } else {
                            road.successor.map_or(true, |link| match link.kind {
                                LinkKind::Road => self.road(link.id).map_or(false, |r| {
                                    r.sections
                                        .first()
                                        .map_or(false, |s| s.lanes.iter().any(|l| l.id == succ))
                                }),
                                LinkKind::Junction => true,
                            })
                        };
                        if !exists {
                            return Err(Error::Assembly(format!(
                                "road {} section {} lane {} has dangling successor {}",
                                road.road_id, i, lane.id, succ
                            )));
                        }
                    }
                }
            }
        }
        for junction in &self.junctions {
            for conn in &junction.connections {
                let incoming = self.road(conn.incoming_road).ok_or_else(|| {
                    Error::Assembly(format!(
                        "junction {} references missing incoming road {}",
                        junction.junction_id, conn.incoming_road
                    ))
                })?;
                let connecting = self.road(conn.connecting_road).ok_or_else(|| {
                    Error::Assembly(format!(
                        "junction {} references missing connecting road {}",
                        junction.junction_id, conn.connecting_road
                    ))
                })?;
                for &(from, to) in &conn.lane_links {
                    let has_from = incoming
                        .sections
                        .iter()
                        .any(|s| s.lanes.iter().any(|l| l.id == from));
                    let has_to = connecting
                        .sections
                        .iter()
                        .any(|s| s.lanes.iter().any(|l| l.id == to));
                    if !has_from || !has_to {
                        return Err(Error::Assembly(format!(
                            "junction {} lane link {}->{} references missing lanes",
                            junction.junction_id, from, to
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

// --------------------------------------------------------------------------
// Continuity enforcement
// --------------------------------------------------------------------------

/// Reference polyline of one segment in the export frame.
#[derive(Debug, Clone)]
pub struct SegmentPolyline {
    pub key: SegmentKey,
    pub way_id: u64,
    pub points: Vec<Vector3<f64>>,
    /// Cluster-center samples (position, lateral offset left-positive)
    /// used for the superelevation fit.
    pub lateral_samples: Vec<(Vector3<f64>, f64)>,
}

/// A segment pair whose joint exceeded the lateral flag threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityFlag {
    pub predecessor: SegmentKey,
    pub successor: SegmentKey,
    pub lateral_offset: f64,
}

/// Close the gaps between consecutive segment polylines by appending each
/// successor's first point to its predecessor, flagging pairs whose
/// lateral offset exceeds the threshold.
pub fn enforce_continuity(
    polylines: &mut [SegmentPolyline],
    flag_threshold: f64,
) -> Vec<ContinuityFlag> {
    let mut flags = Vec::new();
    for i in 0..polylines.len().saturating_sub(1) {
        let succ_start = match polylines[i + 1].points.first() {
            Some(p) => *p,
            None => continue,
        };
        let pred = &mut polylines[i];
        let Some(&end) = pred.points.last() else {
            continue;
        };
        let delta = succ_start - end;
        // Lateral component relative to the predecessor's end heading.
        let heading = pred
            .points
            .iter()
            .rev()
            .nth(1)
            .map(|prev| (end - prev).xy())
            .filter(|v| v.norm() > 1e-12)
            .map(|v| v.normalize());
        let lateral = match heading {
            Some(h) => (h.x * delta.y - h.y * delta.x).abs(),
            None => 0.0,
        };
        if delta.xy().norm() > 1e-9 {
            pred.points.push(succ_start);
        }
        if lateral > flag_threshold {
            flags.push(ContinuityFlag {
                predecessor: polylines[i].key,
                successor: polylines[i + 1].key,
                lateral_offset: lateral,
            });
        }
    }
    flags
}

// --------------------------------------------------------------------------
// Document assembly
// --------------------------------------------------------------------------

/// Fitted build product of one segment.
#[derive(Debug, Clone)]
pub struct SegmentBuild {
    pub key: SegmentKey,
    pub geometry: GeometryElement,
    pub elevation: CubicRecord,
    pub superelevation: Option<CubicRecord>,
}

/// All fitted segments of one way, in drive order.
#[derive(Debug, Clone)]
pub struct WayBuild {
    pub way: WayInfo,
    pub segments: Vec<SegmentBuild>,
    /// Concatenated source polyline, used for junction placement.
    pub polyline: Vec<Vector3<f64>>,
}

/// Entry/exit way attachment resolved by the caller.
#[derive(Debug, Clone)]
pub struct JunctionSpec {
    pub main_way_id: u64,
    pub link_way_id: u64,
    /// Attachment node position in the export frame.
    pub attach: Vector3<f64>,
}

fn base_lanes(way: &WayInfo, regs: &RegulationProfile, layout: &refline::LaneLayout) -> Vec<LaneSpec> {
    let n = way.lane_count as i32;
    let mut lanes = Vec::new();
    for k in 1..=n {
        lanes.push(LaneSpec {
            id: -k,
            lane_type: LaneType::Driving,
            width: CubicRecord::constant(0.0, regs.lane_width),
            road_mark: layout.slots[k as usize].class,
            predecessor: None,
            successor: None,
        });
    }
    if way.has_shoulder {
        lanes.push(LaneSpec {
            id: -(n + 1),
            lane_type: LaneType::Shoulder,
            width: CubicRecord::constant(0.0, regs.shoulder_width),
            road_mark: MarkClass::Solid,
            predecessor: None,
            successor: None,
        });
    }
    lanes
}

/// Assemble one road per way, set road and lane links from way adjacency,
/// add taper sections where the lane count changes, and generate junctions
/// with placeholder spiral ramps for entry/exit ways.
pub fn assemble_document(
    name: &str,
    geo_origin: GeoPoint,
    ways: Vec<WayBuild>,
    junction_specs: Vec<JunctionSpec>,
    regs_for: &BTreeMap<u64, RegulationProfile>,
    adjacency_ok: impl Fn(u64, u64) -> bool,
    cfg: &PipelineConfig,
) -> Result<XodrDocument> {
    let mut doc = XodrDocument::empty(name, geo_origin);
    if ways.is_empty() {
        return Ok(doc);
    }

    // Broken adjacency between consecutive driven ways is a structural
    // error: the export order no longer describes one continuous drive.
    for pair in ways.windows(2) {
        let (a, b) = (&pair[0].way, &pair[1].way);
        if !adjacency_ok(a.way_id, b.way_id) {
            return Err(Error::Assembly(format!(
                "ways {} and {} are consecutive in the drive but share no node",
                a.way_id, b.way_id
            )));
        }
    }

    let road_id_of: BTreeMap<u64, u64> = ways
        .iter()
        .enumerate()
        .map(|(i, w)| (w.way.way_id, i as u64 + 1))
        .collect();

    for (idx, way_build) in ways.iter().enumerate() {
        let way = &way_build.way;
        let regs = regs_for.get(&way.way_id).ok_or_else(|| {
            Error::Assembly(format!("no regulation profile for way {}", way.way_id))
        })?;
        let layout = refline::build_layout(way, regs);

        let mut geometry = Vec::new();
        let mut elevation = Vec::new();
        let mut superelevation = Vec::new();
        let mut s = 0.0;
        for seg in &way_build.segments {
            let mut g = seg.geometry;
            g.s = s;
            let mut e = seg.elevation;
            e.s = s;
            elevation.push(e);
            if let Some(mut sup) = seg.superelevation {
                sup.s = s;
                superelevation.push(sup);
            }
            s += g.length;
            geometry.push(g);
        }
        let length = s;
        if geometry.is_empty() {
            return Err(Error::Assembly(format!(
                "way {} has no fitted segments",
                way.way_id
            )));
        }

        let prev = idx.checked_sub(1).map(|i| &ways[i].way);
        let next = ways.get(idx + 1).map(|w| &w.way);

        // Lane sections with tapers on lane-count changes. The changing
        // lane is the rightmost driving lane.
        let taper = cfg.lane_taper_length.min(length / 2.0);
        let n = way.lane_count as i32;
        let mut sections: Vec<LaneSectionModel> = Vec::new();
        let fade_in = prev.map_or(false, |p| p.lane_count < way.lane_count);
        let fade_out = next.map_or(false, |x| x.lane_count < way.lane_count);

        if fade_in {
            let mut lanes = base_lanes(way, regs, &layout);
            for lane in &mut lanes {
                if lane.id == -n {
                    lane.width = CubicRecord {
                        s: 0.0,
                        a: 0.0,
                        b: regs.lane_width / taper,
                        c: 0.0,
                        d: 0.0,
                    };
                }
            }
            sections.push(LaneSectionModel {
                s: 0.0,
                center_mark: layout.slots[0].class,
                lanes,
            });
            sections.push(LaneSectionModel {
                s: taper,
                center_mark: layout.slots[0].class,
                lanes: base_lanes(way, regs, &layout),
            });
        } else {
            sections.push(LaneSectionModel {
                s: 0.0,
                center_mark: layout.slots[0].class,
                lanes: base_lanes(way, regs, &layout),
            });
        }
        if fade_out {
            let mut lanes = base_lanes(way, regs, &layout);
            for lane in &mut lanes {
                if lane.id == -n {
                    lane.width = CubicRecord {
                        s: 0.0,
                        a: regs.lane_width,
                        b: -regs.lane_width / taper,
                        c: 0.0,
                        d: 0.0,
                    };
                }
            }
            sections.push(LaneSectionModel {
                s: length - taper,
                center_mark: layout.slots[0].class,
                lanes,
            });
        }

        // Intra-road lane links between consecutive sections.
        for i in 1..sections.len() {
            let (left, right) = sections.split_at_mut(i);
            let prev_sec = left.last_mut().unwrap();
            let cur_sec = &mut right[0];
            for lane in &mut cur_sec.lanes {
                if prev_sec.lanes.iter().any(|l| l.id == lane.id) {
                    lane.predecessor = Some(lane.id);
                }
            }
            for lane in &mut prev_sec.lanes {
                if cur_sec.lanes.iter().any(|l| l.id == lane.id) {
                    lane.successor = Some(lane.id);
                }
            }
        }

        let road_id = road_id_of[&way.way_id];
        let mut road = RoadModel {
            road_id,
            name: format!("way-{}", way.way_id),
            way_id: way.way_id,
            length,
            geometry,
            elevation,
            superelevation,
            lane_offset: vec![CubicRecord::constant(0.0, regs.lane_width / 2.0)],
            sections,
            predecessor: prev.map(|p| RoadLink {
                kind: LinkKind::Road,
                id: road_id_of[&p.way_id],
                contact: Contact::End,
            }),
            successor: next.map(|x| RoadLink {
                kind: LinkKind::Road,
                id: road_id_of[&x.way_id],
                contact: Contact::Start,
            }),
            junction: None,
        };

        // Cross-road lane links for lanes that exist on both sides.
        if let Some(p) = prev {
            let shared = way.lane_count.min(p.lane_count) as i32;
            if let Some(first) = road.sections.first_mut() {
                for lane in &mut first.lanes {
                    if lane.lane_type == LaneType::Driving && -lane.id <= shared {
                        lane.predecessor = Some(lane.id);
                    }
                }
            }
        }
        if let Some(x) = next {
            let shared = way.lane_count.min(x.lane_count) as i32;
            if let Some(last) = road.sections.last_mut() {
                for lane in &mut last.lanes {
                    if lane.lane_type == LaneType::Driving && -lane.id <= shared {
                        lane.successor = Some(lane.id);
                    }
                }
            }
        }

        doc.roads.push(road);
    }

    // Junctions with placeholder spiral ramps.
    let mut next_junction_id = 100;
    let mut next_ramp_road_id = ways.len() as u64 + 1;
    for spec in junction_specs {
        let Some(&main_road_id) = road_id_of.get(&spec.main_way_id) else {
            continue; // main way produced no road (all segments failed)
        };
        let way_build = ways
            .iter()
            .find(|w| w.way.way_id == spec.main_way_id)
            .expect("main way exists");
        let way = &way_build.way;
        let regs = &regs_for[&spec.main_way_id];

        // Station of the attachment node along the source polyline, then
        // the ramp starts at the right road edge, `ramp_size` before it.
        let poly = &way_build.polyline;
        if poly.len() < 2 {
            continue;
        }
        let mut cum = 0.0;
        let mut best = (f64::INFINITY, 0.0, Vector3::zeros(), Vector3::x());
        for pair in poly.windows(2) {
            let a = pair[0];
            let b = pair[1];
            let ab = b - a;
            let len = ab.xy().norm();
            if len < 1e-9 {
                continue;
            }
            let u = ((spec.attach - a).xy().dot(&ab.xy()) / (len * len)).clamp(0.0, 1.0);
            let closest = a + ab * u;
            let d = (spec.attach - closest).xy().norm();
            if d < best.0 {
                best = (d, cum + u * len, closest, ab / ab.norm());
            }
            cum += len;
        }
        let (_, s_attach, anchor, dir) = best;
        let _ = s_attach;
        let road_width = way.lane_count as f64 * regs.lane_width
            + if way.has_shoulder { regs.shoulder_width } else { 0.0 };
        let n_right = Vector3::new(dir.y, -dir.x, 0.0);
        let ramp_start = anchor + n_right * road_width - dir * cfg.ramp_size;
        let hdg = dir.y.atan2(dir.x);

        let ramp_road_id = next_ramp_road_id;
        next_ramp_road_id += 1;
        let junction_id = next_junction_id;
        next_junction_id += 1;

        let ramp = RoadModel {
            road_id: ramp_road_id,
            name: format!("ramp-way-{}", spec.link_way_id),
            way_id: spec.link_way_id,
            length: cfg.ramp_length,
            geometry: vec![GeometryElement {
                s: 0.0,
                x: ramp_start.x,
                y: ramp_start.y,
                hdg,
                length: cfg.ramp_length,
                shape: Shape::Spiral {
                    curv_start: 0.0,
                    curv_end: -cfg.ramp_curvature,
                },
            }],
            elevation: vec![CubicRecord::constant(0.0, anchor.z)],
            superelevation: vec![],
            lane_offset: vec![CubicRecord::constant(0.0, 0.0)],
            sections: vec![LaneSectionModel {
                s: 0.0,
                center_mark: MarkClass::Solid,
                lanes: vec![LaneSpec {
                    id: -1,
                    lane_type: LaneType::Driving,
                    width: CubicRecord::constant(0.0, regs.lane_width),
                    road_mark: MarkClass::Solid,
                    predecessor: Some(-(way.lane_count as i32)),
                    successor: None,
                }],
            }],
            predecessor: Some(RoadLink {
                kind: LinkKind::Road,
                id: main_road_id,
                contact: Contact::End,
            }),
            successor: None,
            junction: Some(junction_id),
        };
        doc.roads.push(ramp);
        doc.junctions.push(JunctionModel {
            junction_id,
            name: format!("junction-{}", spec.link_way_id),
            connections: vec![ConnectionModel {
                id: 0,
                incoming_road: main_road_id,
                connecting_road: ramp_road_id,
                contact: Contact::Start,
                lane_links: vec![(-(way.lane_count as i32), -1)],
            }],
        });
    }

    doc.validate_references()?;
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::osm::RoadType;
    use approx::assert_relative_eq;

    fn key(way: u64, index: u32) -> SegmentKey {
        SegmentKey {
            edge: crate::osm::EdgeId { way_id: way, index },
            visit: 0,
        }
    }

    fn poly(way: u64, index: u32, points: Vec<Vector3<f64>>) -> SegmentPolyline {
        SegmentPolyline {
            key: key(way, index),
            way_id: way,
            points,
            lateral_samples: vec![],
        }
    }

    #[test]
    fn continuity_appends_endpoint_without_flag() {
        // 12 m along-track gap (a dashed-gap split), no lateral offset.
        let mut polys = vec![
            poly(1, 0, vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(100.0, 0.0, 0.0)]),
            poly(1, 1, vec![Vector3::new(112.0, 0.0, 0.0), Vector3::new(200.0, 0.0, 0.0)]),
        ];
        let flags = enforce_continuity(&mut polys, 0.5);
        assert!(flags.is_empty());
        assert_eq!(polys[0].points.last().unwrap(), &Vector3::new(112.0, 0.0, 0.0));
    }

    #[test]
    fn continuity_flags_large_lateral_offset() {
        let mut polys = vec![
            poly(1, 0, vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(100.0, 0.0, 0.0)]),
            poly(1, 1, vec![Vector3::new(112.0, 0.8, 0.0), Vector3::new(200.0, 0.8, 0.0)]),
        ];
        let flags = enforce_continuity(&mut polys, 0.5);
        assert_eq!(flags.len(), 1);
        assert_relative_eq!(flags[0].lateral_offset, 0.8, epsilon = 1e-12);
        assert_eq!(polys[0].points.last().unwrap(), &Vector3::new(112.0, 0.8, 0.0));
    }

    #[test]
    fn continuity_single_segment_unchanged() {
        let mut polys = vec![poly(
            1,
            0,
            vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(100.0, 0.0, 0.0)],
        )];
        let flags = enforce_continuity(&mut polys, 0.5);
        assert!(flags.is_empty());
        assert_eq!(polys[0].points.len(), 2);
    }

    // ---- assembly ----

    fn way_info(way_id: u64, lanes: u32) -> WayInfo {
        WayInfo {
            way_id,
            road_type: RoadType::Highway,
            lane_count: lanes,
            has_shoulder: false,
            connects_ramp: false,
            country: "DE".into(),
        }
    }

    fn straight_segment(way: u64, index: u32, x0: f64, len: f64) -> SegmentBuild {
        SegmentBuild {
            key: key(way, index),
            geometry: GeometryElement {
                s: 0.0,
                x: x0,
                y: 0.0,
                hdg: 0.0,
                length: len,
                shape: Shape::Line,
            },
            elevation: CubicRecord::constant(0.0, 0.0),
            superelevation: None,
        }
    }

    fn build_ways(specs: &[(u64, u32, usize)]) -> Vec<WayBuild> {
        // (way_id, lanes, segment count), each segment 100 m
        let mut x0 = 0.0;
        specs
            .iter()
            .map(|&(way_id, lanes, nseg)| {
                let segments: Vec<SegmentBuild> = (0..nseg)
                    .map(|i| {
                        let s = straight_segment(way_id, i as u32, x0 + i as f64 * 100.0, 100.0);
                        s
                    })
                    .collect();
                let polyline = vec![
                    Vector3::new(x0, 0.0, 0.0),
                    Vector3::new(x0 + nseg as f64 * 100.0, 0.0, 0.0),
                ];
                x0 += nseg as f64 * 100.0;
                WayBuild {
                    way: way_info(way_id, lanes),
                    segments,
                    polyline,
                }
            })
            .collect()
    }

    fn regs_map(ways: &[WayBuild]) -> BTreeMap<u64, RegulationProfile> {
        ways.iter()
            .map(|w| (w.way.way_id, RegulationProfile::german_highway()))
            .collect()
    }

    fn origin() -> GeoPoint {
        GeoPoint::new(48.7, 9.0, 0.0).unwrap()
    }

    #[test]
    fn one_way_two_segments_is_contiguous() {
        let ways = build_ways(&[(10, 3, 2)]);
        let regs = regs_map(&ways);
        let doc = assemble_document(
            "t",
            origin(),
            ways,
            vec![],
            &regs,
            |_, _| true,
            &PipelineConfig::default(),
        )
        .unwrap();
        assert_eq!(doc.roads.len(), 1);
        let road = &doc.roads[0];
        assert_eq!(road.geometry.len(), 2);
        assert_relative_eq!(road.geometry[0].s, 0.0);
        assert_relative_eq!(road.geometry[1].s, 100.0);
        assert_relative_eq!(road.length, 200.0);
        assert_eq!(road.sections.len(), 1);
        assert_eq!(road.sections[0].lanes.len(), 3);
        // total road length equals the sum of element lengths
        let sum: f64 = road.geometry.iter().map(|g| g.length).sum();
        assert_relative_eq!(road.length, sum, max_relative = 1e-12);
    }

    #[test]
    fn lane_count_increase_adds_taper_section() {
        let ways = build_ways(&[(10, 3, 2), (11, 4, 2)]);
        let regs = regs_map(&ways);
        let doc = assemble_document(
            "t",
            origin(),
            ways,
            vec![],
            &regs,
            |_, _| true,
            &PipelineConfig::default(),
        )
        .unwrap();
        let successor = doc.road(2).unwrap();
        assert_eq!(successor.sections.len(), 2);
        let first = &successor.sections[0];
        let widening = first.lanes.iter().find(|l| l.id == -4).unwrap();
        assert_relative_eq!(widening.width.a, 0.0);
        assert_relative_eq!(widening.width.eval(60.0), 3.75, epsilon = 1e-12);
        assert_relative_eq!(successor.sections[1].s, 60.0);
        // lanes -1..-3 link across the road boundary
        let pred_road = doc.road(1).unwrap();
        let last = pred_road.sections.last().unwrap();
        for k in 1..=3 {
            assert_eq!(
                last.lanes.iter().find(|l| l.id == -k).unwrap().successor,
                Some(-k)
            );
        }
        assert_eq!(
            first.lanes.iter().find(|l| l.id == -4).unwrap().predecessor,
            None
        );
    }

    #[test]
    fn exit_way_generates_junction_with_spiral_ramp() {
        let ways = build_ways(&[(10, 3, 2)]);
        let regs = regs_map(&ways);
        let spec = JunctionSpec {
            main_way_id: 10,
            link_way_id: 77,
            attach: Vector3::new(200.0, 0.0, 0.0),
        };
        let doc = assemble_document(
            "t",
            origin(),
            ways,
            vec![spec],
            &regs,
            |_, _| true,
            &PipelineConfig::default(),
        )
        .unwrap();
        assert_eq!(doc.junctions.len(), 1);
        let ramp = doc.roads.iter().find(|r| r.junction.is_some()).unwrap();
        match ramp.geometry[0].shape {
            Shape::Spiral {
                curv_start,
                curv_end,
            } => {
                assert_eq!(curv_start, 0.0);
                assert_relative_eq!(curv_end, -1.0 / 150.0, epsilon = 1e-12);
            }
            other => panic!("expected spiral, got {other:?}"),
        }
        // ramp starts at the right road edge, ramp_size before the node
        assert_relative_eq!(ramp.geometry[0].x, 150.0, epsilon = 1e-9);
        assert_relative_eq!(ramp.geometry[0].y, -11.25, epsilon = 1e-9);
        doc.validate_references().unwrap();
    }

    #[test]
    fn broken_adjacency_is_an_assembly_error() {
        let ways = build_ways(&[(10, 3, 1), (11, 3, 1)]);
        let regs = regs_map(&ways);
        let err = assemble_document(
            "t",
            origin(),
            ways,
            vec![],
            &regs,
            |_, _| false,
            &PipelineConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Assembly(_)));
    }

    #[test]
    fn dangling_references_are_rejected() {
        let ways = build_ways(&[(10, 3, 1)]);
        let regs = regs_map(&ways);
        let mut doc = assemble_document(
            "t",
            origin(),
            ways,
            vec![],
            &regs,
            |_, _| true,
            &PipelineConfig::default(),
        )
        .unwrap();
        doc.junctions.push(JunctionModel {
            junction_id: 5,
            name: "bad".into(),
            connections: vec![ConnectionModel {
                id: 0,
                incoming_road: 1,
                connecting_road: 99,
                contact: Contact::Start,
                lane_links: vec![],
            }],
        });
        assert!(doc.validate_references().is_err());
    }
}
