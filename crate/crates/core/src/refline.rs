//! Reference-line reconstruction from classified marking chains.
//!
//! The expected boundary layout is built from the OSM lane count and the
//! regulation profile, each chain is matched to a boundary slot, and every
//! cluster center is projected along its local normal onto the target
//! reference-line position — the middle of the left lane for German
//! highways. Keeping all marking information gives a high-resolution
//! reference polyline.
//!
//! Lateral sign convention, shared with the OpenDRIVE export: slot offsets
//! are measured positive to the RIGHT of the reference line; lateral
//! coordinates relative to the ego path are positive to the LEFT.

use nalgebra::Vector3;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::ingest::RegulationProfile;
use crate::markings::{MarkClass, MarkingChain};
use crate::osm::WayInfo;
use crate::pointcloud::Cloud;

/// One expected boundary position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slot {
    /// Signed offset of the boundary relative to the reference line,
    /// positive to the right.
    pub offset: f64,
    /// Expected marking class at this boundary.
    pub class: MarkClass,
    /// True for the outer edge of an appended shoulder lane.
    pub shoulder_edge: bool,
}

/// Boundary slots ordered left to right.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneLayout {
    pub slots: Vec<Slot>,
    pub lane_width: f64,
}

/// Boundary layout for a way: n+1 slots for n lanes, outer boundaries
/// solid, inner ones dashed, reference line in the middle of the left
/// lane. A shoulder appends one more solid slot on the right.
pub fn build_layout(way: &WayInfo, regs: &RegulationProfile) -> LaneLayout {
    let w = regs.lane_width;
    let n = way.lane_count as usize;
    let mut slots = Vec::with_capacity(n + 2);
    for k in 0..=n {
        slots.push(Slot {
            offset: -w / 2.0 + k as f64 * w,
            class: if k == 0 || k == n {
                MarkClass::Solid
            } else {
                MarkClass::Dashed
            },
            shoulder_edge: false,
        });
    }
    if way.has_shoulder {
        let last = slots.last().unwrap().offset;
        slots.push(Slot {
            offset: last + regs.shoulder_width,
            class: MarkClass::Solid,
            shoulder_edge: true,
        });
    }
    LaneLayout {
        slots,
        lane_width: w,
    }
}

/// Ego trajectory in segment coordinates, used as the station/lateral
/// reference for ordering and side decisions.
#[derive(Debug, Clone)]
pub struct EgoPath {
    positions: Vec<Vector3<f64>>,
    cum: Vec<f64>,
}

impl EgoPath {
    pub fn new(positions: Vec<Vector3<f64>>) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::SegmentFailure(
                "ego path needs at least two poses".into(),
            ));
        }
        let mut cum = Vec::with_capacity(positions.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for pair in positions.windows(2) {
            acc += (pair[1].xy() - pair[0].xy()).norm();
            cum.push(acc);
        }
        Ok(EgoPath { positions, cum })
    }

    /// Overall horizontal driving direction of the segment.
    pub fn driving_direction(&self) -> Vector3<f64> {
        let d = self.positions.last().unwrap() - self.positions.first().unwrap();
        let horiz = Vector3::new(d.x, d.y, 0.0);
        if horiz.norm() < 1e-9 {
            Vector3::new(1.0, 0.0, 0.0)
        } else {
            horiz.normalize()
        }
    }

    /// Station along the path and signed lateral offset (positive left)
    /// of a point. Stations extrapolate beyond the path ends.
    pub fn station_lateral(&self, p: &Vector3<f64>) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..self.positions.len() - 1 {
            let a = self.positions[i].xy();
            let b = self.positions[i + 1].xy();
            let ab = b - a;
            let len2 = ab.norm_squared();
            if len2 < 1e-18 {
                continue;
            }
            let rel = p.xy() - a;
            let u = rel.dot(&ab) / len2;
            let uc = u.clamp(0.0, 1.0);
            let closest = a + ab * uc;
            let dist = (p.xy() - closest).norm();
            if dist < best.0 {
                let len = len2.sqrt();
                let s = self.cum[i] + u * len;
                let t = (ab.x * rel.y - ab.y * rel.x) / len;
                best = (dist, s, t);
            }
        }
        (best.1, best.2)
    }
}

/// Chain-to-slot assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotAssignment {
    pub chain: usize,
    pub slot: usize,
}

struct ChainStats {
    index: usize,
    lateral: f64,
    class: MarkClass,
}

/// Match chains to boundary slots.
///
/// Solid chains are constrained to the outer boundary of their side of the
/// ego path. When counts are ambiguous, the lateral extent of the
/// road-surface cloud estimates the distance to the road boundary (95th
/// percentile as boundary proxy): a placement that would require road
/// surface beyond the boundary is heavily penalized. Chains that fit no
/// slot are dropped.
pub fn assign_slots(
    chains: &[MarkingChain],
    layout: &LaneLayout,
    road_cloud: &Cloud,
    ego: &EgoPath,
) -> Result<Vec<SlotAssignment>> {
    let mut stats: Vec<ChainStats> = chains
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_empty())
        .map(|(i, c)| {
            let lateral = c
                .clusters
                .iter()
                .map(|cl| ego.station_lateral(&cl.center).1)
                .sum::<f64>()
                / c.len() as f64;
            ChainStats {
                index: i,
                lateral,
                class: c.class,
            }
        })
        .collect();
    if stats.is_empty() {
        return Err(Error::SegmentFailure("no marking chains to assign".into()));
    }
    // Left to right: descending lateral.
    stats.sort_by(|a, b| b.lateral.total_cmp(&a.lateral));

    // Boundary proxies from the road-surface cloud, in ego laterals.
    let extents = if road_cloud.len() >= 20 {
        let mut ts: Vec<f64> = road_cloud
            .points
            .iter()
            .map(|p| ego.station_lateral(&p.pos).1)
            .collect();
        ts.sort_by(f64::total_cmp);
        let pct = |q: f64| ts[(q * (ts.len() - 1) as f64).round() as usize];
        Some((pct(0.95), pct(0.05))) // (left boundary, right boundary)
    } else {
        None
    };

    let slots = &layout.slots;
    let off_first = slots.first().unwrap().offset;
    let off_last = slots.last().unwrap().offset;

    let compatible = |chain: &ChainStats, slot: &Slot| -> bool {
        match (chain.class, slot.class) {
            (MarkClass::Unknown, _) => true,
            (MarkClass::Solid, MarkClass::Solid) => {
                // Side rule: solid boundaries left of the ego must sit on
                // left-of-reference slots and vice versa.
                if chain.lateral > 0.0 {
                    slot.offset < 0.0
                } else {
                    slot.offset > 0.0
                }
            }
            (MarkClass::Dashed, MarkClass::Dashed) => true,
            _ => false,
        }
    };

    const DROP_PENALTY: f64 = 4.0;
    const SPACING_WEIGHT: f64 = 1.0;
    const SOFT_BOUNDARY_WEIGHT: f64 = 0.3;
    const HARD_BOUNDARY_WEIGHT: f64 = 10.0;
    const BOUNDARY_TOLERANCE: f64 = 0.75;

    let score = |assignment: &[Option<usize>]| -> f64 {
        let kept: Vec<(usize, usize)> = assignment
            .iter()
            .enumerate()
            .filter_map(|(ci, s)| s.map(|si| (ci, si)))
            .collect();
        let mut cost = (stats.len() - kept.len()) as f64 * DROP_PENALTY;
        for pair in kept.windows(2) {
            let (c0, s0) = pair[0];
            let (c1, s1) = pair[1];
            let measured = stats[c0].lateral - stats[c1].lateral;
            let expected = slots[s1].offset - slots[s0].offset;
            cost += SPACING_WEIGHT * (measured - expected).abs();
        }
        if let Some((left_b, right_b)) = extents {
            if let Some(&(ci, si)) = kept.first() {
                let measured = left_b - stats[ci].lateral;
                let expected = slots[si].offset - off_first;
                cost += SOFT_BOUNDARY_WEIGHT * (measured - expected).abs();
                if measured > expected + BOUNDARY_TOLERANCE {
                    cost += HARD_BOUNDARY_WEIGHT * (measured - expected - BOUNDARY_TOLERANCE);
                }
            }
            if let Some(&(ci, si)) = kept.last() {
                let measured = stats[ci].lateral - right_b;
                let expected = off_last - slots[si].offset;
                cost += SOFT_BOUNDARY_WEIGHT * (measured - expected).abs();
                if measured > expected + BOUNDARY_TOLERANCE {
                    cost += HARD_BOUNDARY_WEIGHT * (measured - expected - BOUNDARY_TOLERANCE);
                }
            }
        }
        cost
    };

    // Order-preserving search over all chain → slot placements with drops.
    let mut best: Option<(f64, Vec<Option<usize>>)> = None;
    let mut current: Vec<Option<usize>> = vec![None; stats.len()];
    fn recurse(
        ci: usize,
        next_slot: usize,
        stats: &[ChainStats],
        slots: &[Slot],
        compatible: &dyn Fn(&ChainStats, &Slot) -> bool,
        score: &dyn Fn(&[Option<usize>]) -> f64,
        current: &mut Vec<Option<usize>>,
        best: &mut Option<(f64, Vec<Option<usize>>)>,
    ) {
        if ci == stats.len() {
            let cost = score(current);
            if best.as_ref().map_or(true, |(b, _)| cost < *b) {
                *best = Some((cost, current.clone()));
            }
            return;
        }
        for si in next_slot..slots.len() {
            if compatible(&stats[ci], &slots[si]) {
                current[ci] = Some(si);
                recurse(ci + 1, si + 1, stats, slots, compatible, score, current, best);
                current[ci] = None;
            }
        }
        // drop this chain
        recurse(ci + 1, next_slot, stats, slots, compatible, score, current, best);
    }
    recurse(
        0, 0, &stats, slots, &compatible, &score, &mut current, &mut best,
    );

    let (_, assignment) = best.expect("search always yields the all-dropped placement");
    let out: Vec<SlotAssignment> = assignment
        .iter()
        .enumerate()
        .filter_map(|(ci, s)| {
            s.map(|si| SlotAssignment {
                chain: stats[ci].index,
                slot: si,
            })
        })
        .collect();
    if out.is_empty() {
        return Err(Error::SegmentFailure(
            "no chain could be matched to a boundary slot".into(),
        ));
    }
    Ok(out)
}

/// High-resolution reference polyline in segment coordinates.
#[derive(Debug, Clone, Default)]
pub struct RefPolyline {
    pub points: Vec<Vector3<f64>>,
    /// Index of the chain each point came from.
    pub source: Vec<usize>,
    /// Arc length along the polyline, strictly increasing.
    pub s: Vec<f64>,
}

impl RefPolyline {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Project every cluster center of every assigned chain onto the reference
/// line along the left-pointing horizontal normal of its local smoothed
/// direction, then merge, order by station and deduplicate by averaging.
pub fn project_refline(
    chains: &[MarkingChain],
    assignments: &[SlotAssignment],
    layout: &LaneLayout,
    ego: &EgoPath,
    cfg: &PipelineConfig,
) -> Result<RefPolyline> {
    if assignments.is_empty() {
        return Err(Error::SegmentFailure("no assigned chains".into()));
    }
    let mut raw: Vec<(f64, Vector3<f64>, usize)> = Vec::new();
    for a in assignments {
        let chain = &chains[a.chain];
        let offset = layout.slots[a.slot].offset;
        for (cluster, dir) in chain.clusters.iter().zip(&chain.directions) {
            let horiz = Vector3::new(-dir.y, dir.x, 0.0);
            let norm = horiz.norm();
            if norm < 1e-9 {
                continue;
            }
            let n_left = horiz / norm;
            let p = cluster.center + n_left * offset;
            let (s, _) = ego.station_lateral(&p);
            raw.push((s, p, a.chain));
        }
    }
    if raw.is_empty() {
        return Err(Error::SegmentFailure("assigned chains are empty".into()));
    }
    raw.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));

    // Deduplicate near-coincident projections by averaging.
    let mut merged: Vec<(Vector3<f64>, usize)> = Vec::new();
    let mut acc = raw[0].1;
    let mut count = 1.0;
    let mut source = raw[0].2;
    for &(_, p, src) in raw.iter().skip(1) {
        let mean = acc / count;
        if (p - mean).norm() < cfg.dedupe_radius {
            acc += p;
            count += 1.0;
        } else {
            merged.push((mean, source));
            acc = p;
            count = 1.0;
            source = src;
        }
    }
    merged.push((acc / count, source));

    // Outlier guard: drop points farther than a lane width from the chord
    // of their neighbors.
    let guarded: Vec<(Vector3<f64>, usize)> = merged
        .iter()
        .enumerate()
        .filter(|(i, (p, _))| {
            if *i == 0 || *i + 1 >= merged.len() {
                return true;
            }
            let a = merged[i - 1].0;
            let b = merged[i + 1].0;
            let ab = b - a;
            let len2 = ab.norm_squared();
            if len2 < 1e-18 {
                return true;
            }
            let u = (p - a).dot(&ab) / len2;
            let closest = a + ab * u.clamp(0.0, 1.0);
            (p - closest).norm() <= layout.lane_width
        })
        .map(|(_, x)| *x)
        .collect();

    let mut poly = RefPolyline::default();
    let mut s = 0.0;
    for (p, src) in guarded {
        if let Some(last) = poly.points.last() {
            let step = (p - last).norm();
            if step < 1e-9 {
                continue;
            }
            s += step;
        }
        poly.points.push(p);
        poly.source.push(src);
        poly.s.push(s);
    }
    Ok(poly)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markings::MarkingCluster;
    use crate::osm::RoadType;
    use crate::pointcloud::CloudPoint;
    use approx::assert_relative_eq;

    fn way(lanes: u32, shoulder: bool) -> WayInfo {
        WayInfo {
            way_id: 1,
            road_type: RoadType::Highway,
            lane_count: lanes,
            has_shoulder: shoulder,
            connects_ramp: false,
            country: "DE".into(),
        }
    }

    fn regs() -> RegulationProfile {
        RegulationProfile::german_highway()
    }

    #[test]
    fn layout_three_lanes() {
        let layout = build_layout(&way(3, false), &regs());
        let offsets: Vec<f64> = layout.slots.iter().map(|s| s.offset).collect();
        assert_eq!(offsets, vec![-1.875, 1.875, 5.625, 9.375]);
        let classes: Vec<MarkClass> = layout.slots.iter().map(|s| s.class).collect();
        assert_eq!(
            classes,
            vec![
                MarkClass::Solid,
                MarkClass::Dashed,
                MarkClass::Dashed,
                MarkClass::Solid
            ]
        );
    }

    #[test]
    fn layout_single_lane() {
        let layout = build_layout(&way(1, false), &regs());
        let offsets: Vec<f64> = layout.slots.iter().map(|s| s.offset).collect();
        assert_eq!(offsets, vec![-1.875, 1.875]);
        assert!(layout.slots.iter().all(|s| s.class == MarkClass::Solid));
    }

    #[test]
    fn layout_shoulder_appends_solid_slot() {
        let layout = build_layout(&way(3, true), &regs());
        assert_eq!(layout.slots.len(), 5);
        let last = layout.slots.last().unwrap();
        assert_relative_eq!(last.offset, 9.375 + 2.5);
        assert_eq!(last.class, MarkClass::Solid);
        assert!(last.shoulder_edge);
    }

    // ---- helpers for assignment tests ----

    fn straight_ego(y: f64) -> EgoPath {
        EgoPath::new(
            (0..20)
                .map(|i| Vector3::new(i as f64 * 10.0, y, 0.0))
                .collect(),
        )
        .unwrap()
    }

    fn chain_along_x(y: f64, class: MarkClass, n: usize) -> MarkingChain {
        let clusters: Vec<MarkingCluster> = (0..n)
            .map(|i| {
                let center = Vector3::new(10.0 + i as f64 * 18.0, y, 0.0);
                MarkingCluster {
                    points: Cloud::new(vec![CloudPoint {
                        pos: center,
                        reflectivity: 0.5,
                    }]),
                    center,
                    direction: Vector3::new(1.0, 0.0, 0.0),
                    length: 6.0,
                    from_solid_split: false,
                }
            })
            .collect();
        MarkingChain {
            directions: clusters.iter().map(|c| c.direction).collect(),
            clusters,
            class,
        }
    }

    /// Uniform road-surface cloud spanning the given lateral band.
    fn road_cloud(y_min: f64, y_max: f64) -> Cloud {
        let mut points = Vec::new();
        let mut y = y_min;
        while y <= y_max {
            for i in 0..20 {
                points.push(CloudPoint {
                    pos: Vector3::new(i as f64 * 10.0, y, 0.0),
                    reflectivity: 0.1,
                });
            }
            y += 0.25;
        }
        Cloud::new(points)
    }

    #[test]
    fn assigns_two_dashed_chains_to_middle_lane_slots() {
        // 3-lane road, ego in the middle lane; scene laid out with the
        // reference line at y = 0 (middle of the left lane).
        let layout = build_layout(&way(3, false), &regs());
        let ego = straight_ego(-3.75);
        let chains = vec![
            chain_along_x(-1.875, MarkClass::Dashed, 6),
            chain_along_x(-5.625, MarkClass::Dashed, 6),
        ];
        let cloud = road_cloud(-9.375, 1.875);
        let got = assign_slots(&chains, &layout, &cloud, &ego).unwrap();
        assert_eq!(
            got,
            vec![
                SlotAssignment { chain: 0, slot: 1 },
                SlotAssignment { chain: 1, slot: 2 }
            ]
        );
    }

    #[test]
    fn assigns_left_solid_to_first_slot() {
        let layout = build_layout(&way(3, false), &regs());
        let ego = straight_ego(0.0);
        let chains = vec![chain_along_x(1.875, MarkClass::Solid, 6)];
        let cloud = road_cloud(-9.375, 1.875);
        let got = assign_slots(&chains, &layout, &cloud, &ego).unwrap();
        assert_eq!(got, vec![SlotAssignment { chain: 0, slot: 0 }]);
    }

    #[test]
    fn boundary_extent_disambiguates_dashed_slots() {
        // 4-lane layout expects three dashed slots; only two dashed chains
        // extracted. The road cloud reaches 5.6 m right of the rightmost
        // chain, so the rightmost chain cannot sit on the last dashed slot
        // (only 3.75 m of road remain there).
        let layout = build_layout(&way(4, false), &regs());
        let ego = straight_ego(-3.75);
        let chains = vec![
            chain_along_x(-1.875, MarkClass::Dashed, 6),
            chain_along_x(-5.625, MarkClass::Dashed, 6),
        ];
        let cloud = road_cloud(-5.625 - 5.6, 1.875);
        let got = assign_slots(&chains, &layout, &cloud, &ego).unwrap();
        assert_eq!(
            got,
            vec![
                SlotAssignment { chain: 0, slot: 1 },
                SlotAssignment { chain: 1, slot: 2 }
            ]
        );
    }

    #[test]
    fn zero_assignable_chains_is_segment_failure() {
        let layout = build_layout(&way(3, false), &regs());
        let ego = straight_ego(0.0);
        let err = assign_slots(&[], &layout, &road_cloud(-9.375, 1.875), &ego).unwrap_err();
        assert!(matches!(err, Error::SegmentFailure(_)));
    }

    // ---- projection tests ----

    #[test]
    fn projection_shifts_chain_left_by_offset() {
        let layout = build_layout(&way(3, false), &regs());
        let ego = straight_ego(-3.75);
        let chains = vec![chain_along_x(-1.875, MarkClass::Dashed, 6)];
        let assignments = vec![SlotAssignment { chain: 0, slot: 1 }];
        let poly = project_refline(
            &chains,
            &assignments,
            &layout,
            &ego,
            &PipelineConfig::default(),
        )
        .unwrap();
        assert_eq!(poly.len(), 6);
        for p in &poly.points {
            // slot offset +1.875 moves the point 1.875 m left: y = 0
            assert_relative_eq!(p.y, 0.0, epsilon = 1e-12);
        }
        // s strictly increasing
        assert!(poly.s.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn projection_zero_offset_keeps_centers() {
        let mut layout = build_layout(&way(3, false), &regs());
        layout.slots[1].offset = 0.0;
        let ego = straight_ego(0.0);
        let chains = vec![chain_along_x(0.0, MarkClass::Dashed, 4)];
        let assignments = vec![SlotAssignment { chain: 0, slot: 1 }];
        let poly = project_refline(
            &chains,
            &assignments,
            &layout,
            &ego,
            &PipelineConfig::default(),
        )
        .unwrap();
        for (p, c) in poly.points.iter().zip(&chains[0].clusters) {
            assert_relative_eq!(*p, c.center, epsilon = 1e-12);
        }
    }

    #[test]
    fn projection_merges_parallel_chains() {
        let layout = build_layout(&way(3, false), &regs());
        let ego = straight_ego(-3.75);
        // Two chains at the middle-lane boundaries; both project onto the
        // reference line, interleaving along x with offset dashes.
        let mut c2 = chain_along_x(-5.625, MarkClass::Dashed, 6);
        for cl in &mut c2.clusters {
            cl.center.x += 9.0;
            for p in &mut cl.points.points {
                p.pos.x += 9.0;
            }
        }
        let chains = vec![chain_along_x(-1.875, MarkClass::Dashed, 6), c2];
        let assignments = vec![
            SlotAssignment { chain: 0, slot: 1 },
            SlotAssignment { chain: 1, slot: 2 },
        ];
        let poly = project_refline(
            &chains,
            &assignments,
            &layout,
            &ego,
            &PipelineConfig::default(),
        )
        .unwrap();
        assert_eq!(poly.len(), 12);
        for p in &poly.points {
            assert_relative_eq!(p.y, 0.0, epsilon = 1e-12);
        }
        // spacing never exceeds the regulatory dash spacing
        for pair in poly.points.windows(2) {
            assert!((pair[1] - pair[0]).norm() <= regs().dash_center_spacing + 1e-9);
        }
    }

    #[test]
    fn projection_correct_on_circular_arc() {
        // Markings on a circle of radius R around the origin; the chain
        // sits one lane right of the reference circle (R - 3.75... careful
        // with signs: boundary at offset +1.875 lies right of the
        // reference; driving counterclockwise, right = outward? Set up:
        // reference circle radius R, driving clockwise when seen from +z
        // means left points toward the center... Use explicit normals.
        let r_ref: f64 = 500.0;
        let offset = 1.875; // slot b_1
        // Drive counterclockwise: tangent = (-sin a, cos a), left normal
        // = (-cos a, -sin a) (pointing inward). The boundary must satisfy
        // ref = boundary + n_left * offset, so boundary radius = R + offset.
        let r_boundary = r_ref + offset;
        let n = 24;
        let clusters: Vec<MarkingCluster> = (0..n)
            .map(|i| {
                let a = i as f64 * 18.0 / r_boundary;
                let center = Vector3::new(r_boundary * a.cos(), r_boundary * a.sin(), 0.0);
                let dir = Vector3::new(-a.sin(), a.cos(), 0.0);
                MarkingCluster {
                    points: Cloud::new(vec![CloudPoint {
                        pos: center,
                        reflectivity: 0.5,
                    }]),
                    center,
                    direction: dir,
                    length: 6.0,
                    from_solid_split: false,
                }
            })
            .collect();
        let chain = MarkingChain {
            directions: clusters.iter().map(|c| c.direction).collect(),
            clusters,
            class: MarkClass::Dashed,
        };
        // ego on the reference circle
        let ego = EgoPath::new(
            (0..40)
                .map(|i| {
                    let a = i as f64 * 9.0 / r_ref;
                    Vector3::new(r_ref * a.cos(), r_ref * a.sin(), 0.0)
                })
                .collect(),
        )
        .unwrap();
        let layout = build_layout(&way(3, false), &regs());
        let assignments = vec![SlotAssignment { chain: 0, slot: 1 }];
        let poly = project_refline(
            &[chain],
            &assignments,
            &layout,
            &ego,
            &PipelineConfig::default(),
        )
        .unwrap();
        for p in &poly.points {
            let r = p.xy().norm();
            assert!(
                (r - r_ref).abs() < 0.05,
                "projected radius {r} deviates from {r_ref}"
            );
        }
    }

    #[test]
    fn assignment_independent_of_ego_lane() {
        let layout = build_layout(&way(3, false), &regs());
        let chains = || {
            vec![
                chain_along_x(1.875, MarkClass::Solid, 6),
                chain_along_x(-1.875, MarkClass::Dashed, 6),
                chain_along_x(-5.625, MarkClass::Dashed, 6),
                chain_along_x(-9.375, MarkClass::Solid, 6),
            ]
        };
        let cloud = road_cloud(-9.375, 1.875);
        let cfg = PipelineConfig::default();

        let left = straight_ego(0.0); // lane 1
        let right = straight_ego(-7.5); // lane 3
        let ch_l = chains();
        let ch_r = chains();
        let a_l = assign_slots(&ch_l, &layout, &cloud, &left).unwrap();
        let a_r = assign_slots(&ch_r, &layout, &cloud, &right).unwrap();
        assert_eq!(a_l, a_r);

        let p_l = project_refline(&ch_l, &a_l, &layout, &left, &cfg).unwrap();
        let p_r = project_refline(&ch_r, &a_r, &layout, &right, &cfg).unwrap();
        assert_eq!(p_l.len(), p_r.len());
        for (a, b) in p_l.points.iter().zip(&p_r.points) {
            assert!((a - b).norm() < 1e-9);
        }
    }
}
