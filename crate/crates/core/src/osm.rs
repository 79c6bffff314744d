//! OpenStreetMap extract parsing.
//!
//! Only the minimal attribute set the pipeline consumes is surfaced:
//! country, road type, lane count, shoulder existence, and ramp
//! connectivity. Every other tag is dropped at parse time.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geo::{self, GeoPoint};
use crate::ingest::RegulationProfile;

/// Coarse road class used for segment processing and regulation lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RoadType {
    Highway,
    EntryExit,
    Other,
}

impl RoadType {
    pub fn as_str(&self) -> &'static str {
        match self {
            RoadType::Highway => "highway",
            RoadType::EntryExit => "entry_exit",
            RoadType::Other => "other",
        }
    }
}

/// Per-way road attributes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WayInfo {
    pub way_id: u64,
    pub road_type: RoadType,
    pub lane_count: u32,
    pub has_shoulder: bool,
    pub connects_ramp: bool,
    pub country: String,
}

/// Stable edge identifier: the way plus the index within its node sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId {
    pub way_id: u64,
    pub index: u32,
}

impl std::fmt::Display for EdgeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.way_id, self.index)
    }
}

/// A node-to-node link of a way.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub node_a: u64,
    pub node_b: u64,
    /// Geodesic node-to-node length, meters.
    pub length: f64,
}

/// Road graph exposing exactly the attributes the pipeline needs.
#[derive(Debug, Clone, Default)]
pub struct RoadGraph {
    pub nodes: BTreeMap<u64, GeoPoint>,
    pub ways: BTreeMap<u64, WayInfo>,
    /// Edges ordered by (way id, index within way).
    pub edges: Vec<Edge>,
    /// Node sequence per way as listed in the extract.
    pub way_nodes: BTreeMap<u64, Vec<u64>>,
}

impl RoadGraph {
    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edges.iter().find(|e| e.id == id)
    }

    pub fn way_edges(&self, way_id: u64) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.id.way_id == way_id)
    }
}

fn classify_highway_tag(value: &str) -> Option<RoadType> {
    match value {
        "motorway" | "trunk" => Some(RoadType::Highway),
        "motorway_link" | "trunk_link" => Some(RoadType::EntryExit),
        "primary" | "primary_link" | "secondary" | "secondary_link" | "tertiary"
        | "unclassified" | "residential" => Some(RoadType::Other),
        _ => None,
    }
}

/// Parse an OSM XML extract into a [`RoadGraph`].
///
/// Only drivable ways are retained. In strict mode a motorway without a
/// `lanes` tag is an error; in lenient mode it defaults to 2 lanes.
pub fn parse_extract(path: &Path, country_default: &str, strict: bool) -> Result<RoadGraph> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_extract_str(&text, &path.display().to_string(), country_default, strict)
}

pub fn parse_extract_str(
    xml: &str,
    file: &str,
    country_default: &str,
    strict: bool,
) -> Result<RoadGraph> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| Error::Xml {
        file: file.to_string(),
        message: e.to_string(),
    })?;
    let root = doc.root_element();

    let mut graph = RoadGraph::default();

    for node in root.children().filter(|n| n.has_tag_name("node")) {
        let id: u64 = attr_parse(&node, "id", file)?;
        let lat: f64 = attr_parse(&node, "lat", file)?;
        let lon: f64 = attr_parse(&node, "lon", file)?;
        let alt: f64 = node
            .attribute("ele")
            .and_then(|v| v.parse().ok())
            .unwrap_or(0.0);
        graph.nodes.insert(id, GeoPoint::new(lat, lon, alt)?);
    }

    for way in root.children().filter(|n| n.has_tag_name("way")) {
        let way_id: u64 = attr_parse(&way, "id", file)?;
        let mut tags = BTreeMap::new();
        let mut nodes = Vec::new();
        for child in way.children() {
            if child.has_tag_name("tag") {
                if let (Some(k), Some(v)) = (child.attribute("k"), child.attribute("v")) {
                    tags.insert(k.to_string(), v.to_string());
                }
            } else if child.has_tag_name("nd") {
                let r: u64 = attr_parse(&child, "ref", file)?;
                nodes.push(r);
            }
        }

        let road_type = match tags.get("highway").and_then(|v| classify_highway_tag(v)) {
            Some(rt) => rt,
            None => continue, // not a drivable road
        };

        let lane_count = match tags.get("lanes") {
            Some(v) => v.parse::<u32>().map_err(|_| {
                Error::GraphConsistency(format!("way {way_id}: lanes tag `{v}` is not a number"))
            })?,
            None => {
                if strict && road_type == RoadType::Highway {
                    return Err(Error::GraphConsistency(format!(
                        "way {way_id}: missing lanes tag on motorway (strict mode)"
                    )));
                }
                match road_type {
                    RoadType::Highway => 2,
                    _ => 1,
                }
            }
        };
        if lane_count < 1 {
            return Err(Error::GraphConsistency(format!(
                "way {way_id}: lane count must be >= 1"
            )));
        }

        let has_shoulder = tags
            .get("shoulder")
            .map(|v| v != "no")
            .unwrap_or(false);

        for r in &nodes {
            if !graph.nodes.contains_key(r) {
                return Err(Error::GraphConsistency(format!(
                    "way {way_id} references missing node {r}"
                )));
            }
        }

        for (i, pair) in nodes.windows(2).enumerate() {
            let a = graph.nodes[&pair[0]];
            let b = graph.nodes[&pair[1]];
            let length = geo::geodesic_distance(&a, &b);
            if length <= 0.0 {
                return Err(Error::GraphConsistency(format!(
                    "way {way_id} edge {i}: zero-length edge between nodes {} and {}",
                    pair[0], pair[1]
                )));
            }
            graph.edges.push(Edge {
                id: EdgeId {
                    way_id,
                    index: i as u32,
                },
                node_a: pair[0],
                node_b: pair[1],
                length,
            });
        }

        graph.ways.insert(
            way_id,
            WayInfo {
                way_id,
                road_type,
                lane_count,
                has_shoulder,
                connects_ramp: false,
                country: country_default.to_string(),
            },
        );
        graph.way_nodes.insert(way_id, nodes);
    }

    // A way connects to a ramp when it shares a node with an entry/exit way.
    let ramp_nodes: BTreeSet<u64> = graph
        .ways
        .values()
        .filter(|w| w.road_type == RoadType::EntryExit)
        .flat_map(|w| graph.way_nodes[&w.way_id].iter().copied())
        .collect();
    for way in graph.ways.values_mut() {
        if way.road_type == RoadType::EntryExit {
            continue;
        }
        way.connects_ramp = graph.way_nodes[&way.way_id]
            .iter()
            .any(|n| ramp_nodes.contains(n));
    }

    graph.edges.sort_by_key(|e| e.id);
    Ok(graph)
}

fn attr_parse<T: std::str::FromStr>(node: &roxmltree::Node, name: &str, file: &str) -> Result<T> {
    node.attribute(name)
        .ok_or_else(|| Error::Xml {
            file: file.to_string(),
            message: format!("<{}> missing attribute `{name}`", node.tag_name().name()),
        })?
        .parse::<T>()
        .map_err(|_| Error::Xml {
            file: file.to_string(),
            message: format!(
                "<{}> attribute `{name}` is not parseable",
                node.tag_name().name()
            ),
        })
}

/// Upper bound of the road width around the ego vehicle, derived from the
/// OSM lane information plus a 1 m margin.
pub fn max_road_width(way: &WayInfo, regs: &RegulationProfile) -> f64 {
    let shoulder = if way.has_shoulder {
        regs.shoulder_width
    } else {
        0.0
    };
    way.lane_count as f64 * regs.lane_width + shoulder + 1.0
}
