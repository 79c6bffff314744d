//! OpenDRIVE 1.6 serialization.
//!
//! Output is deterministic: fixed header date, stable element order, and
//! floats printed with shortest round-trip precision so a write/parse
//! cycle is exact.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::markings::MarkClass;
use crate::xodr::{Shape, XodrDocument};

fn fmt_f(v: f64) -> String {
    if v == 0.0 {
        // normalize -0.0
        return "0".to_string();
    }
    format!("{v}")
}

fn mark_str(class: MarkClass) -> &'static str {
    match class {
        MarkClass::Solid => "solid",
        MarkClass::Dashed => "broken",
        MarkClass::Unknown => "none",
    }
}

/// Serialize the document. References are validated first.
pub fn document_to_string(doc: &XodrDocument) -> Result<String> {
    doc.validate_references()?;
    let mut out = String::new();
    let w = &mut out;

    writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(w, "<OpenDRIVE>").unwrap();
    writeln!(
        w,
        r#"  <header revMajor="1" revMinor="6" name="{}" version="1.00" date="2024-01-01T00:00:00" north="0" south="0" east="0" west="0" vendor="xodrgen">"#,
        doc.name
    )
    .unwrap();
    writeln!(
        w,
        "    <geoReference><![CDATA[+proj=tmerc +lat_0={} +lon_0={} +k=1 +x_0=0 +y_0=0 +datum=WGS84 +units=m +no_defs]]></geoReference>",
        fmt_f(doc.geo_origin.lat),
        fmt_f(doc.geo_origin.lon)
    )
    .unwrap();
    writeln!(w, "  </header>").unwrap();

    for road in &doc.roads {
        writeln!(
            w,
            r#"  <road name="{}" length="{}" id="{}" junction="{}">"#,
            road.name,
            fmt_f(road.length),
            road.road_id,
            road.junction.map_or(-1i64, |j| j as i64)
        )
        .unwrap();

        if road.predecessor.is_some() || road.successor.is_some() {
            writeln!(w, "    <link>").unwrap();
            if let Some(link) = road.predecessor {
                writeln!(
                    w,
                    r#"      <predecessor elementType="{}" elementId="{}" contactPoint="{}"/>"#,
                    match link.kind {
                        crate::xodr::LinkKind::Road => "road",
                        crate::xodr::LinkKind::Junction => "junction",
                    },
                    link.id,
                    link.contact.as_str()
                )
                .unwrap();
            }
            if let Some(link) = road.successor {
                writeln!(
                    w,
                    r#"      <successor elementType="{}" elementId="{}" contactPoint="{}"/>"#,
                    match link.kind {
                        crate::xodr::LinkKind::Road => "road",
                        crate::xodr::LinkKind::Junction => "junction",
                    },
                    link.id,
                    link.contact.as_str()
                )
                .unwrap();
            }
            writeln!(w, "    </link>").unwrap();
        }

        writeln!(w, "    <planView>").unwrap();
        for g in &road.geometry {
            writeln!(
                w,
                r#"      <geometry s="{}" x="{}" y="{}" hdg="{}" length="{}">"#,
                fmt_f(g.s),
                fmt_f(g.x),
                fmt_f(g.y),
                fmt_f(g.hdg),
                fmt_f(g.length)
            )
            .unwrap();
            match g.shape {
                Shape::Line => writeln!(w, "        <line/>").unwrap(),
                Shape::Arc { curvature } => {
                    writeln!(w, r#"        <arc curvature="{}"/>"#, fmt_f(curvature)).unwrap()
                }
                Shape::Spiral {
                    curv_start,
                    curv_end,
                } => writeln!(
                    w,
                    r#"        <spiral curvStart="{}" curvEnd="{}"/>"#,
                    fmt_f(curv_start),
                    fmt_f(curv_end)
                )
                .unwrap(),
                Shape::ParamPoly3 {
                    au,
                    bu,
                    cu,
                    du,
                    av,
                    bv,
                    cv,
                    dv,
                } => writeln!(
                    w,
                    r#"        <paramPoly3 aU="{}" bU="{}" cU="{}" dU="{}" aV="{}" bV="{}" cV="{}" dV="{}" pRange="normalized"/>"#,
                    fmt_f(au),
                    fmt_f(bu),
                    fmt_f(cu),
                    fmt_f(du),
                    fmt_f(av),
                    fmt_f(bv),
                    fmt_f(cv),
                    fmt_f(dv)
                )
                .unwrap(),
            }
            writeln!(w, "      </geometry>").unwrap();
        }
        writeln!(w, "    </planView>").unwrap();

        if !road.elevation.is_empty() {
            writeln!(w, "    <elevationProfile>").unwrap();
            for e in &road.elevation {
                writeln!(
                    w,
                    r#"      <elevation s="{}" a="{}" b="{}" c="{}" d="{}"/>"#,
                    fmt_f(e.s),
                    fmt_f(e.a),
                    fmt_f(e.b),
                    fmt_f(e.c),
                    fmt_f(e.d)
                )
                .unwrap();
            }
            writeln!(w, "    </elevationProfile>").unwrap();
        }

        if !road.superelevation.is_empty() {
            writeln!(w, "    <lateralProfile>").unwrap();
            for e in &road.superelevation {
                writeln!(
                    w,
                    r#"      <superelevation s="{}" a="{}" b="{}" c="{}" d="{}"/>"#,
                    fmt_f(e.s),
                    fmt_f(e.a),
                    fmt_f(e.b),
                    fmt_f(e.c),
                    fmt_f(e.d)
                )
                .unwrap();
            }
            writeln!(w, "    </lateralProfile>").unwrap();
        }

        writeln!(w, "    <lanes>").unwrap();
        for o in &road.lane_offset {
            writeln!(
                w,
                r#"      <laneOffset s="{}" a="{}" b="{}" c="{}" d="{}"/>"#,
                fmt_f(o.s),
                fmt_f(o.a),
                fmt_f(o.b),
                fmt_f(o.c),
                fmt_f(o.d)
            )
            .unwrap();
        }
        for section in &road.sections {
            writeln!(w, r#"      <laneSection s="{}">"#, fmt_f(section.s)).unwrap();
            writeln!(w, "        <center>").unwrap();
            writeln!(w, r#"          <lane id="0" type="none" level="false">"#).unwrap();
            writeln!(
                w,
                r#"            <roadMark sOffset="0" type="{}" weight="standard" color="white" width="0.15"/>"#,
                mark_str(section.center_mark)
            )
            .unwrap();
            writeln!(w, "          </lane>").unwrap();
            writeln!(w, "        </center>").unwrap();
            writeln!(w, "        <right>").unwrap();
            for lane in &section.lanes {
                writeln!(
                    w,
                    r#"          <lane id="{}" type="{}" level="false">"#,
                    lane.id,
                    lane.lane_type.as_str()
                )
                .unwrap();
                if lane.predecessor.is_some() || lane.successor.is_some() {
                    writeln!(w, "            <link>").unwrap();
                    if let Some(p) = lane.predecessor {
                        writeln!(w, r#"              <predecessor id="{p}"/>"#).unwrap();
                    }
                    if let Some(sc) = lane.successor {
                        writeln!(w, r#"              <successor id="{sc}"/>"#).unwrap();
                    }
                    writeln!(w, "            </link>").unwrap();
                }
                writeln!(
                    w,
                    r#"            <width sOffset="{}" a="{}" b="{}" c="{}" d="{}"/>"#,
                    fmt_f(lane.width.s),
                    fmt_f(lane.width.a),
                    fmt_f(lane.width.b),
                    fmt_f(lane.width.c),
                    fmt_f(lane.width.d)
                )
                .unwrap();
                writeln!(
                    w,
                    r#"            <roadMark sOffset="0" type="{}" weight="standard" color="white" width="0.15"/>"#,
                    mark_str(lane.road_mark)
                )
                .unwrap();
                writeln!(w, "          </lane>").unwrap();
            }
            writeln!(w, "        </right>").unwrap();
            writeln!(w, "      </laneSection>").unwrap();
        }
        writeln!(w, "    </lanes>").unwrap();
        writeln!(w, "  </road>").unwrap();
    }

    for junction in &doc.junctions {
        writeln!(
            w,
            r#"  <junction id="{}" name="{}">"#,
            junction.junction_id, junction.name
        )
        .unwrap();
        for conn in &junction.connections {
            writeln!(
                w,
                r#"    <connection id="{}" incomingRoad="{}" connectingRoad="{}" contactPoint="{}">"#,
                conn.id,
                conn.incoming_road,
                conn.connecting_road,
                conn.contact.as_str()
            )
            .unwrap();
            for &(from, to) in &conn.lane_links {
                writeln!(w, r#"      <laneLink from="{from}" to="{to}"/>"#).unwrap();
            }
            writeln!(w, "    </connection>").unwrap();
        }
        writeln!(w, "  </junction>").unwrap();
    }

    writeln!(w, "</OpenDRIVE>").unwrap();
    Ok(out)
}

/// Write the document to a file.
pub fn write_xml(doc: &XodrDocument, path: &Path) -> Result<()> {
    let text = document_to_string(doc)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPoint;

    #[test]
    fn empty_document_has_header_only() {
        let doc = XodrDocument::empty("empty", GeoPoint::new(48.7, 9.0, 0.0).unwrap());
        let text = document_to_string(&doc).unwrap();
        assert!(text.contains("<OpenDRIVE>"));
        assert!(text.contains("geoReference"));
        assert!(text.contains("+lat_0=48.7 +lon_0=9"));
        assert!(!text.contains("<road"));
        // parseable XML
        roxmltree::Document::parse(&text).unwrap();
    }

    #[test]
    fn float_formatting_round_trips() {
        let v = 0.1234567890123456789_f64;
        let s = fmt_f(v);
        let back: f64 = s.parse().unwrap();
        assert_eq!(v, back);
        assert_eq!(fmt_f(-0.0), "0");
    }
}
