//! OpenDRIVE parsing for evaluation.
//!
//! Accepts the subset this tool writes, plus line/arc/spiral geometry from
//! third-party files. Only what reference-line sampling needs is read.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::xodr::{GeometryElement, Shape};

/// One parsed road, reduced to its reference-line geometry.
#[derive(Debug, Clone)]
pub struct EvalRoad {
    pub id: u64,
    pub length: f64,
    pub geometry: Vec<GeometryElement>,
}

/// Parsed document view for evaluation.
#[derive(Debug, Clone, Default)]
pub struct EvalDocument {
    /// Projection origin from the header geo reference, when present.
    pub geo_origin: Option<GeoPoint>,
    pub roads: Vec<EvalRoad>,
}

pub fn parse_file(path: &Path) -> Result<EvalDocument> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_str(&text, &path.display().to_string())
}

pub fn parse_str(xml: &str, file: &str) -> Result<EvalDocument> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| Error::Xml {
        file: file.to_string(),
        message: e.to_string(),
    })?;
    let root = doc.root_element();
    if root.tag_name().name() != "OpenDRIVE" {
        return Err(Error::Xml {
            file: file.to_string(),
            message: "root element is not <OpenDRIVE>".into(),
        });
    }

    let mut out = EvalDocument::default();

    if let Some(header) = root.children().find(|n| n.has_tag_name("header")) {
        if let Some(geo) = header.children().find(|n| n.has_tag_name("geoReference")) {
            if let Some(text) = geo.text() {
                out.geo_origin = parse_proj_origin(text);
            }
        }
    }

    for road in root.children().filter(|n| n.has_tag_name("road")) {
        let id: u64 = attr_f(&road, "id", file)?;
        let length: f64 = attr_f(&road, "length", file)?;
        let plan_view = road
            .children()
            .find(|n| n.has_tag_name("planView"))
            .ok_or_else(|| Error::Xml {
                file: file.to_string(),
                message: format!("road {id} has no planView"),
            })?;
        let mut geometry = Vec::new();
        for geom in plan_view.children().filter(|n| n.has_tag_name("geometry")) {
            let s: f64 = attr_f(&geom, "s", file)?;
            let x: f64 = attr_f(&geom, "x", file)?;
            let y: f64 = attr_f(&geom, "y", file)?;
            let hdg: f64 = attr_f(&geom, "hdg", file)?;
            let elem_length: f64 = attr_f(&geom, "length", file)?;
            let shape_node = geom
                .children()
                .find(|n| n.is_element())
                .ok_or_else(|| Error::Xml {
                    file: file.to_string(),
                    message: format!("geometry at s={s} has no shape element"),
                })?;
            let shape = match shape_node.tag_name().name() {
                "line" => Shape::Line,
                "arc" => Shape::Arc {
                    curvature: attr_f(&shape_node, "curvature", file)?,
                },
                "spiral" => Shape::Spiral {
                    curv_start: attr_f(&shape_node, "curvStart", file)?,
                    curv_end: attr_f(&shape_node, "curvEnd", file)?,
                },
                "paramPoly3" => {
                    let p_range = shape_node.attribute("pRange").unwrap_or("normalized");
                    if p_range != "normalized" {
                        return Err(Error::Xml {
                            file: file.to_string(),
                            message: format!(
                                "unsupported paramPoly3 pRange `{p_range}` at s={s}"
                            ),
                        });
                    }
                    Shape::ParamPoly3 {
                        au: attr_f(&shape_node, "aU", file)?,
                        bu: attr_f(&shape_node, "bU", file)?,
                        cu: attr_f(&shape_node, "cU", file)?,
                        du: attr_f(&shape_node, "dU", file)?,
                        av: attr_f(&shape_node, "aV", file)?,
                        bv: attr_f(&shape_node, "bV", file)?,
                        cv: attr_f(&shape_node, "cV", file)?,
                        dv: attr_f(&shape_node, "dV", file)?,
                    }
                }
                other => {
                    return Err(Error::Xml {
                        file: file.to_string(),
                        message: format!("unknown geometry type <{other}> at s={s}"),
                    })
                }
            };
            geometry.push(GeometryElement {
                s,
                x,
                y,
                hdg,
                length: elem_length,
                shape,
            });
        }
        geometry.sort_by(|a, b| a.s.total_cmp(&b.s));
        out.roads.push(EvalRoad {
            id,
            length,
            geometry,
        });
    }
    Ok(out)
}

fn parse_proj_origin(proj: &str) -> Option<GeoPoint> {
    let mut lat = None;
    let mut lon = None;
    for token in proj.split_whitespace() {
        if let Some(v) = token.strip_prefix("+lat_0=") {
            lat = v.parse::<f64>().ok();
        } else if let Some(v) = token.strip_prefix("+lon_0=") {
            lon = v.parse::<f64>().ok();
        }
    }
    match (lat, lon) {
        (Some(lat), Some(lon)) => GeoPoint::new(lat, lon, 0.0).ok(),
        _ => None,
    }
}

fn attr_f<T: std::str::FromStr>(node: &roxmltree::Node, name: &str, file: &str) -> Result<T> {
    node.attribute(name)
        .ok_or_else(|| Error::Xml {
            file: file.to_string(),
            message: format!("<{}> missing attribute `{name}`", node.tag_name().name()),
        })?
        .parse::<T>()
        .map_err(|_| Error::Xml {
            file: file.to_string(),
            message: format!(
                "<{}> attribute `{name}` not parseable",
                node.tag_name().name()
            ),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_document() {
        let xml = r#"<?xml version="1.0"?>
<OpenDRIVE>
  <header revMajor="1" revMinor="6" name="t">
    <geoReference><![CDATA[+proj=tmerc +lat_0=48.7 +lon_0=9 +k=1]]></geoReference>
  </header>
  <road name="r" length="100" id="1" junction="-1">
    <planView>
      <geometry s="0" x="0" y="0" hdg="0" length="100"><line/></geometry>
    </planView>
  </road>
</OpenDRIVE>"#;
        let doc = parse_str(xml, "t.xodr").unwrap();
        let origin = doc.geo_origin.unwrap();
        assert_eq!(origin.lat, 48.7);
        assert_eq!(origin.lon, 9.0);
        assert_eq!(doc.roads.len(), 1);
        assert_eq!(doc.roads[0].geometry.len(), 1);
    }

    #[test]
    fn unknown_geometry_type_is_an_error() {
        let xml = r#"<OpenDRIVE><road id="1" length="10"><planView>
            <geometry s="0" x="0" y="0" hdg="0" length="10"><poly3 a="0" b="0" c="0" d="0"/></geometry>
        </planView></road></OpenDRIVE>"#;
        let err = parse_str(xml, "t.xodr").unwrap_err();
        match err {
            Error::Xml { message, .. } => assert!(message.contains("poly3"), "{message}"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
