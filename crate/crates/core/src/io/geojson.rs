//! Statistical areas as a GeoJSON FeatureCollection in the planar CRS of the
//! BTS coordinates. Each feature carries a string `area_id` property and a
//! Polygon or MultiPolygon geometry.

use std::path::Path;

use serde_json::{json, Map, Value};

use super::{read_text, write_text};
use crate::error::{Error, Result};
use crate::geo::{mask_outline, AreaGeometry, AreaId, Grid, Ring, StatArea, StatAreaSet};

fn schema(feature: usize, msg: impl std::fmt::Display) -> Error {
    Error::Schema(format!("feature {feature}: {msg}"))
}

fn parse_ring(feature: usize, v: &Value) -> Result<Ring> {
    let pts = v
        .as_array()
        .ok_or_else(|| schema(feature, "ring is not an array"))?;
    let ring = pts
        .iter()
        .map(|p| match p.as_array().map(Vec::as_slice) {
            Some([x, y, ..]) => match (x.as_f64(), y.as_f64()) {
                (Some(x), Some(y)) if x.is_finite() && y.is_finite() => Ok((x, y)),
                _ => Err(schema(
                    feature,
                    "coordinate is not a pair of finite numbers",
                )),
            },
            _ => Err(schema(feature, "position needs at least two numbers")),
        })
        .collect::<Result<Ring>>()?;
    if ring.len() < 4 {
        return Err(schema(
            feature,
            format!("ring has {} positions, needs at least 4", ring.len()),
        ));
    }
    if ring.first() != ring.last() {
        return Err(schema(feature, "ring is not closed"));
    }
    Ok(ring)
}

fn parse_polygon(feature: usize, v: &Value) -> Result<Vec<Ring>> {
    let rings = v
        .as_array()
        .ok_or_else(|| schema(feature, "polygon is not an array of rings"))?;
    if rings.is_empty() {
        return Err(schema(feature, "polygon has no rings"));
    }
    rings.iter().map(|r| parse_ring(feature, r)).collect()
}

fn parse_feature(i: usize, f: &Value) -> Result<StatArea> {
    let f = f.as_object().ok_or_else(|| schema(i, "not an object"))?;
    if f.get("type").and_then(Value::as_str) != Some("Feature") {
        return Err(schema(i, "type must be `Feature`"));
    }
    let id = match f.get("properties").and_then(|p| p.get("area_id")) {
        Some(Value::String(s)) if !s.is_empty() => AreaId(s.clone()),
        Some(Value::String(_)) => return Err(schema(i, "empty area_id")),
        Some(_) => return Err(schema(i, "area_id must be a string")),
        None => return Err(schema(i, "missing properties.area_id")),
    };
    let geom = f
        .get("geometry")
        .and_then(Value::as_object)
        .ok_or_else(|| schema(i, "missing geometry"))?;
    let coords = geom
        .get("coordinates")
        .ok_or_else(|| schema(i, "geometry has no coordinates"))?;
    let polygons = match geom.get("type").and_then(Value::as_str) {
        Some("Polygon") => vec![parse_polygon(i, coords)?],
        Some("MultiPolygon") => {
            let polys = coords
                .as_array()
                .ok_or_else(|| schema(i, "MultiPolygon coordinates are not an array"))?;
            if polys.is_empty() {
                return Err(schema(i, "MultiPolygon is empty"));
            }
            polys
                .iter()
                .map(|p| parse_polygon(i, p))
                .collect::<Result<_>>()?
        }
        Some(other) => {
            return Err(schema(
                i,
                format!("geometry type `{other}` is not a polygon"),
            ))
        }
        None => return Err(schema(i, "geometry has no type")),
    };
    Ok(StatArea {
        id,
        geometry: AreaGeometry::Polygons(polygons),
    })
}

/// Parses a FeatureCollection; feature order is kept and duplicate ids are
/// rejected.
pub fn parse_areas(text: &str) -> Result<StatAreaSet> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::Schema(
            "top-level type must be `FeatureCollection`".into(),
        ));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Schema("`features` must be an array".into()))?;
    let areas = features
        .iter()
        .enumerate()
        .map(|(i, f)| parse_feature(i, f))
        .collect::<Result<Vec<_>>>()?;
    StatAreaSet::new(areas)
}

pub fn load_areas(path: &Path) -> Result<StatAreaSet> {
    parse_areas(&read_text(path)?)
}

fn ring_json(r: &Ring) -> Value {
    Value::Array(r.iter().map(|&(x, y)| json!([x, y])).collect())
}

/// FeatureCollection text. Mask areas need `grid` and are written as one
/// rectangle per run of pixels.
pub fn write_areas(areas: &StatAreaSet, grid: Option<&Grid>) -> Result<String> {
    let mut features = Vec::with_capacity(areas.len());
    for a in areas.areas() {
        let polygons: Vec<Vec<Ring>> = match &a.geometry {
            AreaGeometry::Polygons(p) => p.clone(),
            AreaGeometry::Mask(m) => {
                let g = grid.ok_or_else(|| {
                    Error::Geometry(format!("area `{}` is a mask but no grid was given", a.id))
                })?;
                mask_outline(m, g).into_iter().map(|r| vec![r]).collect()
            }
        };
        let geometry = if polygons.len() == 1 {
            json!({"type": "Polygon", "coordinates": polygons[0].iter().map(ring_json).collect::<Vec<_>>()})
        } else {
            json!({
                "type": "MultiPolygon",
                "coordinates": polygons
                    .iter()
                    .map(|p| p.iter().map(ring_json).collect::<Vec<_>>())
                    .collect::<Vec<_>>()
            })
        };
        let mut props = Map::new();
        props.insert("area_id".into(), Value::String(a.id.0.clone()));
        features.push(json!({"type": "Feature", "properties": props, "geometry": geometry}));
    }
    let doc = json!({"type": "FeatureCollection", "features": features});
    let mut text = serde_json::to_string_pretty(&doc).expect("json value serialises");
    text.push('\n');
    Ok(text)
}

pub fn save_areas(areas: &StatAreaSet, grid: Option<&Grid>, path: &Path) -> Result<()> {
    write_text(path, &write_areas(areas, grid)?)
}
