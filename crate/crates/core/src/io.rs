//! File formats: PFM heatmaps, JSON annotations, manifests and detections,
//! DGP1 model files.
//!
//! JSON documents are read through a [`Document`], which keeps any fields
//! the typed schema does not know about and writes them back unchanged.
//! Schema errors carry the path of the offending field, e.g.
//! `rulers[0].length_cm`.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::deepgp::DeepGpModel;
use crate::error::{Error, Result};
use crate::eval::{Annotation, LineAnnotation, PointAnnotation};
use crate::geometry::Point2;
use crate::heatmap::Heatmap;
use crate::synth::SynthRecord;

pub const MANIFEST_VERSION: u32 = 1;

// ---- PFM ----

/// Greyscale little-endian PFM: `Pf\n{w} {h}\n-1.0\n` then rows bottom to
/// top as f32 LE.
pub fn write_pfm<W: Write>(h: &Heatmap, mut w: W) -> Result<()> {
    let (width, height) = (h.width(), h.height());
    write!(w, "Pf\n{width} {height}\n-1.0\n")?;
    let mut buf = Vec::with_capacity(width * height * 4);
    for row in h.values().chunks(width).rev() {
        for v in row {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn pfm_bytes(h: &Heatmap) -> Vec<u8> {
    let mut out = Vec::new();
    write_pfm(h, &mut out).expect("writing to a Vec cannot fail");
    out
}

/// Next whitespace-delimited header token; returns it and the offset just
/// past the single whitespace byte that ends it.
fn header_token(bytes: &[u8], mut pos: usize) -> Result<(&str, usize)> {
    while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
        pos += 1;
    }
    let start = pos;
    while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
        pos += 1;
    }
    if start == pos || pos >= bytes.len() {
        return Err(Error::MalformedHeader("header ends early".into()));
    }
    let tok = std::str::from_utf8(&bytes[start..pos]).map_err(|_| Error::MalformedHeader("non-ASCII header".into()))?;
    Ok((tok, pos + 1))
}

pub fn parse_pfm(bytes: &[u8]) -> Result<Heatmap> {
    let (magic, pos) = header_token(bytes, 0)?;
    if magic != "Pf" {
        return Err(Error::MalformedHeader(format!("magic {magic:?}, expected \"Pf\"")));
    }
    let (w, pos) = header_token(bytes, pos)?;
    let (h, pos) = header_token(bytes, pos)?;
    let (scale, pos) = header_token(bytes, pos)?;
    let dim = |s: &str| -> Result<usize> {
        s.parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| Error::MalformedHeader(format!("bad dimension {s:?}")))
    };
    let (width, height) = (dim(w)?, dim(h)?);
    let scale: f64 = scale
        .parse()
        .map_err(|_| Error::MalformedHeader(format!("bad scale {scale:?}")))?;
    if !(scale < 0.0) {
        return Err(Error::MalformedHeader(format!(
            "scale {scale}: only little-endian (negative scale) files are supported"
        )));
    }
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::MalformedHeader("dimensions overflow".into()))?;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::MalformedHeader(format!("{} trailing bytes", payload.len() - expected)));
    }
    let mut values = vec![0f32; width * height];
    for (r, row) in payload.chunks_exact(width * 4).enumerate() {
        let y = height - 1 - r;
        for (x, v) in row.chunks_exact(4).enumerate() {
            values[y * width + x] = f32::from_le_bytes([v[0], v[1], v[2], v[3]]);
        }
    }
    Heatmap::new(width, height, values)
}

pub fn read_pfm(path: &Path) -> Result<Heatmap> {
    parse_pfm(&read_file(path)?)
}

pub fn save_pfm(h: &Heatmap, path: &Path) -> Result<()> {
    fs::write(path, pfm_bytes(h))?;
    Ok(())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(fs::read(path)?)
}

// ---- JSON with field paths and preserved extras ----

/// Fields of `orig` that are absent from `typed`, with the same nesting.
/// Arrays are matched by position.
fn diff(orig: &Value, typed: &Value) -> Option<Value> {
    match (orig, typed) {
        (Value::Object(o), Value::Object(t)) => {
            let mut out = Map::new();
            for (k, v) in o {
                match t.get(k) {
                    None => {
                        out.insert(k.clone(), v.clone());
                    }
                    Some(tv) => {
                        if let Some(d) = diff(v, tv) {
                            out.insert(k.clone(), d);
                        }
                    }
                }
            }
            (!out.is_empty()).then_some(Value::Object(out))
        }
        (Value::Array(o), Value::Array(t)) if o.len() == t.len() => {
            let items: Vec<Value> = o.iter().zip(t).map(|(a, b)| diff(a, b).unwrap_or(Value::Null)).collect();
            items.iter().any(|v| !v.is_null()).then_some(Value::Array(items))
        }
        _ => None,
    }
}

fn merge(target: &mut Value, extras: &Value) {
    match (target, extras) {
        (Value::Object(t), Value::Object(e)) => {
            for (k, v) in e {
                match t.get_mut(k) {
                    Some(tv) => merge(tv, v),
                    None => {
                        t.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (Value::Array(t), Value::Array(e)) => {
            for (tv, ev) in t.iter_mut().zip(e) {
                merge(tv, ev);
            }
        }
        _ => {}
    }
}

fn schema_error(err: serde_path_to_error::Error<serde_json::Error>) -> Error {
    let mut path = err.path().to_string();
    let message = err.inner().to_string();
    // missing-field errors are reported at the enclosing object
    if let Some(field) = message.strip_prefix("missing field `").and_then(|m| m.split('`').next()) {
        path = if path == "." { field.to_string() } else { format!("{path}.{field}") };
    }
    Error::SchemaViolation { path, message }
}

/// Typed view of `value`, with errors located by field path.
pub fn from_value<T: DeserializeOwned>(value: &Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(schema_error)
}

/// A typed JSON document plus the fields the type does not model.
#[derive(Debug, Clone, PartialEq)]
pub struct Document<T> {
    pub data: T,
    pub extras: Option<Value>,
}

impl<T: Serialize + DeserializeOwned> Document<T> {
    pub fn new(data: T) -> Self {
        Self { data, extras: None }
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        let value: Value = serde_json::from_slice(bytes).map_err(|e| Error::SchemaViolation {
            path: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        let data: T = from_value(&value)?;
        let extras = diff(&value, &serde_json::to_value(&data)?);
        Ok(Self { data, extras })
    }

    pub fn to_value(&self) -> Result<Value> {
        let mut v = serde_json::to_value(&self.data)?;
        if let Some(e) = &self.extras {
            merge(&mut v, e);
        }
        Ok(v)
    }

    /// Pretty JSON with a trailing newline. Floats use the shortest form
    /// that parses back to the same value.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_value()?)? + "\n")
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_slice(&read_file(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn prefixed(e: Error, prefix: &str) -> Error {
    match e {
        Error::SchemaViolation { path, message } => Error::SchemaViolation {
            path: format!("{prefix}{path}"),
            message,
        },
        other => other,
    }
}

pub fn read_point_annotation(path: &Path) -> Result<Document<PointAnnotation>> {
    let doc = Document::<PointAnnotation>::read(path)?;
    doc.data.validate()?;
    Ok(doc)
}

pub fn read_line_annotation(path: &Path) -> Result<Document<LineAnnotation>> {
    let doc = Document::<LineAnnotation>::read(path)?;
    doc.data.validate()?;
    Ok(doc)
}

/// `{"points": {...}}` or `{"lines": {...}}`.
pub fn read_annotation(path: &Path) -> Result<Document<Annotation>> {
    let doc = Document::<Annotation>::read(path)?;
    let prefix = match &doc.data {
        Annotation::Points(_) => "points.",
        Annotation::Lines(_) => "lines.",
    };
    doc.data.validate().map_err(|e| prefixed(e, prefix))?;
    Ok(doc)
}

// ---- detections ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectionSource {
    Heatmap,
    External,
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFile {
    pub image_id: String,
    pub points: Vec<Point2>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<DetectionSource>,
}

impl DetectionFile {
    pub fn validate(&self) -> Result<()> {
        match self.points.iter().position(|p| !p.is_finite()) {
            Some(i) => Err(Error::SchemaViolation {
                path: format!("points[{i}]"),
                message: "non-finite coordinate".into(),
            }),
            None => Ok(()),
        }
    }
}

pub fn read_detections(path: &Path) -> Result<Document<DetectionFile>> {
    let doc = Document::<DetectionFile>::read(path)?;
    doc.data.validate()?;
    Ok(doc)
}

// ---- manifest ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Image path, relative to the manifest's directory.
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub annotation: Annotation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heatmap: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<Vec<Point2>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Self {
        Self {
            version: MANIFEST_VERSION,
            entries,
        }
    }

    /// Schema checks that do not touch the file system.
    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::SchemaViolation {
                path: "version".into(),
                message: format!("unsupported version {}, expected {MANIFEST_VERSION}", self.version),
            });
        }
        let mut seen = HashSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::SchemaViolation {
                    path: format!("entries[{i}].id"),
                    message: format!("duplicate id {:?}", e.id),
                });
            }
            if e.width == 0 || e.height == 0 {
                return Err(Error::SchemaViolation {
                    path: format!("entries[{i}].width"),
                    message: "image size must be positive".into(),
                });
            }
            let kind = match e.annotation {
                Annotation::Points(_) => "points",
                Annotation::Lines(_) => "lines",
            };
            e.annotation
                .validate()
                .map_err(|err| prefixed(err, &format!("entries[{i}].annotation.{kind}.")))?;
            if let Some(j) = e.detections.iter().flatten().position(|p| !p.is_finite()) {
                return Err(Error::SchemaViolation {
                    path: format!("entries[{i}].detections[{j}]"),
                    message: "non-finite coordinate".into(),
                });
            }
        }
        Ok(())
    }

    /// Fails with `MissingFile` for the first referenced file that does not
    /// exist under `base`.
    pub fn check_files(&self, base: &Path) -> Result<()> {
        for e in &self.entries {
            for rel in std::iter::once(&e.image).chain(e.heatmap.as_ref()) {
                let p = base.join(rel);
                if !p.exists() {
                    return Err(Error::MissingFile(p));
                }
            }
        }
        Ok(())
    }
}

/// A loaded manifest and the directory its paths are relative to.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub doc: Document<DatasetManifest>,
    pub base: PathBuf,
}

impl Manifest {
    pub fn entries(&self) -> &[ManifestEntry] {
        &self.doc.data.entries
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.base.join(rel)
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let doc = Document::<DatasetManifest>::read(path)?;
    doc.data.validate()?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    doc.data.check_files(&base)?;
    Ok(Manifest { doc, base })
}

// ---- images and models ----

/// PNG or PPM, converted to 8-bit RGB.
pub fn read_image(path: &Path) -> Result<image::RgbImage> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(image::open(path)?.to_rgb8())
}

pub fn read_model(path: &Path) -> Result<DeepGpModel> {
    DeepGpModel::from_bytes(&read_file(path)?)
}

pub fn write_model(model: &DeepGpModel, path: &Path) -> Result<()> {
    fs::write(path, model.to_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{LineRuler, PointRuler};
    use proptest::prelude::*;

    fn point_annotation() -> PointAnnotation {
        PointAnnotation {
            rulers: vec![PointRuler {
                id: "r0".into(),
                marks: vec![Point2::new(1.0, 2.0), Point2::new(11.0, 2.5)],
            }],
        }
    }

    #[test]
    fn pfm_layout_is_bottom_row_first() {
        let h = Heatmap::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let bytes = pfm_bytes(&h);
        let header = b"Pf\n2 2\n-1.0\n";
        assert_eq!(&bytes[..header.len()], header);
        let first = f32::from_le_bytes(bytes[header.len()..header.len() + 4].try_into().unwrap());
        assert_eq!(first, 0.3);
        assert_eq!(parse_pfm(&bytes).unwrap(), h);
    }

    #[test]
    fn pfm_errors() {
        let h = Heatmap::new(3, 2, vec![0.5; 6]).unwrap();
        let mut bytes = pfm_bytes(&h);
        let big = String::from_utf8_lossy(&bytes[..12]).replace("-1.0", "1.0");
        let mut be = big.into_bytes();
        be.extend_from_slice(&bytes[12..]);
        assert!(matches!(parse_pfm(&be), Err(Error::MalformedHeader(_))));
        assert!(matches!(parse_pfm(b"PF\n1 1\n-1.0\n\0\0\0\0"), Err(Error::MalformedHeader(_))));
        assert!(matches!(parse_pfm(b"Pf\n0 1\n-1.0\n"), Err(Error::MalformedHeader(_))));
        assert!(matches!(parse_pfm(b"Pf\n"), Err(Error::MalformedHeader(_))));
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(
            parse_pfm(&bytes),
            Err(Error::TruncatedPayload { expected: 24, found: 21 })
        ));
    }

    #[test]
    fn point_annotation_round_trips() {
        let doc = Document::new(point_annotation());
        let back = Document::<PointAnnotation>::from_slice(doc.to_json().unwrap().as_bytes()).unwrap();
        assert_eq!(back.data, doc.data);
        assert_eq!(back.extras, None);
    }

    #[test]
    fn missing_length_is_located() {
        let json = r#"{"rulers": [{"id": "a", "endpoints": [{"x": 0, "y": 0}, {"x": 5, "y": 0}]}]}"#;
        match Document::<LineAnnotation>::from_slice(json.as_bytes()) {
            Err(Error::SchemaViolation { path, .. }) => assert_eq!(path, "rulers[0].length_cm"),
            other => panic!("{other:?}"),
        }
        let wrong_type = r#"{"rulers": [{"id": "a", "endpoints": [{"x": 0, "y": 0}, {"x": "5", "y": 0}], "length_cm": 1}]}"#;
        match Document::<LineAnnotation>::from_slice(wrong_type.as_bytes()) {
            Err(Error::SchemaViolation { path, .. }) => assert_eq!(path, "rulers[0].endpoints[1].x"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_fields_survive_round_trip() {
        let json = r#"{"camera": {"model": "x"}, "rulers": [{"id": "a", "color": "red",
            "marks": [{"x": 0.1, "y": 0, "conf": 0.9}, {"x": 3, "y": 4}]}]}"#;
        let doc = Document::<PointAnnotation>::from_slice(json.as_bytes()).unwrap();
        let again = Document::<PointAnnotation>::from_slice(doc.to_json().unwrap().as_bytes()).unwrap();
        let v = again.to_value().unwrap();
        assert_eq!(v["camera"]["model"], "x");
        assert_eq!(v["rulers"][0]["color"], "red");
        assert_eq!(v["rulers"][0]["marks"][0]["conf"], 0.9);
        assert_eq!(again, doc);
    }

    #[test]
    fn manifest_checks() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.png"), b"").unwrap();
        let entry = |id: &str, image: &str| ManifestEntry {
            id: id.into(),
            image: image.into(),
            width: 10,
            height: 10,
            annotation: Annotation::Points(point_annotation()),
            heatmap: None,
            detections: None,
            synth: None,
        };
        let path = dir.path().join("m.json");
        Document::new(DatasetManifest::new(vec![entry("a", "a.png")])).write(&path).unwrap();
        let m = read_manifest(&path).unwrap();
        assert_eq!(m.entries().len(), 1);

        Document::new(DatasetManifest::new(vec![entry("a", "a.png"), entry("a", "a.png")])).write(&path).unwrap();
        assert!(matches!(read_manifest(&path), Err(Error::SchemaViolation { path, .. }) if path == "entries[1].id"));

        Document::new(DatasetManifest::new(vec![entry("b", "b.png")])).write(&path).unwrap();
        assert!(matches!(read_manifest(&path), Err(Error::MissingFile(_))));

        let mut bad = DatasetManifest::new(vec![entry("a", "a.png")]);
        bad.version = 2;
        Document::new(bad).write(&path).unwrap();
        assert!(matches!(read_manifest(&path), Err(Error::SchemaViolation { path, .. }) if path == "version"));

        let mut lines = entry("a", "a.png");
        lines.annotation = Annotation::Lines(LineAnnotation {
            rulers: vec![LineRuler {
                id: "l".into(),
                endpoints: [Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)],
                length_cm: -1.0,
            }],
        });
        Document::new(DatasetManifest::new(vec![lines])).write(&path).unwrap();
        assert!(matches!(read_manifest(&path),
            Err(Error::SchemaViolation { path, .. }) if path == "entries[0].annotation.lines.rulers[0].length_cm"));
    }

    #[test]
    fn detection_source_names() {
        let d = DetectionFile {
            image_id: "i".into(),
            points: vec![],
            source: Some(DetectionSource::GroundTruth),
        };
        assert!(serde_json::to_string(&d).unwrap().contains("\"ground-truth\""));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn pfm_round_trip_is_bit_exact(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = crate::seed::rng(seed);
            let values: Vec<f32> = (0..w * h).map(|_| rng.random::<f32>()).collect();
            let hm = Heatmap::new(w, h, values.clone()).unwrap();
            let back = parse_pfm(&pfm_bytes(&hm)).unwrap();
            let bits: Vec<u32> = back.values().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits, values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }

        #[test]
        fn annotation_json_round_trip_is_exact(
            pts in prop::collection::vec((-1e6..1e6f64, -1e6..1e6f64), 2..30),
            cm in 1e-3..1e3f64,
        ) {
            let marks: Vec<Point2> = pts.iter().map(|&(x, y)| Point2::new(x, y)).collect();
            let a = Document::new(PointAnnotation { rulers: vec![PointRuler { id: "r".into(), marks: marks.clone() }] });
            let back = Document::<PointAnnotation>::from_slice(a.to_json().unwrap().as_bytes()).unwrap();
            prop_assert_eq!(&back.data, &a.data);
            let l = Document::new(LineAnnotation { rulers: vec![LineRuler {
                id: "l".into(), endpoints: [marks[0], marks[1]], length_cm: cm }] });
            let back = Document::<LineAnnotation>::from_slice(l.to_json().unwrap().as_bytes()).unwrap();
            prop_assert_eq!(&back.data, &l.data);
        }
    }
}
