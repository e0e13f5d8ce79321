//! Persistence: meshes, silhouettes, signature bundles and benchmark reports.

use std::fmt::Write as _;
use std::fs;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry2d::{Alpha, Point2, Silhouette};
use crate::metrics::PoseError;
use crate::projection::{PointCloud, ProjectionMode, TriangleMesh};
use crate::signatures::{DiscGrid, FieldKind, FieldMeta, SignatureField};

/// Bundle format tag and version written in every header.
pub const BUNDLE_FORMAT: &str = "silpose-signature-bundle";
pub const BUNDLE_VERSION: u32 = 1;

/// 64-bit FNV-1a hash of the little-endian coordinate bytes of the cloud, in order.
pub fn fingerprint(q: &PointCloud) -> u64 {
    let mut h = FnvHasher::default();
    for p in q.points() {
        for c in p.iter() {
            h.write(&c.to_le_bytes());
        }
    }
    h.finish()
}

fn fnv(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

// ---------------------------------------------------------------- meshes

/// Loads an ASCII OBJ or ASCII PLY mesh, chosen by extension or by content.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let text = fs::read(path)?;
    let text = String::from_utf8(text)
        .map_err(|_| Error::UnsupportedFormat("mesh file is not UTF-8 text".into()))?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("obj") => parse_obj(&text),
        Some("ply") => parse_ply(&text),
        _ if text.starts_with("ply") => parse_ply(&text),
        _ if text.lines().any(|l| l.trim_start().starts_with("v ")) => parse_obj(&text),
        _ => Err(Error::UnsupportedFormat(format!(
            "cannot determine mesh format of {}",
            path.display()
        ))),
    }
}

/// Parses `v` and `f` records; polygons are split into a triangle fan.
pub fn parse_obj(text: &str) -> Result<TriangleMesh> {
    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tok = content.split_whitespace();
        let key = tok.next().unwrap_or("");
        match key {
            "v" => {
                let c: Vec<&str> = tok.collect();
                if c.len() < 3 {
                    return Err(parse_err(line, "vertex needs three coordinates"));
                }
                let mut xyz = [0.0; 3];
                for (slot, s) in xyz.iter_mut().zip(&c) {
                    *slot = s
                        .parse::<f64>()
                        .map_err(|_| parse_err(line, format!("bad coordinate '{s}'")))?;
                }
                vertices.push(Vector3::from(xyz));
            }
            "f" => {
                let mut idx = Vec::new();
                for s in tok {
                    let first = s.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|_| parse_err(line, format!("bad face index '{s}'")))?;
                    let n = vertices.len() as i64;
                    let resolved = if i > 0 { i - 1 } else { n + i };
                    if i == 0 || resolved < 0 || resolved >= n {
                        return Err(parse_err(line, format!("face index {i} out of range")));
                    }
                    idx.push(resolved as usize);
                }
                if idx.len() < 3 {
                    return Err(parse_err(line, "face needs at least three vertices"));
                }
                for w in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[w], idx[w + 1]]);
                }
            }
            "vt" | "vn" | "vp" | "o" | "g" | "s" | "usemtl" | "mtllib" | "l" => {}
            other => return Err(parse_err(line, format!("unknown record '{other}'"))),
        }
    }
    TriangleMesh::new(vertices, faces)
}

/// Parses ASCII PLY with `vertex` (x, y, z properties) and `face` (vertex index list) elements.
pub fn parse_ply(text: &str) -> Result<TriangleMesh> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(Error::UnsupportedFormat("missing 'ply' magic".into())),
    }
    struct Element {
        name: String,
        count: usize,
        props: Vec<String>,
        list: bool,
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut saw_format = false;
    let mut last_line = 1;
    loop {
        let (line, l) = lines
            .next()
            .ok_or_else(|| parse_err(last_line, "header ended before end_header"))?;
        last_line = line;
        let tok: Vec<&str> = l.split_whitespace().collect();
        match tok.first().copied() {
            Some("format") => {
                if tok.get(1) != Some(&"ascii") {
                    return Err(Error::UnsupportedFormat(format!(
                        "PLY format '{}' (only ascii is supported)",
                        tok.get(1).unwrap_or(&"")
                    )));
                }
                saw_format = true;
            }
            Some("comment") | Some("obj_info") => {}
            Some("element") => {
                let count = tok
                    .get(2)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| parse_err(line, "bad element count"))?;
                elements.push(Element {
                    name: tok.get(1).unwrap_or(&"").to_string(),
                    count,
                    props: Vec::new(),
                    list: false,
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(line, "property before element"))?;
                if tok.get(1) == Some(&"list") {
                    el.list = true;
                }
                el.props.push(tok.last().unwrap_or(&"").to_string());
            }
            Some("end_header") => break,
            _ => return Err(parse_err(line, format!("unexpected header line '{l}'"))),
        }
    }
    if !saw_format {
        return Err(parse_err(last_line, "missing format line"));
    }
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for el in &elements {
        let pos = |name: &str| el.props.iter().position(|p| p == name);
        for _ in 0..el.count {
            let (line, l) = lines.next().ok_or_else(|| {
                parse_err(last_line + 1, format!("unexpected end of file in '{}' data", el.name))
            })?;
            last_line = line;
            let tok: Vec<&str> = l.split_whitespace().collect();
            match el.name.as_str() {
                "vertex" => {
                    let (ix, iy, iz) = match (pos("x"), pos("y"), pos("z")) {
                        (Some(a), Some(b), Some(c)) => (a, b, c),
                        _ => return Err(parse_err(line, "vertex element lacks x/y/z")),
                    };
                    let get = |i: usize| -> Result<f64> {
                        tok.get(i)
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| parse_err(line, "bad vertex record"))
                    };
                    vertices.push(Vector3::new(get(ix)?, get(iy)?, get(iz)?));
                }
                "face" if el.list => {
                    let n: usize = tok
                        .first()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| parse_err(line, "bad face record"))?;
                    if n < 3 || tok.len() < n + 1 {
                        return Err(parse_err(line, "bad face record"));
                    }
                    let mut idx = Vec::with_capacity(n);
                    for s in &tok[1..=n] {
                        let i: usize =
                            s.parse().map_err(|_| parse_err(line, "bad face index"))?;
                        idx.push(i);
                    }
                    for w in 1..n - 1 {
                        faces.push([idx[0], idx[w], idx[w + 1]]);
                    }
                }
                _ => {}
            }
        }
    }
    TriangleMesh::new(vertices, faces)
}

/// Writes `v`/`f` records with 17 significant digits.
pub fn save_obj(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let mut s = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(s, "v {:.16e} {:.16e} {:.16e}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    fs::write(path, s)?;
    Ok(())
}

// ----------------------------------------------------------- silhouettes

#[derive(Serialize, Deserialize)]
struct SilhouetteJson {
    points: Vec<[f64; 2]>,
}

/// Reads a silhouette from CSV (`x,y` per line) or JSON (`{"points": [[x, y], ...]}`).
pub fn load_silhouette(path: impl AsRef<Path>) -> Result<Silhouette> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let is_json = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
        || text.trim_start().starts_with('{');
    if is_json {
        parse_silhouette_json(&text)
    } else {
        parse_silhouette_csv(&text)
    }
}

pub fn parse_silhouette_json(text: &str) -> Result<Silhouette> {
    let j: SilhouetteJson = serde_json::from_str(text)?;
    Silhouette::new(j.points.into_iter().map(|[x, y]| Point2::new(x, y)).collect())
}

pub fn parse_silhouette_csv(text: &str) -> Result<Silhouette> {
    let mut pts = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        let mut it = l.split(',');
        let (x, y) = match (it.next(), it.next(), it.next()) {
            (Some(x), Some(y), None) => (x.trim(), y.trim()),
            _ => return Err(parse_err(k + 1, "expected 'x,y'")),
        };
        let x: f64 = x.parse().map_err(|_| parse_err(k + 1, format!("bad number '{x}'")))?;
        let y: f64 = y.parse().map_err(|_| parse_err(k + 1, format!("bad number '{y}'")))?;
        pts.push(Point2::new(x, y));
    }
    if pts.len() < 3 {
        return Err(Error::DegenerateSilhouette {
            area: 0.0,
            tolerance: 0.0,
        });
    }
    Silhouette::new(pts)
}

/// Writes CSV unless the path ends in `.json`. Values carry 17 significant digits.
pub fn save_silhouette(sil: &Silhouette, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let text = if json {
        silhouette_json(sil)
    } else {
        silhouette_csv(sil)
    };
    fs::write(path, text)?;
    Ok(())
}

pub fn silhouette_csv(sil: &Silhouette) -> String {
    let mut s = String::new();
    for p in sil.points() {
        let _ = writeln!(s, "{:.16e},{:.16e}", p.x, p.y);
    }
    s
}

pub fn silhouette_json(sil: &Silhouette) -> String {
    let mut s = String::from("{\"points\":[");
    for (k, p) in sil.points().iter().enumerate() {
        if k > 0 {
            s.push(',');
        }
        let _ = write!(s, "[{:.16e},{:.16e}]", p.x, p.y);
    }
    s.push_str("]}\n");
    s
}

// --------------------------------------------------------------- bundles

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BundleHeader {
    format: String,
    version: u32,
    kind: FieldKind,
    resolution: usize,
    mode: ProjectionMode,
    fingerprint: u64,
    point_count: usize,
    alpha: Alpha,
    seed: u64,
    masked: usize,
}

/// Serialises a field to bytes: a JSON header line, then mask bits (LSB first),
/// masked values as little-endian `f64`, and an FNV-1a checksum of both.
pub fn bundle_bytes(field: &SignatureField) -> Result<Vec<u8>> {
    let g = &field.grid;
    let header = BundleHeader {
        format: BUNDLE_FORMAT.into(),
        version: BUNDLE_VERSION,
        kind: field.kind,
        resolution: g.resolution(),
        mode: field.meta.mode,
        fingerprint: field.meta.fingerprint,
        point_count: field.meta.point_count,
        alpha: field.meta.alpha,
        seed: field.meta.seed,
        masked: g.masked_count(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    let start = out.len();
    let mask = g.mask();
    let mut bits = vec![0u8; mask.len().div_ceil(8)];
    for (k, &m) in mask.iter().enumerate() {
        if m {
            bits[k / 8] |= 1 << (k % 8);
        }
    }
    out.extend_from_slice(&bits);
    for v in field.masked_values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let sum = fnv(&out[start..]);
    out.extend_from_slice(&sum.to_le_bytes());
    Ok(out)
}

pub fn parse_bundle(bytes: &[u8]) -> Result<SignatureField> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::CorruptPayload("missing header line".into()))?;
    let raw: serde_json::Value = serde_json::from_slice(&bytes[..nl])?;
    if raw.get("format").and_then(|f| f.as_str()) != Some(BUNDLE_FORMAT) {
        return Err(Error::UnsupportedFormat("not a signature bundle".into()));
    }
    let found = raw
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::CorruptPayload("header lacks a version".into()))?;
    if found != BUNDLE_VERSION as u64 {
        return Err(Error::VersionMismatch {
            found: found as u32,
            expected: BUNDLE_VERSION,
        });
    }
    let header: BundleHeader = serde_json::from_value(raw)?;
    let grid = DiscGrid::new(header.resolution)?;
    let n2 = grid.resolution() * grid.resolution();
    let mask_len = n2.div_ceil(8);
    let masked = grid.masked_count();
    if header.masked != masked {
        return Err(Error::CorruptPayload(format!(
            "header declares {} masked nodes, grid has {masked}",
            header.masked
        )));
    }
    let payload = &bytes[nl + 1..];
    let expected = mask_len + 8 * masked + 8;
    if payload.len() != expected {
        return Err(Error::CorruptPayload(format!(
            "payload is {} bytes, expected {expected}",
            payload.len()
        )));
    }
    let (body, sum) = payload.split_at(expected - 8);
    if fnv(body) != u64::from_le_bytes(sum.try_into().expect("8 bytes")) {
        return Err(Error::CorruptPayload("checksum mismatch".into()));
    }
    let (bits, vals) = body.split_at(mask_len);
    for (k, &m) in grid.mask().iter().enumerate() {
        if ((bits[k / 8] >> (k % 8)) & 1 == 1) != m {
            return Err(Error::CorruptPayload(format!("mask bit {k} disagrees with the grid")));
        }
    }
    let mut values = vec![f64::NAN; n2];
    let mut chunks = vals.chunks_exact(8);
    for (k, &m) in grid.mask().iter().enumerate() {
        if m {
            let c = chunks.next().expect("length checked");
            values[k] = f64::from_le_bytes(c.try_into().expect("8 bytes"));
        }
    }
    let meta = FieldMeta {
        fingerprint: header.fingerprint,
        point_count: header.point_count,
        mode: header.mode,
        alpha: header.alpha,
        seed: header.seed,
    };
    SignatureField::from_values(grid, header.kind, meta, values)
        .map_err(|e| Error::CorruptPayload(e.to_string()))
}

pub fn save_bundle(field: &SignatureField, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, bundle_bytes(field)?)?;
    Ok(())
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<SignatureField> {
    parse_bundle(&fs::read(path)?)
}

// --------------------------------------------------------------- reports

/// Mean, sample standard deviation and maximum of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub sd: f64,
    pub max: f64,
}

impl Aggregate {
    /// `None` for an empty sample. The deviation uses `n - 1` and is 0 for a single value.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(Self { mean, sd, max })
    }
}

/// One benchmark trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub error: PoseError,
    pub success: bool,
    /// Whether any of the top-K ranked candidates met the success criterion.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub top_k_success: Option<bool>,
    pub candidates: usize,
    pub pyramid_level: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub oe: Aggregate,
    pub te: Aggregate,
    pub te_pct: Aggregate,
    pub rmse: Aggregate,
    pub rmse_pct: Aggregate,
    pub success_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub top_k_success_rate: Option<f64>,
}

/// Benchmark report with per-trial errors and aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub label: String,
    pub trial_count: usize,
    /// Set when there were no trials; `summary` is then absent.
    pub no_trials: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub summary: Option<ReportSummary>,
    pub trials: Vec<TrialRecord>,
}

impl Report {
    pub fn new(label: impl Into<String>, trials: Vec<TrialRecord>) -> Self {
        let col = |f: fn(&PoseError) -> f64| -> Vec<f64> {
            trials.iter().map(|t| f(&t.error)).collect()
        };
        let summary = Aggregate::of(&col(|e| e.oe)).map(|oe| {
            let n = trials.len() as f64;
            let topk: Vec<bool> = trials.iter().filter_map(|t| t.top_k_success).collect();
            ReportSummary {
                oe,
                te: Aggregate::of(&col(|e| e.te)).expect("non-empty"),
                te_pct: Aggregate::of(&col(|e| e.te_pct)).expect("non-empty"),
                rmse: Aggregate::of(&col(|e| e.rmse)).expect("non-empty"),
                rmse_pct: Aggregate::of(&col(|e| e.rmse_pct)).expect("non-empty"),
                success_rate: trials.iter().filter(|t| t.success).count() as f64 / n,
                top_k_success_rate: (!topk.is_empty())
                    .then(|| topk.iter().filter(|&&s| s).count() as f64 / topk.len() as f64),
            }
        });
        Self {
            label: label.into(),
            trial_count: trials.len(),
            no_trials: trials.is_empty(),
            summary,
            trials,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

pub fn write_report(report: &Report, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, report.to_json()?)?;
    Ok(())
}

/// One row of a parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub value: f64,
    pub median_rmse_pct: f64,
    pub mean_rmse_pct: f64,
    pub median_oe: f64,
    pub runtime_s: f64,
}

pub fn ablation_csv(param: &str, rows: &[AblationRow]) -> String {
    let mut s = format!("{param},median_rmse_pct,mean_rmse_pct,median_oe_deg,runtime_s\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.value, r.median_rmse_pct, r.mean_rmse_pct, r.median_oe, r.runtime_s
        );
    }
    s
}

pub fn write_ablation_csv(param: &str, rows: &[AblationRow], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, ablation_csv(param, rows))?;
    Ok(())
}
