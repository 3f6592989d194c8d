//! ASCII PLY and XYZ point cloud files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gtvsr_core::{Point3, PointCloud};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Ply,
    Xyz,
}

impl Format {
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        ext.parse().ok()
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ply" | "ply-ascii" => Ok(Format::Ply),
            "xyz" => Ok(Format::Xyz),
            other => Err(format!(
                "unknown point cloud format `{other}` (expected ply or xyz)"
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot infer the format of {}; use --format", .0.display())]
    UnknownFormat(PathBuf),
    #[error(transparent)]
    Cloud(#[from] gtvsr_core::Error),
}

fn parse_error(line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse {
        line,
        message: message.into(),
    }
}

/// Resolves the format from `explicit` or the file extension.
pub fn resolve_format(path: &Path, explicit: Option<Format>) -> Result<Format, IoError> {
    explicit
        .or_else(|| Format::from_path(path))
        .ok_or_else(|| IoError::UnknownFormat(path.to_path_buf()))
}

pub fn read_cloud(path: &Path, format: Format) -> Result<PointCloud, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    match format {
        Format::Ply => parse_ply(&text),
        Format::Xyz => parse_xyz(&text),
    }
}

pub fn write_cloud(cloud: &PointCloud, path: &Path, format: Format) -> Result<(), IoError> {
    let text = match format {
        Format::Ply => to_ply(cloud),
        Format::Xyz => to_xyz(cloud),
    };
    fs::write(path, text).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_numbers(line: &str, number: usize) -> Result<Vec<f64>, IoError> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| parse_error(number, format!("invalid number `{tok}`")))
        })
        .collect()
}

/// Builds a cloud, renormalizing normals that are off unit length and dropping
/// normals altogether when any of them is zero.
fn assemble(points: Vec<Point3>, normals: Option<Vec<Point3>>) -> Result<PointCloud, IoError> {
    let normals = normals.and_then(|ns| {
        ns.into_iter()
            .map(|n| {
                let len = n.norm();
                if !(len > 0.0) {
                    None
                } else if (len - 1.0).abs() > 1e-6 {
                    Some(n / len)
                } else {
                    Some(n)
                }
            })
            .collect::<Option<Vec<_>>>()
    });
    Ok(PointCloud::with_optional_normals(points, normals)?)
}

/// One point per line: `x y z` or `x y z nx ny nz`. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_xyz(text: &str) -> Result<PointCloud, IoError> {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut columns = None;
    for (i, raw) in text.lines().enumerate() {
        let number = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values = parse_numbers(line, number)?;
        if values.len() != 3 && values.len() != 6 {
            return Err(parse_error(
                number,
                format!("expected 3 or 6 values, found {}", values.len()),
            ));
        }
        match columns {
            None => columns = Some(values.len()),
            Some(c) if c != values.len() => {
                return Err(parse_error(
                    number,
                    format!("expected {c} values, found {}", values.len()),
                ))
            }
            _ => {}
        }
        points.push(Point3::new(values[0], values[1], values[2]));
        if values.len() == 6 {
            normals.push(Point3::new(values[3], values[4], values[5]));
        }
    }
    if points.is_empty() {
        return Err(IoError::Cloud(gtvsr_core::Error::EmptyCloud));
    }
    let normals = (columns == Some(6)).then_some(normals);
    assemble(points, normals)
}

struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<String>,
}

/// ASCII PLY 1.0. Only the `vertex` element is read (x, y, z and, when all
/// three are present, nx, ny, nz); other elements are skipped.
pub fn parse_ply(text: &str) -> Result<PointCloud, IoError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(parse_error(1, "missing `ply` magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut saw_format = false;
    loop {
        let Some((number, line)) = lines.next() else {
            return Err(parse_error(0, "unexpected end of file in header"));
        };
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("format") => {
                let kind = tokens.next().unwrap_or("");
                let version = tokens.next().unwrap_or("");
                if kind != "ascii" || version != "1.0" {
                    return Err(parse_error(
                        number,
                        format!("unsupported format `{kind} {version}`"),
                    ));
                }
                saw_format = true;
            }
            Some("element") => {
                let name = tokens
                    .next()
                    .ok_or_else(|| parse_error(number, "element without name"))?;
                let count = tokens
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| parse_error(number, "element without a valid count"))?;
                elements.push(PlyElement {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| parse_error(number, "property before any element"))?;
                let name = tokens
                    .last()
                    .ok_or_else(|| parse_error(number, "property without name"))?;
                element.properties.push(name.to_string());
            }
            Some("end_header") => break,
            Some("comment") | Some("obj_info") | None => {}
            Some(other) => {
                return Err(parse_error(
                    number,
                    format!("unexpected header keyword `{other}`"),
                ))
            }
        }
    }
    if !saw_format {
        return Err(parse_error(1, "missing format line"));
    }

    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut has_normals = false;
    for element in &elements {
        let position = |name: &str| element.properties.iter().position(|p| p == name);
        let is_vertex = element.name == "vertex";
        let xyz = if is_vertex {
            match (position("x"), position("y"), position("z")) {
                (Some(x), Some(y), Some(z)) => Some([x, y, z]),
                _ => return Err(parse_error(0, "vertex element lacks x, y or z")),
            }
        } else {
            None
        };
        let nxyz = match (position("nx"), position("ny"), position("nz")) {
            (Some(x), Some(y), Some(z)) if is_vertex => Some([x, y, z]),
            _ => None,
        };
        has_normals |= nxyz.is_some();
        let mut read = 0;
        while read < element.count {
            let Some((number, line)) = lines.next() else {
                return Err(parse_error(
                    0,
                    format!("file ends inside element `{}`", element.name),
                ));
            };
            if line.is_empty() {
                continue;
            }
            read += 1;
            let Some(xyz) = xyz else { continue };
            let values = parse_numbers(line, number)?;
            if values.len() < element.properties.len() {
                return Err(parse_error(
                    number,
                    format!(
                        "expected {} values, found {}",
                        element.properties.len(),
                        values.len()
                    ),
                ));
            }
            points.push(Point3::new(values[xyz[0]], values[xyz[1]], values[xyz[2]]));
            if let Some(n) = nxyz {
                normals.push(Point3::new(values[n[0]], values[n[1]], values[n[2]]));
            }
        }
    }
    if points.is_empty() {
        return Err(IoError::Cloud(gtvsr_core::Error::EmptyCloud));
    }
    assemble(points, has_normals.then_some(normals))
}

fn push_values(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        // Debug formatting is the shortest string that round-trips exactly
        let _ = write!(out, "{v:?}");
    }
    out.push('\n');
}

fn rows(cloud: &PointCloud) -> impl Iterator<Item = Vec<f64>> + '_ {
    cloud.points().iter().enumerate().map(|(i, p)| {
        let mut row = vec![p.x, p.y, p.z];
        if let Some(n) = cloud.normals() {
            row.extend_from_slice(n[i].as_slice());
        }
        row
    })
}

pub fn to_xyz(cloud: &PointCloud) -> String {
    let mut out = String::new();
    for row in rows(cloud) {
        push_values(&mut out, &row);
    }
    out
}

pub fn to_ply(cloud: &PointCloud) -> String {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", cloud.len());
    for name in ["x", "y", "z"] {
        let _ = writeln!(out, "property double {name}");
    }
    if cloud.normals().is_some() {
        for name in ["nx", "ny", "nz"] {
            let _ = writeln!(out, "property double {name}");
        }
    }
    out.push_str("end_header\n");
    for row in rows(cloud) {
        push_values(&mut out, &row);
    }
    out
}
