//! ASCII PLY point clouds (`element vertex`, `x y z` as decimal text).
//!
//! Coordinates are written with the shortest decimal representation that
//! parses back to the same `f64`, so write/read is bit-exact.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use incidence_core::PointCloud;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlyError {
    #[error("not an ASCII PLY file: {0}")]
    BadHeader(String),
    #[error("vertex line {line}: {reason}")]
    BadVertex { line: usize, reason: String },
    #[error("expected {expected} vertices, found {found}")]
    VertexCount { expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn write_ply_to<W: Write>(mut out: W, cloud: &PointCloud) -> io::Result<()> {
    writeln!(out, "ply")?;
    writeln!(out, "format ascii 1.0")?;
    writeln!(out, "element vertex {}", cloud.len())?;
    for axis in ["x", "y", "z"] {
        writeln!(out, "property double {axis}")?;
    }
    writeln!(out, "end_header")?;
    for p in cloud.points() {
        writeln!(out, "{} {} {}", p[0], p[1], p[2])?;
    }
    out.flush()
}

pub fn write_ply(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<(), PlyError> {
    write_ply_to(BufWriter::new(File::create(path)?), cloud)?;
    Ok(())
}

pub fn read_ply_from<R: BufRead>(input: R) -> Result<PointCloud, PlyError> {
    let mut lines = input.lines();
    let mut next = || lines.next().transpose();
    let bad = |s: &str| PlyError::BadHeader(s.to_string());

    if next()?.as_deref().map(str::trim) != Some("ply") {
        return Err(bad("missing `ply` magic line"));
    }
    let mut count = None;
    let mut properties = Vec::new();
    loop {
        let line = next()?.ok_or_else(|| bad("header ended before end_header"))?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => return Err(bad(&format!("unsupported format `{other}`"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| bad("vertex count is not an integer"))?);
            }
            ["element", other, ..] => return Err(bad(&format!("unsupported element `{other}`"))),
            ["property", _ty, name] => properties.push(name.to_string()),
            ["end_header"] => break,
            _ => return Err(bad(&format!("unrecognized header line `{line}`"))),
        }
    }
    let count = count.ok_or_else(|| bad("no vertex element"))?;
    if properties != ["x", "y", "z"] {
        return Err(bad("vertex properties must be exactly x, y, z"));
    }
    let mut points = Vec::with_capacity(count);
    let mut line_no = 0;
    while let Some(line) = next()? {
        line_no += 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut coords = [0.0; 3];
        let mut parts = line.split_whitespace();
        for c in &mut coords {
            let w = parts.next().ok_or(PlyError::BadVertex { line: line_no, reason: "too few values".into() })?;
            *c = w.parse().map_err(|_| PlyError::BadVertex { line: line_no, reason: format!("`{w}` is not a number") })?;
        }
        if parts.next().is_some() {
            return Err(PlyError::BadVertex { line: line_no, reason: "too many values".into() });
        }
        points.push(coords);
    }
    if points.len() != count {
        return Err(PlyError::VertexCount { expected: count, found: points.len() });
    }
    PointCloud::new(points).map_err(|e| PlyError::BadVertex { line: 0, reason: e.to_string() })
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud, PlyError> {
    read_ply_from(BufReader::new(File::open(path)?))
}
