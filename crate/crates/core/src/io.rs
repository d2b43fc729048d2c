//! Point cloud and pose file formats.
//!
//! Clouds are ASCII PLY with `x y z intensity` vertex properties. Poses are
//! plain text, one scan per line: the scan index followed by the top three
//! rows of the 4×4 matrix, row-major.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::cloud::{Point, PointCloud};
use crate::geom::{Pose, Rotation};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.display().to_string(), source }
}

fn format_err(path: &Path, msg: impl Into<String>) -> IoError {
    IoError::Format { path: path.display().to_string(), msg: msg.into() }
}

pub fn ply_string(cloud: &PointCloud) -> String {
    let mut s = String::with_capacity(64 + cloud.len() * 48);
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", cloud.len());
    s.push_str("property double x\nproperty double y\nproperty double z\nproperty double intensity\nend_header\n");
    for p in cloud.iter() {
        let _ = writeln!(s, "{} {} {} {}", p.position.x, p.position.y, p.position.z, p.intensity);
    }
    s
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<(), IoError> {
    fs::write(path, ply_string(cloud)).map_err(io_err(path))?;
    Ok(())
}

/// Reads an ASCII PLY. `x`, `y`, `z` are required; `intensity` (or
/// `scalar_intensity`, `reflectance`) defaults to 0 when absent.
pub fn read_ply(path: &Path) -> Result<PointCloud, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_ply(&text).map_err(|m| format_err(path, m))
}

pub fn parse_ply(text: &str) -> Result<PointCloud, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err("missing ply magic".into());
    }
    let mut count = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    loop {
        let line = lines.next().ok_or("unterminated header")?.trim();
        let mut it = line.split_whitespace();
        match it.next() {
            Some("format") => {
                if it.next() != Some("ascii") {
                    return Err("only ascii PLY is supported".into());
                }
            }
            Some("element") => {
                in_vertex = it.next() == Some("vertex");
                if in_vertex {
                    count = Some(it.next().and_then(|c| c.parse::<usize>().ok()).ok_or("bad vertex count")?);
                }
            }
            Some("property") if in_vertex => props.push(it.last().ok_or("bad property")?.to_string()),
            Some("end_header") => break,
            _ => {}
        }
    }
    let count = count.ok_or("no vertex element")?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let (x, y, z) = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err("vertex lacks x/y/z".into()),
    };
    let inten = col("intensity").or_else(|| col("scalar_intensity")).or_else(|| col("reflectance"));
    let mut points = Vec::with_capacity(count);
    for (k, line) in lines.take(count).enumerate() {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("vertex {k}: {e}"))?;
        if vals.len() < props.len() {
            return Err(format!("vertex {k}: expected {} values", props.len()));
        }
        points.push(Point::new(vals[x], vals[y], vals[z], inten.map_or(0.0, |i| vals[i])));
    }
    if points.len() != count {
        return Err(format!("expected {count} vertices, found {}", points.len()));
    }
    Ok(PointCloud::new(points))
}

pub fn poses_string(poses: &[Option<Pose>]) -> String {
    let mut s = String::new();
    for (i, p) in poses.iter().enumerate() {
        let Some(p) = p else { continue };
        let m = p.to_matrix();
        let _ = write!(s, "{i}");
        for r in 0..3 {
            for c in 0..4 {
                let _ = write!(s, " {:.16e}", m[(r, c)]);
            }
        }
        s.push('\n');
    }
    s
}

pub fn write_poses(path: &Path, poses: &[Option<Pose>]) -> Result<(), IoError> {
    fs::write(path, poses_string(poses)).map_err(io_err(path))?;
    Ok(())
}

/// Inverse of [`write_poses`]; missing indices come back as `None`.
pub fn read_poses(path: &Path) -> Result<Vec<Option<Pose>>, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_poses(&text).map_err(|m| format_err(path, m))
}

pub fn parse_poses(text: &str) -> Result<Vec<Option<Pose>>, String> {
    let mut out: Vec<Option<Pose>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let idx: usize = it.next().and_then(|v| v.parse().ok()).ok_or(format!("line {}: bad index", n + 1))?;
        let v: Vec<f64> = it.map(str::parse).collect::<Result<_, _>>().map_err(|e| format!("line {}: {e}", n + 1))?;
        if v.len() != 12 {
            return Err(format!("line {}: expected 12 values, got {}", n + 1, v.len()));
        }
        let r = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        let pose = Pose::new(Rotation::from_matrix_unchecked(r), Vector3::new(v[3], v[7], v[11]));
        if out.len() <= idx {
            out.resize(idx + 1, None);
        }
        out[idx] = Some(pose);
    }
    Ok(out)
}
