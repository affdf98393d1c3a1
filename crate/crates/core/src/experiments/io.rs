//! Cloud files, number formatting and digests.
//!
//! A cloud file starts with `# dim=D` and has one point per row, coordinates
//! separated by commas and written with 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::point_process::PointCloud;

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

pub fn cloud_to_csv(cloud: &PointCloud) -> String {
    let mut s = format!("# dim={}\n", cloud.dim());
    for p in cloud.points() {
        let row: Vec<String> = p.iter().map(|&v| fmt17(v)).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn parse_cloud_csv(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Parse("cloud file is empty (expected '# dim=D')".into()))?;
    let d: usize = header
        .trim()
        .strip_prefix('#')
        .and_then(|h| h.trim().strip_prefix("dim="))
        .and_then(|v| v.trim().parse().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::Parse(format!("line 1: expected header '# dim=D', got '{header}'")))?;
    let mut pts = Vec::new();
    for (n, line) in lines {
        let line = line.trim();
        if line.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse(format!("line {}: bad coordinate '{}'", n + 1, t.trim())))
            })
            .collect::<Result<_>>()?;
        if row.len() != d {
            return Err(Error::Parse(format!("line {}: expected {d} coordinates, got {}", n + 1, row.len())));
        }
        pts.push(row);
    }
    PointCloud::new(d, &pts)
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_cloud_csv(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// CSV text from a header and rows of already formatted fields.
pub fn csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}
