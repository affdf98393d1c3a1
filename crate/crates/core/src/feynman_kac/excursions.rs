//! Excursions of a discretised path between the closed 3a-neighbourhood of
//! the cloud (entrances τ̌) and the complement of its r-neighbourhood (exits τ̂).

use serde::Serialize;

use crate::cloud_geometry::components;
use crate::error::{Error, Result};
use crate::num::dist2;
use crate::point_process::PointCloud;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcursionRecord {
    /// τ̌_1, τ̌_2, ...
    pub entries: Vec<f64>,
    /// τ̂_1, τ̂_2, ... (one fewer than entries while the path is still inside)
    pub exits: Vec<f64>,
    /// component of B_r(cloud) entered at each τ̌
    pub components: Vec<usize>,
    /// E_t at the last time seen
    pub e_t: usize,
}

impl ExcursionRecord {
    /// Number of entrances at or before t.
    pub fn e_at(&self, t: f64) -> usize {
        self.entries.iter().filter(|&&s| s <= t).count()
    }

    /// inf{n ≥ 0 : τ̌_{n+1} > t}, with τ̌ = ∞ past the recorded entries.
    pub fn e_by_infimum(&self, t: f64) -> usize {
        let mut n = 0;
        loop {
            match self.entries.get(n) {
                Some(&s) if s <= t => n += 1,
                _ => return n,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscretePath {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
}

/// Streaming version of the decomposition, fed one path point at a time.
#[derive(Debug, Clone)]
pub struct ExcursionTracker<'a> {
    cloud: &'a PointCloud,
    labels: Vec<usize>,
    entry2: f64,
    exit2: f64,
    inside: bool,
    pub record: ExcursionRecord,
}

impl<'a> ExcursionTracker<'a> {
    pub fn new(cloud: &'a PointCloud, a: f64, r: f64) -> Result<Self> {
        if !(a > 0.0 && r > 4.0 * a) {
            return Err(Error::InvalidInput(format!("need r > 4a > 0, got a={a}, r={r}")));
        }
        let labels = components(cloud, r).labels(cloud.len());
        Ok(Self {
            cloud,
            labels,
            entry2: 9.0 * a * a,
            exit2: r * r,
            inside: false,
            record: ExcursionRecord { entries: vec![], exits: vec![], components: vec![], e_t: 0 },
        })
    }

    fn nearest(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in self.cloud.points().enumerate() {
            let d2 = dist2(p, x);
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        best
    }

    pub fn push(&mut self, t: f64, x: &[f64]) {
        let (i, d2) = self.nearest(x);
        if self.inside {
            if d2 >= self.exit2 {
                self.inside = false;
                self.record.exits.push(t);
            }
        } else if d2 <= self.entry2 {
            self.inside = true;
            self.record.entries.push(t);
            self.record.components.push(self.labels[i]);
            self.record.e_t += 1;
        }
    }

    pub fn inside(&self) -> bool {
        self.inside
    }
}

pub fn excursion_decompose(path: &DiscretePath, cloud: &PointCloud, a: f64, r: f64) -> Result<ExcursionRecord> {
    if path.times.len() != path.points.len() {
        return Err(Error::InvalidInput("path times and points differ in length".into()));
    }
    if path.times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("path times must increase".into()));
    }
    let mut tr = ExcursionTracker::new(cloud, a, r)?;
    for (t, x) in path.times.iter().zip(&path.points) {
        tr.push(*t, x);
    }
    Ok(tr.record)
}
