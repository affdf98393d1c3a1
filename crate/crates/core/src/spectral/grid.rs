//! Finite-difference Dirichlet operators ½Δ_h + q on masked grids.
//!
//! Interior nodes are stored compactly, line by line along the last axis, as
//! runs of consecutive interior nodes. Off-diagonal couplings are kept as
//! contiguous (dst, src, len) segments so a matrix-vector product is a handful
//! of streaming passes.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, KernelVariant};
use crate::num::{dist2, integrate_gl};
use crate::point_process::{PointCloud, Region};

/// Open subset of R^d on which Dirichlet problems are posed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Domain {
    Region(Region),
    /// union of open balls of a common radius, e.g. the r-neighbourhood of a component
    Union { centers: Vec<Vec<f64>>, radius: f64 },
}

impl Domain {
    pub fn ball(d: usize, radius: f64) -> Self {
        Domain::Region(Region::ball(d, radius))
    }

    pub fn cube(d: usize, half_width: f64) -> Self {
        Domain::Region(Region::cube(d, half_width))
    }

    pub fn neighbourhood(cloud: &PointCloud, radius: f64) -> Self {
        Domain::Union { centers: cloud.to_vecs(), radius }
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Region(r) => r.dim(),
            Domain::Union { centers, .. } => centers.first().map_or(0, |c| c.len()),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            // open sets: boundary nodes carry the Dirichlet condition
            Domain::Region(Region::Box { center, half_width }) => {
                x.iter().zip(center).all(|(a, c)| (a - c).abs() < *half_width)
            }
            Domain::Region(Region::Ball { center, radius }) => dist2(x, center) < radius * radius,
            Domain::Union { centers, radius } => centers.iter().any(|c| dist2(c, x) < radius * radius),
        }
    }

    /// Lower bound on the distance from x to the complement; 0 outside.
    /// Exact for boxes and balls; for unions the best single-ball margin.
    pub fn inner_margin(&self, x: &[f64]) -> f64 {
        let m = match self {
            Domain::Region(Region::Box { center, half_width }) => {
                x.iter().zip(center).map(|(a, c)| half_width - (a - c).abs()).fold(f64::INFINITY, f64::min)
            }
            Domain::Region(Region::Ball { center, radius }) => radius - dist2(x, center).sqrt(),
            Domain::Union { centers, radius } => {
                centers.iter().map(|c| radius - dist2(c, x).sqrt()).fold(f64::NEG_INFINITY, f64::max)
            }
        };
        m.max(0.0)
    }

    /// Volume; unions are measured on a midpoint grid of 64 cells per radius.
    pub fn volume(&self) -> f64 {
        match self {
            Domain::Region(r) => r.volume(),
            Domain::Union { radius, .. } => {
                let (lo, hi) = self.bounding_box();
                let d = lo.len();
                let step = radius / 64.0;
                let counts: Vec<usize> = (0..d).map(|k| ((hi[k] - lo[k]) / step).ceil() as usize).collect();
                let total: usize = counts.iter().product();
                let mut x = vec![0.0; d];
                let mut inside = 0usize;
                for flat in 0..total {
                    let mut rem = flat;
                    for k in 0..d {
                        x[k] = lo[k] + (rem % counts[k]) as f64 * step + 0.5 * step;
                        rem /= counts[k];
                    }
                    if self.contains(&x) {
                        inside += 1;
                    }
                }
                inside as f64 * step.powi(d as i32)
            }
        }
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Domain::Region(r) => r.bounding_box(),
            Domain::Union { centers, radius } => {
                let d = self.dim();
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for c in centers {
                    for k in 0..d {
                        lo[k] = lo[k].min(c[k] - radius);
                        hi[k] = hi[k].max(c[k] + radius);
                    }
                }
                (lo, hi)
            }
        }
    }

    /// Parses `ball:R`, `box:H` (centred at the origin).
    pub fn parse(s: &str, d: usize) -> Result<Self> {
        Region::parse(s, d).map(Domain::Region)
    }
}

/// Regular grid of nodes `anchor + j h`, j in [-half_k, half_k] per axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub dim: usize,
    pub h: f64,
    pub anchor: Vec<f64>,
    pub half: Vec<usize>,
}

impl Grid {
    /// Grid anchored at `anchor` covering the domain's bounding box.
    pub fn covering(domain: &Domain, h: f64, anchor: &[f64]) -> Self {
        let (lo, hi) = domain.bounding_box();
        let half = (0..lo.len())
            .map(|k| {
                let ext = (hi[k] - anchor[k]).max(anchor[k] - lo[k]);
                (ext / h * (1.0 + 1e-12)).ceil() as usize
            })
            .collect();
        Grid { dim: lo.len(), h, anchor: anchor.to_vec(), half }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.half.iter().map(|&m| 2 * m + 1).collect()
    }

    pub fn coord(&self, axis: usize, j: usize) -> f64 {
        self.anchor[axis] + (j as f64 - self.half[axis] as f64) * self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Run {
    k0: usize,
    len: usize,
    offset: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    dst: usize,
    src: usize,
    len: usize,
}

#[derive(Debug, Clone)]
pub struct DiscretizedOperator {
    pub grid: Grid,
    runs: Vec<Run>,
    /// runs of line l are runs[line_start[l]..line_start[l + 1]]
    line_start: Vec<usize>,
    segments: Vec<Segment>,
    /// regularised potential per interior node
    pub potential: Vec<f64>,
    pub cap: f64,
    n: usize,
}

impl DiscretizedOperator {
    /// Operator on the nodes of `grid` strictly inside `domain` with potential
    /// `q(x)` evaluated once per interior node.
    pub fn new(grid: Grid, domain: &Domain, cap: f64, q: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let d = grid.dim;
        if d == 0 || domain.dim() != d {
            return Err(Error::InvalidConfig("grid and domain dimensions differ".into()));
        }
        if !(grid.h > 0.0) {
            return Err(Error::InvalidConfig(format!("grid step {}", grid.h)));
        }
        let shape = grid.shape();
        let nl = shape[d - 1];
        let n_lines: usize = shape[..d - 1].iter().product();
        let mut runs = Vec::new();
        let mut line_start = Vec::with_capacity(n_lines + 1);
        let mut potential = Vec::new();
        let mut x = vec![0.0; d];
        let mut n = 0;
        for line in 0..n_lines {
            line_start.push(runs.len());
            let mut rem = line;
            for axis in (0..d - 1).rev() {
                x[axis] = grid.coord(axis, rem % shape[axis]);
                rem /= shape[axis];
            }
            let mut k = 0;
            while k < nl {
                x[d - 1] = grid.coord(d - 1, k);
                if !domain.contains(&x) {
                    k += 1;
                    continue;
                }
                let k0 = k;
                while k < nl {
                    x[d - 1] = grid.coord(d - 1, k);
                    if !domain.contains(&x) {
                        break;
                    }
                    potential.push(q(&x));
                    k += 1;
                }
                runs.push(Run { k0, len: k - k0, offset: n });
                n += k - k0;
            }
        }
        line_start.push(runs.len());
        if n == 0 {
            return Err(Error::EmptyMask);
        }
        let mut op = DiscretizedOperator { grid, runs, line_start, segments: vec![], potential, cap, n };
        op.build_segments();
        Ok(op)
    }

    fn build_segments(&mut self) {
        let d = self.grid.dim;
        let shape = self.grid.shape();
        let mut segs = Vec::new();
        for r in &self.runs {
            if r.len > 1 {
                segs.push(Segment { dst: r.offset + 1, src: r.offset, len: r.len - 1 });
                segs.push(Segment { dst: r.offset, src: r.offset + 1, len: r.len - 1 });
            }
        }
        let n_lines = self.line_start.len() - 1;
        // stride of axis a in the line index
        let mut stride = vec![1usize; d.saturating_sub(1)];
        for a in (0..d.saturating_sub(2)).rev() {
            stride[a] = stride[a + 1] * shape[a + 1];
        }
        for a in 0..d - 1 {
            for line in 0..n_lines {
                let ja = (line / stride[a]) % shape[a];
                if ja + 1 >= shape[a] {
                    continue;
                }
                let other = line + stride[a];
                let (ra, rb) = (self.line_runs(line), self.line_runs(other));
                let (mut i, mut j) = (0, 0);
                while i < ra.len() && j < rb.len() {
                    let (x, y) = (ra[i], rb[j]);
                    let lo = x.k0.max(y.k0);
                    let hi = (x.k0 + x.len).min(y.k0 + y.len);
                    if lo < hi {
                        let (px, py) = (x.offset + lo - x.k0, y.offset + lo - y.k0);
                        segs.push(Segment { dst: px, src: py, len: hi - lo });
                        segs.push(Segment { dst: py, src: px, len: hi - lo });
                    }
                    if x.k0 + x.len < y.k0 + y.len {
                        i += 1;
                    } else {
                        j += 1;
                    }
                }
            }
        }
        segs.sort_by_key(|s| (s.dst, s.src));
        self.segments = segs;
    }

    fn line_runs(&self, line: usize) -> &[Run] {
        &self.runs[self.line_start[line]..self.line_start[line + 1]]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn h(&self) -> f64 {
        self.grid.h
    }

    /// Coupling to each lattice neighbour, 1/(2h^2).
    pub fn coupling(&self) -> f64 {
        0.5 / (self.grid.h * self.grid.h)
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.potential[i] - self.grid.dim as f64 / (self.grid.h * self.grid.h)
    }

    /// Upper bound on the spectral radius (Gershgorin).
    pub fn norm_bound(&self) -> f64 {
        let off = 2.0 * self.grid.dim as f64 * self.coupling();
        (0..self.n).map(|i| self.diagonal(i).abs()).fold(0.0, f64::max) + off
    }

    /// y = A x.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let d = self.grid.dim as f64 / (self.grid.h * self.grid.h);
        for ((yi, xi), qi) in y.iter_mut().zip(x).zip(&self.potential) {
            *yi = (qi - d) * xi;
        }
        let c = self.coupling();
        for s in &self.segments {
            let (ys, xs) = (&mut y[s.dst..s.dst + s.len], &x[s.src..s.src + s.len]);
            for (a, b) in ys.iter_mut().zip(xs) {
                *a += c * b;
            }
        }
    }

    /// Grid multi-index (per axis, 0-based) of every interior node, in storage order.
    pub fn node_indices(&self) -> Vec<Vec<usize>> {
        let d = self.grid.dim;
        let shape = self.grid.shape();
        let mut out = Vec::with_capacity(self.n);
        for line in 0..self.line_start.len() - 1 {
            let mut base = vec![0; d];
            let mut rem = line;
            for axis in (0..d - 1).rev() {
                base[axis] = rem % shape[axis];
                rem /= shape[axis];
            }
            for r in self.line_runs(line) {
                for k in r.k0..r.k0 + r.len {
                    base[d - 1] = k;
                    out.push(base.clone());
                }
            }
        }
        out
    }

    pub fn node_coords(&self) -> Vec<Vec<f64>> {
        self.node_indices()
            .into_iter()
            .map(|idx| idx.iter().enumerate().map(|(a, &j)| self.grid.coord(a, j)).collect())
            .collect()
    }

    /// Storage index of the interior node with the given multi-index.
    pub fn index_of(&self, idx: &[usize]) -> Option<usize> {
        let d = self.grid.dim;
        let shape = self.grid.shape();
        let mut line = 0;
        for a in 0..d - 1 {
            if idx[a] >= shape[a] {
                return None;
            }
            line = line * shape[a] + idx[a];
        }
        let k = idx[d - 1];
        self.line_runs(line).iter().find(|r| k >= r.k0 && k < r.k0 + r.len).map(|r| r.offset + k - r.k0)
    }

    /// Storage index of the node at (or nearest to) the point x, if it is interior.
    pub fn index_near(&self, x: &[f64]) -> Option<usize> {
        let g = &self.grid;
        let mut idx = Vec::with_capacity(g.dim);
        for a in 0..g.dim {
            let j = ((x[a] - g.anchor[a]) / g.h).round() + g.half[a] as f64;
            if j < 0.0 {
                return None;
            }
            idx.push(j as usize);
        }
        self.index_of(&idx)
    }

    /// Number of lattice neighbours of each interior node that lie outside the mask.
    pub fn exterior_neighbour_counts(&self) -> Vec<f64> {
        let mut inner = vec![0.0; self.n];
        for s in &self.segments {
            for v in &mut inner[s.dst..s.dst + s.len] {
                *v += 1.0;
            }
        }
        let full = 2.0 * self.grid.dim as f64;
        inner.into_iter().map(|c| full - c).collect()
    }

    /// Mask over the full grid in row-major order.
    pub fn mask(&self) -> Vec<bool> {
        let total: usize = self.grid.shape().iter().product();
        let nl = self.grid.shape()[self.grid.dim - 1];
        let mut m = vec![false; total];
        for line in 0..self.line_start.len() - 1 {
            for r in self.line_runs(line) {
                for k in r.k0..r.k0 + r.len {
                    m[line * nl + k] = true;
                }
            }
        }
        m
    }

    /// Same mask with a different potential.
    pub fn with_potential(&self, potential: Vec<f64>, cap: f64) -> Result<Self> {
        if potential.len() != self.n {
            return Err(Error::InvalidInput("potential length does not match the mask".into()));
        }
        let mut op = self.clone();
        op.potential = potential;
        op.cap = cap;
        Ok(op)
    }

    /// Interpolates a field from an operator of step 2h sharing the anchor
    /// (multilinear; coarse nodes outside the coarse mask count as zero).
    pub fn prolong_from(&self, coarse: &DiscretizedOperator, v: &[f64]) -> Vec<f64> {
        let d = self.grid.dim;
        let mut out = Vec::with_capacity(self.n);
        let mut cidx = vec![0usize; d];
        for idx in self.node_indices() {
            // signed offsets from the anchor
            let rel: Vec<i64> = idx.iter().zip(&self.grid.half).map(|(&j, &m)| j as i64 - m as i64).collect();
            let odd: Vec<usize> = (0..d).filter(|&a| rel[a].rem_euclid(2) == 1).collect();
            let mut acc = 0.0;
            let corners = 1usize << odd.len();
            for c in 0..corners {
                let mut ok = true;
                for a in 0..d {
                    let mut r = rel[a].div_euclid(2);
                    if let Some(p) = odd.iter().position(|&o| o == a) {
                        r += ((c >> p) & 1) as i64;
                    }
                    let j = r + coarse.grid.half[a] as i64;
                    if j < 0 {
                        ok = false;
                        break;
                    }
                    cidx[a] = j as usize;
                }
                if ok {
                    if let Some(i) = coarse.index_of(&cidx) {
                        acc += v[i];
                    }
                }
            }
            out.push(acc / corners as f64);
        }
        out
    }

    /// e^{tA} v by Taylor series on sub-steps with t‖A‖/s <= 1.
    pub fn expmv(&self, t: f64, v: &[f64]) -> Vec<f64> {
        let steps = (t * self.norm_bound()).ceil().max(1.0) as usize;
        let tau = t / steps as f64;
        let mut x = v.to_vec();
        let mut term = vec![0.0; self.n];
        let mut next = vec![0.0; self.n];
        for _ in 0..steps {
            term.copy_from_slice(&x);
            for k in 1..60 {
                self.apply(&term, &mut next);
                let f = tau / k as f64;
                let mut tmax: f64 = 0.0;
                let mut xmax: f64 = 0.0;
                for ((ti, ni), xi) in term.iter_mut().zip(&next).zip(x.iter_mut()) {
                    *ti = f * ni;
                    *xi += *ti;
                    tmax = tmax.max(ti.abs());
                    xmax = xmax.max(xi.abs());
                }
                if tmax <= 1e-17 * xmax {
                    break;
                }
            }
        }
        x
    }

    /// Solves (gamma - A) u = b by conjugate gradients; requires gamma above the spectrum.
    pub fn solve_shifted(&self, gamma: f64, b: &[f64], rel_tol: f64, max_iter: usize) -> Result<Vec<f64>> {
        let n = self.n;
        let mut u = vec![0.0; n];
        let mut r = b.to_vec();
        let mut p = r.clone();
        let mut ap = vec![0.0; n];
        let bnorm = dot(b, b).sqrt();
        if bnorm == 0.0 {
            return Ok(u);
        }
        let mut rr = dot(&r, &r);
        for _ in 0..max_iter {
            self.apply(&p, &mut ap);
            for (a, pi) in ap.iter_mut().zip(&p) {
                *a = gamma * pi - *a;
            }
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::Precondition(format!("gamma {gamma} is not above the spectrum")));
            }
            let alpha = rr / pap;
            for i in 0..n {
                u[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rr_new = dot(&r, &r);
            if rr_new.sqrt() <= rel_tol * bnorm {
                return Ok(u);
            }
            let beta = rr_new / rr;
            rr = rr_new;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
        }
        Err(Error::NoConvergence { iterations: max_iter, residual: rr.sqrt() / bnorm })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Integral of |x|^{-2} over [0,a1]x[0,a2]x[0,a3] (a_i >= 0), split into the
/// three pyramids with apex 0 over the far faces.
pub fn orthant_inverse_square(a: [f64; 3]) -> f64 {
    let mut total = 0.0;
    for i in 0..3 {
        let (ai, aj, ak) = (a[i], a[(i + 1) % 3], a[(i + 2) % 3]);
        if ai <= 0.0 || aj <= 0.0 || ak <= 0.0 {
            continue;
        }
        // a_i ∫_0^{a_j} ∫_0^{a_k} dv dw / (a_i^2 + v^2 + w^2), with v = a_i sinh(u)
        let top = (aj / ai).asinh();
        total += ai * integrate_gl(|u: f64| (ak / (ai * u.cosh())).atan(), 0.0, top, 4, 16);
    }
    total
}

/// Integral of |x|^{-2} over an axis-aligned box [lo, hi] in R^3, by signed
/// inclusion-exclusion over orthants.
pub fn box_inverse_square(lo: [f64; 3], hi: [f64; 3]) -> f64 {
    let mut total = 0.0;
    for corner in 0..8 {
        let mut c = [0.0; 3];
        let mut sign = 1.0;
        for k in 0..3 {
            if corner >> k & 1 == 1 {
                c[k] = hi[k];
            } else {
                c[k] = lo[k];
                sign = -sign;
            }
        }
        let s = c.iter().map(|v| v.signum()).product::<f64>();
        if c.contains(&0.0) {
            continue;
        }
        total += sign * s * orthant_inverse_square([c[0].abs(), c[1].abs(), c[2].abs()]);
    }
    total
}

/// Builds theta * min(V̄(x), m), where V̄ is the kernel potential averaged over
/// the grid cell of side h centred at x for poles within 3 cells of x and the
/// point value elsewhere.
#[derive(Debug, Clone)]
pub struct CellAveragedPotential {
    pub cloud: PointCloud,
    pub spec: KernelSpec,
    pub theta: f64,
    pub cap: f64,
    pub h: f64,
}

impl CellAveragedPotential {
    pub fn new(cloud: PointCloud, spec: KernelSpec, theta: f64, cap: f64, h: f64) -> Result<Self> {
        if matches!(spec.variant, KernelVariant::RenormApprox { .. }) {
            return Err(Error::Unsupported("grid potentials use pointwise kernels".into()));
        }
        if !(cap > 0.0) || !(theta >= 0.0) {
            return Err(Error::InvalidConfig(format!("theta {theta}, cap {cap}")));
        }
        if cloud.dim() != spec.dim {
            return Err(Error::InvalidConfig("cloud and kernel dimensions differ".into()));
        }
        Ok(Self { cloud, spec, theta, cap, h })
    }

    /// Uncapped averaged potential at node x.
    pub fn raw(&self, x: &[f64]) -> f64 {
        let h = self.h;
        let near = 3.0 * h;
        let support = self.spec.support_radius() + h;
        let mut v = 0.0;
        for p in self.cloud.points() {
            let r2 = dist2(p, x);
            if r2 > support * support {
                continue;
            }
            let close = p.iter().zip(x).all(|(a, b)| (a - b).abs() <= near);
            v += if close { self.cell_average(p, x) } else { self.spec.profile(r2.sqrt()) };
        }
        v
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.theta * self.raw(x).min(self.cap)
    }

    fn cell_average(&self, pole: &[f64], x: &[f64]) -> f64 {
        let h = self.h;
        let d = x.len();
        let a = self.spec.scale();
        let vol = h.powi(d as i32);
        if d != 3 {
            return self.midpoint_average(pole, x, 6, |r| self.spec.profile(r.max(h / 100.0)));
        }
        let lo = [x[0] - pole[0] - h / 2.0, x[1] - pole[1] - h / 2.0, x[2] - pole[2] - h / 2.0];
        let hi = [lo[0] + h, lo[1] + h, lo[2] + h];
        let exact = box_inverse_square(lo, hi) / vol;
        let far_corner = (0..3).map(|k| lo[k].abs().max(hi[k].abs()).powi(2)).sum::<f64>().sqrt();
        if far_corner <= a {
            return exact;
        }
        // the kernel differs from |x|^{-2} only beyond radius a, where it is bounded
        let excess = self.midpoint_average(pole, x, 8, |r| if r > a { 1.0 / (r * r) - self.spec.profile(r) } else { 0.0 });
        exact - excess
    }

    fn midpoint_average(&self, pole: &[f64], x: &[f64], per_axis: usize, f: impl Fn(f64) -> f64) -> f64 {
        let d = x.len();
        let h = self.h;
        let sub = h / per_axis as f64;
        let total = per_axis.pow(d as u32);
        let mut acc = 0.0;
        let mut y = vec![0.0; d];
        for code in 0..total {
            let mut c = code;
            for k in 0..d {
                let i = c % per_axis;
                c /= per_axis;
                y[k] = x[k] - h / 2.0 + (i as f64 + 0.5) * sub - pole[k];
            }
            acc += f(y.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        acc / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;

    #[test]
    fn orthant_integral_matches_cubature() {
        for a in [[1.0, 1.0, 1.0], [0.3, 2.0, 0.7]] {
            let n = 200;
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let x = (i as f64 + 0.5) / n as f64 * a[0];
                        let y = (j as f64 + 0.5) / n as f64 * a[1];
                        let z = (k as f64 + 0.5) / n as f64 * a[2];
                        s += 1.0 / (x * x + y * y + z * z);
                    }
                }
            }
            let cub = s * a[0] * a[1] * a[2] / (n * n * n) as f64;
            let ex = orthant_inverse_square(a);
            assert!((cub - ex).abs() / ex < 5e-3, "{a:?} {cub} {ex}");
        }
        // thin slabs: in polar form the integral is the octant average of the
        // exit distance min_i a_i / w_i, with z = cos(polar angle) uniform
        for a in [[0.05, 1.0, 1.0], [1.0, 0.02, 0.5]] {
            let n = 2000;
            let mut s = 0.0;
            for i in 0..n {
                let z = (i as f64 + 0.5) / n as f64;
                let rho = (1.0 - z * z).sqrt();
                for j in 0..n {
                    let psi = (j as f64 + 0.5) / n as f64 * std::f64::consts::FRAC_PI_2;
                    let w = [rho * psi.cos(), rho * psi.sin(), z];
                    s += (0..3).map(|k| a[k] / w[k]).fold(f64::INFINITY, f64::min);
                }
            }
            let polar = s * std::f64::consts::FRAC_PI_2 / (n * n) as f64;
            let ex = orthant_inverse_square(a);
            assert!((polar - ex).abs() / ex < 1e-3, "{a:?} {polar} {ex}");
        }
        // the unit cube [-1,1]^3 integral equals 6 ∫∫ dv dw / (1 + v^2 + w^2)
        let inner = |v: f64| {
            let s = (1.0 + v * v).sqrt();
            2.0 * (1.0 / s).atan() / s
        };
        let whole = 6.0 * integrate_gl(inner, -1.0, 1.0, 8, 16);
        assert!((8.0 * orthant_inverse_square([1.0; 3]) - whole).abs() < 1e-12);
    }

    #[test]
    fn box_integral_is_additive() {
        let lo = [-0.3, 0.1, -0.2];
        let mid = [0.05, 0.1, -0.2];
        let hi = [0.4, 0.5, 0.25];
        let whole = box_inverse_square(lo, hi);
        let left = box_inverse_square(lo, [mid[0], hi[1], hi[2]]);
        let right = box_inverse_square([mid[0], lo[1], lo[2]], hi);
        assert!((whole - left - right).abs() < 1e-10 * whole);
        // a box away from the pole agrees with plain cubature
        let (lo, hi) = ([1.0, 0.5, -0.5], [1.5, 1.0, 0.0]);
        let n = 60;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let p = [
                        lo[0] + (i as f64 + 0.5) / n as f64 * 0.5,
                        lo[1] + (j as f64 + 0.5) / n as f64 * 0.5,
                        lo[2] + (k as f64 + 0.5) / n as f64 * 0.5,
                    ];
                    s += 1.0 / (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
                }
            }
        }
        let cub = s * 0.125 / (n * n * n) as f64;
        assert!((box_inverse_square(lo, hi) - cub).abs() / cub < 1e-4);
    }

    fn ball_op(h: f64) -> DiscretizedOperator {
        let dom = Domain::ball(3, 1.0);
        DiscretizedOperator::new(Grid::covering(&dom, h, &[0.0; 3]), &dom, f64::INFINITY, |_| 0.0).unwrap()
    }

    #[test]
    fn operator_matches_dense_stencil() {
        let op = ball_op(0.25);
        let idx = op.node_indices();
        let n = op.len();
        let x: Vec<f64> = (0..n).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        let mut y = vec![0.0; n];
        op.apply(&x, &mut y);
        let c = op.coupling();
        for i in 0..n {
            let mut want = op.diagonal(i) * x[i];
            for a in 0..3 {
                for s in [-1i64, 1] {
                    let mut j = idx[i].clone();
                    let v = j[a] as i64 + s;
                    if v < 0 {
                        continue;
                    }
                    j[a] = v as usize;
                    if let Some(k) = op.index_of(&j) {
                        want += c * x[k];
                    }
                }
            }
            assert!((want - y[i]).abs() < 1e-9, "{i}");
        }
        assert!(op.exterior_neighbour_counts().iter().filter(|&&v| v > 0.0).count() > 0);
        assert_eq!(op.mask().iter().filter(|&&b| b).count(), n);
    }

    #[test]
    fn prolongation_is_exact_for_linear_fields() {
        let dom = Domain::cube(3, 1.0);
        let coarse = DiscretizedOperator::new(Grid::covering(&dom, 0.25, &[0.0; 3]), &dom, 1.0, |_| 0.0).unwrap();
        let fine = DiscretizedOperator::new(Grid::covering(&dom, 0.125, &[0.0; 3]), &dom, 1.0, |_| 0.0).unwrap();
        let f = |x: &[f64]| 1.0 + 0.5 * x[0] - 0.25 * x[1] + x[2];
        let v: Vec<f64> = coarse.node_coords().iter().map(|x| f(x)).collect();
        let w = fine.prolong_from(&coarse, &v);
        for (x, wi) in fine.node_coords().iter().zip(&w) {
            if x.iter().all(|c| c.abs() < 0.75 - 1e-9) {
                assert!((f(x) - wi).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn expmv_of_diagonal_operator() {
        let dom = Domain::cube(1, 0.5);
        let op = DiscretizedOperator::new(Grid::covering(&dom, 0.5, &[0.0]), &dom, 10.0, |x| x[0]).unwrap();
        // a single interior node at 0 has no interior neighbours: e^{t(q - 1/h^2)}
        let n = op.len();
        assert_eq!(n, 1);
        let e = op.expmv(0.3, &[2.0]);
        assert!((e[0] - 2.0 * (0.3 * (0.0 - 4.0f64)).exp()).abs() < 1e-14);
    }

    #[test]
    fn shifted_solve_inverts() {
        let op = ball_op(0.2);
        let b: Vec<f64> = (0..op.len()).map(|i| (i % 7) as f64).collect();
        let u = op.solve_shifted(1.0, &b, 1e-12, 10_000).unwrap();
        let mut au = vec![0.0; op.len()];
        op.apply(&u, &mut au);
        for i in 0..op.len() {
            assert!((u[i] - au[i] - b[i]).abs() < 1e-8);
        }
        assert!(op.solve_shifted(-1e9, &b, 1e-12, 10).is_err());
    }

    #[test]
    fn cell_average_near_a_centred_pole() {
        let c = PointCloud::new(3, &[vec![0.0; 3]]).unwrap();
        let spec = KernelSpec::truncated(3, 10.0).unwrap();
        let h = 0.1;
        let pot = CellAveragedPotential::new(c, spec, 1.0, f64::INFINITY, h).unwrap();
        let centre = pot.raw(&[0.0; 3]);
        // the unit-cube average of |x|^{-2} is about 7.4 in units of h^-2
        let unit = 8.0 * orthant_inverse_square([0.5; 3]);
        assert!((centre * h * h - unit).abs() < 1e-9);
        assert!(unit > 6.0 && unit < 9.0, "{unit}");
        // away from the pole the cell average approaches the point value
        let x = [0.2, 0.1, 0.0];
        let pt = 1.0 / 0.05;
        assert!((pot.raw(&x) - pt).abs() / pt < 0.02);
        // truncation inside the cell is honoured
        let spec = KernelSpec::truncated(3, 0.04).unwrap();
        let pot2 = CellAveragedPotential::new(pot.cloud.clone(), spec, 1.0, f64::INFINITY, h).unwrap();
        assert!(pot2.raw(&[0.0; 3]) < centre);
    }
}
