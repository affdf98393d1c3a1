//! Homogeneous Poisson samples, ball counts and the clustering probability
//! bounds together with their Monte-Carlo checks.

use rand::Rng as _;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cloud_geometry::covering_number;
use crate::error::{Error, Result};
use crate::geom::{cluster_fits, Fit};
use crate::num::{ball_volume, dist2, factorial, proportion, unit_ball_volume};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Region {
    Box { center: Vec<f64>, half_width: f64 },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Region {
    pub fn cube(d: usize, half_width: f64) -> Self {
        Region::Box { center: vec![0.0; d], half_width }
    }

    pub fn ball(d: usize, radius: f64) -> Self {
        Region::Ball { center: vec![0.0; d], radius }
    }

    pub fn dim(&self) -> usize {
        match self {
            Region::Box { center, .. } | Region::Ball { center, .. } => center.len(),
        }
    }

    pub fn center(&self) -> &[f64] {
        match self {
            Region::Box { center, .. } | Region::Ball { center, .. } => center,
        }
    }

    /// Half-width for boxes, radius for balls.
    pub fn size(&self) -> f64 {
        match self {
            Region::Box { half_width, .. } => *half_width,
            Region::Ball { radius, .. } => *radius,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.size();
        if self.dim() == 0 {
            return Err(Error::InvalidRegion("dimension 0".into()));
        }
        if !(s.is_finite() && s > 0.0) || self.center().iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidRegion(format!("size {s} must be finite and positive")));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        let d = self.dim();
        match self {
            Region::Box { half_width, .. } => (2.0 * half_width).powi(d as i32),
            Region::Ball { radius, .. } => ball_volume(d, *radius),
        }
    }

    /// Volume of the r-neighbourhood (Steiner formula for boxes).
    pub fn dilated_volume(&self, r: f64) -> f64 {
        let d = self.dim();
        match self {
            Region::Box { half_width, .. } => {
                let s = 2.0 * half_width;
                (0..=d)
                    .map(|j| binom(d, j) * s.powi((d - j) as i32) * unit_ball_volume(j) * r.powi(j as i32))
                    .sum()
            }
            Region::Ball { radius, .. } => ball_volume(d, radius + r),
        }
    }

    /// A region of the same kind enlarged by `r` (for boxes this contains the
    /// r-neighbourhood).
    pub fn enlarged(&self, r: f64) -> Region {
        match self {
            Region::Box { center, half_width } => Region::Box { center: center.clone(), half_width: half_width + r },
            Region::Ball { center, radius } => Region::Ball { center: center.clone(), radius: radius + r },
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Box { center, half_width } => x.iter().zip(center).all(|(a, c)| (a - c).abs() <= *half_width),
            Region::Ball { center, radius } => dist2(x, center) <= radius * radius,
        }
    }

    /// Euclidean distance from x to the region (0 inside).
    pub fn distance_to(&self, x: &[f64]) -> f64 {
        match self {
            Region::Box { center, half_width } => x
                .iter()
                .zip(center)
                .map(|(a, c)| ((a - c).abs() - half_width).max(0.0).powi(2))
                .sum::<f64>()
                .sqrt(),
            Region::Ball { center, radius } => (dist2(x, center).sqrt() - radius).max(0.0),
        }
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let s = self.size();
        (self.center().iter().map(|c| c - s).collect(), self.center().iter().map(|c| c + s).collect())
    }

    pub fn sample_uniform(&self, rng: &mut Rng) -> Vec<f64> {
        match self {
            Region::Box { center, half_width } => {
                center.iter().map(|c| c + half_width * (2.0 * rng.random::<f64>() - 1.0)).collect()
            }
            Region::Ball { center, radius } => {
                let d = center.len();
                let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
                let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                let rad = radius * rng.random::<f64>().powf(1.0 / d as f64);
                center.iter().zip(&g).map(|(c, v)| c + rad * v / n).collect()
            }
        }
    }

    /// Parses `box:HALF` or `ball:R` (centred at the origin).
    pub fn parse(s: &str, d: usize) -> Result<Region> {
        let (kind, val) = s.split_once(':').ok_or_else(|| Error::Parse(format!("region '{s}'")))?;
        let v: f64 = val.trim().parse().map_err(|_| Error::Parse(format!("region size '{val}'")))?;
        let r = match kind.trim() {
            "box" => Region::cube(d, v),
            "ball" => Region::ball(d, v),
            other => return Err(Error::Parse(format!("region kind '{other}'"))),
        };
        r.validate()?;
        Ok(r)
    }
}

fn binom(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
    region: Option<Region>,
}

impl PointCloud {
    pub fn empty(dim: usize) -> Self {
        Self { dim, coords: vec![], region: None }
    }

    /// A manually specified cloud; rejects duplicates and non-finite coordinates.
    pub fn new(dim: usize, points: &[Vec<f64>]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        let mut coords = Vec::with_capacity(dim * points.len());
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::InvalidInput(format!("point {i} has {} coordinates, expected {dim}", p.len())));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("point {i} is not finite")));
            }
            coords.extend_from_slice(p);
        }
        let cloud = Self { dim, coords, region: None };
        for i in 0..cloud.len() {
            for j in 0..i {
                if cloud.point(i) == cloud.point(j) {
                    return Err(Error::InvalidInput(format!("points {j} and {i} coincide")));
                }
            }
        }
        Ok(cloud)
    }

    pub fn with_region(mut self, region: Region) -> Result<Self> {
        if (0..self.len()).any(|i| !region.contains(self.point(i))) {
            return Err(Error::InvalidInput("a point lies outside the declared region".into()));
        }
        self.region = Some(region);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.coords.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim.max(1))
    }

    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        self.points().map(|p| p.to_vec()).collect()
    }

    pub fn region(&self) -> Option<&Region> {
        self.region.as_ref()
    }

    pub fn subset(&self, idx: &[usize]) -> PointCloud {
        let mut coords = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            coords.extend_from_slice(self.point(i));
        }
        PointCloud { dim: self.dim, coords, region: None }
    }

    /// Union of two clouds of equal dimension (no duplicate check).
    pub fn union(&self, other: &PointCloud) -> PointCloud {
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        PointCloud { dim: self.dim, coords, region: None }
    }

    pub fn scaled(&self, factor: f64) -> PointCloud {
        PointCloud { dim: self.dim, coords: self.coords.iter().map(|v| v * factor).collect(), region: None }
    }

    pub fn translated(&self, shift: &[f64]) -> PointCloud {
        let coords = self.coords.chunks_exact(self.dim).flat_map(|p| p.iter().zip(shift).map(|(a, b)| a + b)).collect();
        PointCloud { dim: self.dim, coords, region: None }
    }

    /// Smallest distance from x to a point of the cloud.
    pub fn nearest_distance(&self, x: &[f64]) -> f64 {
        self.points().map(|p| dist2(p, x)).fold(f64::INFINITY, f64::min).sqrt()
    }
}

/// Poisson sample of the given intensity on a region.
pub fn sample_ppp(region: &Region, intensity: f64, seed: u64) -> Result<PointCloud> {
    let mut rng = rng::seeded(seed);
    sample_ppp_with(region, intensity, &mut rng)
}

pub fn sample_ppp_with(region: &Region, intensity: f64, rng: &mut Rng) -> Result<PointCloud> {
    region.validate()?;
    let vol = region.volume();
    if !(vol.is_finite() && vol > 0.0) {
        return Err(Error::InvalidRegion(format!("volume {vol}")));
    }
    if !(intensity.is_finite() && intensity > 0.0) {
        return Err(Error::InvalidInput(format!("intensity {intensity}")));
    }
    let mean = intensity * vol;
    let n = Poisson::new(mean).map_err(|e| Error::InvalidInput(e.to_string()))?.sample(rng) as usize;
    let d = region.dim();
    let mut coords = Vec::with_capacity(n * d);
    for _ in 0..n {
        coords.extend(region.sample_uniform(rng));
    }
    Ok(PointCloud { dim: d, coords, region: Some(region.clone()) })
}

/// Number of points at distance strictly less than r from `center`.
pub fn count_in_ball(cloud: &PointCloud, center: &[f64], r: f64) -> usize {
    let r2 = r * r;
    cloud.points().filter(|p| dist2(p, center) < r2).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BallCount {
    pub count: usize,
    pub exact: bool,
}

const EXACT_LIMIT: usize = 6;
const FIT_BUDGET: usize = 200_000;

/// sup over x in `search` of the number of points in the open ball B_r(x).
pub fn max_ball_count(cloud: &PointCloud, r: f64, search: &Region) -> BallCount {
    let cand: Vec<Vec<f64>> = cloud.points().filter(|p| search.distance_to(p) < r).map(|p| p.to_vec()).collect();
    let n = cand.len();
    if n <= 1 {
        return BallCount { count: n, exact: true };
    }
    let four_r2 = 4.0 * r * r;
    let adj: Vec<Vec<usize>> =
        (0..n).map(|i| (i + 1..n).filter(|&j| dist2(&cand[i], &cand[j]) < four_r2).collect()).collect();
    let mut state = Search { cand: &cand, adj: &adj, r, region: search, best: 1, calls: 0, overflow: false };
    let mut cur = Vec::new();
    for i in 0..n {
        cur.push(i);
        let next: Vec<usize> = adj[i].clone();
        state.extend(&mut cur, &next);
        cur.pop();
        if state.overflow {
            break;
        }
    }
    if state.overflow {
        let grid = grid_max_count(cloud, r, search);
        return BallCount { count: grid.max(state.best), exact: false };
    }
    BallCount { count: state.best, exact: true }
}

struct Search<'a> {
    cand: &'a [Vec<f64>],
    adj: &'a [Vec<usize>],
    r: f64,
    region: &'a Region,
    best: usize,
    calls: usize,
    overflow: bool,
}

impl Search<'_> {
    fn extend(&mut self, cur: &mut Vec<usize>, next: &[usize]) {
        if self.overflow || cur.len() + next.len() <= self.best {
            return;
        }
        for (pos, &c) in next.iter().enumerate() {
            if cur.len() + (next.len() - pos) <= self.best {
                return;
            }
            cur.push(c);
            self.calls += 1;
            let pts: Vec<Vec<f64>> = cur.iter().map(|&i| self.cand[i].clone()).collect();
            let fit = cluster_fits(&pts, self.r, self.region);
            if fit == Fit::Unknown || self.calls > FIT_BUDGET {
                self.overflow = true;
                cur.pop();
                return;
            }
            if fit == Fit::Yes {
                self.best = self.best.max(cur.len());
                let rest: Vec<usize> = next[pos + 1..].iter().copied().filter(|j| self.adj[c].contains(j)).collect();
                if cur.len() == EXACT_LIMIT && !rest.is_empty() {
                    self.overflow = true;
                    cur.pop();
                    return;
                }
                self.extend(cur, &rest);
            }
            cur.pop();
            if self.overflow {
                return;
            }
        }
    }
}

/// Fine-grid fallback with spacing r/20 over the search region.
fn grid_max_count(cloud: &PointCloud, r: f64, search: &Region) -> usize {
    let (lo, hi) = search.bounding_box();
    let d = lo.len();
    let step = r / 20.0;
    let counts: Vec<usize> = lo.iter().zip(&hi).map(|(a, b)| ((b - a) / step).ceil() as usize + 1).collect();
    let mut idx = vec![0usize; d];
    let mut best = 0;
    let mut x = vec![0.0; d];
    loop {
        for k in 0..d {
            x[k] = (lo[k] + idx[k] as f64 * step).min(hi[k]);
        }
        if search.contains(&x) {
            best = best.max(count_in_ball(cloud, &x, r));
        }
        let mut k = 0;
        while k < d {
            idx[k] += 1;
            if idx[k] < counts[k] {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == d {
            return best;
        }
    }
}

/// |D| |B_r|^k / (k+1)!
pub fn prob_chain_bound(volume_d: f64, r: f64, k: usize, d: usize) -> f64 {
    volume_d * ball_volume(d, r).powi(k as i32) / factorial(k + 1)
}

/// |D| |B_r|^k, the union bound taken over ordered chains. Summing over the
/// C(N, k+1) unordered subsets misses the (k+1)! orders in which one subset
/// can form a chain; the printed bound above is violated for r >= 0.2 in d = 3.
pub fn prob_chain_bound_ordered(volume_d: f64, r: f64, k: usize, d: usize) -> f64 {
    volume_d * ball_volume(d, r).powi(k as i32)
}

/// |B_r(D)| |B_{2r}|^k / (k+1)!
pub fn prob_sup_count_bound(region: &Region, r: f64, k: usize) -> f64 {
    let d = region.dim();
    region.dilated_volume(r) * ball_volume(d, 2.0 * r).powi(k as i32) / factorial(k + 1)
}

/// 1 - exp{-|D| r^{kd} e^{-|B_r|} / (2^d (k+1)!)}
pub fn prob_cluster_lower(volume_d: f64, r: f64, k: usize, d: usize) -> f64 {
    let x = volume_d * r.powi((k * d) as i32) * (-ball_volume(d, r)).exp()
        / (2f64.powi(d as i32) * factorial(k + 1));
    -(-x).exp_m1()
}

/// prod_i (1 - (2 r_i)^d |B_{2 r_i}|^k / (k+1)!)^{theta_{r_i}(D_i)}
pub fn prob_no_cluster_lower(regions: &[(Region, f64)], k: usize) -> Result<f64> {
    let mut log_total = 0.0;
    for (region, r) in regions {
        let d = region.dim();
        let base = 1.0 - (2.0 * r).powi(d as i32) * ball_volume(d, 2.0 * r).powi(k as i32) / factorial(k + 1);
        if base <= 0.0 {
            return Err(Error::BoundVacuous(format!("factor base {base} at r={r}")));
        }
        let cover = covering_number(region, *r);
        log_total += cover.count as f64 * base.ln();
    }
    Ok(log_total.exp())
}

/// Whether a chain y_0, ..., y_k of distinct points exists with y_0 in D and
/// consecutive distances below r.
pub fn chain_event(cloud: &PointCloud, region: &Region, r: f64, k: usize) -> bool {
    let n = cloud.len();
    if n < k + 1 {
        return false;
    }
    let r2 = r * r;
    let adj: Vec<Vec<usize>> =
        (0..n).map(|i| (0..n).filter(|&j| j != i && dist2(cloud.point(i), cloud.point(j)) < r2).collect()).collect();
    fn walk(v: usize, left: usize, adj: &[Vec<usize>], used: &mut Vec<bool>) -> bool {
        if left == 0 {
            return true;
        }
        for &w in &adj[v] {
            if !used[w] {
                used[w] = true;
                let ok = walk(w, left - 1, adj, used);
                used[w] = false;
                if ok {
                    return true;
                }
            }
        }
        false
    }
    let mut used = vec![false; n];
    (0..n).filter(|&i| region.contains(cloud.point(i))).any(|i| {
        used[i] = true;
        let ok = walk(i, k, &adj, &mut used);
        used[i] = false;
        ok
    })
}

/// Whether some x in D sees exactly k+1 points in B_r(x). Along a generic path
/// inside the connected region the count changes by one at a time, so the event
/// holds iff the maximal count is at least k+1 and some x in D sees at most k+1.
/// The second part is probed on a grid of 5^d points plus the centre; missing a
/// low-count point only undercounts the event.
pub fn exact_count_event(cloud: &PointCloud, region: &Region, r: f64, k: usize) -> bool {
    if max_ball_count(cloud, r, region).count < k + 1 {
        return false;
    }
    if count_in_ball(cloud, region.center(), r) <= k + 1 {
        return true;
    }
    let (lo, hi) = region.bounding_box();
    let d = lo.len();
    let m = 5usize;
    let total = m.pow(d as u32);
    let mut x = vec![0.0; d];
    for code in 0..total {
        let mut c = code;
        for i in 0..d {
            let t = (c % m) as f64 + 0.5;
            c /= m;
            x[i] = lo[i] + (hi[i] - lo[i]) * t / m as f64;
        }
        if region.contains(&x) && count_in_ball(cloud, &x, r) <= k + 1 {
            return true;
        }
    }
    false
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lemma {
    Chain,
    Sup,
    Cluster,
    NoCluster,
}

impl Lemma {
    pub fn parse(s: &str) -> Result<Lemma> {
        match s {
            "chain" => Ok(Lemma::Chain),
            "sup" => Ok(Lemma::Sup),
            "cluster" => Ok(Lemma::Cluster),
            "nocluster" => Ok(Lemma::NoCluster),
            other => Err(Error::Parse(format!("unknown lemma '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Lemma::Chain => "chain",
            Lemma::Sup => "sup",
            Lemma::Cluster => "cluster",
            Lemma::NoCluster => "nocluster",
        }
    }

    /// Upper bounds are violated when the empirical frequency is too high,
    /// lower bounds when it is too low.
    pub fn is_upper(&self) -> bool {
        matches!(self, Lemma::Chain | Lemma::Sup)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub lemma: Lemma,
    pub d: usize,
    pub k: usize,
    pub r: f64,
    pub half_width: f64,
    pub trials: u64,
    pub empirical: f64,
    pub bound: f64,
    pub stderr: f64,
    pub approximate_counts: u64,
    pub pass: bool,
    /// chain lemma only: the ordered-chain bound and its verdict
    pub ordered_bound: Option<f64>,
    pub ordered_pass: Option<bool>,
}

/// Monte-Carlo frequency of the lemma's event on unit-intensity samples, with D
/// the cube of the given half-width centred at 0, compared to the bound with
/// 3 standard errors of slack.
pub fn verify_bound(lemma: Lemma, d: usize, k: usize, r: f64, half_width: f64, trials: u64, seed: u64) -> Result<BoundCheck> {
    let region = Region::cube(d, half_width);
    let (bound, sample_region) = match lemma {
        Lemma::Chain => (prob_chain_bound(region.volume(), r, k, d), region.enlarged(k as f64 * r)),
        Lemma::Sup => (prob_sup_count_bound(&region, r, k), region.enlarged(r)),
        Lemma::Cluster => (prob_cluster_lower(region.volume(), r, k, d), region.enlarged(r)),
        Lemma::NoCluster => (prob_no_cluster_lower(&[(region.clone(), r)], k)?, region.enlarged(r)),
    };
    let outcomes = crate::parallel::map_indexed(trials as usize, |i| -> Result<(bool, bool)> {
        let mut g = rng::stream(seed, i as u64);
        let cloud = sample_ppp_with(&sample_region, 1.0, &mut g)?;
        Ok(match lemma {
            Lemma::Chain => (chain_event(&cloud, &region, r, k), false),
            Lemma::Sup | Lemma::NoCluster => {
                let c = max_ball_count(&cloud, r, &region);
                let event = if lemma == Lemma::Sup { c.count > k } else { c.count <= k };
                (event, !c.exact)
            }
            Lemma::Cluster => (exact_count_event(&cloud, &region, r, k), false),
        })
    });
    let (mut hits, mut approx) = (0u64, 0u64);
    for o in outcomes {
        let (event, inexact) = o?;
        hits += event as u64;
        approx += inexact as u64;
    }
    let (p, se) = proportion(hits, trials);
    // a zero-variance estimate still carries a binomial resolution of 1/trials
    let slack = 3.0 * se.max(1.0 / trials as f64);
    let pass = if lemma.is_upper() { p <= bound + slack } else { p >= bound - slack };
    let ordered_bound = (lemma == Lemma::Chain).then(|| prob_chain_bound_ordered(region.volume(), r, k, d));
    Ok(BoundCheck {
        lemma,
        d,
        k,
        r,
        half_width,
        trials,
        empirical: p,
        bound,
        stderr: se,
        approximate_counts: approx,
        pass,
        ordered_bound,
        ordered_pass: ordered_bound.map(|b| p <= b + slack),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(3, &pts.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn counting_examples() {
        assert_eq!(count_in_ball(&cloud(&[[0.0; 3]]), &[0.0; 3], 1.0), 1);
        let c = cloud(&[[0.0; 3], [2.0, 0.0, 0.0]]);
        assert_eq!(count_in_ball(&c, &[1.0, 0.0, 0.0], 0.9), 0);
        assert_eq!(count_in_ball(&c, &[1.0, 0.0, 0.0], 1.0), 0);
        let c = cloud(&[[0.0; 3], [1.0, 0.0, 0.0]]);
        assert_eq!(count_in_ball(&c, &[0.5, 0.0, 0.0], 0.6), 2);
    }

    #[test]
    fn max_count_examples() {
        let region = Region::cube(3, 5.0);
        assert_eq!(max_ball_count(&cloud(&[[1.0, 1.0, 1.0]]), 0.1, &region).count, 1);
        let c = cloud(&[[0.0; 3], [2.0, 0.0, 0.0]]);
        assert_eq!(max_ball_count(&c, 0.99, &region).count, 1);
        assert_eq!(max_ball_count(&c, 1.01, &region).count, 2);
    }

    #[test]
    fn max_count_matches_grid_search() {
        for seed in 0..20 {
            let region = Region::cube(2, 1.0);
            let c = sample_ppp(&Region::cube(2, 1.3), 3.0, seed).unwrap();
            let exact = max_ball_count(&c, 0.35, &region);
            let grid = grid_max_count(&c, 0.35, &region);
            assert!(exact.exact);
            assert!(grid <= exact.count, "seed {seed}");
            assert!(exact.count <= grid + 1, "seed {seed}");
        }
    }

    #[test]
    fn overflow_falls_back_to_grid() {
        let pts: Vec<Vec<f64>> = (0..9).map(|i| vec![0.01 * i as f64, 0.0]).collect();
        let c = PointCloud::new(2, &pts).unwrap();
        let res = max_ball_count(&c, 0.5, &Region::cube(2, 1.0));
        assert!(!res.exact);
        assert_eq!(res.count, 9);
    }

    #[test]
    fn sampling_is_deterministic_and_inside() {
        let region = Region::ball(3, 1.5);
        let a = sample_ppp(&region, 2.0, 11).unwrap();
        let b = sample_ppp(&region, 2.0, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.points().all(|p| region.contains(p)));
        assert!(sample_ppp(&Region::cube(3, -1.0), 1.0, 0).is_err());
    }

    #[test]
    fn empty_ball_frequency() {
        let region = Region::ball(3, 1.0);
        let n = 20_000u64;
        let zeros = (0..n).filter(|&s| sample_ppp(&region, 1.0, s).unwrap().is_empty()).count() as u64;
        let (p, se) = proportion(zeros, n);
        let want = (-4.0 * PI / 3.0).exp();
        assert!((p - want).abs() < 4.0 * se.max(1e-4), "{p} vs {want}");
    }

    #[test]
    fn bound_formulas() {
        assert_eq!(prob_chain_bound(2.5, 0.3, 0, 3), 2.5);
        let v = prob_chain_bound(1.0, 0.2, 2, 3);
        assert!((v - (4.0 * PI / 3.0 * 0.008f64).powi(2) / 6.0).abs() < 1e-15);
        assert!((v - 1.871e-4).abs() < 1e-7);
        assert!(prob_cluster_lower(1e-12, 0.3, 2, 3) < 1e-12);
        let mut last = 0.0;
        for i in 1..20 {
            let b = prob_cluster_lower(i as f64 * 10.0, 0.3, 2, 3);
            assert!(b > last);
            last = b;
        }
        let one = prob_no_cluster_lower(&[(Region::cube(3, 0.005), 0.01)], 2).unwrap();
        assert!(one < 1.0 && 1.0 - one < 1e-10);
        assert!(matches!(prob_no_cluster_lower(&[(Region::cube(3, 1.0), 1.0)], 2), Err(Error::BoundVacuous(_))));
    }

    #[test]
    fn steiner_volume_of_box() {
        // unit square dilated by r: 1 + 4r + pi r^2
        let sq = Region::Box { center: vec![0.0, 0.0], half_width: 0.5 };
        assert!((sq.dilated_volume(0.2) - (1.0 + 0.8 + PI * 0.04)).abs() < 1e-14);
    }

    #[test]
    fn chain_event_detects_paths() {
        let region = Region::cube(3, 0.5);
        let c = cloud(&[[0.0; 3], [0.25, 0.0, 0.0], [0.5, 0.0, 0.0], [2.0, 2.0, 2.0]]);
        assert!(chain_event(&c, &region, 0.3, 2));
        assert!(!chain_event(&c, &region, 0.3, 3));
        assert!(!chain_event(&c, &region, 0.2, 1));
    }

    #[test]
    fn exact_count_event_examples() {
        let region = Region::cube(3, 1.0);
        let c = cloud(&[[0.0; 3], [0.1, 0.0, 0.0], [0.0, 0.1, 0.0]]);
        assert!(exact_count_event(&c, &region, 0.2, 1));
        assert!(exact_count_event(&c, &region, 0.2, 2));
        assert!(!exact_count_event(&c, &region, 0.2, 3));
    }

    #[test]
    fn small_bound_sweeps_hold() {
        for lemma in [Lemma::Chain, Lemma::Sup, Lemma::Cluster, Lemma::NoCluster] {
            let c = verify_bound(lemma, 3, 2, 0.3, 0.5, 2000, 5).unwrap();
            assert!(c.pass, "{c:?}");
        }
    }
}
