//! Connected components of r-neighbourhoods, the connectivity radius and
//! covering numbers.

use serde::Serialize;

use crate::num::dist2;
use crate::point_process::{PointCloud, Region};

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Component {
    pub members: Vec<usize>,
    pub n_points: usize,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentDecomposition {
    pub r: f64,
    pub components: Vec<Component>,
    pub n_r: usize,
}

impl ComponentDecomposition {
    /// Component index of each cloud point.
    pub fn labels(&self, n: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; n];
        for (c, comp) in self.components.iter().enumerate() {
            for &i in &comp.members {
                out[i] = c;
            }
        }
        out
    }
}

/// Components of B_r(cloud): points are linked when their distance is below 2r.
/// Components are ordered by their smallest member index.
pub fn components(cloud: &PointCloud, r: f64) -> ComponentDecomposition {
    let n = cloud.len();
    let mut uf = UnionFind::new(n);
    let lim = 4.0 * r * r;
    for i in 0..n {
        for j in 0..i {
            if dist2(cloud.point(i), cloud.point(j)) < lim {
                uf.union(i, j);
            }
        }
    }
    let mut slot = vec![usize::MAX; n];
    let mut comps: Vec<Component> = Vec::new();
    for i in 0..n {
        let root = uf.find(i);
        if slot[root] == usize::MAX {
            slot[root] = comps.len();
            comps.push(Component { members: vec![], n_points: 0, lambda: None });
        }
        let c = &mut comps[slot[root]];
        c.members.push(i);
        c.n_points += 1;
    }
    let n_r = comps.iter().map(|c| c.n_points).max().unwrap_or(0);
    ComponentDecomposition { r, components: comps, n_r }
}

/// Edges (i, j, length) of a Euclidean minimum spanning tree (Prim, O(n^2)).
pub fn mst_edges(cloud: &PointCloud) -> Vec<(usize, usize, f64)> {
    let n = cloud.len();
    if n < 2 {
        return vec![];
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    in_tree[0] = true;
    for j in 1..n {
        best[j] = dist2(cloud.point(0), cloud.point(j));
    }
    let mut edges = Vec::with_capacity(n - 1);
    for _ in 1..n {
        let mut v = usize::MAX;
        for j in 0..n {
            if !in_tree[j] && (v == usize::MAX || best[j] < best[v]) {
                v = j;
            }
        }
        in_tree[v] = true;
        edges.push((from[v], v, best[v].sqrt()));
        for j in 0..n {
            if !in_tree[j] {
                let d = dist2(cloud.point(v), cloud.point(j));
                if d < best[j] {
                    best[j] = d;
                    from[j] = v;
                }
            }
        }
    }
    edges
}

/// Connectivity radius: half the longest MST edge, 0 for fewer than two points.
pub fn gamma(cloud: &PointCloud) -> f64 {
    mst_edges(cloud).iter().map(|e| e.2).fold(0.0, f64::max) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Covering {
    pub count: u64,
    /// false when the count is only an upper bound on the minimum
    pub exact: bool,
}

/// Number of side-r boxes covering the region: exact for cubes, and for balls the
/// number of cells of the r-grid anchored at the centre that meet the ball.
pub fn covering_number(region: &Region, r: f64) -> Covering {
    let d = region.dim();
    match region {
        Region::Box { half_width, .. } => {
            let per_axis = ((2.0 * half_width / r) * (1.0 - 1e-12)).ceil().max(1.0) as u64;
            Covering { count: per_axis.pow(d as u32), exact: true }
        }
        Region::Ball { radius, .. } => {
            let m = (radius / r).ceil() as i64;
            // distance from the centre to the nearest point of cell [i r, (i+1) r] along one axis
            let near: Vec<f64> = (-m..m)
                .map(|i| {
                    let (lo, hi) = (i as f64 * r, (i + 1) as f64 * r);
                    if hi <= 0.0 {
                        -hi
                    } else if lo >= 0.0 {
                        lo
                    } else {
                        0.0
                    }
                })
                .collect();
            let r2 = radius * radius;
            Covering { count: count_cells(&near, d, r2), exact: false }
        }
    }
}

fn count_cells(near: &[f64], d: usize, budget: f64) -> u64 {
    if d == 0 {
        return 1;
    }
    near.iter()
        .filter(|&&v| v * v < budget)
        .map(|&v| count_cells(near, d - 1, budget - v * v))
        .sum()
}

/// Largest pairwise distance within each component, paired with 2 r N_C.
pub fn component_diameters(cloud: &PointCloud, dec: &ComponentDecomposition) -> Vec<(f64, f64)> {
    dec.components
        .iter()
        .map(|c| {
            let mut diam2: f64 = 0.0;
            for (a, &i) in c.members.iter().enumerate() {
                for &j in &c.members[..a] {
                    diam2 = diam2.max(dist2(cloud.point(i), cloud.point(j)));
                }
            }
            (diam2.sqrt(), 2.0 * dec.r * c.n_points as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::ball_volume;
    use crate::point_process::sample_ppp;

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(3, &pts.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn component_examples() {
        let d = components(&cloud(&[[0.0; 3], [1.0, 0.0, 0.0]]), 0.6);
        assert_eq!((d.components.len(), d.n_r), (1, 2));
        let d = components(&cloud(&[[0.0; 3], [3.0, 0.0, 0.0]]), 1.0);
        assert_eq!(d.components.len(), 2);
        let d = components(&cloud(&[[0.0; 3], [1.0, 0.0, 0.0], [5.0, 0.0, 0.0]]), 0.75);
        assert_eq!(d.components[0].members, vec![0, 1]);
        assert_eq!(d.components[1].members, vec![2]);
        assert_eq!(d.n_r, 2);
        // exact tangency counts as disconnected
        let d = components(&cloud(&[[0.0; 3], [2.0, 0.0, 0.0]]), 1.0);
        assert_eq!(d.components.len(), 2);
    }

    fn brute_force_bottleneck(cloud: &PointCloud) -> f64 {
        // minimise the largest edge over all spanning trees by Kruskal-style threshold search
        let n = cloud.len();
        let mut lens: Vec<f64> = vec![];
        for i in 0..n {
            for j in 0..i {
                lens.push(crate::num::dist(cloud.point(i), cloud.point(j)));
            }
        }
        lens.sort_by(f64::total_cmp);
        for &l in &lens {
            let mut uf = UnionFind::new(n);
            for i in 0..n {
                for j in 0..i {
                    if crate::num::dist(cloud.point(i), cloud.point(j)) <= l {
                        uf.union(i, j);
                    }
                }
            }
            let root = uf.find(0);
            if (0..n).all(|i| uf.find(i) == root) {
                return l;
            }
        }
        0.0
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma(&cloud(&[[0.0; 3], [2.0, 0.0, 0.0]])), 1.0);
        assert_eq!(gamma(&cloud(&[[1.0; 3]])), 0.0);
        let c = cloud(&[[0.0; 3], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0]]);
        assert_eq!(gamma(&c), 1.0);
        assert_eq!(brute_force_bottleneck(&c) / 2.0, 1.0);
    }

    #[test]
    fn gamma_matches_threshold_connectivity() {
        for seed in 0..30 {
            let c = sample_ppp(&Region::cube(3, 1.0), 3.0, seed).unwrap();
            if c.len() < 2 {
                continue;
            }
            let g = gamma(&c);
            assert!((g - brute_force_bottleneck(&c) / 2.0).abs() < 1e-12);
            assert_eq!(components(&c, g * 1.0001).components.len(), 1);
            assert!(components(&c, g * 0.9999).components.len() >= 2);
        }
    }

    #[test]
    fn covering_examples() {
        assert_eq!(covering_number(&Region::cube(3, 0.5), 0.5).count, 8);
        assert_eq!(covering_number(&Region::cube(3, 0.5), 2.0).count, 1);
        assert!(covering_number(&Region::cube(3, 0.5), 0.5).exact);
    }

    #[test]
    fn ball_covering_converges_to_volume() {
        // The cell count overshoots by a boundary layer of relative size O(r/R):
        // 3.53% at R/64, below 2% from R/128 on.
        let vol = ball_volume(3, 1.0);
        let excess = |m: f64| {
            let r = 1.0 / m;
            covering_number(&Region::ball(3, 1.0), r).count as f64 * r.powi(3) / vol - 1.0
        };
        let e64 = excess(64.0);
        let e128 = excess(128.0);
        assert!(e64 > 0.0 && (e64 - 0.0353).abs() < 5e-4, "{e64}");
        assert!(e128 > 0.0 && e128 < 0.02, "{e128}");
        assert!((e64 / e128 - 2.0).abs() < 0.2);
    }

    #[test]
    fn diameters_are_bounded() {
        for seed in 0..20 {
            let c = sample_ppp(&Region::cube(3, 1.5), 2.0, 100 + seed).unwrap();
            let dec = components(&c, 0.4);
            for (diam, bound) in component_diameters(&c, &dec) {
                assert!(diam <= bound);
            }
        }
    }

    #[test]
    fn components_merge_monotonically() {
        let c = sample_ppp(&Region::cube(3, 1.0), 5.0, 3).unwrap();
        let mut last = usize::MAX;
        let mut last_nr = 0;
        for i in 1..30 {
            let d = components(&c, 0.02 * i as f64);
            assert!(d.components.len() <= last);
            assert!(d.n_r >= last_nr);
            last = d.components.len();
            last_nr = d.n_r;
        }
    }
}
