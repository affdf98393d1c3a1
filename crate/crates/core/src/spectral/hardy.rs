//! Hardy test functions, the potential comparison near a small cluster, the
//! key lower-bound constants and the multipolar Hardy bound with its
//! partition-of-unity ingredients.

use std::f64::consts::PI;

use serde::Serialize;

use super::radial::{radial_lambda_max, RadialPotential};
use crate::bounds_oracles::h_d;
use crate::cloud_geometry::gamma;
use crate::error::{Error, Result};
use crate::num::{dist2, integrate_gl, norm, sphere_area};
use crate::point_process::PointCloud;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Rayleigh {
    pub numerator: f64,
    pub denominator: f64,
    pub ratio: f64,
}

/// (h_d + eps) ∫ g̃_n² Ṽ and ½ ∫ |∇g̃_n|² by radial quadrature, where g̃_n is 1
/// on the unit ball, |x|^{-(d-2)/2} up to n and linear down to 0 at 2n, and
/// Ṽ = min(1, |x|^{-2}).
pub fn hardy_rayleigh(n: usize, big_k: f64, eps: f64, d: usize) -> Result<Rayleigh> {
    let hd = h_d(d)?;
    if n < 2 || !(big_k > 2.0 * n as f64) || !(eps > 0.0) {
        return Err(Error::InvalidConfig(format!("hardy_rayleigh needs n >= 2, K > 2n, eps > 0 (n={n}, K={big_k})")));
    }
    let nf = n as f64;
    let df = d as f64;
    let sigma = sphere_area(d);
    let p = (df - 2.0) / 2.0;
    // pieces: [0,1], [1,n] in log variable, [n,2n]
    let inner_mass = integrate_gl(|r: f64| r.powf(df - 1.0), 0.0, 1.0, 1, 16);
    let log_n = nf.ln();
    let panels = (log_n.ceil() as usize).max(1);
    // on [1,n]: g² Ṽ r^{d-1} = r^{-(d-2)} r^{-2} r^{d-1} = 1/r, dr = r ds
    let mid_mass = integrate_gl(|_s: f64| 1.0, 0.0, log_n, panels, 8);
    let outer = |r: f64| nf.powf(-df) * (2.0 * nf - r).powi(2) * r.powf(df - 3.0);
    let outer_mass = integrate_gl(outer, nf, 2.0 * nf, 8, 16);
    let numerator = (hd + eps) * sigma * (inner_mass + mid_mass + outer_mass);
    // |∇g|² r^{d-1} on [1,n] = p² r^{-d} r^{d-1} = p²/r
    let mid_energy = integrate_gl(|_s: f64| p * p, 0.0, log_n, panels, 8);
    let outer_energy = integrate_gl(|r: f64| nf.powf(-df) * r.powf(df - 1.0), nf, 2.0 * nf, 8, 16);
    let denominator = 0.5 * sigma * (mid_energy + outer_energy);
    Ok(Rayleigh { numerator, denominator, ratio: numerator / denominator })
}

/// Smallest n for which the Rayleigh ratio of g̃_n exceeds 1 (doubling then bisection).
pub fn hardy_threshold(eps: f64, d: usize) -> Result<usize> {
    let above = |n: usize| -> Result<bool> { Ok(hardy_rayleigh(n, 2.0 * n as f64 + 1.0, eps, d)?.ratio > 1.0) };
    let mut hi = 2usize;
    while !above(hi)? {
        if hi > 1usize << 60 {
            return Err(Error::NoConvergence { iterations: 60, residual: f64::NAN });
        }
        hi *= 2;
    }
    let mut lo = (hi / 2).max(2);
    if above(lo)? {
        return Ok(lo);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if above(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

pub fn delta_star(d: usize, m: usize, theta: f64) -> Result<f64> {
    let hd = h_d(d)?;
    if m < 2 {
        return Err(Error::Domain(format!("delta_star needs M >= 2, got {m}")));
    }
    if !(theta > hd / m as f64) {
        return Err(Error::Domain(format!("theta {theta} <= h_d/M = {}", hd / m as f64)));
    }
    Ok(0.25 * (1.0 - hd / (theta * m as f64)))
}

#[derive(Debug, Clone, Serialize)]
pub struct PotentialComparison {
    pub checked: usize,
    pub violations: usize,
    /// smallest LHS/RHS over the samples
    pub min_ratio: f64,
}

/// Checks θ V(x) >= (h_d + 2θMδ⋆) min(1, |x|^{-2}) with V the bare inverse-square
/// potential of the cloud.
pub fn lb_potential_check(cloud: &PointCloud, theta: f64, d: usize, samples: &[Vec<f64>]) -> Result<PotentialComparison> {
    let m = cloud.len();
    let ds = delta_star(d, m, theta)?;
    if cloud.points().any(|y| norm(y) > ds) {
        return Err(Error::Precondition(format!("cloud must lie in the ball of radius delta_star = {ds}")));
    }
    let hd = h_d(d)?;
    let coef = hd + 2.0 * theta * m as f64 * ds;
    let mut out = PotentialComparison { checked: 0, violations: 0, min_ratio: f64::INFINITY };
    for x in samples {
        let mut v = 0.0;
        let mut on_pole = false;
        for y in cloud.points() {
            let r2 = dist2(x, y);
            if r2 == 0.0 {
                on_pole = true;
                break;
            }
            v += 1.0 / r2;
        }
        if on_pole {
            continue;
        }
        let x2 = x.iter().map(|c| c * c).sum::<f64>();
        let rhs = coef * if x2 <= 1.0 { 1.0 } else { 1.0 / x2 };
        let lhs = theta * v;
        out.checked += 1;
        out.min_ratio = out.min_ratio.min(lhs / rhs);
        if lhs < rhs * (1.0 - 1e-12) {
            out.violations += 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct KeyConstants {
    pub eps: f64,
    pub delta_star: f64,
    pub n_threshold: usize,
    pub k_growth: f64,
    pub lambda_tilde: f64,
    pub c1: f64,
    pub c2: f64,
}

/// K⋆ from the test-function sweep at eps = 2θMδ⋆, then the principal radial
/// eigenpair of ½Δ + (h_d + eps)Ṽ on B_{K⋆} with about K⋆/h geometric cells.
pub fn key_lower_bound_constants(d: usize, m: usize, theta: f64, h: f64) -> Result<KeyConstants> {
    let hd = h_d(d)?;
    if !(theta <= hd) {
        return Err(Error::Domain(format!("theta {theta} > h_d")));
    }
    let ds = delta_star(d, m, theta)?;
    let eps = 2.0 * theta * m as f64 * ds;
    let n0 = hardy_threshold(eps, d)?;
    let k_growth = 2.0 * n0 as f64;
    let cells = (k_growth / h).round().max(16.0) as usize;
    let eig = radial_lambda_max(d, k_growth, RadialPotential::Flattened { strength: hd + eps }, cells, 1e-3)?;
    let c2 = ds * ds * eig.lambda;
    if !(c2 > 0.0) {
        return Err(Error::NoConvergence { iterations: cells, residual: eig.lambda });
    }
    let l1 = eig.l1_norm();
    Ok(KeyConstants {
        eps,
        delta_star: ds,
        n_threshold: n0,
        k_growth,
        lambda_tilde: eig.lambda,
        c1: ds.powi(-(d as i32)) * l1 * l1,
        c2,
    })
}

/// M(π² + 3θ)/(2Γ²).
pub fn multipolar_bound(cloud: &PointCloud, theta: f64) -> Result<f64> {
    let m = cloud.len();
    if m < 2 {
        return Err(Error::InvalidInput("multipolar bound needs at least two points".into()));
    }
    let hd = h_d(cloud.dim())?;
    let (lo, hi) = (hd / m as f64, hd / (m - 1) as f64);
    if !(theta > lo && theta <= hi * (1.0 + 1e-12)) {
        return Err(Error::Domain(format!("theta {theta} outside ({lo}, {hi}]")));
    }
    let g = gamma(cloud);
    if !(g > 0.0) {
        return Err(Error::InvalidInput("coincident points".into()));
    }
    Ok(m as f64 * (PI * PI + 3.0 * theta) / (2.0 * g * g))
}

fn f_eta(cot: &[f64]) -> f64 {
    // (Σ cot)² / (Π csc² - 1), with Π csc² - 1 = expm1(Σ ln(1 + cot²))
    let s: f64 = cot.iter().sum();
    let g = cot.iter().map(|c| (c * c).ln_1p()).sum::<f64>().exp_m1();
    s * s / g
}

/// Grid maximum of F over (0, π/2)^N with `per_axis` interior points per axis,
/// together with the faces where some η_i = 0 (there F is computed from the
/// product form and equals at most 1).
pub fn f_eta_sup(n: usize, per_axis: usize) -> Result<f64> {
    if n == 0 || per_axis == 0 {
        return Err(Error::InvalidConfig("f_eta_sup needs N >= 1 and a non-empty grid".into()));
    }
    let cots: Vec<f64> =
        (1..=per_axis).map(|j| 1.0 / (j as f64 * PI / 2.0 / (per_axis + 1) as f64).tan()).collect();
    let mut idx = vec![0usize; n];
    let mut cot = vec![0.0; n];
    let mut best: f64 = 0.0;
    loop {
        for k in 0..n {
            cot[k] = cots[idx[k]];
        }
        best = best.max(f_eta(&cot));
        // F is symmetric: enumerate non-decreasing index tuples only
        let mut k = n;
        while k > 0 && idx[k - 1] + 1 >= per_axis {
            k -= 1;
        }
        if k == 0 {
            return Ok(best.max(boundary_f_eta(n, per_axis)));
        }
        idx[k - 1] += 1;
        for j in k..n {
            idx[j] = idx[k - 1];
        }
    }
}

fn boundary_f_eta(n: usize, per_axis: usize) -> f64 {
    // η_1 = 0: F = (Π_{j>1} sin η_j)² / 1 on the remaining grid
    if n == 1 {
        return 1.0;
    }
    let sins: Vec<f64> = (1..=per_axis).map(|j| (j as f64 * PI / 2.0 / (per_axis + 1) as f64).sin()).collect();
    let top = sins.iter().cloned().fold(0.0, f64::max);
    top.powi(2 * (n as i32 - 1))
}

/// J(t) = 0 on [0, 1/2], -cos(πt) on [1/2, 1], 1 beyond.
pub fn cutoff_j(t: f64) -> f64 {
    if t <= 0.5 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        -(PI * t).cos()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionCheck {
    pub checked: usize,
    pub max_identity_error: f64,
    /// largest (Σ|∇J_i|²) r² / (N π²)
    pub max_gradient_ratio: f64,
    pub violations: usize,
}

/// J_1 = Π_y J(|x - y|/r), J_2 = (1 - J_1²)^{1/2}; gradients by central differences.
pub fn partition_of_unity_check(cloud: &PointCloud, r: f64, samples: &[Vec<f64>], fd_step: f64) -> Result<PartitionCheck> {
    if cloud.is_empty() || !(r > 0.0) || !(fd_step > 0.0) {
        return Err(Error::InvalidConfig("partition check needs a non-empty cloud, r > 0 and a positive step".into()));
    }
    let n = cloud.len() as f64;
    let j1 = |x: &[f64]| cloud.points().map(|y| cutoff_j(dist2(x, y).sqrt() / r)).product::<f64>();
    let j2 = |x: &[f64]| (1.0 - j1(x).powi(2)).max(0.0).sqrt();
    let bound = n * PI * PI / (r * r);
    let mut out = PartitionCheck { checked: 0, max_identity_error: 0.0, max_gradient_ratio: 0.0, violations: 0 };
    let mut xp = vec![0.0; cloud.dim()];
    for x in samples {
        let (a, b) = (j1(x), j2(x));
        out.max_identity_error = out.max_identity_error.max((a * a + b * b - 1.0).abs());
        let mut g2 = 0.0;
        for k in 0..x.len() {
            xp.copy_from_slice(x);
            xp[k] = x[k] + fd_step;
            let (a_plus, b_plus) = (j1(&xp), j2(&xp));
            xp[k] = x[k] - fd_step;
            let (a_minus, b_minus) = (j1(&xp), j2(&xp));
            g2 += ((a_plus - a_minus) / (2.0 * fd_step)).powi(2) + ((b_plus - b_minus) / (2.0 * fd_step)).powi(2);
        }
        out.checked += 1;
        let ratio = g2 / bound;
        out.max_gradient_ratio = out.max_gradient_ratio.max(ratio);
        if ratio > 1.0 + 1e-6 {
            out.violations += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng as _;

    #[test]
    fn rayleigh_middle_energy_closed_form() {
        // ½∫_{1<|x|<n} |∇|x|^{-(d-2)/2}|² dx = h_d σ_d log n
        for d in [3usize, 4, 5] {
            for n in [10usize, 1000, 100_000] {
                let r = hardy_rayleigh(n, 2.0 * n as f64 + 1.0, 0.1, d).unwrap();
                let hd = h_d(d).unwrap();
                let sigma = sphere_area(d);
                let outer = sigma * (2f64.powi(d as i32) - 1.0) / (2.0 * d as f64);
                let mid = r.denominator - outer;
                let want = hd * sigma * (n as f64).ln();
                assert!((mid - want).abs() / want < 1e-10, "{d} {n}");
                let num_want =
                    (hd + 0.1) * sigma * (1.0 / d as f64 + (n as f64).ln() + outer_mass_closed(n as f64, d));
                assert!((r.numerator - num_want).abs() / num_want < 1e-10);
            }
        }
    }

    fn outer_mass_closed(n: f64, d: usize) -> f64 {
        // ∫_n^{2n} n^{-d} (2n - r)² r^{d-3} dr in closed form for d = 3, 4, 5
        let f = |r: f64| match d {
            3 => 4.0 * n * n * r - 2.0 * n * r * r + r * r * r / 3.0,
            4 => 2.0 * n * n * r * r - 4.0 * n * r * r * r / 3.0 + r.powi(4) / 4.0,
            _ => 4.0 * n * n * r.powi(3) / 3.0 - n * r.powi(4) + r.powi(5) / 5.0,
        };
        (f(2.0 * n) - f(n)) * n.powi(-(d as i32))
    }

    #[test]
    fn rayleigh_ratio_crosses_one_and_outer_energy_is_bounded() {
        let hd = h_d(3).unwrap();
        let n0 = hardy_threshold(hd / 2.0, 3).unwrap();
        let at = |n: usize| hardy_rayleigh(n, 2.0 * n as f64 + 1.0, hd / 2.0, 3).unwrap();
        assert!(at(n0).ratio > 1.0 && at(n0 - 1).ratio <= 1.0);
        assert!(at(4 * n0).ratio > at(n0).ratio);
        // ratio tends to (h_d + eps)/h_d
        assert!(at(1 << 50).ratio < 1.5);
        let outer = |n: usize| {
            let r = at(n);
            r.denominator - hd * sphere_area(3) * (n as f64).ln()
        };
        assert!((outer(10) - outer(10_000)).abs() < 1e-8);
    }

    #[test]
    fn delta_star_examples() {
        assert!(delta_star(3, 2, 1.0 / 16.0).is_err());
        assert!((delta_star(3, 2, 0.125).unwrap() - 0.125).abs() < 1e-15);
        for m in 2..6 {
            let hd = 0.125;
            for i in 1..10 {
                let th = hd / m as f64 * (1.0 + i as f64);
                assert!(delta_star(3, m, th).unwrap() < 0.25);
            }
        }
    }

    #[test]
    fn potential_comparison_example() {
        let ds = delta_star(3, 2, 0.125).unwrap();
        let c = PointCloud::new(3, &[vec![ds / 2.0, 0.0, 0.0], vec![-ds / 2.0, 0.0, 0.0]]).unwrap();
        let mut rng = seeded(5);
        let samples: Vec<Vec<f64>> =
            (0..10_000).map(|_| (0..3).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let v = lb_potential_check(&c, 0.125, 3, &samples).unwrap();
        assert_eq!((v.checked, v.violations), (10_000, 0));
        // far away the ratio tends to θM/(h_d + 2θMδ⋆)
        let far = lb_potential_check(&c, 0.125, 3, &[vec![1e6, 0.0, 0.0]]).unwrap();
        let want = 0.25 / (0.125 + 2.0 * 0.125 * 2.0 * ds);
        assert!((far.min_ratio - want).abs() < 1e-9);
        let bad = PointCloud::new(3, &[vec![ds * 1.01, 0.0, 0.0], vec![0.0; 3]]).unwrap();
        assert!(matches!(lb_potential_check(&bad, 0.125, 3, &samples), Err(Error::Precondition(_))));
    }

    #[test]
    fn multipolar_bound_examples() {
        let c = PointCloud::new(3, &[vec![0.0; 3], vec![2.0, 0.0, 0.0]]).unwrap();
        let b = multipolar_bound(&c, 0.125).unwrap();
        assert!((b - (PI * PI + 0.375)).abs() < 1e-12);
        assert!((multipolar_bound(&c.scaled(2.0), 0.125).unwrap() - b / 4.0).abs() < 1e-12);
        assert!(multipolar_bound(&c, 0.06).is_err());
        assert!(multipolar_bound(&c, 0.2).is_err());
    }

    #[test]
    fn f_eta_examples() {
        assert!((f_eta_sup(1, 100).unwrap() - 1.0).abs() < 1e-12);
        let s2 = f_eta_sup(2, 400).unwrap();
        assert!(s2 <= 2.0 + 1e-9 && s2 > 1.9, "{s2}");
        let s4 = f_eta_sup(4, 30).unwrap();
        assert!(s4 <= 4.0 + 1e-9 && s4 > 3.0, "{s4}");
    }

    #[test]
    fn f_eta_brute_force_agrees_on_small_grid() {
        let per = 12;
        let ang = |j: usize| (j + 1) as f64 * PI / 2.0 / (per + 1) as f64;
        let mut best: f64 = 0.0;
        for i in 0..per {
            for j in 0..per {
                for k in 0..per {
                    let e = [ang(i), ang(j), ang(k)];
                    let p: f64 = e.iter().map(|x| x.sin().powi(2)).product();
                    let s: f64 = (0..3)
                        .map(|a| e[a].cos() * (0..3).filter(|&b| b != a).map(|b| e[b].sin()).product::<f64>())
                        .sum();
                    best = best.max(s * s / (1.0 - p));
                }
            }
        }
        let fast = f_eta_sup(3, per).unwrap();
        assert!((best - fast).abs() < 1e-9 * best);
    }

    #[test]
    fn partition_examples() {
        let c = PointCloud::new(3, &[vec![0.0; 3], vec![1.0, 0.0, 0.0]]).unwrap();
        let far = partition_of_unity_check(&c, 0.4, &[vec![5.0, 5.0, 5.0]], 1e-5).unwrap();
        assert_eq!(far.max_gradient_ratio, 0.0);
        assert_eq!(cutoff_j(0.0), 0.0);
        let mut rng = seeded(11);
        for pts in [vec![vec![0.0; 3], vec![0.7, 0.0, 0.0]], vec![vec![0.0; 3], vec![0.6, 0.2, 0.0], vec![0.1, 0.6, 0.3]]] {
            let c = PointCloud::new(3, &pts).unwrap();
            let samples: Vec<Vec<f64>> =
                (0..10_000).map(|_| (0..3).map(|_| rng.random_range(-0.6..1.2)).collect()).collect();
            let v = partition_of_unity_check(&c, 0.5, &samples, 1e-5).unwrap();
            assert_eq!(v.violations, 0, "{v:?}");
            assert!(v.max_identity_error < 1e-12);
            assert!(v.max_gradient_ratio > 0.3);
        }
    }

    #[test]
    fn key_constants_positive_and_settle_under_refinement() {
        let base = key_lower_bound_constants(3, 2, 0.125, f64::INFINITY).unwrap();
        let k = base.k_growth;
        let at = |cells: f64| key_lower_bound_constants(3, 2, 0.125, k / cells).unwrap();
        let (c128, c256, c512) = (at(128.0), at(256.0), at(512.0));
        assert!(c128.c2 > 0.0 && c128.c1 > 0.0);
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
        // 128 geometric cells over ten decades is still coarse for c1
        assert!((rel(c128.c1, c256.c1) - 0.086).abs() < 0.01, "{}", rel(c128.c1, c256.c1));
        assert!(rel(c128.c2, c256.c2) < 0.05);
        assert!(rel(c256.c1, c512.c1) < 0.05 && rel(c256.c2, c512.c2) < 0.05);
    }
}
