//! Constants and Monte-Carlo checks of the path-expansion bound: L and ϱ from
//! per-component eigenvalues, the discounted functional from starts outside
//! B_r(Y), the weighted distribution of the excursion counter and the
//! exit-from-B_R tail.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::excursions::ExcursionTracker;
use super::{gaussian_step, Calibration, PathConfig, PathPotential};
use crate::cloud_geometry::components;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::num::{dist2, MeanAcc};
use crate::point_process::PointCloud;
use crate::rng::{derive, stream};
use crate::spectral::{lambda_max, Domain};

/// λ_C = λ_max(C, θ min(V^(a), m)) for every component C of B_r(Y), on a grid of step h.
pub fn component_lambda(cloud: &PointCloud, theta: f64, a: f64, r: f64, h: f64, cap: f64, tol: f64) -> Result<Vec<f64>> {
    let kernel = KernelSpec::truncated(cloud.dim(), a)?;
    let dec = components(cloud, r);
    dec.components
        .iter()
        .map(|c| {
            let sub = cloud.subset(&c.members);
            let dom = Domain::Union { centers: sub.to_vecs(), radius: r };
            Ok(lambda_max(&dom, &sub, &kernel, theta, h, cap, tol)?.lambda)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpansionConstants {
    pub n_r: usize,
    /// Λ = max_C λ_C
    pub lambda: f64,
    pub gamma: f64,
    pub k: f64,
    pub l: f64,
    pub rho: f64,
}

/// L = K N^{5/2} (r/a)^{d/2} (1 + (γ + (1+θ) r^{-2}) / (γ - Λ)) and ϱ = L e^{-a c_* √γ}.
pub fn path_expansion_constants(
    cloud: &PointCloud,
    theta: f64,
    a: f64,
    r: f64,
    gamma: f64,
    cal: &Calibration,
    lambda: f64,
) -> Result<ExpansionConstants> {
    if !(a > 0.0 && r > 4.0 * a) {
        return Err(Error::InvalidInput(format!("need r > 4a > 0, got a={a}, r={r}")));
    }
    // the prefactor of ϱ is only positive for γ > max(Λ, 0)
    if !(gamma > lambda.max(0.0)) {
        return Err(Error::IllPosed(format!("gamma {gamma} <= max(Lambda, 0) with Lambda = {lambda}")));
    }
    let d = cloud.dim() as f64;
    let n_r = components(cloud, r).n_r;
    let k = cal.k();
    let l = k
        * (n_r as f64).powf(2.5)
        * (r / a).powf(d / 2.0)
        * (1.0 + (gamma + (1.0 + theta) / (r * r)) / (gamma - lambda));
    let rho = l * (-a * cal.c_star * gamma.sqrt()).exp();
    Ok(ExpansionConstants { n_r, lambda, gamma, k, l, rho })
}

/// Smallest γ (to relative precision 1e-9) with ϱ(γ) <= target, assuming ϱ
/// is decreasing beyond the first γ where it drops below the target.
pub fn gamma_for_rho(cloud: &PointCloud, theta: f64, a: f64, r: f64, cal: &Calibration, lambda: f64, target: f64) -> Result<f64> {
    let rho = |g: f64| path_expansion_constants(cloud, theta, a, r, g, cal, lambda).map(|c| c.rho);
    let floor = lambda.max(0.0);
    let mut lo = floor + 1e-9 * lambda.abs().max(1.0);
    let mut hi = floor + lambda.abs().max(1.0);
    while rho(hi)? > target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::NoConvergence { iterations: 0, residual: target });
        }
    }
    while hi - lo > 1e-9 * hi {
        let mid = 0.5 * (lo + hi);
        if rho(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Points at distance exactly r from the cloud (on ∂B_r(Y)).
pub fn boundary_starts(cloud: &PointCloud, r: f64, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if cloud.is_empty() {
        return Err(Error::InvalidInput("boundary starts need a non-empty cloud".into()));
    }
    let d = cloud.dim();
    let mut rng = stream(derive(seed, 0x57a7), 0);
    let mut out = Vec::with_capacity(count);
    let mut tries = 0;
    while out.len() < count {
        tries += 1;
        if tries > 1000 * count {
            return Err(Error::InvalidInput("B_r(Y) has too little exposed boundary".into()));
        }
        let y = cloud.point(rng.random_range(0..cloud.len()));
        let mut u: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = crate::num::norm(&u);
        u.iter_mut().for_each(|v| *v *= r / n);
        let z: Vec<f64> = y.iter().zip(&u).map(|(a, b)| a + b).collect();
        if cloud.points().all(|p| dist2(p, &z) >= r * r * (1.0 - 1e-12)) {
            out.push(z);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct SupCheck {
    /// per start: (sup over the time grid of the estimated mean, its stderr)
    pub per_start: Vec<(f64, f64)>,
    pub sup: f64,
    pub stderr: f64,
    pub bound: f64,
    pub holds: bool,
}

/// For each start, the running estimate of E_z[exp ∫_0^t (θ min(V, m) - γ)]
/// on the base time grid up to `horizon`, its supremum over t, and the
/// largest over starts against 1/(1 - ϱ) + 3 stderr.
pub fn upperbound0_check(
    cloud: &PointCloud,
    kernel: &KernelSpec,
    theta: f64,
    gamma: f64,
    starts: &[Vec<f64>],
    horizon: f64,
    cfg: &PathConfig,
    rho: f64,
) -> Result<SupCheck> {
    if !(rho < 1.0) {
        return Err(Error::BoundVacuous(format!("rho = {rho} >= 1")));
    }
    let steps = cfg.base_steps(horizon)?;
    let pot = PathPotential::new(cloud, kernel, theta, cfg)?;
    let mut per_start = Vec::with_capacity(starts.len());
    for (si, z) in starts.iter().enumerate() {
        let seed = derive(cfg.seed, si as u64);
        let mut accs = vec![MeanAcc::new(); steps + 1];
        let mut pos = z.clone();
        for i in 0..cfg.n_paths {
            let mut rng = stream(seed, i as u64);
            pos.copy_from_slice(z);
            let (mut q0, _) = pot.eval(&pos);
            let mut integral = 0.0;
            accs[0].push(1.0);
            for acc in accs.iter_mut().skip(1) {
                let sub = if pot.near_pole(&pos) { cfg.substep_factor } else { 1 };
                let s = cfg.dt / sub as f64;
                for _ in 0..sub {
                    gaussian_step(&mut pos, s, &mut rng);
                    let (q1, _) = pot.eval(&pos);
                    integral += (0.5 * (q0 + q1) - gamma) * s;
                    q0 = q1;
                }
                acc.push(integral.exp());
            }
        }
        let best = accs
            .iter()
            .map(|a| (a.mean(), a.stderr()))
            .fold((f64::NEG_INFINITY, 0.0), |b, x| if x.0 > b.0 { x } else { b });
        per_start.push(best);
    }
    let (sup, stderr) = per_start.iter().copied().fold((f64::NEG_INFINITY, 0.0), |b, x| if x.0 > b.0 { x } else { b });
    let bound = 1.0 / (1.0 - rho);
    Ok(SupCheck { per_start, sup, stderr, bound, holds: sup <= bound + 3.0 * stderr })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExcursionHistogram {
    /// paths with E_t = n
    pub counts: Vec<u64>,
    /// E[I_0^t 1{E_t = n}] with I the discounted weight
    pub weighted: Vec<f64>,
    pub weighted_stderr: Vec<f64>,
    pub paths: u64,
}

impl ExcursionHistogram {
    /// Ratios weighted[n+1]/weighted[n] for n >= from where weighted[n] > 0.
    pub fn ratios(&self, from: usize) -> Vec<(usize, f64)> {
        (from..self.weighted.len().saturating_sub(1))
            .filter(|&n| self.weighted[n] > 0.0)
            .map(|n| (n, self.weighted[n + 1] / self.weighted[n]))
            .collect()
    }
}

/// Distribution of E_t over paths started at `starts` (cfg.n_paths each),
/// plain and weighted by exp ∫_0^t (θ min(V, m) - γ). `kernel` is the V^(a)
/// entering the weight; entrances use 3a and exits r.
pub fn excursion_histogram(
    cloud: &PointCloud,
    kernel: &KernelSpec,
    theta: f64,
    gamma: f64,
    a: f64,
    r: f64,
    t: f64,
    starts: &[Vec<f64>],
    cfg: &PathConfig,
) -> Result<ExcursionHistogram> {
    let steps = cfg.base_steps(t)?;
    let pot = PathPotential::new(cloud, kernel, theta, cfg)?;
    let mut per_path: Vec<(usize, f64)> = Vec::with_capacity(starts.len() * cfg.n_paths);
    for (si, z) in starts.iter().enumerate() {
        let seed = derive(cfg.seed, si as u64);
        let mut pos = z.clone();
        for i in 0..cfg.n_paths {
            let mut rng = stream(seed, i as u64);
            pos.copy_from_slice(z);
            let mut tr = ExcursionTracker::new(pot.cloud(), a, r)?;
            tr.push(0.0, &pos);
            let (mut q0, _) = pot.eval(&pos);
            let mut integral = 0.0;
            let mut now = 0.0;
            for _ in 0..steps {
                let sub = if pot.near_pole(&pos) { cfg.substep_factor } else { 1 };
                let s = cfg.dt / sub as f64;
                for _ in 0..sub {
                    gaussian_step(&mut pos, s, &mut rng);
                    now += s;
                    tr.push(now, &pos);
                    let (q1, _) = pot.eval(&pos);
                    integral += (0.5 * (q0 + q1) - gamma) * s;
                    q0 = q1;
                }
            }
            per_path.push((tr.record.e_t, integral.exp()));
        }
    }
    let top = per_path.iter().map(|p| p.0).max().unwrap_or(0);
    let total = per_path.len() as u64;
    let mut counts = vec![0u64; top + 2];
    let mut accs = vec![MeanAcc::new(); top + 2];
    for &(e, w) in &per_path {
        counts[e] += 1;
        for (n, acc) in accs.iter_mut().enumerate() {
            acc.push(if n == e { w } else { 0.0 });
        }
    }
    Ok(ExcursionHistogram {
        counts,
        weighted: accs.iter().map(|a| a.mean()).collect(),
        weighted_stderr: accs.iter().map(|a| a.stderr()).collect(),
        paths: total,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TailRow {
    pub big_r: f64,
    pub value: f64,
    pub stderr: f64,
    pub bound: f64,
    pub holds: bool,
}

/// E_z[1{τ_{B_R(z)^c} <= t} exp ∫_0^t (θ min(V, m) - γ)] against
/// 2KL{(R/r) e^{-cR²/t} + ϱ^{R/(4 r N)}} for each R.
pub fn upperbound_tail_check(
    cloud: &PointCloud,
    kernel: &KernelSpec,
    theta: f64,
    consts: &ExpansionConstants,
    cal: &Calibration,
    r: f64,
    z: &[f64],
    t: f64,
    radii: &[f64],
    cfg: &PathConfig,
) -> Result<Vec<TailRow>> {
    let steps = cfg.base_steps(t)?;
    let pot = PathPotential::new(cloud, kernel, theta, cfg)?;
    let mut accs = vec![MeanAcc::new(); radii.len()];
    let mut pos = z.to_vec();
    for i in 0..cfg.n_paths {
        let mut rng = stream(cfg.seed, i as u64);
        pos.copy_from_slice(z);
        let (mut q0, _) = pot.eval(&pos);
        let mut integral = 0.0;
        let mut sup2: f64 = 0.0;
        for _ in 0..steps {
            let sub = if pot.near_pole(&pos) { cfg.substep_factor } else { 1 };
            let s = cfg.dt / sub as f64;
            for _ in 0..sub {
                gaussian_step(&mut pos, s, &mut rng);
                sup2 = sup2.max(dist2(&pos, z));
                let (q1, _) = pot.eval(&pos);
                integral += (0.5 * (q0 + q1) - consts.gamma) * s;
                q0 = q1;
            }
        }
        let w = integral.exp();
        for (acc, &big_r) in accs.iter_mut().zip(radii) {
            acc.push(if sup2 >= big_r * big_r { w } else { 0.0 });
        }
    }
    let n = consts.n_r as f64;
    Ok(radii
        .iter()
        .zip(&accs)
        .map(|(&big_r, acc)| {
            let bound = 2.0
                * consts.k
                * consts.l
                * ((big_r / r) * (-cal.c() * big_r * big_r / t).exp() + consts.rho.powf(big_r / (4.0 * r * n)));
            TailRow { big_r, value: acc.mean(), stderr: acc.stderr(), bound, holds: acc.mean() <= bound + 3.0 * acc.stderr() }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cal() -> Calibration {
        Calibration {
            d: 3,
            c_star: 1.0 / 12.0,
            k_star: 1.5,
            k1: 1.0,
            n_paths: 0,
            seed: 0,
            tail_sweep: vec![],
            exit_sweep: vec![],
            k1_sweep: vec![],
        }
    }

    #[test]
    fn rho_vanishes_for_large_gamma() {
        let c = PointCloud::new(3, &[vec![0.0; 3], vec![0.5, 0.0, 0.0]]).unwrap();
        let k = path_expansion_constants(&c, 0.0625, 0.05, 0.3, 10.0, &cal(), 1.0).unwrap();
        assert_eq!(k.n_r, 2);
        assert!((k.k - 4.5).abs() < 1e-12);
        let big = path_expansion_constants(&c, 0.0625, 0.05, 0.3, 1e12, &cal(), 1.0).unwrap();
        assert!(big.rho < 1e-100 && big.rho < k.rho, "{}", big.rho);
        assert!(matches!(path_expansion_constants(&c, 0.0625, 0.05, 0.3, 0.5, &cal(), 1.0), Err(Error::IllPosed(_))));
        let g = gamma_for_rho(&c, 0.0625, 0.05, 0.3, &cal(), 1.0, 0.5).unwrap();
        let at = path_expansion_constants(&c, 0.0625, 0.05, 0.3, g, &cal(), 1.0).unwrap();
        assert!(at.rho <= 0.5 && at.rho > 0.4999);
    }

    #[test]
    fn boundary_starts_sit_on_the_sphere_union() {
        let c = PointCloud::new(3, &[vec![0.0; 3], vec![0.5, 0.0, 0.0]]).unwrap();
        let s = boundary_starts(&c, 0.3, 20, 4).unwrap();
        for z in &s {
            let dmin = c.nearest_distance(z);
            assert!((dmin - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_histogram_is_consistent() {
        let c = PointCloud::new(3, &[vec![0.0; 3]]).unwrap();
        let k = KernelSpec::truncated(3, 0.05).unwrap();
        let cfg = PathConfig { dt: 0.002, near_pole_radius: 0.1, substep_factor: 4, cap: 400.0, n_paths: 200, seed: 2 };
        let starts = boundary_starts(&c, 0.25, 2, 1).unwrap();
        let h = excursion_histogram(&c, &k, 0.0625, 0.0, 0.05, 0.25, 0.2, &starts, &cfg).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>(), 400);
        assert!(h.counts[0] > 0 && h.counts.len() >= 2);
        // γ = 0 and V ≥ 0: every weight is at least 1
        let mass: f64 = h.weighted.iter().sum();
        assert!(mass >= 1.0);
    }
}
