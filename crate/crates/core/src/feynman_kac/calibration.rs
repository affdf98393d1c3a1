//! Numerical surrogates for the nonconstructive constants of the path
//! expansion. c_* is fixed at 1/(4d); K_* is the smallest constant, at least
//! one, for which the Brownian tail and exit-time bounds hold with 3σ slack on
//! Monte-Carlo sweeps over two decades; K_1 likewise from stopped
//! Feynman-Kac functionals on small components.

use serde::{Deserialize, Serialize};

use super::{gaussian_step, simulate_stopped_fk, PathConfig, StoppedOptions};
use crate::bounds_oracles::h_d;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::num::{norm, proportion, MeanAcc};
use crate::point_process::PointCloud;
use crate::rng::{derive, stream};
use crate::spectral::{lambda_max, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// R/√t for the tail, a√u for the exit transform, the configuration index for K_1
    pub x: f64,
    pub value: f64,
    pub stderr: f64,
    /// the bound's shape at x (e^{-c_* x²}, e^{-c_* x}, or the K_1 denominator)
    pub envelope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub d: usize,
    pub c_star: f64,
    pub k_star: f64,
    pub k1: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub tail_sweep: Vec<SweepPoint>,
    pub exit_sweep: Vec<SweepPoint>,
    pub k1_sweep: Vec<SweepPoint>,
}

impl Calibration {
    /// K := 2 K_*² K_1.
    pub fn k(&self) -> f64 {
        2.0 * self.k_star * self.k_star * self.k1
    }

    /// c := c_*/16.
    pub fn c(&self) -> f64 {
        self.c_star / 16.0
    }
}

fn log_sweep(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

/// sup_{s ≤ 1} |W_s| per path, monitored on `steps` steps.
fn unit_time_sups(d: usize, n_paths: usize, steps: usize, seed: u64) -> Vec<f64> {
    let dt = 1.0 / steps as f64;
    let mut x = vec![0.0; d];
    (0..n_paths)
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            x.iter_mut().for_each(|v| *v = 0.0);
            let mut sup: f64 = 0.0;
            for _ in 0..steps {
                gaussian_step(&mut x, dt, &mut rng);
                sup = sup.max(norm(&x));
            }
            sup
        })
        .collect()
}

/// Exit times of the unit ball from the origin, with steps shrinking next to
/// the sphere so that overshoot stays small.
fn unit_ball_exit_times(d: usize, n_paths: usize, seed: u64) -> Vec<f64> {
    let mut x = vec![0.0; d];
    (0..n_paths)
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            x.iter_mut().for_each(|v| *v = 0.0);
            let mut t = 0.0;
            loop {
                let m = (1.0 - norm(&x)) / 4.0;
                let s = (m * m).clamp(1e-8, 1e-3);
                gaussian_step(&mut x, s, &mut rng);
                t += s;
                if norm(&x) >= 1.0 {
                    return t;
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct TailCheck {
    pub empirical: f64,
    pub stderr: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Empirical P(sup_{s ≤ t} |W_s| > R) (1000 monitoring steps) against K_* e^{-c_* R²/t}.
pub fn brownian_tail_check(t: f64, big_r: f64, d: usize, n_paths: usize, seed: u64, k_star: f64, c_star: f64) -> Result<TailCheck> {
    if !(t > 0.0 && big_r >= 0.0) || d == 0 || n_paths == 0 {
        return Err(Error::InvalidInput(format!("tail check needs t > 0, R >= 0, d >= 1, got t={t}, R={big_r}, d={d}")));
    }
    let x = big_r / t.sqrt();
    let sups = unit_time_sups(d, n_paths, 1000, seed);
    let hits = sups.iter().filter(|&&s| s > x).count() as u64;
    let (p, se) = proportion(hits, n_paths as u64);
    let bound = k_star * (-c_star * x * x).exp();
    Ok(TailCheck { empirical: p, stderr: se, bound, holds: p <= bound + 3.0 * se })
}

/// Sweep configurations for K_1: (points, start offset from the first point in units of a).
fn k1_configs(d: usize) -> Vec<(Vec<Vec<f64>>, f64)> {
    let mut e1 = vec![0.0; d];
    e1[0] = 1.0;
    let single = vec![vec![0.0; d]];
    let pair = vec![vec![0.0; d], e1.clone()];
    vec![(single.clone(), 2.5), (single, 4.0), (pair.clone(), 2.5), (pair, 4.0)]
}

/// Calibrates (K_*, c_*, K_1) in dimension d. `n_paths` sets the Brownian
/// sweeps; the K_1 sweep uses n_paths / 10 paths per start.
pub fn calibrate(d: usize, n_paths: usize, seed: u64) -> Result<Calibration> {
    let hd = h_d(d)?;
    if n_paths < 100 {
        return Err(Error::InvalidConfig("calibration needs at least 100 paths".into()));
    }
    let c_star = 1.0 / (4.0 * d as f64);
    let mut k_star: f64 = 1.0;

    let sups = unit_time_sups(d, n_paths, 1000, derive(seed, 1));
    let mut tail_sweep = Vec::new();
    for x in log_sweep(0.1, 10.0, 13) {
        let hits = sups.iter().filter(|&&s| s > x).count() as u64;
        let (p, se) = proportion(hits, n_paths as u64);
        let env = (-c_star * x * x).exp();
        k_star = k_star.max((p + 3.0 * se) / env);
        tail_sweep.push(SweepPoint { x, value: p, stderr: se, envelope: env });
    }

    let taus = unit_ball_exit_times(d, n_paths, derive(seed, 2));
    let mut exit_sweep = Vec::new();
    for x in log_sweep(0.1, 10.0, 13) {
        // a = 1, u = x²
        let mut acc = MeanAcc::new();
        for &tau in &taus {
            acc.push((-x * x * tau).exp());
        }
        let env = (-c_star * x).exp();
        k_star = k_star.max((acc.mean() + 3.0 * acc.stderr()) / env);
        exit_sweep.push(SweepPoint { x, value: acc.mean(), stderr: acc.stderr(), envelope: env });
    }

    // K_1: stopped functionals on components of B_r(Y) from x ∉ B_{2a}(Y)
    let (r, a) = (1.0, 0.2);
    let theta = hd;
    let cap = 100.0 / (a * a);
    let kernel = KernelSpec::truncated(d, a)?;
    let mut k1: f64 = 1.0;
    let mut k1_sweep = Vec::new();
    for (ci, (pts, off)) in k1_configs(d).into_iter().enumerate() {
        let cloud = PointCloud::new(d, &pts)?;
        let dom = Domain::Union { centers: pts.clone(), radius: r };
        let lam = lambda_max(&dom, &cloud, &kernel, theta, r / 12.0, cap, 1e-6)?.lambda;
        let mut x = pts[0].clone();
        x[d - 1] += off * a;
        let n_c = pts.len() as f64;
        for (gi, shift) in [0.5, 4.0].into_iter().enumerate() {
            // the envelope assumes γ >= 0 as well as γ > λ
            let gamma = lam.max(0.0) + shift / (r * r);
            let cfg = PathConfig {
                dt: 1e-3,
                near_pole_radius: 2.0 * a,
                substep_factor: 8,
                cap,
                n_paths: (n_paths / 10).max(50),
                seed: derive(seed, 100 + 10 * ci as u64 + gi as u64),
            };
            let opts = StoppedOptions { boundary_dt: 1e-6, ..StoppedOptions::new(lam) };
            let e = simulate_stopped_fk(&cloud, &kernel, theta, gamma, &dom, &x, &cfg, &opts)?;
            let env = n_c.powf(2.5)
                * (r / a).powf(d as f64 / 2.0)
                * (1.0 + (gamma + (1.0 + theta) / (r * r)) / (gamma - lam));
            k1 = k1.max((e.mean + 3.0 * e.stderr) / env);
            k1_sweep.push(SweepPoint { x: ci as f64, value: e.mean, stderr: e.stderr, envelope: env });
        }
    }
    Ok(Calibration { d, c_star, k_star, k1, n_paths, seed, tail_sweep, exit_sweep, k1_sweep })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::erf::erfc;

    #[test]
    fn zero_radius_forces_k_star_at_least_one() {
        let c = brownian_tail_check(1.0, 0.0, 3, 200, 1, 1.0, 1.0 / 12.0).unwrap();
        assert_eq!(c.empirical, 1.0);
        assert!(c.holds);
        let low = brownian_tail_check(1.0, 0.0, 3, 200, 1, 0.5, 1.0 / 12.0).unwrap();
        assert!(!low.holds);
    }

    #[test]
    fn one_dimensional_reflection_envelope() {
        // P(sup |W| > R) <= 2 P(|W_t| > R) = 2 erfc(R / sqrt(2t)); discrete monitoring only lowers the MC value
        for x in [0.5, 1.0, 2.0] {
            let c = brownian_tail_check(1.0, x, 1, 4000, 5, 1.0, 0.0).unwrap();
            let env = 2.0 * erfc(x / 2f64.sqrt());
            assert!(c.empirical <= env + 3.0 * c.stderr, "{x}: {} vs {env}", c.empirical);
            // and the one-sided reflection value P(sup W > R) = erfc(R/√2) is a lower bound
            assert!(c.empirical + 3.0 * c.stderr >= erfc(x / 2f64.sqrt()));
        }
    }

    #[test]
    fn exit_transform_matches_closed_form() {
        // d = 3: E_0 e^{-u τ} = k / sinh k with k = √(2u) for the unit ball
        let taus = unit_ball_exit_times(3, 3000, 9);
        for u in [0.5, 4.0, 25.0] {
            let mut acc = MeanAcc::new();
            for &t in &taus {
                acc.push((-u * t).exp());
            }
            let k = (2.0f64 * u).sqrt();
            let want = k / k.sinh();
            assert!((acc.mean() - want).abs() < 3.5 * acc.stderr() + 2e-3, "{u}: {} vs {want}", acc.mean());
        }
    }
}
