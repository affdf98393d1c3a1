//! Monte-Carlo Feynman-Kac functionals of Brownian motion in a capped
//! potential, the grid-PDE values they are checked against, and the
//! excursion bookkeeping behind the path-expansion bound.
//!
//! Paths are Euler-discretised Brownian motions (exact Gaussian increments);
//! the time integral of θ min(V, m) is a trapezoid sum along the path. Steps
//! are divided by `substep_factor` within `near_pole_radius` of a pole.

pub mod calibration;
pub mod excursions;
pub mod expansion;
pub mod pde;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bounds_oracles::h_d;
use crate::error::{Error, Result};
use crate::kernels::{CappedPotential, KernelSpec, KernelVariant, POLE_TOL};
use crate::num::MeanAcc;
use crate::point_process::{PointCloud, Region};
use crate::rng::{derive, stream, Rng};
use crate::spectral::Domain;

pub use calibration::{brownian_tail_check, calibrate, Calibration, TailCheck};
pub use excursions::{excursion_decompose, DiscretePath, ExcursionRecord, ExcursionTracker};
pub use expansion::{
    boundary_starts, component_lambda, excursion_histogram, gamma_for_rho, path_expansion_constants,
    upperbound0_check, upperbound_tail_check, ExcursionHistogram, ExpansionConstants, SupCheck, TailRow,
};
pub use pde::{
    mild_residual_converged, mild_solution_residual, richardson3, HeatKernel, semigroup_value, stopped_grid_solution,
    stopped_grid_value, Extrapolation, MildResidual,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub dt: f64,
    pub near_pole_radius: f64,
    pub substep_factor: usize,
    pub cap: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt {} must be positive", self.dt)));
        }
        if self.substep_factor == 0 {
            return Err(Error::InvalidConfig("substep_factor must be at least 1".into()));
        }
        if !(self.cap > 0.0) {
            return Err(Error::InvalidConfig(format!("cap {} must be positive", self.cap)));
        }
        if !(self.near_pole_radius >= 0.0) {
            return Err(Error::InvalidConfig("near_pole_radius must be non-negative".into()));
        }
        if self.n_paths == 0 {
            return Err(Error::InvalidConfig("n_paths must be positive".into()));
        }
        Ok(())
    }

    /// Number of base steps covering [0, t]; dt must divide t.
    pub fn base_steps(&self, t: f64) -> Result<usize> {
        self.validate()?;
        let n = (t / self.dt).round();
        if !(t > 0.0) || n < 1.0 || (n * self.dt - t).abs() > 1e-9 * t {
            return Err(Error::InvalidConfig(format!("dt {} does not divide t {t}", self.dt)));
        }
        Ok(n as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FKEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// ln(mean), computed without overflow
    pub log_mean: f64,
    /// Kish effective sample size of the path weights
    pub n_effective: u64,
    /// fraction of evaluated path points where the cap was active
    pub clipped_fraction: f64,
    /// clipped_fraction > 0.05: the estimate is dominated by the cap
    pub cap_dominated: bool,
    /// paths that ran out of step budget (stopped functionals only)
    pub censored: u64,
}

impl FKEstimate {
    /// Reduces per-path log-weights (-inf for killed paths) in index order.
    pub fn from_log_weights(logs: &[f64], clipped: u64, evaluated: u64, censored: u64) -> Self {
        let top = logs.iter().copied().filter(|l| l.is_finite()).fold(f64::NEG_INFINITY, f64::max);
        let clipped_fraction = if evaluated > 0 { clipped as f64 / evaluated as f64 } else { 0.0 };
        if top == f64::NEG_INFINITY {
            return FKEstimate {
                mean: 0.0,
                stderr: 0.0,
                log_mean: f64::NEG_INFINITY,
                n_effective: 0,
                clipped_fraction,
                cap_dominated: clipped_fraction > 0.05,
                censored,
            };
        }
        let mut acc = MeanAcc::new();
        let (mut s1, mut s2) = (0.0, 0.0);
        for &l in logs {
            let w = if l.is_finite() { (l - top).exp() } else { 0.0 };
            acc.push(w);
            s1 += w;
            s2 += w * w;
        }
        let scale = top.exp();
        FKEstimate {
            mean: scale * acc.mean(),
            stderr: scale * acc.stderr(),
            log_mean: top + acc.mean().ln(),
            n_effective: if s2 > 0.0 { (s1 * s1 / s2).floor() as u64 } else { 0 },
            clipped_fraction,
            cap_dominated: clipped_fraction > 0.05,
            censored,
        }
    }
}

/// θ min(V, m) along paths, with the near-pole test.
pub(crate) struct PathPotential {
    pot: CappedPotential,
    near2: f64,
}

impl PathPotential {
    pub(crate) fn new(cloud: &PointCloud, kernel: &KernelSpec, theta: f64, cfg: &PathConfig) -> Result<Self> {
        if kernel.dim != cloud.dim() {
            return Err(Error::InvalidInput("kernel and cloud dimensions differ".into()));
        }
        Ok(Self {
            pot: CappedPotential::new(cloud.clone(), *kernel, theta, cfg.cap)?,
            near2: cfg.near_pole_radius * cfg.near_pole_radius,
        })
    }

    pub(crate) fn eval(&self, x: &[f64]) -> (f64, bool) {
        self.pot.eval(x)
    }

    pub(crate) fn near_pole(&self, x: &[f64]) -> bool {
        self.near2 > 0.0 && self.pot.cloud.points().any(|p| crate::num::dist2(p, x) < self.near2)
    }

    pub(crate) fn cloud(&self) -> &PointCloud {
        &self.pot.cloud
    }
}

pub(crate) fn gaussian_step(x: &mut [f64], s: f64, rng: &mut Rng) {
    let sd = s.sqrt();
    for xi in x.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *xi += sd * z;
    }
}

fn check_start(cloud: &PointCloud, x: &[f64]) -> Result<()> {
    if x.len() != cloud.dim() {
        return Err(Error::InvalidInput(format!("start point has dimension {}, cloud {}", x.len(), cloud.dim())));
    }
    if !cloud.is_empty() {
        let dmin = cloud.nearest_distance(x);
        if dmin <= POLE_TOL {
            return Err(Error::OnPole(dmin));
        }
    }
    Ok(())
}

/// E_x[exp θ∫_0^t min(V(W_s), m) ds], optionally times the indicator of never
/// leaving `confinement` (checked at every substep). With `stop_on_exit` a
/// killed path is abandoned at once; otherwise it is run to t so that its
/// random numbers line up with the unconfined estimate.
pub fn simulate_fk(
    cloud: &PointCloud,
    kernel: &KernelSpec,
    theta: f64,
    t: f64,
    x: &[f64],
    cfg: &PathConfig,
    confinement: Option<&Domain>,
    stop_on_exit: bool,
) -> Result<FKEstimate> {
    let steps = cfg.base_steps(t)?;
    check_start(cloud, x)?;
    if matches!(kernel.variant, KernelVariant::Truncated { .. } | KernelVariant::SmoothAttenuated { .. }) {
        let hd = h_d(cloud.dim())?;
        if !(theta >= 0.0 && theta <= 0.5 * hd * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!("theta {theta} outside [0, h_d/2 = {}]", 0.5 * hd)));
        }
    }
    if let Some(dom) = confinement {
        if dom.dim() != x.len() {
            return Err(Error::InvalidInput("confinement dimension differs from the start point".into()));
        }
    }
    let pot = PathPotential::new(cloud, kernel, theta, cfg)?;
    let runs = crate::parallel::map_indexed(cfg.n_paths, |i| {
        let mut rng = stream(cfg.seed, i as u64);
        let mut pos = x.to_vec();
        let (mut q0, c0) = pot.eval(&pos);
        let (mut clipped, mut evaluated) = (c0 as u64, 1u64);
        let mut integral = 0.0;
        let mut alive = confinement.is_none_or(|d| d.contains(&pos));
        'path: for _ in 0..steps {
            let sub = if pot.near_pole(&pos) { cfg.substep_factor } else { 1 };
            let s = cfg.dt / sub as f64;
            for _ in 0..sub {
                gaussian_step(&mut pos, s, &mut rng);
                let (q1, c1) = pot.eval(&pos);
                clipped += c1 as u64;
                evaluated += 1;
                integral += 0.5 * (q0 + q1) * s;
                q0 = q1;
                if alive {
                    if let Some(dom) = confinement {
                        if !dom.contains(&pos) {
                            alive = false;
                            if stop_on_exit {
                                break 'path;
                            }
                        }
                    }
                }
            }
        }
        (if alive { integral } else { f64::NEG_INFINITY }, clipped, evaluated)
    });
    let logs: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let clipped = runs.iter().map(|r| r.1).sum();
    let evaluated = runs.iter().map(|r| r.2).sum();
    Ok(FKEstimate::from_log_weights(&logs, clipped, evaluated, 0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppedOptions {
    /// discretised λ_max(D, θ min(V, m)); γ must exceed it
    pub lambda_estimate: f64,
    /// smallest step used next to ∂D
    pub boundary_dt: f64,
    /// per-path budget of substeps before the path is censored
    pub max_substeps: u64,
}

impl StoppedOptions {
    pub fn new(lambda_estimate: f64) -> Self {
        Self { lambda_estimate, boundary_dt: 1e-6, max_substeps: 1_000_000 }
    }
}

/// Step size at x: dt, divided near poles, shrunk to (margin/4)² next to the
/// boundary but not below `boundary_dt`.
fn stopped_step(pot: &PathPotential, dom: &Domain, x: &[f64], cfg: &PathConfig, opts: &StoppedOptions) -> f64 {
    let mut s = cfg.dt;
    if pot.near_pole(x) {
        s /= cfg.substep_factor as f64;
    }
    let m = dom.inner_margin(x) / 4.0;
    s.min(m * m).max(opts.boundary_dt)
}

/// E_x[exp ∫_0^τ (θ min(V, m) - γ) ds] with τ the first substep outside D and
/// boundary data 1.
pub fn simulate_stopped_fk(
    cloud: &PointCloud,
    kernel: &KernelSpec,
    theta: f64,
    gamma: f64,
    domain: &Domain,
    x: &[f64],
    cfg: &PathConfig,
    opts: &StoppedOptions,
) -> Result<FKEstimate> {
    cfg.validate()?;
    check_start(cloud, x)?;
    if !(gamma > opts.lambda_estimate) {
        return Err(Error::IllPosed(format!("gamma {gamma} <= lambda estimate {}", opts.lambda_estimate)));
    }
    if !domain.contains(x) {
        return Err(Error::InvalidInput("start point outside the domain".into()));
    }
    if !(opts.boundary_dt > 0.0) {
        return Err(Error::InvalidConfig("boundary_dt must be positive".into()));
    }
    let pot = PathPotential::new(cloud, kernel, theta, cfg)?;
    let runs = crate::parallel::map_indexed(cfg.n_paths, |i| {
        let mut rng = stream(cfg.seed, i as u64);
        let mut pos = x.to_vec();
        let (mut q0, c0) = pot.eval(&pos);
        let (mut clipped, mut evaluated, mut censored) = (c0 as u64, 1u64, 0u64);
        let mut integral = 0.0;
        let mut n = 0u64;
        loop {
            if n == opts.max_substeps {
                censored = 1;
                break;
            }
            let s = stopped_step(&pot, domain, &pos, cfg, opts);
            gaussian_step(&mut pos, s, &mut rng);
            n += 1;
            let (q1, c1) = pot.eval(&pos);
            clipped += c1 as u64;
            evaluated += 1;
            integral += (0.5 * (q0 + q1) - gamma) * s;
            q0 = q1;
            if !domain.contains(&pos) {
                break;
            }
        }
        (integral, clipped, evaluated, censored)
    });
    let logs: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let clipped = runs.iter().map(|r| r.1).sum();
    let evaluated = runs.iter().map(|r| r.2).sum();
    let censored = runs.iter().map(|r| r.3).sum();
    Ok(FKEstimate::from_log_weights(&logs, clipped, evaluated, censored))
}

/// Explicit constant of the L¹ bound for the quintic smoothstep cut-off g on
/// [1/2, 1]: (‖g''‖ + 2(d-1)‖g'‖ + ‖g'‖²)/2 bounds |Δφ| δ²/(2M²), and the
/// potential term adds 4θM ≤ 4 h_d M².
pub fn l1_constant(d: usize) -> Result<f64> {
    let g1 = 2.0 * 15.0 / 8.0;
    let g2 = 4.0 * 10.0 / 3f64.sqrt();
    Ok(0.5 * (g2 + 2.0 * (d as f64 - 1.0) * g1 + g1 * g1) + 4.0 * h_d(d)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct L1Check {
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    pub constant: f64,
    pub starts: usize,
    pub holds: bool,
}

/// ∫_{D'} E_x[exp ∫_0^τ (θ min(V, m) - γ)] dx on a stratified grid of start
/// points (one uniform point per cell, `per_axis` cells per axis), against
/// |D'| + c √(|D| |D' ∩ D|) (γ + (M² + θ) δ^{-2}) / (γ - λ).
pub fn l1_bound_check(
    cloud: &PointCloud,
    kernel: &KernelSpec,
    theta: f64,
    gamma: f64,
    domain: &Region,
    d_prime: &Region,
    cfg: &PathConfig,
    opts: &StoppedOptions,
    per_axis: usize,
) -> Result<L1Check> {
    let d = cloud.dim();
    if !(gamma > opts.lambda_estimate) {
        return Err(Error::IllPosed(format!("gamma {gamma} <= lambda estimate {}", opts.lambda_estimate)));
    }
    if cloud.is_empty() {
        return Err(Error::InvalidInput("L1 bound needs a non-empty cloud".into()));
    }
    let dom = Domain::Region(domain.clone());
    let delta = cloud.points().map(|p| dom.inner_margin(p)).fold(f64::INFINITY, f64::min);
    if !(delta > 0.0) {
        return Err(Error::InvalidInput("cloud must lie inside D".into()));
    }
    let (lo, hi) = d_prime.bounding_box();
    let cells = per_axis.max(1).pow(d as u32);
    let cell_side: Vec<f64> = (0..d).map(|k| (hi[k] - lo[k]) / per_axis as f64).collect();
    let mut rng = stream(derive(cfg.seed, 0x11), 0);
    let (mut sum, mut var, mut used) = (0.0, 0.0, 0usize);
    let mut inside_hits = 0usize;
    for c in 0..cells {
        let mut rem = c;
        let x: Vec<f64> = (0..d)
            .map(|k| {
                let j = rem % per_axis;
                rem /= per_axis;
                lo[k] + (j as f64 + rand::Rng::random::<f64>(&mut rng)) * cell_side[k]
            })
            .collect();
        if !d_prime.contains(&x) {
            continue;
        }
        used += 1;
        if !dom.contains(&x) {
            sum += 1.0;
            continue;
        }
        inside_hits += 1;
        if cloud.nearest_distance(&x) <= POLE_TOL {
            continue;
        }
        let sub = PathConfig { seed: derive(cfg.seed, c as u64), ..cfg.clone() };
        let e = simulate_stopped_fk(cloud, kernel, theta, gamma, &dom, &x, &sub, opts)?;
        sum += e.mean;
        var += e.stderr * e.stderr;
    }
    if used == 0 {
        return Err(Error::InvalidInput("no stratified start falls in D'".into()));
    }
    let vol_prime = d_prime.volume();
    let lhs = vol_prime * sum / used as f64;
    let lhs_stderr = vol_prime * var.sqrt() / used as f64;
    let overlap = vol_prime * inside_hits as f64 / used as f64;
    let m = cloud.len() as f64;
    let c = l1_constant(d)?;
    let rhs = vol_prime
        + c * (domain.volume() * overlap).sqrt() * (gamma + (m * m + theta) / (delta * delta))
            / (gamma - opts.lambda_estimate);
    Ok(L1Check { lhs, lhs_stderr, rhs, constant: c, starts: used, holds: lhs <= rhs + 3.0 * lhs_stderr })
}
