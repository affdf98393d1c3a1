//! The acceptance battery. Each check returns one line of verdict with the
//! numbers behind it; tolerances come in through [`Tolerances`].

use std::path::Path;
use std::time::Instant;

use rand::Rng as _;
use serde::Serialize;

use super::commands::{constants_report, hardy_verification, path_expansion_run};
use super::config::Params;
use crate::bounds_oracles::{c_inf, c_inf_numeric, h_d, k_theta, ScaleParams};
use crate::error::Result;
use crate::feynman_kac::{
    mild_residual_converged, mild_solution_residual, richardson3, semigroup_value, simulate_fk, simulate_stopped_fk,
    stopped_grid_value, HeatKernel, PathConfig, StoppedOptions,
};
use crate::kernels::KernelSpec;
use crate::point_process::{verify_bound, Lemma, PointCloud, Region};
use crate::rng::{derive, stream};
use crate::spectral::{
    build_operator, f_eta_sup, lambda_max, lambda_max_richardson, monotonicity_check, radial_lambda_max, Domain,
    RadialPotential,
};

/// Criteria that fail for a reason recorded alongside them: the chain bound
/// counts unordered (k+1)-subsets where the event needs ordered chains, and
/// is exceeded by Monte Carlo at moderate r.
pub const KNOWN_FAILURES: &[u32] = &[6];

#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    pub c1_coarse_rel: f64,
    pub c1_extrapolated_rel: f64,
    pub c1_seconds: f64,
    pub c2_pairs: usize,
    pub c2_tol: f64,
    pub c3_clouds_per_size: usize,
    pub c3_solver_tol: f64,
    pub c3_seconds: f64,
    pub c4_slack: f64,
    pub c5_critical_increase: f64,
    pub c5_supercritical_increase: f64,
    pub c6_trials: u64,
    pub c6_seconds: f64,
    pub c7_paths: usize,
    pub c7_sigmas: f64,
    pub c7_residual: f64,
    pub c8_configs: usize,
    pub c8_paths: usize,
    pub c8_sigmas: f64,
    pub c9_starts: usize,
    pub c9_rho: f64,
    pub c9_ratio_slack: f64,
    pub c10_pairs: usize,
    pub c10_tol: f64,
}

impl Tolerances {
    pub fn standard() -> Self {
        Self {
            c1_coarse_rel: 0.02,
            c1_extrapolated_rel: 0.005,
            c1_seconds: 60.0,
            c2_pairs: 50,
            c2_tol: 1e-8,
            c3_clouds_per_size: 25,
            c3_solver_tol: 1e-8,
            c3_seconds: 600.0,
            c4_slack: 1e-9,
            c5_critical_increase: 0.05,
            c5_supercritical_increase: 0.5,
            c6_trials: 100_000,
            c6_seconds: 600.0,
            c7_paths: 100_000,
            c7_sigmas: 3.0,
            c7_residual: 5e-3,
            c8_configs: 10,
            c8_paths: 50_000,
            c8_sigmas: 3.0,
            c9_starts: 20,
            c9_rho: 0.5,
            c9_ratio_slack: 0.1,
            c10_pairs: 10,
            c10_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn timed(id: u32, name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> CriterionResult {
    let t0 = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionResult { id, name: name.into(), passed, detail, seconds: t0.elapsed().as_secs_f64() }
}

/// λ_max(B_1, 0) in d = 3 against -π²/2, at h = 1/64 and extrapolated from h/2.
pub fn c1_ground_truth(tol: &Tolerances) -> CriterionResult {
    timed(1, "spectral ground truth", || {
        let t0 = Instant::now();
        let exact = -std::f64::consts::PI.powi(2) / 2.0;
        let empty = PointCloud::empty(3);
        let k = KernelSpec::truncated(3, 1.0)?;
        let r = lambda_max_richardson(&Domain::ball(3, 1.0), &empty, &k, 0.0, 1.0 / 64.0, 1.0, 1e-10, 1.0)?;
        let secs = t0.elapsed().as_secs_f64();
        let (ec, ee) = ((r.coarse / exact - 1.0).abs(), (r.extrapolated / exact - 1.0).abs());
        let ok = ec <= tol.c1_coarse_rel && ee <= tol.c1_extrapolated_rel && secs <= tol.c1_seconds;
        Ok((
            ok,
            format!(
                "h=1/64: {:.6} ({:.3}%), h=1/128: {:.6}, extrapolated {:.6} ({:.3}%), exact {exact:.6}, {secs:.1} s",
                r.coarse,
                100.0 * ec,
                r.fine,
                r.extrapolated,
                100.0 * ee
            ),
        ))
    })
}

/// Random nested pairs: concentric balls, a cloud and a subset of it, and
/// smaller coupling and cap on the inner problem.
pub fn c2_monotonicity(tol: &Tolerances, seed: u64) -> CriterionResult {
    timed(2, "eigenvalue monotonicity", || {
        let mut rng = stream(seed, 2);
        let hd = h_d(3)?;
        let kernel = KernelSpec::truncated(3, 0.5)?;
        let h = 0.1;
        let mut pairs = Vec::with_capacity(tol.c2_pairs);
        for _ in 0..tol.c2_pairs {
            let r2: f64 = rng.random_range(0.8..1.2);
            let r1 = r2 * rng.random_range(0.5..1.0);
            let n = rng.random_range(1..=4usize);
            let ball = Region::ball(3, 0.8);
            let pts: Vec<Vec<f64>> = (0..n).map(|_| ball.sample_uniform(&mut rng)).collect();
            let big = PointCloud::new(3, &pts)?;
            let keep: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
            let small = big.subset(&keep);
            let th2 = rng.random_range(0.0..hd);
            let th1 = th2 * rng.random_range(0.0..1.0);
            let m2 = 10f64.powf(rng.random_range(1.0..3.0));
            let m1 = m2 * rng.random_range(0.1..1.0);
            let a = build_operator(&Domain::ball(3, r1), &small, &kernel, th1, h, m1)?;
            let b = build_operator(&Domain::ball(3, r2), &big, &kernel, th2, h, m2)?;
            pairs.push((a, b));
        }
        let rep = monotonicity_check(&pairs, tol.c2_tol)?;
        let worst = rep.pairs.iter().map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
        Ok((
            rep.violations == 0,
            format!("{} pairs, {} violations, max λ_inner - λ_outer = {worst:.3e}", rep.pairs.len(), rep.violations),
        ))
    })
}

/// Random 2- and 3-point clouds with θ in the admissible window.
pub fn c3_multipolar(tol: &Tolerances, seed: u64) -> CriterionResult {
    timed(3, "multipolar Hardy bound", || {
        let t0 = Instant::now();
        let mut rng = stream(seed, 3);
        let hd = h_d(3)?;
        let ball = Region::ball(3, 1.0);
        let (mut n, mut violations, mut worst) = (0, 0, f64::NEG_INFINITY);
        for m in [2usize, 3] {
            for _ in 0..tol.c3_clouds_per_size {
                let pts: Vec<Vec<f64>> = (0..m).map(|_| ball.sample_uniform(&mut rng)).collect();
                let cloud = PointCloud::new(3, &pts)?;
                let (lo, hi) = (hd / m as f64, hd / (m - 1) as f64);
                // (lo, hi]
                let theta = hi - rng.random_range(0.0..1.0) * (hi - lo);
                let v = hardy_verification(&cloud, theta, 2.0, 20, 1e4, tol.c3_solver_tol)?;
                n += 1;
                violations += !v.pass as usize;
                worst = worst.max(v.lambda_fine.max(v.lambda_coarse) - v.bound);
            }
        }
        let secs = t0.elapsed().as_secs_f64();
        Ok((
            violations == 0 && secs <= tol.c3_seconds,
            format!("{n} clouds, {violations} violations, max λ - bound = {worst:.3e}, {secs:.1} s"),
        ))
    })
}

pub fn c4_f_eta(tol: &Tolerances) -> CriterionResult {
    timed(4, "F(η) <= N", || {
        let mut ok = true;
        let mut parts = Vec::new();
        for n in 1..=5usize {
            let per_axis = if n <= 3 { 200 } else { 40 };
            let s = f_eta_sup(n, per_axis)?;
            ok &= s <= n as f64 + tol.c4_slack;
            parts.push(format!("N={n}: {s:.9}"));
        }
        Ok((ok, parts.join(", ")))
    })
}

/// One pole in B_64, cap raised from 10³ to 10⁴, at θ = h_d and θ = 1.5 h_d.
pub fn c5_criticality(tol: &Tolerances) -> CriterionResult {
    timed(5, "single-pole criticality", || {
        let hd = h_d(3)?;
        let lam = |theta: f64, cap: f64| -> Result<f64> {
            Ok(radial_lambda_max(3, 64.0, RadialPotential::CappedPole { theta, cap }, 4000, 1e-4)?.lambda)
        };
        let rise = |theta: f64| -> Result<(f64, f64, f64)> {
            let (a, b) = (lam(theta, 1e3)?, lam(theta, 1e4)?);
            Ok((a, b, (b - a) / a.abs()))
        };
        let (a1, b1, r1) = rise(hd)?;
        let (a2, b2, r2) = rise(1.5 * hd)?;
        Ok((
            r1 < tol.c5_critical_increase && r2 > tol.c5_supercritical_increase,
            format!(
                "θ=h_d: {a1:.6e} -> {b1:.6e} (+{:.2}%), θ=1.5h_d: {a2:.6e} -> {b2:.6e} (+{:.1}%)",
                100.0 * r1,
                100.0 * r2
            ),
        ))
    })
}

/// The four Poisson lemmas on the standard sweeps; the chain rows also carry
/// the verdict against the ordered-chain bound.
pub fn c6_poisson(tol: &Tolerances, seed: u64) -> CriterionResult {
    timed(6, "Poisson clustering bounds", || {
        let t0 = Instant::now();
        let mut rows = 0;
        let mut failures = Vec::new();
        let mut ordered_failures = 0;
        let big = 0.5 * 100f64.cbrt();
        let sweeps: [(Lemma, f64); 5] =
            [(Lemma::Chain, 0.5), (Lemma::Sup, 0.5), (Lemma::NoCluster, 0.5), (Lemma::Cluster, 0.5), (Lemma::Cluster, big)];
        for (lemma, hw) in sweeps {
            for k in [1usize, 2] {
                for r in [0.1, 0.2, 0.3] {
                    let c = verify_bound(lemma, 3, k, r, hw, tol.c6_trials, seed)?;
                    rows += 1;
                    if !c.pass {
                        failures.push(format!("{}(k={k},r={r}): {:.3e} vs {:.3e}", lemma.name(), c.empirical, c.bound));
                    }
                    ordered_failures += (c.ordered_pass == Some(false)) as usize;
                }
            }
        }
        let secs = t0.elapsed().as_secs_f64();
        let mut detail = format!("{rows} rows, {} violations, {secs:.1} s", failures.len());
        if !failures.is_empty() {
            detail += &format!(" [{}]; against |D||B_r|^k: {ordered_failures} violations", failures.join("; "));
        }
        Ok((failures.is_empty() && secs <= tol.c6_seconds, detail))
    })
}

/// Bounded attenuated potential in the cube of half-width 3, confined paths
/// against e^{tA}1 on the 15³ grid and its two refinements.
pub fn c7_fk_cross(tol: &Tolerances, seed: u64) -> CriterionResult {
    timed(7, "Feynman-Kac cross-validation", || {
        let (half, theta, cap, t) = (3.0, 1.0 / 16.0, 1.0, 0.5);
        let cloud = PointCloud::new(3, &[vec![-0.6, 0.0, 0.0], vec![0.6, 0.0, 0.0]])?;
        let kernel = KernelSpec::attenuated(3, 1.0, 4.0)?;
        let dom = Domain::cube(3, half);
        let mut levels = [0.0; 3];
        let mut op15 = None;
        for (i, n) in [15usize, 31, 63].into_iter().enumerate() {
            let op = build_operator(&dom, &cloud, &kernel, theta, 2.0 * half / (n + 1) as f64, cap)?;
            let c = op.index_near(&[0.0; 3]).expect("centre node");
            levels[i] = semigroup_value(&op, t, c);
            if i == 0 {
                op15 = Some(op);
            }
        }
        let ext = richardson3(levels, 2.0);
        let cfg = PathConfig { dt: t / 400.0, near_pole_radius: 0.0, substep_factor: 1, cap, n_paths: tol.c7_paths, seed: derive(seed, 7) };
        let mc = simulate_fk(&cloud, &kernel, theta, t, &[0.0; 3], &cfg, Some(&dom), true)?;
        let z = (mc.mean - ext.value) / mc.stderr;
        let op = op15.unwrap();
        let hk = HeatKernel::for_domain(&dom);
        let centre = op.index_near(&[0.0; 3]).unwrap();
        let conv = mild_residual_converged(&op, &hk, t, &[centre], 32, 1e-4, 5)?;
        let res = conv.last().unwrap();
        let all: Vec<usize> = (0..op.len()).collect();
        let all_nodes = mild_solution_residual(&op, &hk, t, &all, 64)?;
        let ok = z.abs() <= tol.c7_sigmas && res.max < tol.c7_residual;
        Ok((
            ok,
            format!(
                "grid 15/31/63: {:.6}/{:.6}/{:.6} -> {:.7} (p={:.2}); MC {:.7} ± {:.1e} (z={z:.2}); \
                 residual at start {:.2e} with {} steps; max over all nodes {:.2e}",
                levels[0], levels[1], levels[2], ext.value, ext.order, mc.mean, mc.stderr, res.max, res.n_time, all_nodes.max
            ),
        ))
    })
}

/// Random clouds in the unit cube; γ from the grid eigenvalue.
pub fn c8_stopped(tol: &Tolerances, seed: u64) -> CriterionResult {
    timed(8, "stopped Feynman-Kac", || {
        let mut rng = stream(seed, 8);
        let (theta, cap) = (0.0625, 16.0);
        let kernel = KernelSpec::truncated(3, 0.4)?;
        let dom = Domain::cube(3, 1.0);
        let inner = Region::cube(3, 0.5);
        let mut worst: f64 = 0.0;
        let mut fails = 0;
        for ci in 0..tol.c8_configs {
            let n = rng.random_range(1..=3usize);
            let pts: Vec<Vec<f64>> = (0..n).map(|_| inner.sample_uniform(&mut rng)).collect();
            let cloud = PointCloud::new(3, &pts)?;
            let lam = lambda_max(&dom, &cloud, &kernel, theta, 1.0 / 16.0, cap, 1e-8)?.lambda;
            let gamma = lam + lam.abs() * rng.random_range(1.0..3.0);
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-6i32..=6) as f64 * 0.125).collect();
            let mut levels = [0.0; 3];
            for (i, m) in [15usize, 31, 63].into_iter().enumerate() {
                let op = build_operator(&dom, &cloud, &kernel, theta, 2.0 / (m + 1) as f64, cap)?;
                levels[i] = stopped_grid_value(&op, gamma, op.index_near(&x).expect("lattice start"))?;
            }
            let grid = richardson3(levels, 2.0).value;
            let cfg = PathConfig {
                dt: 1e-3,
                near_pole_radius: 0.0,
                substep_factor: 1,
                cap,
                n_paths: tol.c8_paths,
                seed: derive(seed, 80 + ci as u64),
            };
            let mc = simulate_stopped_fk(&cloud, &kernel, theta, gamma, &dom, &x, &cfg, &StoppedOptions::new(lam))?;
            let z = (mc.mean - grid) / mc.stderr;
            worst = worst.max(z.abs());
            fails += (z.abs() > tol.c8_sigmas) as usize;
        }
        Ok((fails == 0, format!("{} configurations, {fails} outside {} σ, max |z| = {worst:.2}", tol.c8_configs, tol.c8_sigmas)))
    })
}

/// Two poles 0.15 apart with a = 0.05 and r = 0.3.
pub fn c9_path_expansion(tol: &Tolerances, seed: u64) -> CriterionResult {
    timed(9, "path expansion", || {
        let cloud = PointCloud::new(3, &[vec![0.0; 3], vec![0.15, 0.0, 0.0]])?;
        let rep = path_expansion_run(&cloud, 0.05, 0.3, 1.0 / 16.0, tol.c9_rho, 20_000, tol.c9_starts, 2000, 200, derive(seed, 9))?;
        let rho = rep.constants.rho;
        let ratios_ok = rep.ratios.iter().all(|&(_, q)| q <= rho + tol.c9_ratio_slack);
        let ok = rho <= 0.5 + 1e-12 && rep.sup.holds && ratios_ok;
        let mut detail = format!(
            "γ={:.4e}, ϱ={rho:.6}, sup={:.6} ± {:.1e} vs 1/(1-ϱ)={:.6}; ratios {:?}",
            rep.constants.gamma, rep.sup.sup, rep.sup.stderr, rep.sup.bound, rep.ratios
        );
        if rep.vacuous {
            detail += " (vacuous: the discount leaves no weighted excursion)";
        }
        Ok((ok, detail))
    })
}

pub fn c10_constants(tol: &Tolerances) -> CriterionResult {
    timed(10, "constants layer", || {
        let k = k_theta(3, 1.0 / 16.0)?;
        let sp = ScaleParams::new(3, 1.0 / 16.0)?;
        let pairs: Vec<(usize, f64)> = [(3, 0.0625), (3, 0.05), (3, 0.03), (3, 0.02), (4, 0.25), (4, 0.1), (5, 0.5), (5, 0.3), (6, 0.8), (7, 1.2)]
            .into_iter()
            .take(tol.c10_pairs)
            .collect();
        let mut worst: f64 = 0.0;
        for &(d, theta) in &pairs {
            let c = 1.0 / (64.0 * d as f64);
            let (a, b) = (c_inf(d, theta, c)?, c_inf_numeric(d, theta, c)?);
            worst = worst.max((a - b).abs() / a.abs().max(1e-300));
        }
        let cli = constants_report(3, 1.0 / 16.0, None)?;
        let ok = k == 2 && sp.exponent == 3.0 && cli.k == 2 && cli.exponent == 3.0 && worst <= tol.c10_tol;
        Ok((ok, format!("k_θ(3,1/16)={k}, exponent={}, max relative |c_inf - numeric| over {} pairs = {worst:.2e}", sp.exponent, pairs.len())))
    })
}

/// Every stochastic command run through the manifest writer, then replayed
/// from the manifest alone (with a different thread count).
pub fn c11_determinism(work_dir: &Path, seed: u64) -> CriterionResult {
    timed(11, "manifest replay", || {
        std::fs::create_dir_all(work_dir)?;
        let cloud_path = work_dir.join("cloud.csv");
        let cloud = PointCloud::new(3, &[vec![0.0; 3], vec![0.15, 0.0, 0.0]])?;
        std::fs::write(&cloud_path, super::io::cloud_to_csv(&cloud))?;
        let cp = cloud_path.to_string_lossy().to_string();
        let s = seed.to_string();
        let runs: Vec<(&str, Vec<(&str, String)>)> = vec![
            ("ppp-sample", vec![("region", "box:2".into()), ("seed", s.clone())]),
            ("verify-bounds", vec![("lemma", "chain".into()), ("trials", "2000".into()), ("seed", s.clone())]),
            ("fk", vec![("cloud", cp.clone()), ("paths", "500".into()), ("x", "0.5,0,0".into()), ("seed", s.clone())]),
            (
                "excursions",
                vec![("cloud", cp.clone()), ("a", "0.05".into()), ("r", "0.3".into()), ("starts", "4".into()), ("paths", "50".into()), ("t", "0.05".into()), ("seed", s.clone())],
            ),
            (
                "path-expansion",
                vec![
                    ("cloud", cp.clone()),
                    ("a", "0.05".into()),
                    ("r", "0.3".into()),
                    ("calibration-paths", "200".into()),
                    ("starts", "3".into()),
                    ("paths", "40".into()),
                    ("steps", "20".into()),
                    ("seed", s.clone()),
                ],
            ),
            ("suite", vec![("profile", "quick".into()), ("seed", s.clone())]),
        ];
        let threads = crate::parallel::threads();
        let mut bad = Vec::new();
        for (cmd, kv) in &runs {
            let mut flags = Params::new();
            for (k, v) in kv {
                flags.set(k, v.clone());
            }
            let p = super::commands::resolve(cmd, None, &flags)?;
            let out = work_dir.join(format!("{cmd}.out"));
            let run = super::run(cmd, &p, &out)?;
            crate::parallel::set_threads(if threads == 1 { 2 } else { 1 });
            let rep = super::manifest::replay(&run.manifest, &work_dir.join(format!("{cmd}-replay")));
            crate::parallel::set_threads(threads);
            if !rep?.identical {
                bad.push(*cmd);
            }
        }
        Ok((bad.is_empty(), format!("{} commands replayed, mismatches: {bad:?}", runs.len())))
    })
}

/// Runs every criterion in order.
pub fn all(tol: &Tolerances, seed: u64, work_dir: &Path) -> Vec<CriterionResult> {
    vec![
        c1_ground_truth(tol),
        c2_monotonicity(tol, seed),
        c3_multipolar(tol, seed),
        c4_f_eta(tol),
        c5_criticality(tol),
        c6_poisson(tol, seed),
        c7_fk_cross(tol, seed),
        c8_stopped(tol, seed),
        c9_path_expansion(tol, seed),
        c10_constants(tol),
        c11_determinism(work_dir, seed),
    ]
}
