//! The subcommands: declared parameters with defaults, and their execution.
//! Every command produces one CSV or JSON document.

use serde::Serialize;
use serde_json::json;

use super::config::Params;
use super::io::{csv, fmt17, read_cloud, to_json};
use super::manifest::ConstantsInForce;
use crate::bounds_oracles::{c_inf, c_inf_numeric, c_mp, h_d, scales, ScaleParams};
use crate::cloud_geometry::{component_diameters, components, covering_number, gamma, mst_edges};
use crate::error::{Error, Result};
use crate::feynman_kac::{
    boundary_starts, calibrate, component_lambda, excursion_histogram, gamma_for_rho, path_expansion_constants,
    simulate_fk, upperbound0_check, PathConfig,
};
use crate::kernels::{potential_eval, KernelSpec};
use crate::point_process::{sample_ppp, verify_bound, Lemma, PointCloud, Region};
use crate::spectral::{build_operator, lambda_max, lambda_max_richardson, multipolar_bound, Domain};

#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    /// None: required
    pub default: Option<&'static str>,
    pub help: &'static str,
    /// the value is a path whose content is embedded in the manifest
    pub input_file: bool,
}

const fn key(name: &'static str, default: Option<&'static str>, help: &'static str) -> Key {
    Key { name, default, help, input_file: false }
}

const fn file(name: &'static str, help: &'static str) -> Key {
    Key { name, default: Some(""), help, input_file: true }
}

#[derive(Debug, Clone, Copy)]
pub struct CommandSpec {
    pub name: &'static str,
    pub about: &'static str,
    /// needs --seed
    pub stochastic: bool,
    /// "csv" or "json"
    pub format: &'static str,
    pub keys: &'static [Key],
}

const SEED: Key = key("seed", None, "random seed (mandatory)");

pub const COMMANDS: &[CommandSpec] = &[
    CommandSpec {
        name: "ppp-sample",
        about: "sample a Poisson point process",
        stochastic: true,
        format: "csv",
        keys: &[
            key("d", Some("3"), "dimension"),
            key("region", None, "box:HALF or ball:R, centred at the origin"),
            key("intensity", Some("1"), "points per unit volume"),
            SEED,
        ],
    },
    CommandSpec {
        name: "verify-bounds",
        about: "Monte-Carlo check of the Poisson clustering bounds",
        stochastic: true,
        format: "csv",
        keys: &[
            key("lemma", None, "chain, sup, cluster or nocluster"),
            key("d", Some("3"), "dimension"),
            key("k", Some("1,2"), "cluster sizes (comma-separated)"),
            key("r", Some("0.1,0.2,0.3"), "radii (comma-separated)"),
            key("half-width", Some("0.5"), "half-width of the cube D"),
            key("trials", Some("100000"), "samples per row"),
            SEED,
        ],
    },
    CommandSpec {
        name: "potential-eval",
        about: "evaluate the kernel potential at given points",
        stochastic: false,
        format: "csv",
        keys: &[
            file("cloud", "cloud CSV"),
            key("kernel", None, "truncated:a=A, atten:a=A,p=P or renorm:a=A,box=B"),
            key("x", None, "points x1,...,xd separated by ';'"),
            key("theta", Some("1"), "coupling"),
            key("cap", Some("inf"), "cap m applied before the coupling"),
        ],
    },
    CommandSpec {
        name: "potential-grid",
        about: "cell-averaged capped potential on the interior grid nodes of a domain",
        stochastic: false,
        format: "csv",
        keys: &[
            file("cloud", "cloud CSV"),
            key("kernel", None, "kernel specification"),
            key("region", None, "box:HALF or ball:R"),
            key("h", None, "grid step"),
            key("theta", Some("1"), "coupling"),
            key("cap", Some("10000"), "cap m"),
        ],
    },
    CommandSpec {
        name: "geometry",
        about: "connectivity radius, spanning tree, components and coverings",
        stochastic: false,
        format: "json",
        keys: &[
            file("cloud", "cloud CSV"),
            key("r", Some(""), "radius for components and coverings"),
            key("region", Some(""), "region to cover with side-r boxes"),
        ],
    },
    CommandSpec {
        name: "eigen",
        about: "principal Dirichlet eigenvalue of ½Δ + θ min(V, m)",
        stochastic: false,
        format: "json",
        keys: &[
            file("cloud", "cloud CSV (empty potential when absent)"),
            key("d", Some("3"), "dimension when no cloud is given"),
            key("domain", None, "ball:R, box:H or nbhd:R (r-neighbourhood of the cloud)"),
            key("kernel", Some("truncated:a=1"), "kernel specification"),
            key("theta", Some("0.0625"), "coupling"),
            key("h", Some("0.05"), "grid step"),
            key("cap", Some("10000"), "cap m"),
            key("tol", Some("1e-8"), "relative eigenvalue tolerance"),
            key("richardson", Some("false"), "also solve at h/2 and extrapolate"),
            key("order", Some("1"), "assumed order of the grid error"),
        ],
    },
    CommandSpec {
        name: "hardy-verify",
        about: "grid eigenvalue against the multipolar Hardy bound",
        stochastic: false,
        format: "json",
        keys: &[
            file("cloud", "cloud CSV with at least two points"),
            key("theta", None, "coupling in (h_d/M, h_d/(M-1)]"),
            key("margin", Some("2"), "ball radius beyond the cloud, in units of Γ"),
            key("cells", Some("20"), "grid cells per ball radius at the coarse level"),
            key("cap", Some("10000"), "cap m"),
            key("tol", Some("1e-8"), "relative eigenvalue tolerance"),
        ],
    },
    CommandSpec {
        name: "fk",
        about: "Monte-Carlo Feynman-Kac functional",
        stochastic: true,
        format: "json",
        keys: &[
            file("cloud", "cloud CSV (empty potential when absent)"),
            key("d", Some("3"), "dimension when no cloud is given"),
            key("kernel", Some("truncated:a=1"), "kernel specification"),
            key("theta", Some("0.0625"), "coupling"),
            key("t", Some("1"), "time horizon"),
            key("x", Some(""), "start point (origin when empty)"),
            key("dt", Some("0.001"), "base time step; must divide t"),
            key("cap", Some("10000"), "cap m"),
            key("near-pole-radius", Some("0"), "radius within which steps are subdivided"),
            key("substeps", Some("8"), "subdivision factor near poles"),
            key("paths", Some("10000"), "number of paths"),
            key("confine", Some(""), "kill paths leaving this domain (ball:R or box:H)"),
            SEED,
        ],
    },
    CommandSpec {
        name: "excursions",
        about: "distribution of the number of excursions E_t",
        stochastic: true,
        format: "json",
        keys: &[
            file("cloud", "cloud CSV"),
            key("a", None, "inner radius scale (entrances at 3a)"),
            key("r", None, "outer radius (exits), r > 4a"),
            key("theta", Some("0"), "coupling of the weight"),
            key("gamma", Some("0"), "discount rate of the weight"),
            key("t", Some("1"), "time horizon"),
            key("dt", Some("0.001"), "base time step"),
            key("cap", Some("10000"), "cap m"),
            key("starts", Some("20"), "number of starting points on the r-sphere union"),
            key("paths", Some("1000"), "paths per start"),
            SEED,
        ],
    },
    CommandSpec {
        name: "path-expansion",
        about: "calibrated constants, ϱ and the discounted sup and excursion checks",
        stochastic: true,
        format: "json",
        keys: &[
            file("cloud", "cloud CSV"),
            key("a", None, "kernel radius a"),
            key("r", None, "component radius r > 4a"),
            key("theta", Some("0.0625"), "coupling"),
            key("rho", Some("0.5"), "target ϱ; γ is the smallest value reaching it"),
            key("calibration-paths", Some("20000"), "paths for the constant calibration"),
            key("starts", Some("20"), "boundary starting points"),
            key("paths", Some("2000"), "paths per start"),
            key("steps", Some("200"), "time steps of the sup check"),
            SEED,
        ],
    },
    CommandSpec {
        name: "constants",
        about: "k_θ, the scale exponent and the closed-form constants",
        stochastic: false,
        format: "json",
        keys: &[
            key("d", Some("3"), "dimension"),
            key("theta", None, "coupling in (0, h_d/2]"),
            key("c", Some(""), "c in (0, 1] for c_inf (default 1/(64 d))"),
            key("t", Some(""), "time t > e^e for the scales R(t), r(t)"),
        ],
    },
    CommandSpec {
        name: "suite",
        about: "acceptance battery",
        stochastic: true,
        format: "json",
        keys: &[key("profile", Some("quick"), "quick or full"), SEED],
    },
];

pub fn spec(name: &str) -> Option<&'static CommandSpec> {
    COMMANDS.iter().find(|c| c.name == name)
}

/// Defaults, then `file`, then `flags`; unknown keys and missing required
/// ones are configuration errors.
pub fn resolve(name: &str, file: Option<&Params>, flags: &Params) -> Result<Params> {
    let cmd = spec(name).ok_or_else(|| Error::InvalidConfig(format!("unknown command '{name}'")))?;
    let mut p = Params::new();
    for k in cmd.keys {
        if let Some(d) = k.default {
            p.set(k.name, d);
        }
    }
    for src in file.into_iter().chain(std::iter::once(flags)) {
        if let Some(bad) = src.0.keys().find(|k| !cmd.keys.iter().any(|c| c.name == k.as_str())) {
            return Err(Error::InvalidConfig(format!("'{name}' has no parameter '{bad}'")));
        }
        p.overlay(src);
    }
    if let Some(k) = cmd.keys.iter().find(|k| k.default.is_none() && !p.contains(k.name)) {
        return Err(Error::InvalidConfig(format!("'{name}' needs --{}", k.name)));
    }
    Ok(p)
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub content: String,
    /// Some(false) when a verification failed
    pub verified: Option<bool>,
    pub summary: String,
    pub seeds: Vec<u64>,
    pub constants: Option<ConstantsInForce>,
}

impl Outcome {
    fn plain(content: String, summary: String) -> Self {
        Self { content, verified: None, summary, seeds: vec![], constants: None }
    }
}

/// Runs a command on fully resolved parameters.
pub fn execute(name: &str, p: &Params) -> Result<Outcome> {
    let cmd = spec(name).ok_or_else(|| Error::InvalidConfig(format!("unknown command '{name}'")))?;
    let mut out = match cmd.name {
        "ppp-sample" => ppp_sample(p),
        "verify-bounds" => verify_bounds(p),
        "potential-eval" => potential_eval_cmd(p),
        "potential-grid" => potential_grid(p),
        "geometry" => geometry(p),
        "eigen" => eigen(p),
        "hardy-verify" => hardy_verify(p),
        "fk" => fk(p),
        "excursions" => excursions(p),
        "path-expansion" => path_expansion(p),
        "constants" => constants(p),
        "suite" => suite(p),
        _ => unreachable!(),
    }?;
    if cmd.stochastic {
        out.seeds = vec![p.u64("seed")?];
    }
    Ok(out)
}

fn cloud_or_empty(p: &Params) -> Result<PointCloud> {
    match p.opt("cloud") {
        Some(path) => read_cloud(path.as_ref()),
        None => Ok(PointCloud::empty(p.usize("d")?)),
    }
}

fn cloud_required(p: &Params) -> Result<PointCloud> {
    let path = p.opt("cloud").ok_or_else(|| Error::InvalidConfig("--cloud is required".into()))?;
    read_cloud(path.as_ref())
}

/// `x1,...,xd;y1,...,yd`
fn points(s: &str, d: usize) -> Result<Vec<Vec<f64>>> {
    s.split(';')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let v: Vec<f64> = t
                .split(',')
                .map(|c| c.trim().parse::<f64>().map_err(|_| Error::Parse(format!("coordinate '{}'", c.trim()))))
                .collect::<Result<_>>()?;
            if v.len() != d {
                return Err(Error::Parse(format!("point '{t}' has {} coordinates, expected {d}", v.len())));
            }
            Ok(v)
        })
        .collect()
}

fn domain(s: &str, cloud: &PointCloud) -> Result<Domain> {
    match s.split_once(':') {
        Some(("nbhd", r)) => {
            let r: f64 = r.trim().parse().map_err(|_| Error::Parse(format!("radius '{r}'")))?;
            if cloud.is_empty() || !(r > 0.0) {
                return Err(Error::InvalidConfig("nbhd:R needs a non-empty cloud and R > 0".into()));
            }
            Ok(Domain::neighbourhood(cloud, r))
        }
        _ => Domain::parse(s, cloud.dim()),
    }
}

fn json_outcome<T: Serialize>(value: &T, summary: String) -> Result<Outcome> {
    Ok(Outcome::plain(to_json(value)?, summary))
}

fn ppp_sample(p: &Params) -> Result<Outcome> {
    let d = p.usize("d")?;
    let region = Region::parse(p.str("region")?, d)?;
    let cloud = sample_ppp(&region, p.f64("intensity")?, p.u64("seed")?)?;
    let n = cloud.len();
    Ok(Outcome::plain(super::io::cloud_to_csv(&cloud), format!("{n} points")))
}

fn verify_bounds(p: &Params) -> Result<Outcome> {
    let lemma = Lemma::parse(p.str("lemma")?)?;
    let (d, hw, trials, seed) = (p.usize("d")?, p.f64("half-width")?, p.u64("trials")?, p.u64("seed")?);
    let mut rows = Vec::new();
    let mut failed = 0;
    for &k in &p.usize_list("k")? {
        for &r in &p.f64_list("r")? {
            let c = verify_bound(lemma, d, k, r, hw, trials, seed)?;
            failed += !c.pass as usize;
            let opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
            rows.push(vec![
                lemma.name().to_string(),
                d.to_string(),
                k.to_string(),
                fmt17(r),
                fmt17(hw),
                trials.to_string(),
                fmt17(c.empirical),
                fmt17(c.bound),
                fmt17(c.stderr),
                c.pass.to_string(),
                c.approximate_counts.to_string(),
                opt(c.ordered_bound),
                c.ordered_pass.map(|b| b.to_string()).unwrap_or_default(),
            ]);
        }
    }
    let header = [
        "lemma", "d", "k", "r", "half_width", "trials", "empirical", "bound", "stderr", "pass", "approximate_counts",
        "ordered_bound", "ordered_pass",
    ];
    let n = rows.len();
    Ok(Outcome {
        content: csv(&header, &rows),
        verified: Some(failed == 0),
        summary: format!("{lemma:?}: {} of {n} rows within 3 standard errors", n - failed),
        seeds: vec![],
        constants: None,
    })
}

fn potential_eval_cmd(p: &Params) -> Result<Outcome> {
    let cloud = cloud_required(p)?;
    let d = cloud.dim();
    let kernel = KernelSpec::parse(p.str("kernel")?, d)?;
    let (theta, cap) = (p.f64("theta")?, p.f64("cap")?);
    let mut rows = Vec::new();
    for x in points(p.str("x")?, d)? {
        let raw = potential_eval(&cloud, &kernel, &x)?;
        let mut row: Vec<String> = x.iter().map(|&v| fmt17(v)).collect();
        row.push(fmt17(raw));
        row.push(fmt17(theta * raw.min(cap)));
        row.push((raw > cap).to_string());
        rows.push(row);
    }
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    header.extend(["raw".into(), "value".into(), "clipped".into()]);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let n = rows.len();
    Ok(Outcome::plain(csv(&header, &rows), format!("{n} points evaluated")))
}

fn potential_grid(p: &Params) -> Result<Outcome> {
    let cloud = cloud_required(p)?;
    let d = cloud.dim();
    let kernel = KernelSpec::parse(p.str("kernel")?, d)?;
    let dom = Domain::parse(p.str("region")?, d)?;
    let op = build_operator(&dom, &cloud, &kernel, p.f64("theta")?, p.f64("h")?, p.f64("cap")?)?;
    let rows: Vec<Vec<String>> = op
        .node_coords()
        .iter()
        .zip(&op.potential)
        .map(|(x, v)| x.iter().chain(std::iter::once(v)).map(|&t| fmt17(t)).collect())
        .collect();
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    header.push("value".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    Ok(Outcome::plain(csv(&header, &rows), format!("{} interior nodes", op.len())))
}

fn geometry(p: &Params) -> Result<Outcome> {
    let cloud = cloud_required(p)?;
    let g = if cloud.len() >= 2 { Some(gamma(&cloud)) } else { None };
    let mst: Vec<_> = mst_edges(&cloud).into_iter().map(|(i, j, l)| json!([i, j, l])).collect();
    let mut v = json!({ "points": cloud.len(), "dim": cloud.dim(), "gamma": g, "mst_edges": mst });
    if let Some(r) = p.opt("r") {
        let r: f64 = r.parse().map_err(|_| Error::Parse(format!("radius '{r}'")))?;
        let dec = components(&cloud, r);
        let diam = component_diameters(&cloud, &dec);
        v["components"] = json!({
            "r": r,
            "n_r": dec.n_r,
            "members": dec.components.iter().map(|c| c.members.clone()).collect::<Vec<_>>(),
            "diameters": diam,
        });
        if let Some(reg) = p.opt("region") {
            let region = Region::parse(reg, cloud.dim())?;
            v["covering"] = serde_json::to_value(covering_number(&region, r)).map_err(|e| Error::Io(e.to_string()))?;
        }
    }
    let summary = match g {
        Some(g) => format!("{} points, Γ = {g}", cloud.len()),
        None => format!("{} points", cloud.len()),
    };
    json_outcome(&v, summary)
}

fn eigen(p: &Params) -> Result<Outcome> {
    let cloud = cloud_or_empty(p)?;
    let d = cloud.dim();
    let dom = domain(p.str("domain")?, &cloud)?;
    let kernel = KernelSpec::parse(p.str("kernel")?, d)?;
    let (theta, h, cap, tol) = (p.f64("theta")?, p.f64("h")?, p.f64("cap")?, p.f64("tol")?);
    if p.bool("richardson")? {
        let r = lambda_max_richardson(&dom, &cloud, &kernel, theta, h, cap, tol, p.f64("order")?)?;
        let s = format!("λ_max ≈ {} (h: {}, h/2: {})", r.extrapolated, r.coarse, r.fine);
        return json_outcome(&json!({ "richardson": r }), s);
    }
    let r = lambda_max(&dom, &cloud, &kernel, theta, h, cap, tol)?;
    let s = format!("λ_max = {} after {} iterations", r.lambda, r.iterations);
    json_outcome(&json!({ "eigen": r }), s)
}

#[derive(Debug, Clone, Serialize)]
pub struct HardyVerification {
    pub points: usize,
    pub theta: f64,
    pub gamma: f64,
    pub radius: f64,
    pub h: f64,
    pub bound: f64,
    pub lambda_coarse: f64,
    pub lambda_fine: f64,
    pub refinement_delta: f64,
    pub solver_tol: f64,
    pub pass: bool,
}

/// Grid λ_max of ½Δ + θ min(|x-y|^-2 summed, m) on a ball around the cloud at
/// steps h and h/2, against M(π² + 3θ)/(2Γ²) + solver tolerance + |λ_h - λ_{h/2}|.
/// The Dirichlet ball is a lower approximation of the whole-space value.
pub fn hardy_verification(cloud: &PointCloud, theta: f64, margin: f64, cells: usize, cap: f64, tol: f64) -> Result<HardyVerification> {
    let bound = multipolar_bound(cloud, theta)?;
    let g = gamma(cloud);
    let d = cloud.dim();
    let n = cloud.len() as f64;
    let centre: Vec<f64> = (0..d).map(|k| cloud.points().map(|q| q[k]).sum::<f64>() / n).collect();
    let spread = cloud.points().map(|q| crate::num::dist(q, &centre)).fold(0.0, f64::max);
    let radius = spread + margin * g;
    let h = radius / cells as f64;
    // inverse-square poles throughout the ball
    let kernel = KernelSpec::truncated(d, 4.0 * radius)?;
    let shifted = cloud.translated(&centre.iter().map(|c| -c).collect::<Vec<_>>());
    let dom = Domain::ball(d, radius);
    let r = lambda_max_richardson(&dom, &shifted, &kernel, theta, h, cap, tol, 1.0)?;
    let delta = (r.coarse - r.fine).abs();
    let solver_tol = tol * r.fine.abs().max(1.0);
    let pass = r.fine <= bound + solver_tol + delta && r.coarse <= bound + solver_tol + delta;
    Ok(HardyVerification {
        points: cloud.len(),
        theta,
        gamma: g,
        radius,
        h,
        bound,
        lambda_coarse: r.coarse,
        lambda_fine: r.fine,
        refinement_delta: delta,
        solver_tol,
        pass,
    })
}

fn hardy_verify(p: &Params) -> Result<Outcome> {
    let cloud = cloud_required(p)?;
    let v = hardy_verification(&cloud, p.f64("theta")?, p.f64("margin")?, p.usize("cells")?, p.f64("cap")?, p.f64("tol")?)?;
    let s = format!("λ_max(h/2) = {} vs bound {}", v.lambda_fine, v.bound);
    let mut out = json_outcome(&v, s)?;
    out.verified = Some(v.pass);
    Ok(out)
}

fn fk(p: &Params) -> Result<Outcome> {
    let cloud = cloud_or_empty(p)?;
    let d = cloud.dim();
    let kernel = KernelSpec::parse(p.str("kernel")?, d)?;
    let x = match p.opt("x") {
        Some(s) => points(s, d)?.into_iter().next().ok_or_else(|| Error::Parse("empty start point".into()))?,
        None => vec![0.0; d],
    };
    let cfg = PathConfig {
        dt: p.f64("dt")?,
        near_pole_radius: p.f64("near-pole-radius")?,
        substep_factor: p.usize("substeps")?,
        cap: p.f64("cap")?,
        n_paths: p.usize("paths")?,
        seed: p.u64("seed")?,
    };
    let confine = p.opt("confine").map(|s| Domain::parse(s, d)).transpose()?;
    let e = simulate_fk(&cloud, &kernel, p.f64("theta")?, p.f64("t")?, &x, &cfg, confine.as_ref(), true)?;
    let s = format!("{} ± {}", e.mean, e.stderr);
    json_outcome(&json!({ "start": x, "estimate": e }), s)
}

fn excursions(p: &Params) -> Result<Outcome> {
    let cloud = cloud_required(p)?;
    let (a, r) = (p.f64("a")?, p.f64("r")?);
    let kernel = KernelSpec::truncated(cloud.dim(), a)?;
    let seed = p.u64("seed")?;
    let starts = boundary_starts(&cloud, r, p.usize("starts")?, seed)?;
    let cfg = PathConfig {
        dt: p.f64("dt")?,
        near_pole_radius: 2.0 * a,
        substep_factor: 8,
        cap: p.f64("cap")?,
        n_paths: p.usize("paths")?,
        seed,
    };
    let h = excursion_histogram(&cloud, &kernel, p.f64("theta")?, p.f64("gamma")?, a, r, p.f64("t")?, &starts, &cfg)?;
    let s = format!("{} paths, E_t up to {}", h.paths, h.counts.len().saturating_sub(2));
    json_outcome(&json!({ "starts": starts, "histogram": h, "ratios": h.ratios(1) }), s)
}

#[derive(Debug, Clone, Serialize)]
pub struct PathExpansionReport {
    pub calibration: crate::feynman_kac::Calibration,
    pub component_lambdas: Vec<f64>,
    pub constants: crate::feynman_kac::ExpansionConstants,
    pub dt: f64,
    pub sup: crate::feynman_kac::SupCheck,
    pub histogram: crate::feynman_kac::ExcursionHistogram,
    pub ratios: Vec<(usize, f64)>,
    pub ratio_limit: f64,
    pub ratios_hold: bool,
    /// the discount kills the functional before any excursion can happen
    pub vacuous: bool,
    pub pass: bool,
}

/// Calibrates the constants, picks the smallest γ with ϱ(γ) = target, and runs
/// the discounted sup check and the weighted E_t histogram from boundary starts.
pub fn path_expansion_run(
    cloud: &PointCloud,
    a: f64,
    r: f64,
    theta: f64,
    rho_target: f64,
    calibration_paths: usize,
    n_starts: usize,
    paths: usize,
    steps: usize,
    seed: u64,
) -> Result<PathExpansionReport> {
    let d = cloud.dim();
    let cal = calibrate(d, calibration_paths, crate::rng::derive(seed, 1))?;
    let cap = 100.0 / (a * a);
    let lams = component_lambda(cloud, theta, a, r, r / 12.0, cap, 1e-6)?;
    let lam = lams.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let g = gamma_for_rho(cloud, theta, a, r, &cal, lam, rho_target)?;
    let consts = path_expansion_constants(cloud, theta, a, r, g, &cal, lam)?;
    let starts = boundary_starts(cloud, r, n_starts, crate::rng::derive(seed, 2))?;
    let kernel = KernelSpec::truncated(d, a)?;
    // resolve the discount time scale 1/γ, and at least the path scale a²
    let dt = (0.1 / g).min(a * a / 10.0);
    let cfg = PathConfig {
        dt,
        near_pole_radius: 2.0 * a,
        substep_factor: 8,
        cap,
        n_paths: paths,
        seed: crate::rng::derive(seed, 3),
    };
    let horizon = dt * steps as f64;
    let sup = upperbound0_check(cloud, &kernel, theta, g, &starts, horizon, &cfg, consts.rho)?;
    let hcfg = PathConfig { n_paths: (paths / 4).max(1), seed: crate::rng::derive(seed, 4), ..cfg.clone() };
    let histogram = excursion_histogram(cloud, &kernel, theta, g, a, r, horizon, &starts, &hcfg)?;
    let ratios = histogram.ratios(1);
    let ratio_limit = consts.rho + 0.1;
    let ratios_hold = ratios.iter().all(|&(_, q)| q <= ratio_limit);
    let vacuous = histogram.weighted.iter().skip(1).all(|&w| w == 0.0);
    Ok(PathExpansionReport {
        calibration: cal,
        component_lambdas: lams,
        constants: consts,
        dt,
        pass: sup.holds && ratios_hold,
        sup,
        histogram,
        ratios,
        ratio_limit,
        ratios_hold,
        vacuous,
    })
}

fn path_expansion(p: &Params) -> Result<Outcome> {
    let cloud = cloud_required(p)?;
    let rep = path_expansion_run(
        &cloud,
        p.f64("a")?,
        p.f64("r")?,
        p.f64("theta")?,
        p.f64("rho")?,
        p.usize("calibration-paths")?,
        p.usize("starts")?,
        p.usize("paths")?,
        p.usize("steps")?,
        p.u64("seed")?,
    )?;
    let s = format!(
        "γ = {:.4e}, ϱ = {:.4}, sup = {:.6} vs {:.6}{}",
        rep.constants.gamma,
        rep.constants.rho,
        rep.sup.sup,
        rep.sup.bound,
        if rep.vacuous { " (no weighted excursions)" } else { "" }
    );
    let constants = Some(ConstantsInForce {
        k_star: rep.calibration.k_star,
        c_star: rep.calibration.c_star,
        k1: rep.calibration.k1,
    });
    let mut out = json_outcome(&rep, s)?;
    out.verified = Some(rep.pass);
    out.constants = constants;
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantsReport {
    pub d: usize,
    pub theta: f64,
    pub h_d: f64,
    pub k: usize,
    pub exponent: f64,
    pub c_mp: f64,
    pub c: f64,
    pub c_inf: f64,
    pub c_inf_numeric: f64,
    /// R(t) and r(t), the leading terms of the scale functions, when t is given
    pub t: Option<f64>,
    pub scale_big_r: Option<f64>,
    pub scale_r: Option<f64>,
}

pub fn constants_report(d: usize, theta: f64, c: Option<f64>) -> Result<ConstantsReport> {
    let sp = ScaleParams::new(d, theta)?;
    let c = c.unwrap_or(1.0 / (64.0 * d as f64));
    Ok(ConstantsReport {
        d,
        theta,
        h_d: h_d(d)?,
        k: sp.k,
        exponent: sp.exponent,
        c_mp: c_mp(sp.k, theta),
        c,
        c_inf: c_inf(d, theta, c)?,
        c_inf_numeric: c_inf_numeric(d, theta, c)?,
        t: None,
        scale_big_r: None,
        scale_r: None,
    })
}

fn constants(p: &Params) -> Result<Outcome> {
    let c = p.opt("c").map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("c '{s}'")))).transpose()?;
    let mut r = constants_report(p.usize("d")?, p.f64("theta")?, c)?;
    if p.opt("t").is_some() {
        let t = p.f64("t")?;
        let (big_r, small_r) = scales(t, r.k, r.d)?;
        (r.t, r.scale_big_r, r.scale_r) = (Some(t), Some(big_r), Some(small_r));
    }
    let s = format!("k = {}, exponent = {}", r.k, r.exponent);
    json_outcome(&r, s)
}

fn suite(p: &Params) -> Result<Outcome> {
    let profile = super::suite::Profile::parse(p.str("profile")?)?;
    let rep = super::suite::run(profile, p.u64("seed")?)?;
    let s = format!("{} of {} checks passed", rep.checks.iter().filter(|c| c.passed).count(), rep.checks.len());
    let mut out = json_outcome(&rep, s)?;
    out.verified = Some(rep.passed);
    Ok(out)
}
