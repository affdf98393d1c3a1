//! `suite quick` runs the cheap sanity checks; `suite full` adds the whole
//! acceptance battery.

use serde::Serialize;

use super::criteria::{self, CriterionResult, Tolerances, KNOWN_FAILURES};
use crate::bounds_oracles::h_d;
use crate::error::{Error, Result};
use crate::feynman_kac::{simulate_fk, PathConfig};
use crate::kernels::KernelSpec;
use crate::point_process::{verify_bound, Lemma, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Quick,
    Full,
}

impl Profile {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "quick" => Ok(Profile::Quick),
            "full" => Ok(Profile::Full),
            _ => Err(Error::InvalidConfig(format!("profile must be quick or full, got '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub known_failure: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub profile: Profile,
    pub seed: u64,
    pub checks: Vec<Check>,
    /// every check passed; known failures still count
    pub passed: bool,
}

fn check(name: &str, r: Result<(bool, String)>) -> Check {
    let (passed, detail) = r.unwrap_or_else(|e| (false, format!("error: {e}")));
    Check { name: name.into(), passed, known_failure: false, detail }
}

fn quick_checks(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    out.push(check("empty-potential Feynman-Kac equals 1", (|| {
        let cfg = PathConfig { dt: 0.01, near_pole_radius: 0.0, substep_factor: 1, cap: 1.0, n_paths: 200, seed };
        let e = simulate_fk(&PointCloud::empty(3), &KernelSpec::truncated(3, 1.0)?, 0.0625, 1.0, &[0.0; 3], &cfg, None, false)?;
        Ok((e.mean == 1.0 && e.stderr == 0.0, format!("{} ± {}", e.mean, e.stderr)))
    })()));
    out.push(check("Hardy constant in d = 3", (|| {
        let h = h_d(3)?;
        Ok((h == 0.125, format!("h_3 = {h}")))
    })()));
    out.push(check("verify-bounds is deterministic", (|| {
        let a = verify_bound(Lemma::Sup, 3, 1, 0.2, 0.5, 2000, seed)?;
        let b = verify_bound(Lemma::Sup, 3, 1, 0.2, 0.5, 2000, seed)?;
        Ok((a.empirical == b.empirical, format!("{} twice", a.empirical)))
    })()));
    out.push(check("cloud CSV round trip", (|| {
        let c = PointCloud::new(3, &[vec![0.1, -1.0 / 3.0, 2e-17], vec![1e5, 0.0, -0.7]])?;
        let back = super::io::parse_cloud_csv(&super::io::cloud_to_csv(&c))?;
        Ok((back.to_vecs() == c.to_vecs(), format!("{} points", back.len())))
    })()));
    out.push(from_criterion(criteria::c10_constants(&Tolerances::standard())));
    out
}

fn from_criterion(r: CriterionResult) -> Check {
    Check {
        name: format!("criterion {}: {}", r.id, r.name),
        known_failure: !r.passed && KNOWN_FAILURES.contains(&r.id),
        passed: r.passed,
        detail: r.detail,
    }
}

pub fn run(profile: Profile, seed: u64) -> Result<SuiteReport> {
    let mut checks = quick_checks(seed);
    if profile == Profile::Full {
        let dir = std::env::temp_dir().join(format!("pamlab-suite-{}-{seed}", std::process::id()));
        let results = criteria::all(&Tolerances::standard(), seed, &dir);
        let _ = std::fs::remove_dir_all(&dir);
        checks.extend(results.into_iter().map(from_criterion));
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(SuiteReport { profile, seed, checks, passed })
}
