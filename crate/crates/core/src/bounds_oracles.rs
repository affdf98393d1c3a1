//! Closed-form constants and scale functions.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::num::{factorial, golden_max, unit_ball_volume};

/// Sharp Hardy constant (d-2)^2/8.
pub fn h_d(d: usize) -> Result<f64> {
    if d < 3 {
        return Err(Error::Domain(format!("h_d needs d >= 3, got {d}")));
    }
    let m = (d - 2) as f64;
    Ok(m * m / 8.0)
}

/// Critical cluster size floor(h_d / theta), defined for theta in (0, h_d/2].
pub fn k_theta(d: usize, theta: f64) -> Result<usize> {
    let h = h_d(d)?;
    if !(theta > 0.0 && theta <= h / 2.0) {
        return Err(Error::Domain(format!("theta={theta} outside (0, h_d/2] with h_d={h}")));
    }
    // h/theta can land a hair below an integer (h/(h/3) for instance); the
    // small relative slack keeps the floor on the exact value.
    let q = h / theta;
    Ok((q * (1.0 + 4.0 * f64::EPSILON)).floor() as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaleParams {
    pub d: usize,
    pub theta: f64,
    pub k: usize,
    pub exponent: f64,
}

impl ScaleParams {
    pub fn new(d: usize, theta: f64) -> Result<Self> {
        let k = k_theta(d, theta)?;
        Ok(Self { d, theta, k, exponent: (k as f64 + 1.0) / (k as f64 - 1.0) })
    }
}

pub fn c_mp(k: usize, theta: f64) -> f64 {
    (k as f64 + 1.0) * (PI * PI + 3.0 * theta) / 2.0
}

/// The two terms of the eigenvalue tail bound, summed in `value`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TailBound {
    pub cluster_term: f64,
    pub crowding_term: f64,
    pub value: f64,
}

/// Explicit bound on P(Lambda > s) for the cloud restricted to B_R, with k = k_theta.
pub fn eigen_tail_bound(big_r: f64, r: f64, s: f64, theta: f64, d: usize) -> Result<TailBound> {
    let k = k_theta(d, theta)?;
    let cmp = c_mp(k, theta);
    let kf = k as f64;
    let threshold = 4.0 * kf * kf * cmp / (big_r * big_r);
    if s <= threshold {
        return Err(Error::Precondition(format!("s={s} must exceed 4k^2 c_mp/R^2 = {threshold}")));
    }
    let b1 = unit_ball_volume(d);
    let di = d as i32;
    let inner = b1 * (4.0 * kf * (cmp / s).sqrt()).powi(di);
    let cluster_term = b1 * (2.0 * big_r).powi(di) * inner.powi(k as i32) / factorial(k + 1);
    let crowd = b1 * (2.0 * (kf + 1.0) * r).powi(di);
    let crowding_term =
        b1 * (2.0 * (kf + 1.0) * big_r).powi(di) * crowd.powi(k as i32 + 1) / factorial(k + 2);
    Ok(TailBound { cluster_term, crowding_term, value: cluster_term + crowding_term })
}

/// R(t) and r(t) with the asymptotic relation taken as equality.
pub fn scales(t: f64, k: usize, d: usize) -> Result<(f64, f64)> {
    if !(t > std::f64::consts::E.powf(std::f64::consts::E)) {
        return Err(Error::Domain(format!("scales need t > e^e so that log log t > 1, got {t}")));
    }
    if k < 2 {
        return Err(Error::Domain(format!("scales need k >= 2, got {k}")));
    }
    let ll = t.ln().ln();
    let km1 = k as f64 - 1.0;
    let e = 1.0 / (d as f64 * km1);
    let big_r = t.powf(k as f64 / km1) * ll.powf(-e);
    let r = t.powf(-1.0 / km1) * ll.powf(e);
    Ok((big_r, r))
}

fn c_inf_prefactor(d: usize, k: usize) -> f64 {
    unit_ball_volume(d) / (2f64.powi(d as i32) * factorial(k + 1))
}

/// Closed-form sup of c/nu^2 - 2 sqrt(c) mu/nu under mu nu < sqrt(c), (mu nu^k)^d > 2^d (k+1)!/|B_1|.
pub fn c_inf(d: usize, theta: f64, c: f64) -> Result<f64> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::Domain(format!("c must lie in (0,1], got {c}")));
    }
    let k = k_theta(d, theta)?;
    let km1 = k as f64 - 1.0;
    let kp1 = k as f64 + 1.0;
    Ok(c.powf(k as f64 / km1) * km1 / kp1.powf(kp1 / km1)
        * c_inf_prefactor(d, k).powf(2.0 / (d as f64 * km1)))
}

/// The same supremum found numerically: for each nu the objective decreases in mu,
/// so mu sits on the lower edge of the feasible interval and a golden-section
/// search runs over log nu.
pub fn c_inf_numeric(d: usize, theta: f64, c: f64) -> Result<f64> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::Domain(format!("c must lie in (0,1], got {c}")));
    }
    let k = k_theta(d, theta)?;
    let a_root = (1.0 / c_inf_prefactor(d, k)).powf(1.0 / d as f64);
    let sc = c.sqrt();
    let objective = |log_nu: f64| {
        let nu = log_nu.exp();
        let mu = a_root * nu.powi(-(k as i32));
        if mu * nu >= sc {
            return f64::NEG_INFINITY;
        }
        c / (nu * nu) - 2.0 * sc * mu / nu
    };
    // Feasibility of mu nu < sqrt(c) needs nu^{k-1} > a_root/sqrt(c).
    let lo = ((a_root / sc).ln() / (k as f64 - 1.0)) + 1e-12;
    let mut best = (lo, f64::NEG_INFINITY);
    let mut x = lo;
    while x < lo + 20.0 {
        let v = objective(x);
        if v > best.1 {
            best = (x, v);
        }
        x += 0.01;
    }
    let (_, v) = golden_max(objective, best.0 - 0.01, best.0 + 0.01, 1e-14);
    Ok(v.max(best.1))
}

/// Exponent -R^2/t0 + c2 (t - t0)/r^2 of the travel-then-stay strategy.
pub fn heuristic_exponent(t0: f64, t: f64, big_r: f64, r: f64, c2: f64) -> f64 {
    -big_r * big_r / t0 + c2 * (t - t0) / (r * r)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct HeuristicOptimum {
    pub t0: f64,
    pub exponent: f64,
    pub feasible: bool,
}

pub fn heuristic_optimum(t: f64, big_r: f64, r: f64, c2: f64) -> HeuristicOptimum {
    let t0 = big_r * r / c2.sqrt();
    let exponent = c2 * t / (r * r) - 2.0 * c2.sqrt() * big_r / r;
    HeuristicOptimum { t0, exponent, feasible: t0 <= t }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hardy_constants() {
        assert_eq!(h_d(3).unwrap(), 0.125);
        assert_eq!(h_d(4).unwrap(), 0.5);
        assert_eq!(h_d(10).unwrap(), 8.0);
        assert!(h_d(2).is_err());
    }

    #[test]
    fn critical_cluster_sizes() {
        assert_eq!(k_theta(3, 1.0 / 16.0).unwrap(), 2);
        assert_eq!(k_theta(3, 1.0 / 24.0).unwrap(), 3);
        assert_eq!(k_theta(4, 0.25).unwrap(), 2);
        assert_eq!(k_theta(5, 9.0 / 8.0 / 7.0).unwrap(), 7);
        assert!(k_theta(3, 0.07).is_err());
        assert!(k_theta(3, 0.0).is_err());
        let p = ScaleParams::new(3, 1.0 / 16.0).unwrap();
        assert_eq!(p.exponent, 3.0);
    }

    #[test]
    fn c_mp_values() {
        assert!((c_mp(2, 1.0 / 16.0) - 3.0 * (PI * PI + 3.0 / 16.0) / 2.0).abs() < 1e-14);
        assert!(c_mp(2, 0.05) > c_mp(2, 0.04));
    }

    #[test]
    fn tail_bound_scaling() {
        let theta = 1.0 / 16.0;
        let a = eigen_tail_bound(10.0, 0.1, 5.0, theta, 3).unwrap();
        let b = eigen_tail_bound(10.0, 0.1, 10.0, theta, 3).unwrap();
        let ratio = b.cluster_term / a.cluster_term;
        assert!((ratio - 2f64.powf(-3.0)).abs() < 1e-12);
        assert_eq!(a.crowding_term, b.crowding_term);
        assert!(eigen_tail_bound(10.0, 0.1, 1.0, theta, 3).is_err());
    }

    #[test]
    fn scale_functions_product_identity() {
        // R r^k = (log log t)^{1/d}
        for &(t, k, d) in &[(1e3, 2usize, 3usize), (1e6, 3, 3), (50.0, 2, 4)] {
            let (big_r, r) = scales(t, k, d).unwrap();
            let want = t.ln().ln().powf(1.0 / d as f64);
            assert!((big_r * r.powi(k as i32) / want - 1.0).abs() < 1e-12);
        }
        assert!(scales(10.0, 2, 3).is_err());
    }

    #[test]
    fn scales_at_e_to_e_squared() {
        let t = std::f64::consts::E.powf(std::f64::consts::E.powi(2));
        let (big_r, r) = scales(t, 2, 3).unwrap();
        // log log t = 2
        assert!((big_r - t * t * 2f64.powf(-1.0 / 3.0)).abs() / big_r < 1e-12);
        assert!((r - 2f64.powf(1.0 / 3.0) / t).abs() / r < 1e-12);
    }

    #[test]
    fn c_inf_example_value() {
        let want = (1.0 / 27.0) * (PI / 36.0).powf(2.0 / 3.0);
        assert!((c_inf(3, 1.0 / 16.0, 1.0).unwrap() - want).abs() < 1e-15);
        assert!(c_inf(3, 0.0625, 0.5).unwrap() < c_inf(3, 0.0625, 0.6).unwrap());
        assert!(c_inf(3, 0.0625, 1.5).is_err());
    }

    #[test]
    fn c_inf_matches_numeric_optimum() {
        for &(d, th) in &[(3usize, 1.0 / 16.0), (3, 1.0 / 24.0), (4, 0.2), (5, 0.3)] {
            for &c in &[0.2, 1.0] {
                let a = c_inf(d, th, c).unwrap();
                let b = c_inf_numeric(d, th, c).unwrap();
                assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-300) + 1e-14, "{d} {th} {c}: {a} {b}");
            }
        }
    }

    #[test]
    fn heuristic_optimum_matches_golden_section() {
        let (t, big_r, r, c2) = (100.0, 30.0, 0.5, 2.0);
        let h = heuristic_optimum(t, big_r, r, c2);
        assert!(h.feasible);
        let (t0, v) = golden_max(|s| heuristic_exponent(s, t, big_r, r, c2), 1e-9, t, 1e-15);
        assert!((t0 - h.t0).abs() < 1e-6 * h.t0);
        assert!((v - h.exponent).abs() < 1e-6 * h.exponent.abs());
        assert!((heuristic_exponent(h.t0, t, big_r, r, c2) - h.exponent).abs() < 1e-9);
        let h2 = heuristic_optimum(t, big_r, r / 2.0, c2);
        let lead = |h: &HeuristicOptimum, r: f64| h.exponent + 2.0 * c2.sqrt() * big_r / r;
        assert!((lead(&h2, r / 2.0) / lead(&h, r) - 4.0).abs() < 1e-12);
    }
}
