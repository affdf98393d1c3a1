//! Radial finite-volume solver for ½Δ + q(|x|) on a ball with Dirichlet data,
//! for radially symmetric potentials. Cells are graded geometrically towards
//! the origin and the potential enters through exact cell averages, computed
//! from its radial primitive P(r) = ∫_0^r q(s) s^{d-1} ds.

use serde::Serialize;

use super::lanczos::{tridiagonal_eigenvalue, tridiagonal_top_vector};
use crate::error::{Error, Result};
use crate::num::sphere_area;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RadialPotential {
    /// min(theta / r^2, cap)
    CappedPole { theta: f64, cap: f64 },
    /// strength on the unit ball, strength / r^2 outside
    Flattened { strength: f64 },
    Zero,
}

impl RadialPotential {
    /// ∫_0^r q(s) s^{d-1} ds.
    pub fn primitive(&self, r: f64, d: usize) -> f64 {
        let df = d as f64;
        match *self {
            RadialPotential::Zero => 0.0,
            RadialPotential::CappedPole { theta, cap } => {
                let rc = (theta / cap).sqrt();
                let inner = cap * r.min(rc).powf(df) / df;
                if r <= rc {
                    inner
                } else {
                    inner + theta * radial_power_integral(rc, r, d)
                }
            }
            RadialPotential::Flattened { strength } => {
                let inner = strength * r.min(1.0).powf(df) / df;
                if r <= 1.0 {
                    inner
                } else {
                    inner + strength * radial_power_integral(1.0, r, d)
                }
            }
        }
    }
}

/// ∫_a^b s^{d-3} ds.
fn radial_power_integral(a: f64, b: f64, d: usize) -> f64 {
    if d == 2 {
        (b / a).ln()
    } else {
        let p = d as f64 - 2.0;
        (b.powf(p) - a.powf(p)) / p
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RadialEigen {
    pub lambda: f64,
    /// node radii (the last node, r = R, carries the Dirichlet condition and is excluded)
    pub radii: Vec<f64>,
    /// radial profile at the nodes, normalised so that ∫ u² dx = 1 over the ball
    pub profile: Vec<f64>,
    /// cell volumes (including the sphere area) matching `profile`
    pub weights: Vec<f64>,
}

impl RadialEigen {
    /// ∫ |u| dx over the ball.
    pub fn l1_norm(&self) -> f64 {
        self.profile.iter().zip(&self.weights).map(|(u, w)| u.abs() * w).sum()
    }
}

/// Principal Dirichlet eigenpair of ½Δ + q on B_R in dimension d, with `cells`
/// geometric cells from r_min to R plus a centre cell.
pub fn radial_lambda_max(d: usize, radius: f64, q: RadialPotential, cells: usize, r_min: f64) -> Result<RadialEigen> {
    if d < 2 || !(radius > r_min) || !(r_min > 0.0) || cells < 4 {
        return Err(Error::InvalidConfig(format!("radial grid d={d}, R={radius}, r_min={r_min}, cells={cells}")));
    }
    let ratio = (radius / r_min).powf(1.0 / (cells - 1) as f64);
    let mut r = vec![0.0];
    r.extend((0..cells).map(|i| r_min * ratio.powi(i as i32)));
    *r.last_mut().unwrap() = radius;
    let n = r.len() - 1;
    let df = d as f64;
    let mut faces = vec![0.0];
    faces.extend(r.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    let vol: Vec<f64> = (0..n).map(|i| (faces[i + 1].powf(df) - faces[i].powf(df)) / df).collect();
    let pot: Vec<f64> = (0..n).map(|i| (q.primitive(faces[i + 1], d) - q.primitive(faces[i], d)) / vol[i]).collect();
    // flux coefficient between nodes i and i+1
    let k: Vec<f64> = (0..n).map(|i| faces[i + 1].powf(df - 1.0) / (r[i + 1] - r[i])).collect();
    let diag: Vec<f64> = (0..n)
        .map(|i| -0.5 * (k[i] + if i > 0 { k[i - 1] } else { 0.0 }) / vol[i] + pot[i])
        .collect();
    let off: Vec<f64> = (0..n - 1).map(|i| 0.5 * k[i] / (vol[i] * vol[i + 1]).sqrt()).collect();
    let lambda = tridiagonal_eigenvalue(&diag, &off, 1);
    let s = tridiagonal_top_vector(&diag, &off, lambda);
    // s is the symmetrised vector sqrt(vol) u; restore u and include the sphere area
    let area = sphere_area(d);
    let weights: Vec<f64> = vol.iter().map(|v| v * area).collect();
    let mut profile: Vec<f64> = s.iter().zip(&vol).map(|(si, v)| si / v.sqrt()).collect();
    let norm = profile.iter().zip(&weights).map(|(u, w)| u * u * w).sum::<f64>().sqrt();
    profile.iter_mut().for_each(|u| *u /= norm);
    Ok(RadialEigen { lambda, radii: r[..n].to_vec(), profile, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn free_ball_eigenvalue() {
        let e = radial_lambda_max(3, 1.0, RadialPotential::Zero, 2000, 1e-4).unwrap();
        assert!((e.lambda + PI * PI / 2.0).abs() < 5e-3, "{}", e.lambda);
        let e = radial_lambda_max(3, 64.0, RadialPotential::Zero, 3000, 1e-5).unwrap();
        let want = -PI * PI / (2.0 * 64.0 * 64.0);
        assert!((e.lambda - want).abs() / want.abs() < 1e-3);
        // d = 5: first zero of J_{3/2} is 4.4934...
        let e = radial_lambda_max(5, 1.0, RadialPotential::Zero, 3000, 1e-4).unwrap();
        let j = 4.493409457909064;
        assert!((e.lambda + j * j / 2.0).abs() < 5e-3, "{}", e.lambda);
    }

    #[test]
    fn constant_shift_and_normalisation() {
        let a = radial_lambda_max(3, 2.0, RadialPotential::Zero, 500, 1e-4).unwrap();
        let b = radial_lambda_max(3, 2.0, RadialPotential::Flattened { strength: 0.0 }, 500, 1e-4).unwrap();
        assert_eq!(a.lambda, b.lambda);
        let l2: f64 = a.profile.iter().zip(&a.weights).map(|(u, w)| u * u * w).sum();
        assert!((l2 - 1.0).abs() < 1e-12);
        assert!(a.profile.iter().all(|&u| u > 0.0));
    }

    #[test]
    fn primitive_matches_quadrature() {
        let q = RadialPotential::CappedPole { theta: 0.125, cap: 100.0 };
        let f = |s: f64| (0.125 / (s * s)).min(100.0) * s * s;
        let num = crate::num::integrate_gl(f, 0.0, 0.5, 400, 8);
        assert!((q.primitive(0.5, 3) - num).abs() < 1e-8);
        let q = RadialPotential::Flattened { strength: 2.0 };
        let num = crate::num::integrate_gl(|s: f64| if s <= 1.0 { 2.0 * s * s * s } else { 2.0 * s }, 0.0, 3.0, 300, 8);
        assert!((q.primitive(3.0, 4) - num).abs() < 1e-6);
    }
}
