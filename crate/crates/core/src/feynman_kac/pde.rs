//! Grid counterparts of the Feynman-Kac functionals: the semigroup e^{tA}1,
//! the Dirichlet problem (A - γ)u = 0 with u = 1 outside, three-level
//! Richardson extrapolation, and the residual of the mild-solution identity.

use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::point_process::Region;
use crate::spectral::{DiscretizedOperator, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extrapolation {
    pub value: f64,
    /// observed order p from the three levels (or the fallback)
    pub order: f64,
    /// |v_2 - v_1| / (2^p - 1), the size of the correction
    pub correction: f64,
    /// false when the differences do not shrink and the fallback order was used
    pub order_observed: bool,
}

/// Extrapolates v(h), v(h/2), v(h/4) assuming v(h) = v + C h^p with p
/// estimated from the ratio of successive differences; falls back to
/// `fallback_order` when that ratio is not above 1.
pub fn richardson3(v: [f64; 3], fallback_order: f64) -> Extrapolation {
    let (d1, d2) = (v[1] - v[0], v[2] - v[1]);
    let ratio = d1 / d2;
    let (order, observed) = if ratio.is_finite() && ratio > 1.0 { (ratio.log2(), true) } else { (fallback_order, false) };
    let f = 2f64.powf(order) - 1.0;
    Extrapolation { value: v[2] + d2 / f, order, correction: (d2 / f).abs(), order_observed: observed }
}

/// (e^{tA} 1)(node).
pub fn semigroup_value(op: &DiscretizedOperator, t: f64, node: usize) -> f64 {
    op.expmv(t, &vec![1.0; op.len()])[node]
}

/// Solution of (γ - A) u = c · (number of exterior neighbours), i.e. of
/// (½Δ_h + q - γ)u = 0 with u = 1 on the lattice exterior, at all interior nodes.
pub fn stopped_grid_solution(op: &DiscretizedOperator, gamma: f64, rel_tol: f64) -> Result<Vec<f64>> {
    let c = op.coupling();
    let b: Vec<f64> = op.exterior_neighbour_counts().into_iter().map(|k| c * k).collect();
    op.solve_shifted(gamma, &b, rel_tol, 50 * op.len().max(100))
}

pub fn stopped_grid_value(op: &DiscretizedOperator, gamma: f64, node: usize) -> Result<f64> {
    Ok(stopped_grid_solution(op, gamma, 1e-11)?[node])
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// E[(X - c)_+] for X ~ N(x, s²).
fn call(x: f64, c: f64, s: f64) -> f64 {
    let z = (x - c) / s;
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    s * pdf + (x - c) * normal_cdf(z)
}

/// ∫ hat_j(y) p_τ(x - y) dy for the 1-d hat of half-width h centred at y_j.
fn hat_gauss(x: f64, yj: f64, h: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        return (1.0 - (x - yj).abs() / h).max(0.0);
    }
    let s = tau.sqrt();
    if (x - yj).abs() > h + 40.0 * s {
        return 0.0;
    }
    (call(x, yj - h, s) - 2.0 * call(x, yj, s) + call(x, yj + h, s)) / h
}

/// Heat kernel used in the mild identity: free space, or the Dirichlet kernel
/// of an axis-parallel box (a product of 1-d image sums).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum HeatKernel {
    Free,
    DirichletBox { lo: Vec<f64>, hi: Vec<f64> },
}

const IMAGES: i32 = 4;

impl HeatKernel {
    /// The Dirichlet kernel for box domains, the free kernel otherwise.
    pub fn for_domain(domain: &Domain) -> Self {
        match domain {
            Domain::Region(Region::Box { center, half_width }) => HeatKernel::DirichletBox {
                lo: center.iter().map(|c| c - half_width).collect(),
                hi: center.iter().map(|c| c + half_width).collect(),
            },
            _ => HeatKernel::Free,
        }
    }

    /// ∫ hat_j(y) p_τ(x, y) dy along one axis.
    fn hat(&self, axis: usize, x: f64, yj: f64, h: f64, tau: f64) -> f64 {
        match self {
            HeatKernel::Free => hat_gauss(x, yj, h, tau),
            HeatKernel::DirichletBox { lo, hi } => {
                let (a, b) = (lo[axis], hi[axis]);
                let period = 2.0 * (b - a);
                let mirror = 2.0 * b - yj;
                (-IMAGES..=IMAGES)
                    .map(|k| {
                        let shift = k as f64 * period;
                        hat_gauss(x, yj + shift, h, tau) - hat_gauss(x, mirror + shift, h, tau)
                    })
                    .sum()
            }
        }
    }

    /// ∫ p_τ(x, y) dy along one axis: 1 in free space, the survival probability in the box.
    fn mass(&self, axis: usize, x: f64, tau: f64) -> f64 {
        match self {
            HeatKernel::Free => 1.0,
            HeatKernel::DirichletBox { lo, hi } => {
                if tau <= 0.0 {
                    return if x > lo[axis] && x < hi[axis] { 1.0 } else { 0.0 };
                }
                let (a, b) = (lo[axis], hi[axis]);
                let s = tau.sqrt();
                let period = 2.0 * (b - a);
                // p(x - y) integrated over y in (a, b), and its mirror image in b
                let direct = |c: f64| normal_cdf((x - c - a) / s) - normal_cdf((x - c - b) / s);
                let mirrored = |c: f64| normal_cdf((x - c - (2.0 * b - a)) / s) - normal_cdf((x - c - b) / s);
                (-IMAGES..=IMAGES)
                    .map(|k| {
                        let c = k as f64 * period;
                        direct(c) + mirrored(c)
                    })
                    .sum()
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MildResidual {
    pub t: f64,
    pub n_time: usize,
    /// max over the evaluation nodes of |u(t,x) - P_t1(x) - ∫∫ p_{t-s}(x,y) q(y) u(s,y) dy ds|
    pub max: f64,
    pub per_node: Vec<f64>,
}

/// Residual of the mild-solution identity with u_0 = 1 for u(s) = e^{sA}1 on
/// the grid. The space integral treats q·u(s) as the multilinear interpolant
/// of its node values (zero outside the mask), convolved exactly with the
/// heat kernel; the time integral is the trapezoid rule on n_time steps.
pub fn mild_solution_residual(
    op: &DiscretizedOperator,
    kernel: &HeatKernel,
    t: f64,
    eval_nodes: &[usize],
    n_time: usize,
) -> Result<MildResidual> {
    if n_time == 0 || !(t > 0.0) {
        return Err(Error::InvalidConfig("need t > 0 and at least one time step".into()));
    }
    let n = op.len();
    if eval_nodes.iter().any(|&i| i >= n) {
        return Err(Error::InvalidInput("evaluation node outside the mask".into()));
    }
    let d = op.dim();
    if let HeatKernel::DirichletBox { lo, hi } = kernel {
        if lo.len() != d || hi.len() != d || lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidConfig("box kernel needs d ordered bounds".into()));
        }
    }
    let h = op.h();
    let shape = op.grid.shape();
    let idx = op.node_indices();
    let coords = op.node_coords();
    let dt = t / n_time as f64;
    // u at s_j = j dt
    let mut u = vec![1.0; n];
    let mut qu_hist: Vec<Vec<f64>> = Vec::with_capacity(n_time + 1);
    for j in 0..=n_time {
        if j > 0 {
            u = op.expmv(dt, &u);
        }
        qu_hist.push(u.iter().zip(&op.potential).map(|(a, q)| a * q).collect());
    }
    let mut per_node = Vec::with_capacity(eval_nodes.len());
    let mut weights = vec![vec![0.0; 0]; d];
    for &e in eval_nodes {
        let x = &coords[e];
        let mut integral = 0.0;
        for (j, qu) in qu_hist.iter().enumerate() {
            let tau = t - j as f64 * dt;
            for a in 0..d {
                weights[a] = (0..shape[a]).map(|k| kernel.hat(a, x[a], op.grid.coord(a, k), h, tau)).collect();
            }
            let mut conv = 0.0;
            for (node, v) in idx.iter().zip(qu) {
                let mut w = *v;
                for a in 0..d {
                    w *= weights[a][node[a]];
                }
                conv += w;
            }
            let tw = if j == 0 || j == n_time { 0.5 } else { 1.0 };
            integral += tw * dt * conv;
        }
        let free_part: f64 = (0..d).map(|a| kernel.mass(a, x[a], t)).product();
        per_node.push((u[e] - free_part - integral).abs());
    }
    let max = per_node.iter().copied().fold(0.0, f64::max);
    Ok(MildResidual { t, n_time, max, per_node })
}

/// Halves the time step from `n0` steps until the residual moves by less than
/// `tol` (at most `halvings` times); returns every level.
pub fn mild_residual_converged(
    op: &DiscretizedOperator,
    kernel: &HeatKernel,
    t: f64,
    eval_nodes: &[usize],
    n0: usize,
    tol: f64,
    halvings: usize,
) -> Result<Vec<MildResidual>> {
    let mut out = vec![mild_solution_residual(op, kernel, t, eval_nodes, n0)?];
    let mut n = n0;
    for _ in 0..halvings {
        n *= 2;
        let r = mild_solution_residual(op, kernel, t, eval_nodes, n)?;
        let done = (r.max - out.last().unwrap().max).abs() < tol;
        out.push(r);
        if done {
            break;
        }
    }
    Ok(out)
}
