//! Intersection tests for families of open balls, optionally restricted to a
//! box or a ball. The test minimises the convex power function
//! `max_j |x - p_j|^2 - w_j`; the intersection is non-empty iff the minimum is
//! negative. The minimiser is found by enumerating candidate supports and
//! checking the KKT conditions, which are sufficient by convexity.

use crate::point_process::Region;

const EPS: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct PowerMin {
    pub value: f64,
    pub x: Vec<f64>,
}

fn solve_small(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-13 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

fn subsets_up_to(n: usize, max: usize, mut f: impl FnMut(&[usize]) -> bool) {
    fn rec(start: usize, n: usize, max: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
        if !cur.is_empty() && f(cur) {
            return true;
        }
        if cur.len() == max {
            return false;
        }
        for i in start..n {
            cur.push(i);
            if rec(i + 1, n, max, cur, f) {
                return true;
            }
            cur.pop();
        }
        false
    }
    let mut cur = Vec::new();
    rec(0, n, max, &mut cur, &mut f);
}

/// Unconstrained minimiser of max_j |x - p_j|^2 - w_j in the space spanned by the
/// coordinates of `points` (all of equal length).
pub fn min_max_power(points: &[Vec<f64>], weights: &[f64]) -> Option<PowerMin> {
    min_max_power_with_multipliers(points, weights).map(|(m, _)| m)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Minimiser of max_j |x - p_j|^2 - w_j over the closed box [lo, hi].
pub fn min_max_power_in_box(points: &[Vec<f64>], weights: &[f64], lo: &[f64], hi: &[f64]) -> Option<PowerMin> {
    let d = lo.len();
    let scale = 1.0 + points.iter().flatten().map(|v| v * v).sum::<f64>();
    // pin pattern per coordinate: 0 free, 1 lower face, 2 upper face
    let total = 3usize.pow(d as u32);
    for code in 0..total {
        let mut pins = vec![0u8; d];
        let mut c = code;
        for p in pins.iter_mut() {
            *p = (c % 3) as u8;
            c /= 3;
        }
        let free: Vec<usize> = (0..d).filter(|&i| pins[i] == 0).collect();
        let proj: Vec<Vec<f64>> = points.iter().map(|p| free.iter().map(|&i| p[i]).collect()).collect();
        let w: Vec<f64> = points
            .iter()
            .zip(weights)
            .map(|(p, &w)| {
                let mut w = w;
                for i in 0..d {
                    let v = match pins[i] {
                        1 => lo[i],
                        2 => hi[i],
                        _ => continue,
                    };
                    w -= (v - p[i]) * (v - p[i]);
                }
                w
            })
            .collect();
        let Some(sol) = min_max_power_with_multipliers(&proj, &w) else { continue };
        let mut x = vec![0.0; d];
        for (k, &i) in free.iter().enumerate() {
            x[i] = sol.0.x[k];
        }
        for i in 0..d {
            match pins[i] {
                1 => x[i] = lo[i],
                2 => x[i] = hi[i],
                _ => {}
            }
        }
        let tol = EPS * scale.sqrt();
        if (0..d).any(|i| x[i] < lo[i] - tol || x[i] > hi[i] + tol) {
            continue;
        }
        // sign of the subgradient along pinned coordinates must point out of the box
        let mut kkt = true;
        for i in 0..d {
            if pins[i] == 0 {
                continue;
            }
            let g: f64 = sol.1.iter().map(|&(j, mu)| mu * (x[i] - points[j][i])).sum();
            if (pins[i] == 1 && g < -tol) || (pins[i] == 2 && g > tol) {
                kkt = false;
                break;
            }
        }
        if kkt {
            let value = points
                .iter()
                .zip(weights)
                .map(|(p, w)| dist2(&x, p) - w)
                .fold(f64::NEG_INFINITY, f64::max);
            return Some(PowerMin { value, x });
        }
    }
    None
}

/// Like `min_max_power` but also returns the support with its convex weights.
fn min_max_power_with_multipliers(points: &[Vec<f64>], weights: &[f64]) -> Option<(PowerMin, Vec<(usize, f64)>)> {
    let n = points.len();
    let dim = points.first().map_or(0, |p| p.len());
    let scale = 1.0 + points.iter().flatten().map(|v| v * v).sum::<f64>() + weights.iter().map(|w| w.abs()).sum::<f64>();
    let mut out = None;
    subsets_up_to(n, dim + 1, |support| {
        let p0 = &points[support[0]];
        let m = support.len() - 1;
        let e: Vec<Vec<f64>> =
            support[1..].iter().map(|&j| points[j].iter().zip(p0).map(|(a, b)| a - b).collect()).collect();
        let mut mu_rest = vec![];
        if m > 0 {
            let mut a: Vec<Vec<f64>> = (0..m).map(|j| (0..m).map(|i| 2.0 * dot(&e[i], &e[j])).collect()).collect();
            let mut b: Vec<f64> =
                (0..m).map(|j| dot(&e[j], &e[j]) - weights[support[j + 1]] + weights[support[0]]).collect();
            match solve_small(&mut a, &mut b) {
                Some(s) => mu_rest = s,
                None => return false,
            }
        }
        let mu0 = 1.0 - mu_rest.iter().sum::<f64>();
        if mu0 < -EPS || mu_rest.iter().any(|&m| m < -EPS) {
            return false;
        }
        let mut x = p0.clone();
        for (mi, ei) in mu_rest.iter().zip(&e) {
            for (xk, ek) in x.iter_mut().zip(ei) {
                *xk += mi * ek;
            }
        }
        let value = dist2(&x, p0) - weights[support[0]];
        if points.iter().zip(weights).all(|(p, w)| dist2(&x, p) - w <= value + EPS * scale) {
            let mut mult = vec![(support[0], mu0.max(0.0))];
            mult.extend(support[1..].iter().zip(&mu_rest).map(|(&j, &m)| (j, m.max(0.0))));
            out = Some((PowerMin { value, x }, mult));
            return true;
        }
        false
    });
    out
}

/// Outcome of asking whether some open ball of radius `r` centred in a region
/// contains all the given points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fit {
    Yes,
    No,
    Unknown,
}

pub fn cluster_fits(points: &[Vec<f64>], r: f64, region: &Region) -> Fit {
    if points.is_empty() {
        return Fit::Yes;
    }
    let r2 = r * r;
    let res = match region {
        Region::Ball { center, radius } => {
            let mut pts = points.to_vec();
            let mut w = vec![r2; points.len()];
            pts.push(center.clone());
            w.push(radius * radius);
            min_max_power(&pts, &w).map(|m| m.value < 0.0)
        }
        Region::Box { center, half_width } => {
            let lo: Vec<f64> = center.iter().map(|c| c - half_width).collect();
            let hi: Vec<f64> = center.iter().map(|c| c + half_width).collect();
            let w = vec![r2; points.len()];
            min_max_power_in_box(points, &w, &lo, &hi).map(|m| m.value < 0.0)
        }
    };
    match res {
        Some(true) => Fit::Yes,
        Some(false) => Fit::No,
        None => Fit::Unknown,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_min_box(points: &[Vec<f64>], lo: &[f64], hi: &[f64], n: usize) -> f64 {
        let d = lo.len();
        let mut best = f64::INFINITY;
        let mut idx = vec![0usize; d];
        loop {
            let x: Vec<f64> = (0..d).map(|i| lo[i] + (hi[i] - lo[i]) * idx[i] as f64 / n as f64).collect();
            let v = points.iter().map(|p| dist2(&x, p)).fold(f64::NEG_INFINITY, f64::max);
            best = best.min(v);
            let mut k = 0;
            while k < d {
                idx[k] += 1;
                if idx[k] <= n {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == d {
                break;
            }
        }
        best
    }

    #[test]
    fn two_point_enclosing_ball() {
        let pts = vec![vec![0.0, 0.0, 0.0], vec![2.0, 0.0, 0.0]];
        let m = min_max_power(&pts, &[0.0, 0.0]).unwrap();
        assert!((m.value - 1.0).abs() < 1e-12);
        assert!((m.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equilateral_triangle_circumradius() {
        let s3 = 3f64.sqrt();
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, s3 / 2.0]];
        let m = min_max_power(&pts, &[0.0; 3]).unwrap();
        assert!((m.value - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn box_constraint_matches_brute_force() {
        let pts = vec![vec![0.3, 0.9], vec![1.4, 1.2], vec![0.8, 2.0]];
        let lo = [0.0, 0.0];
        let hi = [1.0, 1.0];
        let m = min_max_power_in_box(&pts, &[0.0; 3], &lo, &hi).unwrap();
        let b = brute_min_box(&pts, &lo, &hi, 400);
        assert!(m.value <= b + 1e-12 && b - m.value < 1e-2, "{} {}", m.value, b);
    }

    #[test]
    fn fits_respects_region() {
        let pts = vec![vec![3.0, 0.0, 0.0], vec![3.5, 0.0, 0.0]];
        let near = Region::Ball { center: vec![0.0; 3], radius: 2.9 };
        assert_eq!(cluster_fits(&pts, 0.5, &near), Fit::No);
        let far = Region::Ball { center: vec![0.0; 3], radius: 2.8 };
        assert_eq!(cluster_fits(&pts, 0.8, &far), Fit::Yes);
        let bx = Region::Box { center: vec![0.0; 3], half_width: 2.6 };
        assert_eq!(cluster_fits(&pts, 0.95, &bx), Fit::Yes);
        assert_eq!(cluster_fits(&pts, 0.85, &bx), Fit::No);
    }
}
