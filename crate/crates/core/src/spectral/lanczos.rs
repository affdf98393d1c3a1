//! Top eigenpair of a large symmetric operator by plain Lanczos (no
//! reorthogonalisation) with Sturm bisection on the tridiagonal matrix. The
//! eigenvector, when requested, is rebuilt by replaying the recurrence.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct EigenResult {
    pub lambda: f64,
    pub iterations: usize,
    /// ‖(A - λ)v‖₂ for the unit Ritz vector (estimated as β_k |s_k| when no vector is built)
    pub residual: f64,
    /// a posteriori bound on |λ - λ_true|, min(res, res²/gap)
    pub error_bound: f64,
    #[serde(skip)]
    pub eigenvector: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct LanczosOptions {
    /// relative eigenvalue tolerance, scaled by max(1, |λ|)
    pub tol: f64,
    pub max_iter: usize,
    pub want_vector: bool,
    pub start: Option<Vec<f64>>,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 20_000, want_vector: false, start: None }
    }
}

/// Number of eigenvalues of the tridiagonal (alpha, beta) strictly below x.
pub fn sturm_count_below(alpha: &[f64], beta: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..alpha.len() {
        let b2 = if i == 0 { 0.0 } else { beta[i - 1] * beta[i - 1] };
        d = alpha[i] - x - if i == 0 { 0.0 } else { b2 / d };
        if d == 0.0 {
            d = -1e-300;
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

fn gershgorin(alpha: &[f64], beta: &[f64]) -> (f64, f64) {
    let n = alpha.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let off = if i > 0 { beta[i - 1].abs() } else { 0.0 } + if i + 1 < n { beta[i].abs() } else { 0.0 };
        lo = lo.min(alpha[i] - off);
        hi = hi.max(alpha[i] + off);
    }
    (lo, hi)
}

/// The k-th largest eigenvalue (k = 1 is the top) by bisection.
pub fn tridiagonal_eigenvalue(alpha: &[f64], beta: &[f64], k: usize) -> f64 {
    let n = alpha.len();
    let (mut lo, mut hi) = gershgorin(alpha, beta);
    // want the point where the count of eigenvalues below x reaches n - k + 1
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if sturm_count_below(alpha, beta, mid) > n - k {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 2.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(1e-300) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Unit eigenvector of the tridiagonal matrix for an eigenvalue approximation
/// `theta` at the top of the spectrum, by inverse iteration on T - (theta + δ)I.
pub fn tridiagonal_top_vector(alpha: &[f64], beta: &[f64], theta: f64) -> Vec<f64> {
    let n = alpha.len();
    let (lo, hi) = gershgorin(alpha, beta);
    let shift = theta + 1e-10 * (hi - lo).max(1e-300);
    let mut s = vec![1.0; n];
    for _ in 0..3 {
        // Thomas algorithm for (T - shift) y = s; the matrix is negative definite
        let mut c = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut denom = alpha[0] - shift;
        c[0] = if n > 1 { beta[0] / denom } else { 0.0 };
        y[0] = s[0] / denom;
        for i in 1..n {
            denom = alpha[i] - shift - beta[i - 1] * c[i - 1];
            if i + 1 < n {
                c[i] = beta[i] / denom;
            }
            y[i] = (s[i] - beta[i - 1] * y[i - 1]) / denom;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            y[i] -= c[i] * y[i + 1];
        }
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        s = y.into_iter().map(|v| v / norm).collect();
    }
    if s[0] < 0.0 {
        s.iter_mut().for_each(|v| *v = -*v);
    }
    s
}

fn normalise(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

struct Recurrence<'a, F: Fn(&[f64], &mut [f64])> {
    apply: &'a F,
    prev: Vec<f64>,
    cur: Vec<f64>,
    work: Vec<f64>,
    beta_prev: f64,
}

impl<'a, F: Fn(&[f64], &mut [f64])> Recurrence<'a, F> {
    fn new(apply: &'a F, start: Vec<f64>) -> Self {
        let n = start.len();
        Self { apply, prev: vec![0.0; n], cur: start, work: vec![0.0; n], beta_prev: 0.0 }
    }

    /// One step; returns (alpha_j, beta_j) and advances to q_{j+1}.
    fn step(&mut self) -> (f64, f64) {
        (self.apply)(&self.cur, &mut self.work);
        let alpha: f64 = self.work.iter().zip(&self.cur).map(|(a, b)| a * b).sum();
        let bp = self.beta_prev;
        let mut nn = 0.0;
        for ((w, c), p) in self.work.iter_mut().zip(&self.cur).zip(&self.prev) {
            *w -= alpha * c + bp * p;
            nn += *w * *w;
        }
        let beta = nn.sqrt();
        std::mem::swap(&mut self.prev, &mut self.cur);
        std::mem::swap(&mut self.cur, &mut self.work);
        if beta > 0.0 {
            self.cur.iter_mut().for_each(|x| *x /= beta);
        }
        self.beta_prev = beta;
        (alpha, beta)
    }
}

pub fn lanczos_top<F: Fn(&[f64], &mut [f64])>(apply: &F, n: usize, opts: &LanczosOptions) -> Result<EigenResult> {
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let mut start = match &opts.start {
        Some(s) if s.len() == n => s.clone(),
        Some(_) => return Err(Error::InvalidInput("start vector has the wrong length".into())),
        None => vec![1.0; n],
    };
    if normalise(&mut start) == 0.0 {
        start = vec![1.0; n];
        normalise(&mut start);
    }
    let mut rec = Recurrence::new(apply, start.clone());
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    let mut last_theta = f64::NAN;
    let mut outcome = None;
    let check_every = 10;
    for it in 1..=opts.max_iter.max(1) {
        let (a, b) = rec.step();
        alpha.push(a);
        beta.push(b);
        let breakdown = b <= 1e-14 * a.abs().max(1e-300);
        if it % check_every != 0 && !breakdown && it != opts.max_iter && it > 2 {
            continue;
        }
        let k = alpha.len();
        let theta = tridiagonal_eigenvalue(&alpha, &beta[..k - 1], 1);
        let s = tridiagonal_top_vector(&alpha, &beta[..k - 1], theta);
        let res = b * s[k - 1].abs();
        let (lo, hi) = gershgorin(&alpha, &beta[..k - 1]);
        let sep = 1e-9 * (hi - lo).max(1e-300);
        let above = k - sturm_count_below(&alpha, &beta[..k - 1], theta - sep);
        let gap = if above < k { theta - tridiagonal_eigenvalue(&alpha, &beta[..k - 1], above + 1) } else { f64::INFINITY };
        let bound = res.min(res * res / gap);
        let scale = theta.abs().max(1.0);
        let stable = (theta - last_theta).abs() <= opts.tol * scale;
        last_theta = theta;
        if breakdown || (bound <= opts.tol * scale && stable) {
            outcome = Some((theta, s, res, bound, it));
            break;
        }
    }
    let Some((theta, s, res, bound, iterations)) = outcome else {
        return Err(Error::NoConvergence { iterations: opts.max_iter, residual: f64::NAN });
    };
    let mut result = EigenResult { lambda: theta, iterations, residual: res, error_bound: bound, eigenvector: None };
    if opts.want_vector {
        let mut rec = Recurrence::new(apply, start);
        let mut x = vec![0.0; n];
        for &sj in &s {
            for (xi, qi) in x.iter_mut().zip(&rec.cur) {
                *xi += sj * qi;
            }
            rec.step();
        }
        normalise(&mut x);
        if x.iter().sum::<f64>() < 0.0 {
            x.iter_mut().for_each(|v| *v = -*v);
        }
        let mut ax = vec![0.0; n];
        apply(&x, &mut ax);
        result.residual = ax.iter().zip(&x).map(|(a, v)| (a - theta * v).powi(2)).sum::<f64>().sqrt();
        result.eigenvector = Some(x);
    }
    Ok(result)
}
