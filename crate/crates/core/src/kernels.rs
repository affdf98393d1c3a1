//! Potential kernels, Poisson potentials, the finite-box renormalised
//! potential in d = 3 and truncation errors.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{dist2, integrate_adaptive, sphere_area};
use crate::point_process::{PointCloud, Region};

/// Distance below which a point counts as sitting on a pole.
pub const POLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum KernelVariant {
    /// |x|^{-2} on the closed ball of radius a, zero outside.
    Truncated { a: f64 },
    /// |x|^{-2} min(1, (a/|x|)^decay_power).
    SmoothAttenuated { a: f64, decay_power: f64 },
    /// Compensated inverse-square potential truncated to a box (d = 3 only).
    RenormApprox { a: f64, box_radius: f64, quadrature_step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub dim: usize,
    pub variant: KernelVariant,
}

impl KernelSpec {
    pub fn truncated(dim: usize, a: f64) -> Result<Self> {
        Self::new(dim, KernelVariant::Truncated { a })
    }

    pub fn attenuated(dim: usize, a: f64, decay_power: f64) -> Result<Self> {
        Self::new(dim, KernelVariant::SmoothAttenuated { a, decay_power })
    }

    pub fn renorm(a: f64, box_radius: f64, quadrature_step: f64) -> Result<Self> {
        Self::new(3, KernelVariant::RenormApprox { a, box_radius, quadrature_step })
    }

    pub fn new(dim: usize, variant: KernelVariant) -> Result<Self> {
        if dim < 3 {
            return Err(Error::InvalidConfig(format!("kernels need d >= 3, got {dim}")));
        }
        let ok = |v: f64| v.is_finite() && v > 0.0;
        match variant {
            KernelVariant::Truncated { a } if !ok(a) => {
                return Err(Error::InvalidConfig(format!("truncation radius {a}")))
            }
            KernelVariant::SmoothAttenuated { a, decay_power } => {
                if !ok(a) || !(decay_power > dim as f64) || !decay_power.is_finite() {
                    return Err(Error::InvalidConfig(format!(
                        "attenuated kernel needs a > 0 and decay_power > d (a={a}, p={decay_power})"
                    )));
                }
            }
            KernelVariant::RenormApprox { a, box_radius, quadrature_step } => {
                if dim != 3 {
                    return Err(Error::InvalidConfig("renormalised kernel is defined for d = 3 only".into()));
                }
                if !ok(a) || !ok(quadrature_step) {
                    return Err(Error::InvalidConfig(format!("a={a}, quadrature_step={quadrature_step}")));
                }
                if !(box_radius >= 3.0 * a) {
                    return Err(Error::InvalidConfig(format!("box_radius {box_radius} < 3a = {}", 3.0 * a)));
                }
            }
            _ => {}
        }
        Ok(Self { dim, variant })
    }

    /// The kernel's length scale a.
    pub fn scale(&self) -> f64 {
        match self.variant {
            KernelVariant::Truncated { a }
            | KernelVariant::SmoothAttenuated { a, .. }
            | KernelVariant::RenormApprox { a, .. } => a,
        }
    }

    /// Radial profile k(|x|) for the two pointwise kernels. For the renormalised
    /// descriptor this is the bare pole term |x|^{-2}.
    pub fn profile(&self, r: f64) -> f64 {
        let inv = 1.0 / (r * r);
        match self.variant {
            KernelVariant::Truncated { a } => {
                if r <= a {
                    inv
                } else {
                    0.0
                }
            }
            KernelVariant::SmoothAttenuated { a, decay_power } => {
                if r <= a {
                    inv
                } else {
                    inv * (a / r).powf(decay_power)
                }
            }
            KernelVariant::RenormApprox { .. } => inv,
        }
    }

    /// Radius beyond which the profile vanishes (infinite if it never does).
    pub fn support_radius(&self) -> f64 {
        match self.variant {
            KernelVariant::Truncated { a } => a,
            _ => f64::INFINITY,
        }
    }

    /// Parses `truncated:a=A`, `atten:a=A,p=P`, `renorm:a=A,box=B[,step=S]`.
    pub fn parse(s: &str, dim: usize) -> Result<Self> {
        let (kind, args) = s.split_once(':').unwrap_or((s, ""));
        let mut a = None;
        let mut p = None;
        let mut bx = None;
        let mut step = None;
        for kv in args.split(',').filter(|t| !t.trim().is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse(format!("kernel argument '{kv}'")))?;
            let v: f64 = v.trim().parse().map_err(|_| Error::Parse(format!("kernel value '{v}'")))?;
            match k.trim() {
                "a" => a = Some(v),
                "p" => p = Some(v),
                "box" => bx = Some(v),
                "step" => step = Some(v),
                other => return Err(Error::Parse(format!("kernel key '{other}'"))),
            }
        }
        let need = |o: Option<f64>, name: &str| o.ok_or_else(|| Error::Parse(format!("kernel '{kind}' needs {name}")));
        match kind.trim() {
            "truncated" => Self::truncated(dim, need(a, "a")?),
            "atten" => Self::attenuated(dim, need(a, "a")?, need(p, "p")?),
            "renorm" => {
                let a = need(a, "a")?;
                Self::renorm(a, need(bx, "box")?, step.unwrap_or(a / 20.0))
            }
            other => Err(Error::Parse(format!("unknown kernel '{other}'"))),
        }
    }
}

/// Quintic smoothstep cutoff: 1 on [0,1], 0 on [3, inf), C^2 in between.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AlphaCutoff;

impl AlphaCutoff {
    pub fn eval(&self, s: f64) -> f64 {
        if s <= 1.0 {
            1.0
        } else if s >= 3.0 {
            0.0
        } else {
            let u = (s - 1.0) / 2.0;
            1.0 - u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        if s <= 1.0 || s >= 3.0 {
            0.0
        } else {
            let u = (s - 1.0) / 2.0;
            -15.0 * u * u * (1.0 - u) * (1.0 - u)
        }
    }

    /// Integral of the profile over [0, inf): 1 + 2 * (1 - 1/2).
    pub fn integral(&self) -> f64 {
        2.0
    }
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64]) -> Result<f64> {
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r == 0.0 {
        return Err(Error::Singularity);
    }
    Ok(spec.profile(r))
}

/// Sum over the cloud of the kernel; renormalised kernels go through `renorm_eval`.
pub fn potential_eval(cloud: &PointCloud, spec: &KernelSpec, x: &[f64]) -> Result<f64> {
    if let KernelVariant::RenormApprox { .. } = spec.variant {
        return renorm_eval(cloud, x, spec, &AlphaCutoff).map(|v| v.value);
    }
    let cut = spec.support_radius();
    let cut2 = cut * cut;
    let mut total = 0.0;
    for p in cloud.points() {
        let r2 = dist2(p, x);
        if r2 < POLE_TOL * POLE_TOL {
            return Err(Error::OnPole(r2.sqrt()));
        }
        if r2 <= cut2 {
            total += spec.profile(r2.sqrt());
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RenormValue {
    pub value: f64,
    pub near_field: f64,
    pub far_field: f64,
    pub box_radius: f64,
    /// standard deviation of the omitted compensated tail, sqrt(4 pi / box_radius)
    pub tail_std: f64,
}

/// Midpoint quadrature of (1 - alpha(|z|/a))/|z|^2 over the cube [-B, B]^3.
pub fn far_field_compensator(a: f64, box_radius: f64, step: f64, cutoff: &AlphaCutoff) -> f64 {
    let n = (box_radius / step).ceil() as usize;
    let h = box_radius / n as f64;
    let mid: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
    let mut total = 0.0;
    // the integrand is symmetric under coordinate permutations and sign flips:
    // sum over i >= j >= k with multiplicities
    for i in 0..n {
        for j in 0..=i {
            let mut row = 0.0;
            for k in 0..=j {
                let r2 = mid[i] * mid[i] + mid[j] * mid[j] + mid[k] * mid[k];
                let w = 1.0 - cutoff.eval(r2.sqrt() / a);
                if w == 0.0 {
                    continue;
                }
                let mult = match (i == j, j == k) {
                    (true, true) => 1.0,
                    (false, false) => 6.0,
                    _ => 3.0,
                };
                row += mult * w / r2;
            }
            total += row;
        }
    }
    8.0 * total * h * h * h
}

pub fn renorm_eval(cloud_in_box: &PointCloud, x: &[f64], spec: &KernelSpec, cutoff: &AlphaCutoff) -> Result<RenormValue> {
    let KernelVariant::RenormApprox { a, box_radius, quadrature_step } = spec.variant else {
        return Err(Error::InvalidConfig("renorm_eval needs a RenormApprox kernel".into()));
    };
    if x.len() != 3 || cloud_in_box.dim() != 3 {
        return Err(Error::InvalidConfig("renormalised potential is defined for d = 3 only".into()));
    }
    if box_radius < 3.0 * a {
        return Err(Error::InvalidConfig(format!("box_radius {box_radius} < 3a")));
    }
    let mut near = 0.0;
    let mut far_sum = 0.0;
    for p in cloud_in_box.points() {
        if p.iter().zip(x).any(|(u, v)| (u - v).abs() > box_radius) {
            continue;
        }
        let r2 = dist2(p, x);
        if r2 < POLE_TOL * POLE_TOL {
            return Err(Error::OnPole(r2.sqrt()));
        }
        let al = cutoff.eval(r2.sqrt() / a);
        near += al / r2;
        far_sum += (1.0 - al) / r2;
    }
    let near_field = near - 4.0 * PI * a * cutoff.integral();
    let far_field = far_sum - far_field_compensator(a, box_radius, quadrature_step, cutoff);
    Ok(RenormValue {
        value: near_field + far_field,
        near_field,
        far_field,
        box_radius,
        tail_std: (4.0 * PI / box_radius).sqrt(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MembershipRow {
    pub a: f64,
    pub scaled_tail_sup: f64,
    pub near_origin_deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MembershipReport {
    /// integral of |K| outside the ball of the kernel's scale radius
    pub tail_integral: f64,
    pub integrable_tail: bool,
    pub rows: Vec<MembershipRow>,
    pub max_condition2: f64,
    pub condition2_finite: bool,
}

fn tail_integral_upto(spec: &KernelSpec, r0: f64, decades: f64) -> f64 {
    let d = spec.dim as i32;
    // r = r0 e^s, dr = r ds
    let f = |s: f64| {
        // open exterior: the left endpoint is nudged off the sphere
        let r = r0 * s.exp().max(1.0 + 1e-12);
        spec.profile(r).abs() * r.powi(d)
    };
    let smax = decades * std::f64::consts::LN_10;
    let pieces = (decades * 4.0).ceil() as usize;
    let mut total = 0.0;
    for i in 0..pieces {
        let lo = smax * i as f64 / pieces as f64;
        let hi = smax * (i + 1) as f64 / pieces as f64;
        total += integrate_adaptive(&f, lo, hi, 1e-13);
    }
    sphere_area(spec.dim) * total
}

pub fn class_membership_report(spec: &KernelSpec, radii_grid: &[f64]) -> Result<MembershipReport> {
    if let KernelVariant::RenormApprox { .. } = spec.variant {
        return Err(Error::Unsupported("membership report needs a pointwise radial kernel".into()));
    }
    let a0 = spec.scale();
    let tail = tail_integral_upto(spec, a0, 8.0);
    let tail_less = tail_integral_upto(spec, a0, 7.0);
    let integrable_tail = tail.is_finite() && (tail - tail_less).abs() <= 1e-6 * tail.abs().max(1e-300) + 1e-300;
    let mut rows = Vec::with_capacity(radii_grid.len());
    for &a in radii_grid {
        let mut outside: f64 = 0.0;
        let mut inside: f64 = 0.0;
        for i in 0..=2000 {
            let f = i as f64 / 2000.0;
            let r_out = a * (1.0 + 1e-12) * 10f64.powf(6.0 * f);
            outside = outside.max(spec.profile(r_out).abs());
            let r_in = a * 10f64.powf(-9.0 * f);
            inside = inside.max((spec.profile(r_in) - 1.0 / (r_in * r_in)).abs());
        }
        rows.push(MembershipRow { a, scaled_tail_sup: a * a * outside, near_origin_deviation: inside });
    }
    let max_condition2 =
        rows.iter().map(|r| r.scaled_tail_sup.max(r.near_origin_deviation)).fold(0.0, f64::max);
    Ok(MembershipReport {
        tail_integral: tail,
        integrable_tail,
        rows,
        max_condition2,
        condition2_finite: max_condition2.is_finite(),
    })
}

/// sup_{0 < |z| <= a} |K(z) - |z|^{-2}| for the pointwise kernels, from the profile.
pub fn near_origin_deviation(spec: &KernelSpec, a: f64) -> f64 {
    match spec.variant {
        KernelVariant::Truncated { a: t } => {
            if a <= t {
                0.0
            } else {
                1.0 / (t * t)
            }
        }
        KernelVariant::SmoothAttenuated { a: s, .. } => {
            if a <= s {
                0.0
            } else {
                1.0 / (s * s) - spec.profile(s)
            }
        }
        KernelVariant::RenormApprox { .. } => 0.0,
    }
}

/// Grid sup over the region of |V^spec - V^(a)|. Nodes closer than a/4 to a
/// pole use the bound count(B_a(x)) * dev(a) + sum_{|x-y|>a} |K(x-y)| instead of
/// the pointwise difference.
pub fn truncation_error(cloud: &PointCloud, spec: &KernelSpec, a: f64, region: &Region, grid_step: f64) -> Result<f64> {
    let d = region.dim();
    let (lo, hi) = region.bounding_box();
    let counts: Vec<usize> = lo.iter().zip(&hi).map(|(l, h)| ((h - l) / grid_step).floor() as usize + 1).collect();
    let dev = near_origin_deviation(spec, a);
    let renorm = matches!(spec.variant, KernelVariant::RenormApprox { .. });
    let trunc = KernelSpec { dim: spec.dim, variant: KernelVariant::Truncated { a } };
    let compensator = if let KernelVariant::RenormApprox { a: ra, box_radius, quadrature_step } = spec.variant {
        4.0 * PI * ra * AlphaCutoff.integral() + far_field_compensator(ra, box_radius, quadrature_step, &AlphaCutoff)
    } else {
        0.0
    };
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut best: f64 = 0.0;
    let a2 = a * a;
    let guard2 = a2 / 16.0;
    loop {
        for k in 0..d {
            x[k] = lo[k] + idx[k] as f64 * grid_step;
        }
        if region.contains(&x) {
            let near_pole = cloud.points().any(|p| dist2(p, &x) < guard2);
            let value = if renorm {
                // every point in the box contributes |x-y|^{-2}; the compensator is deterministic
                let mut s = -compensator;
                for p in cloud.points() {
                    if p.iter().zip(&x).any(|(u, v)| (u - v).abs() > spec_box(spec)) {
                        continue;
                    }
                    let r2 = dist2(p, &x);
                    if r2 > a2 {
                        s += 1.0 / r2;
                    }
                }
                s.abs()
            } else if near_pole {
                let mut s = 0.0;
                for p in cloud.points() {
                    let r2 = dist2(p, &x);
                    if r2 <= a2 {
                        s += dev;
                    } else {
                        s += spec.profile(r2.sqrt()).abs();
                    }
                }
                s
            } else {
                let mut s = 0.0;
                for p in cloud.points() {
                    let r = dist2(p, &x).sqrt();
                    s += spec.profile(r) - trunc.profile(r);
                }
                s.abs()
            };
            best = best.max(value);
        }
        let mut k = 0;
        while k < d {
            idx[k] += 1;
            if idx[k] < counts[k] {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == d {
            break;
        }
    }
    Ok(best)
}

fn spec_box(spec: &KernelSpec) -> f64 {
    match spec.variant {
        KernelVariant::RenormApprox { box_radius, .. } => box_radius,
        _ => f64::INFINITY,
    }
}

/// Capped, scaled potential theta * min(V, m) for repeated evaluation along paths
/// and on grids. Points farther than the kernel support are skipped.
#[derive(Debug, Clone)]
pub struct CappedPotential {
    pub cloud: PointCloud,
    pub spec: KernelSpec,
    pub theta: f64,
    pub cap: f64,
}

impl CappedPotential {
    pub fn new(cloud: PointCloud, spec: KernelSpec, theta: f64, cap: f64) -> Result<Self> {
        if matches!(spec.variant, KernelVariant::RenormApprox { .. }) {
            return Err(Error::Unsupported("capped path potentials use pointwise kernels".into()));
        }
        if !(cap > 0.0) {
            return Err(Error::InvalidConfig(format!("cap {cap} must be positive")));
        }
        Ok(Self { cloud, spec, theta, cap })
    }

    /// Uncapped V(x); +inf on a pole.
    pub fn raw(&self, x: &[f64]) -> f64 {
        let cut = self.spec.support_radius();
        let cut2 = cut * cut;
        let mut v = 0.0;
        for p in self.cloud.points() {
            let r2 = dist2(p, x);
            if r2 == 0.0 {
                return f64::INFINITY;
            }
            if r2 <= cut2 {
                v += self.spec.profile(r2.sqrt());
            }
        }
        v
    }

    /// theta * min(V(x), m), together with whether the cap was active.
    pub fn eval(&self, x: &[f64]) -> (f64, bool) {
        let v = self.raw(x);
        if v >= self.cap {
            (self.theta * self.cap, true)
        } else {
            (self.theta * v, false)
        }
    }
}
