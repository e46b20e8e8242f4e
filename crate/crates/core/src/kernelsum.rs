//! Periodic sums of the derivative of the convected heat kernel
//! `K(x,t;y) = (4πt)^{-1/2} exp(−(x−y−at)²/4t)`, evaluated directly and
//! through the Laplace representation with the geometric series summed
//! inside the contour integral.

use crate::error::{Error, Result};
use crate::quad;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

type C = Complex64;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    /// Convection speed.
    pub a: f64,
    pub period: f64,
    pub y_ref: f64,
    /// Evaluation points as offsets `x − y_ref`.
    pub offsets: Vec<f64>,
    /// The contour crosses the real axis left of the origin on an arc of
    /// radius `sqrt(nu² + r²)` through `−nu ± r i`.
    pub contour_nu: f64,
    pub contour_r: f64,
    /// Angle of the outgoing rays, measured from the positive real axis.
    pub ray_angle: f64,
    pub im_cutoff: f64,
    pub j_max: usize,
    pub ladder: Vec<usize>,
    pub fit_range: (f64, f64),
    pub tol: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        let offsets = (0..=320).map(|i| -8.0 + 0.05 * i as f64).collect();
        Self {
            a: 1.0,
            period: 1.0,
            y_ref: 0.0,
            offsets,
            contour_nu: 0.0125,
            contour_r: 0.025,
            ray_angle: 0.75 * PI,
            im_cutoff: 40.0,
            j_max: 1000,
            ladder: vec![1, 2, 5, 10, 20, 50, 100, 200, 500, 1000],
            fit_range: (1.0, 8.0),
            tol: 1e-12,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.a,
            self.period,
            self.y_ref,
            self.contour_nu,
            self.contour_r,
            self.ray_angle,
            self.im_cutoff,
            self.tol,
        ];
        if finite.iter().any(|v| !v.is_finite()) || self.offsets.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite kernel configuration".into()));
        }
        if self.a <= 0.0 {
            return Err(Error::InvalidParameter(format!("convection speed a = {} must be positive", self.a)));
        }
        if self.period <= 0.0 {
            return Err(Error::InvalidParameter(format!("period T = {} must be positive", self.period)));
        }
        let radius = self.contour_nu.hypot(self.contour_r);
        if self.contour_nu <= 0.0 || self.contour_r <= 0.0 || radius >= 0.25 * self.a * self.a {
            return Err(Error::InvalidParameter(format!(
                "contour arc radius {radius} must lie in (0, a²/4) with positive ν and r"
            )));
        }
        if !(self.ray_angle > 0.5 * PI && self.ray_angle < PI) {
            return Err(Error::InvalidParameter("ray angle must lie in (π/2, π)".into()));
        }
        if self.im_cutoff <= self.contour_r {
            return Err(Error::InvalidParameter("imaginary cutoff must exceed the arc height".into()));
        }
        if self.ladder.iter().any(|&j| j == 0 || j > self.j_max) {
            return Err(Error::InvalidParameter("ladder entries must lie in 1..=j_max".into()));
        }
        if !(self.fit_range.0 < self.fit_range.1) {
            return Err(Error::InvalidParameter("empty fit range".into()));
        }
        Ok(())
    }
}

pub fn heat_kernel(x: f64, t: f64, y: f64, a: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("heat kernel needs t > 0, got {t}")));
    }
    let z = x - y - a * t;
    Ok((4.0 * PI * t).powf(-0.5) * (-z * z / (4.0 * t)).exp())
}

/// `∂_y K(x,t;y)`.
pub fn heat_kernel_dy(x: f64, t: f64, y: f64, a: f64) -> Result<f64> {
    let z = x - y - a * t;
    Ok(heat_kernel(x, t, y, a)? * z / (2.0 * t))
}

/// `‖K(·,t;y)‖_{L²}` by quadrature over a window of ±40 standard widths.
pub fn kernel_l2_norm(t: f64, a: f64) -> Result<f64> {
    heat_kernel(0.0, t, 0.0, a)?;
    let w = 40.0 * t.sqrt();
    let c = a * t;
    let r =
        quad::integrate(|x| C::new(heat_kernel(x, t, 0.0, a).unwrap().powi(2), 0.0), c - w, c + w, 1e-16, 1e-13, 200);
    Ok(r.value.re.sqrt())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectSums {
    pub offsets: Vec<f64>,
    pub ladder: Vec<usize>,
    /// `sums[l][i]` is `S_J` for `J = ladder[l]` at `offsets[i]`.
    pub sums: Vec<Vec<f64>>,
    /// `(j, ‖K(·,jT)‖_{L²}, ‖∂_y K(·,jT)‖_{L²})` for `j = 1..=j_max`.
    pub l2: Vec<(usize, f64, f64)>,
}

impl DirectSums {
    pub fn at(&self, j: usize) -> Option<&[f64]> {
        self.ladder.iter().position(|&l| l == j).map(|i| self.sums[i].as_slice())
    }
}

/// `S_J(x) = Σ_{j=1}^{J} ∂_y K(x, jT; y)` for every `J` in the ladder.
pub fn direct_partial_sum(cfg: &KernelConfig) -> Result<DirectSums> {
    cfg.validate()?;
    let mut ladder = cfg.ladder.clone();
    ladder.sort_unstable();
    ladder.dedup();
    let cols: Vec<Vec<f64>> = cfg
        .offsets
        .par_iter()
        .map(|&d| {
            let x = cfg.y_ref + d;
            let mut acc = 0.0;
            let mut out = Vec::with_capacity(ladder.len());
            let mut next = 0;
            for j in 1..=*ladder.last().expect("validated") {
                acc += heat_kernel_dy(x, j as f64 * cfg.period, cfg.y_ref, cfg.a).expect("t > 0");
                if j == ladder[next] {
                    out.push(acc);
                    next += 1;
                }
            }
            out
        })
        .collect();
    let sums = (0..ladder.len()).map(|l| cols.iter().map(|c| c[l]).collect()).collect();
    let l2 = (1..=cfg.j_max)
        .into_par_iter()
        .map(|j| {
            let t = j as f64 * cfg.period;
            let k = kernel_l2_norm(t, cfg.a)?;
            // ∂_y K is K times z/2t with z Gaussian of variance 2t
            let w = 40.0 * t.sqrt();
            let c = cfg.a * t;
            let ky = quad::integrate(
                |x| C::new(heat_kernel_dy(x, t, 0.0, cfg.a).unwrap().powi(2), 0.0),
                c - w,
                c + w,
                1e-18,
                1e-13,
                200,
            )
            .value
            .re
            .sqrt();
            Ok((j, k, ky))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DirectSums { offsets: cfg.offsets.clone(), ladder, sums, l2 })
}

/// Laplace transform in `t` of `∂_y K(x,t;y)` at offset `d = x − y`: the
/// `y`-derivative of the resolvent kernel of `∂² − a∂`.
pub fn resolvent_kernel_dy(lambda: C, d: f64, a: f64) -> C {
    let root = (C::new(a * a, 0.0) + 4.0 * lambda).sqrt();
    let mu = if d >= 0.0 { 0.5 * (a - root) } else { 0.5 * (a + root) };
    -mu * (mu * d).exp() / root
}

/// `e^{λT} / (1 − e^{λT})`, the summed series `Σ_{j≥1} e^{λjT}`.
fn series(lambda: C, t: f64) -> C {
    let e = (lambda * t).exp();
    e / (1.0 - e)
}

/// Upper half of the contour: the arc from `−R` to `−ν + ri`, then the ray
/// to `Im λ = im_cutoff`. Parametrized by `s ∈ [0, s_arc + s_ray]`.
struct UpperContour {
    radius: f64,
    start: C,
    dir: C,
    s_arc: f64,
    s_ray: f64,
}

impl UpperContour {
    fn new(cfg: &KernelConfig) -> Self {
        let radius = cfg.contour_nu.hypot(cfg.contour_r);
        let phi_end = cfg.contour_r.atan2(-cfg.contour_nu);
        let dir = C::from_polar(1.0, cfg.ray_angle);
        Self {
            radius,
            start: C::new(-cfg.contour_nu, cfg.contour_r),
            dir,
            s_arc: radius * (PI - phi_end),
            s_ray: (cfg.im_cutoff - cfg.contour_r) / dir.im,
        }
    }

    /// `(λ(s), λ′(s))`.
    fn point(&self, s: f64) -> (C, C) {
        if s <= self.s_arc {
            let phi = PI - s / self.radius;
            let l = C::from_polar(self.radius, phi);
            (l, -l * C::new(0.0, 1.0) / self.radius)
        } else {
            (self.start + self.dir * (s - self.s_arc), self.dir)
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ResolventPoint {
    pub offset: f64,
    pub value: f64,
    pub quad_error: f64,
    /// Bound on the part of the contour beyond the cutoff.
    pub tail_bound: f64,
}

fn integrand(contour: &UpperContour, s: f64, d: f64, cfg: &KernelConfig) -> C {
    let (l, dl) = contour.point(s);
    series(l, cfg.period) * resolvent_kernel_dy(l, d, cfg.a) * dl
}

/// `𝒦_y(y+d, y) = Im(∫_upper …)/π`, using conjugate symmetry of the
/// integrand across the real axis.
pub fn resolvent_value(d: f64, cfg: &KernelConfig) -> Result<ResolventPoint> {
    let contour = UpperContour::new(cfg);
    let mut value = C::new(0.0, 0.0);
    let mut err = 0.0;
    for (a, b) in [(0.0, contour.s_arc), (contour.s_arc, contour.s_arc + contour.s_ray)] {
        let r = quad::integrate(|s| integrand(&contour, s, d, cfg), a, b, cfg.tol * 1e-2, cfg.tol, 4000);
        if !r.converged {
            return Err(Error::ContourResolution(format!(
                "kernel quadrature at x − y = {d} stalled with error {:.3e}",
                r.error
            )));
        }
        value += r.value;
        err += r.error;
    }
    // the ray integrand decays at least like e^{Re λ T} beyond the cutoff
    let decay = -(cfg.ray_angle.cos()) * cfg.period;
    let tail = integrand(&contour, contour.s_arc + contour.s_ray, d, cfg).norm() / decay;
    Ok(ResolventPoint { offset: d, value: value.im / PI, quad_error: err / PI, tail_bound: tail / PI })
}

/// Same integral with a fixed number of Kronrod panels on each piece.
pub fn resolvent_value_fixed(d: f64, cfg: &KernelConfig, panels: usize) -> f64 {
    let contour = UpperContour::new(cfg);
    let total = contour.s_arc + contour.s_ray;
    let arc = quad::composite(|s| integrand(&contour, s, d, cfg), 0.0, contour.s_arc, panels.div_ceil(8).max(1));
    let ray = quad::composite(|s| integrand(&contour, s, d, cfg), contour.s_arc, total, panels);
    (arc + ray).im / PI
}

/// Exponential envelope of an oscillating decaying table, fitted through
/// the local maxima of `|v|` inside `range`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub eta0: f64,
    pub r2: f64,
    /// Smallest `C` with `|v(d)| ≤ C e^{−η₀|d|}` on the fit range.
    pub c_bound: f64,
    pub peaks: Vec<(f64, f64)>,
}

pub fn envelope_fit(offsets: &[f64], values: &[f64], range: (f64, f64)) -> Result<EnvelopeFit> {
    let mut peaks = Vec::new();
    for i in 1..offsets.len().saturating_sub(1) {
        let d = offsets[i];
        if d < range.0 || d > range.1 {
            continue;
        }
        let (a, b, c) = (values[i - 1].abs(), values[i].abs(), values[i + 1].abs());
        if b > a && b >= c {
            // parabola through the three moduli
            let h = offsets[i + 1] - offsets[i];
            let den = a - 2.0 * b + c;
            let shift = if den != 0.0 { 0.5 * (a - c) / den } else { 0.0 };
            let peak = b - 0.25 * (a - c) * shift;
            peaks.push((d + shift * h, peak));
        }
    }
    if peaks.len() < 3 {
        return Err(Error::Resolution(format!("only {} envelope peaks inside the fit range", peaks.len())));
    }
    let xs: Vec<f64> = peaks.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = peaks.iter().map(|p| p.1.ln()).collect();
    let (slope, _, r2) = crate::profile::linear_fit(&xs, &ys);
    let eta0 = -slope;
    let c_bound = offsets
        .iter()
        .zip(values)
        .filter(|(d, _)| **d >= range.0 && **d <= range.1)
        .map(|(d, v)| v.abs() * (eta0 * d.abs()).exp())
        .fold(0.0, f64::max);
    Ok(EnvelopeFit { eta0, r2, c_bound, peaks })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolventTable {
    pub points: Vec<ResolventPoint>,
    pub fit: EnvelopeFit,
}

impl ResolventTable {
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }
}

pub fn resolvent_sum(cfg: &KernelConfig) -> Result<ResolventTable> {
    cfg.validate()?;
    let points = cfg.offsets.par_iter().map(|&d| resolvent_value(d, cfg)).collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = points.iter().map(|p| p.value).collect();
    let fit = envelope_fit(&cfg.offsets, &values, cfg.fit_range)?;
    Ok(ResolventTable { points, fit })
}

/// First term `T⁻¹a⁻¹K(x,T;y)` of the continuized expansion.
pub fn continuized_leading_term(d: f64, cfg: &KernelConfig) -> f64 {
    heat_kernel(cfg.y_ref + d, cfg.period, cfg.y_ref, cfg.a).expect("T > 0") / (cfg.period * cfg.a)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelReport {
    pub eta0: f64,
    pub fit_r2: f64,
    pub c_bound: f64,
    /// `max |S_J − 𝒦| / max |𝒦|` over `|x − y| ≤ 5` at the largest ladder J.
    pub direct_vs_resolvent: f64,
    pub j_compare: usize,
    /// Spread `max/min − 1` of `‖K(·,jT)‖ (jT)^{1/4}` over `j ∈ [10, 100]`.
    pub l2_scaling_spread: f64,
    pub max_quad_error: f64,
    pub max_tail_bound: f64,
}

pub struct KernelRun {
    pub direct: DirectSums,
    pub resolvent: ResolventTable,
    pub report: KernelReport,
}

pub fn kernel_experiment(cfg: &KernelConfig) -> Result<KernelRun> {
    let direct = direct_partial_sum(cfg)?;
    let resolvent = resolvent_sum(cfg)?;
    let j_compare = *direct.ladder.last().expect("validated");
    let s = direct.at(j_compare).expect("ladder entry");
    let mut diff: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (i, p) in resolvent.points.iter().enumerate() {
        if p.offset.abs() <= 5.0 {
            diff = diff.max((s[i] - p.value).abs());
            scale = scale.max(p.value.abs());
        }
    }
    let scaled: Vec<f64> = direct
        .l2
        .iter()
        .filter(|(j, _, _)| (10..=100).contains(j))
        .map(|(j, k, _)| k * (*j as f64 * cfg.period).powf(0.25))
        .collect();
    let spread = if scaled.is_empty() {
        f64::NAN
    } else {
        scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / scaled.iter().cloned().fold(f64::INFINITY, f64::min)
            - 1.0
    };
    let report = KernelReport {
        eta0: resolvent.fit.eta0,
        fit_r2: resolvent.fit.r2,
        c_bound: resolvent.fit.c_bound,
        direct_vs_resolvent: if scale > 0.0 { diff / scale } else { f64::NAN },
        j_compare,
        l2_scaling_spread: spread,
        max_quad_error: resolvent.points.iter().map(|p| p.quad_error).fold(0.0, f64::max),
        max_tail_bound: resolvent.points.iter().map(|p| p.tail_bound).fold(0.0, f64::max),
    };
    Ok(KernelRun { direct, resolvent, report })
}
