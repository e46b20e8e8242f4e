//! Argument-principle winding counts, stability verdicts and root polishing.

use super::{EvansSample, SpectralFunction};
use crate::error::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

type C = Complex64;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ContourOptions {
    /// Initial number of samples along the whole contour.
    pub initial_samples: usize,
    /// Maximum number of bisections of any initial interval.
    pub max_depth: usize,
    /// Largest accepted phase increment between consecutive samples.
    pub max_phase_step: f64,
}

impl Default for ContourOptions {
    fn default() -> Self {
        Self { initial_samples: 128, max_depth: 20, max_phase_step: FRAC_PI_2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContourResult {
    pub samples: Vec<EvansSample>,
    pub winding: i64,
    pub refinement_depth: usize,
}

impl ContourResult {
    pub fn min_modulus(&self) -> f64 {
        self.samples.iter().map(|s| s.value.norm()).fold(f64::INFINITY, f64::min)
    }
    pub fn max_modulus(&self) -> f64 {
        self.samples.iter().map(|s| s.value.norm()).fold(0.0, f64::max)
    }
}

/// Closed polyline given by its vertices (the last connects to the first).
#[derive(Debug, Clone)]
pub struct Polyline(pub Vec<C>);

impl Polyline {
    fn lengths(&self) -> Vec<f64> {
        let v = &self.0;
        (0..v.len()).map(|i| (v[(i + 1) % v.len()] - v[i]).norm()).collect()
    }

    /// Point at arc-length parameter `t ∈ [0, 1)`.
    pub fn point(&self, t: f64) -> C {
        let lens = self.lengths();
        let total: f64 = lens.iter().sum();
        let mut s = t.rem_euclid(1.0) * total;
        for (i, l) in lens.iter().enumerate() {
            if s <= *l || i == lens.len() - 1 {
                let a = self.0[i];
                let b = self.0[(i + 1) % self.0.len()];
                return a + (b - a) * (s / l.max(1e-300)).min(1.0);
            }
            s -= l;
        }
        self.0[0]
    }
}

/// Counterclockwise circle as a fine polygon.
pub fn circle(center: C, radius: f64, vertices: usize) -> Polyline {
    Polyline((0..vertices).map(|k| center + C::from_polar(radius, 2.0 * PI * k as f64 / vertices as f64)).collect())
}

/// Counterclockwise boundary of `{Re λ ≥ re_min, |λ| ≤ radius}`: the arc
/// through `+radius` followed by the segment on `Re λ = re_min`.
pub fn rhp_contour(radius: f64, re_min: f64, arc_vertices: usize) -> Polyline {
    let h = (radius * radius - re_min * re_min).sqrt();
    let theta0 = (h / radius).asin().min(FRAC_PI_2);
    let mut v: Vec<C> = (0..=arc_vertices)
        .map(|k| {
            let th = -theta0 + 2.0 * theta0 * k as f64 / arc_vertices as f64;
            C::from_polar(radius, th)
        })
        .collect();
    // segment from (re_min, +h) down to (re_min, −h), geometric near the axis
    let seg = arc_vertices.max(8);
    let half: Vec<f64> = (1..seg)
        .map(|k| {
            let t = k as f64 / seg as f64;
            h * t * t
        })
        .collect();
    for y in half.iter().rev() {
        v.push(C::new(re_min, *y));
    }
    v.push(C::new(re_min, 0.0));
    for y in &half {
        v.push(C::new(re_min, -*y));
    }
    Polyline(v)
}

/// Winding number of `f` along a closed contour, refining adaptively until
/// every phase increment is below `max_phase_step`.
pub fn winding_count(f: &dyn SpectralFunction, contour: &Polyline, opts: &ContourOptions) -> Result<ContourResult> {
    let n0 = opts.initial_samples.max(8);
    // each sample is (t, depth, sample)
    let ts: Vec<f64> = (0..n0).map(|k| k as f64 / n0 as f64).collect();
    let first: Vec<EvansSample> = ts.par_iter().map(|&t| f.eval(contour.point(t))).collect::<Result<Vec<_>>>()?;
    let mut pts: Vec<(f64, usize, EvansSample)> = ts.into_iter().zip(first).map(|(t, s)| (t, 0, s)).collect();
    let mut max_depth = 0;
    loop {
        for (_, _, s) in &pts {
            if s.value.norm() == 0.0 || !s.value.re.is_finite() || !s.value.im.is_finite() {
                return Err(Error::ContourResolution(format!("D vanishes or is non-finite at λ = {}", s.lambda)));
            }
        }
        let len = pts.len();
        let mut bad = Vec::new();
        for i in 0..len {
            let a = &pts[i];
            let b = &pts[(i + 1) % len];
            let dphi = (b.2.value / a.2.value).arg().abs();
            if dphi >= opts.max_phase_step {
                bad.push(i);
            }
        }
        if bad.is_empty() {
            break;
        }
        let new_ts: Vec<(usize, f64, usize)> = bad
            .iter()
            .map(|&i| {
                let ta = pts[i].0;
                let tb = if i + 1 == len { 1.0 } else { pts[i + 1].0 };
                let depth = pts[i].1.max(if i + 1 == len { pts[0].1 } else { pts[i + 1].1 }) + 1;
                (i, 0.5 * (ta + tb), depth)
            })
            .collect();
        if let Some(&(_, t, d)) = new_ts.iter().find(|x| x.2 > opts.max_depth) {
            return Err(Error::ContourResolution(format!(
                "refinement depth {d} exceeds cap {} near λ = {}",
                opts.max_depth,
                contour.point(t)
            )));
        }
        let evals: Vec<EvansSample> =
            new_ts.par_iter().map(|&(_, t, _)| f.eval(contour.point(t))).collect::<Result<Vec<_>>>()?;
        let mut merged = Vec::with_capacity(len + new_ts.len());
        let mut k = 0;
        for (i, p) in pts.into_iter().enumerate() {
            merged.push(p);
            if k < new_ts.len() && new_ts[k].0 == i {
                max_depth = max_depth.max(new_ts[k].2);
                merged.push((new_ts[k].1, new_ts[k].2, evals[k]));
                k += 1;
            }
        }
        pts = merged;
    }
    let len = pts.len();
    let total: f64 = (0..len).map(|i| (pts[(i + 1) % len].2.value / pts[i].2.value).arg()).sum();
    let w = total / (2.0 * PI);
    let winding = w.round() as i64;
    if (w - winding as f64).abs() > 1e-6 {
        return Err(Error::ContourResolution(format!("non-integer winding {w}")));
    }
    Ok(ContourResult { samples: pts.into_iter().map(|p| p.2).collect(), winding, refinement_depth: max_depth })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Unstable { excess: i64 },
    Marginal { reason: String },
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Stable => "stable",
            Verdict::Unstable { .. } => "unstable",
            Verdict::Marginal { .. } => "marginal",
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct StabilityOptions {
    pub ell: i64,
    pub origin_radius: f64,
    pub rhp_radius: f64,
    pub rhp_re_min: f64,
    /// A contour sample with `|D| < marginal_tol · max|D|` signals a root on
    /// the contour.
    pub marginal_tol: f64,
    pub contour: ContourOptions,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            ell: 1,
            origin_radius: 1e-2,
            rhp_radius: 10.0,
            rhp_re_min: 1e-3,
            marginal_tol: 1e-9,
            contour: ContourOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    pub verdict: Verdict,
    pub origin_winding: i64,
    pub rhp_winding: i64,
    pub origin: ContourResult,
    pub rhp: ContourResult,
}

pub fn stability_check(f: &dyn SpectralFunction, opts: &StabilityOptions) -> Result<StabilityReport> {
    let origin = winding_count(f, &circle(C::new(0.0, 0.0), opts.origin_radius, 64), &opts.contour)?;
    let rhp = winding_count(f, &rhp_contour(opts.rhp_radius, opts.rhp_re_min, 64), &opts.contour)?;
    let near_zero = |c: &ContourResult| c.min_modulus() < opts.marginal_tol * c.max_modulus();
    let verdict = if near_zero(&rhp) || near_zero(&origin) {
        Verdict::Marginal { reason: "a zero lies within tolerance of the contour".into() }
    } else if origin.winding != opts.ell {
        Verdict::Marginal {
            reason: format!("origin multiplicity {} differs from the declared {}", origin.winding, opts.ell),
        }
    } else if rhp.winding == 0 {
        Verdict::Stable
    } else {
        Verdict::Unstable { excess: rhp.winding }
    };
    Ok(StabilityReport { verdict, origin_winding: origin.winding, rhp_winding: rhp.winding, origin, rhp })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum PolishOutcome {
    Root { lambda: C, residual: f64, scale: f64, iterations: usize },
    Bracket { center: C, radius: f64, reason: String },
}

impl PolishOutcome {
    pub fn root(&self) -> Option<C> {
        match self {
            PolishOutcome::Root { lambda, .. } => Some(*lambda),
            _ => None,
        }
    }
}

/// Complex secant iteration on `D`, certified by a unit winding about the
/// result; otherwise a bracket is returned.
pub fn root_polish(f: &dyn SpectralFunction, lambda0: C, max_iter: usize) -> Result<PolishOutcome> {
    let r0 = 1e-2 * lambda0.norm().max(1e-1);
    let scale = [1.0, -1.0]
        .iter()
        .flat_map(|s| [C::new(*s, 0.0), C::new(0.0, *s)])
        .map(|d| f.eval(lambda0 + d * r0).map(|e| e.value.norm()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let mut x0 = lambda0;
    let mut x1 = lambda0 + C::new(r0 * 1e-2, r0 * 1e-2);
    let mut f0 = f.eval(x0)?.value;
    let mut f1 = f.eval(x1)?.value;
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..max_iter {
        iterations = it + 1;
        if f1.norm() < 1e-10 * scale {
            converged = true;
            break;
        }
        let denom = f1 - f0;
        if denom.norm() == 0.0 {
            break;
        }
        let step = f1 * (x1 - x0) / denom;
        let x2 = x1 - step;
        if !x2.re.is_finite() || !x2.im.is_finite() || (x2 - lambda0).norm() > 1e3 * (1.0 + lambda0.norm()) {
            return Ok(PolishOutcome::Bracket {
                center: lambda0,
                radius: r0,
                reason: "secant iteration diverged".into(),
            });
        }
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = f.eval(x1)?.value;
        if step.norm() < 1e-15 * (1.0 + x1.norm()) {
            converged = f1.norm() < 1e-6 * scale;
            break;
        }
    }
    if !converged {
        return Ok(PolishOutcome::Bracket {
            center: x1,
            radius: (x1 - x0).norm().max(1e-12),
            reason: format!("no convergence after {iterations} iterations"),
        });
    }
    // certificate: exactly one zero inside a small circle around the result
    let rc = (1e-4 * (1.0 + x1.norm())).min(0.5 * r0);
    let cert = winding_count(f, &circle(x1, rc, 16), &ContourOptions { initial_samples: 16, ..Default::default() });
    match cert {
        Ok(c) if c.winding == 1 => Ok(PolishOutcome::Root { lambda: x1, residual: f1.norm(), scale, iterations }),
        Ok(c) => Ok(PolishOutcome::Bracket {
            center: x1,
            radius: rc,
            reason: format!("winding {} about the candidate (multiple or spurious root)", c.winding),
        }),
        Err(e) => Ok(PolishOutcome::Bracket { center: x1, radius: rc, reason: format!("certificate failed: {e}") }),
    }
}

#[cfg(test)]
mod tests {
    use super::super::MockFunction;
    use super::*;

    #[test]
    fn mock_windings() {
        let o = ContourOptions::default();
        let f = MockFunction(|l: C| l);
        assert_eq!(winding_count(&f, &circle(C::new(0.0, 0.0), 1.0, 64), &o).unwrap().winding, 1);
        let g = MockFunction(|l: C| (l - 0.5) * (l - 0.5));
        assert_eq!(winding_count(&g, &circle(C::new(0.0, 0.0), 1.0, 64), &o).unwrap().winding, 2);
        let h = MockFunction(|l: C| (l - 2.0) * (l + 3.0));
        assert_eq!(winding_count(&h, &circle(C::new(0.0, 0.0), 1.0, 64), &o).unwrap().winding, 0);
    }

    #[test]
    fn rhp_contour_is_counterclockwise() {
        let f = MockFunction(|l: C| l - C::new(1.0, 2.0));
        let r = winding_count(&f, &rhp_contour(10.0, 1e-3, 32), &ContourOptions::default()).unwrap();
        assert_eq!(r.winding, 1);
        let g = MockFunction(|l: C| l + 1.0);
        assert_eq!(winding_count(&g, &rhp_contour(10.0, 1e-3, 32), &ContourOptions::default()).unwrap().winding, 0);
    }

    #[test]
    fn verdicts() {
        let o = StabilityOptions::default();
        let unstable = MockFunction(|l: C| l * (l - C::new(0.2, 0.5)) * (l - C::new(0.2, -0.5)));
        let r = stability_check(&unstable, &o).unwrap();
        assert_eq!(r.verdict, Verdict::Unstable { excess: 2 });
        let stable = MockFunction(|l: C| l * (l + 1.0));
        assert_eq!(stability_check(&stable, &o).unwrap().verdict, Verdict::Stable);
        let double = MockFunction(|l: C| l * l);
        assert!(matches!(stability_check(&double, &o).unwrap().verdict, Verdict::Marginal { .. }));
    }

    #[test]
    fn polish_simple_and_double() {
        let target = C::new(0.1, 0.9);
        let f = MockFunction(move |l: C| l - target);
        let out = root_polish(&f, C::new(0.0, 0.0), 50).unwrap();
        let r = out.root().unwrap();
        assert!((r - target).norm() < 1e-10);
        let g = MockFunction(|l: C| (l - 0.3) * (l - 0.3));
        assert!(matches!(root_polish(&g, C::new(0.35, 0.01), 60).unwrap(), PolishOutcome::Bracket { .. }));
    }
}
