//! Detection of a conjugate pair of Evans zeros crossing the imaginary axis
//! as a parameter varies.

use super::contour::{root_polish, winding_count, ContourOptions, PolishOutcome, Polyline};
use super::SpectralFunction;
use crate::error::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

type C = Complex64;

pub type Family<'a> = dyn Fn(f64) -> Result<Box<dyn SpectralFunction>> + Sync + 'a;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct HopfOptions {
    pub samples: usize,
    pub bisect_tol: f64,
    pub polish_iter: usize,
    pub contour: ContourOptions,
}

impl Default for HopfOptions {
    fn default() -> Self {
        Self { samples: 11, bisect_tol: 1e-6, polish_iter: 60, contour: ContourOptions::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HopfCrossing {
    pub eps_star: f64,
    pub tau_star: f64,
    pub gamma_slope_positive: bool,
    /// `(ε with γ < 0, ε with γ > 0)` for the tracked root.
    pub bracket: (f64, f64),
    pub lambda_star: C,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HopfScan {
    pub windings: Vec<(f64, i64)>,
    pub crossing: Option<HopfCrossing>,
}

/// First two argument-principle moments `Σ λ_k`, `Σ λ_k²` over the zeros
/// enclosed by a sampled contour.
fn moments(samples: &[super::EvansSample]) -> (C, C) {
    let n = samples.len();
    let mut s1 = C::new(0.0, 0.0);
    let mut s2 = C::new(0.0, 0.0);
    for i in 0..n {
        let a = &samples[i];
        let b = &samples[(i + 1) % n];
        let ratio = b.value / a.value;
        let dlog = C::new(ratio.norm().ln(), ratio.arg());
        let mid = 0.5 * (a.lambda + b.lambda);
        s1 += mid * dlog;
        s2 += mid * mid * dlog;
    }
    let k = C::new(0.0, 2.0 * std::f64::consts::PI);
    (s1 / k, s2 / k)
}

fn polish_upper(f: &dyn SpectralFunction, guess: C, iters: usize) -> Result<C> {
    match root_polish(f, guess, iters)? {
        PolishOutcome::Root { lambda, .. } => Ok(if lambda.im < 0.0 { lambda.conj() } else { lambda }),
        PolishOutcome::Bracket { reason, center, .. } => {
            Err(Error::Continuation(format!("lost the crossing root near {center}: {reason}")))
        }
    }
}

pub fn hopf_scan(
    family: &Family<'_>,
    eps_range: (f64, f64),
    template: &Polyline,
    opts: &HopfOptions,
) -> Result<HopfScan> {
    let ns = opts.samples.max(2);
    let eps: Vec<f64> =
        (0..ns).map(|k| eps_range.0 + (eps_range.1 - eps_range.0) * k as f64 / (ns - 1) as f64).collect();
    let results: Vec<i64> = eps
        .par_iter()
        .map(|&e| {
            let f = family(e)?;
            let r = winding_count(f.as_ref(), template, &opts.contour)?;
            Ok(r.winding)
        })
        .collect::<Result<Vec<_>>>()?;
    let windings: Vec<(f64, i64)> = eps.iter().zip(&results).map(|(e, r)| (*e, *r)).collect();
    let Some(i) = (0..ns - 1).find(|&i| (results[i + 1] - results[i]).abs() == 2) else {
        return Ok(HopfScan { windings, crossing: None });
    };
    let (i_in, i_out) = if results[i] > results[i + 1] { (i, i + 1) } else { (i + 1, i) };
    // finely resolved contours for the moment quadrature
    let fine = ContourOptions { initial_samples: 512, max_depth: 40, max_phase_step: 0.05 };
    let (a_in, b_in) = moments(&winding_count(family(eps[i_in])?.as_ref(), template, &fine)?.samples);
    let (a_out, b_out) = moments(&winding_count(family(eps[i_out])?.as_ref(), template, &fine)?.samples);
    let gamma0 = 0.5 * (a_in - a_out).re;
    let tau2 = gamma0 * gamma0 - 0.5 * (b_in - b_out).re;
    let guess = C::new(gamma0, tau2.max(0.0).sqrt());

    let f_in = family(eps[i_in])?;
    let lam_in = polish_upper(f_in.as_ref(), guess, opts.polish_iter)?;
    // continue the root to the other end of the bracket in small steps
    let mut lam = lam_in;
    let steps = 4;
    for k in 1..=steps {
        let e = eps[i_in] + (eps[i_out] - eps[i_in]) * k as f64 / steps as f64;
        lam = polish_upper(family(e)?.as_ref(), lam, opts.polish_iter)?;
    }
    let lam_out = lam;
    let (mut e_pos, mut l_pos, mut e_neg, mut l_neg) = (eps[i_in], lam_in, eps[i_out], lam_out);
    let flat = 1e-8 * (1.0 + l_neg.norm());
    if !(l_pos.re > 0.0 && l_neg.re < flat && l_pos.re > l_neg.re) {
        return Err(Error::Continuation(format!(
            "tracked root does not cross: Re λ = {} at ε = {}, {} at ε = {}",
            l_pos.re, e_pos, l_neg.re, e_neg
        )));
    }
    while (e_pos - e_neg).abs() > opts.bisect_tol {
        let em = 0.5 * (e_pos + e_neg);
        let start = if (em - e_pos).abs() < (em - e_neg).abs() { l_pos } else { l_neg };
        let lm = polish_upper(family(em)?.as_ref(), start, opts.polish_iter)?;
        if lm.re > 0.0 {
            e_pos = em;
            l_pos = lm;
        } else {
            e_neg = em;
            l_neg = lm;
        }
    }
    let eps_star = 0.5 * (e_pos + e_neg);
    let lam_star = polish_upper(family(eps_star)?.as_ref(), 0.5 * (l_pos + l_neg), opts.polish_iter)?;
    let slope = (l_pos.re - l_neg.re) / (e_pos - e_neg);
    Ok(HopfScan {
        windings,
        crossing: Some(HopfCrossing {
            eps_star,
            tau_star: lam_star.im,
            gamma_slope_positive: slope > 0.0,
            bracket: (e_neg, e_pos),
            lambda_star: lam_star,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::super::contour::rhp_contour;
    use super::super::MockFunction;
    use super::*;

    fn family(sign: f64) -> impl Fn(f64) -> Result<Box<dyn SpectralFunction>> + Sync {
        move |e: f64| {
            let g = sign * (e - 0.5);
            Ok(Box::new(MockFunction(move |l: C| (l - g - C::new(0.0, 1.0)) * (l - g + C::new(0.0, 1.0)) * (l + 2.0)))
                as Box<dyn SpectralFunction>)
        }
    }

    #[test]
    fn synthetic_crossing() {
        let f = family(1.0);
        let scan = hopf_scan(&f, (0.0, 1.0), &rhp_contour(10.0, 1e-3, 64), &HopfOptions::default()).unwrap();
        let c = scan.crossing.unwrap();
        assert!((c.eps_star - 0.5).abs() < 1e-4);
        assert!((c.tau_star - 1.0).abs() < 1e-6);
        assert!(c.gamma_slope_positive);
    }

    #[test]
    fn reversed_family_has_negative_slope() {
        let f = family(-1.0);
        let scan = hopf_scan(&f, (0.0, 1.0), &rhp_contour(10.0, 1e-3, 64), &HopfOptions::default()).unwrap();
        assert!(!scan.crossing.unwrap().gamma_slope_positive);
    }

    #[test]
    fn no_crossing_returns_none() {
        let f = |_: f64| Ok(Box::new(MockFunction(|l: C| l + 1.0)) as Box<dyn SpectralFunction>);
        let scan = hopf_scan(&f, (0.0, 1.0), &rhp_contour(10.0, 1e-3, 64), &HopfOptions::default()).unwrap();
        assert!(scan.crossing.is_none());
    }
}
