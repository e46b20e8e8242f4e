//! Evans function of the linearized operator about a shock profile.
//!
//! The eigenvalue equation `λU = (B(Ū)U' − A_eff U)'`, with
//! `A_eff U = F_U(Ū)U − dB(Ū)[U]Ū'`, is written as a first-order system in
//! `W = (U₁, U₂, z)`, `z` the parabolic component of the integrated flux.
//! Decaying subspaces are carried on exterior powers and paired at `x = 0`.

pub mod contour;
pub mod hopf;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, CompoundPattern};
use crate::ode::{integrate, OdeFailure, OdeOptions};
use crate::profile::ShockProfile;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use contour::{
    circle, rhp_contour, root_polish, stability_check, winding_count, ContourOptions, ContourResult, PolishOutcome,
    StabilityOptions, StabilityReport, Verdict,
};
pub use hopf::{hopf_scan, HopfCrossing, HopfOptions};

type C = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvansSample {
    pub lambda: C,
    pub value: C,
    pub normalization_log: f64,
}

/// Anything that can be sampled like an Evans function.
pub trait SpectralFunction: Sync {
    fn eval(&self, lambda: C) -> Result<EvansSample>;
}

/// Wraps an analytic closure, used for injected test functions.
pub struct MockFunction<F: Fn(C) -> C + Sync>(pub F);

impl<F: Fn(C) -> C + Sync> SpectralFunction for MockFunction<F> {
    fn eval(&self, lambda: C) -> Result<EvansSample> {
        Ok(EvansSample { lambda, value: (self.0)(lambda), normalization_log: 0.0 })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct EvansOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Radius below which slow spatial eigenvalues are identified with their
    /// small-λ expansions `−λ/a_j`; chosen automatically when absent.
    pub slow_radius: Option<f64>,
    /// Relative tolerance for a spatial eigenvalue to count as imaginary.
    pub essential_tol: f64,
    /// Relative separation below which stable and unstable groups collide.
    pub collision_tol: f64,
}

impl Default for EvansOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-13, slow_radius: None, essential_tol: 1e-9, collision_tol: 1e-7 }
    }
}

/// Coefficients of `W' = M(x;λ)W` at a fixed λ.
#[derive(Debug, Clone)]
pub struct EigenvalueSystem<'a> {
    pub profile: &'a ShockProfile,
    pub lambda: C,
    pub m: usize,
    pub m_minus: CMat,
    pub m_plus: CMat,
}

impl<'a> EigenvalueSystem<'a> {
    pub fn coeff(&self, x: f64) -> CMat {
        let (u, du) = self.profile.eval(x);
        coefficient_matrix(self.profile, &u, &du, self.lambda)
    }
}

/// `M(λ)` at state `u` with profile slope `du` (zero at the endstates).
pub fn coefficient_matrix(profile: &ShockProfile, u: &DVector<f64>, du: &DVector<f64>, lambda: C) -> CMat {
    let model = &profile.model;
    let n = model.n;
    let n1 = model.n1();
    let r = model.r;
    let m = n + r;
    let a = model.flux_jacobian(u);
    let b = model.viscosity(u);
    let mut ae = a.clone();
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        let col = model.viscosity_derivative(u, &e) * du;
        for i in 0..n {
            ae[(i, j)] -= col[i];
        }
    }
    let cz = |x: &DMatrix<f64>| linalg::to_complex(x);
    let a11_inv = a.view((0, 0), (n1, n1)).into_owned().try_inverse().expect("A11 invertible");
    let a12 = a.view((0, n1), (n1, r)).into_owned();
    let b21 = b.view((n1, 0), (r, n1)).into_owned();
    let b22 = b.view((n1, n1), (r, r)).into_owned();
    let b_eff = &b22 - &b21 * &a11_inv * &a12;
    let p = b_eff.try_inverse().expect("b_eff invertible");
    let ae21 = ae.view((n1, 0), (r, n1)).into_owned();
    let ae22 = ae.view((n1, n1), (r, r)).into_owned();
    // U₂' = P (Ae21 + λ B21 A11⁻¹) U₁ + P Ae22 U₂ + P z
    let row_u1 = cz(&(&p * &ae21)) + cz(&(&p * &b21 * &a11_inv)) * lambda;
    let row_u2 = cz(&(&p * &ae22));
    let row_z = cz(&p);
    let a11i = cz(&a11_inv);
    let a11i_a12 = cz(&(&a11_inv * &a12));
    let mut mm = CMat::zeros(m, m);
    // U₁' = −λ A11⁻¹ U₁ − A11⁻¹A12 U₂'
    let u1_u1 = -(a11i * lambda) - &a11i_a12 * &row_u1;
    let u1_u2 = -(&a11i_a12 * &row_u2);
    let u1_z = -(&a11i_a12 * &row_z);
    mm.view_mut((0, 0), (n1, n1)).copy_from(&u1_u1);
    mm.view_mut((0, n1), (n1, r)).copy_from(&u1_u2);
    mm.view_mut((0, n), (n1, r)).copy_from(&u1_z);
    mm.view_mut((n1, 0), (r, n1)).copy_from(&row_u1);
    mm.view_mut((n1, n1), (r, r)).copy_from(&row_u2);
    mm.view_mut((n1, n), (r, r)).copy_from(&row_z);
    for i in 0..r {
        mm[(n + i, n1 + i)] = lambda;
    }
    mm
}

/// Spatial eigenvalues of an endstate matrix split into decaying/growing groups.
#[derive(Debug, Clone)]
pub struct Splitting {
    pub stable: Vec<C>,
    pub unstable: Vec<C>,
}

/// Evans function evaluator for a fixed profile.
pub struct EvansFunction {
    pub profile: ShockProfile,
    pub opts: EvansOptions,
    pub m: usize,
    /// Dimension of the decaying subspace at +∞.
    pub k_plus: usize,
    /// Dimension of the decaying subspace at −∞.
    pub k_minus: usize,
    pat_plus: CompoundPattern,
    pat_minus: CompoundPattern,
    ref_plus: Vec<CVec>,
    ref_minus: Vec<CVec>,
    a_plus: Vec<f64>,
    a_minus: Vec<f64>,
    slow_radius: f64,
    pub half_length: f64,
}

fn orthonormal_columns(vs: &[CVec]) -> Vec<CVec> {
    let mut out: Vec<CVec> = Vec::new();
    for v in vs {
        let mut w = v.clone();
        for q in &out {
            let c = q.dotc(&w);
            w -= q * c;
        }
        out.push(w.normalize());
    }
    out
}

fn real_eigs(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(linalg::eigenvalues_real(m)?.iter().map(|z| z.re).collect())
}

impl EvansFunction {
    pub fn new(profile: &ShockProfile, opts: EvansOptions) -> Result<Self> {
        let model = &profile.model;
        let n = model.n;
        let m = n + model.r;
        let um = profile.endstates.minus();
        let up = profile.endstates.plus();
        let a_plus = real_eigs(&model.flux_jacobian(&up))?;
        let a_minus = real_eigs(&model.flux_jacobian(&um))?;
        if a_plus.iter().chain(&a_minus).any(|a| a.abs() < 1e-10) {
            return Err(Error::NonAdmissible("characteristic speed vanishes at an endstate".into()));
        }
        let zero = DVector::zeros(n);
        let one = C::new(1.0, 0.0);
        let mp1 = coefficient_matrix(profile, &up, &zero, one);
        let mm1 = coefficient_matrix(profile, &um, &zero, one);
        let ev_p = linalg::eigenvalues(&mp1)?;
        let ev_m = linalg::eigenvalues(&mm1)?;
        let k_plus = ev_p.iter().filter(|z| z.re < 0.0).count();
        let k_minus = ev_m.iter().filter(|z| z.re > 0.0).count();
        if k_plus + k_minus != m {
            return Err(Error::NonAdmissible(format!(
                "decaying dimensions {k_plus} + {k_minus} do not add up to {m}; only Lax profiles are supported"
            )));
        }
        if k_plus == 0 || k_minus == 0 {
            return Err(Error::NonAdmissible("degenerate splitting".into()));
        }
        let basis = |mat: &CMat, ev: &[C], stable: bool| -> Vec<CVec> {
            let vs: Vec<CVec> = ev
                .iter()
                .filter(|z| (z.re < 0.0) == stable)
                .map(|z| linalg::null_vector(mat, *z))
                .map(|v| {
                    // real matrix at real λ: make the eigenvector real
                    let (imax, _) =
                        v.iter()
                            .enumerate()
                            .fold((0, 0.0), |acc, (i, z)| if z.norm() > acc.1 { (i, z.norm()) } else { acc });
                    let ph = v[imax] / v[imax].norm();
                    v.map(|z| C::new((z / ph).re, 0.0))
                })
                .collect();
            orthonormal_columns(&vs)
        };
        let ref_plus = basis(&mp1, &ev_p, true);
        let ref_minus = basis(&mm1, &ev_m, false);

        // slow radius from the separation of fast spatial eigenvalues at λ = 0
        let slow_radius = match opts.slow_radius {
            Some(r) => r,
            None => {
                let z = C::new(0.0, 0.0);
                let fast_min = [&up, &um]
                    .iter()
                    .map(|u| {
                        linalg::eigenvalues(&coefficient_matrix(profile, u, &zero, z))
                            .map(|ev| {
                                let mut mods: Vec<f64> = ev.iter().map(|z| z.norm()).collect();
                                mods.sort_by(|a, b| a.partial_cmp(b).unwrap());
                                mods[n]
                            })
                            .unwrap_or(1.0)
                    })
                    .fold(f64::INFINITY, f64::min);
                let amin = a_plus.iter().chain(&a_minus).map(|a| a.abs()).fold(f64::INFINITY, f64::min);
                (0.1 * amin * fast_min).min(0.1)
            }
        };
        Ok(Self {
            profile: profile.clone(),
            opts,
            m,
            k_plus,
            k_minus,
            pat_plus: CompoundPattern::new(m, k_plus),
            pat_minus: CompoundPattern::new(m, k_minus),
            ref_plus,
            ref_minus,
            a_plus,
            a_minus,
            slow_radius,
            half_length: profile.half_length(),
        })
    }

    pub fn slow_radius(&self) -> f64 {
        self.slow_radius
    }

    pub fn system(&self, lambda: C) -> EigenvalueSystem<'_> {
        let n = self.profile.model.n;
        let zero = DVector::zeros(n);
        EigenvalueSystem {
            profile: &self.profile,
            lambda,
            m: self.m,
            m_minus: coefficient_matrix(&self.profile, &self.profile.endstates.minus(), &zero, lambda),
            m_plus: coefficient_matrix(&self.profile, &self.profile.endstates.plus(), &zero, lambda),
        }
    }

    /// Splits the spatial eigenvalues of `M±(λ)` into decaying and growing
    /// groups, continuing the slow ones analytically through `λ = 0`.
    pub fn split(&self, mat: &CMat, lambda: C, plus: bool) -> Result<Splitting> {
        let n = self.profile.model.n;
        let ev = linalg::eigenvalues(mat)?;
        let a = if plus { &self.a_plus } else { &self.a_minus };
        let mut stable = Vec::new();
        let mut unstable = Vec::new();
        let scale = ev.iter().map(|z| z.norm()).fold(1.0, f64::max);
        if lambda.norm() < self.slow_radius {
            // assign n eigenvalues to the predictions −λ/a_j by minimal total distance
            let pred: Vec<C> = a.iter().map(|aj| -lambda / *aj).collect();
            let mut best: Option<(f64, Vec<usize>)> = None;
            permutations_choose(ev.len(), n, &mut |sel: &[usize]| {
                let d: f64 = sel.iter().zip(&pred).map(|(&i, p)| (ev[i] - p).norm()).sum();
                if best.as_ref().is_none_or(|b| d < b.0) {
                    best = Some((d, sel.to_vec()));
                }
            });
            let sel = best.expect("n ≤ m").1;
            for (j, &i) in sel.iter().enumerate() {
                let mu = if lambda.norm() < 1e-12 { pred[j] } else { ev[i] };
                if a[j] > 0.0 {
                    stable.push(mu);
                } else {
                    unstable.push(mu);
                }
            }
            for (i, z) in ev.iter().enumerate() {
                if sel.contains(&i) {
                    continue;
                }
                if z.re.abs() <= self.opts.essential_tol * scale {
                    return Err(Error::EssentialSpectrum(lambda));
                }
                if z.re < 0.0 {
                    stable.push(*z);
                } else {
                    unstable.push(*z);
                }
            }
        } else {
            for z in &ev {
                if z.re.abs() <= self.opts.essential_tol * scale {
                    return Err(Error::EssentialSpectrum(lambda));
                }
                if z.re < 0.0 {
                    stable.push(*z);
                } else {
                    unstable.push(*z);
                }
            }
            let gap =
                stable.iter().flat_map(|s| unstable.iter().map(move |u| (s - u).norm())).fold(f64::INFINITY, f64::min);
            if gap < self.opts.collision_tol * scale {
                return Err(Error::BranchAmbiguity(lambda));
            }
        }
        let expected = if plus { self.k_plus } else { self.m - self.k_minus };
        if stable.len() != expected {
            return Err(Error::EssentialSpectrum(lambda));
        }
        Ok(Splitting { stable, unstable })
    }

    /// Initial data at ±L: wedge of the reference vectors pushed into the
    /// decaying subspace by `Π (M − μ I)` over the complementary group.
    /// Returns the individual vectors and the trace used for rescaling.
    /// Decaying vectors at one end as `Q r_i`, with `Q` the product of
    /// `M − μ` over the complementary eigenvalues. Also returns the trace of
    /// the decaying group and `det Q` restricted to the decaying subspace,
    /// which the wedge of the vectors must be divided by to stay analytic and
    /// nonvanishing where the slow eigenvalues meet at `λ = 0`.
    pub fn initial_vectors(&self, lambda: C, plus: bool) -> Result<(Vec<CVec>, C, C)> {
        let sys = self.system(lambda);
        let mat = if plus { &sys.m_plus } else { &sys.m_minus };
        let sp = self.split(mat, lambda, plus)?;
        let (kill, keep, refs) =
            if plus { (&sp.unstable, &sp.stable, &self.ref_plus) } else { (&sp.stable, &sp.unstable, &self.ref_minus) };
        let m = self.m;
        let mut q = CMat::identity(m, m);
        for mu in kill {
            q = (mat - CMat::identity(m, m) * *mu) * q;
        }
        let vs: Vec<CVec> = refs.iter().map(|v| &q * v).collect();
        let trace: C = keep.iter().sum();
        let det: C = keep.iter().flat_map(|a| kill.iter().map(move |b| a - b)).product();
        Ok((vs, trace, det))
    }

    fn integrate_side(&self, lambda: C, plus: bool) -> Result<(CVec, C)> {
        let (vs, mu, det) = self.initial_vectors(lambda, plus)?;
        let pat = if plus { &self.pat_plus } else { &self.pat_minus };
        let omega0 = pat.wedge(&vs) / det;
        let l = self.half_length;
        let x0 = if plus { l } else { -l };
        let scale = omega0.norm().max(1e-300);
        let opts = OdeOptions { rtol: self.opts.rtol, atol: self.opts.atol * scale, ..Default::default() };
        let d = pat.dim();
        let rhs = |x: f64, w: &CVec, dw: &mut CVec| {
            let (u, du) = self.profile.eval(x);
            let mm = coefficient_matrix(&self.profile, &u, &du, lambda);
            let mk = if pat.k == 1 { mm } else { pat.apply(&mm) };
            let mut out = &mk * w;
            out.axpy(-mu, w, C::new(1.0, 0.0));
            debug_assert_eq!(out.len(), d);
            dw.copy_from(&out);
        };
        let w = integrate(rhs, x0, &omega0, 0.0, &opts).map_err(|e| match e {
            OdeFailure::StepUnderflow { .. } | OdeFailure::MaxSteps { .. } => {
                Error::Resolution(format!("Evans integration at λ = {lambda}: {e}"))
            }
            _ => Error::ContourResolution(format!("Evans integration at λ = {lambda}: {e}")),
        })?;
        Ok((w, mu))
    }

    pub fn evaluate(&self, lambda: C) -> Result<EvansSample> {
        if !lambda.re.is_finite() || !lambda.im.is_finite() {
            return Err(Error::InvalidParameter(format!("λ = {lambda}")));
        }
        if lambda.norm() < ORIGIN_MEAN_RADIUS {
            return self.origin_value(lambda);
        }
        let (wp, mu_p) = self.integrate_side(lambda, true)?;
        let (wm, mu_m) = self.integrate_side(lambda, false)?;
        let value = linalg::wedge_pair(&self.pat_minus, &wm, &self.pat_plus, &wp);
        Ok(EvansSample { lambda, value, normalization_log: ((mu_m - mu_p) * self.half_length).re })
    }

    /// The normalization is 0/0 at the origin itself; there `D` is the mean
    /// of its values on a small circle (exact for polynomials of degree < 16).
    fn origin_value(&self, lambda: C) -> Result<EvansSample> {
        let k = 16;
        let mut sum = C::new(0.0, 0.0);
        let mut nlog = 0.0;
        for j in 0..k {
            let z = lambda
                + C::from_polar(ORIGIN_MEAN_RADIUS * 10.0, 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / k as f64);
            let s = self.evaluate(z)?;
            sum += s.value;
            nlog += s.normalization_log / k as f64;
        }
        Ok(EvansSample { lambda, value: sum / k as f64, normalization_log: nlog })
    }

    /// Distance from `lambda` to the dispersion curves of the endstate symbols.
    pub fn essential_spectrum_distance(&self, lambda: C) -> f64 {
        let model = &self.profile.model;
        let mut best = f64::INFINITY;
        for u in [self.profile.endstates.minus(), self.profile.endstates.plus()] {
            let a = linalg::to_complex(&model.flux_jacobian(&u));
            let b = linalg::to_complex(&model.viscosity(&u));
            let mut xi = 0.0;
            // ξ sampling fine near the origin and coarser further out
            while xi <= 200.0 {
                for sgn in [1.0, -1.0] {
                    let sym = &a * C::new(0.0, -sgn * xi) - &b * C::new(xi * xi, 0.0);
                    if let Ok(ev) = linalg::eigenvalues(&sym) {
                        for z in ev {
                            best = best.min((z - lambda).norm());
                        }
                    }
                }
                xi += 1e-3 * (1.0 + xi);
            }
        }
        best
    }
}

impl SpectralFunction for EvansFunction {
    fn eval(&self, lambda: C) -> Result<EvansSample> {
        self.evaluate(lambda)
    }
}

/// Calls `f` with every ordered selection of `k` distinct indices from `0..m`.
fn permutations_choose(m: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(m: usize, k: usize, cur: &mut Vec<usize>, used: &mut Vec<bool>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in 0..m {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(m, k, cur, used, f);
                cur.pop();
                used[i] = false;
            }
        }
    }
    rec(m, k, &mut Vec::new(), &mut vec![false; m], f);
}

/// Direct shooting without the exterior-power lift: each initial vector is
/// carried by classical RK4 with `steps` uniform steps and the determinant is
/// taken at `x = 0`, then rescaled by the same exponential factors as the
/// compound evaluation.
const ORIGIN_MEAN_RADIUS: f64 = 1e-10;

pub fn shooting_evans(ev: &EvansFunction, lambda: C, steps: usize) -> Result<C> {
    let l = ev.half_length;
    let profile = &ev.profile;
    // RK4 on a frame of columns, re-orthonormalized after every step; the
    // discarded triangular factors are accumulated as a determinant
    let carry = |frame: CMat, x0: f64| -> (CMat, C) {
        let h = -x0 / steps as f64;
        let mut y = frame;
        let mut scale = C::new(1.0, 0.0);
        let mut x = x0;
        let f = |x: f64, y: &CMat| {
            let (u, du) = profile.eval(x);
            coefficient_matrix(profile, &u, &du, lambda) * y
        };
        for _ in 0..steps {
            let k1 = f(x, &y);
            let k2 = f(x + 0.5 * h, &(&y + &k1 * C::new(0.5 * h, 0.0)));
            let k3 = f(x + 0.5 * h, &(&y + &k2 * C::new(0.5 * h, 0.0)));
            let k4 = f(x + h, &(&y + &k3 * C::new(h, 0.0)));
            y += (k1 + k2 * C::new(2.0, 0.0) + k3 * C::new(2.0, 0.0) + k4) * C::new(h / 6.0, 0.0);
            x += h;
            let qr = y.clone().qr();
            scale *= qr.r().diagonal().iter().product::<C>();
            y = qr.q();
        }
        (y, scale)
    };
    let (vp, mu_p, det_p) = ev.initial_vectors(lambda, true)?;
    let (vm, mu_m, det_m) = ev.initial_vectors(lambda, false)?;
    let (qm, sm) = carry(CMat::from_columns(&vm), -l);
    let (qp, sp) = carry(CMat::from_columns(&vp), l);
    let mut mat = CMat::zeros(ev.m, ev.m);
    mat.view_mut((0, 0), (ev.m, qm.ncols())).copy_from(&qm);
    mat.view_mut((0, qm.ncols()), (ev.m, qp.ncols())).copy_from(&qp);
    Ok(mat.determinant() * sm * sp * (mu_p * l).exp() * (-mu_m * l).exp() / (det_p * det_m))
}
