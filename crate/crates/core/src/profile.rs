//! Standing shock profiles: heteroclinic orbits of `B(U)U' = F(U) − F(U₋)`.
//!
//! The first (hyperbolic) block of the flux is linear, so `U₁` is an affine
//! function of `U₂` along the orbit and the problem reduces to an ODE for
//! `U₂` alone, shot from the endstate with a one-dimensional manifold.

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{EndstatePair, State, SystemModel};
use crate::ode::{integrate, integrate_through, OdeFailure, OdeOptions};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Debug, Clone)]
pub struct ShockProfile {
    pub model: SystemModel,
    pub endstates: EndstatePair,
    pub x: Vec<f64>,
    pub values: Vec<State>,
    pub derivs: Vec<State>,
    pub eta: f64,
    pub residual_max: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileOptions {
    /// Half-length `L` of `[−L, L]`; chosen from the predicted decay rate when absent.
    pub half_length: Option<f64>,
    pub nodes: usize,
    pub tol: f64,
    /// Location where the first component crosses its midpoint value.
    pub center: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self { half_length: None, nodes: 2001, tol: 1e-12, center: 0.0 }
    }
}

/// Reduced standing-wave ODE in the parabolic variables.
#[derive(Debug, Clone)]
pub struct ReducedOde {
    model: SystemModel,
    um: State,
    f2m: DVector<f64>,
    /// `U₁ = U₁₋ + C (U₂ − U₂₋)`
    c: DMatrix<f64>,
}

impl ReducedOde {
    pub fn new(model: &SystemModel, um: &State) -> Result<Self> {
        let n1 = model.n1();
        let r = model.r;
        let a = model.flux_jacobian(um);
        let a11 = a.view((0, 0), (n1, n1)).into_owned();
        let a12 = a.view((0, n1), (n1, r)).into_owned();
        let inv =
            a11.try_inverse().ok_or_else(|| Error::NonAdmissible("A11 is singular (characteristic shock)".into()))?;
        let c = -inv * a12;
        let f = model.flux(um);
        Ok(Self { model: *model, um: um.clone(), f2m: f.rows(n1, r).into_owned(), c })
    }

    pub fn lift(&self, u2: &DVector<f64>) -> State {
        let n1 = self.model.n1();
        let r = self.model.r;
        let d2 = u2 - self.um.rows(n1, r);
        let u1 = self.um.rows(0, n1) + &self.c * d2;
        let mut u = DVector::zeros(self.model.n);
        u.rows_mut(0, n1).copy_from(&u1);
        u.rows_mut(n1, r).copy_from(u2);
        u
    }

    fn b_eff(&self, u: &State) -> DMatrix<f64> {
        let n1 = self.model.n1();
        let r = self.model.r;
        let b = self.model.viscosity(u);
        b.view((n1, n1), (r, r)).into_owned() + b.view((n1, 0), (r, n1)) * &self.c
    }

    /// `U₂' = b_eff(U)⁻¹ (F₂(U) − F₂(U₋))`; `None` outside the physical domain.
    pub fn rhs(&self, u2: &DVector<f64>) -> Option<DVector<f64>> {
        let u = self.lift(u2);
        if !self.model.admissible_state(&u) {
            return None;
        }
        let n1 = self.model.n1();
        let r = self.model.r;
        let f2 = self.model.flux(&u).rows(n1, r) - &self.f2m;
        self.b_eff(&u).lu().solve(&f2)
    }

    /// Full derivative `U'` from `U₂'`.
    pub fn full_derivative(&self, du2: &DVector<f64>) -> State {
        let n1 = self.model.n1();
        let mut du = DVector::zeros(self.model.n);
        du.rows_mut(0, n1).copy_from(&(&self.c * du2));
        du.rows_mut(n1, self.model.r).copy_from(du2);
        du
    }

    /// Linearization at an equilibrium `U`.
    pub fn linearization(&self, u: &State) -> DMatrix<f64> {
        let n1 = self.model.n1();
        let r = self.model.r;
        let a = self.model.flux_jacobian(u);
        let m = a.view((n1, n1), (r, r)) + a.view((n1, 0), (r, n1)) * &self.c;
        self.b_eff(u).lu().solve(&m).unwrap_or_else(|| DMatrix::from_element(r, r, f64::NAN))
    }
}

/// Real eigen-pairs of a small real matrix (complex ones are reported with
/// their real parts and real-part eigenvectors).
fn real_eigenpairs(m: &DMatrix<f64>) -> Result<Vec<(f64, DVector<f64>)>> {
    let cm = linalg::to_complex(m);
    let ev = linalg::eigenvalues(&cm)?;
    Ok(ev
        .iter()
        .map(|mu| {
            let v = linalg::null_vector(&cm, *mu);
            // rotate so the largest entry is real
            let (imax, _) =
                v.iter().enumerate().fold((0, 0.0), |acc, (i, z)| if z.norm() > acc.1 { (i, z.norm()) } else { acc });
            let phase = v[imax] / v[imax].norm();
            let vr = DVector::from_iterator(v.len(), v.iter().map(|z| (z / phase).re));
            (mu.re, vr.normalize())
        })
        .collect())
}

/// Predicted decay rates `(η₋, η₊)` from the endstate linearizations.
pub fn predicted_decay(model: &SystemModel, endstates: &EndstatePair) -> Result<(f64, f64)> {
    let ode = ReducedOde::new(model, &endstates.minus())?;
    let jm = real_eigenpairs(&ode.linearization(&endstates.minus()))?;
    let jp = real_eigenpairs(&ode.linearization(&endstates.plus()))?;
    let em = jm.iter().filter(|p| p.0 > 0.0).map(|p| p.0).fold(f64::INFINITY, f64::min);
    let ep = jp.iter().filter(|p| p.0 < 0.0).map(|p| -p.0).fold(f64::INFINITY, f64::min);
    if !em.is_finite() || !ep.is_finite() {
        return Err(Error::NoConnection("endstates are not a saddle/node pair of the profile ODE".into()));
    }
    Ok((em, ep))
}

fn map_ode(e: OdeFailure) -> Error {
    match e {
        OdeFailure::Escaped { x } => Error::NoConnection(format!("trajectory escaped the bounding box at x = {x}")),
        OdeFailure::StepUnderflow { x } => Error::Resolution(format!("step size underflow at x = {x}")),
        OdeFailure::MaxSteps { x } => Error::Resolution(format!("step budget exhausted at x = {x}")),
        OdeFailure::NonFinite { x } => Error::NoConnection(format!("non-finite state at x = {x}")),
    }
}

pub fn solve_profile(
    model: &SystemModel,
    endstates: &EndstatePair,
    half_length: f64,
    tol: f64,
) -> Result<ShockProfile> {
    solve_profile_with(model, endstates, &ProfileOptions { half_length: Some(half_length), tol, ..Default::default() })
}

pub fn solve_profile_with(
    model: &SystemModel,
    endstates: &EndstatePair,
    opts: &ProfileOptions,
) -> Result<ShockProfile> {
    let model = model.with_speed(endstates.speed);
    let um = endstates.minus();
    let up = endstates.plus();
    let strength = (&up - &um).norm();
    if strength == 0.0 {
        return Err(Error::ZeroStrength);
    }
    if opts.nodes < 16 {
        return Err(Error::InvalidParameter("profile needs at least 16 nodes".into()));
    }
    let ode = ReducedOde::new(&model, &um)?;
    let n1 = model.n1();
    let r = model.r;
    let (em, ep) = predicted_decay(&model, endstates)?;
    let eta_pred = em.min(ep);
    let half = match opts.half_length {
        Some(l) => {
            if l * eta_pred < 10.0 - 1e-9 {
                return Err(Error::Resolution(format!("half-length {l} is below 10/η = {:.4}", 10.0 / eta_pred)));
            }
            l
        }
        None => (1e10f64).ln() / eta_pred,
    };

    let jm = real_eigenpairs(&ode.linearization(&um))?;
    let jp = real_eigenpairs(&ode.linearization(&up))?;
    let unstable_m: Vec<_> = jm.iter().filter(|p| p.0 > 0.0).collect();
    let stable_p: Vec<_> = jp.iter().filter(|p| p.0 < 0.0).collect();
    // shoot along whichever endstate manifold is one-dimensional
    let (dir, seed_state, target, mu, evec) = if unstable_m.len() == 1 {
        (1.0, um.clone(), up.clone(), unstable_m[0].0, unstable_m[0].1.clone())
    } else if stable_p.len() == 1 {
        (-1.0, up.clone(), um.clone(), stable_p[0].0, stable_p[0].1.clone())
    } else {
        return Err(Error::NoConnection(format!(
            "connection manifold is not one-dimensional ({} unstable at U-, {} stable at U+)",
            unstable_m.len(),
            stable_p.len()
        )));
    };
    let e2 = seed_state.rows(n1, r).into_owned();
    let t2 = target.rows(n1, r).into_owned();
    let mut e = evec;
    if e.dot(&(&t2 - &e2)) < 0.0 {
        e = -e;
    }
    let delta = 1e-6 * strength;
    let seed = &e2 + &e * delta;

    let center_state = (&um + &up) * 0.5;
    let guard = |_: f64, y: &DVector<f64>| {
        let u = ode.lift(y);
        model.admissible_state(&u) && (&u - &center_state).norm() < 10.0 * strength
    };
    let rhs = |_: f64, y: &DVector<f64>, dy: &mut DVector<f64>| match ode.rhs(y) {
        Some(v) => dy.copy_from(&v),
        None => dy.fill(f64::NAN),
    };
    let ode_opts = OdeOptions { rtol: opts.tol, atol: opts.tol * strength, ..Default::default() };

    // pass 1: locate the midpoint crossing of the first component
    let v_mid = 0.5 * (um[0] + up[0]);
    let sgn = (target[0] - seed_state[0]).signum();
    let fmid = |y: &DVector<f64>| sgn * (ode.lift(y)[0] - v_mid);
    let chunk = 0.25 / mu.abs().max(eta_pred);
    let max_range = 20.0 * half + 50.0 / eta_pred;
    let (mut xa, mut ya) = (0.0, seed.clone());
    let (xb, yb);
    loop {
        let x1 = xa + dir * chunk;
        let y1 = integrate_through(rhs, xa, &ya, &[x1], &ode_opts, guard).map_err(map_ode)?.pop().expect("one stop");
        if fmid(&y1) >= 0.0 {
            xb = x1;
            yb = y1;
            break;
        }
        xa = x1;
        ya = y1;
        if (xa).abs() > max_range {
            return Err(Error::NoConnection("trajectory never reached the midpoint".into()));
        }
    }
    // Illinois false position on the crossing
    let (mut lo, mut flo, mut ylo) = (xa, fmid(&ya), ya);
    let (mut hi, mut fhi) = (xb, fmid(&yb));
    let mut side = 0;
    for _ in 0..100 {
        let xm = lo + (hi - lo) * flo / (flo - fhi);
        let ym = integrate(rhs, lo, &ylo, xm, &ode_opts).map_err(map_ode)?;
        let fm = fmid(&ym);
        if fm.abs() < 1e-15 || (hi - lo).abs() < 1e-14 {
            lo = xm;
            break;
        }
        if fm < 0.0 {
            lo = xm;
            flo = fm;
            ylo = ym;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = xm;
            fhi = fm;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    let xi_c = lo;

    // pass 2: integrate onto the uniform output grid
    let nn = opts.nodes;
    let dx = 2.0 * half / (nn - 1) as f64;
    let x: Vec<f64> = (0..nn).map(|i| -half + i as f64 * dx).collect();
    let xi: Vec<f64> = x.iter().map(|xx| xx - opts.center + xi_c).collect();
    let mut u2 = vec![DVector::zeros(r); nn];
    let order: Vec<usize> = if dir > 0.0 { (0..nn).collect() } else { (0..nn).rev().collect() };
    let (pre, post): (Vec<usize>, Vec<usize>) = order.into_iter().partition(|&i| dir * xi[i] < 0.0);
    for &i in &pre {
        u2[i] = &e2 + &e * (delta * (mu * xi[i]).exp());
    }
    if !post.is_empty() {
        let stops: Vec<f64> = post.iter().map(|&i| xi[i]).collect();
        let sols = integrate_through(rhs, 0.0, &seed, &stops, &ode_opts, guard).map_err(map_ode)?;
        for (&i, y) in post.iter().zip(sols) {
            u2[i] = y;
        }
    }
    let values: Vec<State> = u2.iter().map(|y| ode.lift(y)).collect();
    let derivs: Vec<State> = u2
        .iter()
        .map(|y| ode.full_derivative(&ode.rhs(y).unwrap_or_else(|| DVector::from_element(r, f64::NAN))))
        .collect();
    if values.iter().chain(derivs.iter()).any(|v| v.iter().any(|z| !z.is_finite())) {
        return Err(Error::NoConnection("non-finite profile values".into()));
    }
    let end_err = (&values[nn - 1] - &up).norm().max((&values[0] - &um).norm());
    if end_err > 1e-3 * strength {
        return Err(Error::NoConnection(format!("orbit misses the far endstate by {end_err:.3e}")));
    }

    let mut prof =
        ShockProfile { model, endstates: endstates.clone(), x, values, derivs, eta: eta_pred, residual_max: 0.0 };
    prof.residual_max = profile_residual(&prof);
    if let Ok(fit) = decay_fit(&prof) {
        prof.eta = fit.eta;
    }
    Ok(prof)
}

const D1_6: [f64; 3] = [3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];

/// Sixth-order centered derivative of a nodal field at interior node `i`.
fn fd6(values: &[State], i: usize, dx: f64) -> State {
    let mut d = DVector::zeros(values[i].len());
    for (k, w) in D1_6.iter().enumerate() {
        d += (&values[i + k + 1] - &values[i - k - 1]) * *w;
    }
    d / dx
}

/// Max over interior nodes of `|B(Ū)Ū' − F(Ū) + F(U₋)|`, with `Ū'` from
/// sixth-order differences of the stored values.
pub fn profile_residual(profile: &ShockProfile) -> f64 {
    let nn = profile.x.len();
    if nn < 7 {
        return 0.0;
    }
    let dx = (profile.x[nn - 1] - profile.x[0]) / (nn - 1) as f64;
    let fm = profile.model.flux(&profile.endstates.minus());
    let mut worst = 0.0f64;
    for i in 3..nn - 3 {
        let u = &profile.values[i];
        let du = fd6(&profile.values, i, dx);
        let res = profile.model.viscosity(u) * du - profile.model.flux(u) + &fm;
        worst = worst.max(res.amax());
    }
    worst
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecayFit {
    pub eta: f64,
    pub eta_minus: f64,
    pub eta_plus: f64,
    pub r2_minus: f64,
    pub r2_plus: f64,
    pub nodes_minus: usize,
    pub nodes_plus: usize,
}

/// Least-squares line fit returning (slope, intercept, R²).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

pub fn decay_fit(profile: &ShockProfile) -> Result<DecayFit> {
    let um = profile.endstates.minus();
    let up = profile.endstates.plus();
    let mut tails = [(Vec::new(), Vec::new()), (Vec::new(), Vec::new())];
    for (x, u) in profile.x.iter().zip(&profile.values) {
        let (k, dev) = if *x < 0.0 { (0, (u - &um).norm()) } else { (1, (u - &up).norm()) };
        if dev > 1e-12 && dev < 1e-3 {
            tails[k].0.push(x.abs());
            tails[k].1.push(dev.ln());
        }
    }
    for (k, t) in tails.iter().enumerate() {
        if t.0.len() < 20 {
            return Err(Error::Resolution(format!(
                "{} tail has only {} nodes in the fitting window",
                if k == 0 { "left" } else { "right" },
                t.0.len()
            )));
        }
    }
    let (sm, _, rm) = linear_fit(&tails[0].0, &tails[0].1);
    let (sp, _, rp) = linear_fit(&tails[1].0, &tails[1].1);
    Ok(DecayFit {
        eta: (-sm).min(-sp),
        eta_minus: -sm,
        eta_plus: -sp,
        r2_minus: rm,
        r2_plus: rp,
        nodes_minus: tails[0].0.len(),
        nodes_plus: tails[1].0.len(),
    })
}

pub fn decay_rate(profile: &ShockProfile) -> Result<f64> {
    decay_fit(profile).map(|f| f.eta)
}

impl ShockProfile {
    pub fn half_length(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    pub fn dx(&self) -> f64 {
        (self.x[self.x.len() - 1] - self.x[0]) / (self.x.len() - 1) as f64
    }

    /// Cubic Hermite interpolation of `(Ū, Ū')` at `x`; outside the grid the
    /// nearest endstate is returned with zero derivative.
    pub fn eval(&self, x: f64) -> (State, State) {
        let nn = self.x.len();
        let n = self.model.n;
        if x <= self.x[0] {
            return (self.values[0].clone(), if x == self.x[0] { self.derivs[0].clone() } else { DVector::zeros(n) });
        }
        if x >= self.x[nn - 1] {
            return (
                self.values[nn - 1].clone(),
                if x == self.x[nn - 1] { self.derivs[nn - 1].clone() } else { DVector::zeros(n) },
            );
        }
        let h = self.dx();
        let i = (((x - self.x[0]) / h).floor() as usize).min(nn - 2);
        let t = (x - self.x[i]) / h;
        let (y0, y1, d0, d1) = (&self.values[i], &self.values[i + 1], &self.derivs[i], &self.derivs[i + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let u = y0 * h00 + d0 * (h10 * h) + y1 * h01 + d1 * (h11 * h);
        let g00 = (6.0 * t2 - 6.0 * t) / h;
        let g10 = 3.0 * t2 - 4.0 * t + 1.0;
        let g01 = (-6.0 * t2 + 6.0 * t) / h;
        let g11 = 3.0 * t2 - 2.0 * t;
        let du = y0 * g00 + d0 * g10 + y1 * g01 + d1 * g11;
        (u, du)
    }

    /// Whether the first component is strictly monotone along the grid.
    pub fn is_monotone(&self) -> bool {
        let s = (self.values[self.values.len() - 1][0] - self.values[0][0]).signum();
        self.values.windows(2).all(|w| s * (w[1][0] - w[0][0]) > 0.0)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.model.n;
        let mut header = vec!["x".to_string()];
        header.extend((0..n).map(|k| format!("U{k}")));
        header.extend((0..n).map(|k| format!("dU{k}")));
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.x.len() {
            let mut row = vec![fmt17(self.x[i])];
            row.extend(self.values[i].iter().map(|v| fmt17(*v)));
            row.extend(self.derivs[i].iter().map(|v| fmt17(*v)));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))?;
        Ok(())
    }

    /// Reads a profile written by [`ShockProfile::write_csv`]; the grid must
    /// be uniform.
    pub fn read_csv<R: BufRead>(r: R, model: &SystemModel, endstates: &EndstatePair) -> Result<Self> {
        let n = model.n;
        let mut x = Vec::new();
        let mut values = Vec::new();
        let mut derivs = Vec::new();
        for (ln, line) in r.lines().enumerate() {
            let line = line?;
            if ln == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: std::result::Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
            let fields = fields.map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?;
            if fields.len() != 1 + 2 * n {
                return Err(Error::Parse(format!("line {}: expected {} columns", ln + 1, 1 + 2 * n)));
            }
            x.push(fields[0]);
            values.push(DVector::from_column_slice(&fields[1..1 + n]));
            derivs.push(DVector::from_column_slice(&fields[1 + n..]));
        }
        if x.len() < 16 {
            return Err(Error::Parse("profile CSV has fewer than 16 rows".into()));
        }
        let h = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
        if x.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs()) || h <= 0.0 {
            return Err(Error::Parse("profile grid is not uniform and increasing".into()));
        }
        let mut prof = ShockProfile {
            model: model.with_speed(endstates.speed),
            endstates: endstates.clone(),
            x,
            values,
            derivs,
            eta: 0.0,
            residual_max: 0.0,
        };
        prof.residual_max = profile_residual(&prof);
        prof.eta = decay_rate(&prof).or_else(|_| predicted_decay(&prof.model, endstates).map(|(a, b)| a.min(b)))?;
        Ok(prof)
    }

    pub fn load_csv(path: &Path, model: &SystemModel, endstates: &EndstatePair) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f), model, endstates)
    }
}

/// Full-precision scientific formatting (17 significant digits).
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_isentropic_lagrangian, rankine_hugoniot};

    fn example() -> ShockProfile {
        let m = build_isentropic_lagrangian(5.0 / 3.0, 0.1, 0.0).unwrap();
        let pair = rankine_hugoniot(&m, &[1.0, 0.0], 0.7).unwrap();
        solve_profile_with(&m, &pair, &ProfileOptions::default()).unwrap()
    }

    #[test]
    fn example_profile_is_accurate_and_monotone() {
        let p = example();
        assert!(p.residual_max < 1e-8, "residual {}", p.residual_max);
        assert!(p.is_monotone());
        let fit = decay_fit(&p).unwrap();
        assert!(fit.r2_minus > 0.99 && fit.r2_plus > 0.99);
    }

    #[test]
    fn hermite_eval_matches_nodes() {
        let p = example();
        let (u, du) = p.eval(p.x[100]);
        assert!((u - &p.values[100]).norm() < 1e-15);
        assert!((du - &p.derivs[100]).norm() < 1e-12);
        let xm = 0.5 * (p.x[1000] + p.x[1001]);
        let (um, _) = p.eval(xm);
        assert!((um[0] - 0.85).abs() < 1e-2);
    }

    #[test]
    fn csv_roundtrip() {
        let p = example();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let q = ShockProfile::read_csv(std::io::Cursor::new(buf), &p.model, &p.endstates).unwrap();
        assert_eq!(p.values, q.values);
        assert_eq!(p.derivs, q.derivs);
    }
}
