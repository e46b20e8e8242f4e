//! Observational probe for time-periodic solutions near a Hopf crossing:
//! integrate from a small perturbation, project onto the oscillatory
//! eigenpair, and watch the return map for convergence to a cycle.

use crate::error::{Error, Result};
use crate::evans::{HopfCrossing, MockFunction, SpectralFunction};
use crate::linalg::{CMat, CVec};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

type C = Complex64;

/// A semi-discretized evolution `y′ = f(ε, y)` with a spatial observable.
pub trait ProbeBackend: Sync {
    fn dim(&self) -> usize;
    fn rhs(&self, eps: f64, y: &[f64], out: &mut [f64]);
    /// Nodes of the spatial observable.
    fn positions(&self) -> &[f64];
    /// The perturbation field `U(x)` carried by the state.
    fn field(&self, y: &[f64]) -> Vec<f64>;
    fn max_stable_dt(&self) -> f64;
}

/// Planar Hopf normal form coupled to a damped transverse field on a line:
///
/// `z′ = (δ + iτ*)z − (1 + iβ)|z|²z + κ z⟨g, v⟩`,
/// `v_t = v_xx − m²v + |z|²h`, `δ = ε − ε*`,
///
/// with Dirichlet ends. The observable is `U = Re z·e₁ + Im z·e₂ + v`, and
/// `v` decays in space at the transverse rate `m`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticHopf {
    pub eps_star: f64,
    pub tau_star: f64,
    pub beta: f64,
    pub kappa: f64,
    pub mass: f64,
    pub half_length: f64,
    pub dx: f64,
    #[serde(skip)]
    x: Vec<f64>,
    #[serde(skip)]
    bump: Vec<f64>,
}

impl SyntheticHopf {
    pub fn new(
        eps_star: f64,
        tau_star: f64,
        beta: f64,
        kappa: f64,
        mass: f64,
        half_length: f64,
        dx: f64,
    ) -> Result<Self> {
        if !(tau_star > 0.0 && mass > 0.0 && dx > 0.0 && half_length > 10.0 * dx) {
            return Err(Error::InvalidParameter("synthetic backend needs τ*, m, dx > 0 and L ≫ dx".into()));
        }
        let cells = (2.0 * half_length / dx).round() as usize;
        let dx = 2.0 * half_length / cells as f64;
        // interior nodes only; v vanishes at ±L
        let x: Vec<f64> = (1..cells).map(|i| -half_length + i as f64 * dx).collect();
        let bump = x.iter().map(|x| (-x * x).exp()).collect();
        Ok(Self { eps_star, tau_star, beta, kappa, mass, half_length, dx, x, bump })
    }

    /// Transverse spatial decay rate of the field.
    pub fn transverse_decay(&self) -> f64 {
        self.mass
    }

    /// `λ ↦ (λ − δ − iτ*)(λ − δ + iτ*)`, the oscillatory factor of the
    /// linearization; the transverse spectrum lies left of `−m²`.
    pub fn spectral_family(&self) -> impl Fn(f64) -> Result<Box<dyn SpectralFunction>> + Sync + '_ {
        move |eps: f64| {
            let d = eps - self.eps_star;
            let t = self.tau_star;
            Ok(Box::new(MockFunction(move |l: C| (l - C::new(d, t)) * (l - C::new(d, -t))))
                as Box<dyn SpectralFunction>)
        }
    }

    fn coupling(&self, v: &[f64]) -> f64 {
        v.iter().zip(&self.bump).map(|(a, b)| a * b).sum::<f64>() * self.dx
    }
}

impl Default for SyntheticHopf {
    fn default() -> Self {
        Self::new(0.5, 1.0, 0.05, 0.5, 1.0, 20.0, 0.1).expect("valid defaults")
    }
}

impl ProbeBackend for SyntheticHopf {
    fn dim(&self) -> usize {
        2 + self.x.len()
    }

    fn rhs(&self, eps: f64, y: &[f64], out: &mut [f64]) {
        let d = eps - self.eps_star;
        let z = C::new(y[0], y[1]);
        let v = &y[2..];
        let r2 = z.norm_sqr();
        let dz = C::new(d, self.tau_star) * z - C::new(1.0, self.beta) * r2 * z + self.kappa * self.coupling(v) * z;
        out[0] = dz.re;
        out[1] = dz.im;
        let nn = v.len();
        let h2 = self.dx * self.dx;
        let m2 = self.mass * self.mass;
        for i in 0..nn {
            let l = if i > 0 { v[i - 1] } else { 0.0 };
            let r = if i + 1 < nn { v[i + 1] } else { 0.0 };
            out[2 + i] = (l - 2.0 * v[i] + r) / h2 - m2 * v[i] + r2 * self.bump[i];
        }
    }

    fn positions(&self) -> &[f64] {
        &self.x
    }

    fn field(&self, y: &[f64]) -> Vec<f64> {
        self.x
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let g = (-x * x).exp();
                y[0] * g + y[1] * x * g + y[2 + i]
            })
            .collect()
    }

    fn max_stable_dt(&self) -> f64 {
        // RK4 covers the real interval [−2.78, 0]; keep a margin
        2.0 / (4.0 / (self.dx * self.dx) + self.mass * self.mass)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub eps: f64,
    pub initial_amplitude: f64,
    /// Step; the backend's stable step when absent.
    pub dt: Option<f64>,
    pub t_max: f64,
    /// Return-map displacement threshold relative to the orbit amplitude.
    pub return_tol: f64,
    /// Amplitude below which the trajectory counts as decayed.
    pub decay_floor: f64,
    /// Number of η values tried for localization, spaced by `m/8`.
    pub eta_steps: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            eps: 0.52,
            initial_amplitude: 1e-3,
            dt: None,
            t_max: 5000.0,
            return_tol: 1e-4,
            decay_floor: 1e-8,
            eta_steps: 16,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeResult {
    pub period_estimate: f64,
    /// Mean of `2|w|` over the last period, `w` the projected coordinate.
    pub amplitude: f64,
    /// Largest tried η for which the weighted envelope stays bounded.
    pub localization_eta: f64,
    pub converged_at: f64,
    pub returns: usize,
    /// Projected eigenvalue of the linearization at the probed ε.
    pub eigenvalue: C,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub result: Option<ProbeResult>,
    /// Why no cycle was reported, when it was not.
    pub reason: Option<String>,
    pub final_amplitude: f64,
    pub elapsed_time: f64,
    /// The time budget ran out before the orbit settled or decayed.
    pub exhausted: bool,
}

/// Jacobian of the backend at the origin by central differences.
fn jacobian(backend: &dyn ProbeBackend, eps: f64) -> DMatrix<f64> {
    let d = backend.dim();
    let h = 1e-7;
    let mut j = DMatrix::zeros(d, d);
    let mut y = vec![0.0; d];
    let (mut fp, mut fm) = (vec![0.0; d], vec![0.0; d]);
    for c in 0..d {
        y[c] = h;
        backend.rhs(eps, &y, &mut fp);
        y[c] = -h;
        backend.rhs(eps, &y, &mut fm);
        y[c] = 0.0;
        for r in 0..d {
            j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    j
}

/// Inverse iteration for the eigenvector of `m` nearest `shift`.
fn inverse_iteration(m: &CMat, shift: C) -> Result<(C, CVec)> {
    let d = m.nrows();
    let a = m - CMat::identity(d, d) * shift;
    let lu = a.lu();
    let mut x = CVec::from_fn(d, |i, _| C::new(1.0 / (1.0 + i as f64), 0.3));
    let mut lambda = shift;
    for _ in 0..50 {
        let y = lu.solve(&x).ok_or_else(|| Error::Continuation("shift is an exact eigenvalue".into()))?;
        let nrm = y.norm();
        if !(nrm.is_finite() && nrm > 0.0) {
            return Err(Error::Continuation("inverse iteration failed".into()));
        }
        x = y / C::new(nrm, 0.0);
        let mx = m * &x;
        let next = x.dotc(&mx);
        if (next - lambda).norm() < 1e-13 * (1.0 + next.norm()) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    Ok((lambda, x))
}

/// Right and left eigenvectors of the oscillatory pair, `φ` scaled to unit
/// maximum modulus and `ψ` normalized by `ψᵀφ = 1`.
fn eigenpair(backend: &dyn ProbeBackend, eps: f64, guess: C) -> Result<(C, CVec, CVec)> {
    let j = jacobian(backend, eps).map(|v| C::new(v, 0.0));
    let (lambda, mut phi) = inverse_iteration(&j, guess)?;
    let (_, psi) = inverse_iteration(&j.transpose(), lambda)?;
    let k = phi.iter().enumerate().fold(0, |b, (i, v)| if v.norm() > phi[b].norm() { i } else { b });
    let scale = phi[k];
    phi /= scale;
    let pairing = psi.iter().zip(phi.iter()).map(|(a, b)| a * b).sum::<C>();
    if pairing.norm() < 1e-12 {
        return Err(Error::Continuation("left and right eigenvectors are orthogonal".into()));
    }
    Ok((lambda, phi, psi / pairing))
}

fn rk4(backend: &dyn ProbeBackend, eps: f64, y: &mut [f64], dt: f64, k: &mut [Vec<f64>; 5]) {
    let n = y.len();
    let [k1, k2, k3, k4, tmp] = k;
    backend.rhs(eps, y, k1);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * dt * k1[i];
    }
    backend.rhs(eps, tmp, k2);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * dt * k2[i];
    }
    backend.rhs(eps, tmp, k3);
    for i in 0..n {
        tmp[i] = y[i] + dt * k3[i];
    }
    backend.rhs(eps, tmp, k4);
    for i in 0..n {
        y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Largest `η = j·rate/8` such that `e^{η|x|}M(x)` on `L/4 ≤ |x| ≤ L/2` stays
/// below its maximum on `|x| ≤ L/4`, for all smaller `η` as well.
pub fn localization_eta(x: &[f64], envelope: &[f64], rate: f64, steps: usize) -> f64 {
    let l = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut best = 0.0;
    for j in 1..=steps {
        let eta = j as f64 * rate / 8.0;
        let (mut inner, mut outer) = (0.0f64, 0.0f64);
        for (xi, m) in x.iter().zip(envelope) {
            let w = (eta * xi.abs()).exp() * m;
            if xi.abs() <= 0.25 * l {
                inner = inner.max(w);
            } else if xi.abs() <= 0.5 * l {
                outer = outer.max(w);
            }
        }
        if outer > inner {
            break;
        }
        best = eta;
    }
    best
}

/// Runs the probe at `cfg.eps` near the supplied crossing. Returns `None`
/// (with a reason) when the trajectory decays or no cycle is detected
/// within `t_max`.
pub fn periodic_probe(
    backend: &dyn ProbeBackend,
    crossing: &HopfCrossing,
    decay_rate: f64,
    cfg: &ProbeConfig,
) -> Result<ProbeOutcome> {
    if !(cfg.initial_amplitude > 0.0 && cfg.t_max > 0.0 && cfg.return_tol > 0.0) {
        return Err(Error::InvalidParameter("probe needs positive amplitude, time budget and tolerance".into()));
    }
    let guess = C::new(cfg.eps - crossing.eps_star, crossing.tau_star);
    let (eigenvalue, phi, psi) = eigenpair(backend, cfg.eps, guess)?;
    let dt = cfg.dt.unwrap_or_else(|| backend.max_stable_dt());
    if dt > backend.max_stable_dt() * (1.0 + 1e-12) {
        return Err(Error::StepRejected(format!("dt = {dt} exceeds {}", backend.max_stable_dt())));
    }
    let d = backend.dim();
    let project = |y: &[f64]| psi.iter().zip(y).map(|(p, v)| p * v).sum::<C>();
    let mut y: Vec<f64> = phi.iter().map(|p| 2.0 * cfg.initial_amplitude * p.re).collect();
    let mut k: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; d]);
    let mut t = 0.0;
    let mut w = project(&y);
    let mut crossings: Vec<(f64, f64)> = Vec::new();
    let finish = |reason: &str, w: C, t: f64| ProbeOutcome {
        result: None,
        reason: Some(reason.to_string()),
        final_amplitude: 2.0 * w.norm(),
        elapsed_time: t,
        exhausted: t >= cfg.t_max,
    };
    while t < cfg.t_max {
        rk4(backend, cfg.eps, &mut y, dt, &mut k);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Blowup { time: t });
        }
        t += dt;
        let wn = project(&y);
        // upward crossings of Re w = 0 form the return section
        if w.re < 0.0 && wn.re >= 0.0 {
            let f = -w.re / (wn.re - w.re);
            crossings.push((t - dt + f * dt, (1.0 - f) * w.norm() + f * wn.norm()));
        }
        w = wn;
        if 2.0 * w.norm() < cfg.decay_floor {
            return Ok(finish("decayed to zero", w, t));
        }
        let m = crossings.len();
        if m >= 4 {
            let p = |i: usize| crossings[m - 1 - i].1;
            let tol = cfg.return_tol * p(0);
            if (p(0) - p(1)).abs() < tol && (p(1) - p(2)).abs() < tol {
                let period = (crossings[m - 1].0 - crossings[m - 3].0) / 2.0;
                // one more period for the amplitude and the spatial envelope
                let steps = (period / dt).ceil() as usize;
                let mut envelope = vec![0.0f64; backend.positions().len()];
                let mut amp = 0.0;
                for _ in 0..steps {
                    rk4(backend, cfg.eps, &mut y, dt, &mut k);
                    t += dt;
                    amp += 2.0 * project(&y).norm();
                    for (e, u) in envelope.iter_mut().zip(backend.field(&y)) {
                        *e = e.max(u.abs());
                    }
                }
                let eta = localization_eta(backend.positions(), &envelope, decay_rate, cfg.eta_steps);
                return Ok(ProbeOutcome {
                    result: Some(ProbeResult {
                        period_estimate: period,
                        amplitude: amp / steps as f64,
                        localization_eta: eta,
                        converged_at: t,
                        returns: m,
                        eigenvalue,
                    }),
                    reason: None,
                    final_amplitude: 2.0 * w.norm(),
                    elapsed_time: t,
                    exhausted: false,
                });
            }
        }
    }
    Ok(finish("no limit cycle within the time budget", w, t))
}
