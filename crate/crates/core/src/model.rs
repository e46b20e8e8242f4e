//! Conservation-law systems `U_t + F(U)_x = (B(U) U_x)_x` in a frame moving
//! with speed `s`, their Jacobians, endstate algebra and structural checks.

use crate::error::{Error, Result};
use crate::linalg;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub type State = DVector<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Lagrangian,
    Eulerian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// `U = (v, u)`, `p = a0 v^-γ`, `b = ν/v`.
    IsentropicLagrangian,
    /// Conservative `U = (ρ, m = ρu)`, `p = a0 ρ^γ/γ`, viscous term `ν u_xx`.
    IsentropicEulerian,
    /// `U = (v, u, E = e + u²/2)`, `p = (γ-1) e/v`, `T = e/c`.
    FullNsLagrangian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub gamma: f64,
    pub nu: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default = "one")]
    pub a0: f64,
    #[serde(default = "one")]
    pub cv: f64,
}

fn one() -> f64 {
    1.0
}

impl ModelParams {
    pub fn isentropic(gamma: f64, nu: f64) -> Self {
        Self { gamma, nu, kappa: 0.0, a0: 1.0, cv: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    pub kind: ModelKind,
    pub n: usize,
    pub r: usize,
    pub frame: Frame,
    pub params: ModelParams,
    pub speed: f64,
    /// Bifurcation parameter carried along for families; the models here
    /// realize it through `speed` and `params`.
    pub epsilon: f64,
}

fn check_finite(vals: &[(&str, f64)]) -> Result<()> {
    for (name, v) in vals {
        if !v.is_finite() {
            return Err(Error::InvalidParameter(format!("{name} = {v} is not finite")));
        }
    }
    Ok(())
}

pub fn build_isentropic_lagrangian(gamma: f64, nu: f64, speed: f64) -> Result<SystemModel> {
    check_finite(&[("gamma", gamma), ("nu", nu), ("speed", speed)])?;
    if gamma <= 1.0 {
        return Err(Error::InvalidParameter(format!("gamma = {gamma} must exceed 1")));
    }
    if nu <= 0.0 {
        return Err(Error::InvalidParameter(format!("nu = {nu} must be positive")));
    }
    Ok(SystemModel {
        kind: ModelKind::IsentropicLagrangian,
        n: 2,
        r: 1,
        frame: Frame::Lagrangian,
        params: ModelParams::isentropic(gamma, nu),
        speed,
        epsilon: 0.0,
    })
}

/// The pressure is normalized as `p(ρ) = ρ^γ/γ` so that `p'(1) = 1`; `γ = 1`
/// is allowed here.
pub fn build_isentropic_eulerian(gamma: f64, nu: f64, speed: f64) -> Result<SystemModel> {
    check_finite(&[("gamma", gamma), ("nu", nu), ("speed", speed)])?;
    if gamma < 1.0 {
        return Err(Error::InvalidParameter(format!("gamma = {gamma} must be at least 1")));
    }
    if nu <= 0.0 {
        return Err(Error::InvalidParameter(format!("nu = {nu} must be positive")));
    }
    Ok(SystemModel {
        kind: ModelKind::IsentropicEulerian,
        n: 2,
        r: 1,
        frame: Frame::Eulerian,
        params: ModelParams::isentropic(gamma, nu),
        speed,
        epsilon: 0.0,
    })
}

pub fn build_full_ns_lagrangian(params: ModelParams, speed: f64) -> Result<SystemModel> {
    check_finite(&[
        ("gamma", params.gamma),
        ("nu", params.nu),
        ("kappa", params.kappa),
        ("cv", params.cv),
        ("speed", speed),
    ])?;
    if params.gamma <= 1.0 {
        return Err(Error::InvalidParameter("gamma must exceed 1".into()));
    }
    if params.nu <= 0.0 || params.kappa <= 0.0 {
        return Err(Error::InvalidParameter("nu and kappa must be positive".into()));
    }
    if params.cv <= 0.0 {
        return Err(Error::InvalidParameter("cv must be positive (T_e > 0)".into()));
    }
    Ok(SystemModel {
        kind: ModelKind::FullNsLagrangian,
        n: 3,
        r: 2,
        frame: Frame::Lagrangian,
        params,
        speed,
        epsilon: 0.0,
    })
}

impl SystemModel {
    pub fn with_speed(&self, speed: f64) -> Self {
        Self { speed, ..*self }
    }

    /// Size of the hyperbolic block.
    pub fn n1(&self) -> usize {
        self.n - self.r
    }

    /// Pressure and its partial derivatives with respect to the state.
    pub fn pressure(&self, u: &State) -> f64 {
        let p = &self.params;
        match self.kind {
            ModelKind::IsentropicLagrangian => p.a0 * u[0].powf(-p.gamma),
            ModelKind::IsentropicEulerian => p.a0 * u[0].powf(p.gamma) / p.gamma,
            ModelKind::FullNsLagrangian => (p.gamma - 1.0) * self.internal_energy(u) / u[0],
        }
    }

    /// Internal energy `e = E - u²/2` (full model only).
    pub fn internal_energy(&self, u: &State) -> f64 {
        u[2] - 0.5 * u[1] * u[1]
    }

    pub fn temperature(&self, u: &State) -> f64 {
        self.internal_energy(u) / self.params.cv
    }

    /// `dp/dv` for Lagrangian models, `dp/dρ` for the Eulerian one.
    pub fn pressure_derivative(&self, u: &State) -> f64 {
        let p = &self.params;
        match self.kind {
            ModelKind::IsentropicLagrangian => -p.gamma * p.a0 * u[0].powf(-p.gamma - 1.0),
            ModelKind::IsentropicEulerian => p.a0 * u[0].powf(p.gamma - 1.0),
            ModelKind::FullNsLagrangian => -self.pressure(u) / u[0],
        }
    }

    pub fn flux(&self, u: &State) -> State {
        let s = self.speed;
        match self.kind {
            ModelKind::IsentropicLagrangian => DVector::from_vec(vec![-s * u[0] - u[1], -s * u[1] + self.pressure(u)]),
            ModelKind::IsentropicEulerian => {
                let (rho, m) = (u[0], u[1]);
                DVector::from_vec(vec![m - s * rho, m * m / rho + self.pressure(u) - s * m])
            }
            ModelKind::FullNsLagrangian => {
                let p = self.pressure(u);
                DVector::from_vec(vec![-s * u[0] - u[1], -s * u[1] + p, -s * u[2] + p * u[1]])
            }
        }
    }

    pub fn flux_jacobian(&self, u: &State) -> DMatrix<f64> {
        let s = self.speed;
        match self.kind {
            ModelKind::IsentropicLagrangian => {
                DMatrix::from_row_slice(2, 2, &[-s, -1.0, self.pressure_derivative(u), -s])
            }
            ModelKind::IsentropicEulerian => {
                let (rho, m) = (u[0], u[1]);
                let w = m / rho;
                DMatrix::from_row_slice(2, 2, &[-s, 1.0, self.pressure_derivative(u) - w * w, 2.0 * w - s])
            }
            ModelKind::FullNsLagrangian => {
                let g1 = self.params.gamma - 1.0;
                let (v, vel) = (u[0], u[1]);
                let p = self.pressure(u);
                let p_v = -p / v;
                let p_u = -g1 * vel / v;
                let p_e = g1 / v;
                DMatrix::from_row_slice(
                    3,
                    3,
                    &[-s, -1.0, 0.0, p_v, -s + p_u, p_e, vel * p_v, p + vel * p_u, -s + vel * p_e],
                )
            }
        }
    }

    /// Full n×n viscosity matrix `B(U)`.
    pub fn viscosity(&self, u: &State) -> DMatrix<f64> {
        let b = self.viscosity_point(u.as_slice());
        DMatrix::from_fn(self.n, self.n, |i, j| b[i][j])
    }

    /// `B(U)` as a fixed-size array (entries beyond `n` are zero).
    pub fn viscosity_point(&self, u: &[f64]) -> [[f64; 3]; 3] {
        let p = &self.params;
        let mut b = [[0.0; 3]; 3];
        match self.kind {
            ModelKind::IsentropicLagrangian => b[1][1] = p.nu / u[0],
            ModelKind::IsentropicEulerian => {
                let (rho, m) = (u[0], u[1]);
                b[1][0] = -p.nu * m / (rho * rho);
                b[1][1] = p.nu / rho;
            }
            ModelKind::FullNsLagrangian => {
                let (v, vel) = (u[0], u[1]);
                b[1][1] = p.nu / v;
                b[2][1] = (p.nu - p.kappa / p.cv) * vel / v;
                b[2][2] = p.kappa / (v * p.cv);
            }
        }
        b
    }

    /// `B(Ū + W) − B(Ū)`, evaluated without cancellation.
    pub fn viscosity_increment(&self, ub: &[f64], w: &[f64]) -> [[f64; 3]; 3] {
        let p = &self.params;
        let mut d = [[0.0; 3]; 3];
        // 1/(a + h) − 1/a
        let inv_inc = |a: f64, h: f64| -h / (a * (a + h));
        match self.kind {
            ModelKind::IsentropicLagrangian => d[1][1] = p.nu * inv_inc(ub[0], w[0]),
            ModelKind::IsentropicEulerian => {
                let (rho, m, r, dm) = (ub[0], ub[1], w[0], w[1]);
                let rr = rho + r;
                d[1][0] = -p.nu * (dm * rho * rho - m * r * (2.0 * rho + r)) / (rho * rho * rr * rr);
                d[1][1] = p.nu * inv_inc(rho, r);
            }
            ModelKind::FullNsLagrangian => {
                let (v, vel, dv, du) = (ub[0], ub[1], w[0], w[1]);
                d[1][1] = p.nu * inv_inc(v, dv);
                d[2][1] = (p.nu - p.kappa / p.cv) * (du * v - vel * dv) / (v * (v + dv));
                d[2][2] = p.kappa / p.cv * inv_inc(v, dv);
            }
        }
        d
    }

    /// `F(Ū + W) − F(Ū)`, evaluated without cancellation so that small
    /// perturbations keep full relative accuracy.
    pub fn flux_increment(&self, ub: &[f64], w: &[f64]) -> [f64; 3] {
        let s = self.speed;
        let p = &self.params;
        match self.kind {
            ModelKind::IsentropicLagrangian => {
                let dp = p.a0 * ub[0].powf(-p.gamma) * (-p.gamma * (w[0] / ub[0]).ln_1p()).exp_m1();
                [-s * w[0] - w[1], -s * w[1] + dp, 0.0]
            }
            ModelKind::IsentropicEulerian => {
                let (rho, m, r, dm) = (ub[0], ub[1], w[0], w[1]);
                let dp = p.a0 * rho.powf(p.gamma) / p.gamma * (p.gamma * (r / rho).ln_1p()).exp_m1();
                let dq = ((2.0 * m + dm) * dm * rho - m * m * r) / (rho * (rho + r));
                [dm - s * r, dq + dp - s * dm, 0.0]
            }
            ModelKind::FullNsLagrangian => {
                let (v, vel, dv, du, de_tot) = (ub[0], ub[1], w[0], w[1], w[2]);
                let e = ub[2] - 0.5 * vel * vel;
                let de = de_tot - vel * du - 0.5 * du * du;
                let g1 = p.gamma - 1.0;
                let pb = g1 * e / v;
                let dp = g1 * (de * v - e * dv) / (v * (v + dv));
                [-s * dv - du, -s * du + dp, -s * de_tot + dp * vel + (pb + dp) * du]
            }
        }
    }

    /// Directional derivative `dB(U)[dU]`.
    pub fn viscosity_derivative(&self, u: &State, du: &State) -> DMatrix<f64> {
        let p = &self.params;
        let mut d = DMatrix::zeros(self.n, self.n);
        match self.kind {
            ModelKind::IsentropicLagrangian => d[(1, 1)] = -p.nu * du[0] / (u[0] * u[0]),
            ModelKind::IsentropicEulerian => {
                let (rho, m) = (u[0], u[1]);
                d[(1, 0)] = -p.nu * du[1] / (rho * rho) + 2.0 * p.nu * m * du[0] / (rho * rho * rho);
                d[(1, 1)] = -p.nu * du[0] / (rho * rho);
            }
            ModelKind::FullNsLagrangian => {
                let (v, vel) = (u[0], u[1]);
                let c = p.nu - p.kappa / p.cv;
                d[(1, 1)] = -p.nu * du[0] / (v * v);
                d[(2, 1)] = c * (du[1] / v - vel * du[0] / (v * v));
                d[(2, 2)] = -p.kappa * du[0] / (v * v * p.cv);
            }
        }
        d
    }

    /// Block-diagonal symmetrizer `A⁰(U)`.
    pub fn symmetrizer(&self, u: &State) -> DMatrix<f64> {
        match self.kind {
            ModelKind::IsentropicLagrangian => {
                DMatrix::from_row_slice(2, 2, &[-self.pressure_derivative(u), 0.0, 0.0, 1.0])
            }
            ModelKind::IsentropicEulerian => {
                // Hessian of the mechanical energy ρ e(ρ) + m²/2ρ
                let (rho, m) = (u[0], u[1]);
                let pp = self.pressure_derivative(u);
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[pp / rho + m * m / rho.powi(3), -m / (rho * rho), -m / (rho * rho), 1.0 / rho],
                )
            }
            ModelKind::FullNsLagrangian => {
                let b = self.viscosity(u);
                let (b11, b21, b22) = (b[(1, 1)], b[(2, 1)], b[(2, 2)]);
                let w = if b21 == 0.0 { 1.0 } else { (2.0 * b11 * b22 / (b21 * b21)).min(1.0) };
                let mut a0 = DMatrix::zeros(3, 3);
                a0[(0, 0)] = -self.pressure_derivative(u);
                a0[(1, 1)] = 1.0;
                a0[(2, 2)] = w;
                a0
            }
        }
    }

    /// Whether the state lies in the physical domain of the model.
    pub fn admissible_state(&self, u: &State) -> bool {
        if u.iter().any(|x| !x.is_finite()) || u[0] <= 0.0 {
            return false;
        }
        match self.kind {
            ModelKind::FullNsLagrangian => self.internal_energy(u) > 0.0,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndstatePair {
    pub u_minus: Vec<f64>,
    pub u_plus: Vec<f64>,
    pub speed: f64,
    /// (negative eigenvalues of A₋, positive eigenvalues of A₊)
    pub lax_indices: (usize, usize),
}

impl EndstatePair {
    pub fn minus(&self) -> State {
        DVector::from_vec(self.u_minus.clone())
    }
    pub fn plus(&self) -> State {
        DVector::from_vec(self.u_plus.clone())
    }
    /// Number of independent connections (ℓ = 1 for a Lax shock).
    pub fn connection_dimension(&self, n: usize) -> isize {
        // incoming characteristics minus n
        (n - self.lax_indices.0 + n - self.lax_indices.1) as isize - n as isize
    }
    pub fn is_lax(&self, n: usize) -> bool {
        self.connection_dimension(n) == 1
    }
    pub fn strength(&self) -> f64 {
        (self.plus() - self.minus()).norm()
    }
}

fn real_eigs(m: &DMatrix<f64>) -> Vec<f64> {
    linalg::eigenvalues_real(m)
        .map(|ev| ev.iter().map(|z| if z.im.abs() > 1e-12 * (1.0 + z.norm()) { f64::NAN } else { z.re }).collect())
        .unwrap_or_default()
}

fn lax_indices(model: &SystemModel, um: &State, up: &State) -> (usize, usize) {
    let em = real_eigs(&model.flux_jacobian(um));
    let ep = real_eigs(&model.flux_jacobian(up));
    (em.iter().filter(|&&x| x < 0.0).count(), ep.iter().filter(|&&x| x > 0.0).count())
}

/// Solves the Rankine–Hugoniot conditions `F(U₊) = F(U₋)` with the first
/// component of `U₊` prescribed; the speed sign is selected by Lax counting.
pub fn rankine_hugoniot(model: &SystemModel, u_minus: &[f64], v_plus: f64) -> Result<EndstatePair> {
    if u_minus.len() != model.n {
        return Err(Error::InvalidParameter(format!("u_minus has {} components, expected {}", u_minus.len(), model.n)));
    }
    let um = DVector::from_column_slice(u_minus);
    if !v_plus.is_finite() || !model.admissible_state(&um) {
        return Err(Error::InvalidParameter("endstate outside the physical domain".into()));
    }
    if (v_plus - u_minus[0]).abs() <= 1e-14 * u_minus[0].abs().max(1.0) {
        return Err(Error::ZeroStrength);
    }
    let candidates = match model.kind {
        ModelKind::IsentropicLagrangian => {
            let vm = um[0];
            let mut up = um.clone();
            up[0] = v_plus;
            let pm = model.pressure(&um);
            let pp = model.pressure(&up);
            let s2 = -(pp - pm) / (v_plus - vm);
            if !(s2 > 0.0) {
                return Err(Error::NonAdmissible(format!("s² = {s2} is not positive")));
            }
            let s = s2.sqrt();
            [s, -s]
                .iter()
                .map(|&s| {
                    let mut up = up.clone();
                    up[1] = um[1] - s * (v_plus - vm);
                    (s, up)
                })
                .collect::<Vec<_>>()
        }
        _ => newton_candidates(model, &um, v_plus)?,
    };
    let mut fallback = None;
    for (s, up) in candidates {
        let m = model.with_speed(s);
        let idx = lax_indices(&m, &um, &up);
        let pair = EndstatePair {
            u_minus: um.iter().cloned().collect(),
            u_plus: up.iter().cloned().collect(),
            speed: s,
            lax_indices: idx,
        };
        if pair.is_lax(model.n) {
            return Ok(pair);
        }
        fallback.get_or_insert(pair);
    }
    match fallback {
        Some(p) => Err(Error::NonAdmissible(format!("no Lax speed: s = {}, lax indices {:?}", p.speed, p.lax_indices))),
        None => Err(Error::NoConnection("Rankine–Hugoniot Newton iteration did not converge".into())),
    }
}

fn newton_candidates(model: &SystemModel, um: &State, v_plus: f64) -> Result<Vec<(f64, State)>> {
    let n = model.n;
    let n1 = model.n1();
    let base = model.with_speed(0.0);
    let amax = real_eigs(&base.flux_jacobian(um)).iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let mut out = Vec::new();
    for sign in [1.0, -1.0] {
        let mut s = sign * amax.max(1e-3);
        let mut up = um.clone();
        up[0] = v_plus;
        if model.kind == ModelKind::FullNsLagrangian {
            // isentropic estimate p v^γ = const
            let g = model.params.gamma;
            let pm = model.pressure(um);
            let pp = pm * (um[0] / v_plus).powf(g);
            let s2 = -(pp - pm) / (v_plus - um[0]);
            if s2 > 0.0 {
                s = sign * s2.sqrt();
            }
            up[1] = um[1] - s * (v_plus - um[0]);
            up[2] = pp * v_plus / (g - 1.0) + 0.5 * up[1] * up[1];
        } else if model.frame == Frame::Lagrangian {
            up[1] = um[1] - s * (v_plus - um[0]);
        } else {
            up[n1] = um[n1] + s * (v_plus - um[0]);
        }
        let mut ok = false;
        for _ in 0..200 {
            let m = model.with_speed(s);
            let res = m.flux(&up) - m.flux(um);
            let norm = res.norm();
            if norm < 1e-13 * (1.0 + m.flux(um).norm()) {
                ok = true;
                break;
            }
            let a = m.flux_jacobian(&up);
            let mut jac = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..model.r {
                    jac[(i, j)] = a[(i, n1 + j)];
                }
                jac[(i, model.r)] = -(up[i] - um[i]);
            }
            let Some(step) = jac.lu().solve(&res) else { break };
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-6 {
                let mut trial = up.clone();
                for j in 0..model.r {
                    trial[n1 + j] -= t * step[j];
                }
                let ts = s - t * step[model.r];
                let mt = model.with_speed(ts);
                if mt.admissible_state(&trial) && (mt.flux(&trial) - mt.flux(um)).norm() < norm * (1.0 - 1e-4 * t) {
                    up = trial;
                    s = ts;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if ok && s.abs() > 1e-8 && (up.clone() - um).norm() > 1e-10 {
            out.push((s, up));
        }
    }
    if out.is_empty() {
        return Err(Error::NoConnection("Rankine–Hugoniot Newton iteration did not converge".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub a1_ok: bool,
    pub a2_ok: bool,
    pub h1_ok: bool,
    pub h2_ok: bool,
    pub h3_ok: bool,
    pub h3_theta: f64,
    pub h4: String,
    pub details: Vec<String>,
}

/// Log-uniform ξ grid on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1).max(1) as f64).exp()).collect()
}

fn sub(m: &DMatrix<f64>, r0: usize, c0: usize, nr: usize, nc: usize) -> DMatrix<f64> {
    m.view((r0, c0), (nr, nc)).into_owned()
}

fn min_sym_eig(m: &DMatrix<f64>) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

pub fn check_structure(model: &SystemModel, states: &[State], xi_grid: &[f64]) -> AssumptionReport {
    let n = model.n;
    let n1 = model.n1();
    let r = model.r;
    let mut details = Vec::new();
    let (mut a1, mut a2, mut h1, mut h2) = (true, true, true, true);
    let mut theta = f64::INFINITY;

    let mut h1_pattern: Option<Vec<usize>> = None;
    for (k, u) in states.iter().enumerate() {
        // (A1): block form of B at the state and at offset states
        let mut probes = vec![u.clone()];
        for j in 0..n {
            let mut p = u.clone();
            p[j] += 0.1 * u[j].abs().max(0.1);
            probes.push(p);
        }
        for p in &probes {
            let b = model.viscosity(p);
            let scale = b.amax().max(1e-300);
            let off = sub(&b, 0, 0, n1, n).amax().max(sub(&b, n1, 0, r, n1).amax());
            if off > 1e-14 * scale {
                a1 = false;
                details.push(format!("state {k}: B has nonzero off-block entries ({off:.3e})"));
                break;
            }
            if sub(&b, n1, n1, r, r).determinant().abs() < 1e-14 {
                a1 = false;
                details.push(format!("state {k}: parabolic block b is singular"));
                break;
            }
        }
        // (A1): first flux block linear, i.e. its Jacobian is state-independent
        let j0 = fd_jacobian(model, u);
        for p in probes.iter().skip(1) {
            let j1 = fd_jacobian(model, p);
            let d = (sub(&j0, 0, 0, n1, n) - sub(&j1, 0, 0, n1, n)).amax();
            if d > 1e-6 {
                a1 = false;
                details.push(format!("state {k}: first flux block is nonlinear ({d:.3e})"));
                break;
            }
        }

        let a = model.flux_jacobian(u);
        let a0 = model.symmetrizer(u);
        let b = model.viscosity(u);
        // (A2)
        let a0_11 = sub(&a0, 0, 0, n1, n1);
        let a0_22 = sub(&a0, n1, n1, r, r);
        let sym_defect = {
            let m = &a0_11 * sub(&a, 0, 0, n1, n1);
            (&m - m.transpose()).amax()
        };
        let a0_pd = min_sym_eig(&a0);
        let diss = min_sym_eig(&(&a0_22 * sub(&b, n1, n1, r, r)));
        let a0_block = sub(&a0, 0, n1, n1, r).amax().max(sub(&a0, n1, 0, r, n1).amax());
        if sym_defect > 1e-12 || a0_pd <= 0.0 || diss <= 0.0 || a0_block > 0.0 {
            a2 = false;
            details.push(format!(
                "state {k}: A2 fails (asym {sym_defect:.2e}, min eig A0 {a0_pd:.3e}, min eig sym(A0_22 b) {diss:.3e})"
            ));
        }
        // (H1)
        let a11 = linalg::to_complex(&sub(&a, 0, 0, n1, n1));
        match linalg::eigenvalues(&a11) {
            Ok(ev) => {
                let real = ev.iter().all(|z| z.im.abs() <= 1e-10 * (1.0 + z.norm()));
                let nonzero = ev.iter().all(|z| z.norm() > 1e-10);
                let cond = linalg::eigenvector_condition(&a11).unwrap_or(f64::INFINITY);
                let mut sorted: Vec<f64> = ev.iter().map(|z| z.re).collect();
                sorted.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
                let mut pattern = Vec::new();
                let mut i = 0;
                while i < sorted.len() {
                    let mut j = i + 1;
                    while j < sorted.len() && (sorted[j] - sorted[i]).abs() < 1e-8 * (1.0 + sorted[i].abs()) {
                        j += 1;
                    }
                    pattern.push(j - i);
                    i = j;
                }
                let consistent = match &h1_pattern {
                    None => {
                        h1_pattern = Some(pattern.clone());
                        true
                    }
                    Some(p) => *p == pattern,
                };
                if !(real && nonzero && cond < 1e8 && consistent) {
                    h1 = false;
                    details
                        .push(format!("state {k}: H1 fails, spectrum of A11 {ev:?}, eigenvector condition {cond:.3e}"));
                }
            }
            Err(e) => {
                h1 = false;
                details.push(format!("state {k}: H1 eigensolve failed: {e}"));
            }
        }
        // (H2)
        match linalg::eigenvalues_real(&a) {
            Ok(ev) => {
                let real = ev.iter().all(|z| z.im.abs() <= 1e-10 * (1.0 + z.norm()));
                let nonzero = ev.iter().all(|z| z.norm() > 1e-10);
                let mut simple = true;
                for i in 0..ev.len() {
                    for j in i + 1..ev.len() {
                        if (ev[i] - ev[j]).norm() < 1e-8 * (1.0 + ev[i].norm()) {
                            simple = false;
                        }
                    }
                }
                if !(real && nonzero && simple) {
                    h2 = false;
                    details.push(format!("state {k}: H2 fails, spectrum of A {ev:?}"));
                }
            }
            Err(e) => {
                h2 = false;
                details.push(format!("state {k}: H2 eigensolve failed: {e}"));
            }
        }
        // (H3)
        for &xi in xi_grid {
            if xi == 0.0 {
                continue;
            }
            let sym = linalg::to_complex(&a) * num_complex::Complex64::new(0.0, xi)
                - linalg::to_complex(&b) * num_complex::Complex64::new(xi * xi, 0.0);
            match linalg::eigenvalues(&sym) {
                Ok(ev) => {
                    let max_re = ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
                    let t = -max_re * (1.0 + xi * xi) / (xi * xi);
                    theta = theta.min(t);
                }
                Err(_) => theta = f64::NEG_INFINITY,
            }
        }
        let bl = linalg::eigenvalues_real(&sub(&b, n1, n1, r, r)).unwrap_or_default();
        if bl.iter().any(|z| z.re <= 0.0) {
            theta = theta.min(0.0);
            details.push(format!("state {k}: parabolic block has spectrum {bl:?} outside the right half-plane"));
        }
    }
    if states.is_empty() || xi_grid.is_empty() {
        theta = 0.0;
    }
    let h3 = theta > 0.0 && theta.is_finite();
    if !h3 {
        details.push(format!("H3 fails: theta = {theta:.3e}"));
    }
    AssumptionReport {
        a1_ok: a1,
        a2_ok: a2,
        h1_ok: h1,
        h2_ok: h2,
        h3_ok: h3,
        h3_theta: if theta.is_finite() { theta } else { 0.0 },
        h4: "not verified".into(),
        details,
    }
}

/// Central-difference Jacobian of the flux.
pub fn fd_jacobian(model: &SystemModel, u: &State) -> DMatrix<f64> {
    fd_jacobian_step(model, u, 1e-6)
}

pub fn fd_jacobian_step(model: &SystemModel, u: &State, h: f64) -> DMatrix<f64> {
    let n = model.n;
    let mut j = DMatrix::zeros(n, n);
    for k in 0..n {
        let hk = h * u[k].abs().max(1.0);
        let mut up = u.clone();
        let mut dn = u.clone();
        up[k] += hk;
        dn[k] -= hk;
        let col = (model.flux(&up) - model.flux(&dn)) / (2.0 * hk);
        j.set_column(k, &col);
    }
    j
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(v: &[f64]) -> State {
        DVector::from_column_slice(v)
    }

    #[test]
    fn isentropic_jacobian_at_rest() {
        let m = build_isentropic_lagrangian(5.0 / 3.0, 0.1, 0.0).unwrap();
        let a = m.flux_jacobian(&st(&[1.0, 0.0]));
        assert_eq!(a[(0, 1)], -1.0);
        assert!((a[(1, 0)] + 5.0 / 3.0).abs() < 1e-15);
        let ev = linalg::eigenvalues_real(&a).unwrap();
        for z in ev {
            assert!((z.re.abs() - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(build_isentropic_lagrangian(f64::NAN, 0.1, 0.0), Err(Error::InvalidParameter(_))));
        assert!(build_isentropic_lagrangian(1.0, 0.1, 0.0).is_err());
        assert!(build_isentropic_lagrangian(1.4, 0.0, 0.0).is_err());
        assert!(build_isentropic_eulerian(1.0, 0.05, 0.0).is_ok());
    }

    #[test]
    fn viscosity_derivative_matches_difference_quotient() {
        let ns =
            build_full_ns_lagrangian(ModelParams { gamma: 1.4, nu: 0.1, kappa: 0.2, a0: 1.0, cv: 1.0 }, 0.3).unwrap();
        let eu = build_isentropic_eulerian(1.4, 0.05, 0.2).unwrap();
        let li = build_isentropic_lagrangian(1.4, 0.1, 0.2).unwrap();
        for (m, u, du) in [
            (ns, st(&[0.9, 0.2, 1.3]), st(&[0.1, -0.3, 0.2])),
            (eu, st(&[1.1, 0.3]), st(&[-0.2, 0.5])),
            (li, st(&[0.8, 0.1]), st(&[0.3, 0.0])),
        ] {
            let h = 1e-6;
            let fd = (m.viscosity(&(&u + &du * h)) - m.viscosity(&(&u - &du * h))) / (2.0 * h);
            assert!((fd - m.viscosity_derivative(&u, &du)).amax() < 1e-8);
        }
    }

    #[test]
    fn full_ns_jacobian_matches_difference_quotient() {
        let ns =
            build_full_ns_lagrangian(ModelParams { gamma: 1.4, nu: 0.1, kappa: 0.2, a0: 1.0, cv: 1.0 }, 0.3).unwrap();
        let u = st(&[0.9, 0.2, 1.3]);
        assert!((fd_jacobian(&ns, &u) - ns.flux_jacobian(&u)).amax() < 1e-8);
    }

    #[test]
    fn full_ns_rankine_hugoniot_is_lax() {
        let ns =
            build_full_ns_lagrangian(ModelParams { gamma: 1.4, nu: 1.0, kappa: 1.0, a0: 1.0, cv: 1.0 }, 0.0).unwrap();
        let pair = rankine_hugoniot(&ns, &[1.0, 0.0, 1.0], 0.8).map_err(|e| e.to_string()).unwrap();
        let m = ns.with_speed(pair.speed);
        let res = m.flux(&pair.plus()) - m.flux(&pair.minus());
        assert!(res.norm() < 1e-12, "residual {}", res.norm());
        assert!(pair.is_lax(3));
    }

    #[test]
    fn eulerian_rankine_hugoniot_residual() {
        let eu = build_isentropic_eulerian(1.4, 0.05, 0.0).unwrap();
        let pair = rankine_hugoniot(&eu, &[1.0, 0.0], 1.3).unwrap();
        let m = eu.with_speed(pair.speed);
        assert!((m.flux(&pair.plus()) - m.flux(&pair.minus())).norm() < 1e-12);
    }
}
