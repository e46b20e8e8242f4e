//! Method-of-lines integration of the perturbation equations about a
//! standing profile or a constant state, the linearized flow, and the
//! Sobolev, weighted and energy norms used to instrument them.
//!
//! With `W = Ū + U` the interface flux is
//! `G = (F(W_l) + F(W_r))/2 − B(W_m)(W_r − W_l)/dx`, `W_m` the interface
//! average, and the perturbation obeys `U_t = −D[G(Ū + U) − G(Ū)]`. The
//! increment is evaluated without cancellation, so `U ≡ 0` is an exact
//! equilibrium and small data keep full relative accuracy. The linearized
//! flow uses the exact Jacobian of the same discrete operator at `U = 0`.

mod experiments;
mod probe;

pub use experiments::*;
pub use probe::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Frame, State, SystemModel};
use crate::profile::ShockProfile;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

type Vec3 = [f64; 3];
type Mat3 = [[f64; 3]; 3];

/// Largest admissible advective Courant number and diffusion number.
pub const MAX_CFL: f64 = 0.4;
pub const MAX_DIFFUSION_NUMBER: f64 = 0.25;
/// Grid Péclet bound `max|σ(A)|·dx / min b ≤ 2` for central convection.
pub const MAX_PECLET: f64 = 2.0;
/// Exponent above which `e^{η⟨x⟩}` is refused.
pub const MAX_WEIGHT_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x0: f64,
    pub dx: f64,
    pub nodes: usize,
}

impl Grid {
    /// Uniform nodes on `[−L, L]` with spacing as close to `dx` as fits.
    pub fn symmetric(half_length: f64, dx: f64) -> Result<Self> {
        if !(half_length > 0.0 && dx > 0.0 && dx < half_length) {
            return Err(Error::InvalidParameter(format!("grid half-length {half_length}, dx {dx}")));
        }
        let cells = (2.0 * half_length / dx).round() as usize;
        Ok(Self { x0: -half_length, dx: 2.0 * half_length / cells as f64, nodes: cells + 1 })
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.nodes).map(|i| self.x(i)).collect()
    }

    pub fn half_length(&self) -> f64 {
        -self.x0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flow {
    Nonlinear,
    Linearized,
}

fn mat_vec(m: &Mat3, v: &Vec3, n: usize) -> Vec3 {
    let mut r = [0.0; 3];
    for i in 0..n {
        for j in 0..n {
            r[i] += m[i][j] * v[j];
        }
    }
    r
}

fn to_mat3(m: &DMatrix<f64>) -> Mat3 {
    let mut r = [[0.0; 3]; 3];
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            r[i][j] = m[(i, j)];
        }
    }
    r
}

fn to_vec3(v: &State) -> Vec3 {
    let mut r = [0.0; 3];
    r[..v.len()].copy_from_slice(v.as_slice());
    r
}

fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    Ok(linalg::eigenvalues_real(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Discrete operator frozen about a background state on a grid. Arrays with
/// ghosts have `nodes + 2` entries; the perturbation vanishes at the ghosts.
#[derive(Debug, Clone)]
pub struct Operator {
    pub model: SystemModel,
    pub grid: Grid,
    ubar: Vec<Vec3>,
    dubar_nodes: Vec<Vec3>,
    jac: Vec<Mat3>,
    ubar_mid: Vec<Vec3>,
    jump: Vec<Vec3>,
    b_mid: Vec<Mat3>,
    c_mid: Vec<Mat3>,
    symm: Vec<Mat3>,
    pub max_speed: f64,
    pub max_diffusion: f64,
    pub min_diffusion: f64,
    /// Extreme eigenvalues of the symmetrizer over the grid.
    pub symmetrizer_bounds: (f64, f64),
}

impl Operator {
    /// Frozen about a shock profile; outside the profile's range the
    /// endstates are used.
    pub fn from_profile(profile: &ShockProfile, grid: Grid) -> Result<Self> {
        Self::build(profile.model, grid, |x| profile.eval(x))
    }

    /// Frozen about a constant state.
    pub fn constant(model: SystemModel, state: &[f64], grid: Grid) -> Result<Self> {
        if state.len() != model.n {
            return Err(Error::InvalidParameter(format!(
                "background has {} components, expected {}",
                state.len(),
                model.n
            )));
        }
        let u = DVector::from_column_slice(state);
        Self::build(model, grid, |_| (u.clone(), DVector::zeros(model.n)))
    }

    fn build(model: SystemModel, grid: Grid, bg: impl Fn(f64) -> (State, State)) -> Result<Self> {
        let n = model.n;
        let nn = grid.nodes;
        let mut ubar = Vec::with_capacity(nn + 2);
        let mut dubar_nodes = Vec::with_capacity(nn);
        let mut jac = Vec::with_capacity(nn + 2);
        let mut symm = Vec::with_capacity(nn);
        let mut max_speed: f64 = 0.0;
        let (mut smin, mut smax) = (f64::INFINITY, 0.0f64);
        for j in 0..nn + 2 {
            let x = grid.x0 + (j as f64 - 1.0) * grid.dx;
            let (u, du) = bg(x);
            if !model.admissible_state(&u) {
                return Err(Error::InvalidParameter(format!("background state at x = {x} is not admissible")));
            }
            let a = model.flux_jacobian(&u);
            max_speed = max_speed.max(spectral_radius(&a)?);
            ubar.push(to_vec3(&u));
            jac.push(to_mat3(&a));
            if (1..=nn).contains(&j) {
                dubar_nodes.push(to_vec3(&du));
                let a0 = model.symmetrizer(&u);
                let ev = ((&a0 + a0.transpose()) * 0.5).symmetric_eigenvalues();
                smin = smin.min(ev.min());
                smax = smax.max(ev.max());
                symm.push(to_mat3(&a0));
            }
        }
        let mut ubar_mid = Vec::with_capacity(nn + 1);
        let mut jump = Vec::with_capacity(nn + 1);
        let mut b_mid = Vec::with_capacity(nn + 1);
        let mut c_mid = Vec::with_capacity(nn + 1);
        let (mut max_diffusion, mut min_diffusion) = (0.0f64, f64::INFINITY);
        for k in 0..nn + 1 {
            let mut m = [0.0; 3];
            let mut d = [0.0; 3];
            for c in 0..n {
                m[c] = 0.5 * (ubar[k][c] + ubar[k + 1][c]);
                d[c] = ubar[k + 1][c] - ubar[k][c];
            }
            let b = model.viscosity_point(&m);
            let mv = DVector::from_column_slice(&m[..n]);
            let dv = DVector::from_column_slice(&d[..n]);
            max_diffusion = max_diffusion.max(spectral_radius(&model.viscosity(&mv))?);
            for c in 0..n {
                if b[c][c] > 0.0 {
                    min_diffusion = min_diffusion.min(b[c][c]);
                }
            }
            let mut cm = [[0.0; 3]; 3];
            for col in 0..n {
                let mut e = DVector::zeros(n);
                e[col] = 1.0;
                let col_v = model.viscosity_derivative(&mv, &e) * &dv;
                for row in 0..n {
                    cm[row][col] = col_v[row];
                }
            }
            ubar_mid.push(m);
            jump.push(d);
            b_mid.push(b);
            c_mid.push(cm);
        }
        if min_diffusion.is_finite() && max_speed * grid.dx / min_diffusion > MAX_PECLET {
            return Err(Error::InvalidParameter(format!(
                "grid Péclet number {:.3} exceeds {MAX_PECLET}: refine dx",
                max_speed * grid.dx / min_diffusion
            )));
        }
        Ok(Self {
            model,
            grid,
            ubar,
            dubar_nodes,
            jac,
            ubar_mid,
            jump,
            b_mid,
            c_mid,
            symm,
            max_speed,
            max_diffusion,
            min_diffusion,
            symmetrizer_bounds: (smin, smax),
        })
    }

    pub fn n(&self) -> usize {
        self.model.n
    }

    pub fn frame(&self) -> Frame {
        self.model.frame
    }

    /// Background values at the interior nodes, flattened.
    pub fn background(&self) -> Vec<f64> {
        let n = self.n();
        self.ubar[1..=self.grid.nodes].iter().flat_map(|u| u[..n].to_vec()).collect()
    }

    /// Background derivative `Ū′` at the interior nodes, flattened.
    pub fn background_derivative(&self) -> Vec<f64> {
        let n = self.n();
        self.dubar_nodes.iter().flat_map(|u| u[..n].to_vec()).collect()
    }

    /// Largest step allowed by the advective and diffusive limits.
    pub fn max_stable_dt(&self) -> f64 {
        let dx = self.grid.dx;
        let a = if self.max_speed > 0.0 { MAX_CFL * dx / self.max_speed } else { f64::INFINITY };
        let d =
            if self.max_diffusion > 0.0 { MAX_DIFFUSION_NUMBER * dx * dx / self.max_diffusion } else { f64::INFINITY };
        a.min(d)
    }

    pub fn check_dt(&self, dt: f64) -> Result<()> {
        if !(dt > 0.0) || dt > self.max_stable_dt() * (1.0 + 1e-12) {
            return Err(Error::StepRejected(format!(
                "dt = {dt:.3e} violates the stability limit {:.3e} (max speed {:.3}, max diffusion {:.3})",
                self.max_stable_dt(),
                self.max_speed,
                self.max_diffusion
            )));
        }
        Ok(())
    }

    fn node(&self, w: &[f64], j: usize) -> Vec3 {
        let n = self.n();
        let mut r = [0.0; 3];
        if j >= 1 && j <= self.grid.nodes {
            r[..n].copy_from_slice(&w[(j - 1) * n..j * n]);
        }
        r
    }

    /// `U_t` for the chosen flow; `scratch` holds node and interface fluxes.
    fn rhs(&self, flow: Flow, w: &[f64], out: &mut [f64], scratch: &mut FluxScratch) {
        let n = self.n();
        let nn = self.grid.nodes;
        let dx = self.grid.dx;
        for j in 0..nn + 2 {
            let wj = self.node(w, j);
            scratch.df[j] = match flow {
                Flow::Nonlinear if j >= 1 && j <= nn => self.model.flux_increment(&self.ubar[j], &wj),
                Flow::Nonlinear => [0.0; 3],
                Flow::Linearized => mat_vec(&self.jac[j], &wj, n),
            };
        }
        for k in 0..nn + 1 {
            let (wl, wr) = (self.node(w, k), self.node(w, k + 1));
            let mut wm = [0.0; 3];
            let mut dw = [0.0; 3];
            for c in 0..n {
                wm[c] = 0.5 * (wl[c] + wr[c]);
                dw[c] = wr[c] - wl[c];
            }
            let visc = match flow {
                Flow::Nonlinear => {
                    let mut um = self.ubar_mid[k];
                    for c in 0..n {
                        um[c] += wm[c];
                    }
                    let b = self.model.viscosity_point(&um);
                    let db = self.model.viscosity_increment(&self.ubar_mid[k], &wm);
                    let (p, q) = (mat_vec(&b, &dw, n), mat_vec(&db, &self.jump[k], n));
                    [p[0] + q[0], p[1] + q[1], p[2] + q[2]]
                }
                Flow::Linearized => {
                    let (p, q) = (mat_vec(&self.b_mid[k], &dw, n), mat_vec(&self.c_mid[k], &wm, n));
                    [p[0] + q[0], p[1] + q[1], p[2] + q[2]]
                }
            };
            for c in 0..n {
                scratch.g[k][c] = 0.5 * (scratch.df[k][c] + scratch.df[k + 1][c]) - visc[c] / dx;
            }
        }
        for i in 0..nn {
            for c in 0..n {
                out[i * n + c] = -(scratch.g[i + 1][c] - scratch.g[i][c]) / dx;
            }
        }
    }
}

#[derive(Debug, Clone)]
struct FluxScratch {
    df: Vec<Vec3>,
    g: Vec<Vec3>,
}

/// Classical RK4 with reusable stage storage.
#[derive(Debug, Clone)]
pub struct Integrator {
    op: Arc<Operator>,
    flow: Flow,
    flux: FluxScratch,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Integrator {
    pub fn new(op: Arc<Operator>, flow: Flow) -> Self {
        let len = op.grid.nodes * op.n();
        let flux = FluxScratch { df: vec![[0.0; 3]; op.grid.nodes + 2], g: vec![[0.0; 3]; op.grid.nodes + 1] };
        let z = vec![0.0; len];
        Self { op, flow, flux, k: [z.clone(), z.clone(), z.clone(), z.clone()], tmp: z }
    }

    pub fn flow(&self) -> Flow {
        self.flow
    }

    /// Evaluates `U_t` at `w`.
    pub fn rhs(&mut self, w: &[f64], out: &mut [f64]) {
        self.op.rhs(self.flow, w, out, &mut self.flux);
    }

    /// Advances `w` in place after checking the stability limits. On a
    /// non-finite result `w` keeps its last valid value and a blowup error
    /// carrying `t` is returned.
    pub fn step(&mut self, w: &mut [f64], dt: f64, t: f64) -> Result<()> {
        self.op.check_dt(dt)?;
        let op = &*self.op;
        let [k1, k2, k3, k4] = &mut self.k;
        let tmp = &mut self.tmp;
        op.rhs(self.flow, w, k1, &mut self.flux);
        for i in 0..w.len() {
            tmp[i] = w[i] + 0.5 * dt * k1[i];
        }
        op.rhs(self.flow, tmp, k2, &mut self.flux);
        for i in 0..w.len() {
            tmp[i] = w[i] + 0.5 * dt * k2[i];
        }
        op.rhs(self.flow, tmp, k3, &mut self.flux);
        for i in 0..w.len() {
            tmp[i] = w[i] + dt * k3[i];
        }
        op.rhs(self.flow, tmp, k4, &mut self.flux);
        for i in 0..w.len() {
            tmp[i] = w[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if tmp.iter().any(|v| !v.is_finite()) {
            return Err(Error::Blowup { time: t });
        }
        w.copy_from_slice(tmp);
        Ok(())
    }
}

/// Perturbation `U(xᵢ, t)` on the operator's grid, node-major.
#[derive(Debug, Clone)]
pub struct SimState {
    pub op: Arc<Operator>,
    pub t: f64,
    pub fields: Vec<f64>,
}

impl SimState {
    pub fn new(op: Arc<Operator>, fields: Vec<f64>) -> Result<Self> {
        if fields.len() != op.grid.nodes * op.n() {
            return Err(Error::InvalidParameter(format!(
                "state has {} values, expected {}",
                fields.len(),
                op.grid.nodes * op.n()
            )));
        }
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("state is not finite".into()));
        }
        Ok(Self { op, t: 0.0, fields })
    }

    pub fn zeros(op: Arc<Operator>) -> Self {
        let len = op.grid.nodes * op.n();
        Self { op, t: 0.0, fields: vec![0.0; len] }
    }

    /// Samples `f(x)` (first `n` entries used) at the nodes.
    pub fn from_fn(op: Arc<Operator>, f: impl Fn(f64) -> [f64; 3]) -> Result<Self> {
        let n = op.n();
        let fields = (0..op.grid.nodes).flat_map(|i| f(op.grid.x(i))[..n].to_vec()).collect();
        Self::new(op, fields)
    }

    pub fn n(&self) -> usize {
        self.op.n()
    }

    pub fn frame(&self) -> Frame {
        self.op.frame()
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        self.fields.iter().skip(c).step_by(self.n()).copied().collect()
    }

    /// Discrete mass `Σᵢ U(xᵢ) dx` per component.
    pub fn mass(&self) -> Vec<f64> {
        (0..self.n()).map(|c| self.component(c).iter().sum::<f64>() * self.op.grid.dx).collect()
    }

    /// Whether both boundary nodes are below `1e-8` of the interior maximum.
    pub fn boundary_decayed(&self) -> bool {
        let n = self.n();
        let peak = self.fields.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let edge =
            self.fields[..n].iter().chain(&self.fields[self.fields.len() - n..]).fold(0.0f64, |m, v| m.max(v.abs()));
        edge <= 1e-8 * peak || peak == 0.0
    }

    pub fn sobolev_norm(&self, s: usize) -> f64 {
        sobolev_norm(&self.fields, self.n(), self.op.grid.dx, s)
    }

    /// The same state with other field values.
    pub fn with_fields(&self, fields: Vec<f64>) -> Result<Self> {
        let mut s = Self::new(self.op.clone(), fields)?;
        s.t = self.t;
        Ok(s)
    }
}

fn single_step(state: &SimState, dt: f64, flow: Flow) -> Result<SimState> {
    let mut it = Integrator::new(state.op.clone(), flow);
    let mut next = state.clone();
    it.step(&mut next.fields, dt, state.t)?;
    next.t += dt;
    Ok(next)
}

/// One RK4 step of the nonlinear perturbation equations. On blowup the
/// input state is the last valid one.
pub fn step_nonlinear(state: &SimState, dt: f64) -> Result<SimState> {
    single_step(state, dt, Flow::Nonlinear)
}

/// One RK4 step of the linearized equations about the same background.
pub fn step_linearized(state: &SimState, dt: f64) -> Result<SimState> {
    single_step(state, dt, Flow::Linearized)
}

#[derive(Debug, Clone)]
pub struct Evolution {
    /// Final state, or the last finite one when `blowup` is set.
    pub state: SimState,
    pub steps: usize,
    pub dt: f64,
    pub blowup: Option<f64>,
}

/// Number of equal steps reaching `duration` with `dt ≤ dt_max`.
pub fn uniform_steps(duration: f64, dt_max: f64) -> (usize, f64) {
    let steps = ((duration / dt_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    (steps, duration / steps as f64)
}

/// Integrates to `t_end` with equal steps no larger than `dt_max`, calling
/// `observer` after every step.
pub fn evolve(
    state: &SimState,
    flow: Flow,
    t_end: f64,
    dt_max: f64,
    mut observer: Option<&mut dyn FnMut(&SimState)>,
) -> Result<Evolution> {
    let (steps, dt) = uniform_steps(t_end - state.t, dt_max);
    state.op.check_dt(dt)?;
    let mut it = Integrator::new(state.op.clone(), flow);
    let mut cur = state.clone();
    let t0 = state.t;
    for k in 0..steps {
        match it.step(&mut cur.fields, dt, cur.t) {
            Ok(()) => cur.t = t0 + (k + 1) as f64 * dt,
            Err(Error::Blowup { time }) => return Ok(Evolution { state: cur, steps: k, dt, blowup: Some(time) }),
            Err(e) => return Err(e),
        }
        if let Some(obs) = observer.as_mut() {
            obs(&cur);
        }
    }
    Ok(Evolution { state: cur, steps, dt, blowup: None })
}

/// Centered difference of each component, zero beyond the grid.
pub fn centered_derivative(fields: &[f64], n: usize, dx: f64) -> Vec<f64> {
    let nn = fields.len() / n;
    let mut d = vec![0.0; fields.len()];
    for i in 0..nn {
        for c in 0..n {
            let l = if i > 0 { fields[(i - 1) * n + c] } else { 0.0 };
            let r = if i + 1 < nn { fields[(i + 1) * n + c] } else { 0.0 };
            d[i * n + c] = (r - l) / (2.0 * dx);
        }
    }
    d
}

/// `(Σ_{l≤s} ‖D^l U‖²_{L²})^{1/2}` with `D` the centered difference.
pub fn sobolev_norm(fields: &[f64], n: usize, dx: f64, s: usize) -> f64 {
    let mut d = fields.to_vec();
    let mut sum = 0.0;
    for l in 0..=s {
        if l > 0 {
            d = centered_derivative(&d, n, dx);
        }
        sum += d.iter().map(|v| v * v).sum::<f64>() * dx;
    }
    sum.sqrt()
}

fn japanese(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}

fn weighted(grid: &Grid, fields: &[f64], n: usize, eta: f64) -> Result<Vec<f64>> {
    if eta < 0.0 || !eta.is_finite() {
        return Err(Error::InvalidParameter(format!("weight eta = {eta} must be nonnegative")));
    }
    let reach = eta * japanese(grid.half_length());
    if reach > MAX_WEIGHT_EXPONENT {
        return Err(Error::WeightedOverflow(reach));
    }
    Ok(fields.iter().enumerate().map(|(k, v)| v * (eta * japanese(grid.x(k / n))).exp()).collect())
}

/// `‖e^{η⟨x⟩}U‖_{H^s}`, `⟨x⟩ = (1 + x²)^{1/2}`.
pub fn weighted_norm_on(grid: &Grid, fields: &[f64], n: usize, s: usize, eta: f64) -> Result<f64> {
    Ok(sobolev_norm(&weighted(grid, fields, n, eta)?, n, grid.dx, s))
}

pub fn weighted_norm(state: &SimState, s: usize, eta: f64) -> Result<f64> {
    weighted_norm_on(&state.op.grid, &state.fields, state.n(), s, eta)
}

/// Antiderivative of each component by the trapezoid rule, shifted to zero mean.
pub fn zero_mean_antiderivative(grid: &Grid, fields: &[f64], n: usize) -> Vec<f64> {
    let nn = grid.nodes;
    let mut u = vec![0.0; fields.len()];
    for c in 0..n {
        for i in 1..nn {
            u[i * n + c] = u[(i - 1) * n + c] + 0.5 * grid.dx * (fields[(i - 1) * n + c] + fields[i * n + c]);
        }
        let mean = (0..nn).map(|i| u[i * n + c]).sum::<f64>() / nn as f64;
        for i in 0..nn {
            u[i * n + c] -= mean;
        }
    }
    u
}

/// `‖∂ₓU‖_{X₂} = ‖e^{η⟨x⟩}∂ₓU‖_{H²} + ‖e^{2η⟨x⟩}U‖_{H¹}` for a field given as
/// `∂ₓU`; `U` is its zero-mean antiderivative.
pub fn x2_norm(grid: &Grid, derivative: &[f64], n: usize, eta: f64) -> Result<f64> {
    let u = zero_mean_antiderivative(grid, derivative, n);
    Ok(weighted_norm_on(grid, derivative, n, 2, eta)? + weighted_norm_on(grid, &u, n, 1, 2.0 * eta)?)
}

/// `‖∂ₓU‖_{B₂} = ‖∂ₓU‖_{H¹} + ‖U‖_{L¹}`, same antiderivative convention.
pub fn b2_norm(grid: &Grid, derivative: &[f64], n: usize) -> f64 {
    let u = zero_mean_antiderivative(grid, derivative, n);
    sobolev_norm(derivative, n, grid.dx, 1) + u.iter().map(|v| v.abs()).sum::<f64>() * grid.dx
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EnergyReport {
    pub value: f64,
    pub sobolev_sq: f64,
    /// `c₁ ≤ ℰ(U)/‖U‖²_{H^s} ≤ c₂`, from the symmetrizer's extreme eigenvalues.
    pub c1: f64,
    pub c2: f64,
}

/// `ℰ(U) = ½ Σ_{l≤s} Σᵢ ⟨D^l Uᵢ, A⁰(Ūᵢ) D^l Uᵢ⟩ dx`.
pub fn energy_functional(state: &SimState, s: usize) -> Result<EnergyReport> {
    if s > 4 {
        return Err(Error::InvalidParameter(format!("energy order {s} exceeds 4")));
    }
    let n = state.n();
    let dx = state.op.grid.dx;
    let mut d = state.fields.clone();
    let (mut e, mut h) = (0.0, 0.0);
    for l in 0..=s {
        if l > 0 {
            d = centered_derivative(&d, n, dx);
        }
        for (i, a0) in state.op.symm.iter().enumerate() {
            let mut v = [0.0; 3];
            v[..n].copy_from_slice(&d[i * n..(i + 1) * n]);
            let av = mat_vec(a0, &v, n);
            e += (0..n).map(|c| v[c] * av[c]).sum::<f64>() * dx;
            h += (0..n).map(|c| v[c] * v[c]).sum::<f64>() * dx;
        }
    }
    let (lo, hi) = state.op.symmetrizer_bounds;
    Ok(EnergyReport { value: 0.5 * e, sobolev_sq: h, c1: 0.5 * lo, c2: 0.5 * hi })
}

/// Time history of one (weighted) Sobolev norm.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct NormProbe {
    pub order: usize,
    pub weight_eta: f64,
    pub history: Vec<(f64, f64)>,
}

impl NormProbe {
    pub fn new(order: usize, weight_eta: f64) -> Self {
        Self { order, weight_eta, history: Vec::new() }
    }

    pub fn record(&mut self, state: &SimState) -> Result<f64> {
        let v = weighted_norm(state, self.order, self.weight_eta)?;
        self.history.push((state.t, v));
        Ok(v)
    }

    pub fn max(&self) -> f64 {
        self.history.iter().map(|h| h.1).fold(0.0, f64::max)
    }
}
