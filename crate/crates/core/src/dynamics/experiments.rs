//! Linearization-error experiments: the Lagrangian quadratic bound and the
//! Eulerian counterexample with rough density data.

use super::{evolve, sobolev_norm, Evolution, Flow, Grid, Operator, SimState};
use crate::error::{Error, Result};
use crate::model::{build_isentropic_eulerian, build_isentropic_lagrangian, log_grid, rankine_hugoniot};
use crate::profile::{linear_fit, solve_profile_with, ProfileOptions, ShockProfile};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Instant;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearizationConfig {
    pub gamma: f64,
    pub nu: f64,
    pub v_minus: f64,
    pub u_minus: f64,
    pub v_plus: f64,
    pub order: usize,
    pub t_end: f64,
    pub amplitudes: Vec<f64>,
    pub dx: f64,
    pub half_length: f64,
    /// Fraction of the largest stable step actually used.
    pub dt_fraction: f64,
    /// Replace the nonlinear flow by the linearized one (both flows coincide).
    pub drop_nonlinearity: bool,
}

impl Default for LinearizationConfig {
    fn default() -> Self {
        Self {
            gamma: 5.0 / 3.0,
            nu: 0.1,
            v_minus: 1.0,
            u_minus: 0.0,
            v_plus: 0.7,
            order: 2,
            t_end: 1.0,
            amplitudes: log_grid(1e-4, 1e-1, 7),
            dx: 0.02,
            half_length: 10.0,
            dt_fraction: 1.0,
            drop_nonlinearity: false,
        }
    }
}

fn validate_common(order: usize, t_end: f64, amplitudes: &[f64], dt_fraction: f64) -> Result<()> {
    if order > 4 {
        return Err(Error::InvalidParameter(format!("Sobolev order {order} exceeds 4")));
    }
    if !(t_end > 0.0) {
        return Err(Error::InvalidParameter("t_end must be positive".into()));
    }
    if amplitudes.len() < 4 || amplitudes.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::InvalidParameter("need at least four positive amplitudes".into()));
    }
    if !(dt_fraction > 0.0 && dt_fraction <= 1.0) {
        return Err(Error::InvalidParameter("dt_fraction must lie in (0, 1]".into()));
    }
    Ok(())
}

impl LinearizationConfig {
    pub fn validate(&self) -> Result<()> {
        validate_common(self.order, self.t_end, &self.amplitudes, self.dt_fraction)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub amplitudes: Vec<f64>,
    /// `‖U₀‖_{H^s}` for each amplitude.
    pub data_norms: Vec<f64>,
    /// `‖U_nl − U_lin‖_{H^s}` at `t_end`.
    pub errors: Vec<f64>,
    pub fitted_slope: f64,
    pub r2: f64,
    pub runtime: f64,
    /// Set when a run blew up; the ladder is cut before that amplitude.
    pub truncated: bool,
    pub dx: f64,
    pub dt: f64,
    pub steps: usize,
}

#[allow(clippy::too_many_arguments)]
fn fit_report(
    amplitudes: Vec<f64>,
    data_norms: Vec<f64>,
    errors: Vec<f64>,
    truncated: bool,
    grid: &Grid,
    dt: f64,
    steps: usize,
    start: Instant,
) -> ExperimentReport {
    let pos: Vec<(f64, f64)> =
        data_norms.iter().zip(&errors).filter(|(_, e)| **e > 0.0).map(|(d, e)| (d.ln(), e.ln())).collect();
    let (slope, r2) = if pos.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = pos.into_iter().unzip();
        let (s, _, r2) = linear_fit(&x, &y);
        (s, r2)
    } else {
        (f64::NAN, f64::NAN)
    };
    ExperimentReport {
        amplitudes,
        data_norms,
        errors,
        fitted_slope: slope,
        r2,
        runtime: start.elapsed().as_secs_f64(),
        truncated,
        dx: grid.dx,
        dt,
        steps,
    }
}

/// Fixed data shape for the Lagrangian experiment (before normalization).
pub fn lagrangian_data_shape(x: f64) -> [f64; 3] {
    let g = (-x * x).exp();
    [g, x * g, 0.0]
}

pub fn lagrangian_profile(cfg: &LinearizationConfig) -> Result<ShockProfile> {
    let m = build_isentropic_lagrangian(cfg.gamma, cfg.nu, 0.0)?;
    let pair = rankine_hugoniot(&m, &[cfg.v_minus, cfg.u_minus], cfg.v_plus)?;
    solve_profile_with(&m, &pair, &ProfileOptions::default())
}

struct Pair {
    nonlinear: Evolution,
    linear: Evolution,
}

fn run_pair(
    u0: &SimState,
    t_end: f64,
    dt_max: f64,
    drop: bool,
    observer: Option<&mut dyn FnMut(&SimState)>,
) -> Result<Pair> {
    let nl_flow = if drop { Flow::Linearized } else { Flow::Nonlinear };
    let nonlinear = evolve(u0, nl_flow, t_end, dt_max, observer)?;
    let linear = evolve(u0, Flow::Linearized, t_end, dt_max, None)?;
    Ok(Pair { nonlinear, linear })
}

/// Shape normalized to unit `H^s` norm on the operator's grid.
fn normalized_shape(op: &Arc<Operator>, order: usize, shape: impl Fn(f64) -> [f64; 3]) -> Result<SimState> {
    let s = SimState::from_fn(op.clone(), shape)?;
    let norm = s.sobolev_norm(order);
    if !(norm > 0.0) {
        return Err(Error::InvalidParameter("data shape vanishes on the grid".into()));
    }
    s.with_fields(s.fields.iter().map(|v| v / norm).collect())
}

/// Evolves `α Û₀` under the nonlinear and linearized flows about the profile
/// and records `‖U_nl − U_lin‖_{H^s}` at `t_end`.
pub fn linearization_error_experiment(profile: &ShockProfile, cfg: &LinearizationConfig) -> Result<ExperimentReport> {
    linearization_error_with_shape(profile, cfg, &lagrangian_data_shape)
}

/// As [`linearization_error_experiment`] with a caller-supplied data shape.
pub fn linearization_error_with_shape(
    profile: &ShockProfile,
    cfg: &LinearizationConfig,
    shape: &(dyn Fn(f64) -> [f64; 3] + Sync),
) -> Result<ExperimentReport> {
    cfg.validate()?;
    if profile.model.frame != crate::model::Frame::Lagrangian {
        return Err(Error::InvalidParameter("the linearization-error experiment needs a Lagrangian profile".into()));
    }
    let start = Instant::now();
    let grid = Grid::symmetric(cfg.half_length, cfg.dx)?;
    let op = Arc::new(Operator::from_profile(profile, grid)?);
    let shape = normalized_shape(&op, cfg.order, shape)?;
    let dt_max = op.max_stable_dt() * cfg.dt_fraction;
    let (steps, dt) = super::uniform_steps(cfg.t_end, dt_max);
    let runs: Vec<Result<Option<(f64, f64)>>> = cfg
        .amplitudes
        .par_iter()
        .map(|&a| {
            let u0 = shape.with_fields(shape.fields.iter().map(|v| a * v).collect())?;
            let pair = run_pair(&u0, cfg.t_end, dt_max, cfg.drop_nonlinearity, None)?;
            if pair.nonlinear.blowup.is_some() || pair.linear.blowup.is_some() {
                return Ok(None);
            }
            let diff: Vec<f64> =
                pair.nonlinear.state.fields.iter().zip(&pair.linear.state.fields).map(|(a, b)| a - b).collect();
            Ok(Some((u0.sobolev_norm(cfg.order), sobolev_norm(&diff, op.n(), grid.dx, cfg.order))))
        })
        .collect();
    let mut amps = Vec::new();
    let mut norms = Vec::new();
    let mut errs = Vec::new();
    let mut truncated = false;
    for (a, r) in cfg.amplitudes.iter().zip(runs) {
        match r? {
            Some((d, e)) => {
                amps.push(*a);
                norms.push(d);
                errs.push(e);
            }
            None => truncated = true,
        }
    }
    Ok(fit_report(amps, norms, errs, truncated, &grid, dt, steps, start))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EulerianConfig {
    pub gamma: f64,
    pub nu: f64,
    pub order: usize,
    pub t_end: f64,
    pub amplitudes: Vec<f64>,
    pub dx: f64,
    pub half_length: f64,
    pub dt_fraction: f64,
    /// Carrier wavenumber of the density packet.
    pub wavenumber: f64,
    /// Gaussian width of the density packet envelope.
    pub packet_width: f64,
    /// Gaussian width of the smooth velocity bump.
    pub velocity_width: f64,
    pub drop_nonlinearity: bool,
}

impl Default for EulerianConfig {
    fn default() -> Self {
        Self {
            gamma: 1.4,
            nu: 0.05,
            order: 2,
            t_end: 0.5,
            amplitudes: log_grid(1e-4, 1e-1, 7),
            dx: 0.01,
            half_length: 12.0,
            dt_fraction: 1.0,
            wavenumber: 10.0,
            packet_width: 1.0,
            velocity_width: std::f64::consts::SQRT_2,
            drop_nonlinearity: false,
        }
    }
}

impl EulerianConfig {
    pub fn validate(&self) -> Result<()> {
        validate_common(self.order, self.t_end, &self.amplitudes, self.dt_fraction)?;
        if !(self.packet_width > 0.0 && self.velocity_width > 0.0 && self.wavenumber >= 0.0) {
            return Err(Error::InvalidParameter("packet and velocity widths must be positive".into()));
        }
        Ok(())
    }

    /// Unnormalized high-frequency density packet.
    pub fn packet(&self, x: f64) -> f64 {
        (-0.5 * (x / self.packet_width).powi(2)).exp() * (self.wavenumber * x).cos()
    }

    /// Smooth velocity bump with unit maximum.
    pub fn velocity(&self, x: f64) -> f64 {
        (-0.5 * (x / self.velocity_width).powi(2)).exp()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EulerianReport {
    /// Density-component errors against `‖U₀‖_{H^s}`.
    pub density: ExperimentReport,
    /// `‖u_nl − u_lin‖_{H^s}`, `u = m/ρ`, reported, not asserted.
    pub velocity_errors: Vec<f64>,
    pub velocity_slope: f64,
    /// `‖∂ₓ²ρ₀‖/‖ρ₀‖` of the packet.
    pub roughness: f64,
    /// `‖ρ̄(t_end) − ρ₀‖_{H^s}/‖ρ₀‖_{H^s}` for transport by the computed
    /// velocity at the largest amplitude.
    pub transport_ratio: f64,
    pub transport_amplitude: f64,
}

/// Velocity snapshots `u(xᵢ, t_k)` stored after every step.
#[derive(Debug, Clone)]
pub struct VelocityHistory {
    pub grid: Grid,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl VelocityHistory {
    fn at_snapshot(&self, k: usize, x: f64) -> f64 {
        let g = &self.grid;
        let s = (x - g.x0) / g.dx;
        if s <= 0.0 || s >= (g.nodes - 1) as f64 {
            return 0.0;
        }
        let i = s.floor() as usize;
        let f = s - i as f64;
        (1.0 - f) * self.values[k][i] + f * self.values[k][i + 1]
    }

    /// Linear interpolation in space and time.
    pub fn velocity(&self, x: f64, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.at_snapshot(0, x);
        }
        if t >= self.times[n - 1] {
            return self.at_snapshot(n - 1, x);
        }
        let k = self.times.partition_point(|&s| s <= t).max(1) - 1;
        let f = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        (1.0 - f) * self.at_snapshot(k, x) + f * self.at_snapshot(k + 1, x)
    }

    /// Foot `X(x, 0)` of the characteristic `X′ = u(X, t)` through `(x, t_end)`,
    /// traced backward with RK4 over the stored time levels.
    pub fn foot(&self, x: f64) -> f64 {
        let mut xs = x;
        for k in (1..self.times.len()).rev() {
            let (t1, t0) = (self.times[k], self.times[k - 1]);
            let h = t0 - t1;
            let tm = 0.5 * (t0 + t1);
            let k1 = self.velocity(xs, t1);
            let k2 = self.velocity(xs + 0.5 * h * k1, tm);
            let k3 = self.velocity(xs + 0.5 * h * k2, tm);
            let k4 = self.velocity(xs + h * k3, t0);
            xs += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        xs
    }
}

/// Perturbations `(ρ − 1, ρu)` of the rest state `(1, 0)` with rough density
/// and smooth velocity, evolved by the Eulerian nonlinear and linearized
/// flows.
pub fn eulerian_counterexample(cfg: &EulerianConfig) -> Result<EulerianReport> {
    cfg.validate()?;
    let start = Instant::now();
    let model = build_isentropic_eulerian(cfg.gamma, cfg.nu, 0.0)?;
    let grid = Grid::symmetric(cfg.half_length, cfg.dx)?;
    let op = Arc::new(Operator::constant(model, &[1.0, 0.0], grid)?);
    let n = op.n();
    let order = cfg.order;
    let rho_hat: Vec<f64> = grid.positions().iter().map(|&x| cfg.packet(x)).collect();
    let packet_norm = sobolev_norm(&rho_hat, 1, grid.dx, order);
    let d2 = super::centered_derivative(&super::centered_derivative(&rho_hat, 1, grid.dx), 1, grid.dx);
    let roughness = sobolev_norm(&d2, 1, grid.dx, 0) / sobolev_norm(&rho_hat, 1, grid.dx, 0);
    let initial = |a: f64| -> Result<SimState> {
        SimState::from_fn(op.clone(), |x| {
            let r = a * cfg.packet(x) / packet_norm;
            [r, (1.0 + r) * a * cfg.velocity(x), 0.0]
        })
    };
    let dt_max = op.max_stable_dt() * cfg.dt_fraction;
    let (steps, dt) = super::uniform_steps(cfg.t_end, dt_max);
    let a_max = cfg.amplitudes.iter().cloned().fold(0.0, f64::max);
    type Row = Option<(f64, f64, f64, Option<VelocityHistory>)>;
    let runs: Vec<Result<Row>> = cfg
        .amplitudes
        .par_iter()
        .map(|&a| {
            let u0 = initial(a)?;
            let record = a == a_max;
            let mut hist = VelocityHistory { grid, times: vec![0.0], values: vec![velocity_of(&u0.fields, n)] };
            let mut obs = |s: &SimState| {
                hist.times.push(s.t);
                hist.values.push(velocity_of(&s.fields, n));
            };
            let observer: Option<&mut dyn FnMut(&SimState)> = if record { Some(&mut obs) } else { None };
            let pair = run_pair(&u0, cfg.t_end, dt_max, cfg.drop_nonlinearity, observer)?;
            if pair.nonlinear.blowup.is_some() || pair.linear.blowup.is_some() {
                return Ok(None);
            }
            let (nl, li) = (&pair.nonlinear.state.fields, &pair.linear.state.fields);
            let drho: Vec<f64> = (0..grid.nodes).map(|i| nl[i * n] - li[i * n]).collect();
            // u = m/ρ; its linearization at the rest state is m
            let du: Vec<f64> = (0..grid.nodes).map(|i| nl[i * n + 1] / (1.0 + nl[i * n]) - li[i * n + 1]).collect();
            Ok(Some((
                u0.sobolev_norm(order),
                sobolev_norm(&drho, 1, grid.dx, order),
                sobolev_norm(&du, 1, grid.dx, order),
                record.then_some(hist),
            )))
        })
        .collect();
    let (mut amps, mut norms, mut rho_err, mut u_err) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut history = None;
    let mut truncated = false;
    for (a, r) in cfg.amplitudes.iter().zip(runs) {
        match r? {
            Some((d, er, eu, h)) => {
                amps.push(*a);
                norms.push(d);
                rho_err.push(er);
                u_err.push(eu);
                if h.is_some() {
                    history = h;
                }
            }
            None => truncated = true,
        }
    }
    let (transport_ratio, transport_amplitude) = match history {
        Some(h) => {
            let rho0 = |x: f64| a_max * cfg.packet(x) / packet_norm;
            let moved: Vec<f64> = grid.positions().iter().map(|&x| rho0(h.foot(x))).collect();
            let orig: Vec<f64> = grid.positions().iter().map(|&x| rho0(x)).collect();
            let diff: Vec<f64> = moved.iter().zip(&orig).map(|(a, b)| a - b).collect();
            (sobolev_norm(&diff, 1, grid.dx, order) / sobolev_norm(&orig, 1, grid.dx, order), a_max)
        }
        None => (f64::NAN, f64::NAN),
    };
    let u_fit: Vec<(f64, f64)> =
        norms.iter().zip(&u_err).filter(|(_, e)| **e > 0.0).map(|(d, e)| (d.ln(), e.ln())).collect();
    let velocity_slope = if u_fit.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = u_fit.into_iter().unzip();
        linear_fit(&x, &y).0
    } else {
        f64::NAN
    };
    let density = fit_report(amps, norms, rho_err, truncated, &grid, dt, steps, start);
    Ok(EulerianReport {
        density,
        velocity_errors: u_err,
        velocity_slope,
        roughness,
        transport_ratio,
        transport_amplitude,
    })
}

fn velocity_of(fields: &[f64], n: usize) -> Vec<f64> {
    fields.chunks(n).map(|c| c[1] / (1.0 + c[0])).collect()
}
