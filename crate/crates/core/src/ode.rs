//! Adaptive Dormand–Prince 5(4) integration for real or complex vector ODEs.
//!
//! The integrator lands exactly on each requested output abscissa, so callers
//! get values on their own grid without interpolation error.

use nalgebra::{ComplexField, DVector};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: Option<f64>,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, h_init: None, h_max: f64::INFINITY, h_min: 1e-14, max_steps: 1_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OdeFailure {
    StepUnderflow { x: f64 },
    MaxSteps { x: f64 },
    Escaped { x: f64 },
    NonFinite { x: f64 },
}

impl std::fmt::Display for OdeFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OdeFailure::StepUnderflow { x } => write!(f, "step size underflow at x = {x}"),
            OdeFailure::MaxSteps { x } => write!(f, "step budget exhausted at x = {x}"),
            OdeFailure::Escaped { x } => write!(f, "trajectory left the admissible region at x = {x}"),
            OdeFailure::NonFinite { x } => write!(f, "non-finite state at x = {x}"),
        }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] =
    [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

/// Integrates `y' = rhs(x, y)` from `x0` through every abscissa in `stops`
/// (monotone, all on the same side of `x0`) and returns the state at each.
///
/// `guard` is consulted after each accepted step; returning `false` aborts
/// with [`OdeFailure::Escaped`].
pub fn integrate_through<N, F, G>(
    mut rhs: F,
    x0: f64,
    y0: &DVector<N>,
    stops: &[f64],
    opts: &OdeOptions,
    mut guard: G,
) -> Result<Vec<DVector<N>>, OdeFailure>
where
    N: ComplexField<RealField = f64> + Copy,
    F: FnMut(f64, &DVector<N>, &mut DVector<N>),
    G: FnMut(f64, &DVector<N>) -> bool,
{
    let mut out = Vec::with_capacity(stops.len());
    if stops.is_empty() {
        return Ok(out);
    }
    let dim = y0.len();
    let dir = if stops[stops.len() - 1] >= x0 { 1.0 } else { -1.0 };
    let span = (stops[stops.len() - 1] - x0).abs().max(1e-300);

    let mut x = x0;
    let mut y = y0.clone();
    let mut k: Vec<DVector<N>> = (0..7).map(|_| DVector::zeros(dim)).collect();
    let mut tmp = DVector::zeros(dim);
    let mut y_new = DVector::zeros(dim);
    rhs(x, &y, &mut k[0]);

    let mut h = opts.h_init.unwrap_or_else(|| initial_step(&y, &k[0], opts, span));
    h = h.min(opts.h_max);
    let mut steps = 0usize;

    for &stop in stops {
        while dir * (stop - x) > 0.0 {
            steps += 1;
            if steps > opts.max_steps {
                return Err(OdeFailure::MaxSteps { x });
            }
            let remaining = (stop - x).abs();
            let mut hs = h.min(remaining);
            // avoid leaving a sliver before the stop
            if remaining - hs < 1e-3 * hs {
                hs = remaining;
            }
            let hd = dir * hs;

            for s in 1..7 {
                tmp.copy_from(&y);
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        tmp.axpy(N::from_real(hd * a), kj, N::one());
                    }
                }
                let (head, tail) = k.split_at_mut(s);
                let _ = head;
                rhs(x + C[s] * hd, &tmp, &mut tail[0]);
            }
            // 5th-order solution is the last stage argument
            y_new.copy_from(&tmp);

            let mut err_sq = 0.0;
            for i in 0..dim {
                let mut e = N::zero();
                for (j, kj) in k.iter().enumerate() {
                    if E[j] != 0.0 {
                        e += kj[i] * N::from_real(E[j]);
                    }
                }
                let e = (e * N::from_real(hd)).modulus();
                let sc = opts.atol + opts.rtol * y[i].modulus().max(y_new[i].modulus());
                err_sq += (e / sc).powi(2);
            }
            let err = (err_sq / dim.max(1) as f64).sqrt();
            if !err.is_finite() {
                if hs <= opts.h_min {
                    return Err(OdeFailure::NonFinite { x });
                }
                h = hs * 0.1;
                continue;
            }

            if err <= 1.0 {
                x = if hs == remaining { stop } else { x + hd };
                std::mem::swap(&mut y, &mut y_new);
                let (first, rest) = k.split_at_mut(1);
                std::mem::swap(&mut first[0], &mut rest[5]);
                if !guard(x, &y) {
                    return Err(OdeFailure::Escaped { x });
                }
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h = (hs * fac).min(opts.h_max);
            } else {
                h = hs * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                if h < opts.h_min {
                    return Err(OdeFailure::StepUnderflow { x });
                }
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

fn initial_step<N>(y: &DVector<N>, f: &DVector<N>, opts: &OdeOptions, span: f64) -> f64
where
    N: ComplexField<RealField = f64> + Copy,
{
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..y.len() {
        let sc = opts.atol + opts.rtol * y[i].modulus();
        d0 += (y[i].modulus() / sc).powi(2);
        d1 += (f[i].modulus() / sc).powi(2);
    }
    let h = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * (d0 / d1).sqrt() };
    h.min(span).min(opts.h_max).max(opts.h_min)
}

/// Convenience wrapper: integrate to a single endpoint.
pub fn integrate<N, F>(rhs: F, x0: f64, y0: &DVector<N>, x1: f64, opts: &OdeOptions) -> Result<DVector<N>, OdeFailure>
where
    N: ComplexField<RealField = f64> + Copy,
    F: FnMut(f64, &DVector<N>, &mut DVector<N>),
{
    let mut v = integrate_through(rhs, x0, y0, &[x1], opts, |_, _| true)?;
    Ok(v.pop().expect("one stop requested"))
}
