use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;
use shockhopf::dynamics::{
    eulerian_counterexample, lagrangian_profile, linearization_error_experiment, EulerianConfig, LinearizationConfig,
};
use shockhopf::dynamics::{periodic_probe, ProbeConfig, ProbeOutcome};
use shockhopf::evans::hopf::hopf_scan;
use shockhopf::evans::{
    circle, rhp_contour, stability_check, winding_count, EvansFunction, MockFunction, SpectralFunction, Verdict,
};
use shockhopf::kernelsum::{kernel_experiment, KernelConfig};
use shockhopf::model::{check_structure, log_grid, State};
use shockhopf::profile::{decay_fit, linear_fit, predicted_decay, solve_profile_with, ShockProfile};
use shockhopf::Error;
use std::f64::consts::PI;

use crate::config::{CheckCmd, EvansCmd, HopfCmd, HopfFamily, ProbeCmd, ProfileCmd};
use crate::output::{write_csv, write_json, Cell};
use crate::{CliError, Ctx, Outcome};

type Spectral = Box<dyn SpectralFunction>;

pub fn profile(ctx: &Ctx, cfg: &ProfileCmd) -> Result<Outcome, CliError> {
    let model = cfg.model.model()?;
    let pair = cfg.model.endstates(&model)?;
    let p = solve_profile_with(&model, &pair, &cfg.profile)?;
    let csv = ctx.out.join("profile.csv");
    p.save_csv(&csv)?;
    let summary = json!({
        "s": pair.speed,
        "eta": p.eta,
        "residual": p.residual_max,
        "monotone": p.is_monotone(),
        "half_length": p.half_length(),
        "nodes": p.x.len(),
        "u_minus": pair.u_minus,
        "u_plus": pair.u_plus,
        "decay_fit": decay_fit(&p).ok(),
        "predicted_decay": predicted_decay(&p.model, &pair).ok(),
    });
    let json = ctx.out.join("profile_summary.json");
    write_json(&json, &summary)?;
    Ok(Outcome { outputs: vec![csv, json], code: 0 })
}

fn evans_function(ctx: &Ctx, cfg: &EvansCmd) -> Result<Spectral, CliError> {
    if let Some(mock) = &cfg.mock {
        let roots: Vec<C> = mock.roots.iter().map(|r| C::new(r[0], r[1])).collect();
        return Ok(Box::new(MockFunction(move |l: C| roots.iter().fold(C::new(1.0, 0.0), |acc, r| acc * (l - r)))));
    }
    let model = cfg.model.model()?;
    let pair = cfg.model.endstates(&model)?;
    let profile = match &cfg.profile_csv {
        Some(path) => ShockProfile::load_csv(&ctx.config_dir.join(path), &model, &pair)?,
        None => solve_profile_with(&model, &pair, &cfg.profile)?,
    };
    Ok(Box::new(EvansFunction::new(&profile, cfg.evans)?))
}

pub fn evans(ctx: &Ctx, cfg: &EvansCmd) -> Result<Outcome, CliError> {
    let f = evans_function(ctx, cfg)?;
    let report = stability_check(f.as_ref(), &cfg.stability)?;
    let extra = match &cfg.circle {
        Some(c) => Some(winding_count(
            f.as_ref(),
            &circle(C::new(c.center[0], c.center[1]), c.radius, c.vertices),
            &cfg.stability.contour,
        )?),
        None => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut symmetry = 0.0f64;
    for _ in 0..cfg.symmetry_samples {
        let l = C::new(rng.gen_range(0.05..2.0), rng.gen_range(0.1..5.0));
        let d = f.eval(l)?.value;
        let dc = f.eval(l.conj())?.value;
        symmetry = symmetry.max((dc - d.conj()).norm() / d.norm().max(f64::MIN_POSITIVE));
    }

    let mut rows = Vec::new();
    let mut push = |label: &'static str, samples: &[shockhopf::evans::EvansSample]| {
        for s in samples {
            rows.push(vec![
                Cell::S(label),
                Cell::F(s.lambda.re),
                Cell::F(s.lambda.im),
                Cell::F(s.value.re),
                Cell::F(s.value.im),
                Cell::F(s.normalization_log),
            ]);
        }
    };
    push("origin", &report.origin.samples);
    push("rhp", &report.rhp.samples);
    if let Some(c) = &extra {
        push("circle", &c.samples);
    }
    let csv = ctx.out.join("evans_contour.csv");
    write_csv(&csv, &["contour", "re_lambda", "im_lambda", "re_d", "im_d", "normalization_log"], rows)?;

    let (excess, reason) = match &report.verdict {
        Verdict::Stable => (0, None),
        Verdict::Unstable { excess } => (*excess, None),
        Verdict::Marginal { reason } => (0, Some(reason.clone())),
    };
    let verdict = json!({
        "verdict": report.verdict.label(),
        "excess": excess,
        "reason": reason,
        "origin_multiplicity": report.origin_winding,
        "rhp_winding": report.rhp_winding,
        "circle_winding": extra.as_ref().map(|c| c.winding),
        "rhp_min_modulus": report.rhp.min_modulus(),
        "symmetry_samples": cfg.symmetry_samples,
        "symmetry_max_relative": symmetry,
    });
    let json = ctx.out.join("evans_verdict.json");
    write_json(&json, &verdict)?;
    Ok(Outcome { outputs: vec![csv, json], code: 0 })
}

pub fn hopf(ctx: &Ctx, cfg: &HopfCmd) -> Result<Outcome, CliError> {
    let template = rhp_contour(cfg.contour_radius, cfg.contour_re_min, cfg.contour_vertices);
    let scan = match cfg.family {
        HopfFamily::Synthetic => {
            let backend = cfg.synthetic.backend()?;
            let family = backend.spectral_family();
            hopf_scan(&family, cfg.eps_range, &template, &cfg.hopf)?
        }
        HopfFamily::VPlus => {
            let model = cfg.model.model()?;
            let family = |eps: f64| -> shockhopf::Result<Spectral> {
                let mut spec = cfg.model.clone();
                spec.v_plus = eps;
                let pair = spec.endstates(&model)?;
                let p = solve_profile_with(&model, &pair, &cfg.profile)?;
                Ok(Box::new(EvansFunction::new(&p, cfg.evans)?))
            };
            hopf_scan(&family, cfg.eps_range, &template, &cfg.hopf)?
        }
    };
    let csv = ctx.out.join("hopf_windings.csv");
    write_csv(&csv, &["eps", "winding"], scan.windings.iter().map(|(e, w)| vec![Cell::F(*e), Cell::I(*w)]))?;
    let json = ctx.out.join("hopf_summary.json");
    write_json(&json, &json!({ "crossing": scan.crossing, "samples": scan.windings.len() }))?;
    Ok(Outcome { outputs: vec![csv, json], code: 0 })
}

pub fn kernelsum(ctx: &Ctx, cfg: &KernelConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let run = kernel_experiment(cfg)?;
    let j = run.report.j_compare;
    let direct = run.direct.at(j);
    let csv = ctx.out.join("kernelsum_resolvent.csv");
    write_csv(
        &csv,
        &["offset", "resolvent", "quad_error", "tail_bound", "direct"],
        run.resolvent.points.iter().enumerate().map(|(i, p)| {
            vec![
                Cell::F(p.offset),
                Cell::F(p.value),
                Cell::F(p.quad_error),
                Cell::F(p.tail_bound),
                Cell::F(direct.map_or(f64::NAN, |d| d[i])),
            ]
        }),
    )?;
    let l2 = ctx.out.join("kernelsum_l2.csv");
    write_csv(
        &l2,
        &["j", "t", "kernel_l2", "kernel_dy_l2", "kernel_l2_scaled"],
        run.direct.l2.iter().map(|&(j, k, dk)| {
            let t = j as f64 * cfg.period;
            vec![Cell::I(j as i64), Cell::F(t), Cell::F(k), Cell::F(dk), Cell::F(k * t.powf(0.25))]
        }),
    )?;
    let json = ctx.out.join("kernelsum_summary.json");
    write_json(&json, &json!({ "report": run.report, "fit": run.resolvent.fit }))?;
    Ok(Outcome { outputs: vec![csv, l2, json], code: 0 })
}

fn error_rows(amps: &[f64], norms: &[f64], errs: &[&[f64]]) -> Vec<Vec<Cell>> {
    (0..amps.len().min(norms.len()))
        .map(|i| {
            let mut row = vec![Cell::F(amps[i]), Cell::F(norms[i])];
            row.extend(errs.iter().map(|e| Cell::F(e.get(i).copied().unwrap_or(f64::NAN))));
            row
        })
        .collect()
}

pub fn energy(ctx: &Ctx, cfg: &LinearizationConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let profile = lagrangian_profile(cfg)?;
    let rep = linearization_error_experiment(&profile, cfg)?;
    let csv = ctx.out.join("energy.csv");
    write_csv(
        &csv,
        &["amplitude", "data_norm", "error"],
        error_rows(&rep.amplitudes, &rep.data_norms, &[&rep.errors]),
    )?;
    let json = ctx.out.join("energy_summary.json");
    write_json(&json, &json!({ "slope": rep.fitted_slope, "r2": rep.r2, "report": rep }))?;
    Ok(Outcome { outputs: vec![csv, json], code: if rep.truncated { 4 } else { 0 } })
}

pub fn eulerian(ctx: &Ctx, cfg: &EulerianConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let rep = eulerian_counterexample(cfg)?;
    let d = &rep.density;
    let csv = ctx.out.join("eulerian.csv");
    write_csv(
        &csv,
        &["amplitude", "data_norm", "rho_error", "u_error"],
        error_rows(&d.amplitudes, &d.data_norms, &[&d.errors, &rep.velocity_errors]),
    )?;
    let json = ctx.out.join("eulerian_summary.json");
    write_json(&json, &json!({ "rho_slope": d.fitted_slope, "r2": d.r2, "report": rep }))?;
    Ok(Outcome { outputs: vec![csv, json], code: if d.truncated { 4 } else { 0 } })
}

pub fn probe(ctx: &Ctx, cfg: &ProbeCmd) -> Result<Outcome, CliError> {
    let backend = cfg.backend.backend()?;
    let family = backend.spectral_family();
    let scan = hopf_scan(&family, cfg.eps_range, &rhp_contour(10.0, 1e-3, 64), &cfg.hopf)?;
    let crossing = scan.crossing.ok_or_else(|| Error::Continuation(format!("no crossing in {:?}", cfg.eps_range)))?;
    let outcomes = cfg
        .eps_values
        .par_iter()
        .map(|&eps| {
            let pc = ProbeConfig { eps, ..cfg.probe.clone() };
            periodic_probe(&backend, &crossing, backend.transverse_decay(), &pc)
        })
        .collect::<shockhopf::Result<Vec<ProbeOutcome>>>()?;

    let nan = f64::NAN;
    let csv = ctx.out.join("probe.csv");
    write_csv(
        &csv,
        &["eps", "cycle", "period", "amplitude", "localization_eta", "final_amplitude", "elapsed_time"],
        cfg.eps_values.iter().zip(&outcomes).map(|(&eps, o)| {
            let r = o.result.as_ref();
            vec![
                Cell::F(eps),
                Cell::I(r.is_some() as i64),
                Cell::F(r.map_or(nan, |r| r.period_estimate)),
                Cell::F(r.map_or(nan, |r| r.amplitude)),
                Cell::F(r.map_or(nan, |r| r.localization_eta)),
                Cell::F(o.final_amplitude),
                Cell::F(o.elapsed_time),
            ]
        }),
    )?;

    let (lx, ly): (Vec<f64>, Vec<f64>) = cfg
        .eps_values
        .iter()
        .zip(&outcomes)
        .filter_map(|(&eps, o)| {
            o.result
                .as_ref()
                .filter(|_| eps > crossing.eps_star)
                .map(|r| ((eps - crossing.eps_star).ln(), r.amplitude.ln()))
        })
        .unzip();
    let slope = (lx.len() >= 2).then(|| linear_fit(&lx, &ly).0);
    let json = ctx.out.join("probe_summary.json");
    write_json(
        &json,
        &json!({
            "crossing": crossing,
            "expected_period": 2.0 * PI / crossing.tau_star,
            "amplitude_slope": slope,
            "transverse_decay": backend.transverse_decay(),
            "outcomes": outcomes,
        }),
    )?;
    let exhausted = outcomes.iter().any(|o| o.exhausted);
    Ok(Outcome { outputs: vec![csv, json], code: if exhausted { 5 } else { 0 } })
}

pub fn check(ctx: &Ctx, cfg: &CheckCmd) -> Result<Outcome, CliError> {
    if cfg.segment_states + cfg.random_states == 0
        || cfg.xi_count == 0
        || !(cfg.xi_min > 0.0 && cfg.xi_max >= cfg.xi_min)
    {
        return Err(CliError::Config("check needs at least one state and a positive ξ range".into()));
    }
    let model = cfg.model.model()?;
    let pair = cfg.model.endstates(&model)?;
    let (um, up) = (pair.minus(), pair.plus());
    let on_segment = |theta: f64| -> State { &um * (1.0 - theta) + &up * theta };
    let mut states: Vec<State> =
        (0..cfg.segment_states).map(|k| on_segment(k as f64 / (cfg.segment_states.max(2) - 1) as f64)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    states.extend((0..cfg.random_states).map(|_| on_segment(rng.gen::<f64>())));
    let xi = log_grid(cfg.xi_min, cfg.xi_max, cfg.xi_count);
    let report = check_structure(&model.with_speed(pair.speed), &states, &xi);
    let json = ctx.out.join("check_report.json");
    write_json(
        &json,
        &json!({
            "speed": pair.speed,
            "lax_indices": pair.lax_indices,
            "strength": pair.strength(),
            "states": states.len(),
            "report": report,
        }),
    )?;
    Ok(Outcome { outputs: vec![json], code: 0 })
}
