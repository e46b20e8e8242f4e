use num_complex::Complex64 as C;
use shockhopf::kernelsum::*;
use std::f64::consts::PI;

/// Poisson summation over the poles `2πik/T` of the summed series:
/// `𝒦 = T⁻¹ Σ_k ĝ(2πik/T)`, with `ĝ` the Laplace transform of `∂_y K`.
fn residue_oracle(d: f64, a: f64, t: f64) -> f64 {
    let g = |l: C| {
        let s = (C::new(a * a, 0.0) + 4.0 * l).sqrt();
        let mu = if d >= 0.0 { (a - s) / 2.0 } else { (a + s) / 2.0 };
        -mu * (mu * d).exp() / s
    };
    let mut sum = g(C::new(0.0, 0.0)).re;
    for k in 1..20000 {
        let term = 2.0 * g(C::new(0.0, 2.0 * PI * k as f64 / t)).re;
        sum += term;
        if term.abs() < 1e-18 && k > 10 {
            break;
        }
    }
    sum / t
}

#[test]
fn kernel_integrates_to_one() {
    // trapezoid rule, spectrally accurate for a Gaussian
    let h = 1e-3;
    let s: f64 = (-20000..=20000).map(|i| heat_kernel(i as f64 * h, 1.0, 0.0, 0.7).unwrap()).sum::<f64>() * h;
    assert!((s - 1.0).abs() < 1e-8);
}

#[test]
fn l2_norm_scales_like_quarter_power() {
    let oracle = (8.0 * PI).powf(-0.25);
    for j in [10, 20, 50, 100] {
        let t = j as f64;
        let n = kernel_l2_norm(t, 1.0).unwrap();
        assert!((n * t.powf(0.25) / oracle - 1.0).abs() < 1e-10);
    }
    let cfg = KernelConfig { offsets: vec![0.0, 1.0, 2.0], j_max: 100, ladder: vec![1, 100], ..Default::default() };
    let d = direct_partial_sum(&cfg).unwrap();
    let scaled: Vec<f64> =
        d.l2.iter().filter(|e| (10..=100).contains(&e.0)).map(|e| e.1 * (e.0 as f64).powf(0.25)).collect();
    let (lo, hi) = scaled.iter().fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
    assert!(hi / lo - 1.0 < 0.01);
}

#[test]
fn single_term_vanishes_at_the_peak() {
    assert_eq!(heat_kernel_dy(1.0, 1.0, 0.0, 1.0).unwrap(), 0.0);
    assert!(heat_kernel_dy(3.7, 2.0, 0.5, 1.6).unwrap().abs() < 1e-15);
}

#[test]
fn contour_route_matches_residue_sum() {
    let cfg = KernelConfig::default();
    for d in [-4.0, -1.0, 0.3, 1.0, 2.5, 5.0, 8.0] {
        let v = resolvent_value(d, &cfg).unwrap().value;
        let o = residue_oracle(d, 1.0, 1.0);
        assert!((v - o).abs() < 1e-10 * (1.0 + o.abs()), "{d}: {v} vs {o}");
    }
    let cfg = KernelConfig { a: 1.7, period: 0.6, ..Default::default() };
    for d in [-2.0, 0.5, 3.0] {
        let v = resolvent_value(d, &cfg).unwrap().value;
        let o = residue_oracle(d, 1.7, 0.6);
        assert!((v - o).abs() < 1e-10 * (1.0 + o.abs()));
    }
}

#[test]
fn direct_sum_agrees_with_contour_route() {
    let cfg = KernelConfig::default();
    let run = kernel_experiment(&cfg).unwrap();
    assert_eq!(run.report.j_compare, 1000);
    assert!(run.report.direct_vs_resolvent < 0.05);
    let s = run.direct.at(1000).unwrap();
    for (i, &d) in cfg.offsets.iter().enumerate() {
        // the residue series converges slowly as |x − y| → 0
        if (0.5..=5.0).contains(&d.abs()) {
            assert!((s[i] - residue_oracle(d, 1.0, 1.0)).abs() < 1e-9);
        }
    }
}

#[test]
fn exponential_decay_downstream() {
    let run = kernel_experiment(&KernelConfig::default()).unwrap();
    let fit = &run.resolvent.fit;
    assert!(fit.eta0 > 0.0 && fit.r2 > 0.98);
    for p in &run.resolvent.points {
        if (1.0..=8.0).contains(&p.offset) {
            assert!(p.value.abs() <= fit.c_bound * (-fit.eta0 * p.offset).exp() * (1.0 + 1e-12));
        }
    }
    // the slowest residue sets the rate: −Re μ(2πi/T)
    let s = C::new(1.0, 8.0 * PI).sqrt();
    let rate = -(1.0 - s.re) / 2.0;
    assert!((fit.eta0 / rate - 1.0).abs() < 0.05, "{} vs {rate}", fit.eta0);
}

#[test]
fn independent_of_contour_radius() {
    let base = KernelConfig::default();
    let quarter = 0.25 * base.a * base.a;
    let reference = resolvent_value(2.0, &base).unwrap().value;
    for frac in [0.05, 0.1, 0.2] {
        let r = frac * quarter;
        let cfg = KernelConfig { contour_r: r, contour_nu: 0.5 * r, ..base.clone() };
        let v = resolvent_value(2.0, &cfg).unwrap().value;
        assert!((v / reference - 1.0).abs() < 0.01);
    }
}

#[test]
fn quadrature_error_halves_with_panel_doubling() {
    let cfg = KernelConfig::default();
    let exact = residue_oracle(3.0, 1.0, 1.0);
    let mut last = f64::INFINITY;
    for panels in [4, 8, 16, 32] {
        let e = (resolvent_value_fixed(3.0, &cfg, panels) - exact).abs();
        assert!(e <= 0.5 * last);
        last = e;
    }
}

#[test]
fn upstream_values_follow_the_zero_frequency_residue() {
    // against the convection the k = 0 pole contributes −e^{a d}/T, which
    // dominates: upstream values are comparable to downstream ones
    let cfg = KernelConfig::default();
    for d in [3.0, 5.0, 7.0] {
        let up = resolvent_value(-d, &cfg).unwrap().value;
        let down = resolvent_value(d, &cfg).unwrap().value;
        assert!((up + (-d).exp()).abs() < 0.02 * (-d).exp());
        assert!(up.abs() > down.abs());
    }
}

#[test]
fn partial_sums_converge_geometrically() {
    let cfg = KernelConfig { offsets: vec![3.0], ladder: vec![20, 40, 80], j_max: 80, ..Default::default() };
    let d = direct_partial_sum(&cfg).unwrap();
    let (s20, s40, s80) = (d.at(20).unwrap()[0], d.at(40).unwrap()[0], d.at(80).unwrap()[0]);
    // successive increments are single terms; oracle: direct term evaluation
    for j in [20usize, 40, 79] {
        let inc = heat_kernel_dy(3.0, (j + 1) as f64, 0.0, 1.0).unwrap();
        let ratio = heat_kernel_dy(3.0, (j + 2) as f64, 0.0, 1.0).unwrap() / inc;
        // the ratio tends to e^{−a²T/4}, far below any algebraic J^{−5/4} law
        assert!(ratio < (-0.2f64).exp());
    }
    // an algebraic tail ~J^{-1/4} would give a ratio near 2^{-1/4}
    assert!((s80 - s40).abs() < 0.05 * (s40 - s20).abs());
}

#[test]
fn report_is_serializable() {
    let cfg = KernelConfig { offsets: (0..=180).map(|i| -1.0 + 0.05 * i as f64).collect(), ..Default::default() };
    let run = kernel_experiment(&cfg).unwrap();
    let js = serde_json::to_string(&run.report).unwrap();
    assert!(js.contains("eta0"));
}
