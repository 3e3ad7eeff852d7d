use proptest::prelude::*;
use qtraj::homech::*;
use rustfft::{num_complex::Complex, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

const TOL: f64 = 1e-12;

fn orbit(e1: f64, e2: f64) -> (SemiclassicalFit, SemiclassicalLagrangian, HOState, f64) {
    let fit = fit_semiclassical(e1, e2, 1.0, 1.0, 1.0).unwrap();
    let (s0, period) = fit.periodic_orbit(1e-13).unwrap();
    (fit, fit.lagrangian().unwrap(), s0, period)
}

/// Fundamental frequency from a zero-padded FFT with parabolic peak interpolation.
fn fft_fundamental(path: &[HOState]) -> f64 {
    let n = path.len();
    let dt = path[1].t - path[0].t;
    let (t0, t1) = (path[0].t, path[n - 1].t);
    let slope = (path[n - 1].q - path[0].q) / (t1 - t0);
    let padded = (16 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); padded];
    for (i, s) in path.iter().enumerate() {
        let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
        buf[i] = Complex::new((s.q - path[0].q - slope * (s.t - t0)) * w, 0.0);
    }
    FftPlanner::new().plan_fft_forward(padded).process(&mut buf);
    let mag: Vec<f64> = buf[..padded / 2].iter().map(|c| c.norm()).collect();
    let k = (48..mag.len() - 1).max_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap();
    let (l, c, r) = (mag[k - 1].ln(), mag[k].ln(), mag[k + 1].ln());
    let kf = k as f64 + 0.5 * (l - r) / (l - 2.0 * c + r);
    2.0 * PI * kf / (padded as f64 * dt)
}

#[test]
fn el_matches_finite_difference_variational_derivative() {
    // Euler–Lagrange residual d²/dt² ∂L/∂q̈ − d/dt ∂L/∂q̇ along the quartic Taylor
    // path whose fourth derivative is the returned q⁗; partials of L are taken
    // numerically from the Lagrangian itself.
    let lag = SemiclassicalLagrangian::new(1.3, 0.8, 0.04).unwrap();
    let s0 = HOState::new(0.0, 0.2, 1.4, 0.3, -0.5);
    let snap = lag.el_derivative(&s0).unwrap();
    let at = |t: f64| {
        let q = s0.q + s0.qd * t + s0.qdd * t * t / 2.0 + s0.qddd * t.powi(3) / 6.0 + snap * t.powi(4) / 24.0;
        let qd = s0.qd + s0.qdd * t + s0.qddd * t * t / 2.0 + snap * t.powi(3) / 6.0;
        let qdd = s0.qdd + s0.qddd * t + snap * t * t / 2.0;
        let qddd = s0.qddd + snap * t;
        HOState::new(t, q, qd, qdd, qddd)
    };
    let partial = |s: HOState, which: usize| {
        let h = 1e-3;
        let l = |d: f64| {
            let mut p = s;
            if which == 0 {
                p.qd += d;
            } else {
                p.qdd += d;
            }
            lag.lagrangian(&p).unwrap()
        };
        (-l(2.0 * h) + 8.0 * l(h) - 8.0 * l(-h) + l(-2.0 * h)) / (12.0 * h)
    };
    let dl_du = |s: HOState| partial(s, 0);
    let dl_da = |s: HOState| partial(s, 1);
    let h = 1e-2;
    let d1 = |f: &dyn Fn(f64) -> f64| (-f(2.0 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2.0 * h)) / (12.0 * h);
    let d2 = |f: &dyn Fn(f64) -> f64| {
        (-f(2.0 * h) + 16.0 * f(h) - 30.0 * f(0.0) + 16.0 * f(-h) - f(-2.0 * h)) / (12.0 * h * h)
    };
    let resid = d2(&|t| dl_da(at(t))) - d1(&|t| dl_du(at(t)));
    let scale = lag.mass * s0.qdd.abs() + lag.stiffness() * snap.abs() / s0.qd.powi(4);
    assert!(resid.abs() < 1e-6 * scale, "residual {resid:e} vs scale {scale}");
}

#[test]
fn single_harmonic_solves_el_to_first_order() {
    // q = vt + A cos ωt with ω = mv²/(ħ√(−2c₂)) leaves a residual of second order in Aω/v.
    let lag = SemiclassicalLagrangian::new(1.0, 1.0, 0.0).unwrap();
    let v = 1.5;
    let w = v * v / (1.0 - 2.0 * lag.eps).sqrt();
    let resid = |amp: f64| {
        let mut worst: f64 = 0.0;
        for i in 0..200 {
            let t = i as f64 * 2.0 * PI / (200.0 * w);
            let (sn, cs) = (w * t).sin_cos();
            let s = HOState::new(t, v * t + amp * cs, v - amp * w * sn, -amp * w * w * cs, amp * w.powi(3) * sn);
            let exact_snap = amp * w.powi(4) * cs;
            let r = lag.stiffness() * (exact_snap - lag.el_derivative(&s).unwrap()) / s.qd.powi(4);
            worst = worst.max(r.abs());
        }
        worst / (lag.mass * v * w)
    };
    let d = 0.02;
    let (r1, r2) = (resid(d * v / w), resid(0.5 * d * v / w));
    assert!(r1 < 10.0 * d * d, "{r1}");
    let ratio = r1 / r2;
    assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn conservation_over_ten_periods() {
    let (fit, lag, s0, period) = orbit(0.01, 0.0);
    let path = lag.integrate(&s0, 10.0 * period, TOL).unwrap();
    let e0 = lag.energy(&s0).unwrap();
    let p0 = lag.jo_momenta(&s0).unwrap().0;
    let floor = 0.5 * (fit.p1 - (fit.p1 * fit.p1 - 2.0 * fit.mass * fit.energy).sqrt()) / fit.mass;
    for s in &path {
        assert!(((lag.energy(s).unwrap() - e0) / e0).abs() < 1e-8);
        assert!(((lag.jo_momenta(s).unwrap().0 - p0) / p0).abs() < 1e-8);
        assert!(s.qd > floor);
    }
}

#[test]
fn fundamental_follows_frequency_law() {
    let (fit, lag, s0, period) = orbit(1e-4, 0.0);
    let n = 8192;
    let path = lag.integrate_uniform(&s0, 60.0 * period / n as f64, n, TOL).unwrap();
    let w = fft_fundamental(&path);
    let v = (path[n - 1].q - path[0].q) / (path[n - 1].t - path[0].t);
    let law = lag.mass * v * v / (lag.hbar * (-2.0 * fit.c2b).sqrt());
    assert!((w / law - 1.0).abs() < 1e-3, "fft {w} law {law}");
}

#[test]
fn fitted_omega_equals_kv_to_second_order() {
    for &e in &[0.002, 0.01, 0.04] {
        let fit = fit_semiclassical(e, 0.0, 1.0, 1.0, 1.0).unwrap();
        let law = fit.mass * fit.v * fit.v / (fit.hbar * (-2.0 * fit.c2b).sqrt());
        assert!((fit.omega / law - 1.0).abs() < e * e, "eps {e}");
        assert!((fit.omega - fit.k() * fit.v).abs() < 1e-14);
    }
}

#[test]
fn p_el_matches_p_qhj_at_first_order() {
    for &(e1, e2) in &[(0.01, 0.0), (0.0, 0.01), (-0.006, -0.008)] {
        let (fit, lag, s0, period) = orbit(e1, e2);
        let path = lag.integrate_uniform(&s0, period / 1000.0, 1001, TOL).unwrap();
        let worst = path
            .iter()
            .map(|s| (lag.p_el(s).unwrap() - fit.p_qhj(s.q)).abs())
            .fold(0.0, f64::max);
        let c = worst / (fit.eps.powf(1.5) * (2.0 * fit.mass * fit.energy).sqrt());
        assert!(c <= 5.0, "({e1},{e2}): C = {c}");
    }
}

#[test]
fn second_harmonic_and_decay() {
    let (_, lag, s0, period) = orbit(0.01, 0.0);
    let n = 4000;
    let path = lag.integrate_uniform(&s0, 10.0 * period / n as f64, n + 1, TOL).unwrap();
    let m = fourier_modes(&path).unwrap();
    let a1 = m.modes[0].0;
    let a2_pred = 0.5 * (m.omega / m.v) * a1 * a1;
    assert!((m.modes[1].0 / a2_pred - 1.0).abs() < 0.05, "A2 {} vs {}", m.modes[1].0, a2_pred);
    // log A_n linear in n with slope log(ωA₁/v).
    let xs: Vec<f64> = (1..=4).map(|n| n as f64).collect();
    let ys: Vec<f64> = m.modes.iter().map(|&(a, _)| a.ln()).collect();
    let xm = xs.iter().sum::<f64>() / 4.0;
    let ym = ys.iter().sum::<f64>() / 4.0;
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum::<f64>()
        / xs.iter().map(|x| (x - xm).powi(2)).sum::<f64>();
    let expect = (m.omega * a1 / m.v).ln();
    assert!((slope / expect - 1.0).abs() < 0.2, "slope {slope} vs {expect}");
}

#[test]
fn orbit_energy_and_momentum_match_fit() {
    let (fit, lag, s0, period) = orbit(0.01, 0.0);
    let n = 4000;
    let path = lag.integrate_uniform(&s0, 10.0 * period / n as f64, n + 1, TOL).unwrap();
    let m = fourier_modes(&path).unwrap();
    let e = lag.energy(&s0).unwrap();
    let approx = 0.5 * fit.mass * m.v * m.v + 0.5 * fit.mass * (m.modes[0].0 * m.omega).powi(2);
    assert!((e - approx).abs() < fit.eps.powf(1.5) * fit.energy, "{e} vs {approx}");
    let mean_p1 = path.iter().map(|s| lag.jo_momenta(s).unwrap().0).sum::<f64>() / path.len() as f64;
    assert!((mean_p1 - fit.p1).abs() < 5.0 * fit.eps.powf(1.5) * (2.0 * fit.mass * fit.energy).sqrt());
}

#[test]
fn inconsistency_residual_against_dense_c3_scan() {
    let fit = fit_semiclassical(0.01, 0.0, 1.0, 1.0, 1.0).unwrap();
    let (c3, res) = inconsistency_residual(&fit);
    // Brute force: sample both 3ω components over one period in the time domain
    // and minimize the RMS mismatch over a dense c₃ grid.
    let (qc, qs, kk, alpha) = third_harmonic_coefficients(&fit);
    let ph = 3.0 * fit.theta1();
    let floor = (0..=20000)
        .map(|i| {
            let c = -10.0 + 20.0 * i as f64 / 20000.0;
            let n = 512;
            let ms = (0..n)
                .map(|j| {
                    let x = 2.0 * PI * j as f64 / n as f64 + ph;
                    let q = qc * x.cos() + qs * x.sin();
                    let p = kk * (alpha * c * x.cos() + 3.25 * x.sin());
                    (q - p).powi(2)
                })
                .sum::<f64>()
                / n as f64;
            (2.0 * ms).sqrt()
        })
        .fold(f64::INFINITY, f64::min);
    assert!(res > 0.0);
    assert!(res > 0.5 * floor && res <= floor * (1.0 + 1e-9), "{res} vs {floor}");
    assert!(c3.abs() < 1e-3);
}

#[test]
fn inconsistency_scales_as_eps_three_halves() {
    let r = |e: f64| inconsistency_residual(&fit_semiclassical(e, 0.0, 1.0, 1.0, 1.0).unwrap()).1;
    for &e in &[0.0025, 0.01] {
        let ratio = r(4.0 * e) / r(e);
        assert!((ratio / 8.0 - 1.0).abs() < 0.15, "eps {e}: ratio {ratio}");
    }
}

#[test]
fn c2b_3d_against_velocity_form() {
    // Unexpanded form −m²|v|⁴/(2(Σ vᵢ√(2mEᵢ))²) with vᵢ from the 1-D fits.
    let cases = [([0.004, 0.0, 0.002], [0.0, 0.003, 0.0], [1.0, 0.5, 2.0]), ([0.02, 0.0, 0.0], [0.0; 3], [1.0, 0.0, 0.0])];
    for (e1, e2, en) in cases {
        let c = c2b_3d(e1, e2, en).unwrap();
        let (mut v2, mut dotk) = (0.0, 0.0);
        let mut eps_sum: f64 = 0.0;
        for i in 0..3 {
            let ei = e1[i].hypot(e2[i]);
            eps_sum += ei;
            let vi = (2.0 * en[i]).sqrt() * (1.0 - ei);
            v2 += vi * vi;
            dotk += vi * (2.0 * en[i]).sqrt();
        }
        let exact = -(v2 * v2) / (2.0 * dotk * dotk);
        assert!((c - exact).abs() < 3.0 * eps_sum.powf(1.5), "{c} vs {exact}");
    }
    let one = c2b_3d([0.02, 0.0, 0.0], [0.0; 3], [1.0, 0.0, 0.0]).unwrap();
    assert!((one - fit_semiclassical(0.02, 0.0, 1.0, 1.0, 1.0).unwrap().c2b).abs() < 0.02f64.powf(1.5));
}

#[test]
fn three_d_reduces_to_one_d_along_an_axis() {
    let l3 = Lagrangian3D::free(1.0, 1.0);
    let l1 = SemiclassicalLagrangian::new(1.0, 1.0, 0.0).unwrap();
    let s1 = HOState::new(0.0, 0.0, 1.2, 0.1, -0.2);
    let s3 = HOState3 { t: 0.0, q: [0.0; 3], qd: [1.2, 0.0, 0.0], qdd: [0.1, 0.0, 0.0], qddd: [-0.2, 0.0, 0.0] };
    assert!((l3.energy_3d(&s3).unwrap() - l1.energy(&s1).unwrap()).abs() < 1e-13);
    assert!((l3.el_derivative_3d(&s3).unwrap()[0] - l1.el_derivative(&s1).unwrap()).abs() < 1e-12);
    assert!((l3.jo_momenta_3d(&s3).unwrap().0[0] - l1.jo_momenta(&s1).unwrap().0).abs() < 1e-13);
}

#[test]
fn three_d_energy_conserved_with_eps_field_and_potential() {
    let lag = Lagrangian3D::free(1.0, 1.0)
        .with_eps_field(Arc::new(|q: [f64; 3]| 0.05 * (0.3 * q[0]).sin() + 0.02 * q[1]))
        .with_potential(|q| 0.01 * (q[0] * q[0] + q[1] * q[1]), |q| [0.02 * q[0], 0.02 * q[1], 0.0]);
    let s0 = HOState3 { t: 0.0, q: [0.0; 3], qd: [1.0, 0.4, 0.2], qdd: [0.02, -0.01, 0.0], qddd: [0.0, 0.01, -0.01] };
    let e0 = lag.energy_3d(&s0).unwrap();
    let path = lag.integrate_3d(&s0, 6.0, 1e-11).unwrap();
    for s in &path {
        assert!(((lag.energy_3d(s).unwrap() - e0) / e0).abs() < 1e-6);
    }
}

#[test]
fn tunneling_back_substitution() {
    let (e, v, qdd, qddd) = (1.0, 1.1, 0.05, -0.7);
    let u = tunneling_speed_squared(e, v, qdd, qddd, 1.0, 1.0).unwrap();
    assert!(u > 0.0);
    let qd = u.sqrt();
    let free = SemiclassicalLagrangian::new(1.0, 1.0, 0.0).unwrap();
    let back = free.energy(&HOState::new(0.0, 0.0, qd, qdd, qddd)).unwrap() + v;
    assert!((back - e).abs() < 1e-10);
}

proptest! {
    #[test]
    fn p_el_two_code_paths_agree(u in 0.3f64..3.0, sgn in prop::bool::ANY, a in -0.5f64..0.5, j in -0.5f64..0.5, eps in 0.0f64..0.15) {
        let lag = SemiclassicalLagrangian::new(1.0, 1.0, eps).unwrap();
        let u = if sgn { u } else { -u };
        let s = HOState::new(0.0, 0.0, u, a, j);
        let (p1, p2) = lag.jo_momenta(&s).unwrap();
        let direct = lag.p_el(&s).unwrap();
        prop_assert!((direct - (p1 + p2 * a / u)).abs() <= 1e-12 * (1.0 + direct.abs() + p1.abs()));
    }

    #[test]
    fn energy_is_legendre_transform(u in 0.3f64..3.0, a in -0.5f64..0.5, j in -0.5f64..0.5, eps in 0.0f64..0.15) {
        let lag = SemiclassicalLagrangian::new(1.0, 1.0, eps).unwrap();
        let s = HOState::new(0.0, 0.0, u, a, j);
        let (p1, p2) = lag.jo_momenta(&s).unwrap();
        let e = p1 * u + p2 * a - lag.lagrangian(&s).unwrap();
        prop_assert!((lag.energy(&s).unwrap() - e).abs() <= 1e-10 * (1.0 + e.abs()));
    }

    #[test]
    fn tunneling_root_reproduces_energy(gap in -0.3f64..0.5, qddd in -0.8f64..-0.1) {
        let (e, v) = (1.0, 1.0 - gap);
        if let Ok(u) = tunneling_speed_squared(e, v, 0.0, qddd, 1.0, 1.0) {
            let back = 0.5 * u + qddd / u.powf(1.5) + v;
            prop_assert!(u > 0.0);
            prop_assert!((back - e).abs() < 1e-10);
        }
    }
}
