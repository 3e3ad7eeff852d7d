use proptest::prelude::*;
use qtraj::biprism::*;
use qtraj::Complex64;
use rustfft::{num_complex::Complex, FftPlanner};
use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [−1, 1] by Newton iteration on Pₙ.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let k = k as f64;
                    (p0, p1) = (p1, ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k);
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Composite fixed-order Gauss–Legendre over [a, b] with panels of width ≤ h.
fn composite<F: Fn(f64) -> Complex64>(f: F, a: f64, b: f64, h: f64) -> Complex64 {
    let rule = gauss_legendre(32);
    let panels = ((b - a) / h).ceil().max(1.0) as usize;
    let w = (b - a) / panels as f64;
    let mut sum = Complex64::new(0.0, 0.0);
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * w;
        for &(x, wt) in &rule {
            sum += f(mid + 0.5 * w * x) * (0.5 * w * wt);
        }
    }
    sum
}

/// Σ weight·∫ exp(−(τ + c)²/σ²) e^{iπτ²/2} dτ over (−∞, lim] or [lim, ∞).
fn oracle_kernel(below: bool, lim: f64, c: f64, s: f64, beam: &GaussianBeam) -> Complex64 {
    beam.components
        .iter()
        .map(|comp| {
            let sigma = s * comp.w0;
            let (mut a, mut b) = (-c - 12.0 * sigma, -c + 12.0 * sigma);
            if below {
                b = b.min(lim);
            } else {
                a = a.max(lim);
            }
            if a >= b {
                return Complex64::new(0.0, 0.0);
            }
            let f = |t: f64| Complex64::from_polar((-(t + c) * (t + c) / (sigma * sigma)).exp(), 0.5 * PI * t * t);
            comp.weight * composite(f, a, b, 0.02)
        })
        .sum()
}

#[test]
fn kernels_match_dense_gauss_legendre() {
    let g = BiprismGeometry::default();
    let z = g.screen_z;
    let s = (g.k() / (PI * z)).sqrt();
    let (tz, hd) = (g.tilt() * z, 0.5 * g.filament_d);
    for &x0 in &[-0.6e-3, 0.0, 0.4e-3] {
        let beam = GaussianBeam::two_component(x0);
        let got = kernels(0.0, z, &g, &beam).unwrap();
        let k1 = oracle_kernel(true, s * (-hd + tz), s * (-tz - x0), s, &beam);
        let k2 = oracle_kernel(false, s * (hd - tz), s * (tz - x0), s, &beam);
        for (a, b) in [(got.m1, k1.re), (got.n1, k1.im), (got.m2, k2.re), (got.n2, k2.im)] {
            assert!((a - b).abs() < 1e-8, "x0 {x0}: {a} vs {b}");
        }
        let closed = Biprism::new(g, beam).unwrap().kernels_at(0.0, z).unwrap();
        assert!((closed.k1() - k1).norm() < 1e-8 && (closed.k2() - k2).norm() < 1e-8);
    }
}

#[test]
fn wide_beam_reproduces_knife_edge_pattern() {
    // Cornu construction: |(½ + C(U)) + i(½ + S(U))|² with C, S from the
    // oracle quadrature of cos/sin(πτ²/2) over [0, U].
    let g = BiprismGeometry::default();
    let z = g.screen_z;
    let s = (g.k() / (PI * z)).sqrt();
    let edge = -0.5 * g.filament_d + g.tilt() * z;
    let bp = Biprism::new(g, GaussianBeam::single(edge, 1e3 * g.filament_d))
        .unwrap()
        .with_open(OpenSlots::Lower)
        .without_validity_check();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..200 {
        let x = edge - 3e-3 + 4e-3 * i as f64 / 199.0;
        let u = s * (edge - x);
        let cs = composite(|t| Complex64::from_polar(1.0, 0.5 * PI * t * t), 0.0, u.abs(), 0.02) * u.signum();
        let cornu = (Complex64::new(0.5, 0.5) + cs).norm_sqr();
        let got = bp.intensity(x, z).unwrap();
        num += (got - cornu).powi(2);
        den += cornu * cornu;
    }
    let rms = (num / den).sqrt();
    assert!(rms < 0.01, "relative RMS {rms}");
}

#[test]
fn fringe_period_from_fft_of_screen_intensity() {
    let g = BiprismGeometry::default();
    let p = g.fringe_period();
    let bp = Biprism::new(g, GaussianBeam::two_component(0.0)).unwrap();
    let n = 2048;
    let half = 10.0 * p;
    let dx = 2.0 * half / n as f64;
    let ys: Vec<f64> = (0..n).map(|i| bp.intensity(-half + i as f64 * dx, g.screen_z).unwrap()).collect();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let padded = 16 * n;
    let mut buf = vec![Complex::new(0.0, 0.0); padded];
    for (i, y) in ys.iter().enumerate() {
        let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
        buf[i] = Complex::new((y - mean) * w, 0.0);
    }
    FftPlanner::new().plan_fft_forward(padded).process(&mut buf);
    let mag: Vec<f64> = buf[..padded / 2].iter().map(|c| c.norm()).collect();
    let k = (2..mag.len() - 1).max_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap();
    let (l, c, r) = (mag[k - 1].ln(), mag[k].ln(), mag[k + 1].ln());
    let kf = k as f64 + 0.5 * (l - r) / (l - 2.0 * c + r);
    let period = padded as f64 * dx / kf;
    assert!((period / p - 1.0).abs() < 5e-3, "period / (π/kx) = {}", period / p);
}

#[test]
fn validity_is_enforced_near_the_biprism() {
    let g = BiprismGeometry::default();
    let bp = Biprism::new(g, GaussianBeam::two_component(0.0)).unwrap();
    assert!(matches!(bp.field(0.0, 0.3), Err(qtraj::Error::ValidityViolation { .. })));
    assert!(bp.field(0.0, 0.3 * 1e3).is_ok());
    assert!(fresnel_valid(0.0, f64::INFINITY, &bp.beam, &g));
}

#[test]
fn frame_transform_examples() {
    let g = BiprismGeometry { kx: 0.0, ..Default::default() };
    let (a, b) = frame_transform([0.3, 0.1, 2.0], &g);
    assert_eq!(a, [0.3, 0.1, 2.0]);
    assert_eq!(b, [0.3, 0.1, 2.0]);
    let g = BiprismGeometry::default();
    let z = 33.77;
    let (a, b) = frame_transform([0.0, 0.0, z], &g);
    let expect = g.kx * z / g.kx.hypot(g.kz);
    assert!((a[0] + expect).abs() < 1e-18 && (b[0] - expect).abs() < 1e-18);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rotation_preserves_norm(x in -1.0f64..1.0, z in 0.1f64..100.0, kx in -1e6f64..1e6) {
        let g = BiprismGeometry { kx, ..Default::default() };
        let (a, b) = frame_transform([x, 0.0, z], &g);
        let r2 = x * x + z * z;
        prop_assert!(((a[0] * a[0] + a[2] * a[2]) / r2 - 1.0).abs() < 1e-12);
        prop_assert!(((b[0] * b[0] + b[2] * b[2]) / r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn complex_field_matches_closed_intensity(x in -1.5e-3f64..1.5e-3, z in 4.0f64..33.77, x0 in -2e-3f64..0.0) {
        let bp = Biprism::new(BiprismGeometry::default(), GaussianBeam::two_component(x0)).unwrap();
        let f = bp.field(x, z).unwrap().norm_sqr();
        let c = bp.intensity(x, z).unwrap();
        prop_assert!((f - c).abs() < 1e-10);
    }

    #[test]
    fn velocity_sign_follows_slot(x in -1.2e-3f64..1.2e-3, z in 4.0f64..33.77) {
        let bp = Biprism::new(BiprismGeometry::default(), GaussianBeam::two_component(0.0)).unwrap();
        if let (Ok(lo), Ok(up)) = (bp.velocity(x, z, Slot::Lower), bp.velocity(-x, z, Slot::Upper)) {
            prop_assert!(lo >= 0.0 && up <= 0.0);
            prop_assert!((lo + up).abs() <= 1e-6 * lo.abs().max(1e-12));
        }
    }
}
