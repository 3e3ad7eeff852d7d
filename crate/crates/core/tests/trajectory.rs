use qtraj::biprism::*;
use qtraj::trajectory::*;
use qtraj::Error;
use std::sync::OnceLock;

fn reference_run() -> &'static BiprismOutcome {
    static RUN: OnceLock<BiprismOutcome> = OnceLock::new();
    RUN.get_or_init(|| BiprismRun::default().run().unwrap())
}

fn reference_field() -> Biprism {
    Biprism::new(BiprismGeometry::default(), GaussianBeam::two_component(0.0)).unwrap()
}

#[test]
fn single_slot_far_from_filament_flies_straight() {
    let bp = reference_field().with_open(OpenSlots::Lower);
    let g = bp.geom;
    let x_ini = -5e-3 + g.tilt() * INIT_Z;
    let r = propagate(x_ini, Slot::Lower, &bp, &PropagationOptions::default()).unwrap();
    let slope = (r.x_hit - x_ini) / (g.screen_z - INIT_Z);
    assert!((slope / g.tilt() - 1.0).abs() < 1e-3, "{}", slope / g.tilt());
    for &(z, x) in &r.path {
        let line = x_ini + g.tilt() * (z - INIT_Z);
        assert!((x - line).abs() < 1e-3 * g.tilt() * (g.screen_z - INIT_Z));
    }
}

#[test]
fn halving_tolerance_barely_moves_the_hit() {
    let bp = reference_field();
    let base = PropagationOptions::default();
    let tight = PropagationOptions { rtol: 0.5 * base.rtol, atol: 0.5 * base.atol, ..base };
    for &x in &[-1.5e-3, -0.5e-3, -0.2e-3] {
        let a = propagate(x, Slot::Lower, &bp, &base).unwrap().x_hit;
        let b = propagate(x, Slot::Lower, &bp, &tight).unwrap().x_hit;
        assert!((a - b).abs() < 1e-6, "{x}: {a} vs {b}");
    }
}

#[test]
fn paths_are_monotone_and_densely_sampled() {
    let out = reference_run();
    assert!(out.records.len() >= 150);
    for r in &out.records {
        assert!(r.path.len() > MIN_PATH_SAMPLES);
        assert!(r.path.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1), "x_ini {}", r.x_ini);
        assert!(r.slope_hit > 0.0);
    }
    // No crossings: the screen order follows the start order.
    assert!(out.records.windows(2).all(|w| w[1].x_hit > w[0].x_hit));
}

#[test]
fn net_drift_never_exceeds_free_flight() {
    let g = BiprismGeometry::default();
    for r in &reference_run().records {
        let drift = (r.x_hit - r.x_ini) / (g.screen_z - INIT_Z);
        assert!(drift <= g.tilt() * (1.0 + 1e-3), "x_ini {}: {}", r.x_ini, drift / g.tilt());
    }
}

fn synthetic(x_ini: &[f64], hit: impl Fn(f64) -> f64, slope: f64) -> Vec<TrajectoryRecord> {
    x_ini
        .iter()
        .map(|&x| TrajectoryRecord {
            x_ini: x,
            slot: Slot::Lower,
            beam_center_x0: x,
            path: vec![(INIT_Z, x), (33.77, hit(x))],
            x_hit: hit(x),
            slope_hit: slope,
        })
        .collect()
}

#[test]
fn uniform_free_flight_keeps_density_flat() {
    let g = BiprismGeometry::default();
    let xs: Vec<f64> = (0..101).map(|i| -2e-3 + 2e-5 * i as f64).collect();
    let shift = g.tilt() * (g.screen_z - INIT_Z);
    let records = synthetic(&xs, |x| x + shift, g.tilt());
    let d = screen_density(&records, &vec![1.7; xs.len()], &g).unwrap();
    let rms = (d.intensity.iter().map(|i| (i / 1.7 - 1.0).powi(2)).sum::<f64>() / d.intensity.len() as f64).sqrt();
    assert!(rms < 0.01, "{rms}");
}

#[test]
fn crossing_trajectories_are_reported() {
    let g = BiprismGeometry::default();
    let xs = [-3e-3, -2e-3, -1e-3, 0.0];
    let records = synthetic(&xs, |x| if x == -1e-3 { -2.5e-3 } else { x }, g.tilt());
    match screen_density(&records, &[1.0; 4], &g) {
        Err(Error::TrajectoryCrossing { i, j }) => assert_eq!((i, j), (1, 2)),
        other => panic!("expected a crossing, got {other:?}"),
    }
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2).zip(ys.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
}

#[test]
fn particle_flux_is_conserved() {
    let out = reference_run();
    let g = BiprismGeometry::default();
    let n = out.records.len();
    let inner = &out.records[1..n - 1];
    let x_ini: Vec<f64> = inner.iter().map(|r| r.x_ini).collect();
    let rho: Vec<f64> = x_ini.iter().map(|&x| initial_density(x, INIT_Z, &g).unwrap()).collect();
    let before = trapezoid(&x_ini, &rho);
    let after = trapezoid(&out.density.positions, &out.density.flux);
    assert!((after / before - 1.0).abs() < 0.01, "{after} vs {before}");
}

#[test]
fn density_is_stable_under_grid_doubling() {
    // The doubled grid contains every original start point, so the two
    // reconstructions are compared at identical hit positions.
    let out = reference_run();
    let base = BiprismRun::default();
    let mut dense = base.x_ini.clone();
    dense.extend(base.x_ini.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    let run = BiprismRun { x_ini: dense, ..base };
    let fine = run.run().unwrap();
    let p = run.geom.fringe_period();
    let (mut num, mut den, mut count) = (0.0, 0.0, 0);
    for (x, a) in out.density.positions.iter().zip(&out.density.intensity) {
        if x.abs() > 4.0 * p {
            continue;
        }
        let j = fine.density.positions.iter().position(|y| y == x).expect("shared trajectory");
        let b = fine.density.intensity[j];
        num += (a - b).powi(2);
        den += b * b;
        count += 1;
    }
    let rms = (num / den).sqrt();
    assert!(count > 30 && rms < 0.01, "relative RMS {rms} over {count} points");
}

#[test]
fn upper_slot_is_the_mirror_of_the_lower() {
    let d = &reference_run().density;
    let m = d.mirrored();
    for i in 0..200 {
        let x = -1e-3 + 1e-5 * i as f64;
        let (a, b) = (d.upper_at(x), m.lower_at(x));
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{x}: {a} vs {b}");
        assert_eq!(d.total_at(x), d.total_at(-x));
    }
    let bp = reference_field();
    let opts = PropagationOptions::default();
    for &x in &[-1.2e-3, -0.4e-3] {
        let lo = propagate(x, Slot::Lower, &bp, &opts).unwrap();
        let up = propagate(-x, Slot::Upper, &bp, &opts).unwrap();
        assert!((lo.x_hit + up.x_hit).abs() < 1e-9, "{} vs {}", lo.x_hit, up.x_hit);
    }
}

#[test]
fn visibility_round_trip_on_two_wave_surrogate() {
    let kx = 4.99e4;
    let kz = 1.45e9;
    let p = std::f64::consts::PI / kx;
    for &(ju, jd) in &[(2.0, 1.0), (1.0, 0.3), (1.0, 0.9)] {
        let xs: Vec<f64> = (0..4001).map(|i| -6.0 * p + 12.0 * p * i as f64 / 4000.0).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| ju * ju + jd * jd + 2.0 * ju * jd * (2.0 * kx * x).cos()).collect();
        let fv = profile_visibility(&xs, &ys, p).unwrap();
        let predicted = mean_velocity_from_visibility(fv).unwrap();

        // Direct path average: RK4 in z through dx/dz = pₓ/k_z over many fringes.
        let f = |x: f64| two_wave_px(ju, jd, kx, x) / kz;
        let (mut x, mut z) = (0.0, 0.0);
        let h = 2e-3;
        while x < 20.0 * p {
            let k1 = f(x);
            let k2 = f(x + 0.5 * h * k1);
            let k3 = f(x + 0.5 * h * k2);
            let k4 = f(x + h * k3);
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            z += h;
        }
        let direct = x / z * kz / kx;
        assert!((predicted / direct - 1.0).abs() < 0.05, "J {ju}/{jd}: {predicted} vs {direct}");
    }
}

#[test]
fn single_slot_shows_no_fringes() {
    // Plane-wave knife edge deep in the open region: only the slowly chirped
    // Fresnel ringing remains.
    let g = BiprismGeometry::default();
    let bp = Biprism::new(g, GaussianBeam::plane_wave())
        .unwrap()
        .with_open(OpenSlots::Lower)
        .without_validity_check();
    let edge = -0.5 * g.filament_d + g.tilt() * g.screen_z;
    let xs: Vec<f64> = (0..1001).map(|i| edge - 5e-3 + 2e-3 * i as f64 / 1000.0).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| bp.intensity(x, g.screen_z).unwrap()).collect();
    let fv = profile_visibility(&xs, &ys, g.fringe_period()).unwrap();
    assert!(fv < 0.05, "{fv}");
}
