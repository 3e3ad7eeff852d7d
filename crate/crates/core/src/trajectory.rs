//! Electron trajectories behind the biprism and the screen density they imply.
//!
//! Electrons start on the plane z = 4 mm (inside the Fresnel-valid region)
//! and follow dx/dz = ±|pₓ|/k_z to the screen. Each one rides the beam whose
//! centre, projected back along the tilt, passes through its start point. The
//! screen density of lower-slot electrons follows from the ordered map
//! x_ini → x_hit:
//!
//! ```text
//! I(x_i,hit) ∝ ρ(x_i,ini)/ẋ(x_i,hit) · (x_{i+1},ini − x_{i−1},ini)/(x_{i+1},hit − x_{i−1},hit)
//! ```
//!
//! and the upper slot contributes the mirror image I_upper(x) = I_lower(−x).

use crate::biprism::{Biprism, BiprismGeometry, GaussianBeam, Slot};
use crate::numerics::ode::{self, Control, OdeFailure, OdeOptions};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

/// Plane on which the initial density is imposed.
pub const INIT_Z: f64 = 4.0;
/// Minimum number of (z, x) samples kept per path.
pub const MIN_PATH_SAMPLES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationOptions {
    pub z_init: f64,
    pub rtol: f64,
    pub atol: f64,
    pub samples: usize,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self { z_init: INIT_Z, rtol: 1e-9, atol: 1e-13, samples: 201 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub x_ini: f64,
    pub slot: Slot,
    pub beam_center_x0: f64,
    /// (z, x) samples, uniform in z.
    pub path: Vec<(f64, f64)>,
    pub x_hit: f64,
    /// dx/dz at the screen.
    pub slope_hit: f64,
}

/// Beam-centre back-projection x₀ = x_ini ∓ (kₓ/k_z)·z_init; the lower beam
/// tilts upward, the upper one downward.
pub fn beam_center(x_ini: f64, slot: Slot, z_init: f64, geom: &BiprismGeometry) -> f64 {
    x_ini - slot.sign() * geom.tilt() * z_init
}

/// Density of lower-slot electrons at z: |K₁|² of the plane-wave kernel,
/// (½ + C(U))² + (½ + S(U))² with U = √(k/πz)(−𝖽/2 − x + (kₓ/k_z)z).
pub fn initial_density(x: f64, z: f64, geom: &BiprismGeometry) -> Result<f64> {
    let bp = Biprism::new(*geom, GaussianBeam::plane_wave())?.without_validity_check();
    let k = bp.kernels_at(x, z)?;
    Ok(k.m1 * k.m1 + k.n1 * k.n1)
}

/// x_ini values from −2.000 μm to −0.105 μm: 0.01 μm steps to −0.930, then
/// 0.005 μm steps (273 points, in mm).
pub fn default_grid() -> Vec<f64> {
    let coarse = (0..=107).map(|i| (-2000 + 10 * i) as f64 * 1e-6);
    let fine = (0..=164).map(|i| (-925 + 5 * i) as f64 * 1e-6);
    coarse.chain(fine).collect()
}

fn map_ode<E: Into<Error>>(e: OdeFailure<E>) -> Error {
    match e {
        OdeFailure::Rhs(e) => e.into(),
        OdeFailure::StepUnderflow { t } | OdeFailure::TooManySteps { t } => Error::StepUnderflow { t },
    }
}

/// Follow one electron from `opts.z_init` to the screen. `bp` supplies the
/// geometry and beam profile; its centre is replaced by the back-projection.
pub fn propagate(x_ini: f64, slot: Slot, bp: &Biprism, opts: &PropagationOptions) -> Result<TrajectoryRecord> {
    if opts.samples < 2 || !(opts.rtol > 0.0) || !(opts.atol > 0.0) {
        return Err(Error::InvalidParameter("need ≥ 2 samples and positive tolerances".into()));
    }
    let geom = &bp.geom;
    let (z0, z1) = (opts.z_init, geom.screen_z);
    if !(z1 > z0 && z0 > 0.0) {
        return Err(Error::InvalidParameter("screen must lie beyond the start plane".into()));
    }
    let x0 = beam_center(x_ini, slot, z0, geom);
    let field = bp.recentered(x0);
    let n = opts.samples.max(MIN_PATH_SAMPLES + 1);
    let dz = (z1 - z0) / (n - 1) as f64;
    let mut path = Vec::with_capacity(n);
    path.push((z0, x_ini));
    let o = OdeOptions { h_max: 4.0 * dz, ..OdeOptions::with_tol(opts.rtol, opts.atol) };
    let out = ode::solve(
        |z, y: &[f64; 1]| field.velocity(y[0], z, slot).map(|v| [v]),
        z0,
        [x_ini],
        z1,
        &o,
        |step| {
            while path.len() < n {
                let z = if path.len() == n - 1 { z1 } else { z0 + dz * path.len() as f64 };
                if z > step.t1 + 1e-12 * dz {
                    break;
                }
                path.push((z, step.eval(z.min(step.t1))[0]));
            }
            Control::Continue
        },
    )
    .map_err(map_ode)?;
    let x_hit = out.y[0];
    if let Some(last) = path.last_mut() {
        *last = (z1, x_hit);
    }
    let slope_hit = field.velocity(x_hit, z1, slot)?;
    Ok(TrajectoryRecord { x_ini, slot, beam_center_x0: x0, path, x_hit, slope_hit })
}

/// Propagate every start point in parallel; results keep the input order.
pub fn propagate_all(xs: &[f64], slot: Slot, bp: &Biprism, opts: &PropagationOptions) -> Result<Vec<TrajectoryRecord>> {
    xs.par_iter().map(|&x| propagate(x, slot, bp, opts)).collect()
}

/// Reconstructed lower-slot density at the hit points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenDensity {
    pub positions: Vec<f64>,
    /// ρ·(ẋ₀/ẋ)·Δx_ini/Δx_hit; the 1/ẋ factor is normalised by the free drift
    /// kₓ/k_z so the values are comparable with ρ.
    pub intensity: Vec<f64>,
    /// ρ·Δx_ini/Δx_hit alone: the conserved particle flux.
    pub flux: Vec<f64>,
    /// Visibility over the central ±3 fringes of the two-slot total, when
    /// enough fringes are present.
    pub visibility: Option<f64>,
    pub fringe_period: f64,
}

/// Apply the reconstruction to records sorted by x_ini, with `initial[i]` the
/// density at `records[i].x_ini`. Interior points only.
pub fn screen_density(records: &[TrajectoryRecord], initial: &[f64], geom: &BiprismGeometry) -> Result<ScreenDensity> {
    let n = records.len();
    if n < 3 || initial.len() != n {
        return Err(Error::InvalidParameter("need ≥ 3 records with matching initial densities".into()));
    }
    for i in 1..n {
        if !(records[i].x_ini > records[i - 1].x_ini) {
            return Err(Error::InvalidParameter("records must be sorted by x_ini".into()));
        }
        if !(records[i].x_hit > records[i - 1].x_hit) {
            return Err(Error::TrajectoryCrossing { i: i - 1, j: i });
        }
    }
    let drift = geom.tilt().abs();
    let mut positions = Vec::with_capacity(n - 2);
    let mut intensity = Vec::with_capacity(n - 2);
    let mut flux = Vec::with_capacity(n - 2);
    for i in 1..n - 1 {
        let jac = (records[i + 1].x_ini - records[i - 1].x_ini) / (records[i + 1].x_hit - records[i - 1].x_hit);
        let f = initial[i] * jac;
        positions.push(records[i].x_hit);
        flux.push(f);
        intensity.push(f * drift / records[i].slope_hit.abs());
    }
    let period = geom.fringe_period();
    let mut d = ScreenDensity { positions, intensity, flux, visibility: None, fringe_period: period };
    d.visibility = fringe_visibility(&d, (-3.0 * period, 3.0 * period)).ok();
    Ok(d)
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if xs.is_empty() || x < xs[0] || x > xs[xs.len() - 1] {
        return 0.0;
    }
    let i = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
    let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    ys[i - 1] + t * (ys[i] - ys[i - 1])
}

impl ScreenDensity {
    pub fn lower_at(&self, x: f64) -> f64 {
        interp(&self.positions, &self.intensity, x)
    }

    /// Upper-slot density, the mirror image of the lower one.
    pub fn upper_at(&self, x: f64) -> f64 {
        self.lower_at(-x)
    }

    pub fn total_at(&self, x: f64) -> f64 {
        self.lower_at(x) + self.upper_at(x)
    }

    /// Uniform samples of the two-slot total over [a, b].
    pub fn total_on_grid(&self, a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
        let xs: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
        let ys = xs.iter().map(|&x| self.total_at(x)).collect();
        (xs, ys)
    }

    pub fn mirrored(&self) -> ScreenDensity {
        let rev = |v: &[f64]| v.iter().rev().copied().collect::<Vec<_>>();
        ScreenDensity {
            positions: self.positions.iter().rev().map(|x| -x).collect(),
            intensity: rev(&self.intensity),
            flux: rev(&self.flux),
            ..self.clone()
        }
    }
}

fn boxcar(ys: &[f64], width: usize) -> Vec<f64> {
    let w = width.max(1);
    let h = w / 2;
    let mut pre = vec![0.0; ys.len() + 1];
    for (i, y) in ys.iter().enumerate() {
        pre[i + 1] = pre[i] + y;
    }
    (0..ys.len())
        .map(|i| {
            let lo = i.saturating_sub(h);
            let hi = (i + w - h).min(ys.len());
            (pre[hi] - pre[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Visibility of a uniformly sampled profile: mean of the local maxima against
/// mean of the local minima after a boxcar of one tenth of a fringe. The
/// boxcar's attenuation of a sinusoid at the fringe period is divided back out,
/// so a pure two-beam pattern reads its true contrast.
pub fn profile_visibility(xs: &[f64], ys: &[f64], period: f64) -> Result<f64> {
    if xs.len() < 3 || xs.len() != ys.len() {
        return Err(Error::InsufficientFringes { found: 0, required: 3 });
    }
    let dx = xs[1] - xs[0];
    let w = ((0.1 * period / dx).round() as usize).max(1);
    let sm = boxcar(ys, w);
    let (mut mx, mut mn) = (Vec::new(), Vec::new());
    for i in 1..sm.len() - 1 {
        if sm[i] >= sm[i - 1] && sm[i] > sm[i + 1] {
            mx.push(sm[i]);
        } else if sm[i] <= sm[i - 1] && sm[i] < sm[i + 1] {
            mn.push(sm[i]);
        }
    }
    if mx.len() < 3 || mn.is_empty() {
        return Err(Error::InsufficientFringes { found: mx.len(), required: 3 });
    }
    let a = mx.iter().sum::<f64>() / mx.len() as f64;
    let b = mn.iter().sum::<f64>() / mn.len() as f64;
    let half = std::f64::consts::PI * dx / period;
    let gain = (w as f64 * half).sin() / (w as f64 * half.sin());
    Ok(((a - b) / (a + b) / gain).min(1.0))
}

/// Fringe visibility of the two-slot total inside `window`.
pub fn fringe_visibility(density: &ScreenDensity, window: (f64, f64)) -> Result<f64> {
    let p = density.fringe_period;
    let n = (((window.1 - window.0) / p) * 200.0).ceil() as usize + 1;
    let (xs, ys) = density.total_on_grid(window.0, window.1, n.max(3));
    profile_visibility(&xs, &ys, p)
}

/// ẋ_mn/ẋ₀ = √(1 − f.v.²) for a two-wave interference pattern.
pub fn mean_velocity_from_visibility(fv: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&fv) {
        return Err(Error::InvalidParameter(format!("visibility {fv} outside [0, 1]")));
    }
    Ok((1.0 - fv * fv).sqrt())
}

fn lsq_residual(xs: &[f64], ys: &[f64], period: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI / period;
    let xm = 0.5 * (xs[0] + xs[xs.len() - 1]);
    let hw = 0.5 * (xs[xs.len() - 1] - xs[0]);
    let a = DMatrix::from_fn(xs.len(), 5, |i, j| {
        let u = (xs[i] - xm) / hw;
        match j {
            0 => 1.0,
            1 => u,
            2 => u * u,
            3 => (w * xs[i]).cos(),
            _ => (w * xs[i]).sin(),
        }
    });
    let b = DVector::from_column_slice(ys);
    match a.clone().svd(true, true).solve(&b, 1e-12) {
        Ok(c) => (a * c - b).norm_squared(),
        Err(_) => f64::INFINITY,
    }
}

/// Fringe period of a uniformly sampled profile: a Hann-windowed FFT peak near
/// `guess`, refined by least squares of quadratic background + one sinusoid.
pub fn fringe_period(xs: &[f64], ys: &[f64], guess: f64) -> Result<f64> {
    let n = xs.len();
    if n < 16 || ys.len() != n {
        return Err(Error::InvalidParameter("need ≥ 16 uniform samples".into()));
    }
    let dx = xs[1] - xs[0];
    let span = xs[n - 1] - xs[0];
    if span < 3.0 * guess {
        return Err(Error::InsufficientFringes { found: (span / guess) as usize, required: 3 });
    }
    // Coarse: FFT peak within ±20% of the expected frequency.
    let m = (8 * n).next_power_of_two();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = (0..m)
        .map(|i| {
            if i < n {
                let hann = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos();
                Complex::new((ys[i] - mean) * hann, 0.0)
            } else {
                Complex::new(0.0, 0.0)
            }
        })
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let df = 1.0 / (m as f64 * dx);
    let lo = ((0.8 / guess) / df).floor() as usize;
    let hi = (((1.2 / guess) / df).ceil() as usize).min(m / 2 - 1);
    let mut best = lo.max(1);
    for i in lo.max(1)..=hi {
        if buf[i].norm() > buf[best].norm() {
            best = i;
        }
    }
    let coarse = 1.0 / (best as f64 * df);
    // Fine: scan then golden-section on the least-squares residual.
    let scan = 200;
    let (a, b) = (0.95 * coarse, 1.05 * coarse);
    let mut ib = 0;
    let mut rb = f64::INFINITY;
    for i in 0..=scan {
        let p = a + (b - a) * i as f64 / scan as f64;
        let r = lsq_residual(xs, ys, p);
        if r < rb {
            rb = r;
            ib = i;
        }
    }
    let step = (b - a) / scan as f64;
    let (mut lo, mut hi) = (a + step * (ib as f64 - 1.0), a + step * (ib as f64 + 1.0));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut fc, mut fd) = (lsq_residual(xs, ys, c), lsq_residual(xs, ys, d));
    for _ in 0..60 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = lsq_residual(xs, ys, c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = lsq_residual(xs, ys, d);
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Position of the largest peak of the one-period running mean, among
/// samples with x > `min_x`.
pub fn envelope_peak(xs: &[f64], ys: &[f64], period: f64, min_x: f64) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let env = boxcar(ys, (period / (xs[1] - xs[0])).round() as usize);
    // Skip half a window at each end where the running mean is truncated.
    let h = (0.5 * period / (xs[1] - xs[0])).ceil() as usize;
    (h..xs.len().saturating_sub(h))
        .filter(|&i| xs[i] > min_x)
        .max_by(|&i, &j| env[i].total_cmp(&env[j]))
        .map(|i| xs[i])
}

/// Settings for the full reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiprismRun {
    pub geom: BiprismGeometry,
    /// Beam profile; the centre is overwritten per trajectory.
    pub beam: GaussianBeam,
    pub x_ini: Vec<f64>,
    pub propagation: PropagationOptions,
    /// Half-width c of the beam-centre range for the uniform-flux field intensity.
    pub flux_half_width: f64,
    /// Number of screen samples for the field-intensity comparison.
    pub field_samples: usize,
}

impl Default for BiprismRun {
    fn default() -> Self {
        Self {
            geom: BiprismGeometry::default(),
            beam: GaussianBeam::two_component(0.0),
            x_ini: default_grid(),
            propagation: PropagationOptions::default(),
            flux_half_width: 6.4e-3,
            field_samples: 601,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiprismOutcome {
    pub records: Vec<TrajectoryRecord>,
    pub density: ScreenDensity,
    pub visibility: f64,
    pub mean_velocity_ratio: f64,
    pub fringe_period: f64,
    /// Largest envelope peak of the reconstructed total density (x > 0.2 μm).
    pub density_peak: Option<f64>,
    /// Same for the uniform-flux field intensity.
    pub field_peak: Option<f64>,
    /// (x, I) of the field intensity used for the comparison.
    pub field_profile: Vec<(f64, f64)>,
}

impl BiprismRun {
    pub fn run(&self) -> Result<BiprismOutcome> {
        let bp = Biprism::new(self.geom, self.beam.clone())?;
        let mut xs = self.x_ini.clone();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let records = propagate_all(&xs, Slot::Lower, &bp, &self.propagation)?;
        let z0 = self.propagation.z_init;
        let rho = xs.iter().map(|&x| initial_density(x, z0, &self.geom)).collect::<Result<Vec<_>>>()?;
        let density = screen_density(&records, &rho, &self.geom)?;

        let p = self.geom.fringe_period();
        let (gx, gy) = density.total_on_grid(-8.0 * p, 8.0 * p, 1601);
        let fringe_period = fringe_period(&gx, &gy, p)?;
        let visibility = fringe_visibility(&density, (-3.0 * p, 3.0 * p))?;
        let mean_velocity_ratio = mean_velocity_from_visibility(visibility)?;

        let hi = density.positions.last().copied().unwrap_or(0.0);
        let n = self.field_samples.max(3);
        let (dx, dy) = density.total_on_grid(0.0, hi, n);
        let density_peak = envelope_peak(&dx, &dy, p, 0.2e-3);

        let field_profile = dx
            .par_iter()
            .map(|&x| bp.uniform_flux_intensity(x, self.geom.screen_z, self.flux_half_width).map(|i| (x, i)))
            .collect::<Result<Vec<_>>>()?;
        let (fx, fy): (Vec<f64>, Vec<f64>) = field_profile.iter().copied().unzip();
        let field_peak = envelope_peak(&fx, &fy, p, 0.2e-3);

        Ok(BiprismOutcome {
            records,
            density,
            visibility,
            mean_velocity_ratio,
            fringe_period,
            density_peak,
            field_peak,
            field_profile,
        })
    }
}
