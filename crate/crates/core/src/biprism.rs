//! Fresnel diffraction behind an electron biprism.
//!
//! The biprism is modelled as two tilted knife edges: the lower beam, tilted
//! upward by kₓ, passes below the filament edge at x = −𝖽/2, and the mirrored
//! upper beam passes above x = +𝖽/2. In the paraxial Fresnel approximation each
//! contributes a Gaussian-apodized Fresnel integral
//!
//! ```text
//! K₁ = M₁ + iN₁ = ∫_{−∞}^{s(−𝖽/2 − X + tZ)} exp(−(τ + s(X − tZ − x₀))²/σ²) e^{iπτ²/2} dτ
//! K₂ = M₂ + iN₂ = ∫_{s(𝖽/2 − X − tZ)}^{∞}  exp(−(τ + s(X + tZ − x₀))²/σ²) e^{iπτ²/2} dτ
//! ```
//!
//! with s = √(k/πZ), t = kₓ/k_z and σ² = s²w₀². Up to a constant prefactor and
//! the common e^{ikz}, the field is Ψ = K₁e^{ikₓX} + K₂e^{−ikₓX}.
//!
//! Units: lengths in mm, wavenumbers in mm⁻¹, momenta in units of ħ (so pₓ is
//! a wavenumber and dx/dz = pₓ/k_z).

use crate::numerics::quad::integrate;
use crate::numerics::special::{fresnel_cs, gaussian_chirp_half_line, HalfLine};
use crate::{Complex64, Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

/// Phase budget for the neglected cubic and quartic path-length terms.
pub const FRESNEL_PHASE_LIMIT: f64 = 2.0 * PI * 0.05;
/// Aperture coordinate ξ is scanned over ±`FRESNEL_XI_FACTOR`·w₀.
pub const FRESNEL_XI_FACTOR: f64 = 2.0;
/// Gaussian envelope truncation for the quadrature path, in σ.
pub const ENVELOPE_SIGMAS: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiprismGeometry {
    pub kx: f64,
    pub ky: f64,
    pub kz: f64,
    pub filament_d: f64,
    pub aperture_half: f64,
    pub screen_z: f64,
}

impl Default for BiprismGeometry {
    /// The Möllenstedt-type setup used throughout: 4.15e-4 mm filament,
    /// screen 33.77 mm behind it, ±0.2 mm aperture.
    fn default() -> Self {
        Self { kx: 4.99e4, ky: 0.0, kz: 1.45e9, filament_d: 4.15e-4, aperture_half: 0.2, screen_z: 33.77 }
    }
}

impl BiprismGeometry {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(self.kz > 0.0) {
            return bad("kz must be positive");
        }
        if !(self.kx.abs() < 1e-2 * self.kz) {
            return bad("|kx| must be much smaller than kz (paraxial)");
        }
        if self.ky != 0.0 {
            return bad("ky must be zero");
        }
        if !(self.filament_d > 0.0) {
            return bad("filament diameter must be positive");
        }
        if !(self.aperture_half > 0.0 && self.screen_z > 0.0) {
            return bad("aperture and screen distance must be positive");
        }
        Ok(())
    }

    pub fn k(&self) -> f64 {
        (self.kx * self.kx + self.ky * self.ky + self.kz * self.kz).sqrt()
    }

    /// Beam tilt dx/dz = kₓ/k_z.
    pub fn tilt(&self) -> f64 {
        self.kx / self.kz
    }

    /// Half the fringe spacing of two beams at ±kₓ: π/kₓ.
    pub fn fringe_period(&self) -> f64 {
        PI / self.kx.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamComponent {
    pub weight: f64,
    /// Waist; `f64::INFINITY` gives a plane wave.
    pub w0: f64,
}

/// Superposition of coaxial Gaussian beams centred at (x₀, y₀).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBeam {
    pub center: (f64, f64),
    pub components: Vec<BeamComponent>,
}

impl GaussianBeam {
    pub fn new(center: (f64, f64), components: Vec<BeamComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("beam needs at least one component".into()));
        }
        for c in &components {
            if !(c.weight > 0.0) || !(c.w0 > 0.0) {
                return Err(Error::InvalidParameter("beam weights and waists must be positive".into()));
            }
        }
        if !(center.0.is_finite() && center.1 == 0.0) {
            return Err(Error::InvalidParameter("beam centre must be finite with y0 = 0".into()));
        }
        Ok(Self { center, components })
    }

    /// 0.8 × (w₀ = 0.34 μm) + 0.2 × (w₀ = 2.2 μm).
    pub fn two_component(x0: f64) -> Self {
        Self {
            center: (x0, 0.0),
            components: vec![BeamComponent { weight: 0.8, w0: 3.4e-4 }, BeamComponent { weight: 0.2, w0: 2.2e-3 }],
        }
    }

    pub fn single(x0: f64, w0: f64) -> Self {
        Self { center: (x0, 0.0), components: vec![BeamComponent { weight: 1.0, w0 }] }
    }

    pub fn plane_wave() -> Self {
        Self::single(0.0, f64::INFINITY)
    }

    pub fn with_center(&self, x0: f64) -> Self {
        Self { center: (x0, self.center.1), components: self.components.clone() }
    }

    /// Widest finite waist, if any.
    pub fn max_waist(&self) -> Option<f64> {
        self.components.iter().map(|c| c.w0).filter(|w| w.is_finite()).reduce(f64::max)
    }

    /// z_R = k w₀²/2 for each component.
    pub fn rayleigh_ranges(&self, k: f64) -> Vec<f64> {
        self.components.iter().map(|c| 0.5 * k * c.w0 * c.w0).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DiffractionKernels {
    pub m1: f64,
    pub n1: f64,
    pub m2: f64,
    pub n2: f64,
}

impl DiffractionKernels {
    fn from_complex(k1: Complex64, k2: Complex64) -> Self {
        Self { m1: k1.re, n1: k1.im, m2: k2.re, n2: k2.im }
    }
    pub fn k1(&self) -> Complex64 {
        Complex64::new(self.m1, self.n1)
    }
    pub fn k2(&self) -> Complex64 {
        Complex64::new(self.m2, self.n2)
    }
    fn masked(self, open: OpenSlots) -> Self {
        match open {
            OpenSlots::Both => self,
            OpenSlots::Lower => Self { m2: 0.0, n2: 0.0, ..self },
            OpenSlots::Upper => Self { m1: 0.0, n1: 0.0, ..self },
        }
    }
}

/// Which side of the filament the electron passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    Lower,
    Upper,
}

impl Slot {
    pub fn sign(self) -> f64 {
        match self {
            Slot::Lower => 1.0,
            Slot::Upper => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpenSlots {
    #[default]
    Both,
    Lower,
    Upper,
}

/// Rotate (x, y, z) into the frames aligned with the lower (x̃) and upper (x̃̃)
/// beam axes.
pub fn frame_transform(p: [f64; 3], geom: &BiprismGeometry) -> ([f64; 3], [f64; 3]) {
    let [x, y, z] = p;
    let r = geom.kx.hypot(geom.kz);
    let (cx, sx) = (geom.kz / r, geom.kx / r);
    ([cx * x - sx * z, y, sx * x + cx * z], [cx * x + sx * z, y, -sx * x + cx * z])
}

/// Largest |k(ξ³l(1−l²)/2s′² + ξ⁴(−1/8 + 3l²/4 − 5l⁴/8)/s′³)| over |ξ| ≤ ξ_max
/// in the frame where the point sits at (x̃, z̃).
fn fresnel_phase_error(xt: f64, zt: f64, k: f64, xi_max: f64) -> f64 {
    let sp = xt.hypot(zt);
    let l = xt / sp;
    let a3 = l * (1.0 - l * l) / (2.0 * sp * sp);
    let a4 = (-0.125 + 0.75 * l * l - 0.625 * l.powi(4)) / sp.powi(3);
    // Quartic in ξ: extremes at the ends or where 3a₃ + 4a₄ξ = 0.
    let f = |xi: f64| k * (a3 * xi.powi(3) + a4 * xi.powi(4)).abs();
    let mut m = f(xi_max).max(f(-xi_max));
    if a4 != 0.0 {
        let xs = -0.75 * a3 / a4;
        if xs.abs() < xi_max {
            m = m.max(f(xs));
        }
    }
    m
}

/// Whether the quadratic (Fresnel) truncation of the path length is accurate at
/// (X, 0, Z) for both beams.
pub fn fresnel_valid(x: f64, z: f64, beam: &GaussianBeam, geom: &BiprismGeometry) -> bool {
    if !(z > 0.0) {
        return false;
    }
    if z.is_infinite() {
        return true;
    }
    let xi = beam.max_waist().map_or(geom.aperture_half, |w| FRESNEL_XI_FACTOR * w);
    let (t, tt) = frame_transform([x, 0.0, z], geom);
    let k = geom.k();
    fresnel_phase_error(t[0], t[2], k, xi) < FRESNEL_PHASE_LIMIT
        && fresnel_phase_error(tt[0], tt[2], k, xi) < FRESNEL_PHASE_LIMIT
}

/// Integration limit and Gaussian offset for each slot at (X, Z).
struct KernelArgs {
    s: f64,
    lim1: f64,
    c1: f64,
    lim2: f64,
    c2: f64,
}

fn kernel_args(x: f64, z: f64, geom: &BiprismGeometry, x0: f64) -> KernelArgs {
    let s = (geom.k() / (PI * z)).sqrt();
    let tz = geom.tilt() * z;
    let hd = 0.5 * geom.filament_d;
    KernelArgs { s, lim1: s * (-hd - x + tz), c1: s * (x - tz - x0), lim2: s * (hd - x - tz), c2: s * (x + tz - x0) }
}

/// Plane-wave knife-edge integral ∫ e^{iπτ²/2} over the half-line.
fn plane_half_line(side: HalfLine, limit: f64) -> Complex64 {
    let (c, s) = fresnel_cs(limit);
    match side {
        HalfLine::Below => Complex64::new(0.5 + c, 0.5 + s),
        HalfLine::Above => Complex64::new(0.5 - c, 0.5 - s),
    }
}

/// ∫ exp(−(τ+c)²/σ²) e^{iπτ²/2} over a half-line by adaptive Gauss–Kronrod,
/// with the Gaussian cut at 8σ and panels split at the half-period points
/// τ = ±√(2j) of the chirp.
pub fn chirp_half_line_quadrature(side: HalfLine, limit: f64, c: f64, sigma2: f64, abs_tol: f64) -> Result<Complex64> {
    if sigma2.is_infinite() {
        return Ok(plane_half_line(side, limit));
    }
    let sigma = sigma2.sqrt();
    let (mut a, mut b) = (-c - ENVELOPE_SIGMAS * sigma, -c + ENVELOPE_SIGMAS * sigma);
    match side {
        HalfLine::Below => b = b.min(limit),
        HalfLine::Above => a = a.max(limit),
    }
    if a >= b {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let mut breaks = Vec::new();
    let jmax = (0.5 * a.abs().max(b.abs()).powi(2)).ceil() as i64;
    for j in 1..=jmax {
        let r = (2.0 * j as f64).sqrt();
        for t in [-r, r] {
            if t > a && t < b {
                breaks.push(t);
            }
        }
    }
    breaks.push(0.0);
    breaks.sort_by(f64::total_cmp);
    let n = breaks.len();
    let f = |t: f64| {
        let g = (-(t + c) * (t + c) / sigma2).exp();
        Complex64::from_polar(g, 0.5 * PI * t * t)
    };
    // Error budget is spread over the panels.
    let r = integrate(f, a, b, &breaks, abs_tol, 0.0, n + 4000);
    if !r.converged {
        return Err(Error::QuadratureFailure { estimate: r.error });
    }
    Ok(r.value)
}

/// Kernel evaluation strategy.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum KernelMethod {
    /// Complete-the-square closed form through the Faddeeva function.
    #[default]
    Closed,
    /// Adaptive Gauss–Kronrod with the given absolute tolerance per kernel.
    Quadrature { abs_tol: f64 },
}

fn raw_kernels(x: f64, z: f64, geom: &BiprismGeometry, beam: &GaussianBeam, method: KernelMethod) -> Result<DiffractionKernels> {
    let a = kernel_args(x, z, geom, beam.center.0);
    let (mut k1, mut k2) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    for comp in &beam.components {
        let sigma2 = a.s * a.s * comp.w0 * comp.w0;
        let (v1, v2) = match method {
            KernelMethod::Closed => (
                gaussian_chirp_half_line(HalfLine::Below, a.lim1, a.c1, sigma2),
                gaussian_chirp_half_line(HalfLine::Above, a.lim2, a.c2, sigma2),
            ),
            KernelMethod::Quadrature { abs_tol } => {
                let tol = abs_tol / beam.components.len() as f64;
                (
                    chirp_half_line_quadrature(HalfLine::Below, a.lim1, a.c1, sigma2, tol)?,
                    chirp_half_line_quadrature(HalfLine::Above, a.lim2, a.c2, sigma2, tol)?,
                )
            }
        };
        k1 += comp.weight * v1;
        k2 += comp.weight * v2;
    }
    Ok(DiffractionKernels::from_complex(k1, k2))
}

/// M₁, N₁, M₂, N₂ at (X, 0, Z) by adaptive quadrature (absolute error < 1e-8
/// each). Plane-wave components reduce to Fresnel integrals.
pub fn kernels(x: f64, z: f64, geom: &BiprismGeometry, beam: &GaussianBeam) -> Result<DiffractionKernels> {
    if !fresnel_valid(x, z, beam, geom) {
        return Err(Error::ValidityViolation { x, z });
    }
    raw_kernels(x, z, geom, beam, KernelMethod::Quadrature { abs_tol: 5e-9 })
}

/// Memo of kernel values keyed by the exact bit patterns of (X, Z, x₀), so a
/// hit always returns the value a fresh evaluation would.
#[derive(Debug, Default)]
pub struct KernelCache {
    map: Mutex<HashMap<[u64; 3], DiffractionKernels>>,
}

impl KernelCache {
    pub fn len(&self) -> usize {
        self.map.lock().map(|m| m.len()).unwrap_or(0)
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// |Ψ|² from kernels via the real closed form with cos 2kₓX / sin 2kₓX cross
/// terms.
pub fn intensity_closed_form(k: &DiffractionKernels, kx: f64, x: f64) -> f64 {
    let (c, s) = ((2.0 * kx * x).cos(), (2.0 * kx * x).sin());
    k.m1 * k.m1 + k.n1 * k.n1 + k.m2 * k.m2 + k.n2 * k.n2
        + 2.0 * (k.m1 * k.m2 + k.n1 * k.n2) * c
        + 2.0 * (k.m1 * k.n2 - k.n1 * k.m2) * s
}

/// Im(Ψ̄ ∂ₓΨ) from kernels and their x-derivatives, with ∂ₓ of the carrier
/// phases taken as ±kₓ.
pub fn current_closed_form(k: &DiffractionKernels, d: &DiffractionKernels, kx: f64, x: f64) -> f64 {
    let (c, s) = ((2.0 * kx * x).cos(), (2.0 * kx * x).sin());
    let (m1, n1, m2, n2) = (k.m1, k.n1, k.m2, k.n2);
    let (m1d, n1d, m2d, n2d) = (d.m1, d.n1, d.m2, d.n2);
    kx * (m1 * m1 + n1 * n1) - kx * (m2 * m2 + n2 * n2) + m1 * n1d - n1 * m1d + m2 * n2d - n2 * m2d
        + (-n1 * m2d + m1 * n2d - n2 * m1d + m2 * n1d) * c
        + (-m1 * m2d - n1 * n2d + m2 * m1d + n2 * n1d) * s
}

/// Diffracted field of one beam through the biprism.
#[derive(Debug, Clone)]
pub struct Biprism {
    pub geom: BiprismGeometry,
    pub beam: GaussianBeam,
    pub method: KernelMethod,
    pub open: OpenSlots,
    /// Skip the Fresnel-validity check (used for far-field plane-wave scans).
    pub check_validity: bool,
    cache: Option<Arc<KernelCache>>,
}

impl Biprism {
    pub fn new(geom: BiprismGeometry, beam: GaussianBeam) -> Result<Self> {
        geom.validate()?;
        let beam = GaussianBeam::new(beam.center, beam.components)?;
        Ok(Self { geom, beam, method: KernelMethod::Closed, open: OpenSlots::Both, check_validity: true, cache: None })
    }

    pub fn with_method(mut self, method: KernelMethod) -> Self {
        self.method = method;
        self
    }

    pub fn with_open(mut self, open: OpenSlots) -> Self {
        self.open = open;
        self
    }

    pub fn with_cache(mut self, cache: Arc<KernelCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn without_validity_check(mut self) -> Self {
        self.check_validity = false;
        self
    }

    /// Same setup with the beam recentred at x₀.
    pub fn recentered(&self, x0: f64) -> Self {
        Self { beam: self.beam.with_center(x0), ..self.clone() }
    }

    pub fn kernels_at(&self, x: f64, z: f64) -> Result<DiffractionKernels> {
        if self.check_validity && !fresnel_valid(x, z, &self.beam, &self.geom) {
            return Err(Error::ValidityViolation { x, z });
        }
        let eval = || raw_kernels(x, z, &self.geom, &self.beam, self.method);
        let k = match &self.cache {
            None => eval()?,
            Some(cache) => {
                let key = [x.to_bits(), z.to_bits(), self.beam.center.0.to_bits()];
                let hit = cache.map.lock().ok().and_then(|m| m.get(&key).copied());
                if let Some(k) = hit {
                    k
                } else {
                    let k = eval()?;
                    if let Ok(mut m) = cache.map.lock() {
                        m.insert(key, k);
                    }
                    k
                }
            }
        };
        Ok(k.masked(self.open))
    }

    /// Centred finite-difference ∂ₓ of the kernels, step 1e-5 of a fringe.
    pub fn kernel_derivatives(&self, x: f64, z: f64) -> Result<DiffractionKernels> {
        let h = 1e-5 * self.geom.fringe_period();
        let p = self.kernels_at(x + h, z)?;
        let m = self.kernels_at(x - h, z)?;
        let q = 0.5 / h;
        Ok(DiffractionKernels { m1: (p.m1 - m.m1) * q, n1: (p.n1 - m.n1) * q, m2: (p.m2 - m.m2) * q, n2: (p.n2 - m.n2) * q })
    }

    /// Ψ = (M₁+iN₁)e^{ikₓX} + (M₂+iN₂)e^{−ikₓX}; the common carrier e^{ikz}
    /// and the constant prefactor are dropped.
    pub fn field(&self, x: f64, z: f64) -> Result<Complex64> {
        let k = self.kernels_at(x, z)?;
        let e = Complex64::from_polar(1.0, self.geom.kx * x);
        Ok(k.k1() * e + k.k2() * e.conj())
    }

    /// |Ψ|² via the closed-form real expression.
    pub fn intensity(&self, x: f64, z: f64) -> Result<f64> {
        Ok(intensity_closed_form(&self.kernels_at(x, z)?, self.geom.kx, x))
    }

    /// pₓ/ħ = Im(Ψ̄∂ₓΨ)/|Ψ|² in mm⁻¹.
    pub fn px(&self, x: f64, z: f64) -> Result<f64> {
        let k = self.kernels_at(x, z)?;
        let d = self.kernel_derivatives(x, z)?;
        let i = intensity_closed_form(&k, self.geom.kx, x);
        let scale = k.m1 * k.m1 + k.n1 * k.n1 + k.m2 * k.m2 + k.n2 * k.n2;
        if !(i > 1e-14 * scale) || !(i > f64::MIN_POSITIVE) {
            return Err(Error::NodeSingularity { x });
        }
        Ok(current_closed_form(&k, &d, self.geom.kx, x) / i)
    }

    /// dx/dz = ±|pₓ|/k_z with the sign fixed by the slot the electron passed.
    pub fn velocity(&self, x: f64, z: f64, slot: Slot) -> Result<f64> {
        Ok(slot.sign() * self.px(x, z)?.abs() / self.geom.kz)
    }

    /// Field intensity for a uniform flux of beams: ∫_{−c}^{c} |Ψ(X; x₀)|² dx₀.
    pub fn uniform_flux_intensity(&self, x: f64, z: f64, c: f64) -> Result<f64> {
        let panels = 64;
        let breaks: Vec<f64> = (1..panels).map(|i| -c + 2.0 * c * i as f64 / panels as f64).collect();
        let mut err = None;
        let r = integrate(
            |x0: f64| match self.recentered(x0).field(x, z) {
                Ok(v) => v.norm_sqr(),
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            },
            -c,
            c,
            &breaks,
            0.0,
            1e-9,
            4096,
        );
        if let Some(e) = err {
            return Err(e);
        }
        Ok(r.value)
    }

    /// (X, Z, kernels, intensity, pₓ) along a line of constant Z.
    pub fn field_map(&self, xs: &[f64], z: f64) -> Result<Vec<FieldSample>> {
        use rayon::prelude::*;
        xs.par_iter()
            .map(|&x| {
                let kernels = self.kernels_at(x, z)?;
                let intensity = intensity_closed_form(&kernels, self.geom.kx, x);
                let px = self.px(x, z).unwrap_or(f64::NAN);
                Ok(FieldSample { x, z, kernels, intensity, px })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub x: f64,
    pub z: f64,
    pub kernels: DiffractionKernels,
    pub intensity: f64,
    /// pₓ/ħ in mm⁻¹; NaN at a node.
    pub px: f64,
}

/// pₓ/ħ for the idealised two-plane-wave field J_up e^{ikₓx} + J_dn e^{−ikₓx}.
pub fn two_wave_px(j_up: f64, j_dn: f64, kx: f64, x: f64) -> f64 {
    kx * (j_up * j_up - j_dn * j_dn) / (j_up * j_up + j_dn * j_dn + 2.0 * j_up * j_dn * (2.0 * kx * x).cos())
}

/// Fringe visibility of the two-plane-wave field: 2J_upJ_dn/(J_up² + J_dn²).
pub fn two_wave_visibility(j_up: f64, j_dn: f64) -> f64 {
    2.0 * j_up * j_dn / (j_up * j_up + j_dn * j_dn)
}

/// Mean transverse velocity ratio ẋ_mn/ẋ₀ = (J_up² − J_dn²)/(J_up² + J_dn²).
pub fn two_wave_mean_velocity(j_up: f64, j_dn: f64) -> f64 {
    (j_up * j_up - j_dn * j_dn) / (j_up * j_up + j_dn * j_dn)
}
