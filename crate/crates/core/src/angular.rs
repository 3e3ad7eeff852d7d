//! φ- and θ-direction pieces of the QSHJE in spherical coordinates.
//!
//! The azimuthal equation Φ″ + 𝗆²Φ = 0 has the real pair (cos 𝗆φ, sin 𝗆φ) for
//! 𝗆 ≠ 0 and (1, φ) for 𝗆 = 0. With Φ = c₁Φ₁ + c₂Φ₂ the momentum
//! ∂S₀φ/∂φ = (ħ/2i)(Φ̄Φ′ − ΦΦ̄′)/|Φ|² is real, and the requirement
//! ∫₀^π ∂S₀φ/∂φ dφ = nh/2 selects integer 𝗆.
//!
//! For the polar equation only the l = 0 and l = 1 general solutions are given
//! in closed form. The radial side (χ ~ r^{l+1} against r^{−l} near the origin)
//! is the textbook L² analysis; energies themselves are checked numerically via
//! the 1-D solver in [`crate::schrodinger1d`].

use crate::{Complex64, Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Coefficients of Φ = c₁Φ₁ + c₂Φ₂ and the separation constant 𝗆.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularCoeffs {
    pub c1: Complex64,
    pub c2: Complex64,
    pub m_quant: f64,
}

impl AngularCoeffs {
    pub fn new(c1: Complex64, c2: Complex64, m_quant: f64) -> Result<Self> {
        if c1.norm_sqr() == 0.0 && c2.norm_sqr() == 0.0 {
            return Err(Error::InvalidParameter("c1 and c2 cannot both vanish".into()));
        }
        if !m_quant.is_finite() {
            return Err(Error::InvalidParameter("m must be finite".into()));
        }
        Ok(Self { c1, c2, m_quant })
    }

    /// Im(c̄₁c₂): the only part of (c₁, c₂) that carries momentum.
    fn eta(&self) -> f64 {
        (self.c1.conj() * self.c2).im
    }
}

/// ∂S₀φ/∂φ at `phi`.
pub fn phi_momentum(coeffs: &AngularCoeffs, phi: f64, hbar: f64) -> Result<f64> {
    let (c1, c2, m) = (coeffs.c1, coeffs.c2, coeffs.m_quant);
    let num = c1.conj() * c2 - c1 * c2.conj();
    let cross = c1 * c2.conj() + c2 * c1.conj();
    let (value, scale) = if m != 0.0 {
        let (s, c) = (2.0 * m * phi).sin_cos();
        let den = (c1.norm_sqr() + c2.norm_sqr()) + (c1.norm_sqr() - c2.norm_sqr()) * c + cross * s;
        let top = Complex64::new(0.0, -hbar) * m * num;
        (top / den, (hbar * m * num.norm() / den.norm()).max(f64::MIN_POSITIVE))
    } else {
        let den = c1.norm_sqr() + cross * phi + c2.norm_sqr() * phi * phi;
        let top = Complex64::new(0.0, -0.5 * hbar) * num;
        (top / den, (hbar * num.norm() / den.norm()).max(f64::MIN_POSITIVE))
    };
    if !value.re.is_finite() {
        return Err(Error::NodeSingularity { x: phi });
    }
    if value.im.abs() > 1e-10 * scale {
        return Err(Error::NonRealResult { imag: value.im });
    }
    Ok(value.re)
}

/// Value of ∫₀^π ∂S₀φ/∂φ dφ and the matching n when it lies on the nh/2 lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiQuantization {
    pub integral: f64,
    /// `integral/(h/2)`, before rounding.
    pub ratio: f64,
    pub n: Option<i64>,
}

/// Tolerance of the nh/2 match, in units of h.
pub const LATTICE_TOL: f64 = 1e-6;

/// Continuous antiderivative of 1/(a sin x + b cos x + c) with c² > a² + b²,
/// `s = √(c² − a² − b²)`, c − b > 0.
fn trig_antiderivative(x: f64, a: f64, b: f64, c: f64, s: f64) -> f64 {
    let half = 0.5 * x;
    let turns = ((x + PI) / (2.0 * PI)).floor();
    if half.cos().abs() < 1e-9 {
        // x at an odd multiple of π: take the (continuous) limit from the left.
        let j = ((x - PI) / (2.0 * PI)).round();
        return 2.0 / s * (0.5 * PI + PI * j);
    }
    2.0 / s * ((((c - b) * half.tan() + a) / s).atan() + PI * turns)
}

/// ∫₀^π ∂S₀φ/∂φ dφ from the closed-form arctan antiderivative with branch
/// bookkeeping, and the integer n if the result is nh/2 within [`LATTICE_TOL`]·h.
pub fn phi_quantization(coeffs: &AngularCoeffs, hbar: f64) -> Result<PhiQuantization> {
    let (c1, c2, m) = (coeffs.c1, coeffs.c2, coeffs.m_quant);
    let eta = coeffs.eta();
    let integral = if eta == 0.0 {
        0.0
    } else if m != 0.0 {
        // p = ħη·2𝗆/D(2𝗆φ) with D(x) = c + b cos x + a sin x; substitute x = 2𝗆φ.
        let a = 2.0 * (c1 * c2.conj()).re;
        let b = c1.norm_sqr() - c2.norm_sqr();
        let c = c1.norm_sqr() + c2.norm_sqr();
        let s = 2.0 * eta.abs();
        let g = |x: f64| trig_antiderivative(x, a, b, c, s);
        hbar * eta * (g(2.0 * m * PI) - g(0.0))
    } else {
        // p = ħη/(|c₂|²φ² + 2Re(c₁c̄₂)φ + |c₁|²).
        let r = (c1 * c2.conj()).re;
        let w = c2.norm_sqr();
        let f = |phi: f64| ((w * phi + r) / eta.abs()).atan();
        hbar * eta.signum() * (f(PI) - f(0.0))
    };
    if !integral.is_finite() {
        return Err(Error::BranchTrackingFailure { x0: 0.0, x1: PI });
    }
    let half_h = PI * hbar;
    let ratio = integral / half_h;
    let nearest = ratio.round();
    let n = ((ratio - nearest).abs() * 0.5 <= LATTICE_TOL).then_some(nearest as i64);
    Ok(PhiQuantization { integral, ratio, n })
}

/// Closed-form general solutions Θ(cos θ) of the polar equation with 𝗆 = 0 for
/// l = 0 and l = 1; `h` multiplies the solution that diverges at the poles.
pub fn theta_solution(l: u32, g: f64, h: f64, theta: f64) -> Result<f64> {
    let x = theta.cos();
    if h != 0.0 && (theta <= 0.0 || theta >= PI || (1.0 - x.abs()) == 0.0) {
        return Err(Error::PoleSingularity { theta });
    }
    let log_ratio = if h != 0.0 { ((1.0 - x) / 2.0).ln() - ((1.0 + x) / 2.0).ln() } else { 0.0 };
    match l {
        0 => Ok(g + h * log_ratio),
        1 => Ok(g * x + h * (x * log_ratio + 2.0 * (1.0 - x))),
        _ => Err(Error::InvalidParameter(format!("closed forms exist for l = 0, 1 only (got {l})"))),
    }
}
