//! Fresnel integrals and half-line Gaussian–chirp integrals via the Faddeeva function.

use errorfunctions::ComplexErrorFunctions;
use num_complex::Complex64;
use std::f64::consts::PI;

/// Fresnel integrals `C(x) = ∫₀ˣ cos(πt²/2) dt`, `S(x) = ∫₀ˣ sin(πt²/2) dt`.
///
/// Uses `C + iS = ((1+i)/2)·erf(((1−i)/2)·√π·x)`.
pub fn fresnel_cs(x: f64) -> (f64, f64) {
    if x == 0.0 {
        return (0.0, 0.0);
    }
    let (ax, sign) = if x < 0.0 { (-x, -1.0) } else { (x, 1.0) };
    let z = Complex64::new(0.5, -0.5) * (PI.sqrt() * ax);
    let e = if ax < 2.0 {
        z.erf()
    } else {
        // erf = 1 − e^{−z²}·w(iz); iz lies in the upper half plane here.
        Complex64::new(1.0, 0.0) - (-z * z).exp() * (Complex64::i() * z).w()
    };
    let v = Complex64::new(0.5, 0.5) * e;
    (sign * v.re, sign * v.im)
}

/// Which half-line to integrate over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HalfLine {
    /// `(−∞, limit]`
    Below,
    /// `[limit, ∞)`
    Above,
}

/// `∫ exp(−(τ+c)²/σ² + iπτ²/2) dτ` over a half-line ending at `limit`.
///
/// `sigma2 = ∞` gives the plane-wave (pure Fresnel) integral. The branch of the
/// Faddeeva function is chosen so its argument stays in the upper half plane,
/// which keeps every intermediate exponential bounded.
pub fn gaussian_chirp_half_line(side: HalfLine, limit: f64, c: f64, sigma2: f64) -> Complex64 {
    let inv = if sigma2.is_infinite() { 0.0 } else { 1.0 / sigma2 };
    let a = Complex64::new(inv, -PI / 2.0);
    let b = 2.0 * c * inv;
    let cc = c * c * inv;
    let sa = a.sqrt();
    let z = sa * (limit + b / (2.0 * a));
    let g = (-a * limit * limit - b * limit - cc).exp();
    let pref = 0.5 * (PI / a).sqrt();
    let full = || (PI / a).sqrt() * (b * b / (4.0 * a) - cc).exp();
    let iz = Complex64::i() * z;
    match side {
        HalfLine::Below => {
            if z.re <= 0.0 {
                pref * g * (-iz).w()
            } else {
                full() - pref * g * iz.w()
            }
        }
        HalfLine::Above => {
            if z.re >= 0.0 {
                pref * g * iz.w()
            } else {
                full() - pref * g * (-iz).w()
            }
        }
    }
}
