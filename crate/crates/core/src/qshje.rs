//! Momentum fields of the quantum stationary Hamilton–Jacobi equation.
//!
//! A real solution pair `(Ψ, Ψᴰ)` and Möbius parameters select
//! `p = ∂S₀/∂x = ħWl₁ / ((Ψᴰ + l₂Ψ)² + l₁²Ψ²)`, equivalently
//! `S₀ = −ħ·arctan((Ψᴰ + l₂Ψ)/(l₁Ψ))` up to a constant.

use crate::error::{Error, Result};
use crate::schrodinger1d::{BasisPoint, WaveBasis1D, Walls};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Relative size of an imaginary part still accepted as roundoff.
pub const REALITY_TOL: f64 = 1e-10;

/// Reduced Möbius parameters `(l₁, l₂)`, with `l₁ ≠ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobiusParams {
    pub l1: f64,
    pub l2: f64,
}

impl MobiusParams {
    pub fn new(l1: f64, l2: f64) -> Result<Self> {
        if l1 == 0.0 || !l1.is_finite() || !l2.is_finite() {
            return Err(Error::InvalidParameter(format!("Möbius parameters need finite l1 ≠ 0 (got {l1}, {l2})")));
        }
        Ok(Self { l1, l2 })
    }

    /// Reduce complex `(A, B, C, D)` via `l₁ = i(AD−BC)/2AC`, `l₂ = (AD+BC)/2AC`.
    ///
    /// Any non-zero `AD − BC` is accepted; the ratio is scale invariant.
    pub fn from_abcd(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Result<Self> {
        let det = a * d - b * c;
        let ac = a * c;
        if det.norm() == 0.0 || ac.norm() == 0.0 {
            return Err(Error::InvalidParameter("need AD − BC ≠ 0 and AC ≠ 0 for the reduced form".into()));
        }
        let l1 = Complex64::i() * det / (2.0 * ac);
        let l2 = (a * d + b * c) / (2.0 * ac);
        let scale = l1.norm().max(l2.norm());
        if l1.im.abs() > REALITY_TOL * scale || l2.im.abs() > REALITY_TOL * scale {
            return Err(Error::InvalidParameter(format!("(A,B,C,D) give complex l1 = {l1}, l2 = {l2}")));
        }
        Self::new(l1.re, l2.re)
    }

    /// A representative `(A, B, C, D) = (1, l₂ + il₁, 1, l₂ − il₁)`.
    pub fn to_abcd(&self) -> [Complex64; 4] {
        let one = Complex64::new(1.0, 0.0);
        [one, Complex64::new(self.l2, self.l1), one, Complex64::new(self.l2, -self.l1)]
    }
}

/// `p(x)` built from a basis and Möbius parameters.
#[derive(Debug, Clone, Copy)]
pub struct MomentumField1D<'a> {
    pub basis: &'a WaveBasis1D,
    pub mobius: MobiusParams,
    pub hbar: f64,
}

impl<'a> MomentumField1D<'a> {
    pub fn new(basis: &'a WaveBasis1D, mobius: MobiusParams) -> Self {
        Self { basis, mobius, hbar: basis.system.hbar }
    }

    /// Sign shared by `p` everywhere: `sign(W·l₁)`.
    pub fn sign(&self) -> f64 {
        (self.basis.wronskian * self.mobius.l1).signum()
    }

    fn p_from(&self, b: &BasisPoint) -> f64 {
        let MobiusParams { l1, l2 } = self.mobius;
        let u = b.psi_d + l2 * b.psi;
        self.hbar * self.basis.wronskian * l1 / (u * u + l1 * l1 * b.psi * b.psi)
    }

    pub fn p(&self, x: f64) -> Result<f64> {
        Ok(self.p_from(&self.basis.eval(x)?))
    }

    pub fn p_node(&self, i: usize) -> f64 {
        self.p_from(&self.basis.node(i))
    }

    /// `(ħ²/4m)·{S₀, x}` from analytic derivatives of the denominator
    /// `D = (Ψᴰ + l₂Ψ)² + l₁²Ψ²`, using `ψ'' = fψ`:
    /// `{S₀, x} = −D''/D + ½(D'/D)²`.
    fn qp_from(&self, b: &BasisPoint) -> f64 {
        let MobiusParams { l1, l2 } = self.mobius;
        let l1s = l1 * l1;
        let u = b.psi_d + l2 * b.psi;
        let du = b.dpsi_d + l2 * b.dpsi;
        let d = u * u + l1s * b.psi * b.psi;
        let d1 = 2.0 * (u * du + l1s * b.psi * b.dpsi);
        let d2 = 2.0 * (du * du + b.f * u * u + l1s * (b.dpsi * b.dpsi + b.f * b.psi * b.psi));
        let schwarzian = -d2 / d + 0.5 * (d1 / d).powi(2);
        self.hbar * self.hbar / (4.0 * self.basis.system.mass) * schwarzian
    }

    pub fn quantum_potential(&self, x: f64) -> Result<f64> {
        Ok(self.qp_from(&self.basis.eval(x)?))
    }

    pub fn quantum_potential_node(&self, i: usize) -> f64 {
        self.qp_from(&self.basis.node(i))
    }

    /// `p²/2m + QP + V − E` at node `i`; zero for an exact solution pair.
    pub fn hje_residual_node(&self, i: usize) -> f64 {
        let p = self.p_node(i);
        let x = self.basis.grid[i];
        p * p / (2.0 * self.basis.system.mass) + self.quantum_potential_node(i) + self.basis.system.v(x)
            - self.basis.energy
    }
}

/// `ħWl₁ / ((Ψᴰ + l₂Ψ)² + l₁²Ψ²)` at `x`.
pub fn momentum_reduced(basis: &WaveBasis1D, mobius: MobiusParams, x: f64) -> Result<f64> {
    MomentumField1D::new(basis, mobius).p(x)
}

/// `(i/2)ħ(AD − BC)W / ((AΨᴰ + BΨ)(CΨᴰ + DΨ))`, rejected if not real.
pub fn momentum_mobius(
    basis: &WaveBasis1D,
    a: Complex64,
    b: Complex64,
    c: Complex64,
    d: Complex64,
    x: f64,
) -> Result<f64> {
    let det = a * d - b * c;
    if det.norm() == 0.0 {
        return Err(Error::InvalidParameter("AD − BC = 0".into()));
    }
    let pt = basis.eval(x)?;
    let num = Complex64::new(0.0, 0.5) * basis.system.hbar * det * basis.wronskian;
    let den = (a * pt.psi_d + b * pt.psi) * (c * pt.psi_d + d * pt.psi);
    let p = num / den;
    if !p.re.is_finite() || !p.im.is_finite() {
        return Err(Error::NodeSingularity { x });
    }
    if p.im.abs() > REALITY_TOL * p.norm() {
        return Err(Error::NonRealMomentum { x, imag: p.im });
    }
    Ok(p.re)
}

/// A complex wave function sampled on a uniform grid.
#[derive(Debug, Clone)]
pub struct ComplexField1D {
    pub grid: Vec<f64>,
    pub values: Vec<Complex64>,
    derivs: Vec<Complex64>,
}

impl ComplexField1D {
    /// Nodal derivatives use fourth-order centred differences (one-sided
    /// fourth-order stencils at the two outermost nodes on each side).
    pub fn new(grid: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        let n = grid.len();
        if n < 5 || values.len() != n {
            return Err(Error::InvalidGrid("need ≥ 5 samples matching the grid".into()));
        }
        let h = (grid[n - 1] - grid[0]) / (n - 1) as f64;
        if !(h > 0.0) || grid.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h) {
            return Err(Error::InvalidGrid("grid must be uniform and increasing".into()));
        }
        let y = &values;
        let derivs = (0..n)
            .map(|i| {
                if i >= 2 && i + 2 < n {
                    (y[i - 2] - y[i - 1] * 8.0 + y[i + 1] * 8.0 - y[i + 2]) / (12.0 * h)
                } else if i < 2 {
                    (y[i] * -25.0 + y[i + 1] * 48.0 - y[i + 2] * 36.0 + y[i + 3] * 16.0 - y[i + 4] * 3.0) / (12.0 * h)
                } else {
                    (y[i] * 25.0 - y[i - 1] * 48.0 + y[i - 2] * 36.0 - y[i - 3] * 16.0 + y[i - 4] * 3.0) / (12.0 * h)
                }
            })
            .collect();
        Ok(Self { grid, values, derivs })
    }

    pub fn from_fn(x_min: f64, x_max: f64, n: usize, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        if n < 5 {
            return Err(Error::InvalidGrid("need ≥ 5 samples".into()));
        }
        let h = (x_max - x_min) / (n - 1) as f64;
        let grid: Vec<f64> = (0..n).map(|i| x_min + h * i as f64).collect();
        let values = grid.iter().map(|&x| f(x)).collect();
        Self::new(grid, values)
    }

    /// `(ψ, ψ′)` at `x` by cubic Hermite interpolation of the nodal data.
    pub fn eval(&self, x: f64) -> Result<(Complex64, Complex64)> {
        let n = self.grid.len();
        let (lo, hi) = (self.grid[0], self.grid[n - 1]);
        if !(x >= lo && x <= hi) {
            return Err(Error::OutOfDomain { x, lo, hi });
        }
        let i = self.grid.partition_point(|&g| g <= x).clamp(1, n - 1) - 1;
        let h = self.grid[i + 1] - self.grid[i];
        let t = (x - self.grid[i]) / h;
        let (y0, y1, m0, m1) = (self.values[i], self.values[i + 1], self.derivs[i], self.derivs[i + 1]);
        let (t2, t3) = (t * t, t * t * t);
        let v = y0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + m0 * (h * (t3 - 2.0 * t2 + t))
            + y1 * (-2.0 * t3 + 3.0 * t2)
            + m1 * (h * (t3 - t2));
        let dv = (y0 - y1) * ((6.0 * t2 - 6.0 * t) / h) + m0 * (3.0 * t2 - 4.0 * t + 1.0) + m1 * (3.0 * t2 - 2.0 * t);
        Ok((v, dv))
    }
}

/// `(ħ/i)(ψ̄ψ′ − ψψ̄′)/(2ψψ̄) = ħ·Im(ψ′/ψ)`.
pub fn momentum_from_wavefunction(psi: &ComplexField1D, hbar: f64, x: f64) -> Result<f64> {
    let (v, dv) = psi.eval(x)?;
    let rho = v.norm_sqr();
    if rho < 1e-300 {
        return Err(Error::NodeSingularity { x });
    }
    let num = v.conj() * dv - v * dv.conj();
    Ok((Complex64::new(0.0, -hbar) * num / (2.0 * rho)).re)
}

/// `∫p dx` together with the nearest multiple of `h/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindingResult {
    /// Full-line action including the asymptotic tails.
    pub action: f64,
    /// Contribution of the sampled interval alone.
    pub interior: f64,
    /// Nearest integer with `action ≈ n·h/2`.
    pub n: i64,
    /// `(action − n·h/2)/h`.
    pub deviation: f64,
    /// Zeros of `Ψ` crossed inside the grid (each is a ±π branch jump).
    pub branch_jumps: usize,
    /// Whether closed-form tails were added beyond both ends.
    pub tails: bool,
}

fn signed_angle(p: (f64, f64), q: (f64, f64)) -> f64 {
    (p.0 * q.1 - p.1 * q.0).atan2(p.0 * q.0 + p.1 * q.1)
}

/// Asymptotic direction of the vector `(l₁Ψ, Ψᴰ + l₂Ψ)` beyond one end, with
/// the potential held at its edge value there. `outward` is −1 on the left,
/// +1 on the right. `None` when the edge is classically allowed (no limit).
fn tail_direction(field: &MomentumField1D, i: usize, outward: f64) -> Option<(f64, f64)> {
    let b = field.basis;
    let pt = b.node(i);
    let MobiusParams { l1, l2 } = field.mobius;
    let vec = |y: f64, yd: f64| (l1 * y, yd + l2 * y);
    let f = pt.f;
    let scale = 1.0 / (b.x_max() - b.x_min()).powi(2);
    if f > 1e-12 * scale {
        // y = A e^{κs} + B e^{−κs} with s the outward distance: the growing
        // component is (κy + y'·outward)/2κ; the positive factor is dropped.
        let k = f.sqrt();
        Some(vec(k * pt.psi + outward * pt.dpsi, k * pt.psi_d + outward * pt.dpsi_d))
    } else if f >= -1e-12 * scale {
        // Linear continuation: direction of y'·outward.
        Some(vec(outward * pt.dpsi, outward * pt.dpsi_d))
    } else {
        None
    }
}

/// Number of sign changes of the Hermite interpolant of `Ψ` on `[x_i, x_{i+1}]`.
fn zeros_in_cell(b: &WaveBasis1D, i: usize) -> usize {
    const SUB: usize = 8;
    let (x0, x1) = (b.grid[i], b.grid[i + 1]);
    let mut prev = b.psi[i];
    let mut count = 0;
    for k in 1..=SUB {
        let v = if k == SUB { b.psi[i + 1] } else { b.eval(x0 + (x1 - x0) * k as f64 / SUB as f64).map(|p| p.psi).unwrap_or(prev) };
        if (prev < 0.0 && v >= 0.0) || (prev > 0.0 && v <= 0.0) {
            count += 1;
        }
        if v != 0.0 {
            prev = v;
        }
    }
    count
}

/// `∫p dx = −ħ·Δ arctan((Ψᴰ + l₂Ψ)/(l₁Ψ))` with explicit branch tracking.
///
/// The arctan is followed node by node as the angle of `(l₁Ψ, Ψᴰ + l₂Ψ)`;
/// each zero of `Ψ` is a π jump of the principal branch. Beyond open ends the
/// potential is continued at its edge value, which makes the tails closed
/// form: the vector runs along a straight line to the direction of the
/// outward-growing solution, so the tail angle is a principal-value angle.
pub fn winding_integral(field: &MomentumField1D) -> Result<WindingResult> {
    let b = field.basis;
    let n = b.len();
    let MobiusParams { l1, l2 } = field.mobius;
    let vec_at = |i: usize| (l1 * b.psi[i], b.psi_d[i] + l2 * b.psi[i]);
    // p = −ħ dφ/dx, so φ moves opposite to sign(p).
    let dir = -field.sign();
    let mut total = 0.0;
    let mut jumps = 0;
    for i in 0..n - 1 {
        let d = signed_angle(vec_at(i), vec_at(i + 1));
        let z = zeros_in_cell(b, i);
        let slack = 1e-9 * d.abs().max(1.0);
        if z > 1 || d * dir < -slack {
            return Err(Error::BranchTrackingFailure { x0: b.grid[i], x1: b.grid[i + 1] });
        }
        jumps += z;
        total += d;
    }
    let interior = -field.hbar * total;

    let (left, right) = if b.system.walls == Walls::Open {
        (tail_direction(field, 0, -1.0), tail_direction(field, n - 1, 1.0))
    } else {
        (None, None)
    };
    let tails = left.is_some() && right.is_some();
    if let (Some(l), Some(r)) = (left, right) {
        total += signed_angle(l, vec_at(0)) + signed_angle(vec_at(n - 1), r);
    }
    let action = -field.hbar * total;
    let half_h = PI * field.hbar;
    let nn = (action / half_h).round();
    Ok(WindingResult {
        action,
        interior,
        n: nn as i64,
        deviation: (action - nn * half_h) / (2.0 * half_h),
        branch_jumps: jumps,
        tails,
    })
}

pub fn quantum_potential_1d(field: &MomentumField1D, x: f64) -> Result<f64> {
    field.quantum_potential(x)
}

/// `(Δp, Δp·width)` for the cos/sin well basis: `Δp = (ħπ/width)|l₁ − 1/l₁|`.
pub fn uncertainty_well(l1: f64, width: f64, hbar: f64) -> Result<(f64, f64)> {
    if !(l1 > 0.0) || !(width > 0.0) {
        return Err(Error::InvalidParameter("uncertainty_well needs l1 > 0 and width > 0".into()));
    }
    let dp = hbar * PI / width * (l1 - 1.0 / l1).abs();
    Ok((dp, dp * width))
}
