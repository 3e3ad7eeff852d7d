//! Higher-order Lagrangian mechanics in the semiclassical regime.
//!
//! The free semiclassical Lagrangian is
//!
//! ```text
//! L = ½ m q̇² − (P/2) q̈²/q̇⁴,     P = ħ²(1 − 2ε)/m = −2 c₂ᵦ ħ²/m,
//! ```
//!
//! which depends on the acceleration and therefore has a fourth-order
//! Euler–Lagrange equation, two Jacobi–Ostrogradski momenta and an energy that
//! contains q⃛. Everything here is written for this one Lagrangian; odd
//! coefficients (c₃, …) are zero by time reversal and only reappear as a fitting
//! parameter in [`inconsistency_residual`].

use crate::numerics::ode::{self, Control, OdeFailure, OdeOptions};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Below this |q̇| the Lagrangian (∝ 1/q̇⁴) is treated as undefined.
const VELOCITY_GUARD: f64 = 1e-48;
/// Upper bound of ε for which the semiclassical expansion is trusted.
pub const EPS_LIMIT: f64 = 0.2;

/// Phase point (q, q̇, q̈, q⃛) at time t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HOState {
    pub t: f64,
    pub q: f64,
    pub qd: f64,
    pub qdd: f64,
    pub qddd: f64,
}

impl HOState {
    pub fn new(t: f64, q: f64, qd: f64, qdd: f64, qddd: f64) -> Self {
        Self { t, q, qd, qdd, qddd }
    }

    fn as_array(&self) -> [f64; 4] {
        [self.q, self.qd, self.qdd, self.qddd]
    }

    fn from_array(t: f64, y: &[f64; 4]) -> Self {
        Self { t, q: y[0], qd: y[1], qdd: y[2], qddd: y[3] }
    }
}

fn check_velocity(qd: f64) -> Result<()> {
    if !(qd.abs() > VELOCITY_GUARD) {
        return Err(Error::ZeroVelocity);
    }
    Ok(())
}

fn ode_error(e: OdeFailure<Error>) -> Error {
    match e {
        OdeFailure::Rhs(e) => e,
        OdeFailure::StepUnderflow { t } | OdeFailure::TooManySteps { t } => Error::StepUnderflow { t },
    }
}

/// The 1-D free semiclassical Lagrangian with constant ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemiclassicalLagrangian {
    pub mass: f64,
    pub hbar: f64,
    pub eps: f64,
}

impl SemiclassicalLagrangian {
    pub fn new(mass: f64, hbar: f64, eps: f64) -> Result<Self> {
        if !(mass > 0.0 && hbar > 0.0) {
            return Err(Error::InvalidParameter("mass and hbar must be positive".into()));
        }
        if !(eps.abs() < EPS_LIMIT) {
            return Err(Error::RegimeViolation { eps });
        }
        Ok(Self { mass, hbar, eps })
    }

    /// Lagrangian whose q̈² coefficient is `c2b·ħ²/m`.
    pub fn from_c2b(mass: f64, hbar: f64, c2b: f64) -> Result<Self> {
        Self::new(mass, hbar, 0.5 * (1.0 + 2.0 * c2b))
    }

    pub fn c2b(&self) -> f64 {
        -0.5 * (1.0 - 2.0 * self.eps)
    }

    /// `P = ħ²(1 − 2ε)/m`, the stiffness of the q̈² term.
    pub fn stiffness(&self) -> f64 {
        self.hbar * self.hbar * (1.0 - 2.0 * self.eps) / self.mass
    }

    pub fn lagrangian(&self, s: &HOState) -> Result<f64> {
        check_velocity(s.qd)?;
        Ok(0.5 * self.mass * s.qd * s.qd - 0.5 * self.stiffness() * s.qdd * s.qdd / s.qd.powi(4))
    }

    /// q⁗ from the Euler–Lagrange equation.
    pub fn el_derivative(&self, s: &HOState) -> Result<f64> {
        check_velocity(s.qd)?;
        let (u, a, j) = (s.qd, s.qdd, s.qddd);
        let u2 = u * u;
        Ok(-(self.mass * u2 * u2 / self.stiffness()) * a + 8.0 * j * a / u - 10.0 * a * a * a / u2)
    }

    /// Jacobi–Ostrogradski momenta `(p₍₁₎, p₍₂₎)`.
    pub fn jo_momenta(&self, s: &HOState) -> Result<(f64, f64)> {
        check_velocity(s.qd)?;
        let p = self.stiffness();
        let (u, a, j) = (s.qd, s.qdd, s.qddd);
        let u4 = u.powi(4);
        let p1 = self.mass * u - p * (2.0 * a * a / (u4 * u) - j / u4);
        let p2 = -p * a / u4;
        Ok((p1, p2))
    }

    /// Conserved energy `p₍₁₎q̇ + p₍₂₎q̈ − L`.
    pub fn energy(&self, s: &HOState) -> Result<f64> {
        check_velocity(s.qd)?;
        let p = self.stiffness();
        let (u, a, j) = (s.qd, s.qdd, s.qddd);
        Ok(0.5 * self.mass * u * u - p * (2.5 * a * a / u.powi(4) - j / u.powi(3)))
    }

    /// Reduced-action gradient `p_EL = p₍₁₎ + p₍₂₎ q̈/q̇`, written out directly.
    pub fn p_el(&self, s: &HOState) -> Result<f64> {
        check_velocity(s.qd)?;
        let p = self.stiffness();
        let (u, a, j) = (s.qd, s.qdd, s.qddd);
        Ok(self.mass * u - p * (3.0 * a * a / u.powi(5) - j / u.powi(4)))
    }

    fn rhs(&self, y: &[f64; 4]) -> Result<[f64; 4]> {
        let s = HOState::from_array(0.0, y);
        Ok([y[1], y[2], y[3], self.el_derivative(&s)?])
    }

    /// Integrate the Euler–Lagrange equation to `t_final`, returning every
    /// accepted step. Fails with `VelocityCollapse` if q̇ changes sign or drops
    /// below 10⁻⁸ of its initial magnitude.
    pub fn integrate(&self, state0: &HOState, t_final: f64, tol: f64) -> Result<Vec<HOState>> {
        let mut path = vec![*state0];
        self.run(state0, t_final, tol, |st| path.push(st))?;
        Ok(path)
    }

    /// As [`integrate`](Self::integrate) but sampled at `n` uniform times
    /// `t₀ + i·dt` through the dense output.
    pub fn integrate_uniform(&self, state0: &HOState, dt: f64, n: usize, tol: f64) -> Result<Vec<HOState>> {
        if n == 0 || !(dt > 0.0) {
            return Err(Error::InvalidParameter("need n > 0 and dt > 0".into()));
        }
        let t0 = state0.t;
        let mut out = Vec::with_capacity(n);
        out.push(*state0);
        let t_final = t0 + dt * (n - 1) as f64;
        let opts = OdeOptions { h_max: 4.0 * dt, ..OdeOptions::with_tol(tol, tol * 1e-3) };
        let qd0 = state0.qd;
        let mut collapse = None;
        check_velocity(qd0)?;
        ode::solve(
            |_, y| self.rhs(y),
            t0,
            state0.as_array(),
            t_final,
            &opts,
            |step| {
                while out.len() < n {
                    let t = t0 + dt * out.len() as f64;
                    if t > step.t1 + 1e-12 * dt {
                        break;
                    }
                    out.push(HOState::from_array(t, &step.eval(t.min(step.t1))));
                }
                if step.y1[1] * qd0 <= 1e-8 * qd0 * qd0 {
                    collapse = Some(step.t1);
                    return Control::Stop;
                }
                Control::Continue
            },
        )
        .map_err(ode_error)?;
        if let Some(t) = collapse {
            return Err(Error::VelocityCollapse { t });
        }
        Ok(out)
    }

    fn run(&self, state0: &HOState, t_final: f64, tol: f64, mut sink: impl FnMut(HOState)) -> Result<HOState> {
        check_velocity(state0.qd)?;
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter("tolerance must be positive".into()));
        }
        let qd0 = state0.qd;
        let mut collapse = None;
        let opts = OdeOptions::with_tol(tol, tol * 1e-3);
        let res = ode::solve(
            |_, y| self.rhs(y),
            state0.t,
            state0.as_array(),
            t_final,
            &opts,
            |step| {
                if step.y1[1] * qd0 <= 1e-8 * qd0 * qd0 {
                    collapse = Some(step.t1);
                    return Control::Stop;
                }
                sink(HOState::from_array(step.t1, &step.y1));
                Control::Continue
            },
        )
        .map_err(ode_error)?;
        if let Some(t) = collapse {
            return Err(Error::VelocityCollapse { t });
        }
        Ok(HOState::from_array(res.t, &res.y))
    }
}

/// Scalar field ε̃(q) for the 3-D Lagrangian; `P(q) = ħ²(1 − ε̃(q))/m`.
pub type EpsField = Arc<dyn Fn([f64; 3]) -> f64 + Send + Sync>;

/// Phase point of the 3-D Lagrangian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HOState3 {
    pub t: f64,
    pub q: [f64; 3],
    pub qd: [f64; 3],
    pub qdd: [f64; 3],
    pub qddd: [f64; 3],
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// 3-D semiclassical Lagrangian `½m|q̇|² − (P(q)/2)|q̈|²/|q̇|⁴ − V(q)`.
///
pub type VectorField = Arc<dyn Fn([f64; 3]) -> [f64; 3] + Send + Sync>;

/// Used for diagnostics only: with ε̃ unknown in interference regions the
/// trajectories there are built from the momentum field instead.
#[derive(Clone)]
pub struct Lagrangian3D {
    pub mass: f64,
    pub hbar: f64,
    /// Defaults to ε̃ ≡ 0.
    pub eps_field: Option<EpsField>,
    /// Gradient of the potential; `None` for a free particle.
    pub force: Option<VectorField>,
    pub potential: Option<Arc<dyn Fn([f64; 3]) -> f64 + Send + Sync>>,
}

impl std::fmt::Debug for Lagrangian3D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Lagrangian3D")
            .field("mass", &self.mass)
            .field("hbar", &self.hbar)
            .field("eps_field", &self.eps_field.is_some())
            .field("potential", &self.potential.is_some())
            .finish()
    }
}

impl Lagrangian3D {
    pub fn free(mass: f64, hbar: f64) -> Self {
        Self { mass, hbar, eps_field: None, force: None, potential: None }
    }

    pub fn with_eps_field(mut self, field: EpsField) -> Self {
        self.eps_field = Some(field);
        self
    }

    /// Potential `v` and its gradient `grad_v`.
    pub fn with_potential(
        mut self,
        v: impl Fn([f64; 3]) -> f64 + Send + Sync + 'static,
        grad_v: impl Fn([f64; 3]) -> [f64; 3] + Send + Sync + 'static,
    ) -> Self {
        self.potential = Some(Arc::new(v));
        self.force = Some(Arc::new(grad_v));
        self
    }

    fn stiffness(&self, q: [f64; 3]) -> f64 {
        let e = self.eps_field.as_ref().map_or(0.0, |f| f(q));
        self.hbar * self.hbar * (1.0 - e) / self.mass
    }

    /// ∇P by central differences (zero without a field).
    fn stiffness_grad(&self, q: [f64; 3]) -> [f64; 3] {
        if self.eps_field.is_none() {
            return [0.0; 3];
        }
        std::array::from_fn(|i| {
            let h = 1e-6 * q[i].abs().max(1.0);
            let (mut qp, mut qm) = (q, q);
            qp[i] += h;
            qm[i] -= h;
            (self.stiffness(qp) - self.stiffness(qm)) / (2.0 * h)
        })
    }

    /// d²P(q(t))/dt² by a central difference along the local Taylor path.
    fn stiffness_second_time_derivative(&self, s: &HOState3) -> f64 {
        if self.eps_field.is_none() {
            return 0.0;
        }
        let scale = dot(&s.qd, &s.qd).sqrt() + dot(&s.qdd, &s.qdd).sqrt().sqrt();
        let h = 1e-4 / scale.max(1e-300);
        let at = |t: f64| -> [f64; 3] { std::array::from_fn(|i| s.q[i] + s.qd[i] * t + 0.5 * s.qdd[i] * t * t) };
        (self.stiffness(at(h)) - 2.0 * self.stiffness(s.q) + self.stiffness(at(-h))) / (h * h)
    }

    fn speed2(s: &HOState3) -> Result<f64> {
        let s2 = dot(&s.qd, &s.qd);
        check_velocity(s2.sqrt())?;
        Ok(s2)
    }

    pub fn jo_momenta_3d(&self, s: &HOState3) -> Result<([f64; 3], [f64; 3])> {
        let s2 = Self::speed2(s)?;
        let p = self.stiffness(s.q);
        let pdot = dot(&self.stiffness_grad(s.q), &s.qd);
        let (u, a, j) = (&s.qd, &s.qdd, &s.qddd);
        let aa = dot(a, a);
        let g = dot(u, a);
        let s3 = s2 * s2 * s2;
        let p1 = std::array::from_fn(|i| {
            self.mass * u[i] + p * (j[i] / (s2 * s2) + 2.0 * aa * u[i] / s3 - 4.0 * g * a[i] / s3)
                + pdot * a[i] / (s2 * s2)
        });
        let p2 = std::array::from_fn(|i| -p * a[i] / (s2 * s2));
        Ok((p1, p2))
    }

    pub fn energy_3d(&self, s: &HOState3) -> Result<f64> {
        let s2 = Self::speed2(s)?;
        let (p1, p2) = self.jo_momenta_3d(s)?;
        let p = self.stiffness(s.q);
        let l = 0.5 * self.mass * s2 - 0.5 * p * dot(&s.qdd, &s.qdd) / (s2 * s2)
            - self.potential.as_ref().map_or(0.0, |v| v(s.q));
        Ok(dot(&p1, &s.qd) + dot(&p2, &s.qdd) - l)
    }

    /// Component-wise `p₍₁₎ᵢ + p₍₂₎ᵢ q̈ᵢ/q̇ᵢ`; each q̇ᵢ must be nonzero.
    pub fn p_el_3d(&self, s: &HOState3) -> Result<[f64; 3]> {
        let (p1, p2) = self.jo_momenta_3d(s)?;
        for &u in &s.qd {
            check_velocity(u)?;
        }
        Ok(std::array::from_fn(|i| p1[i] + p2[i] * s.qdd[i] / s.qd[i]))
    }

    /// Fourth derivative from `d p₍₁₎/dt = ∂L/∂q`.
    pub fn el_derivative_3d(&self, s: &HOState3) -> Result<[f64; 3]> {
        let s2 = Self::speed2(s)?;
        let p = self.stiffness(s.q);
        let gp = self.stiffness_grad(s.q);
        let (u, a, j) = (&s.qd, &s.qdd, &s.qddd);
        let aa = dot(a, a);
        let g = dot(u, a);
        let h = dot(u, j);
        let aj = dot(a, j);
        let s3 = s2 * s2 * s2;
        let s4 = s3 * s2;
        let force = self.force.as_ref().map_or([0.0; 3], |f| f(s.q));
        let pdot = dot(&gp, u);
        let pddot = self.stiffness_second_time_derivative(s);
        let mut out = [0.0; 3];
        for i in 0..3 {
            // ∂L/∂qᵢ
            let dl_dq = -0.5 * gp[i] * aa / (s2 * s2) - force[i];
            // everything in dp₍₁₎ᵢ/dt except the P·snapᵢ/|q̇|⁴ term
            let rest = self.mass * a[i]
                + p * (-8.0 * g * j[i] / s3 + 4.0 * aj * u[i] / s3 - 2.0 * aa * a[i] / s3 - 4.0 * h * a[i] / s3
                    - 12.0 * aa * g * u[i] / s4
                    + 24.0 * g * g * a[i] / s4)
                + pdot * (j[i] / (s2 * s2) + 2.0 * aa * u[i] / s3 - 4.0 * g * a[i] / s3)
                + pddot * a[i] / (s2 * s2)
                + pdot * (j[i] / (s2 * s2) - 4.0 * g * a[i] / s3);
            out[i] = (dl_dq - rest) * s2 * s2 / p;
        }
        Ok(out)
    }

    /// Integrate the 3-D Euler–Lagrange equation, returning accepted steps.
    pub fn integrate_3d(&self, state0: &HOState3, t_final: f64, tol: f64) -> Result<Vec<HOState3>> {
        Self::speed2(state0)?;
        let pack = |s: &HOState3| -> [f64; 12] {
            std::array::from_fn(|k| match k / 3 {
                0 => s.q[k % 3],
                1 => s.qd[k % 3],
                2 => s.qdd[k % 3],
                _ => s.qddd[k % 3],
            })
        };
        let unpack = |t: f64, y: &[f64; 12]| HOState3 {
            t,
            q: [y[0], y[1], y[2]],
            qd: [y[3], y[4], y[5]],
            qdd: [y[6], y[7], y[8]],
            qddd: [y[9], y[10], y[11]],
        };
        let speed0 = dot(&state0.qd, &state0.qd).sqrt();
        let mut path = vec![*state0];
        let mut collapse = None;
        ode::solve(
            |t, y: &[f64; 12]| {
                let s = unpack(t, y);
                let snap = self.el_derivative_3d(&s)?;
                Ok(std::array::from_fn(|k| if k < 9 { y[k + 3] } else { snap[k - 9] }))
            },
            state0.t,
            pack(state0),
            t_final,
            &OdeOptions::with_tol(tol, tol * 1e-3),
            |step| {
                let s = unpack(step.t1, &step.y1);
                if dot(&s.qd, &s.qd).sqrt() < 1e-4 * speed0 {
                    collapse = Some(step.t1);
                    return Control::Stop;
                }
                path.push(s);
                Control::Continue
            },
        )
        .map_err(ode_error)?;
        if let Some(t) = collapse {
            return Err(Error::VelocityCollapse { t });
        }
        Ok(path)
    }
}

/// Semiclassical coefficients matching the free-particle momentum field
/// `p_QHJ = ħk(1+ε₁)/((sin kx + ε₂ cos kx)² + (1+ε₁)² cos² kx)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemiclassicalFit {
    pub eps1: f64,
    pub eps2: f64,
    pub eps: f64,
    pub v: f64,
    pub omega: f64,
    pub c2b: f64,
    pub a1: f64,
    pub b1: f64,
    pub p1: f64,
    pub energy: f64,
    pub mass: f64,
    pub hbar: f64,
}

/// Coefficients `v, ω, c₂ᵦ, a₁, b₁, p₍₁₎` to the leading order in ε.
///
/// `a₁ ≥ 0` is chosen; `b₁` takes the sign opposite to ε₂ when ε₂ < 0 so that
/// the 2ω phase of p_EL matches p_QHJ.
pub fn fit_semiclassical(eps1: f64, eps2: f64, energy: f64, mass: f64, hbar: f64) -> Result<SemiclassicalFit> {
    let eps = eps1.hypot(eps2);
    if !(eps < EPS_LIMIT) {
        return Err(Error::RegimeViolation { eps });
    }
    if !(energy > 0.0 && mass > 0.0 && hbar > 0.0) {
        return Err(Error::InvalidParameter("energy, mass and hbar must be positive".into()));
    }
    let p0 = (2.0 * mass * energy).sqrt();
    let k = p0 / hbar;
    let v = p0 / mass * (1.0 - eps);
    let scale = hbar * hbar / (2.0 * mass * energy);
    let a1 = (scale * (eps1 + eps)).max(0.0).sqrt();
    let mut b1 = (scale * (eps - eps1)).max(0.0).sqrt();
    if eps2 < 0.0 {
        b1 = -b1;
    }
    Ok(SemiclassicalFit {
        eps1,
        eps2,
        eps,
        v,
        omega: k * v,
        c2b: -0.5 * (1.0 - 2.0 * eps),
        a1,
        b1,
        p1: p0 * (1.0 + eps),
        energy,
        mass,
        hbar,
    })
}

impl SemiclassicalFit {
    pub fn k(&self) -> f64 {
        (2.0 * self.mass * self.energy).sqrt() / self.hbar
    }

    /// First-harmonic amplitude `A₁ = √(a₁² + b₁²)`.
    pub fn amplitude(&self) -> f64 {
        self.a1.hypot(self.b1)
    }

    /// Phase with `a₁ cos ωt + b₁ sin ωt = A₁ cos(ωt + θ₁)`.
    pub fn theta1(&self) -> f64 {
        (-self.b1).atan2(self.a1)
    }

    pub fn lagrangian(&self) -> Result<SemiclassicalLagrangian> {
        SemiclassicalLagrangian::from_c2b(self.mass, self.hbar, self.c2b)
    }

    /// The momentum field this fit approximates.
    pub fn p_qhj(&self, x: f64) -> f64 {
        let k = self.k();
        let (s, c) = (k * x).sin_cos();
        let l = 1.0 + self.eps1;
        let d = (s + self.eps2 * c).powi(2) + l * l * c * c;
        self.hbar * k * l / d
    }

    /// Initial state of `q = vt + a₁ cos ωt + b₁ sin ωt` at t = 0, shifted so q(0) = 0.
    pub fn seed_state(&self) -> HOState {
        let w = self.omega;
        HOState::new(0.0, 0.0, self.v + self.b1 * w, -self.a1 * w * w, -self.b1 * w * w * w)
    }

    /// Initial conditions of the exactly periodic E-L orbit whose drift is `v`
    /// and whose first Fourier coefficients over one period are `(a₁, b₁)`.
    ///
    /// Newton iteration with a finite-difference Jacobian on the unknowns
    /// `(q̇₀, q̈₀, q⃛₀, T)`; the fourth equation `q̈(T) = q̈₀` closes the orbit
    /// (energy and p₍₁₎ conservation take care of the other components).
    pub fn periodic_orbit(&self, tol: f64) -> Result<(HOState, f64)> {
        let lag = self.lagrangian()?;
        if self.eps == 0.0 {
            return Ok((HOState::new(0.0, 0.0, self.v, 0.0, 0.0), 2.0 * PI / self.omega));
        }
        let seed = self.seed_state();
        let mut x = Vector4::new(seed.qd, seed.qdd, seed.qddd, 2.0 * PI / (self.omega * (1.0 + self.eps)));
        let scale = Vector4::new(self.v, self.v * self.omega, self.v * self.omega.powi(2), 1.0 / self.omega);
        let target_amp = self.amplitude();
        let resid = |x: &Vector4<f64>| -> Result<Vector4<f64>> {
            let (q_t, qdd_t, cc, ss) = one_period(&lag, x, tol)?;
            let t = x[3];
            Ok(Vector4::new(
                (q_t / t - self.v) / self.v,
                (cc - self.a1) / target_amp,
                (ss - self.b1) / target_amp,
                (qdd_t - x[1]) / (self.v * self.omega * self.omega * target_amp),
            ))
        };
        let mut r = resid(&x)?;
        for _ in 0..40 {
            if r.amax() < 1e-11 {
                return Ok((HOState::new(0.0, 0.0, x[0], x[1], x[2]), x[3]));
            }
            let mut jac = Matrix4::zeros();
            for c in 0..4 {
                let h = 1e-7 * scale[c];
                let mut xp = x;
                xp[c] += h;
                let mut xm = x;
                xm[c] -= h;
                let col = (resid(&xp)? - resid(&xm)?) / (2.0 * h);
                jac.set_column(c, &col);
            }
            let dx = jac
                .lu()
                .solve(&(-r))
                .ok_or_else(|| Error::InvalidParameter("singular shooting Jacobian".into()))?;
            let mut lambda = 1.0;
            loop {
                let trial = x + dx * lambda;
                if let Ok(rt) = resid(&trial) {
                    if rt.amax() < r.amax() || lambda < 1e-3 {
                        x = trial;
                        r = rt;
                        break;
                    }
                }
                lambda *= 0.5;
                if lambda < 1e-3 {
                    return Err(Error::InvalidParameter("periodic-orbit shooting did not converge".into()));
                }
            }
        }
        if r.amax() < 1e-9 {
            return Ok((HOState::new(0.0, 0.0, x[0], x[1], x[2]), x[3]));
        }
        Err(Error::InvalidParameter(format!("periodic-orbit shooting stalled at residual {:e}", r.amax())))
    }
}

/// Integrate one trial period; returns `q(T)`, `q̈(T)` and the first Fourier
/// coefficients of `q − (q(T)/T)t` at `W = 2π/T`.
fn one_period(lag: &SemiclassicalLagrangian, x: &Vector4<f64>, tol: f64) -> Result<(f64, f64, f64, f64)> {
    let t = x[3];
    if !(t > 0.0) {
        return Err(Error::InvalidParameter("non-positive period".into()));
    }
    let w = 2.0 * PI / t;
    // State: q, q̇, q̈, q⃛, ∫q cos Wt, ∫q sin Wt.
    let y0 = [0.0, x[0], x[1], x[2], 0.0, 0.0];
    let res = ode::solve(
        |tt, y: &[f64; 6]| {
            let s = HOState::new(tt, y[0], y[1], y[2], y[3]);
            let (sn, cs) = (w * tt).sin_cos();
            Ok([y[1], y[2], y[3], lag.el_derivative(&s)?, y[0] * cs, y[0] * sn])
        },
        0.0,
        y0,
        t,
        &OdeOptions::with_tol(tol, tol * 1e-3),
        |_| Control::Continue,
    )
    .map_err(ode_error)?;
    let y = res.y;
    let vbar = y[0] / t;
    // ∫₀ᵀ t cos Wt dt = 0, ∫₀ᵀ t sin Wt dt = −T²/(2π).
    let cc = 2.0 / t * y[4];
    let ss = 2.0 / t * (y[5] + vbar * t * t / (2.0 * PI));
    Ok((y[0], y[2], cc, ss))
}

/// Drift and harmonic content of a sampled path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierModes {
    pub v: f64,
    pub q0: f64,
    /// Fundamental angular frequency; 0 when no oscillation is present.
    pub omega: f64,
    /// `(A_n, θ_n)` for n = 1..=4 with `q ≈ q0 + vt + Σ A_n cos(nωt + θ_n)`.
    pub modes: Vec<(f64, f64)>,
}

const HARMONICS: usize = 4;
const MIN_PERIODS: f64 = 8.0;

fn lsq_fit(ts: &[f64], qs: &[f64], omega: f64) -> (DVector<f64>, f64) {
    let n = ts.len();
    let cols = 2 + 2 * HARMONICS;
    let t_mid = 0.5 * (ts[0] + ts[n - 1]);
    let t_half = 0.5 * (ts[n - 1] - ts[0]).max(f64::MIN_POSITIVE);
    let a = DMatrix::from_fn(n, cols, |i, c| {
        let t = ts[i];
        match c {
            0 => 1.0,
            1 => (t - t_mid) / t_half,
            _ => {
                let h = ((c - 2) / 2 + 1) as f64;
                if c % 2 == 0 {
                    (h * omega * t).cos()
                } else {
                    (h * omega * t).sin()
                }
            }
        }
    });
    let b = DVector::from_column_slice(qs);
    let svd = a.clone().svd(true, true);
    let x = svd.solve(&b, 1e-14).unwrap_or_else(|_| DVector::zeros(cols));
    let r = (&a * &x - b).norm_squared();
    // Undo the centring of the trend column.
    let mut out = x.clone();
    out[1] = x[1] / t_half;
    out[0] = x[0] - out[1] * t_mid;
    (out, r)
}

/// Drift velocity and the first four harmonics of a uniformly sampled path.
///
/// A Hann-windowed FFT of the detrended positions gives a coarse fundamental,
/// which is refined by golden-section search on the residual of a linear
/// least-squares fit of `q0 + vt + Σ (aₙ cos nωt + bₙ sin nωt)`.
pub fn fourier_modes(path: &[HOState]) -> Result<FourierModes> {
    let n = path.len();
    if n < 32 {
        return Err(Error::InsufficientSpan { periods: 0.0, required: MIN_PERIODS });
    }
    let ts: Vec<f64> = path.iter().map(|s| s.t).collect();
    let qs: Vec<f64> = path.iter().map(|s| s.q).collect();
    let dt = (ts[n - 1] - ts[0]) / (n - 1) as f64;
    if !(dt > 0.0) || ts.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt) {
        return Err(Error::InvalidParameter("path must be uniformly sampled in t".into()));
    }
    // Straight-line fit.
    let tm = ts.iter().sum::<f64>() / n as f64;
    let qm = qs.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, q) in ts.iter().zip(&qs) {
        sxy += (t - tm) * (q - qm);
        sxx += (t - tm) * (t - tm);
    }
    let v_line = sxy / sxx;
    let resid: Vec<f64> = ts.iter().zip(&qs).map(|(t, q)| q - qm - v_line * (t - tm)).collect();
    let amp = resid.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let span = ts[n - 1] - ts[0];
    let scale = qs.iter().fold(0.0f64, |m, q| m.max(q.abs())).max(v_line.abs() * span).max(1e-300);
    if amp <= 1e-12 * scale {
        return Ok(FourierModes {
            v: v_line,
            q0: qm - v_line * tm,
            omega: 0.0,
            modes: vec![(0.0, 0.0); HARMONICS],
        });
    }

    let padded = (4 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = (0..padded)
        .map(|i| {
            if i < n {
                let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
                Complex::new(resid[i] * w, 0.0)
            } else {
                Complex::new(0.0, 0.0)
            }
        })
        .collect();
    FftPlanner::new().plan_fft_forward(padded).process(&mut buf);
    let mags: Vec<f64> = buf[..padded / 2].iter().map(|c| c.norm()).collect();
    // Skip the lowest bins, which carry any residual trend.
    let first = (2 * padded / n).max(2);
    let (kmax, _) = mags
        .iter()
        .enumerate()
        .skip(first)
        .fold((first, 0.0), |(bk, bv), (k, &m)| if m > bv { (k, m) } else { (bk, bv) });
    let mut kf = kmax as f64;
    if kmax + 1 < mags.len() {
        let (l, c, r) = (mags[kmax - 1].ln(), mags[kmax].ln(), mags[kmax + 1].ln());
        let den = l - 2.0 * c + r;
        if den.abs() > 0.0 {
            kf += 0.5 * (l - r) / den;
        }
    }
    let omega0 = 2.0 * PI * kf / (padded as f64 * dt);
    let periods = span * omega0 / (2.0 * PI);
    if periods < MIN_PERIODS {
        return Err(Error::InsufficientSpan { periods, required: MIN_PERIODS });
    }

    // Golden-section refinement within ±1.5 FFT resolution bins.
    let half = 1.5 * 2.0 * PI / span;
    let (mut lo, mut hi) = (omega0 - half, omega0 + half);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = lsq_fit(&ts, &qs, x1).1;
    let mut f2 = lsq_fit(&ts, &qs, x2).1;
    for _ in 0..80 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = lsq_fit(&ts, &qs, x1).1;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = lsq_fit(&ts, &qs, x2).1;
        }
        if hi - lo <= 1e-13 * omega0 {
            break;
        }
    }
    let omega = 0.5 * (lo + hi);
    let (c, _) = lsq_fit(&ts, &qs, omega);
    let modes = (0..HARMONICS)
        .map(|h| {
            let (a, b) = (c[2 + 2 * h], c[3 + 2 * h]);
            (a.hypot(b), (-b).atan2(a))
        })
        .collect();
    Ok(FourierModes { v: c[1], q0: c[0], omega, modes })
}

/// Optimal c₃ and the remaining mismatch between the 3ω components of p_EL and
/// p_QHJ at order ε^{3/2}.
///
/// In the basis `{cos(3ωt + 3θ₁), sin(3ωt + 3θ₁)}` the field side is
/// `(0, −mE k² A₁³/ħ)`; the Lagrangian side is `(K α c₃, 13K/4)` with
/// `K = −(ħ²k²/mv) k³A₁³` and `α = −2/(−2c₂ᵦ)^{3/2} + 3ħk/(4mv)`. Only the
/// cosine component depends on c₃, so the sine mismatch cannot be removed.
pub fn inconsistency_residual(fit: &SemiclassicalFit) -> (f64, f64) {
    let (q_cos, q_sin, kk, alpha) = third_harmonic_coefficients(fit);
    let p_sin = 3.25 * kk;
    let ka = kk * alpha;
    let c3 = if ka != 0.0 { q_cos / ka } else { 0.0 };
    let resid = ((q_cos - ka * c3).powi(2) + (q_sin - p_sin).powi(2)).sqrt();
    (c3, resid)
}

/// `(Q_cos, Q_sin, K, α)` as described on [`inconsistency_residual`].
pub fn third_harmonic_coefficients(fit: &SemiclassicalFit) -> (f64, f64, f64, f64) {
    let k = fit.k();
    let a = fit.amplitude();
    let (m, hb) = (fit.mass, fit.hbar);
    let q_sin = -m * fit.energy * k * k * a.powi(3) / hb;
    let kk = -(hb * hb * k * k / (m * fit.v)) * k.powi(3) * a.powi(3);
    let alpha = -2.0 / (-2.0 * fit.c2b).powf(1.5) + 3.0 * hb * k / (4.0 * m * fit.v);
    (0.0, q_sin, kk, alpha)
}

/// c₂ᵦ of the 3-D free Lagrangian from per-axis `(ε₁ᵢ, ε₂ᵢ, Eᵢ)`.
pub fn c2b_3d(eps1: [f64; 3], eps2: [f64; 3], energies: [f64; 3]) -> Result<f64> {
    if energies.iter().any(|&e| !(e >= 0.0)) || !energies.iter().any(|&e| e > 0.0) {
        return Err(Error::InvalidParameter("axis energies must be ≥ 0 with at least one > 0".into()));
    }
    let eps_i: Vec<f64> = (0..3).map(|i| eps1[i].hypot(eps2[i])).collect();
    let total: f64 = eps_i.iter().sum();
    if !(total < EPS_LIMIT) {
        return Err(Error::RegimeViolation { eps: total });
    }
    let e: f64 = energies.iter().sum();
    let weighted: f64 = (0..3).map(|i| energies[i] * eps_i[i]).sum();
    Ok(-0.5 * (1.0 - 2.0 * weighted / e))
}

/// Solve the energy relation
/// `E = ½mu − (ħ²/m)(5q̈²/(2u²) − q⃛/u^{3/2}) + V` for `u = q̇²` (with q̇ > 0).
///
/// Damped Newton from the classical seed; a positive root can exist with E < V.
pub fn tunneling_speed_squared(energy: f64, v_at_x: f64, qdd: f64, qddd: f64, mass: f64, hbar: f64) -> Result<f64> {
    let p = hbar * hbar / mass;
    let f = |u: f64| 0.5 * mass * u - p * (2.5 * qdd * qdd / (u * u) - qddd / u.powf(1.5)) + v_at_x - energy;
    let df = |u: f64| 0.5 * mass + p * (5.0 * qdd * qdd / u.powi(3) - 1.5 * qddd / u.powf(2.5));
    let gap = energy - v_at_x;
    let mut u = if gap > 0.0 { 2.0 * gap / mass } else { 2.0 * gap.abs() / mass };
    if !(u > 0.0) {
        u = f64::EPSILON;
    }
    let scale = energy.abs().max(v_at_x.abs()).max(f64::MIN_POSITIVE);
    let mut fu = f(u);
    for _ in 0..100 {
        if fu.abs() <= 1e-14 * scale {
            return Ok(u);
        }
        let d = df(u);
        if !(d.is_finite()) || d == 0.0 {
            return Err(Error::NoRealRoot);
        }
        let step = fu / d;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = u - lambda * step;
            if trial > 0.0 {
                let ft = f(trial);
                if ft.abs() < fu.abs() {
                    u = trial;
                    fu = ft;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if fu.abs() <= 1e-12 * scale && u > 0.0 {
        Ok(u)
    } else {
        Err(Error::NoRealRoot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lag(eps: f64) -> SemiclassicalLagrangian {
        SemiclassicalLagrangian::new(1.0, 1.0, eps).unwrap()
    }

    #[test]
    fn straight_line_is_fixed_point() {
        let l = lag(0.01);
        let s = HOState::new(0.0, 0.3, 1.7, 0.0, 0.0);
        assert_eq!(l.el_derivative(&s).unwrap(), 0.0);
        assert_eq!(l.jo_momenta(&s).unwrap(), (1.7, 0.0));
        assert!((l.energy(&s).unwrap() - 0.5 * 1.7 * 1.7).abs() < 1e-15);
        assert_eq!(l.p_el(&s).unwrap(), 1.7);
        let path = l.integrate(&s, 5.0, 1e-10).unwrap();
        for p in &path {
            assert!((p.q - (0.3 + 1.7 * p.t)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_velocity_rejected() {
        let s = HOState::new(0.0, 0.0, 0.0, 1.0, 0.0);
        assert_eq!(lag(0.0).energy(&s), Err(Error::ZeroVelocity));
        assert_eq!(lag(0.0).el_derivative(&s), Err(Error::ZeroVelocity));
    }

    #[test]
    fn p_el_identity() {
        let l = lag(0.03);
        for &(u, a, j) in &[(1.3, 0.2, -0.4), (-0.8, 0.05, 0.3), (2.0, -1.0, 0.7)] {
            let s = HOState::new(0.0, 0.0, u, a, j);
            let (p1, p2) = l.jo_momenta(&s).unwrap();
            assert!((l.p_el(&s).unwrap() - (p1 + p2 * a / u)).abs() < 1e-12 * p1.abs().max(1.0));
        }
    }

    #[test]
    fn fit_classical_limit() {
        let f = fit_semiclassical(0.0, 0.0, 1.0, 1.0, 1.0).unwrap();
        assert!((f.v - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!((f.c2b, f.a1, f.b1), (-0.5, 0.0, 0.0));
    }

    #[test]
    fn fit_eps1_only() {
        let f = fit_semiclassical(0.01, 0.0, 1.0, 1.0, 1.0).unwrap();
        assert!((f.a1 * f.a1 - 0.5 * 0.02).abs() < 1e-15);
        assert_eq!(f.b1, 0.0);
        assert!(matches!(fit_semiclassical(0.2, 0.0, 1.0, 1.0, 1.0), Err(Error::RegimeViolation { .. })));
    }

    #[test]
    fn negative_eps2_flips_b1() {
        let p = fit_semiclassical(0.004, 0.006, 1.0, 1.0, 1.0).unwrap();
        let n = fit_semiclassical(0.004, -0.006, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(p.a1, n.a1);
        assert_eq!(p.b1, -n.b1);
        assert!(p.b1 > 0.0);
    }

    #[test]
    fn tunneling_classical_limit() {
        let u = tunneling_speed_squared(2.0, 0.5, 0.0, 0.0, 1.5, 1.0).unwrap();
        assert!((u - 2.0 * 1.5 / 1.5).abs() < 1e-13);
    }

    #[test]
    fn tunneling_under_barrier() {
        let u = tunneling_speed_squared(1.0, 1.1, 0.0, -0.6, 1.0, 1.0).unwrap();
        assert!((u - 1.0).abs() < 1e-12);
    }

    #[test]
    fn c2b_3d_limits() {
        assert_eq!(c2b_3d([0.0; 3], [0.0; 3], [1.0, 2.0, 3.0]).unwrap(), -0.5);
        let c = c2b_3d([0.02, 0.02, 0.02], [0.0; 3], [1.0; 3]).unwrap();
        assert!((c + 0.5 * (1.0 - 0.04)).abs() < 1e-15);
        assert!(matches!(c2b_3d([0.1, 0.1, 0.0], [0.0; 3], [1.0; 3]), Err(Error::RegimeViolation { .. })));
        assert!(c2b_3d([0.0; 3], [0.0; 3], [0.0; 3]).is_err());
    }

    #[test]
    fn residual_vanishes_classically() {
        let f = fit_semiclassical(0.0, 0.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(inconsistency_residual(&f).1, 0.0);
    }

    #[test]
    fn pure_line_has_no_modes() {
        let path: Vec<HOState> = (0..2000).map(|i| HOState::new(i as f64 * 0.01, 0.5 + 2.0 * i as f64 * 0.01, 2.0, 0.0, 0.0)).collect();
        let m = fourier_modes(&path).unwrap();
        assert!((m.v - 2.0).abs() < 1e-12);
        assert!(m.modes.iter().all(|&(a, _)| a < 1e-10));
    }

    #[test]
    fn fourier_recovers_synthetic_harmonics() {
        let w = 2.3;
        let path: Vec<HOState> = (0..4000)
            .map(|i| {
                let t = i as f64 * 0.01;
                HOState::new(t, 0.1 + 1.5 * t + 0.2 * (w * t + 0.3).cos() + 0.01 * (2.0 * w * t - 1.0).cos(), 0.0, 0.0, 0.0)
            })
            .collect();
        let m = fourier_modes(&path).unwrap();
        assert!((m.omega - w).abs() < 1e-9);
        assert!((m.v - 1.5).abs() < 1e-9 && (m.q0 - 0.1).abs() < 1e-8);
        assert!((m.modes[0].0 - 0.2).abs() < 1e-9 && (m.modes[0].1 - 0.3).abs() < 1e-8);
        assert!((m.modes[1].0 - 0.01).abs() < 1e-9 && (m.modes[1].1 + 1.0).abs() < 1e-7);
    }

    #[test]
    fn short_path_rejected() {
        let path: Vec<HOState> =
            (0..400).map(|i| HOState::new(i as f64 * 0.01, (3.0 * i as f64 * 0.01).sin(), 0.0, 0.0, 0.0)).collect();
        assert!(matches!(fourier_modes(&path), Err(Error::InsufficientSpan { .. })));
    }
}
