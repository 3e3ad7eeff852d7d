//! Stationary 1-D Schrödinger equation: Numerov solution pairs and bound-state search.
//!
//! The equation is written as `ψ'' = f(x)ψ` with `f = (2m/ħ²)(V − E)`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Default node count for bound-state searches.
pub const DEFAULT_SEARCH_POINTS: usize = 8001;

/// Potential energy as a function of position.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    Free,
    /// `½ m ω² (x − center)²`; the mass is taken from the owning system.
    Harmonic { omega: f64, #[serde(default)] center: f64 },
    /// Flat bottom at `depth`; pair with [`Walls::Hard`] for an infinite well.
    SquareWell { #[serde(default)] depth: f64 },
    /// Piecewise-linear table of `(x, V)` pairs, held constant beyond its ends.
    Table { points: Vec<(f64, f64)> },
    #[serde(skip)]
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Free => write!(f, "Free"),
            Potential::Harmonic { omega, center } => write!(f, "Harmonic {{ omega: {omega}, center: {center} }}"),
            Potential::SquareWell { depth } => write!(f, "SquareWell {{ depth: {depth} }}"),
            Potential::Table { points } => write!(f, "Table({} points)", points.len()),
            Potential::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl Potential {
    pub fn eval(&self, x: f64, mass: f64) -> f64 {
        match self {
            Potential::Free => 0.0,
            Potential::Harmonic { omega, center } => 0.5 * mass * omega * omega * (x - center).powi(2),
            Potential::SquareWell { depth } => *depth,
            Potential::Table { points } => table_lookup(points, x),
            Potential::Custom(f) => f(x),
        }
    }
}

fn table_lookup(points: &[(f64, f64)], x: f64) -> f64 {
    match points.len() {
        0 => 0.0,
        1 => points[0].1,
        n => {
            if x <= points[0].0 {
                return points[0].1;
            }
            if x >= points[n - 1].0 {
                return points[n - 1].1;
            }
            let i = points.partition_point(|p| p.0 <= x).min(n - 1);
            let (x0, v0) = points[i - 1];
            let (x1, v1) = points[i];
            v0 + (v1 - v0) * (x - x0) / (x1 - x0)
        }
    }
}

/// How the wave function continues past the ends of the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Walls {
    /// Impenetrable walls: ψ = 0 at both ends.
    Hard,
    /// The potential is continued as a constant beyond each end.
    #[default]
    Open,
}

#[derive(Debug, Clone)]
pub struct PhysicalSystem1D {
    pub mass: f64,
    pub hbar: f64,
    pub potential: Potential,
    pub x_min: f64,
    pub x_max: f64,
    pub walls: Walls,
}

impl PhysicalSystem1D {
    pub fn new(mass: f64, hbar: f64, potential: Potential, x_min: f64, x_max: f64) -> Result<Self> {
        let s = Self { mass, hbar, potential, x_min, x_max, walls: Walls::Open };
        s.validate()?;
        Ok(s)
    }

    pub fn with_walls(mut self, walls: Walls) -> Self {
        self.walls = walls;
        self
    }

    /// Harmonic oscillator in a box wide enough that `V(edge) ≥ 11·e_max`,
    /// so the truncation is invisible for states below `e_max`.
    pub fn harmonic(mass: f64, hbar: f64, omega: f64, e_max: f64) -> Result<Self> {
        if !(omega > 0.0) || !(e_max > 0.0) {
            return Err(Error::InvalidParameter("harmonic: omega and e_max must be positive".into()));
        }
        let half = (22.0 * e_max / (mass * omega * omega)).sqrt();
        Self::new(mass, hbar, Potential::Harmonic { omega, center: 0.0 }, -half, half)
    }

    /// Infinite square well of width `2·half_width` centred on the origin.
    pub fn square_well(mass: f64, hbar: f64, half_width: f64) -> Result<Self> {
        Ok(Self::new(mass, hbar, Potential::SquareWell { depth: 0.0 }, -half_width, half_width)?
            .with_walls(Walls::Hard))
    }

    pub fn free(mass: f64, hbar: f64, x_min: f64, x_max: f64) -> Result<Self> {
        Self::new(mass, hbar, Potential::Free, x_min, x_max)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) || !(self.hbar > 0.0) {
            return Err(Error::InvalidParameter("mass and hbar must be positive".into()));
        }
        if !(self.x_min < self.x_max) || !self.x_min.is_finite() || !self.x_max.is_finite() {
            return Err(Error::InvalidGrid(format!("bad domain [{}, {}]", self.x_min, self.x_max)));
        }
        Ok(())
    }

    pub fn v(&self, x: f64) -> f64 {
        self.potential.eval(x, self.mass)
    }

    /// `(2m/ħ²)(V(x) − E)`.
    pub fn f(&self, x: f64, energy: f64) -> f64 {
        2.0 * self.mass / (self.hbar * self.hbar) * (self.v(x) - energy)
    }

    /// The same system on a sub-interval reaching `action` (in units of ħ) of
    /// `∫κ dx` past the outermost classical turning points at `energy`, or the
    /// full domain where that lies beyond it.
    ///
    /// A solution pair started at `x_min` carries the information that
    /// distinguishes `Ψ` from `Ψᴰ` at relative size `e^{−2∫κ}`; keeping the
    /// forbidden-region action moderate keeps that above rounding.
    pub fn trimmed(&self, energy: f64, action: f64) -> Result<Self> {
        const N: usize = 20001;
        let h = (self.x_max - self.x_min) / (N - 1) as f64;
        let xs: Vec<f64> = (0..N).map(|i| self.x_min + h * i as f64).collect();
        let kappa: Vec<f64> = xs
            .iter()
            .map(|&x| (2.0 * self.mass * (self.v(x) - energy)).max(0.0).sqrt() / self.hbar)
            .collect();
        let allowed: Vec<usize> = (0..N).filter(|&i| self.v(xs[i]) <= energy).collect();
        let (Some(&first), Some(&last)) = (allowed.first(), allowed.last()) else {
            return Err(Error::InvalidParameter(format!("energy {energy} is below the potential everywhere")));
        };
        let mut acc = 0.0;
        let mut lo = self.x_min;
        for i in (1..=first).rev() {
            acc += 0.5 * h * (kappa[i] + kappa[i - 1]);
            if acc >= action {
                lo = xs[i - 1];
                break;
            }
        }
        acc = 0.0;
        let mut hi = self.x_max;
        for i in last..N - 1 {
            acc += 0.5 * h * (kappa[i] + kappa[i + 1]);
            if acc >= action {
                hi = xs[i + 1];
                break;
            }
        }
        let mut s = self.clone();
        s.x_min = lo;
        s.x_max = hi;
        Ok(s)
    }

    pub fn grid(&self, n_points: usize) -> Result<Vec<f64>> {
        if n_points < 64 {
            return Err(Error::InvalidGrid(format!("n_points = {n_points} < 64")));
        }
        let h = (self.x_max - self.x_min) / (n_points - 1) as f64;
        Ok((0..n_points)
            .map(|i| if i + 1 == n_points { self.x_max } else { self.x_min + h * i as f64 })
            .collect())
    }
}

/// Values of the basis pair and their derivatives at one position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisPoint {
    pub psi: f64,
    pub psi_d: f64,
    pub dpsi: f64,
    pub dpsi_d: f64,
    /// `(2m/ħ²)(V − E)`, so that `ψ'' = f ψ`.
    pub f: f64,
}

/// Two independent real solutions `(Ψ, Ψᴰ)` sampled on a grid.
#[derive(Debug, Clone)]
pub struct WaveBasis1D {
    pub grid: Vec<f64>,
    pub psi: Vec<f64>,
    pub psi_d: Vec<f64>,
    pub dpsi: Vec<f64>,
    pub dpsi_d: Vec<f64>,
    /// `W = Ψ′Ψᴰ − Ψᴰ′Ψ`.
    pub wronskian: f64,
    pub energy: f64,
    pub system: PhysicalSystem1D,
}

impl WaveBasis1D {
    /// Build a basis from externally supplied samples (e.g. closed forms).
    ///
    /// The Wronskian is taken from the first node and checked at every other.
    #[allow(clippy::too_many_arguments)]
    pub fn from_samples(
        system: PhysicalSystem1D,
        energy: f64,
        grid: Vec<f64>,
        psi: Vec<f64>,
        psi_d: Vec<f64>,
        dpsi: Vec<f64>,
        dpsi_d: Vec<f64>,
    ) -> Result<Self> {
        let n = grid.len();
        if n < 2 || [psi.len(), psi_d.len(), dpsi.len(), dpsi_d.len()].iter().any(|&l| l != n) {
            return Err(Error::InvalidGrid("sample arrays must match the grid length".into()));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("grid must be strictly increasing".into()));
        }
        let wronskian = dpsi[0] * psi_d[0] - dpsi_d[0] * psi[0];
        let b = Self { grid, psi, psi_d, dpsi, dpsi_d, wronskian, energy, system };
        b.check_wronskian(1e-8)?;
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn x_min(&self) -> f64 {
        self.grid[0]
    }

    pub fn x_max(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    /// Largest relative deviation of the nodal Wronskian from `W`.
    pub fn wronskian_drift(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let w = self.dpsi[i] * self.psi_d[i] - self.dpsi_d[i] * self.psi[i];
                (w - self.wronskian).abs() / self.wronskian.abs()
            })
            .fold(0.0, f64::max)
    }

    fn check_wronskian(&self, tol: f64) -> Result<()> {
        if self.wronskian == 0.0 || !self.wronskian.is_finite() {
            return Err(Error::InvalidParameter("solutions are linearly dependent (W = 0)".into()));
        }
        let drift = self.wronskian_drift();
        if drift > tol {
            return Err(Error::InvalidParameter(format!("Wronskian drifts by {drift:e} relative")));
        }
        Ok(())
    }

    pub fn f_at(&self, x: f64) -> f64 {
        self.system.f(x, self.energy)
    }

    /// Node values without interpolation.
    pub fn node(&self, i: usize) -> BasisPoint {
        BasisPoint {
            psi: self.psi[i],
            psi_d: self.psi_d[i],
            dpsi: self.dpsi[i],
            dpsi_d: self.dpsi_d[i],
            f: self.f_at(self.grid[i]),
        }
    }

    /// Cubic Hermite interpolation of both solutions and their derivatives.
    ///
    /// Derivatives are interpolated with `ψ'' = fψ` as their slopes, so values
    /// and first derivatives are both fourth-order accurate.
    pub fn eval(&self, x: f64) -> Result<BasisPoint> {
        let (lo, hi) = (self.x_min(), self.x_max());
        if !(x >= lo && x <= hi) {
            return Err(Error::OutOfDomain { x, lo, hi });
        }
        let n = self.len();
        let i = self.grid.partition_point(|&g| g <= x).clamp(1, n - 1) - 1;
        let (x0, x1) = (self.grid[i], self.grid[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let f0 = self.f_at(x0);
        let f1 = self.f_at(x1);
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let herm = |y0: f64, m0: f64, y1: f64, m1: f64| h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1;
        Ok(BasisPoint {
            psi: herm(self.psi[i], self.dpsi[i], self.psi[i + 1], self.dpsi[i + 1]),
            psi_d: herm(self.psi_d[i], self.dpsi_d[i], self.psi_d[i + 1], self.dpsi_d[i + 1]),
            dpsi: herm(self.dpsi[i], f0 * self.psi[i], self.dpsi[i + 1], f1 * self.psi[i + 1]),
            dpsi_d: herm(self.dpsi_d[i], f0 * self.psi_d[i], self.dpsi_d[i + 1], f1 * self.psi_d[i + 1]),
            f: self.f_at(x),
        })
    }
}

/// Numerov march of `y'' = f y` over nodes `0..f.len()` with uniform step `h`.
/// Starts from `y0`, `dy0` using a Taylor step for the second node.
/// `rescale` renormalises the running solution to avoid overflow; the scale
/// factors are positive so signs are preserved.
fn numerov(f: &[f64], h: f64, y0: f64, dy0: f64, rescale: bool) -> Vec<f64> {
    let n = f.len();
    let mut y = vec![0.0; n];
    y[0] = y0;
    if n < 2 {
        return y;
    }
    // One-sided derivatives of f for the start-up Taylor series.
    let (fp, fpp) = if n >= 3 {
        ((-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h), (f[0] - 2.0 * f[1] + f[2]) / (h * h))
    } else {
        ((f[1] - f[0]) / h, 0.0)
    };
    let f0 = f[0];
    y[1] = y0
        + h * dy0
        + h * h / 2.0 * f0 * y0
        + h.powi(3) / 6.0 * (fp * y0 + f0 * dy0)
        + h.powi(4) / 24.0 * (fpp * y0 + 2.0 * fp * dy0 + f0 * f0 * y0);
    let c = h * h / 12.0;
    for i in 1..n - 1 {
        y[i + 1] = (2.0 * (1.0 + 5.0 * c * f[i]) * y[i] - (1.0 - c * f[i - 1]) * y[i - 1]) / (1.0 - c * f[i + 1]);
        if rescale && y[i + 1].abs() > 1e100 {
            let s = 1.0 / y[i + 1].abs();
            for v in &mut y[..=i + 1] {
                *v *= s;
            }
        }
    }
    y
}

/// Fourth-order nodal derivative from Numerov samples:
/// `y'_i = [(1 − h²f₊/6)y₊ − (1 − h²f₋/6)y₋] / 2h`.
#[inline]
fn numerov_derivative(ym: f64, fm: f64, yp: f64, fp: f64, h: f64) -> f64 {
    let c = h * h / 6.0;
    ((1.0 - c * fp) * yp - (1.0 - c * fm) * ym) / (2.0 * h)
}

/// Integrate the two solutions with `Ψ(x_min)=1, Ψ′=0` and `Ψᴰ(x_min)=0, Ψᴰ′=k₀`.
///
/// `W = −k₀` is exact. The nodal products `Ψ′Ψᴰ − Ψᴰ′Ψ` reproduce it to ~1e-10
/// while the pair stays O(1–10); deep in a forbidden region both solutions grow
/// together and the difference drowns in rounding (relative error ~ ε·|Ψ|²/|W|),
/// even though ratios such as `Ψᴰ/Ψ` remain accurate.
pub fn solve_pair(system: &PhysicalSystem1D, energy: f64, n_points: usize) -> Result<WaveBasis1D> {
    system.validate()?;
    let grid = system.grid(n_points)?;
    let h = grid[1] - grid[0];
    // One ghost node past x_max so the last derivative uses the centred formula.
    let f: Vec<f64> = grid.iter().chain(std::iter::once(&(system.x_max + h))).map(|&x| system.f(x, energy)).collect();
    if let Some(i) = f[..n_points].iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteSolution { x: grid[i] });
    }
    let mut k0 = (2.0 * system.mass * (energy - system.v(system.x_min)).abs()).sqrt() / system.hbar;
    if k0 == 0.0 {
        k0 = 1.0;
    }
    let ya = numerov(&f, h, 1.0, 0.0, false);
    let yb = numerov(&f, h, 0.0, k0, false);
    for (i, (a, b)) in ya.iter().zip(&yb).enumerate().take(n_points) {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::NonFiniteSolution { x: grid[i] });
        }
    }
    let deriv = |y: &[f64], i: usize, d0: f64| -> f64 {
        if i == 0 {
            d0
        } else {
            numerov_derivative(y[i - 1], f[i - 1], y[i + 1], f[i + 1], h)
        }
    };
    let dpsi: Vec<f64> = (0..n_points).map(|i| deriv(&ya, i, 0.0)).collect();
    let dpsi_d: Vec<f64> = (0..n_points).map(|i| deriv(&yb, i, k0)).collect();
    let psi = ya[..n_points].to_vec();
    let psi_d = yb[..n_points].to_vec();
    if dpsi.iter().chain(&dpsi_d).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteSolution { x: system.x_max });
    }
    Ok(WaveBasis1D { grid, psi, psi_d, dpsi, dpsi_d, wronskian: -k0, energy, system: system.clone() })
}

/// Matching determinant `yL′yR − yLyR′` at the potential minimum, normalised
/// so only its sign and zeros carry information.
fn matching_determinant(system: &PhysicalSystem1D, grid: &[f64], m: usize, energy: f64) -> f64 {
    let n = grid.len();
    let h = grid[1] - grid[0];
    let f: Vec<f64> = grid.iter().map(|&x| system.f(x, energy)).collect();
    // Outward-decaying start on each side; ψ = 0 for hard walls.
    let start = |fe: f64| -> (f64, f64) {
        match system.walls {
            Walls::Hard => (0.0, 1.0),
            Walls::Open => (1.0, fe.max(0.0).sqrt()),
        }
    };
    let (l0, ld0) = start(f[0]);
    let left = numerov(&f[..=m + 1], h, l0, ld0, true);
    let fr: Vec<f64> = f[m - 1..].iter().rev().copied().collect();
    let (r0, rd0) = start(f[n - 1]);
    let right_rev = numerov(&fr, h, r0, rd0, true);
    // right_rev[j] is the solution at node n-1-j; derivative w.r.t. x flips sign.
    let yl = left[m];
    let dyl = numerov_derivative(left[m - 1], f[m - 1], left[m + 1], f[m + 1], h);
    let j = n - 1 - m;
    let yr = right_rev[j];
    let dyr = -numerov_derivative(right_rev[j - 1], fr[j - 1], right_rev[j + 1], fr[j + 1], h);
    let norm_l = yl.hypot(dyl * h);
    let norm_r = yr.hypot(dyr * h);
    (dyl * yr - yl * dyr) * h / (norm_l * norm_r)
}

/// Lowest `count` bound-state energies in `[e_min, e_max]` on the default grid.
pub fn find_bound_energies(system: &PhysicalSystem1D, count: usize, e_min: f64, e_max: f64) -> Result<Vec<f64>> {
    find_bound_energies_with(system, count, e_min, e_max, DEFAULT_SEARCH_POINTS)
}

/// Lowest `count` bound-state energies by two-sided shooting matched at the
/// potential minimum, with each sign change of the matching determinant
/// refined by bisection to 1e-10 relative.
pub fn find_bound_energies_with(
    system: &PhysicalSystem1D,
    count: usize,
    e_min: f64,
    e_max: f64,
    n_points: usize,
) -> Result<Vec<f64>> {
    system.validate()?;
    if count == 0 {
        return Ok(Vec::new());
    }
    if !(e_min < e_max) {
        return Err(Error::InvalidParameter(format!("empty energy window [{e_min}, {e_max}]")));
    }
    if system.walls == Walls::Open && (system.v(system.x_min) <= e_max || system.v(system.x_max) <= e_max) {
        return Err(Error::InvalidParameter("potential is not confining above e_max at the domain edges".into()));
    }
    let grid = system.grid(n_points)?;
    let m = matching_index(system, &grid);
    let det = |e: f64| matching_determinant(system, &grid, m, e);

    let n_scan = (60 * count).max(600);
    let de = (e_max - e_min) / n_scan as f64;
    let abs_floor = 1e-14 * (e_max - e_min);
    let mut found = Vec::with_capacity(count);
    let mut e_lo = e_min;
    let mut d_lo = det(e_lo);
    for k in 1..=n_scan {
        let e_hi = if k == n_scan { e_max } else { e_min + de * k as f64 };
        let d_hi = det(e_hi);
        if !d_lo.is_finite() || !d_hi.is_finite() {
            return Err(Error::NonFiniteSolution { x: grid[m] });
        }
        if d_lo == 0.0 {
            found.push(e_lo);
        } else if d_lo.signum() != d_hi.signum() && d_hi != 0.0 {
            let (mut a, mut b, mut da) = (e_lo, e_hi, d_lo);
            // Bisect to the last representable digit: the 1e-10 target is a
            // floor, and winding checks amplify any residual energy error by
            // the growth of the pair through the forbidden regions.
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b || b - a <= abs_floor {
                    break;
                }
                let dm = det(mid);
                if dm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if dm.signum() == da.signum() {
                    a = mid;
                    da = dm;
                } else {
                    b = mid;
                }
            }
            found.push(0.5 * (a + b));
        }
        if found.len() == count {
            return Ok(found);
        }
        e_lo = e_hi;
        d_lo = d_hi;
    }
    Err(Error::BracketExhausted { found: found.len(), requested: count })
}

/// Node of minimal potential, taking the middle of a flat bottom and keeping
/// clear of the ends so both shooting legs have room.
fn matching_index(system: &PhysicalSystem1D, grid: &[f64]) -> usize {
    let n = grid.len();
    let v: Vec<f64> = grid.iter().map(|&x| system.v(x)).collect();
    let vmin = v[1..n - 1].iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * vmin.abs().max(1.0);
    let idx: Vec<usize> = (1..n - 1).filter(|&i| v[i] - vmin <= tol).collect();
    idx[idx.len() / 2].clamp(2, n - 3)
}
