//! Dormand–Prince 5(4) with the standard fourth-order continuous extension.
//!
//! The integrator works on fixed-size states `[f64; N]`, reports every accepted
//! step to an observer (which may stop the run), and exposes the dense-output
//! polynomial so callers can sample at arbitrary times without extra RHS calls.
//!
//! References
//! - Hairer, Nørsett, Wanner, *Solving Ordinary Differential Equations I*, §II.4–II.6.

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// First trial step; chosen automatically when `None`.
    pub h_init: Option<f64>,
    /// Largest allowed step magnitude.
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-12, h_init: None, h_max: f64::INFINITY, max_steps: 1_000_000 }
    }
}

impl OdeOptions {
    pub fn with_tol(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, ..Self::default() }
    }
}

/// One accepted step together with its interpolant.
#[derive(Debug, Clone)]
pub struct Step<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    rcont: [[f64; N]; 5],
}

impl<const N: usize> Step<N> {
    /// Dense output at `t` in `[t0, t1]` (fourth order).
    pub fn eval(&self, t: f64) -> [f64; N] {
        let h = self.t1 - self.t0;
        let s = if h == 0.0 { 0.0 } else { (t - self.t0) / h };
        let s1 = 1.0 - s;
        let r = &self.rcont;
        std::array::from_fn(|i| r[0][i] + s * (r[1][i] + s1 * (r[2][i] + s * (r[3][i] + s1 * r[4][i]))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OdeFailure<E> {
    /// The right-hand side refused to evaluate.
    Rhs(E),
    StepUnderflow { t: f64 },
    TooManySteps { t: f64 },
}

#[derive(Debug, Clone)]
pub struct OdeOutcome<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    /// True when the observer requested an early stop.
    pub stopped: bool,
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        y[i] + h * acc
    })
}

fn rms_norm<const N: usize>(v: &[f64; N], y0: &[f64; N], y1: &[f64; N], o: &OdeOptions) -> f64 {
    if N == 0 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..N {
        let sc = o.atol + o.rtol * y0[i].abs().max(y1[i].abs());
        s += (v[i] / sc).powi(2);
    }
    (s / N as f64).sqrt()
}

/// Integrate `y' = f(t, y)` from `t0` to `t_end` (either direction).
pub fn solve<const N: usize, E, F, O>(
    mut f: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    opts: &OdeOptions,
    mut observer: O,
) -> Result<OdeOutcome<N>, OdeFailure<E>>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N], E>,
    O: FnMut(&Step<N>) -> Control,
{
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let span = (t_end - t0).abs();
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y).map_err(OdeFailure::Rhs)?;
    let mut evals = 1usize;
    let mut out = OdeOutcome { t, y, accepted: 0, rejected: 0, rhs_evals: 0, stopped: false };
    if span == 0.0 {
        out.rhs_evals = evals;
        return Ok(out);
    }

    let mut h = match opts.h_init {
        Some(h) => h.abs().min(span),
        None => {
            let (hh, extra) = initial_step(&mut f, t, &y, &k1, dir, opts).map_err(OdeFailure::Rhs)?;
            evals += extra;
            hh.min(span)
        }
    }
    .min(opts.h_max);

    const SAFE: f64 = 0.9;
    const BETA: f64 = 0.04;
    const EXPO1: f64 = 0.2 - BETA * 0.75;
    let mut facold = 1e-4_f64;
    let mut last_rejected = false;

    loop {
        if out.accepted + out.rejected >= opts.max_steps {
            return Err(OdeFailure::TooManySteps { t });
        }
        let remaining = (t_end - t) * dir;
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        if h <= 16.0 * f64::EPSILON * t.abs().max(span) {
            return Err(OdeFailure::StepUnderflow { t });
        }
        let hs = h * dir;

        let y2 = axpy(&y, hs, &[(A21, &k1)]);
        let k2 = f(t + C2 * hs, &y2).map_err(OdeFailure::Rhs)?;
        let y3 = axpy(&y, hs, &[(A31, &k1), (A32, &k2)]);
        let k3 = f(t + C3 * hs, &y3).map_err(OdeFailure::Rhs)?;
        let y4 = axpy(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        let k4 = f(t + C4 * hs, &y4).map_err(OdeFailure::Rhs)?;
        let y5 = axpy(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        let k5 = f(t + C5 * hs, &y5).map_err(OdeFailure::Rhs)?;
        let y6 = axpy(&y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
        let k6 = f(t + hs, &y6).map_err(OdeFailure::Rhs)?;
        let y7 = axpy(&y, hs, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(t + hs, &y7).map_err(OdeFailure::Rhs)?;
        evals += 6;

        let errv: [f64; N] = std::array::from_fn(|i| {
            hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
        });
        let err = rms_norm(&errv, &y, &y7, opts);
        if !err.is_finite() {
            out.rejected += 1;
            h *= 0.2;
            last_rejected = true;
            continue;
        }
        let fac11 = err.powf(EXPO1);
        if err <= 1.0 {
            let fac = (fac11 / facold.powf(BETA) / SAFE).clamp(0.2, 10.0);
            facold = err.max(1e-4);
            let mut rcont = [[0.0; N]; 5];
            for i in 0..N {
                let dy = y7[i] - y[i];
                let bspl = hs * k1[i] - dy;
                rcont[0][i] = y[i];
                rcont[1][i] = dy;
                rcont[2][i] = bspl;
                rcont[3][i] = dy - hs * k7[i] - bspl;
                rcont[4][i] = hs
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let t_new = if last { t_end } else { t + hs };
            let step = Step { t0: t, t1: t_new, y0: y, y1: y7, rcont };
            out.accepted += 1;
            t = t_new;
            y = y7;
            k1 = k7;
            if observer(&step) == Control::Stop {
                out.stopped = true;
                break;
            }
            if last {
                break;
            }
            let mut hnew = h / fac;
            if last_rejected {
                hnew = hnew.min(h);
            }
            last_rejected = false;
            h = hnew.min(opts.h_max);
        } else {
            out.rejected += 1;
            h /= (fac11 / SAFE).min(10.0);
            last_rejected = true;
        }
    }
    out.t = t;
    out.y = y;
    out.rhs_evals = evals;
    Ok(out)
}

fn initial_step<const N: usize, E, F>(
    f: &mut F,
    t: f64,
    y: &[f64; N],
    k1: &[f64; N],
    dir: f64,
    o: &OdeOptions,
) -> Result<(f64, usize), E>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N], E>,
{
    let sc: [f64; N] = std::array::from_fn(|i| o.atol + o.rtol * y[i].abs());
    let norm = |v: &[f64; N]| -> f64 {
        if N == 0 {
            return 0.0;
        }
        (v.iter().zip(sc.iter()).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / N as f64).sqrt()
    };
    let d0 = norm(y);
    let d1 = norm(k1);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(o.h_max);
    let y1: [f64; N] = std::array::from_fn(|i| y[i] + dir * h0 * k1[i]);
    let k2 = f(t + dir * h0, &y1)?;
    let diff: [f64; N] = std::array::from_fn(|i| k2[i] - k1[i]);
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok(((100.0 * h0).min(h1).min(o.h_max), 1))
}
