//! One runner per experiment. Each returns a JSON summary plus CSV tables.

use crate::config::*;
use crate::output::{Artifacts, Table};
use anyhow::{Context, Result};
use qtraj::angular::{phi_momentum, phi_quantization, AngularCoeffs};
use qtraj::biprism::{Biprism, KernelMethod};
use qtraj::homech::{fit_semiclassical, fourier_modes, inconsistency_residual};
use qtraj::qshje::{winding_integral, MobiusParams, MomentumField1D};
use qtraj::schrodinger1d::{find_bound_energies, solve_pair, PhysicalSystem1D, WaveBasis1D};
use qtraj::trajectory::{mean_velocity_from_visibility, BiprismRun, PropagationOptions};
use qtraj::Complex64;
use serde_json::json;
use std::f64::consts::PI;

/// Forbidden-region action kept beyond each turning point when trimming the
/// harmonic box; larger boxes lose the distinction between Ψ and Ψᴰ.
const TRIM_ACTION: f64 = 6.0;

struct WellSpec {
    kind: PotentialKind,
    mass: f64,
    hbar: f64,
    omega: f64,
    half_width: f64,
}

impl WellSpec {
    fn exact(&self, n: usize) -> f64 {
        match self.kind {
            PotentialKind::Harmonic => self.hbar * self.omega * (n as f64 + 0.5),
            PotentialKind::SquareWell => {
                let k = (n as f64 + 1.0) * PI / (2.0 * self.half_width);
                (self.hbar * k).powi(2) / (2.0 * self.mass)
            }
        }
    }

    fn system(&self, levels: usize) -> Result<PhysicalSystem1D> {
        Ok(match self.kind {
            PotentialKind::Harmonic => PhysicalSystem1D::harmonic(self.mass, self.hbar, self.omega, self.exact(levels))?,
            PotentialKind::SquareWell => PhysicalSystem1D::square_well(self.mass, self.hbar, self.half_width)?,
        })
    }

    /// Energies of the lowest `count` levels.
    fn energies(&self, count: usize) -> Result<Vec<f64>> {
        let sys = self.system(count)?;
        let top = 0.5 * (self.exact(count - 1) + self.exact(count));
        find_bound_energies(&sys, count, 0.0, top).context("bound-state search")
    }

    /// Solution pair for level `n` at energy `e`, on a box suited to the winding count.
    fn basis(&self, n: usize, e: f64, points: usize) -> Result<WaveBasis1D> {
        let sys = self.system(n + 1)?;
        match self.kind {
            PotentialKind::Harmonic => {
                let sys = sys.trimmed(e, TRIM_ACTION)?;
                let top = sys.v(sys.x_max).min(sys.v(sys.x_min)) * 0.999;
                let e = find_bound_energies(&sys, n + 1, 0.0, top)?[n];
                Ok(solve_pair(&sys, e, points)?)
            }
            PotentialKind::SquareWell => Ok(solve_pair(&sys, e, points)?),
        }
    }
}

pub fn quantize(p: &QuantizeParams) -> Result<Artifacts> {
    anyhow::ensure!(p.count > 0, "count must be at least 1");
    let well = WellSpec { kind: p.potential, mass: p.mass, hbar: p.hbar, omega: p.omega, half_width: p.half_width };
    let energies = well.energies(p.count)?;
    let mobius = MobiusParams::new(p.l1, p.l2)?;
    let mut rows = Vec::new();
    let mut levels = Vec::new();
    for (n, &e) in energies.iter().enumerate() {
        let basis = well.basis(n, e, p.points)?;
        let w = winding_integral(&MomentumField1D::new(&basis, mobius)).with_context(|| format!("winding of level {n}"))?;
        let exact = well.exact(n);
        rows.push(vec![n as f64, e, exact, w.action, w.n as f64, w.deviation]);
        levels.push(json!({ "n": n, "energy": e, "exact": exact, "action": w.action, "winding": w.n, "deviation_h": w.deviation }));
    }
    Ok(Artifacts {
        summary: json!({ "levels": levels }),
        tables: vec![Table::new("levels", &["n", "energy", "exact", "action", "winding", "deviation_h"], rows)],
    })
}

pub fn momentum_field(p: &MomentumFieldParams) -> Result<Artifacts> {
    let well = WellSpec { kind: p.potential, mass: p.mass, hbar: p.hbar, omega: p.omega, half_width: p.half_width };
    let e = well.energies(p.level + 1)?[p.level];
    let basis = well.basis(p.level, e, p.points)?;
    let field = MomentumField1D::new(&basis, MobiusParams::new(p.l1, p.l2)?);
    let rows = (0..basis.len())
        .map(|i| {
            let x = basis.grid[i];
            vec![x, basis.psi[i], basis.psi_d[i], field.p_node(i), field.quantum_potential_node(i), basis.system.v(x)]
        })
        .collect();
    let w = winding_integral(&field)?;
    Ok(Artifacts {
        summary: json!({
            "energy": basis.energy,
            "exact": well.exact(p.level),
            "winding": { "action": w.action, "n": w.n, "deviation_h": w.deviation, "branch_jumps": w.branch_jumps },
            "domain": [basis.x_min(), basis.x_max()],
        }),
        tables: vec![Table::new("field", &["x", "psi", "psi_d", "p", "quantum_potential", "v"], rows)],
    })
}

pub fn homech(p: &HomechParams, tol: f64) -> Result<Artifacts> {
    let fit = fit_semiclassical(p.eps1, p.eps2, p.energy, p.mass, p.hbar)?;
    let lag = fit.lagrangian()?;
    let (s0, period) = fit.periodic_orbit(1e-13).context("periodic-orbit shooting")?;
    anyhow::ensure!(p.samples_per_period >= 8 && p.periods > 0.0, "need ≥ 8 samples per period and periods > 0");
    let n = (p.periods * p.samples_per_period as f64).round() as usize + 1;
    let path = lag.integrate_uniform(&s0, period / p.samples_per_period as f64, n, tol)?;
    let e0 = lag.energy(&s0)?;
    let p0 = lag.jo_momenta(&s0)?.0;
    let mut rows = Vec::with_capacity(path.len());
    let (mut de, mut dp): (f64, f64) = (0.0, 0.0);
    for s in &path {
        let e = lag.energy(s)?;
        let p1 = lag.jo_momenta(s)?.0;
        de = de.max(((e - e0) / e0).abs());
        dp = dp.max(((p1 - p0) / p0).abs());
        rows.push(vec![s.t, s.q, s.qd, s.qdd, s.qddd, e, p1, lag.p_el(s)?, fit.p_qhj(s.q)]);
    }
    let modes = fourier_modes(&path).ok();
    let (c3, residual) = inconsistency_residual(&fit);
    let law = fit.mass * fit.v * fit.v / (fit.hbar * (-2.0 * fit.c2b).sqrt());
    Ok(Artifacts {
        summary: json!({
            "fit": fit,
            "k": fit.k(),
            "period": period,
            "omega_law": law,
            "omega_path": modes.as_ref().map(|m| m.omega),
            "drift_velocity": modes.as_ref().map(|m| m.v),
            "energy_drift": de,
            "p1_drift": dp,
            "c3": c3,
            "inconsistency_residual": residual,
        }),
        tables: vec![Table::new("path", &["t", "q", "qd", "qdd", "qddd", "energy", "p1", "p_el", "p_qhj"], rows)],
    })
}

pub fn angular(p: &AngularParams) -> Result<Artifacts> {
    let c = AngularCoeffs::new(Complex64::new(p.c1[0], p.c1[1]), Complex64::new(p.c2[0], p.c2[1]), p.m)?;
    let q = phi_quantization(&c, p.hbar)?;
    let n = p.points.max(2);
    let rows = (0..n)
        .map(|i| {
            let phi = PI * i as f64 / (n - 1) as f64;
            vec![phi, phi_momentum(&c, phi, p.hbar).unwrap_or(f64::NAN)]
        })
        .collect();
    Ok(Artifacts {
        summary: json!({ "integral": q.integral, "ratio": q.ratio, "n": q.n, "quantized": q.n.is_some() }),
        tables: vec![Table::new("momentum", &["phi", "p_phi"], rows)],
    })
}

pub fn biprism_field(p: &BiprismFieldParams, geom: &GeometryParams, beam: &BeamParams, tol: Option<f64>) -> Result<Artifacts> {
    let mut bp = Biprism::new(geom.geometry(), beam.beam(p.x0)?)?.with_open(p.open);
    if let Some(abs_tol) = tol {
        bp = bp.with_method(KernelMethod::Quadrature { abs_tol });
    }
    anyhow::ensure!(p.points >= 2 && p.x_max > p.x_min, "need ≥ 2 points over a non-empty x range");
    let xs: Vec<f64> = (0..p.points).map(|i| p.x_min + (p.x_max - p.x_min) * i as f64 / (p.points - 1) as f64).collect();
    let zs: Vec<f64> = if p.z_steps > 1 {
        (0..p.z_steps).map(|i| p.z + (p.z_max - p.z) * i as f64 / (p.z_steps - 1) as f64).collect()
    } else {
        vec![p.z]
    };
    let mut rows = Vec::new();
    let (mut i_max, mut nodes) = (0.0f64, 0usize);
    for &z in &zs {
        for s in bp.field_map(&xs, z).with_context(|| format!("field map at z = {z} mm"))? {
            i_max = i_max.max(s.intensity);
            nodes += usize::from(s.px.is_nan());
            let k = s.kernels;
            rows.push(vec![s.z, s.x, s.intensity, s.px, k.m1, k.n1, k.m2, k.n2]);
        }
    }
    Ok(Artifacts {
        summary: json!({
            "z": zs,
            "points": rows.len(),
            "max_intensity": i_max,
            "nodes": nodes,
            "fringe_period": bp.geom.fringe_period(),
        }),
        tables: vec![Table::new("map", &["z", "x", "intensity", "px", "m1", "n1", "m2", "n2"], rows)],
    })
}

pub fn biprism_run(p: &BiprismRunParams, geom: &GeometryParams, beam: &BeamParams, tol: Option<f64>) -> Result<Artifacts> {
    let defaults = BiprismRun::default();
    let run = BiprismRun {
        geom: geom.geometry(),
        beam: beam.beam(0.0)?,
        x_ini: p.x_ini.clone().unwrap_or(defaults.x_ini),
        propagation: PropagationOptions { z_init: p.z_init, rtol: tol.unwrap_or(p.rtol), atol: p.atol, samples: p.samples },
        flux_half_width: p.flux_half_width,
        field_samples: p.field_samples,
    };
    let out = run.run()?;
    let d = &out.density;
    let density = d
        .positions
        .iter()
        .zip(&d.intensity)
        .zip(&d.flux)
        .map(|((&x, &i), &f)| vec![x, i, f, d.total_at(x)])
        .collect();
    let field = out.field_profile.iter().map(|&(x, i)| vec![x, i]).collect();
    let mut tables = vec![
        Table::new("density", &["x", "lower", "flux", "total"], density),
        Table::new("field", &["x", "intensity"], field),
    ];
    if p.write_paths {
        let paths = out
            .records
            .iter()
            .enumerate()
            .flat_map(|(k, r)| r.path.iter().map(move |&(z, x)| vec![k as f64, r.x_ini, z, x]))
            .collect();
        tables.push(Table::new("paths", &["trajectory", "x_ini", "z", "x"], paths));
    }
    let period = run.geom.fringe_period();
    Ok(Artifacts {
        summary: json!({
            "trajectories": out.records.len(),
            "visibility": out.visibility,
            "mean_velocity_ratio": out.mean_velocity_ratio,
            "fringe_period": out.fringe_period,
            "fringe_period_ratio": out.fringe_period / period,
            "density_peak": out.density_peak,
            "field_peak": out.field_peak,
            "peak_shift": out.density_peak.zip(out.field_peak).map(|(a, b)| a - b),
        }),
        tables,
    })
}

pub fn visibility(p: &VisibilityParams) -> Result<Artifacts> {
    let ratio = mean_velocity_from_visibility(p.fv)?;
    let curve = (0..=100)
        .map(|i| {
            let fv = i as f64 / 100.0;
            Ok(vec![fv, mean_velocity_from_visibility(fv)?])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Artifacts {
        summary: json!({ "fv": p.fv, "mean_velocity_ratio": ratio }),
        tables: vec![Table::new("curve", &["fv", "mean_velocity_ratio"], curve)],
    })
}
