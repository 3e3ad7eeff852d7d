//! Static checks of a configuration. Never fails; everything is reported.

use crate::config::*;
use qtraj::biprism::fresnel_valid;
use qtraj::homech::fit_semiclassical;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Error,
    Warning,
    Info,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostic {
    pub level: Level,
    pub code: &'static str,
    pub message: String,
}

fn diag(level: Level, code: &'static str, message: impl Into<String>) -> Diagnostic {
    Diagnostic { level, code, message: message.into() }
}

/// `raw` is the parsed file (None when no file was given), used to list fields
/// that fall back to defaults.
pub fn validate(cfg: &ExperimentConfig, raw: Option<&toml::Table>, tolerance: Option<f64>) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let empty = toml::Table::new();
    let raw = raw.unwrap_or(&empty);

    // Checklist of everything left at its default.
    let wanted: Vec<&str> = match cfg.experiment {
        Some(e) => {
            let mut v = vec!["", e.name()];
            if matches!(e, Experiment::BiprismField | Experiment::BiprismRun) {
                v.extend(["geometry", "beam"]);
            }
            v
        }
        None => Vec::new(),
    };
    for (section, keys) in ExperimentConfig::expected_keys() {
        if cfg.experiment.is_some() && !wanted.contains(&section.as_str()) {
            continue;
        }
        let present = if section.is_empty() { Some(raw) } else { raw.get(&section).and_then(|v| v.as_table()) };
        for k in keys {
            if present.is_none_or(|t| !t.contains_key(&k)) {
                let name = if section.is_empty() { k } else { format!("{section}.{k}") };
                let level = if name == "experiment" { Level::Warning } else { Level::Info };
                out.push(diag(level, "MissingField", format!("{name} not set; default used")));
            }
        }
    }

    if let Some(t) = tolerance.or(cfg.tolerance) {
        if t.is_nan() || t <= 0.0 {
            out.push(diag(Level::Error, "InvalidTolerance", format!("tolerance must be positive (got {t})")));
        }
    }
    if cfg.threads == Some(0) {
        out.push(diag(Level::Error, "InvalidThreads", "threads must be at least 1"));
    }

    let all = cfg.experiment.is_none();
    let on = |e: Experiment| all || cfg.experiment == Some(e);

    if on(Experiment::Quantize) {
        let q = &cfg.quantize;
        if q.count == 0 || !(q.mass > 0.0 && q.hbar > 0.0 && q.omega > 0.0 && q.half_width > 0.0) {
            out.push(diag(Level::Error, "Units", "quantize: count, mass, hbar, omega and half-width must be positive"));
        }
    }
    if on(Experiment::Homech) {
        let h = &cfg.homech;
        match fit_semiclassical(h.eps1, h.eps2, h.energy, h.mass, h.hbar) {
            Err(qtraj::Error::RegimeViolation { eps }) => out.push(diag(
                Level::Error,
                "RegimeViolation",
                format!("homech: ε = {eps} is outside the semiclassical regime"),
            )),
            Err(e) => out.push(diag(Level::Error, "Units", format!("homech: {e}"))),
            Ok(_) => {}
        }
    }
    if on(Experiment::Visibility) && !(0.0..=1.0).contains(&cfg.visibility.fv) {
        out.push(diag(Level::Error, "Units", format!("visibility: fv = {} is outside [0, 1]", cfg.visibility.fv)));
    }

    let geom = cfg.geometry.geometry();
    if on(Experiment::BiprismField) || on(Experiment::BiprismRun) {
        if let Err(e) = geom.validate() {
            out.push(diag(Level::Error, "Units", format!("geometry: {e}")));
        }
        if geom.filament_d > geom.aperture_half {
            out.push(diag(Level::Warning, "Units", "geometry: filament wider than the aperture; lengths are in mm"));
        }
    }
    match cfg.beam.beam(0.0) {
        Err(e) if on(Experiment::BiprismField) || on(Experiment::BiprismRun) => {
            out.push(diag(Level::Error, "Units", format!("beam: {e:#}")))
        }
        Ok(beam) if geom.validate().is_ok() => {
            if on(Experiment::BiprismField) {
                let f = &cfg.biprism_field;
                let zs = [f.z, if f.z_steps > 1 { f.z_max } else { f.z }];
                if f.x_min.abs().max(f.x_max.abs()) > geom.aperture_half {
                    out.push(diag(Level::Warning, "Units", "biprism-field: x range exceeds the aperture; lengths are in mm"));
                }
                let bad: Vec<String> = zs
                    .iter()
                    .flat_map(|&z| [(f.x_min, z), (f.x_max, z), (0.0, z)])
                    .filter(|&(x, z)| !fresnel_valid(x, z, &beam.with_center(f.x0), &geom))
                    .map(|(x, z)| format!("({x}, {z})"))
                    .collect();
                if !bad.is_empty() {
                    out.push(diag(
                        Level::Warning,
                        "FresnelValidity",
                        format!("biprism-field: Fresnel approximation fails at (x, z) = {}", bad.join(", ")),
                    ));
                }
            }
            if on(Experiment::BiprismRun) {
                let r = &cfg.biprism_run;
                if !(r.z_init > 0.0 && r.z_init < geom.screen_z) {
                    out.push(diag(Level::Error, "Units", "biprism-run: z-init must lie between the biprism and the screen"));
                } else if !fresnel_valid(geom.tilt() * r.z_init, r.z_init, &beam, &geom) {
                    out.push(diag(
                        Level::Warning,
                        "FresnelValidity",
                        format!("biprism-run: Fresnel approximation fails at the start plane z = {} mm", r.z_init),
                    ));
                }
                if !(r.rtol > 0.0 && r.atol > 0.0) {
                    out.push(diag(Level::Error, "InvalidTolerance", "biprism-run: rtol and atol must be positive"));
                }
            }
        }
        _ => {}
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn codes(d: &[Diagnostic]) -> Vec<&'static str> {
        d.iter().map(|d| d.code).collect()
    }

    #[test]
    fn large_eps_is_a_regime_violation() {
        let mut cfg = ExperimentConfig { experiment: Some(Experiment::Homech), ..Default::default() };
        cfg.homech.eps1 = 0.5;
        assert!(codes(&validate(&cfg, None, None)).contains(&"RegimeViolation"));
    }

    #[test]
    fn field_close_to_the_biprism_warns() {
        let mut cfg = ExperimentConfig { experiment: Some(Experiment::BiprismField), ..Default::default() };
        cfg.biprism_field.z = 0.1;
        assert!(codes(&validate(&cfg, None, None)).contains(&"FresnelValidity"));
        cfg.biprism_field.z = 33.77;
        assert!(!codes(&validate(&cfg, None, None)).contains(&"FresnelValidity"));
    }

    #[test]
    fn empty_config_lists_every_field() {
        let d = validate(&ExperimentConfig::default(), None, None);
        let missing = d.iter().filter(|d| d.code == "MissingField").count();
        let expected: usize = ExperimentConfig::expected_keys().iter().map(|(_, k)| k.len()).sum();
        assert_eq!(missing, expected);
        assert!(d.iter().all(|d| d.level != Level::Error));
    }

    #[test]
    fn bad_tolerance_is_an_error() {
        let d = validate(&ExperimentConfig::default(), None, Some(-1.0));
        assert!(d.iter().any(|d| d.code == "InvalidTolerance" && d.level == Level::Error));
    }
}
