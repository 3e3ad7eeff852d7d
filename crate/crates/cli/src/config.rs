//! Experiment configuration: a TOML file with one section per experiment.
//!
//! ```toml
//! experiment = "biprism-run"
//! out-dir = "out/fig4"
//! threads = 8
//!
//! [geometry]
//! screen-z = 33.77
//!
//! [biprism-run]
//! samples = 401
//! ```
//!
//! Command-line flags override file values, which override the defaults below.

use anyhow::{bail, Context, Result};
use qtraj::biprism::{BiprismGeometry, GaussianBeam, OpenSlots};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Quantize,
    MomentumField,
    Homech,
    Angular,
    BiprismField,
    BiprismRun,
    Visibility,
}

impl Experiment {
    #[cfg(test)]
    pub const ALL: [Experiment; 7] = [
        Experiment::Quantize,
        Experiment::MomentumField,
        Experiment::Homech,
        Experiment::Angular,
        Experiment::BiprismField,
        Experiment::BiprismRun,
        Experiment::Visibility,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Quantize => "quantize",
            Experiment::MomentumField => "momentum-field",
            Experiment::Homech => "homech",
            Experiment::Angular => "angular",
            Experiment::BiprismField => "biprism-field",
            Experiment::BiprismRun => "biprism-run",
            Experiment::Visibility => "visibility",
        }
    }

    /// File stem for artifacts.
    pub fn stem(self) -> String {
        self.name().replace('-', "_")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialKind {
    Harmonic,
    SquareWell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct QuantizeParams {
    pub potential: PotentialKind,
    pub count: usize,
    pub mass: f64,
    pub hbar: f64,
    pub omega: f64,
    pub half_width: f64,
    pub points: usize,
    pub l1: f64,
    pub l2: f64,
}

impl Default for QuantizeParams {
    fn default() -> Self {
        Self {
            potential: PotentialKind::Harmonic,
            count: 5,
            mass: 1.0,
            hbar: 1.0,
            omega: 1.0,
            half_width: 1.0,
            points: 8001,
            l1: 1.0,
            l2: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct MomentumFieldParams {
    pub potential: PotentialKind,
    pub level: usize,
    pub mass: f64,
    pub hbar: f64,
    pub omega: f64,
    pub half_width: f64,
    pub points: usize,
    pub l1: f64,
    pub l2: f64,
}

impl Default for MomentumFieldParams {
    fn default() -> Self {
        let q = QuantizeParams::default();
        Self {
            potential: q.potential,
            level: 0,
            mass: q.mass,
            hbar: q.hbar,
            omega: q.omega,
            half_width: q.half_width,
            points: 2001,
            l1: q.l1,
            l2: q.l2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct HomechParams {
    pub eps1: f64,
    pub eps2: f64,
    pub energy: f64,
    pub mass: f64,
    pub hbar: f64,
    pub periods: f64,
    pub samples_per_period: usize,
}

impl Default for HomechParams {
    fn default() -> Self {
        Self { eps1: 0.01, eps2: 0.0, energy: 1.0, mass: 1.0, hbar: 1.0, periods: 10.0, samples_per_period: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct AngularParams {
    pub c1: [f64; 2],
    pub c2: [f64; 2],
    /// The magnetic quantum number 𝗆 (real, to probe non-integer values).
    pub m: f64,
    pub hbar: f64,
    pub points: usize,
}

impl Default for AngularParams {
    fn default() -> Self {
        Self { c1: [1.0, 0.0], c2: [0.7, 0.4], m: 1.0, hbar: 1.0, points: 361 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct BiprismFieldParams {
    /// Beam centre x₀ (mm).
    pub x0: f64,
    pub z: f64,
    /// With `z-steps > 1` the map spans [z, z-max].
    pub z_max: f64,
    pub z_steps: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
    pub open: OpenSlots,
}

impl Default for BiprismFieldParams {
    fn default() -> Self {
        Self { x0: 0.0, z: 33.77, z_max: 33.77, z_steps: 1, x_min: -1.5e-3, x_max: 1.5e-3, points: 601, open: OpenSlots::Both }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct BiprismRunParams {
    /// Start positions at the initialization plane (mm); the reference grid
    /// from −2 μm to −0.105 μm when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_ini: Option<Vec<f64>>,
    pub z_init: f64,
    pub samples: usize,
    pub rtol: f64,
    pub atol: f64,
    pub flux_half_width: f64,
    pub field_samples: usize,
    pub write_paths: bool,
}

impl Default for BiprismRunParams {
    fn default() -> Self {
        let run = qtraj::trajectory::BiprismRun::default();
        Self {
            x_ini: None,
            z_init: run.propagation.z_init,
            samples: run.propagation.samples,
            rtol: run.propagation.rtol,
            atol: run.propagation.atol,
            flux_half_width: run.flux_half_width,
            field_samples: run.field_samples,
            write_paths: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct VisibilityParams {
    pub fv: f64,
}

impl Default for VisibilityParams {
    fn default() -> Self {
        Self { fv: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct GeometryParams {
    pub kx: f64,
    pub kz: f64,
    pub filament_d: f64,
    pub aperture_half: f64,
    pub screen_z: f64,
}

impl Default for GeometryParams {
    fn default() -> Self {
        let g = BiprismGeometry::default();
        Self { kx: g.kx, kz: g.kz, filament_d: g.filament_d, aperture_half: g.aperture_half, screen_z: g.screen_z }
    }
}

impl GeometryParams {
    pub fn geometry(&self) -> BiprismGeometry {
        BiprismGeometry {
            kx: self.kx,
            ky: 0.0,
            kz: self.kz,
            filament_d: self.filament_d,
            aperture_half: self.aperture_half,
            screen_z: self.screen_z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct BeamComponentParams {
    pub weight: f64,
    pub w0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct BeamParams {
    pub components: Vec<BeamComponentParams>,
}

impl Default for BeamParams {
    fn default() -> Self {
        let b = GaussianBeam::two_component(0.0);
        Self { components: b.components.iter().map(|c| BeamComponentParams { weight: c.weight, w0: c.w0 }).collect() }
    }
}

impl BeamParams {
    pub fn beam(&self, x0: f64) -> Result<GaussianBeam> {
        let comps = self
            .components
            .iter()
            .map(|c| qtraj::biprism::BeamComponent { weight: c.weight, w0: c.w0 })
            .collect();
        GaussianBeam::new((x0, 0.0), comps).context("invalid [beam] section")
    }
}

/// The whole file. Every section is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub tolerance: Option<f64>,
    pub geometry: GeometryParams,
    pub beam: BeamParams,
    pub quantize: QuantizeParams,
    pub momentum_field: MomentumFieldParams,
    pub homech: HomechParams,
    pub angular: AngularParams,
    pub biprism_field: BiprismFieldParams,
    pub biprism_run: BiprismRunParams,
    pub visibility: VisibilityParams,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("malformed configuration")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Section names and the keys each one accepts, for the missing-field checklist.
    pub fn expected_keys() -> Vec<(String, Vec<String>)> {
        let full = toml::Value::try_from(ExperimentConfig {
            experiment: Some(Experiment::Quantize),
            out_dir: Some(PathBuf::new()),
            threads: Some(1),
            tolerance: Some(1.0),
            ..Default::default()
        })
        .expect("config serializes");
        let table = full.as_table().expect("config is a table");
        let mut top = Vec::new();
        let mut sections = Vec::new();
        for (k, v) in table {
            match v.as_table() {
                Some(t) => sections.push((k.clone(), t.keys().cloned().collect())),
                None => top.push(k.clone()),
            }
        }
        let mut out = vec![(String::new(), top)];
        out.extend(sections);
        out
    }
}

/// Tolerances must be positive; counts non-zero.
pub fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        bail!("{name} must be positive and finite (got {v})");
    }
    Ok(())
}
