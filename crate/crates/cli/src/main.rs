mod config;
mod experiments;
mod output;
mod validate;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use config::*;
use qtraj::biprism::OpenSlots;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "qtraj", version, about = "Quantum-trajectory experiments: quantization, momentum fields, higher-order Lagrangians, biprism trajectories")]
struct Cli {
    /// TOML experiment configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for JSON summaries and CSV tables [default: out]
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads [default: all cores]
    #[arg(long, global = true, env = "QTRAJ_THREADS")]
    threads: Option<usize>,
    /// Integration / quadrature tolerance override (homech path integration,
    /// biprism-run relative tolerance, biprism-field quadrature).
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bound-state energies and their winding numbers.
    Quantize(QuantizeArgs),
    /// Momentum field p(x) of one bound state.
    MomentumField(MomentumFieldArgs),
    /// Semiclassical fit and higher-order Lagrangian orbit.
    Homech(HomechArgs),
    /// φ-direction momentum and its quantization.
    Angular(AngularArgs),
    /// Diffracted intensity and pₓ behind the biprism.
    BiprismField(BiprismFieldArgs),
    /// Full trajectory ensemble, screen density and visibility.
    BiprismRun(BiprismRunArgs),
    /// Mean-velocity ratio for a fringe visibility.
    Visibility(VisibilityArgs),
    /// Run the experiment named in the config file.
    Run,
    /// Report problems with a configuration without running it.
    Validate,
}

#[derive(Args, Default)]
struct WellArgs {
    #[arg(long, value_enum)]
    potential: Option<PotentialKind>,
    #[arg(long, allow_hyphen_values = true)]
    mass: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    hbar: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    omega: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    half_width: Option<f64>,
    /// Grid points of the solution pair.
    #[arg(long)]
    points: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    l1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    l2: Option<f64>,
}

#[derive(Args, Default)]
struct QuantizeArgs {
    #[arg(long)]
    count: Option<usize>,
    #[command(flatten)]
    well: WellArgs,
}

#[derive(Args, Default)]
struct MomentumFieldArgs {
    /// Level index n (0 = ground state).
    #[arg(long)]
    level: Option<usize>,
    #[command(flatten)]
    well: WellArgs,
}

#[derive(Args, Default)]
struct HomechArgs {
    #[arg(long, allow_hyphen_values = true)]
    eps1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    eps2: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    energy: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    mass: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    hbar: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    periods: Option<f64>,
    #[arg(long)]
    samples_per_period: Option<usize>,
}

#[derive(Args, Default)]
struct AngularArgs {
    #[arg(long, allow_hyphen_values = true)]
    c1_re: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    c1_im: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    c2_re: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    c2_im: Option<f64>,
    /// Magnetic quantum number (may be non-integer).
    #[arg(long, allow_hyphen_values = true)]
    m: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    hbar: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Args, Default)]
struct BiprismFieldArgs {
    /// Beam centre (mm).
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<f64>,
    /// Distance behind the biprism (mm).
    #[arg(long, allow_hyphen_values = true)]
    z: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    z_max: Option<f64>,
    #[arg(long)]
    z_steps: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    x_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    x_max: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long, value_parser = parse_open)]
    open: Option<OpenSlots>,
}

fn parse_open(s: &str) -> Result<OpenSlots, String> {
    match s {
        "both" => Ok(OpenSlots::Both),
        "lower" => Ok(OpenSlots::Lower),
        "upper" => Ok(OpenSlots::Upper),
        _ => Err(format!("expected both, lower or upper (got {s})")),
    }
}

#[derive(Args, Default)]
struct BiprismRunArgs {
    #[arg(long, allow_hyphen_values = true)]
    z_init: Option<f64>,
    /// Uniform z samples stored per path.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    rtol: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    atol: Option<f64>,
    /// Skip the per-trajectory path table.
    #[arg(long)]
    no_paths: bool,
}

#[derive(Args, Default)]
struct VisibilityArgs {
    #[arg(long, allow_hyphen_values = true)]
    fv: Option<f64>,
}

/// Copy every flag that was given onto the matching parameter.
macro_rules! merge {
    ($dst:expr, $src:expr; $($f:ident),* $(,)?) => {
        $( if let Some(v) = $src.$f { $dst.$f = v; } )*
    };
}

/// Fold the subcommand's flags into the configuration and name the experiment.
fn apply(cmd: &Command, cfg: &mut ExperimentConfig) -> Result<Option<Experiment>> {
    Ok(Some(match cmd {
        Command::Quantize(a) => {
            let p = &mut cfg.quantize;
            merge!(p, a; count);
            merge!(p, a.well; potential, mass, hbar, omega, half_width, points, l1, l2);
            Experiment::Quantize
        }
        Command::MomentumField(a) => {
            let p = &mut cfg.momentum_field;
            merge!(p, a; level);
            merge!(p, a.well; potential, mass, hbar, omega, half_width, points, l1, l2);
            Experiment::MomentumField
        }
        Command::Homech(a) => {
            merge!(cfg.homech, a; eps1, eps2, energy, mass, hbar, periods, samples_per_period);
            Experiment::Homech
        }
        Command::Angular(a) => {
            let p = &mut cfg.angular;
            merge!(p, a; m, hbar, points);
            let [c1, c2] = [&mut p.c1, &mut p.c2];
            for (src, dst) in [(a.c1_re, &mut c1[0]), (a.c2_re, &mut c2[0])] {
                if let Some(v) = src {
                    *dst = v;
                }
            }
            for (src, dst) in [(a.c1_im, &mut c1[1]), (a.c2_im, &mut c2[1])] {
                if let Some(v) = src {
                    *dst = v;
                }
            }
            Experiment::Angular
        }
        Command::BiprismField(a) => {
            merge!(cfg.biprism_field, a; x0, z, z_max, z_steps, x_min, x_max, points, open);
            Experiment::BiprismField
        }
        Command::BiprismRun(a) => {
            merge!(cfg.biprism_run, a; z_init, samples, rtol, atol);
            if a.no_paths {
                cfg.biprism_run.write_paths = false;
            }
            Experiment::BiprismRun
        }
        Command::Visibility(a) => {
            merge!(cfg.visibility, a; fv);
            Experiment::Visibility
        }
        Command::Run => match cfg.experiment {
            Some(e) => e,
            None => bail!("`run` needs `experiment = \"...\"` in the config file"),
        },
        Command::Validate => return Ok(None),
    }))
}

fn params_json(cfg: &ExperimentConfig, e: Experiment) -> Result<serde_json::Value> {
    let v = match e {
        Experiment::Quantize => serde_json::to_value(&cfg.quantize)?,
        Experiment::MomentumField => serde_json::to_value(&cfg.momentum_field)?,
        Experiment::Homech => serde_json::to_value(&cfg.homech)?,
        Experiment::Angular => serde_json::to_value(&cfg.angular)?,
        Experiment::BiprismField => serde_json::json!({
            "field": cfg.biprism_field, "geometry": cfg.geometry, "beam": cfg.beam,
        }),
        Experiment::BiprismRun => serde_json::json!({
            "run": cfg.biprism_run, "geometry": cfg.geometry, "beam": cfg.beam,
        }),
        Experiment::Visibility => serde_json::to_value(&cfg.visibility)?,
    };
    Ok(v)
}

fn execute(cli: Cli) -> Result<()> {
    let raw: Option<toml::Table> = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
            Some(toml::from_str(&text).with_context(|| format!("malformed configuration {}", path.display()))?)
        }
        None => None,
    };
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };

    if let Command::Validate = cli.command {
        let diags = validate::validate(&cfg, raw.as_ref(), cli.tolerance);
        emit(&serde_json::json!({ "schema_version": output::SCHEMA_VERSION, "diagnostics": diags }))?;
        return Ok(());
    }

    let experiment = apply(&cli.command, &mut cfg)?.expect("validate handled above");
    let tolerance = cli.tolerance.or(cfg.tolerance);
    if let Some(t) = tolerance {
        check_positive("tolerance", t)?;
    }
    let threads = cli.threads.or(cfg.threads);
    if let Some(n) = threads {
        anyhow::ensure!(n > 0, "threads must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("thread pool")?;
    }
    let out_dir = cli.out_dir.clone().or(cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));

    let artifacts = match experiment {
        Experiment::Quantize => experiments::quantize(&cfg.quantize),
        Experiment::MomentumField => experiments::momentum_field(&cfg.momentum_field),
        Experiment::Homech => experiments::homech(&cfg.homech, tolerance.unwrap_or(1e-12)),
        Experiment::Angular => experiments::angular(&cfg.angular),
        Experiment::BiprismField => experiments::biprism_field(&cfg.biprism_field, &cfg.geometry, &cfg.beam, tolerance),
        Experiment::BiprismRun => experiments::biprism_run(&cfg.biprism_run, &cfg.geometry, &cfg.beam, tolerance),
        Experiment::Visibility => experiments::visibility(&cfg.visibility),
    }
    .with_context(|| format!("{} failed", experiment.name()))?;
    let doc = output::write(&out_dir, &experiment.stem(), experiment.name(), params_json(&cfg, experiment)?, &artifacts)?;
    emit(&doc)
}

/// Print a JSON document to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(doc: &serde_json::Value) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{}", serde_json::to_string_pretty(doc)?) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
