//! Run configuration: JSON file, command-line overrides and validation.

use std::path::{Path, PathBuf};

use confinv::catalog::{mobius_apply, parse_generator, parse_surface, MobiusTransform, SurfaceSpec};
use confinv::energies::EnergyPreset;
use confinv::identities::{default_surfaces, Category, SuiteConfig};
use confinv::noether::LagrangianSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Energy,
    Invariants,
    Verify,
    Discover,
    Noether,
    ExteriorSuite,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Energy => "energy",
            Command::Invariants => "invariants",
            Command::Verify => "verify",
            Command::Discover => "discover",
            Command::Noether => "noether",
            Command::ExteriorSuite => "exterior-suite",
            Command::Report => "report",
        }
    }
}

/// Every key accepted in a config file. Flags fill the same structure and
/// take precedence key by key.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub surface: Option<String>,
    pub surfaces: Option<Vec<String>>,
    pub preset: Option<String>,
    pub lagrangians: Option<Vec<String>>,
    pub grid: Option<usize>,
    pub points: Option<usize>,
    pub frames: Option<usize>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub tolerance: Option<f64>,
    pub variational: Option<bool>,
    pub discovery: Option<bool>,
    pub with_q: Option<bool>,
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub store: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($f:ident),*) => {
        FileConfig { $($f: $top.$f.or($base.$f)),* }
    };
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// `self` overridden by every key set in `top`.
    pub fn overlay(self, top: FileConfig) -> FileConfig {
        overlay!(
            self, top, surface, surfaces, preset, lagrangians, grid, points, frames, samples, seed, tolerance, variational, discovery,
            with_q, out, csv, store
        )
    }
}

pub const DEFAULT_GRID: usize = 16;
pub const MIN_GRID: usize = 4;

/// The values that determine a run's results; output paths are excluded
/// so that they do not change the content hash.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub command: Command,
    pub surfaces: Vec<String>,
    pub preset: Option<String>,
    pub lagrangians: Vec<String>,
    pub grid: usize,
    pub points: usize,
    pub frames: usize,
    pub samples: usize,
    pub seed: u64,
    pub tolerance: Option<f64>,
    pub variational: bool,
    pub discovery: bool,
    pub with_q: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outputs {
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub store: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct Resolved {
    pub settings: Settings,
    pub outputs: Outputs,
    pub specs: Vec<SurfaceSpec>,
}

/// `kind:args` optionally followed by `@generator` Möbius factors applied
/// left to right, e.g. `torus:2,1@inv:0,0,0,0,4@dil:1.3`.
pub fn parse_surface_arg(s: &str) -> Result<SurfaceSpec, CliError> {
    let mut parts = s.split('@');
    let base = parse_surface(parts.next().unwrap_or_default()).map_err(|e| CliError::Config(format!("surface {s:?}: {e}")))?;
    let gens = parts.map(parse_generator).collect::<Result<Vec<_>, _>>().map_err(|e| CliError::Config(format!("surface {s:?}: {e}")))?;
    if gens.is_empty() {
        return Ok(base);
    }
    let t = MobiusTransform::new(gens).map_err(|e| CliError::Config(format!("surface {s:?}: {e}")))?;
    mobius_apply(&t, &base).map_err(|e| CliError::Config(format!("surface {s:?}: {e}")))
}

fn positive(name: &str, v: usize, min: usize) -> Result<usize, CliError> {
    if v < min {
        return Err(CliError::Config(format!("{name} must be at least {min}, got {v}")));
    }
    Ok(v)
}

/// Validates everything before any computation starts.
pub fn resolve(command: Command, c: FileConfig) -> Result<Resolved, CliError> {
    let single = matches!(command, Command::Energy | Command::Invariants);
    let specs: Vec<SurfaceSpec> = if single {
        match &c.surface {
            Some(s) => vec![parse_surface_arg(s)?],
            None => return Err(CliError::Config(format!("{} needs a surface", command.name()))),
        }
    } else {
        match &c.surfaces {
            None => default_surfaces(),
            Some(list) if list.len() == 1 && list[0] == "default" => default_surfaces(),
            Some(list) if list.is_empty() => return Err(CliError::Config("surfaces list is empty".into())),
            Some(list) => list.iter().map(|s| parse_surface_arg(s)).collect::<Result<_, _>>()?,
        }
    };
    let preset = match (&c.preset, command) {
        (Some(p), _) => Some(EnergyPreset::parse(p).map_err(|e| CliError::Config(e.to_string()))?.to_string()),
        (None, Command::Energy) => return Err(CliError::Config("energy needs a preset".into())),
        (None, _) => None,
    };
    let lagrangians: Vec<String> = match &c.lagrangians {
        Some(list) => list
            .iter()
            .map(|l| LagrangianSpec::parse(l).map(|x| x.to_string()).map_err(|e| CliError::Config(e.to_string())))
            .collect::<Result<_, _>>()?,
        None => SuiteConfig::default().lagrangians.iter().map(|l| l.to_string()).collect(),
    };
    if let Some(t) = c.tolerance {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::Config(format!("tolerance must be positive and finite, got {t}")));
        }
    }
    let defaults = SuiteConfig::default();
    let settings = Settings {
        command,
        surfaces: specs.iter().map(|s| s.label()).collect(),
        preset,
        lagrangians,
        grid: positive("grid", c.grid.unwrap_or(DEFAULT_GRID), MIN_GRID)?,
        points: positive("points", c.points.unwrap_or(defaults.points), 1)?,
        frames: positive("frames", c.frames.unwrap_or(defaults.noether_points), 1)?,
        samples: positive("samples", c.samples.unwrap_or(defaults.exterior_samples), 1)?,
        seed: c.seed.unwrap_or(defaults.seed),
        tolerance: c.tolerance,
        variational: c.variational.unwrap_or(false),
        discovery: c.discovery.unwrap_or(false),
        with_q: c.with_q.unwrap_or(false),
    };
    Ok(Resolved { settings, outputs: Outputs { out: c.out, csv: c.csv, store: c.store }, specs })
}

impl Resolved {
    pub fn suite_config(&self) -> SuiteConfig {
        let s = &self.settings;
        let categories = match s.command {
            Command::Discover => vec![Category::Discovery],
            Command::Noether => vec![Category::Noether],
            Command::ExteriorSuite => vec![Category::Exterior],
            _ => {
                let mut c = Category::ALL[..4].to_vec();
                if s.discovery {
                    c.push(Category::Discovery);
                }
                c
            }
        };
        SuiteConfig {
            surfaces: self.specs.clone(),
            grid: s.grid,
            points: s.points,
            noether_points: s.frames,
            exterior_samples: s.samples,
            seed: s.seed,
            tolerance_override: s.tolerance,
            categories,
            variational: s.variational,
            lagrangians: s.lagrangians.iter().map(|l| LagrangianSpec::parse(l).expect("validated")).collect(),
        }
    }
}
