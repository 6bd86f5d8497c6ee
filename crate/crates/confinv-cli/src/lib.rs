//! `confinv` command-line front end.
//!
//! Exit codes: 0 when every requested verdict is PASS, 2 when any row is a
//! DISCREPANCY, 1 on usage, configuration or I/O errors.

pub mod config;
pub mod store;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use confinv::energies::{combine_two_grid, two_grid, EnergyPreset};
use confinv::identities::{run_suite, VerificationReport};
use confinv::shape::INVARIANT_NAMES;

use config::{resolve, Command, FileConfig, Resolved};
use store::RunRecord;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("computation failed: {0}")]
    Compute(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_DISCREPANCY: i32 = 2;

/// Shown after usage errors.
pub const CONFIG_HELP: &str = "\
Config file (--config FILE, JSON object; command-line flags override its keys):
  surface      string     energy, invariants: one surface
  surfaces     [string]   suite commands: [\"default\"] or a list of surfaces
  preset       string     EA, EA_recovered, EB, EB_printed, EC, W2, Q, E3:mu,lambda,sigma, generic:a1,...,a7
  lagrangians  [string]   variational rows: H4, tr_h04, grad_H_sq, grad_h_sq, H2_h2, h0_4, det_h, ...
  grid         integer    quadrature nodes per axis (>= 4, default 16)
  points       integer    random points per surface for pointwise rows (default 100)
  frames       integer    points per surface for Noether and exterior frames (default 4)
  samples      integer    random algebraic inputs per surface for exterior rows (default 100)
  seed         integer    random seed (default 1)
  tolerance    number     replaces every row tolerance
  variational  bool       add the variational Noether rows
  discovery    bool       verify: add the identity-discovery rows
  with_q       bool       invariants: include Q-curvature (order-4 jets)
  out          path       JSON report
  csv          path       CSV residual table
  store        path       directory of content-addressed run records
Surfaces: sphere:r, ellipsoid:a1,...,a5, torus:R,r, graph:A, flat, each optionally
followed by Möbius factors @inv:c1,...,c5, @dil:s, @tr:v1,...,v5, @rot:i,j,angle.
The full report and record schema is in schema.json.";

#[derive(Debug, Parser)]
#[command(name = "confinv", version, about = "Verify curvature identities of hypersurfaces in R^5", after_help = CONFIG_HELP)]
struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Integrate an energy preset over one surface.
    Energy(EnergyArgs),
    /// Integrals of the fourteen curvature invariants over one surface.
    Invariants(InvariantArgs),
    /// Run the pointwise, integral, Noether and exterior identity checks.
    Verify(SuiteArgs),
    /// Nullspace discovery of linear integral identities over the default family.
    Discover(SuiteArgs),
    /// Noether field, trace and optional variational checks.
    Noether(SuiteArgs),
    /// Exterior algebra and contraction identities.
    ExteriorSuite(SuiteArgs),
    /// List stored runs with verdict summaries.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct EnergyArgs {
    #[arg(long)]
    surface: Option<String>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    grid: Option<usize>,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct InvariantArgs {
    #[arg(long)]
    surface: Option<String>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    with_q: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct SuiteArgs {
    /// `default` or a `;`-separated list of surfaces.
    #[arg(long)]
    surfaces: Option<String>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    variational: bool,
    #[arg(long)]
    discovery: bool,
    /// Lagrangian for the variational rows; repeatable.
    #[arg(long = "lagrangian")]
    lagrangians: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    store: Option<PathBuf>,
    /// Only print the summary line.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    store: Option<PathBuf>,
}

fn flag(b: bool) -> Option<bool> {
    b.then_some(true)
}

impl SuiteArgs {
    fn overrides(&self) -> FileConfig {
        FileConfig {
            surfaces: self.surfaces.as_ref().map(|s| s.split(';').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()),
            grid: self.grid,
            points: self.points,
            frames: self.frames,
            samples: self.samples,
            seed: self.seed,
            tolerance: self.tolerance,
            variational: flag(self.variational),
            discovery: flag(self.discovery),
            lagrangians: (!self.lagrangians.is_empty()).then(|| self.lagrangians.clone()),
            out: self.out.clone(),
            csv: self.csv.clone(),
            store: self.store.clone(),
            ..Default::default()
        }
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code. Output goes to `stdout`, diagnostics to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    if args.len() <= 1 {
        let _ = writeln!(stderr, "{}", Cli::command_help());
        return EXIT_ERROR;
    }
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = write!(stdout, "{e}");
            return EXIT_PASS;
        }
        Err(e) => {
            let _ = write!(stderr, "{e}");
            let _ = writeln!(stderr, "\n{CONFIG_HELP}");
            return EXIT_ERROR;
        }
    };
    match dispatch(cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if matches!(e, CliError::Usage(_) | CliError::Config(_)) {
                let _ = writeln!(stderr, "\n{CONFIG_HELP}");
            }
            EXIT_ERROR
        }
    }
}

impl Cli {
    fn command_help() -> String {
        use clap::CommandFactory;
        Cli::command().render_help().to_string()
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let (command, flags, quiet) = match &cli.command {
        Cmd::Energy(a) => (
            Command::Energy,
            FileConfig { surface: a.surface.clone(), preset: a.preset.clone(), grid: a.grid, ..Default::default() },
            false,
        ),
        Cmd::Invariants(a) => {
            (Command::Invariants, FileConfig { surface: a.surface.clone(), grid: a.grid, with_q: flag(a.with_q), ..Default::default() }, false)
        }
        Cmd::Verify(a) => (Command::Verify, a.overrides(), a.quiet),
        Cmd::Discover(a) => (Command::Discover, a.overrides(), a.quiet),
        Cmd::Noether(a) => (Command::Noether, a.overrides(), a.quiet),
        Cmd::ExteriorSuite(a) => (Command::ExteriorSuite, a.overrides(), a.quiet),
        Cmd::Report(a) => (Command::Report, FileConfig { store: a.store.clone(), ..Default::default() }, false),
    };
    let merged = file.overlay(flags);
    if command == Command::Report {
        let dir = merged.store.ok_or_else(|| CliError::Usage("report needs --store DIR".into()))?;
        return list_runs(&dir, out);
    }
    let r = resolve(command, merged)?;
    match command {
        Command::Energy => energy(&r, matches!(cli.command, Cmd::Energy(EnergyArgs { json: true, .. })), out),
        Command::Invariants => invariants(&r, matches!(cli.command, Cmd::Invariants(InvariantArgs { json: true, .. })), out),
        _ => suite(&r, quiet, out),
    }
}

fn w(out: &mut dyn Write, text: std::fmt::Arguments) -> Result<(), CliError> {
    out.write_fmt(text).map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

fn energy(r: &Resolved, json: bool, out: &mut dyn Write) -> Result<i32, CliError> {
    let preset = EnergyPreset::parse(r.settings.preset.as_deref().expect("validated")).expect("validated");
    let spec = &r.specs[0];
    let pair = two_grid(spec, r.settings.grid, preset.needs_q()).map_err(|e| CliError::Compute(e.to_string()))?;
    let res = combine_two_grid(&pair, &preset.weights());
    if json {
        let v = serde_json::json!({
            "surface": spec.label(), "preset": preset.to_string(), "grid": res.n,
            "value": res.value, "error_estimate": res.error_estimate,
        });
        w(out, format_args!("{v}\n"))?;
    } else {
        w(out, format_args!("{} on {} at n={}: {:.12} (error estimate {:.3e})\n", preset, spec.label(), res.n, res.value, res.error_estimate))?;
    }
    Ok(EXIT_PASS)
}

fn invariants(r: &Resolved, json: bool, out: &mut dyn Write) -> Result<i32, CliError> {
    let spec = &r.specs[0];
    let (fine, coarse) = two_grid(spec, r.settings.grid, r.settings.with_q).map_err(|e| CliError::Compute(e.to_string()))?;
    let rows: Vec<(&str, f64, f64)> = INVARIANT_NAMES
        .iter()
        .zip(fine.values.iter().zip(&coarse.values))
        .filter(|(_, (f, _))| !f.is_nan())
        .map(|(n, (f, c))| (*n, *f, (f - c).abs()))
        .collect();
    if json {
        let v = serde_json::json!({
            "surface": spec.label(), "grid": fine.n, "volume": fine.volume,
            "integrals": rows.iter().map(|(n, f, e)| serde_json::json!({"name": n, "value": f, "error_estimate": e})).collect::<Vec<_>>(),
        });
        w(out, format_args!("{v}\n"))?;
    } else {
        w(out, format_args!("{} at n={}, volume {:.12}\n", spec.label(), fine.n, fine.volume))?;
        for (n, f, e) in rows {
            w(out, format_args!("  {n:<8} {f:>22.12} ± {e:.2e}\n"))?;
        }
    }
    Ok(EXIT_PASS)
}

fn suite(r: &Resolved, quiet: bool, out: &mut dyn Write) -> Result<i32, CliError> {
    let report = run_suite(&r.suite_config());
    if !quiet {
        for row in &report.rows {
            let res = row.residual.map_or("error".to_string(), |x| format!("{x:.3e}"));
            w(out, format_args!("{:<11} {:<45} residual {:>9} tolerance {:.0e}\n", row.verdict.to_string(), row.id, res, row.tolerance))?;
            if let Some(e) = &row.error {
                w(out, format_args!("            {e}\n"))?;
            }
        }
        if let Some(row) = report.get("discovery_rational_basis") {
            if let Some(note) = &row.note {
                w(out, format_args!("\ndiscovered identities:\n"))?;
                for eq in note.split("; ") {
                    w(out, format_args!("  {eq}\n"))?;
                }
            }
        }
    }
    if let Some(p) = &r.outputs.out {
        write_file(p, &report_json(&report))?;
    }
    if let Some(p) = &r.outputs.csv {
        write_file(p, &report_csv(&report)?)?;
    }
    let mut stored = None;
    if let Some(dir) = &r.outputs.store {
        stored = Some(store::persist(&RunRecord::new(r.settings.clone(), report.clone()), dir)?);
    }
    w(out, format_args!("{}: {} passed, {} discrepancies\n", r.settings.command.name(), report.meta.passed, report.meta.discrepancies))?;
    if let Some(p) = stored {
        w(out, format_args!("run stored at {}\n", p.display()))?;
    }
    Ok(if report.all_pass() { EXIT_PASS } else { EXIT_DISCREPANCY })
}

fn write_file(p: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(p, text).map_err(|e| CliError::io(p, e))
}

pub fn report_json(report: &VerificationReport) -> String {
    serde_json::to_string_pretty(report).expect("report serialises") + "\n"
}

pub const CSV_HEADER: [&str; 6] = ["id", "surface", "grid", "residual", "order", "verdict"];

/// One line per row and surface; rows without per-surface data get one
/// line with an empty surface.
pub fn report_csv(report: &VerificationReport) -> Result<String, CliError> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let bad = |e: csv::Error| CliError::Compute(format!("csv: {e}"));
    wtr.write_record(CSV_HEADER).map_err(bad)?;
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:e}"));
    for row in &report.rows {
        let grid = row.grid.map_or(String::new(), |g| g.to_string());
        let verdict = row.verdict.to_string();
        if row.details.is_empty() {
            wtr.write_record([row.id.as_str(), "", &grid, &opt(row.residual), &opt(row.convergence_order), &verdict]).map_err(bad)?;
        }
        for d in &row.details {
            let res = format!("{:e}", d.residual);
            wtr.write_record([row.id.as_str(), &d.surface, &grid, &res, &opt(d.convergence_order), &verdict]).map_err(bad)?;
        }
    }
    let bytes = wtr.into_inner().map_err(|e| CliError::Compute(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

fn list_runs(dir: &Path, out: &mut dyn Write) -> Result<i32, CliError> {
    let runs = store::list(dir)?;
    if runs.is_empty() {
        w(out, format_args!("no runs stored in {}\n", dir.display()))?;
    }
    for (path, rec) in runs {
        let m = &rec.report.meta;
        let verdict = if m.discrepancies == 0 { "PASS" } else { "DISCREPANCY" };
        w(
            out,
            format_args!(
                "{}  {}  {:<14} {}/{} passed  {:<11}  {}\n",
                &rec.config_hash[..store::HASH_PREFIX],
                rec.timestamp,
                rec.settings.command.name(),
                m.passed,
                m.passed + m.discrepancies,
                verdict,
                path.display()
            ),
        )?;
    }
    Ok(EXIT_PASS)
}
