//! Command-line front end: one subcommand per library operation, deterministic data
//! files, and a checksummed run manifest.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::asymptotics::{companion_fit, decay_constants, fit_oscillation, matching_constants};
use crate::error::Error;
use crate::evolve::{intersection_audit, run_flow, write_archive, AuditReference, FlowTrajectory, SchemeConfig};
use crate::functionals::{
    catenoid, density_trace, first_variation, gauss_bonnet_audit, gaussian_density, kernel_identity_residual,
    plane_density, total_curvature, Direction, Functional, HeatKernelSpec,
};
use crate::geometry::{FlowParams, ProfileCurve};
use crate::ode::{default_r0, integrate_profile, series_start, EquationKind, IntegratorConfig, TerminationEvent};
use crate::shooting::{
    alpha_curve, companion, count_continuations, critical_angle, expander_slope, find_shrinkers, log_grid,
    shrinker_profile, triple_junction, ExpanderRecord, ShrinkerRecord,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

const DEFAULT_OUT: &str = "selfsim-out";
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParams(_) | Error::AxisPoint { .. } | Error::InvalidBracket(_) | Error::OutOfRange(_) | Error::Parse(_) => {
                EXIT_USAGE
            }
            Error::Io(_) => EXIT_IO,
            _ => EXIT_NUMERICAL,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self { code: EXIT_IO, message: e.to_string() }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self { code: EXIT_IO, message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "selfsim", version, about = "Self-similar solutions of mean curvature flow with SO(p)xSO(q) symmetry")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    #[command(flatten)]
    pub common: Common,
    /// Re-run the command recorded in a manifest and report checksum drift.
    #[arg(long, value_name = "MANIFEST")]
    pub verify: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    #[arg(long, global = true)]
    pub p: Option<usize>,
    #[arg(long, global = true)]
    pub q: Option<usize>,
    /// Ambient dimension; with --axis (or alone, for rotation-only commands) p = 1.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub axis: bool,
    #[arg(long, global = true)]
    pub rmax: Option<f64>,
    /// Relative integrator tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true, env = "SELFSIM_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum FlowPreset {
    Sphere,
    Cylinder,
    Shrinker,
    Expander,
    Ellipse,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FlowArgs {
    #[arg(long, value_enum, default_value_t = FlowPreset::Sphere)]
    pub preset: FlowPreset,
    /// Initial profile from a CSV file (s,r,u,theta,k), replacing the preset.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Initial radius of sphere and cylinder presets.
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    /// Shrinker index of the shrinker preset.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Axis height of the expander preset.
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub t_start: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub t_end: Option<f64>,
    #[arg(long, default_value_t = 200)]
    pub markers: usize,
    #[arg(long)]
    pub snapshot_dt: Option<f64>,
    #[arg(long, default_value_t = 0.4)]
    pub dt_safety: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum AuditKind {
    /// The static minimal companion profile.
    Companion,
    /// The rescaled shrinker √(−t)·N^k.
    Shrinker,
    /// The minimal cone u = λ_s r.
    Cone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum DensityPreset {
    Sphere,
    Cylinder,
    Plane,
    Shrinker,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum FunctionalArg {
    J,
    K,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum VariationPreset {
    Shrinker,
    Expander,
    Sphere,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum SurfacePreset {
    Sphere,
    Catenoid,
    Torus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum CurvePreset {
    Circle,
    Ellipse,
    TwoCircles,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
pub enum Command {
    /// Minimal profile from (0, 1) and its phase-plane spiral.
    Companion,
    /// Asymptotic slope of the expander from (0, a).
    Expander {
        #[arg(long)]
        a: f64,
    },
    /// Expander slopes over a log grid of a.
    AlphaCurve {
        #[arg(long, default_value_t = 1e-4)]
        lo: f64,
        #[arg(long, default_value_t = 1e-1)]
        hi: f64,
        #[arg(long, default_value_t = 400)]
        per_decade: usize,
    },
    /// Smallest aperture of rotationally symmetric expanders (p = 1).
    CriticalAngle,
    /// Shrinkers N^1..N^kmax by shooting.
    Shrinkers {
        #[arg(long, default_value_t = 6)]
        kmax: usize,
    },
    /// Expanders asymptotic to the cone of aperture alpha (or of the k-th shrinker).
    Continuations {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Symmetric triple junction of a shrinker network (p = q).
    TripleJunction,
    /// Decay constants and matching constants.
    Constants,
    /// Oscillatory fit of a profile's deviation from the cone.
    Fit {
        /// Profile CSV (s,r,u,theta,k); the companion when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        window: Option<Vec<f64>>,
    },
    /// Run the reduced flow and archive snapshots.
    Evolve {
        #[command(flatten)]
        flow: FlowArgs,
    },
    /// Intersection counts of a flow against a reference curve.
    AuditIntersections {
        #[command(flatten)]
        flow: FlowArgs,
        #[arg(long, value_enum, default_value_t = AuditKind::Companion)]
        reference: AuditKind,
    },
    /// Gaussian density of an exact self-similar solution at several times.
    Density {
        #[arg(long, value_enum, default_value_t = DensityPreset::Sphere)]
        preset: DensityPreset,
        #[arg(long, num_args = 1.., default_values_t = [-1.0, -0.5, -0.25, -0.1], allow_negative_numbers = true)]
        times: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        k: usize,
    },
    /// Gaussian density along an evolved flow.
    DensityTrace {
        #[command(flatten)]
        flow: FlowArgs,
        #[arg(long, allow_negative_numbers = true)]
        t0: Option<f64>,
        #[arg(long, num_args = 2, value_names = ["R0", "U0"], allow_negative_numbers = true)]
        x0: Option<Vec<f64>>,
    },
    /// Residual of the heat-kernel identity over random points and planes.
    KernelCheck {
        #[arg(long, default_value_t = 1000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4.0)]
        spread: f64,
    },
    /// Finite-difference first variation of J or K.
    FirstVariation {
        #[arg(long, value_enum, default_value_t = FunctionalArg::J)]
        functional: FunctionalArg,
        #[arg(long, value_enum, default_value_t = VariationPreset::Shrinker)]
        preset: VariationPreset,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value_t = 2.0)]
        radius: f64,
        /// Bump centre as a fraction of the curve length.
        #[arg(long, default_value_t = 0.3)]
        center: f64,
        /// Bump half-width as a fraction of the curve length.
        #[arg(long, default_value_t = 0.2)]
        width: f64,
        #[arg(long, default_value_t = 1e-3)]
        h: f64,
    },
    /// Localized Gauss-Bonnet audit for surfaces of revolution in R^3.
    GaussBonnet {
        #[arg(long, value_enum, default_value_t = SurfacePreset::Sphere)]
        preset: SurfacePreset,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Total curvature of closed curves.
    TotalCurvature {
        #[arg(long, value_enum, default_value_t = CurvePreset::Circle)]
        preset: CurvePreset,
        /// Closed polygon CSV (x,y), replacing the preset.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Companion => "companion",
            Command::Expander { .. } => "expander",
            Command::AlphaCurve { .. } => "alpha-curve",
            Command::CriticalAngle => "critical-angle",
            Command::Shrinkers { .. } => "shrinkers",
            Command::Continuations { .. } => "continuations",
            Command::TripleJunction => "triple-junction",
            Command::Constants => "constants",
            Command::Fit { .. } => "fit",
            Command::Evolve { .. } => "evolve",
            Command::AuditIntersections { .. } => "audit-intersections",
            Command::Density { .. } => "density",
            Command::DensityTrace { .. } => "density-trace",
            Command::KernelCheck { .. } => "kernel-check",
            Command::FirstVariation { .. } => "first-variation",
            Command::GaussBonnet { .. } => "gauss-bonnet",
            Command::TotalCurvature { .. } => "total-curvature",
        }
    }
}

/// Record of one invocation; written last, atomically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, without --out.
    pub argv: Vec<String>,
    pub params: Option<FlowParams>,
    pub config: Value,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub code_version: String,
    pub outputs: Vec<String>,
    pub checksums: Vec<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects output files and their checksums.
struct Outputs {
    dir: PathBuf,
    names: Vec<String>,
    checksums: Vec<String>,
}

impl Outputs {
    fn new(dir: PathBuf) -> CliResult<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, names: Vec::new(), checksums: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.record(name, bytes);
        Ok(())
    }

    fn record(&mut self, name: &str, bytes: &[u8]) {
        self.names.push(name.to_string());
        self.checksums.push(sha256_hex(bytes));
    }

    fn json(&mut self, name: &str, value: &Value) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write(name, text.as_bytes())
    }

    fn curve(&mut self, name: &str, curve: &ProfileCurve) -> CliResult<()> {
        let mut buf = Vec::new();
        curve.write_csv(&mut buf)?;
        self.write(name, &buf)
    }

    /// A table as CSV or as a JSON array, per --format.
    fn table<T: Serialize>(&mut self, stem: &str, format: Format, header: &str, rows: &[String], items: &[T]) -> CliResult<()> {
        match format {
            Format::Csv => {
                let mut text = String::from(header);
                text.push('\n');
                for r in rows {
                    text.push_str(r);
                    text.push('\n');
                }
                self.write(&format!("{stem}.csv"), text.as_bytes())
            }
            Format::Json => self.json(&format!("{stem}_rows.json"), &serde_json::to_value(items)?),
        }
    }
}

/// Six significant digits for human summaries.
fn sig6(x: f64) -> String {
    if x == 0.0 || (1e-3..1e6).contains(&x.abs()) {
        let digits = (5 - x.abs().log10().floor().max(0.0) as i32).max(0) as usize;
        format!("{x:.digits$}")
    } else {
        format!("{x:.5e}")
    }
}

fn e17(x: f64) -> String {
    format!("{x:.16e}")
}

impl Common {
    fn integrator(&self) -> CliResult<IntegratorConfig> {
        let mut cfg = IntegratorConfig::default();
        if let Some(r) = self.rmax {
            cfg.r_max = r;
        }
        if let Some(t) = self.tol {
            cfg.rel_tol = t;
            cfg.abs_tol = t * 1e-2;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// (p, q) from the flags. `n_alone` decides how a bare --n is read.
    fn params(&self, n_alone: NAlone) -> CliResult<FlowParams> {
        let params = match (self.p, self.q, self.n) {
            (Some(p), Some(q), n) => {
                if n.is_some_and(|n| n != p + q) {
                    return Err(CliError::usage(format!("--n {} differs from --p + --q = {}", n.unwrap(), p + q)));
                }
                FlowParams::new(p, q)?
            }
            (Some(p), None, Some(n)) if n > p => FlowParams::new(p, n - p)?,
            (None, Some(q), Some(n)) if n > q => FlowParams::new(n - q, q)?,
            (None, None, Some(n)) if self.axis || n_alone == NAlone::Axial => FlowParams::axial(n)?,
            (None, None, Some(n)) if n_alone == NAlone::Balanced && n % 2 == 0 => FlowParams::new(n / 2, n / 2)?,
            (None, None, None) if self.axis => return Err(CliError::usage("--axis needs --n")),
            (None, None, None) => match n_alone {
                NAlone::Axial => FlowParams::axial(3)?,
                _ => FlowParams::new(2, 2)?,
            },
            _ => return Err(CliError::usage("give --p and --q, or --n with --axis")),
        };
        Ok(params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NAlone {
    /// --n means p = 1, q = n − 1.
    Axial,
    /// --n means p = q = n/2.
    Balanced,
    /// --n needs --axis.
    Explicit,
}

/// Parse `argv` (program name first) and run one subcommand; returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match run(&cli, &args) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn run(cli: &Cli, args: &[String]) -> CliResult<()> {
    if let Some(threads) = cli.common.threads {
        // a second build in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build_global();
    }
    if let Some(manifest) = &cli.verify {
        return verify(manifest);
    }
    let Some(command) = &cli.command else {
        return Err(CliError::usage("a subcommand is required (see --help)"));
    };
    let dir = cli.common.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let mut out = Outputs::new(dir.clone())?;
    let params = execute(command, &cli.common, &mut out)?;
    let manifest = RunManifest {
        command: command.name().to_string(),
        argv: strip_out(args),
        params,
        config: json!({ "common": cli.common, "command": command, "integrator": cli.common.integrator()? }),
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        outputs: out.names.clone(),
        checksums: out.checksums.clone(),
    };
    let tmp = dir.join(format!(".{MANIFEST}.tmp"));
    fs::write(&tmp, serde_json::to_string_pretty(&manifest)? + "\n")?;
    fs::rename(&tmp, dir.join(MANIFEST))?;
    Ok(())
}

fn strip_out(args: &[String]) -> Vec<String> {
    let mut kept = Vec::new();
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
            continue;
        }
        if a == "--out" {
            skip = true;
        } else if !a.starts_with("--out=") {
            kept.push(a.clone());
        }
    }
    kept
}

fn verify(path: &Path) -> CliResult<()> {
    let text = fs::read_to_string(path)?;
    let manifest: RunManifest = serde_json::from_str(&text)?;
    let scratch = std::env::temp_dir().join(format!("selfsim-verify-{}", std::process::id()));
    let mut argv = vec!["selfsim".to_string()];
    argv.extend(manifest.argv.iter().cloned());
    argv.push("--out".into());
    argv.push(scratch.to_string_lossy().into_owned());
    let cli = Cli::try_parse_from(&argv).map_err(|e| CliError::usage(e.to_string()))?;
    let result = run(&cli, &argv[1..]);
    let rerun = result.and_then(|_| Ok(serde_json::from_str::<RunManifest>(&fs::read_to_string(scratch.join(MANIFEST))?)?));
    let _ = fs::remove_dir_all(&scratch);
    let rerun = rerun?;
    let mut drift = Vec::new();
    for (name, sum) in manifest.outputs.iter().zip(&manifest.checksums) {
        match rerun.outputs.iter().position(|n| n == name) {
            Some(i) if &rerun.checksums[i] == sum => {}
            Some(_) => drift.push(format!("{name}: checksum changed")),
            None => drift.push(format!("{name}: not produced")),
        }
    }
    if drift.is_empty() {
        println!("verify: {} outputs reproduced", manifest.outputs.len());
        Ok(())
    } else {
        Err(CliError { code: EXIT_NUMERICAL, message: format!("drift in {} outputs: {}", drift.len(), drift.join("; ")) })
    }
}

fn expander_profile(a: f64, params: &FlowParams, cfg: &IntegratorConfig) -> CliResult<ProfileCurve> {
    let start = series_start(EquationKind::Expander, a, params, default_r0(a))?;
    Ok(integrate_profile(EquationKind::Expander, start, params, cfg)?)
}

fn shrinker_k(k: usize, params: &FlowParams, cfg: &IntegratorConfig) -> CliResult<(ShrinkerRecord, ProfileCurve)> {
    if k == 0 {
        return Err(CliError::usage("--k must be at least 1"));
    }
    let records = find_shrinkers(k, params, cfg)?;
    let rec = records
        .into_iter()
        .find(|r| r.k == k)
        .ok_or_else(|| CliError { code: EXIT_NUMERICAL, message: format!("shrinker N^{k} not found") })?;
    let curve = shrinker_profile(rec.a_k, params, cfg, false)?.truncated_r(rec.r_trust)?;
    Ok((rec, curve))
}

fn read_curve(path: &Path, params: FlowParams) -> CliResult<ProfileCurve> {
    let file = fs::File::open(path)?;
    Ok(ProfileCurve::read_csv(std::io::BufReader::new(file), params)?)
}

/// Initial curve and default time interval of a flow preset.
fn flow_setup(flow: &FlowArgs, params: &FlowParams, cfg: &IntegratorConfig) -> CliResult<(ProfileCurve, f64, f64)> {
    let (curve, t0, t1) = if let Some(path) = &flow.input {
        (read_curve(path, *params)?, 0.0, 0.1)
    } else {
        match flow.preset {
            FlowPreset::Sphere => {
                let life = flow.radius.powi(2) / (2.0 * (params.n as f64 - 1.0));
                (ProfileCurve::sphere(flow.radius, 400, *params)?, 0.0, 2.0 * life)
            }
            FlowPreset::Cylinder => {
                let life = flow.radius.powi(2) / (2.0 * params.qm1());
                let c = ProfileCurve::segment((0.0, flow.radius), 0.0, 4.0 * flow.radius, 100, *params)?;
                (c, 0.0, 0.75 * life)
            }
            FlowPreset::Shrinker => (shrinker_k(flow.k, params, cfg)?.1, -1.0, -0.25),
            FlowPreset::Expander => (expander_profile(flow.a, params, cfg)?, 1.0, 4.0),
            FlowPreset::Ellipse => {
                let pts: Vec<(f64, f64)> = (0..=400)
                    .map(|i| {
                        let f = std::f64::consts::FRAC_PI_2 * (1.0 - i as f64 / 400.0);
                        (1.5 * flow.radius * f.cos(), 0.8 * flow.radius * f.sin())
                    })
                    .collect();
                (ProfileCurve::from_polyline(&pts, *params, TerminationEvent::analytic())?, 0.0, 0.1 * flow.radius.powi(2))
            }
        }
    };
    Ok((curve, flow.t_start.unwrap_or(t0), flow.t_end.unwrap_or(t1)))
}

impl FlowArgs {
    /// Self-similar presets live in the cone setting and default to p = q = 2.
    fn n_alone(&self) -> NAlone {
        match self.preset {
            FlowPreset::Shrinker | FlowPreset::Expander if self.input.is_none() => NAlone::Explicit,
            _ => NAlone::Axial,
        }
    }
}

fn scheme(flow: &FlowArgs, t0: f64, t1: f64) -> SchemeConfig {
    SchemeConfig {
        dt_safety: flow.dt_safety,
        markers: flow.markers,
        snapshot_dt: flow.snapshot_dt.unwrap_or((t1 - t0) / 20.0),
        ..SchemeConfig::default()
    }
}

fn flow_summary(traj: &FlowTrajectory) -> Value {
    json!({
        "states": traj.states.len(),
        "t_first": traj.states.first().map(|s| s.t),
        "t_last": traj.last().t,
        "stop": traj.stop,
        "singular_time": traj.singular_time,
        "steps": traj.steps,
    })
}

fn execute(command: &Command, common: &Common, out: &mut Outputs) -> CliResult<Option<FlowParams>> {
    let cfg = common.integrator()?;
    let fmt = common.format;
    let name = command.name();
    match command {
        Command::Companion => {
            let params = common.params(NAlone::Explicit)?;
            let rep = companion(&params, &cfg)?;
            out.curve("companion_profile.csv", &rep.curve)?;
            out.json(
                "companion.json",
                &json!({
                    "crossings": rep.crossings,
                    "tangencies": rep.tangencies,
                    "final_phase": [rep.final_phase.0, rep.final_phase.1],
                    "phase_distance": rep.phase_distance,
                }),
            )?;
            println!("companion: {} crossings, phase distance {}", rep.crossings, sig6(rep.phase_distance));
            Ok(Some(params))
        }
        Command::Expander { a } => {
            let params = common.params(NAlone::Explicit)?;
            let rec = expander_slope(*a, &params, &cfg)?;
            out.curve("expander_profile.csv", &expander_profile(*a, &params, &cfg)?)?;
            out.json("expander.json", &serde_json::to_value(&rec)?)?;
            println!("expander a = {}: lambda = {} (+/- {})", sig6(*a), sig6(rec.lambda_a), sig6(rec.error_bar));
            Ok(Some(params))
        }
        Command::AlphaCurve { lo, hi, per_decade } => {
            let params = common.params(NAlone::Explicit)?;
            if !(*lo > 0.0 && hi > lo) || *per_decade == 0 {
                return Err(CliError::usage("need 0 < lo < hi and per-decade >= 1"));
            }
            let recs = alpha_curve(&log_grid(*lo, *hi, *per_decade), &params, &cfg)?;
            write_records(out, name, fmt, &recs)?;
            let ok = recs.iter().filter(|r| r.status == crate::shooting::RecordStatus::Ok).count();
            out.json("alpha-curve.json", &json!({ "records": recs.len(), "ok": ok, "lo": lo, "hi": hi }))?;
            println!("alpha-curve: {} records ({} ok)", recs.len(), ok);
            Ok(Some(params))
        }
        Command::CriticalAngle => {
            let params = common.params(NAlone::Axial)?;
            let res = critical_angle(&params, &cfg)?;
            write_records(out, name, fmt, &res.sweep)?;
            let deg = res.alpha_crit.to_degrees();
            out.json(
                "critical-angle.json",
                &json!({
                    "n": params.n,
                    "alpha_crit": res.alpha_crit,
                    "alpha_crit_deg": deg,
                    "argmin_a": res.argmin_a,
                    "widened": res.widened,
                }),
            )?;
            println!("critical angle n = {}: {} deg at a = {}", params.n, sig6(deg), sig6(res.argmin_a));
            Ok(Some(params))
        }
        Command::Shrinkers { kmax } => {
            let params = common.params(NAlone::Explicit)?;
            let recs = find_shrinkers(*kmax, &params, &cfg)?;
            let rows: Vec<String> = recs
                .iter()
                .map(|r| {
                    format!(
                        "{},{},{},{},{},{},{}",
                        r.k,
                        e17(r.a_k),
                        e17(r.alpha_k),
                        e17(r.slope_gap),
                        e17(r.bracket_width),
                        r.crossings,
                        e17(r.r_trust)
                    )
                })
                .collect();
            out.table("shrinkers", fmt, "k,a_k,alpha_k,slope_gap,bracket_width,crossings,r_trust", &rows, &recs)?;
            for r in &recs {
                println!("N^{}: a = {}, tan(alpha) - lambda_s = {}, crossings {}", r.k, sig6(r.a_k), sig6(r.slope_gap), r.crossings);
            }
            Ok(Some(params))
        }
        Command::Continuations { k, alpha } => {
            let params = common.params(NAlone::Explicit)?;
            let alpha = match (k, alpha) {
                (_, Some(a)) => *a,
                (Some(k), None) => shrinker_k(*k, &params, &cfg)?.0.alpha_k,
                (None, None) => return Err(CliError::usage("give --k or --alpha")),
            };
            let rep = count_continuations(alpha, &params, &cfg)?;
            write_records(out, name, fmt, &rep.records)?;
            out.json("continuations.json", &json!({ "alpha": rep.alpha, "count": rep.count, "lower_bound": rep.lower_bound }))?;
            println!("continuations of alpha = {}: {}", sig6(alpha), rep.count);
            Ok(Some(params))
        }
        Command::TripleJunction => {
            let params = common.params(NAlone::Balanced)?;
            let tj = triple_junction(&params, &cfg)?;
            out.json("triple-junction.json", &serde_json::to_value(&tj)?)?;
            println!("triple junction: a* = {}, b = {}", sig6(tj.a_star), sig6(tj.b));
            Ok(Some(params))
        }
        Command::Constants => {
            let params = common.params(NAlone::Explicit)?;
            let dc = decay_constants(params.n)?;
            let mc = matching_constants(&params, &cfg)?;
            out.json("constants.json", &json!({ "decay": dc, "matching": mc }))?;
            println!("beta = {}, mu = {}, D = {}, E = {}", sig6(dc.beta), sig6(dc.mu), sig6(mc.d), sig6(mc.e));
            Ok(Some(params))
        }
        Command::Fit { input, window } => {
            let params = common.params(NAlone::Explicit)?;
            let dc = decay_constants(params.n)?;
            let fit = match input {
                Some(path) => {
                    let w = window.as_ref().ok_or_else(|| CliError::usage("--window is required with --input"))?;
                    fit_oscillation(&read_curve(path, params)?, params.lambda_s()?, &dc, (w[0], w[1]))?
                }
                None => companion_fit(&params, &cfg)?,
            };
            out.json("fit.json", &serde_json::to_value(fit)?)?;
            println!("fit: A1 = {}, A2 = {}, residual {}", sig6(fit.a1), sig6(fit.a2), sig6(fit.residual_rms));
            Ok(Some(params))
        }
        Command::Evolve { flow } => {
            let params = common.params(flow.n_alone())?;
            let (init, t0, t1) = flow_setup(flow, &params, &cfg)?;
            let traj = run_flow(&init, t0, t1, &params, &scheme(flow, t0, t1))?;
            let dir = out.dir.join("evolve");
            for path in write_archive(&traj, &dir)? {
                let bytes = fs::read(&path)?;
                out.record(&format!("evolve/{}", path.file_name().unwrap().to_string_lossy()), &bytes);
            }
            out.json("evolve.json", &flow_summary(&traj))?;
            println!(
                "evolve: {} states to t = {}{}",
                traj.states.len(),
                sig6(traj.last().t),
                traj.singular_time.map(|t| format!(", singular at {}", sig6(t))).unwrap_or_default()
            );
            Ok(Some(params))
        }
        Command::AuditIntersections { flow, reference } => {
            let params = common.params(NAlone::Explicit)?;
            let (init, t0, t1) = flow_setup(flow, &params, &cfg)?;
            let traj = run_flow(&init, t0, t1, &params, &scheme(flow, t0, t1))?;
            let reference = match reference {
                AuditKind::Companion => AuditReference::Static(companion(&params, &cfg)?.curve),
                AuditKind::Shrinker => AuditReference::RescaledShrinker(shrinker_k(flow.k, &params, &cfg)?.1),
                AuditKind::Cone => AuditReference::Ray(params.lambda_s()?),
            };
            let rep = intersection_audit(&traj, &reference)?;
            let rows: Vec<String> =
                rep.times.iter().zip(&rep.counts).zip(&rep.tangencies).map(|((t, c), g)| format!("{},{c},{g}", e17(*t))).collect();
            let items: Vec<Value> =
                rep.times.iter().zip(&rep.counts).map(|(t, c)| json!({ "t": t, "count": c })).collect();
            out.table("audit-intersections", fmt, "t,count,tangencies", &rows, &items)?;
            out.json(
                "audit-intersections.json",
                &json!({ "nonincreasing": rep.nonincreasing, "events": rep.events, "flow": flow_summary(&traj) }),
            )?;
            println!("audit: counts {:?}, nonincreasing {}", rep.counts, rep.nonincreasing);
            Ok(Some(params))
        }
        Command::Density { preset, times, k } => {
            let params = common.params(if *preset == DensityPreset::Shrinker { NAlone::Explicit } else { NAlone::Axial })?;
            let spec = HeatKernelSpec::origin(0.0, params.n);
            let mut rows = Vec::new();
            let mut items = Vec::new();
            let base = match preset {
                DensityPreset::Shrinker => Some(shrinker_k(*k, &params, &cfg)?.1),
                _ => None,
            };
            for &t in times {
                if t >= 0.0 {
                    return Err(CliError::usage("density times must be negative"));
                }
                let tau = -t;
                let (phi, err) = match preset {
                    DensityPreset::Plane => (plane_density(params.n, tau, 0.0)?, 0.0),
                    DensityPreset::Sphere => {
                        let c = ProfileCurve::sphere((2.0 * (params.n as f64 - 1.0) * tau).sqrt(), 400, params)?;
                        let d = gaussian_density(&c, &params, &spec, t)?;
                        (d.phi, d.tail_bound)
                    }
                    DensityPreset::Cylinder => {
                        let c = ProfileCurve::segment((0.0, (2.0 * params.qm1() * tau).sqrt()), 0.0, 20.0 * tau.sqrt(), 400, params)?;
                        let d = gaussian_density(&c, &params, &spec, t)?;
                        (d.phi, d.tail_bound)
                    }
                    DensityPreset::Shrinker => {
                        let c = base.as_ref().unwrap().scaled(tau.sqrt());
                        let d = gaussian_density(&c, &params, &spec, t)?;
                        (d.phi, d.tail_bound)
                    }
                };
                rows.push(format!("{},{},{}", e17(t), e17(phi), e17(err)));
                items.push(json!({ "t": t, "phi": phi, "err": err }));
            }
            out.table("density", fmt, "t,phi,err", &rows, &items)?;
            let first = items[0]["phi"].as_f64().unwrap_or(f64::NAN);
            out.json("density.json", &json!({ "preset": preset, "phi": first, "samples": items.len() }))?;
            println!("density ({preset:?}): phi = {}", sig6(first));
            Ok(Some(params))
        }
        Command::DensityTrace { flow, t0, x0 } => {
            let params = common.params(flow.n_alone())?;
            let (init, ts, te) = flow_setup(flow, &params, &cfg)?;
            let traj = run_flow(&init, ts, te, &params, &scheme(flow, ts, te))?;
            let t0 = t0.or(traj.singular_time).unwrap_or(te + (te - ts));
            let x0 = x0.as_ref().map(|v| (v[0], v[1])).unwrap_or((0.0, 0.0));
            let trace = density_trace(&traj, &HeatKernelSpec { x0, t0, n: params.n })?;
            let mut buf = Vec::new();
            trace.write_csv(&mut buf)?;
            match fmt {
                Format::Csv => out.write("density-trace.csv", &buf)?,
                Format::Json => out.json("density-trace_rows.json", &serde_json::to_value(&trace.samples)?)?,
            }
            out.json(
                "density-trace.json",
                &json!({ "t0": t0, "x0": [x0.0, x0.1], "max_violation": trace.max_violation, "spread": trace.spread() }),
            )?;
            println!("density trace: {} samples, max increase {}", trace.samples.len(), sig6(trace.max_violation));
            Ok(Some(params))
        }
        Command::KernelCheck { draws, seed, spread } => {
            let mut rng = StdRng::seed_from_u64(*seed);
            let mut worst = 0.0f64;
            for _ in 0..*draws {
                let n = rng.gen_range(3..=8);
                let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let t = rng.gen_range(-2.0..-0.05);
                let frame = random_frame(&mut rng, n);
                let r = kernel_identity_residual(&x, &x0, t, 0.0, &frame, *spread)?;
                worst = worst.max(r.residual.abs() / r.scale);
            }
            out.json("kernel-check.json", &json!({ "draws": draws, "seed": seed, "spread": spread, "max_relative_residual": worst }))?;
            println!("kernel identity: max relative residual {} over {draws} draws", sig6(worst));
            Ok(None)
        }
        Command::FirstVariation { functional, preset, k, a, radius, center, width, h } => {
            let params = common.params(NAlone::Explicit)?;
            let curve = match preset {
                VariationPreset::Shrinker => shrinker_k(*k, &params, &cfg)?.1,
                VariationPreset::Expander => expander_profile(*a, &params, &cfg)?,
                VariationPreset::Sphere => ProfileCurve::sphere(*radius, 400, params)?,
            };
            let len = curve.length();
            let dir = match preset {
                VariationPreset::Sphere => Direction::Constant(1.0),
                _ => Direction::Bump { center: curve.first().s + center * len, half_width: width * len, amplitude: 1.0 },
            };
            let f = match functional {
                FunctionalArg::J => Functional::J,
                FunctionalArg::K => Functional::K,
            };
            let v = first_variation(&curve, f, &dir, *h)?;
            out.json("first-variation.json", &serde_json::to_value(v)?)?;
            println!("first variation: fd {}, analytic {}, order {}", sig6(v.richardson), sig6(v.analytic), sig6(v.order));
            Ok(Some(params))
        }
        Command::GaussBonnet { preset, epsilon } => {
            let params = FlowParams::axial(3)?;
            let (curve, genus) = match preset {
                SurfacePreset::Sphere => (ProfileCurve::sphere(1.0, 400, params)?, 0),
                SurfacePreset::Catenoid => (catenoid(0.5, 1.2, 400)?, 0),
                SurfacePreset::Torus => (
                    ProfileCurve::circle_arc(
                        (0.0, 1.2),
                        0.4,
                        std::f64::consts::FRAC_PI_2,
                        -std::f64::consts::FRAC_PI_2,
                        400,
                        params,
                    )?,
                    1,
                ),
            };
            let eps: Vec<f64> = epsilon.map(|e| vec![e]).unwrap_or_else(|| vec![0.1, 0.5, 0.9]);
            let reports = eps.iter().map(|&e| gauss_bonnet_audit(&curve, genus, e)).collect::<Result<Vec<_>, _>>()?;
            out.json("gauss-bonnet.json", &serde_json::to_value(&reports)?)?;
            for r in &reports {
                println!(
                    "gauss-bonnet eps = {}: {} <= {} + {} + {}: {}",
                    r.epsilon,
                    sig6(r.lhs),
                    sig6(r.h2_integral),
                    sig6(r.genus_term),
                    sig6(r.area_term),
                    r.holds
                );
            }
            Ok(Some(params))
        }
        Command::TotalCurvature { preset, input, samples } => {
            let comps = match input {
                Some(path) => vec![read_polygon(path)?],
                None => {
                    let ellipse = |cx: f64, a: f64, b: f64| -> Vec<[f64; 2]> {
                        (0..*samples)
                            .map(|i| {
                                let f = 2.0 * std::f64::consts::PI * i as f64 / *samples as f64;
                                [cx + a * f.cos(), b * f.sin()]
                            })
                            .collect()
                    };
                    match preset {
                        CurvePreset::Circle => vec![ellipse(0.0, 1.0, 1.0)],
                        CurvePreset::Ellipse => vec![ellipse(0.0, 2.0, 1.0)],
                        CurvePreset::TwoCircles => vec![ellipse(0.0, 1.0, 1.0), ellipse(3.0, 0.5, 0.5)],
                    }
                }
            };
            let tc = total_curvature(&comps)?;
            out.json("total-curvature.json", &serde_json::to_value(tc)?)?;
            println!("total curvature {} over {} components", sig6(tc.integral), tc.components);
            Ok(None)
        }
    }
}

fn write_records(out: &mut Outputs, stem: &str, fmt: Format, recs: &[ExpanderRecord]) -> CliResult<()> {
    let rows: Vec<String> = recs.iter().map(|r| r.csv_row()).collect();
    out.table(stem, fmt, ExpanderRecord::csv_header(), &rows, recs)
}

fn read_polygon(path: &Path) -> CliResult<Vec<[f64; 2]>> {
    let text = fs::read_to_string(path)?;
    let mut pts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.chars().any(|c| c.is_ascii_alphabetic())) {
            continue;
        }
        let mut it = line.split(',').map(|v| v.trim().parse::<f64>());
        match (it.next(), it.next()) {
            (Some(Ok(x)), Some(Ok(y))) => pts.push([x, y]),
            _ => return Err(CliError::usage(format!("line {}: expected x,y", i + 1))),
        }
    }
    Ok(pts)
}

/// Orthonormal (n−1)-frame from Gram-Schmidt on random vectors.
pub fn random_frame<R: Rng>(rng: &mut R, n: usize) -> Vec<Vec<f64>> {
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(n - 1);
    while frame.len() < n - 1 {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for e in &frame {
            let d: f64 = v.iter().zip(e).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(e).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-3 {
            frame.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    frame
}

/// Human-readable listing of a manifest.
pub fn describe_manifest(m: &RunManifest) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} ({} outputs)", m.command, m.outputs.len());
    for (name, sum) in m.outputs.iter().zip(&m.checksums) {
        let _ = writeln!(s, "  {name} {}", &sum[..12.min(sum.len())]);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_formats() {
        assert_eq!(sig6(66.281234), "66.2812");
        assert_eq!(sig6(1.0), "1.00000");
        assert_eq!(sig6(1.5e-7), "1.50000e-7");
    }

    #[test]
    fn params_resolution() {
        let c = Cli::try_parse_from(["selfsim", "critical-angle", "--n", "3"]).unwrap();
        assert_eq!(c.common.params(NAlone::Axial).unwrap(), FlowParams::axial(3).unwrap());
        let c = Cli::try_parse_from(["selfsim", "triple-junction", "--n", "4"]).unwrap();
        assert_eq!(c.common.params(NAlone::Balanced).unwrap(), FlowParams::new(2, 2).unwrap());
        let c = Cli::try_parse_from(["selfsim", "shrinkers", "--n", "4"]).unwrap();
        assert!(c.common.params(NAlone::Explicit).is_err());
        let c = Cli::try_parse_from(["selfsim", "shrinkers", "--p", "2", "--q", "3", "--n", "6"]).unwrap();
        assert!(c.common.params(NAlone::Explicit).is_err());
    }

    #[test]
    fn strip_out_removes_directory() {
        let a: Vec<String> = ["density", "--out", "x", "--n", "3", "--out=y"].iter().map(|s| s.to_string()).collect();
        assert_eq!(strip_out(&a), vec!["density", "--n", "3"]);
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(Error::InvalidParams("x".into())).code, EXIT_USAGE);
        assert_eq!(CliError::from(Error::StepUnderflow { x: 1.0 }).code, EXIT_NUMERICAL);
        assert_eq!(CliError::from(Error::Io("x".into())).code, EXIT_IO);
    }

    #[test]
    fn frames_are_orthonormal() {
        let mut rng = StdRng::seed_from_u64(7);
        let f = random_frame(&mut rng, 5);
        for (i, a) in f.iter().enumerate() {
            for (j, b) in f.iter().enumerate() {
                let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }
}
