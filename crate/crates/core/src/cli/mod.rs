//! Command-line front end: `levy-reset <command> --config run.json`.
//!
//! Each run writes `<out>/<command>.csv` (when the command produces a
//! table) and `<out>/<command>.json` with the results, the library
//! version, the config hash, the seed and the wall time. Failures print a
//! JSON error record to stderr, write it to `<out>/error.json`, and exit
//! non-zero.

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use commands::{Context, Output, TailRegime, TestFamily};
use config::{parse_config, ConfigError, RunConfig, StationaryMethod};

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Library(crate::error::Error),
    Io(String),
    Usage(String),
    HashMismatch { expected: String, found: String },
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "cli.config",
            CliError::Library(e) => e.code(),
            CliError::Io(_) => "cli.io",
            CliError::Usage(_) => "cli.usage",
            CliError::HashMismatch { .. } => "cli.hash_mismatch",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub fn record(&self) -> Value {
        let problems = match self {
            CliError::Config(c) => c.problems.clone(),
            _ => vec![],
        };
        json!({"status": "error", "code": self.code(), "message": self.to_string(), "problems": problems})
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(c) => c.fmt(f),
            CliError::Library(e) => e.fmt(f),
            CliError::Io(s) | CliError::Usage(s) => f.write_str(s),
            CliError::HashMismatch { expected, found } => write!(f, "config hash {found} does not match artifact hash {expected}"),
        }
    }
}

impl From<crate::error::Error> for CliError {
    fn from(e: crate::error::Error) -> Self {
        CliError::Library(e)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "levy-reset", version, about = "Stationary workload of a reflected Lévy process with resets at review epochs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON run configuration
    #[arg(long)]
    pub config: PathBuf,
    /// output directory (overrides `output.dir`)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub shards: Option<usize>,
    /// stationary solver (mc, grid, fixed-point) or, for scale and
    /// transition, the scale-function route (closed-form, numeric)
    #[arg(long)]
    pub method: Option<String>,
    /// use the strict-mode formulas, including the uncorrected transition atom
    #[arg(long)]
    pub strict_paper: bool,
    /// evaluation grid "a:b:n"
    #[arg(long)]
    pub grid: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Laplace exponent summary: Φ(q), W(0), regularity, stability
    ModelInfo(RunArgs),
    /// W, W′ and Z on a grid
    Scale(RunArgs),
    /// density and cdf of Y(e_q) from `solver.start`
    Transition(RunArgs),
    /// stationary law of the post-adjustment chain
    Stationary(RunArgs),
    /// analytic and simulated transform of V(∞)
    Lst(RunArgs),
    /// E[g(V(∞))] for a family of test functions
    Steady {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value = "exp")]
        family: TestFamily,
    },
    /// run the embedded chain and dump (z, u)
    Simulate(RunArgs),
    /// empirical tail against the predicted asymptote
    Tail {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value = "cramer")]
        regime: TailRegime,
        /// convolution-equivalence index of the jump law
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        /// tail weight c of F(U) relative to the Lévy tail
        #[arg(long, default_value_t = 0.0)]
        c: f64,
    },
    /// draws of Y(e_q) from `solver.start`
    SampleStep(RunArgs),
    /// check that an artifact's metadata was produced from a config
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        metadata: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::ModelInfo(_) => "model-info",
            Command::Scale(_) => "scale",
            Command::Transition(_) => "transition",
            Command::Stationary(_) => "stationary",
            Command::Lst(_) => "lst",
            Command::Steady { .. } => "steady",
            Command::Simulate(_) => "simulate",
            Command::Tail { .. } => "tail",
            Command::SampleStep(_) => "sample-step",
            Command::Verify { .. } => "verify",
        }
    }

    fn run_args(&self) -> Option<&RunArgs> {
        match self {
            Command::ModelInfo(a)
            | Command::Scale(a)
            | Command::Transition(a)
            | Command::Stationary(a)
            | Command::Lst(a)
            | Command::Simulate(a)
            | Command::SampleStep(a) => Some(a),
            Command::Steady { run, .. } | Command::Tail { run, .. } => Some(run),
            Command::Verify { .. } => None,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn parse_method(name: &str) -> Result<StationaryMethod, CliError> {
    match name {
        "mc" => Ok(StationaryMethod::Mc),
        "grid" => Ok(StationaryMethod::Grid),
        "fixed-point" | "fixed_point" => Ok(StationaryMethod::FixedPoint),
        other => Err(CliError::Usage(format!("unknown --method {other:?} (mc, grid, fixed-point)"))),
    }
}

/// Loads the config and folds the command-line overrides into it.
pub fn effective_config(cmd: &Command, args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = parse_config(&read(&args.config)?)?;
    if let Some(s) = args.seed {
        cfg.simulation.seed = Some(s);
    }
    if let Some(n) = args.shards {
        cfg.simulation.shards = n;
    }
    if args.strict_paper {
        cfg.solver.strict_paper = true;
    }
    if let Some(m) = &args.method {
        match cmd {
            Command::Scale(_) | Command::Transition(_) => {
                cfg.solver.scale_method = match m.as_str() {
                    "numeric" => Some(crate::scale_fn::ScaleMethod::NumericInversion),
                    "closed-form" => None,
                    other => return Err(CliError::Usage(format!("unknown --method {other:?} (closed-form, numeric)"))),
                }
            }
            _ => cfg.solver.method = Some(parse_method(m)?),
        }
    }
    if let Some(out) = &args.out {
        cfg.output.dir = Some(out.display().to_string());
    }
    cfg.revalidate()?;
    Ok(cfg)
}

fn dispatch(cmd: &Command, ctx: &Context, grid: Option<Vec<f64>>) -> Result<Output, CliError> {
    match cmd {
        Command::ModelInfo(_) => commands::model_info(ctx),
        Command::Scale(_) => commands::scale(ctx, grid),
        Command::Transition(_) => commands::transition_cmd(ctx, grid),
        Command::Stationary(_) => commands::stationary(ctx, None, grid),
        Command::Lst(_) => commands::lst(ctx, grid),
        Command::Steady { family, .. } => commands::steady(ctx, *family, None, grid),
        Command::Simulate(_) => commands::simulate(ctx),
        Command::Tail { regime, alpha, c, .. } => commands::tail(ctx, *regime, *alpha, *c),
        Command::SampleStep(_) => commands::sample_step(ctx),
        Command::Verify { .. } => unreachable!("handled before dispatch"),
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn verify(config: &Path, metadata: &Path) -> Result<(), CliError> {
    let cfg = parse_config(&read(config)?)?;
    let meta: Value = serde_json::from_str(&read(metadata)?).map_err(|e| CliError::Io(format!("{}: {e}", metadata.display())))?;
    let expected = meta["config_hash"].as_str().unwrap_or_default().to_string();
    // the stored hash covers the effective config, so compare against the
    // stored one when present
    let stored: Option<RunConfig> = serde_json::from_value(meta["config"].clone()).ok();
    let found = stored.filter(|s| strip_overrides(s) == strip_overrides(&cfg)).map_or_else(|| cfg.hash(), |s| s.hash());
    if found == expected {
        Ok(())
    } else {
        Err(CliError::HashMismatch { expected, found })
    }
}

// fields that command-line flags may change
fn strip_overrides(c: &RunConfig) -> RunConfig {
    let mut c = c.clone();
    c.simulation.seed = None;
    c.simulation.shards = 0;
    c.solver.method = None;
    c.solver.scale_method = None;
    c.solver.strict_paper = false;
    c.output.dir = None;
    c
}

/// Runs one command; returns the output directory on success.
pub fn run(cmd: &Command) -> Result<Option<PathBuf>, (CliError, Option<PathBuf>)> {
    if let Command::Verify { config, metadata } = cmd {
        return verify(config, metadata).map(|_| None).map_err(|e| (e, None));
    }
    let args = cmd.run_args().expect("run command");
    let fallback = args.out.clone();
    let cfg = effective_config(cmd, args).map_err(|e| (e, fallback.clone()))?;
    let out = PathBuf::from(cfg.output.dir.clone().unwrap_or_else(|| "out".into()));
    let fail = |e: CliError| (e, Some(out.clone()));
    let grid = args.grid.as_deref().map(commands::parse_grid).transpose().map_err(fail)?;
    let started = Instant::now();
    let hash = cfg.hash();
    let ctx = Context::new(cfg.clone()).map_err(fail)?;
    let output = dispatch(cmd, &ctx, grid).map_err(fail)?;
    std::fs::create_dir_all(&out).map_err(|e| fail(CliError::Io(format!("{}: {e}", out.display()))))?;
    let mut artifacts = Vec::new();
    if let Some(t) = &output.table {
        let p = out.join(format!("{}.csv", cmd.name()));
        write(&p, &t.to_csv()).map_err(fail)?;
        artifacts.push(p.display().to_string());
    }
    let meta = json!({
        "status": "ok",
        "command": cmd.name(),
        "library_version": env!("CARGO_PKG_VERSION"),
        "schema_version": config::SCHEMA_VERSION,
        "config_hash": hash,
        "config": cfg,
        "seed": cfg.simulation.seed,
        "tolerances": {"quadrature": cfg.solver.tolerance, "power_iteration": 1e-12, "truncation_mass": 1e-8},
        "wall_time_s": started.elapsed().as_secs_f64(),
        "artifacts": artifacts,
        "results": output.results,
    });
    let p = out.join(format!("{}.json", cmd.name()));
    write(&p, &serde_json::to_string_pretty(&meta).expect("json")).map_err(fail)?;
    Ok(Some(out))
}

/// Entry point for the binary; returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(_) => 0,
        Err((e, out)) => {
            let record = e.record();
            eprintln!("{}", serde_json::to_string(&record).expect("json"));
            if let Some(dir) = out {
                if std::fs::create_dir_all(&dir).is_ok() {
                    let _ = std::fs::write(dir.join("error.json"), serde_json::to_string_pretty(&record).expect("json"));
                }
            }
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CPP: &str = r#"{"schema_version": 1, "q": 1.0,
        "model": {"sigma": 0.0, "drift": 2.0, "jump_rate": 1.0, "jump_dist": {"kind": "exponential", "rate": 1.0}},
        "functional": {"kind": "reflect_around_b", "level": {"kind": "exponential", "rate": 1.0}},
        "simulation": {"seed": 11, "draws": 20000, "shards": 4}}"#;

    fn go(args: &[&str]) -> Result<Option<PathBuf>, (CliError, Option<PathBuf>)> {
        let mut argv = vec!["levy-reset"];
        argv.extend_from_slice(args);
        run(&Cli::try_parse_from(argv).unwrap().command)
    }

    fn setup(text: &str) -> (tempfile::TempDir, String) {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.json");
        std::fs::write(&cfg, text).unwrap();
        let p = cfg.display().to_string();
        (dir, p)
    }

    #[test]
    fn simulate_is_reproducible() {
        let (dir, cfg) = setup(CPP);
        let a = dir.path().join("a").display().to_string();
        let b = dir.path().join("b").display().to_string();
        go(&["simulate", "--config", &cfg, "--out", &a]).unwrap();
        go(&["simulate", "--config", &cfg, "--out", &b]).unwrap();
        let ra = std::fs::read(dir.path().join("a/simulate.csv")).unwrap();
        let rb = std::fs::read(dir.path().join("b/simulate.csv")).unwrap();
        assert_eq!(ra, rb);
        go(&["simulate", "--config", &cfg, "--out", &b, "--seed", "12"]).unwrap();
        assert_ne!(ra, std::fs::read(dir.path().join("b/simulate.csv")).unwrap());
    }

    #[test]
    fn verify_round_trip() {
        let (dir, cfg) = setup(CPP);
        let out = dir.path().join("o").display().to_string();
        go(&["stationary", "--config", &cfg, "--out", &out]).unwrap();
        let meta = dir.path().join("o/stationary.json").display().to_string();
        go(&["verify", "--config", &cfg, "--metadata", &meta]).unwrap();

        let (_d2, other) = setup(&CPP.replace(r#""q": 1.0"#, r#""q": 2.0"#));
        let (e, _) = go(&["verify", "--config", &other, "--metadata", &meta]).unwrap_err();
        assert_eq!(e.code(), "cli.hash_mismatch");
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn config_errors_exit_two() {
        let (dir, cfg) = setup(&CPP.replace(r#""seed": 11, "#, ""));
        let out = dir.path().join("o").display().to_string();
        let (e, at) = go(&["lst", "--config", &cfg, "--out", &out]).unwrap_err();
        assert_eq!(e.code(), "cli.config");
        assert_eq!(e.exit_code(), 2);
        assert_eq!(at.unwrap(), PathBuf::from(&out));

        let (e, _) = go(&["scale", "--config", &cfg, "--grid", "1:0:3"]).unwrap_err();
        assert_eq!(e.code(), "cli.usage");
        let (e, _) = go(&["stationary", "--config", &cfg, "--method", "exact"]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn library_errors_keep_their_code() {
        let (dir, cfg) = setup(&CPP.replace(r#""kind": "reflect_around_b", "level": {"kind": "exponential", "rate": 1.0}"#, r#""kind": "proportional", "delta": 0.5"#));
        let out = dir.path().join("o").display().to_string();
        let (e, _) = go(&["stationary", "--config", &cfg, "--out", &out, "--method", "fixed-point"]).unwrap_err();
        assert_eq!(e.code(), crate::Error::UnsupportedFunctional { operation: "", variant: String::new() }.code());
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn csv_header_and_atom_row() {
        let (dir, cfg) = setup(CPP);
        let out = dir.path().join("o").display().to_string();
        go(&["stationary", "--config", &cfg, "--out", &out]).unwrap();
        let text = std::fs::read_to_string(dir.path().join("o/stationary.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,mass,density"));
        let atom: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert!((atom[1] - (1.0 - 0.5f64.sqrt())).abs() < 1e-9);
        let meta: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/stationary.json")).unwrap()).unwrap();
        assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);
        assert_eq!(meta["results"]["solver"], "fixed_point");
    }
}
