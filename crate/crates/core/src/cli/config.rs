//! Run configuration: a JSON document with an explicit schema version.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::embedded_chain::FunctionalSpec;
use crate::levy_model::{LevyModel, LevyModelSpec};
use crate::scale_fn::ScaleMethod;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum StationaryMethod {
    Mc,
    Grid,
    FixedPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub method: Option<StationaryMethod>,
    pub scale_method: Option<ScaleMethod>,
    /// grid solver truncation point; chosen from the kernel tail when absent
    pub x_max: Option<f64>,
    pub n_grid: usize,
    pub tolerance: f64,
    pub strict_paper: bool,
    /// starting level for `transition` and `sample-step`
    pub start: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            method: None,
            scale_method: None,
            x_max: None,
            n_grid: 2000,
            tolerance: 1e-8,
            strict_paper: false,
            start: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationOptions {
    pub draws: usize,
    pub burnin: usize,
    pub seed: Option<u64>,
    pub shards: usize,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            draws: 1_000_000,
            burnin: 1000,
            seed: None,
            shards: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputOptions {
    pub dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub model: LevyModelSpec,
    pub q: f64,
    pub functional: FunctionalSpec,
    pub solver: SolverOptions,
    pub simulation: SimulationOptions,
    pub output: OutputOptions,
}

/// Every problem found in a configuration, one line per offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub problems: Vec<String>,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration: {}", self.problems.join("; "))
    }
}

impl std::error::Error for ConfigError {}

const KNOWN: [&str; 7] = ["schema_version", "model", "q", "functional", "solver", "simulation", "output"];

fn section<T: DeserializeOwned>(obj: &Map<String, Value>, key: &str, problems: &mut Vec<String>) -> Option<T> {
    let v = obj.get(key)?;
    match serde_json::from_value(v.clone()) {
        Ok(t) => Some(t),
        Err(e) => {
            problems.push(format!("{key}: {e}"));
            None
        }
    }
}

/// Parses and validates a configuration, reporting all problems at once.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let one = |p: String| ConfigError { problems: vec![p] };
    let value: Value = serde_json::from_str(text).map_err(|e| one(format!("not valid JSON: {e}")))?;
    let obj = value.as_object().ok_or_else(|| one("top level must be a JSON object".into()))?;
    let mut problems = Vec::new();
    for k in obj.keys() {
        if !KNOWN.contains(&k.as_str()) {
            problems.push(format!("{k}: unknown field"));
        }
    }
    for k in ["schema_version", "model", "q"] {
        if !obj.contains_key(k) {
            problems.push(format!("{k}: missing"));
        }
    }
    let schema_version: Option<u32> = section(obj, "schema_version", &mut problems);
    if let Some(v) = schema_version {
        if v != SCHEMA_VERSION {
            problems.push(format!("schema_version: expected {SCHEMA_VERSION}, got {v}"));
        }
    }
    let model: Option<LevyModelSpec> = section(obj, "model", &mut problems);
    let q: Option<f64> = section(obj, "q", &mut problems);
    let functional = if obj.contains_key("functional") {
        section(obj, "functional", &mut problems)
    } else {
        Some(FunctionalSpec::Clearing)
    };
    let solver = if obj.contains_key("solver") {
        section(obj, "solver", &mut problems)
    } else {
        Some(SolverOptions::default())
    };
    let simulation = if obj.contains_key("simulation") {
        section(obj, "simulation", &mut problems)
    } else {
        Some(SimulationOptions::default())
    };
    let output = if obj.contains_key("output") {
        section(obj, "output", &mut problems)
    } else {
        Some(OutputOptions::default())
    };

    if let Some(q) = q {
        if !(q > 0.0 && q.is_finite()) {
            problems.push(format!("q: must be > 0 (got {q})"));
        }
    }
    if let Some(m) = &model {
        let p = m.problems();
        if p.is_empty() {
            if let Err(e) = LevyModel::new(*m) {
                problems.push(format!("model: {e}"));
            }
        } else {
            problems.extend(p.into_iter().map(|s| format!("model: {s}")));
        }
    }
    if let Some(f) = &functional {
        problems.extend(f.problems());
    }
    if let Some(s) = &solver {
        if !(s.tolerance > 0.0) {
            problems.push(format!("solver.tolerance: must be > 0 (got {})", s.tolerance));
        }
        if s.n_grid < 8 {
            problems.push(format!("solver.n_grid: must be >= 8 (got {})", s.n_grid));
        }
        if let Some(x) = s.x_max {
            if !(x > 0.0 && x.is_finite()) {
                problems.push(format!("solver.x_max: must be > 0 (got {x})"));
            }
        }
        if !(s.start >= 0.0 && s.start.is_finite()) {
            problems.push(format!("solver.start: must be >= 0 (got {})", s.start));
        }
    }
    if let Some(s) = &simulation {
        problems.extend(simulation_problems(s));
    }
    if !problems.is_empty() {
        return Err(ConfigError { problems });
    }
    Ok(RunConfig {
        schema_version: schema_version.expect("checked"),
        model: model.expect("checked"),
        q: q.expect("checked"),
        functional: functional.expect("checked"),
        solver: solver.expect("checked"),
        simulation: simulation.expect("checked"),
        output: output.expect("checked"),
    })
}

fn simulation_problems(s: &SimulationOptions) -> Vec<String> {
    let mut out = Vec::new();
    if s.draws < 10_000 {
        out.push(format!("simulation.draws: must be >= 10000 (got {})", s.draws));
    }
    if s.shards == 0 {
        out.push("simulation.shards: must be >= 1".into());
    }
    out
}

impl RunConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact serialization.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// The seed, which statistical commands require.
    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.simulation.seed.ok_or_else(|| ConfigError {
            problems: vec!["simulation.seed: required for simulation commands (pass --seed or set it in the config)".into()],
        })
    }

    pub fn revalidate(&self) -> Result<(), ConfigError> {
        let p = simulation_problems(&self.simulation);
        if p.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { problems: p })
        }
    }
}
