//! Run configuration, batch execution and report files.
//!
//! A run file is TOML:
//!
//! ```toml
//! scenario = "kiw_ito_pull"   # a built-in name, or an inline [scenario] table
//! seed = 7
//! paths = 200
//! levels = 4
//! out = "out/kiw_ito_pull"
//! bracket = "closed_form"     # optional, overrides the scenario
//! scheme = "heun"             # optional, overrides the scenario
//! ```

use crate::flow::Scheme;
use crate::registry;
use crate::stochastics::BracketMode;
use crate::verifier::{
    convergence_study, ResidualReport, Scenario, ScenarioDecl, StudyConfig, VerifyError, TERM_NAMES,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Parse(String),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

impl RunError {
    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Verify(VerifyError::HypothesisViolation(_)) => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Name(String),
    Inline(Box<ScenarioDecl>),
}

fn default_paths() -> usize {
    200
}

fn default_levels() -> usize {
    4
}

fn default_out() -> PathBuf {
    PathBuf::from("kiw-out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioRef,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub bracket: Option<BracketMode>,
    #[serde(default)]
    pub scheme: Option<Scheme>,
}

impl RunConfig {
    pub fn for_scenario(name: &str) -> RunConfig {
        RunConfig {
            scenario: ScenarioRef::Name(name.into()),
            seed: 0,
            paths: default_paths(),
            levels: default_levels(),
            out: default_out(),
            bracket: None,
            scheme: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<RunConfig, RunError> {
        // parse the inline table separately so its errors are not swallowed
        // by the untagged enum
        let mut value: toml::Table = text.parse().map_err(|e: toml::de::Error| RunError::Parse(e.to_string()))?;
        let scenario = match value.remove("scenario") {
            Some(toml::Value::String(s)) => ScenarioRef::Name(s),
            Some(v @ toml::Value::Table(_)) => ScenarioRef::Inline(Box::new(
                v.try_into().map_err(|e: toml::de::Error| RunError::Parse(format!("scenario: {e}")))?,
            )),
            Some(_) => return Err(RunError::Parse("`scenario` must be a name or a table".into())),
            None => return Err(RunError::Parse("missing `scenario`".into())),
        };
        value.insert("scenario".into(), toml::Value::String(String::new()));
        let mut cfg: RunConfig =
            toml::Value::Table(value).try_into().map_err(|e: toml::de::Error| RunError::Parse(e.to_string()))?;
        cfg.scenario = scenario;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, RunError> {
        let text = std::fs::read_to_string(path).map_err(|source| RunError::Read { path: path.into(), source })?;
        RunConfig::from_toml(&text)
    }

    /// The scenario declaration with overrides applied.
    pub fn scenario_decl(&self) -> Result<ScenarioDecl, RunError> {
        let mut decl = match &self.scenario {
            ScenarioRef::Name(n) => {
                registry::find(n).ok_or_else(|| RunError::Parse(format!("unknown scenario `{n}` (see --list)")))?
            }
            ScenarioRef::Inline(d) => (**d).clone(),
        };
        if let Some(b) = self.bracket {
            decl.bracket = b;
        }
        if let Some(s) = self.scheme {
            decl.scheme = Some(s);
        }
        Ok(decl)
    }

    pub fn validate(&self) -> Result<Scenario, RunError> {
        if self.paths == 0 || self.levels == 0 {
            return Err(RunError::Parse("paths and levels must be at least 1".into()));
        }
        Ok(Scenario::from_decl(&self.scenario_decl()?)?)
    }
}

/// Everything a run writes, already serialized.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: ResidualReport,
    pub csv: String,
    pub manifest: String,
}

impl RunOutput {
    /// More than half of the paths stopped before the horizon.
    pub fn blown_up(&self) -> bool {
        self.report.stopped_fraction > 0.5
    }

    pub fn exit_code(&self) -> i32 {
        if self.blown_up() {
            3
        } else {
            0
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf), RunError> {
        let wr = |path: PathBuf, body: &str| {
            std::fs::write(&path, body).map_err(|source| RunError::Write { path: path.clone(), source })?;
            Ok::<_, RunError>(path)
        };
        std::fs::create_dir_all(dir).map_err(|source| RunError::Write { path: dir.into(), source })?;
        Ok((wr(dir.join("report.csv"), &self.csv)?, wr(dir.join("manifest.json"), &self.manifest)?))
    }
}

pub fn csv_header() -> Vec<String> {
    let mut cols: Vec<String> = ["level", "h", "rms_sup_residual", "fitted_order"].map(String::from).to_vec();
    cols.extend(TERM_NAMES.iter().map(|t| format!("l1_{t}")));
    cols.extend(["jac_consistency_max", "steps", "max_sup_residual", "local_order", "stopped"].map(String::from));
    cols
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn report_csv(report: &ResidualReport) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(csv_header()).expect("in-memory write");
    for (i, l) in report.levels.iter().enumerate() {
        let mut row = vec![l.level.to_string(), num(l.h), num(l.rms_sup_residual), num(report.fitted_order)];
        row.extend(l.term_l1.iter().map(|&v| num(v)));
        row.push(num(l.jac_consistency_max));
        row.push(l.steps.to_string());
        row.push(num(l.max_sup_residual));
        row.push(if i == 0 { String::new() } else { num(report.local_orders[i - 1]) });
        row.push(l.stopped.to_string());
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
}

#[derive(Serialize)]
struct Manifest<'a> {
    library: &'static str,
    version: &'static str,
    seed: u64,
    paths: usize,
    levels: usize,
    scenario: &'a ScenarioDecl,
    fitted_order: f64,
    stopped_fraction: f64,
}

/// Validate, run the study with `workers` threads and serialize the report.
/// Nothing is written to disk.
pub fn execute(cfg: &RunConfig, workers: usize) -> Result<RunOutput, RunError> {
    let scenario = cfg.validate()?;
    let study = StudyConfig { seed: cfg.seed, paths: cfg.paths, levels: cfg.levels, workers };
    let report = convergence_study(&scenario, &study)?;
    let csv = report_csv(&report);
    let manifest = Manifest {
        library: "kiw-core",
        version: VERSION,
        seed: cfg.seed,
        paths: cfg.paths,
        levels: cfg.levels,
        scenario: &scenario.decl,
        fitted_order: report.fitted_order,
        stopped_fraction: report.stopped_fraction,
    };
    let mut manifest = serde_json::to_string_pretty(&manifest).map_err(|e| RunError::Parse(e.to_string()))?;
    manifest.push('\n');
    Ok(RunOutput { report, csv, manifest })
}

/// One catalog line per built-in scenario.
#[derive(Clone, Debug, Serialize)]
pub struct CatalogEntry {
    pub name: String,
    pub theorem: String,
    pub manifold: String,
    pub description: String,
}

pub fn catalog() -> Vec<CatalogEntry> {
    registry::builtin()
        .into_iter()
        .map(|d| CatalogEntry {
            name: d.name.clone(),
            theorem: d.theorem.key().into(),
            manifold: format!("{:?}", d.manifold).to_lowercase(),
            description: d.theorem.description().into(),
        })
        .collect()
}
