//! Declarative simulation-study configuration, read from TOML or JSON.
//!
//! ```toml
//! seed = 2024
//! replications = 1000
//! m = [5, 10, 20]
//! methods = ["ftbs", "fsts", "fsr"]
//! mse = true
//!
//! [[scenario]]
//! preset = "I"
//!
//! [[scenario]]
//! name = "custom"
//! k = 5
//! sigma = 0.5
//! metric = "span"
//! cyclic = [{ triad = [1, 2, 3], weight = 1.0 }]
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{build_bases, Triad};
use crate::select::{Method, SelectionOptions};
use crate::sim::{
    mse_csv, run_study, selection_csv, Metric, Preset, Scenario, StudyPlan, StudyResult,
};

/// Number of items used by the built-in scenarios unless overridden.
pub const DEFAULT_K: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedTriad {
    pub triad: Triad,
    pub weight: f64,
}

/// One scenario entry: either a built-in preset or a fully custom design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub preset: Option<Preset>,
    pub name: Option<String>,
    pub k: Option<usize>,
    /// Item merits; zero when absent.
    pub mu: Option<Vec<f64>>,
    pub cyclic: Option<Vec<WeightedTriad>>,
    pub sigma: Option<f64>,
    pub metric: Option<Metric>,
}

impl ScenarioSpec {
    /// Builds the concrete scenario for one replication count.
    pub fn build(&self, m: usize, seed: u64) -> Result<Scenario> {
        let mut scn = match self.preset {
            Some(p) => {
                let k = self.k.unwrap_or(DEFAULT_K);
                Scenario::preset(p, k, m, seed)?
            }
            None => {
                let k = self
                    .k
                    .ok_or_else(|| Error::Config("custom scenario needs 'k'".into()))?;
                let cyclic = self
                    .cyclic
                    .as_ref()
                    .ok_or_else(|| Error::Config("custom scenario needs 'cyclic'".into()))?;
                Scenario {
                    name: self.name.clone().unwrap_or_else(|| "custom".into()),
                    k,
                    mu: vec![0.0; k],
                    cyclic: cyclic.iter().map(|w| (w.triad, w.weight)).collect(),
                    sigma: 1.0,
                    m,
                    seed,
                    metric: Metric::Containment,
                }
            }
        };
        if self.preset.is_some() && self.cyclic.is_some() {
            return Err(Error::Config(
                "a scenario takes either 'preset' or 'cyclic', not both".into(),
            ));
        }
        if let Some(name) = &self.name {
            scn.name = name.clone();
        }
        if let Some(mu) = &self.mu {
            scn.mu = mu.clone();
        }
        if let Some(sigma) = self.sigma {
            scn.sigma = sigma;
        }
        if let Some(metric) = self.metric {
            scn.metric = metric;
        }
        scn.validate()
            .map_err(|e| Error::Config(format!("scenario '{}': {e}", scn.name)))?;
        Ok(scn)
    }
}

fn default_methods() -> Vec<Method> {
    vec![Method::Ftbs, Method::Fsts, Method::Fsr]
}

fn default_replications() -> usize {
    1000
}

/// A complete study: every scenario is run at every replication count `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    pub m: Vec<usize>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub mse: bool,
    #[serde(default)]
    pub options: SelectionOptions,
    #[serde(rename = "scenario")]
    pub scenarios: Vec<ScenarioSpec>,
}

/// Input syntax of a study configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigFormat {
    Toml,
    Json,
}

impl ConfigFormat {
    /// Picks the format from the file extension (`.json` or anything else as TOML).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => ConfigFormat::Json,
            _ => ConfigFormat::Toml,
        }
    }
}

impl StudyConfig {
    /// Parses and validates a configuration; errors carry the line and column.
    pub fn parse(text: &str, format: ConfigFormat) -> Result<Self> {
        let cfg: StudyConfig = match format {
            ConfigFormat::Toml => toml::from_str(text)
                .map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?,
            ConfigFormat::Json => {
                serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, ConfigFormat::from_path(path)).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::Config(
                "at least one [[scenario]] is required".into(),
            ));
        }
        if self.m.is_empty() || self.m.contains(&0) {
            return Err(Error::Config(
                "'m' must be a nonempty list of positive counts".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("'methods' must not be empty".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("'replications' must be at least 1".into()));
        }
        self.options.validate()?;
        for s in &self.scenarios {
            s.build(self.m[0], self.seed)?;
        }
        Ok(())
    }

    pub fn plan(&self) -> StudyPlan {
        StudyPlan {
            methods: self.methods.clone(),
            replications: self.replications,
            mse: self.mse,
            options: self.options,
        }
    }

    /// Runs every scenario at every `m`, in configuration order.
    pub fn run(&self) -> Result<Vec<StudyResult>> {
        let plan = self.plan();
        let mut results = Vec::new();
        for scenario in &self.scenarios {
            for &m in &self.m {
                let scn = scenario.build(m, self.seed)?;
                let bases = build_bases(scn.k)?;
                results.push(run_study(&scn, &bases, &plan)?);
            }
        }
        Ok(results)
    }
}

/// Writes `selection.csv`, `study.json` and (when computed) `mse.csv` into
/// `dir`, returning the paths written.
pub fn write_study_outputs(dir: &Path, results: &[StudyResult]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut files = vec![(dir.join("selection.csv"), selection_csv(results))];
    if results.iter().any(|r| r.mse.is_some()) {
        files.push((dir.join("mse.csv"), mse_csv(results)));
    }
    let json = serde_json::to_string_pretty(results).map_err(|e| Error::Io(e.to_string()))?;
    files.push((dir.join("study.json"), json + "\n"));
    for (path, body) in &files {
        fs::write(path, body).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}
