use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ope::Variant;
use crate::spp::{EnvironmentSpec, Field, FieldMask, HistoryView, MetaPolicy, StrategyConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Matrices computed exactly from the model.
    Population,
    /// Matrices estimated from a logged dataset.
    #[default]
    Sample,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Population => "population",
            Mode::Sample => "sample",
        })
    }
}

/// A strategy given inline or as a path to a TOML file holding one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StrategySource {
    File { file: PathBuf },
    Inline(StrategyConfig),
}

impl Default for StrategySource {
    fn default() -> Self {
        StrategySource::Inline(StrategyConfig::Uniform)
    }
}

/// Enumerated window family searched by `search-policy`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    #[serde(default = "default_window")]
    pub k: usize,
    pub fields: Vec<Field>,
    /// Evenly spaced members when the family is larger than this.
    #[serde(default)]
    pub limit: Option<usize>,
    /// Explicit member indices; overrides `limit`.
    #[serde(default)]
    pub indices: Option<Vec<u64>>,
}

fn default_window() -> usize {
    1
}

fn default_n() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

fn default_mc() -> usize {
    20_000
}

fn default_variant() -> String {
    Variant::default().to_string()
}

fn default_cap() -> usize {
    crate::pomdp::DEFAULT_STATE_CAP
}

/// One experiment. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: PathBuf,
    /// When set, the environment's content hash must match.
    #[serde(default)]
    pub environment_hash: Option<String>,
    #[serde(default)]
    pub behavioral: StrategySource,
    #[serde(default)]
    pub evaluation: Vec<StrategySource>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Existing dataset for sample mode; generated from `behavioral` otherwise.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub search: Option<SearchConfig>,
    /// Monte Carlo episodes per strategy; 0 disables the column.
    #[serde(default = "default_mc")]
    pub mc_episodes: usize,
    #[serde(default = "default_variant")]
    pub variant: String,
    /// Size guard on the lifted state space.
    #[serde(default = "default_cap")]
    pub state_cap: usize,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml_str(src: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(src).map_err(|e| Error::config("experiment", e.to_string().trim_end()))?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut cfg: ExperimentConfig = toml::from_str(&src)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string().trim_end()))?;
        cfg.base_dir = base;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n", "must be at least 1"));
        }
        self.variant()?;
        if let Some(d) = &self.dataset {
            if self.mode == Mode::Population {
                return Err(Error::config("dataset", "only meaningful in sample mode"));
            }
            let p = self.resolve(d);
            if !p.is_file() {
                return Err(Error::config("dataset", format!("{} does not exist", p.display())));
            }
        }
        let env = self.resolve(&self.environment);
        if !env.is_file() {
            return Err(Error::config("environment", format!("{} does not exist", env.display())));
        }
        for (i, s) in std::iter::once(&self.behavioral).chain(&self.evaluation).enumerate() {
            if let StrategySource::File { file } = s {
                let p = self.resolve(file);
                if !p.is_file() {
                    let field = if i == 0 { "behavioral.file".to_string() } else { format!("evaluation[{}].file", i - 1) };
                    return Err(Error::config(field, format!("{} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn environment_path(&self) -> PathBuf {
        self.resolve(&self.environment)
    }

    pub fn variant(&self) -> Result<Variant> {
        self.variant.parse()
    }

    /// Loads the environment and checks the pinned hash.
    pub fn load_environment(&self) -> Result<EnvironmentSpec> {
        let env = EnvironmentSpec::from_path(self.environment_path())?;
        if let Some(h) = &self.environment_hash {
            if h != env.hash() {
                return Err(Error::config(
                    "environment_hash",
                    format!("pinned {h} but {} hashes to {}", self.environment_path().display(), env.hash()),
                ));
            }
        }
        Ok(env)
    }

    pub fn strategy_config(&self, s: &StrategySource) -> Result<StrategyConfig> {
        match s {
            StrategySource::Inline(c) => Ok(c.clone()),
            StrategySource::File { file } => {
                let p = self.resolve(file);
                let src = std::fs::read_to_string(&p).map_err(|e| Error::config(p.display().to_string(), e.to_string()))?;
                toml::from_str(&src).map_err(|e| Error::config(p.display().to_string(), e.to_string().trim_end()))
            }
        }
    }

    /// Builds a named meta-policy; the name is the compact descriptor.
    pub fn build_strategy(&self, s: &StrategySource, env: &EnvironmentSpec) -> Result<(MetaPolicy, String)> {
        let c = self.strategy_config(s)?;
        let d = c.descriptor();
        Ok((c.build(env)?.with_name(d.clone()), d))
    }

    pub fn behavioral(&self, env: &EnvironmentSpec) -> Result<(MetaPolicy, String)> {
        self.build_strategy(&self.behavioral, env)
    }

    pub fn evaluations(&self, env: &EnvironmentSpec) -> Result<Vec<(MetaPolicy, String)>> {
        if self.evaluation.is_empty() {
            return Err(Error::config("evaluation", "at least one evaluation strategy is required"));
        }
        self.evaluation.iter().map(|s| self.build_strategy(s, env)).collect()
    }

    /// Members of the search family as `(policy, descriptor)`.
    pub fn search_family(&self, env: &EnvironmentSpec) -> Result<Vec<(MetaPolicy, String)>> {
        let s = self.search.as_ref().ok_or_else(|| Error::config("search", "missing [search] table"))?;
        let view = HistoryView { window: Some(s.k), fields: FieldMask::from_fields(&s.fields) };
        let indices: Vec<u64> = match &s.indices {
            Some(ix) if ix.is_empty() => return Err(Error::config("search.indices", "empty")),
            Some(ix) => ix.clone(),
            None => {
                let size = MetaPolicy::window_family_size(env, view);
                let take = s.limit.map_or(size, |l| (l as u128).min(size));
                if take == 0 {
                    return Err(Error::config("search.limit", "family is empty"));
                }
                (0..take).map(|i| (i * size / take) as u64).collect()
            }
        };
        indices
            .into_iter()
            .map(|index| {
                let c = StrategyConfig::Window { k: s.k, fields: s.fields.clone(), index };
                let d = c.descriptor();
                Ok((c.build(env)?.with_name(d.clone()), d))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_env(dir: &Path) {
        let env = toml::to_string(&crate::presets::e2(true, 1)).unwrap();
        std::fs::write(dir.join("env.toml"), env).unwrap();
    }

    #[test]
    fn defaults_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        write_env(dir.path());
        let cfg = ExperimentConfig::from_toml_str("environment = \"env.toml\"", dir.path()).unwrap();
        assert_eq!(cfg.mode, Mode::Sample);
        assert_eq!(cfg.n, 1);
        assert_eq!(cfg.variant().unwrap(), Variant::default());
        assert_eq!(cfg.environment_path(), dir.path().join("env.toml"));
        assert!(cfg.load_environment().is_ok());
    }

    #[test]
    fn rejects_bad_fields() {
        let dir = tempfile::tempdir().unwrap();
        write_env(dir.path());
        let err = |src: &str| ExperimentConfig::from_toml_str(src, dir.path()).unwrap_err().to_string();
        assert!(err("environment = \"env.toml\"\nn = 0").contains("n"));
        assert!(err("environment = \"missing.toml\"").contains("environment"));
        assert!(err("environment = \"env.toml\"\nbogus = 1").contains("bogus"));
        assert!(err("environment = \"env.toml\"\nvariant = \"x\"").contains("variant"));
        let e = ExperimentConfig::from_toml_str("environment = \"env.toml\"\nenvironment_hash = \"00\"", dir.path())
            .unwrap()
            .load_environment()
            .unwrap_err()
            .to_string();
        assert!(e.contains("environment_hash"));
    }

    #[test]
    fn strategies_inline_and_from_file() {
        let dir = tempfile::tempdir().unwrap();
        write_env(dir.path());
        std::fs::write(dir.path().join("g.toml"), "family = \"constant\"\npolicy = 1\n").unwrap();
        let src = r#"
environment = "env.toml"
behavioral = { family = "state_table", table = [[0.6, 0.4], [0.3, 0.7]] }
evaluation = [{ file = "g.toml" }, { family = "uniform" }]
"#;
        let cfg = ExperimentConfig::from_toml_str(src, dir.path()).unwrap();
        let env = cfg.load_environment().unwrap();
        let evals = cfg.evaluations(&env).unwrap();
        assert_eq!(evals.len(), 2);
        assert_eq!(evals[0].1, StrategyConfig::Constant { policy: 1 }.descriptor());
        assert!(cfg.behavioral(&env).unwrap().0.has_full_support());
    }

    #[test]
    fn search_family_spacing() {
        let dir = tempfile::tempdir().unwrap();
        write_env(dir.path());
        let src = "environment = \"env.toml\"\n[search]\nfields = [\"action\"]\nlimit = 8\n";
        let cfg = ExperimentConfig::from_toml_str(src, dir.path()).unwrap();
        let env = cfg.load_environment().unwrap();
        let fam = cfg.search_family(&env).unwrap();
        assert_eq!(fam.len(), 8);
        let mut names: Vec<_> = fam.iter().map(|f| f.1.clone()).collect();
        names.dedup();
        assert_eq!(names.len(), 8);
    }
}
