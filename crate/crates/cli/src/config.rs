//! Experiment configuration file (TOML).

use std::path::{Path, PathBuf};

use boltrm_core::cl::{RunConfig, RunMode, Selection};
use boltrm_core::mtf::EncoderConfig;
use boltrm_core::sim::BenchmarkConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Root of every derived seed. `run.seed` is overwritten with it.
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub benchmark: BenchmarkConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
    /// Overrides of `run`, one ablation row each.
    #[serde(default)]
    pub ablation: Vec<AblationRow>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    /// Test-split folds used as Friedman blocks.
    pub folds: usize,
    pub alpha: f64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self { folds: 10, alpha: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationRow {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<RunMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<Selection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conv: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bn: Option<usize>,
}

impl AblationRow {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            mode: None,
            b: None,
            selection: None,
            lr: None,
            momentum: None,
            wd: None,
            conv: None,
            bn: None,
        }
    }

    pub fn apply(&self, base: &RunConfig) -> RunConfig {
        let mut cfg = *base;
        if let Some(v) = self.mode {
            cfg.mode = v;
        }
        if let Some(v) = self.b {
            cfg.b = v;
        }
        if let Some(v) = self.selection {
            cfg.selection = v;
        }
        if let Some(v) = self.lr {
            cfg.optim.lr = v;
        }
        if let Some(v) = self.momentum {
            cfg.optim.momentum = v;
        }
        if let Some(v) = self.wd {
            cfg.optim.weight_decay = v;
        }
        if let Some(v) = self.conv {
            cfg.conv = v;
        }
        if let Some(v) = self.bn {
            cfg.bn = v;
        }
        cfg
    }
}

/// Built-in grids: `er-size`, `selection`, `hyperparams`, `baseline`.
pub fn preset(name: &str) -> Option<Vec<AblationRow>> {
    let rows = match name {
        "er-size" => [3, 5, 8, 10]
            .iter()
            .map(|&b| AblationRow {
                b: Some(b),
                ..AblationRow::named(format!("b{b}"))
            })
            .collect(),
        "selection" => [
            ("highest", Selection::Highest),
            ("split50", Selection::Split50),
            ("split10high", Selection::Split10High),
            ("split10low", Selection::Split10Low),
        ]
        .iter()
        .map(|&(n, s)| AblationRow {
            selection: Some(s),
            ..AblationRow::named(n)
        })
        .collect(),
        "hyperparams" => HYPERPARAMS
            .iter()
            .enumerate()
            .map(|(i, &(lr, m, wd, conv, bn))| AblationRow {
                lr: Some(lr),
                momentum: Some(m),
                wd: Some(wd),
                conv: Some(conv),
                bn: Some(bn),
                ..AblationRow::named(format!("run{}", i + 1))
            })
            .collect(),
        "baseline" => vec![
            AblationRow::named("boltrm"),
            AblationRow {
                mode: Some(RunMode::Isolated),
                ..AblationRow::named("isolated")
            },
        ],
        _ => return None,
    };
    Some(rows)
}

/// (lr, momentum, weight decay, conv blocks, BN blocks) of the ten
/// hyperparameter runs; run 2 is the default.
pub const HYPERPARAMS: [(f64, f64, f64, usize, usize); 10] = [
    (0.01, 0.9, 0.00001, 3, 2),
    (0.005, 0.85, 0.00005, 2, 1),
    (0.02, 0.92, 0.0001, 4, 3),
    (0.015, 0.88, 0.00001, 3, 2),
    (0.01, 0.95, 0.00002, 5, 4),
    (0.008, 0.87, 0.00003, 3, 2),
    (0.025, 0.9, 0.00005, 4, 3),
    (0.012, 0.93, 0.00002, 2, 2),
    (0.007, 0.89, 0.00001, 4, 3),
    (0.001, 0.91, 0.00004, 3, 2),
];

impl ExperimentConfig {
    /// Built-in defaults; the seed still has to come from somewhere.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed,
            out: default_out(),
            benchmark: BenchmarkConfig::default(),
            encoder: EncoderConfig::default(),
            run: RunConfig::default(),
            evaluate: EvaluateConfig::default(),
            ablation: Vec::new(),
        }
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| CliError::config("config", e.message()))?;
        cfg.run.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config("--config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::config(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        self.benchmark.validate()?;
        self.encoder.validate()?;
        self.run.validate(self.benchmark.domains.len())?;
        if self.evaluate.folds < 2 {
            return Err(CliError::config("evaluate.folds", "must be at least 2"));
        }
        if self.evaluate.alpha != 0.05 {
            return Err(CliError::config("evaluate.alpha", "only 0.05 is tabulated"));
        }
        let mut names = std::collections::BTreeSet::new();
        for row in &self.ablation {
            if row.name.is_empty() || row.name.contains(['/', '\\']) || !names.insert(&row.name) {
                return Err(CliError::config(
                    "ablation.name",
                    format!("`{}` must be a unique plain file name", row.name),
                ));
            }
        }
        Ok(())
    }
}

/// Parses a lowercase enum value the way the config file spells it.
pub fn parse_enum<T: DeserializeOwned>(field: &str, value: &str) -> CliResult<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| CliError::config(field, format!("unknown value `{value}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_uses_defaults() {
        let cfg = ExperimentConfig::parse("schema_version = 1\nseed = 9\n").unwrap();
        assert_eq!(cfg, ExperimentConfig { run: RunConfig { seed: 9, ..RunConfig::default() }, ..ExperimentConfig::with_seed(9) });
    }

    #[test]
    fn unknown_keys_fail() {
        let err = ExperimentConfig::parse("schema_version = 1\nseed = 1\n[run]\nbee = 5\n").unwrap_err();
        assert_eq!(err.code(), 2);
        assert!(err.message.contains("bee"), "{}", err.message);
    }

    #[test]
    fn seed_is_required() {
        let err = ExperimentConfig::parse("schema_version = 1\n").unwrap_err();
        assert!(err.message.contains("seed"), "{}", err.message);
    }

    #[test]
    fn wrong_schema_version() {
        let err = ExperimentConfig::parse("schema_version = 2\nseed = 1\n").unwrap_err();
        assert!(err.message.starts_with("schema_version"));
    }

    #[test]
    fn b_above_domain_count() {
        let err = ExperimentConfig::parse("schema_version = 1\nseed = 1\n[run]\nb = 11\n").unwrap_err();
        assert!(err.message.contains("run.b"), "{}", err.message);
    }

    #[test]
    fn ablation_rows_override_run() {
        let text = "schema_version = 1\nseed = 1\n[[ablation]]\nname = \"x\"\nb = 3\nselection = \"split50\"\nlr = 0.01\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        let run = cfg.ablation[0].apply(&cfg.run);
        assert_eq!((run.b, run.selection, run.optim.lr), (3, Selection::Split50, 0.01));
        assert_eq!(run.optim.momentum, cfg.run.optim.momentum);
    }

    #[test]
    fn presets_have_expected_rows() {
        assert_eq!(preset("er-size").unwrap().len(), 4);
        assert_eq!(preset("selection").unwrap().len(), 4);
        let hp = preset("hyperparams").unwrap();
        assert_eq!(hp.len(), 10);
        let run2 = hp[1].apply(&RunConfig::default());
        assert_eq!(run2, RunConfig::default());
        assert_eq!((run2.optim.lr, run2.optim.momentum, run2.optim.weight_decay, run2.conv, run2.bn), (0.005, 0.85, 5e-5, 2, 1));
        assert!(preset("nope").is_none());
    }

    #[test]
    fn shipped_config_is_the_default_plus_a_grid() {
        let cfg = ExperimentConfig::parse(include_str!("../../../configs/default.toml")).unwrap();
        assert_eq!(cfg.run, RunConfig { seed: 0, ..RunConfig::default() });
        assert_eq!(cfg.encoder, EncoderConfig::default());
        let names: Vec<&str> = cfg.ablation.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["isolated", "b3", "b10"]);
    }

    #[test]
    fn enums_parse_like_the_file() {
        assert_eq!(parse_enum::<Selection>("selection", "split10low").unwrap(), Selection::Split10Low);
        assert_eq!(parse_enum::<RunMode>("mode", "isolated").unwrap(), RunMode::Isolated);
        assert!(parse_enum::<RunMode>("mode", "bolt-rm").is_err());
    }
}
