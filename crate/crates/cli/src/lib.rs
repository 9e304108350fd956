//! Pipeline driver behind the `boltrm` executable.

pub mod config;
pub mod error;
pub mod manifest;
pub mod report;
pub mod stages;

use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::report::Format;
use crate::stages::{thread_pool, Outcome};

pub const DATASET_DIR: &str = "dataset";
pub const RUN_DIR: &str = "run";
pub const REPORT_DIR: &str = "report";
pub const ABLATION_DIR: &str = "ablation";

/// Which stages of `all` actually ran.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AllOutcome {
    pub ran: Vec<&'static str>,
    pub skipped: Vec<&'static str>,
}

impl AllOutcome {
    fn note(&mut self, stage: &'static str, outcome: Outcome) {
        match outcome {
            Outcome::Ran => self.ran.push(stage),
            Outcome::Skipped => self.skipped.push(stage),
        }
    }
}

/// generate → encode → train → evaluate → report, then the ablation grid
/// when the config has one. Dataset and images share `out/dataset`.
pub fn run_all(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> CliResult<AllOutcome> {
    let pool = thread_pool(jobs)?;
    let dataset = out.join(DATASET_DIR);
    let run = out.join(RUN_DIR);
    let mut done = AllOutcome::default();

    let o = stages::generate(&cfg.benchmark, cfg.seed, &dataset, &pool).map_err(|e| e.in_stage("generate"))?;
    done.note("generate", o);
    let o = stages::encode(&dataset, &dataset, &cfg.encoder, &pool).map_err(|e| e.in_stage("encode"))?;
    done.note("encode", o);
    let o = stages::train(&dataset, &run, &cfg.run).map_err(|e| e.in_stage("train"))?;
    done.note("train", o);
    let o = stages::evaluate(&run, &cfg.evaluate).map_err(|e| e.in_stage("evaluate"))?;
    done.note("evaluate", o);
    let runs: Vec<PathBuf> = vec![run];
    let o = report::report(&runs, &out.join(REPORT_DIR), &[Format::Csv, Format::Json, Format::Svg], cfg.evaluate.alpha)
        .map_err(|e| e.in_stage("report"))?;
    done.note("report", o);
    if !cfg.ablation.is_empty() {
        let results = stages::ablate(&dataset, &out.join(ABLATION_DIR), &cfg.run, &cfg.ablation, &cfg.evaluate, &pool)
            .map_err(|e| e.in_stage("ablate"))?;
        let failed: Vec<&str> = results
            .iter()
            .filter(|r| r.metrics.is_err())
            .map(|r| r.row.name.as_str())
            .collect();
        if !failed.is_empty() {
            return Err(CliError::runtime(format!("rows failed: {}", failed.join(", "))).in_stage("ablate"));
        }
        done.ran.push("ablate");
    }
    Ok(done)
}
