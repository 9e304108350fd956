#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Output;

use boltrm_cli::config::ExperimentConfig;

/// Three domains, small splits and a narrow network: the whole pipeline
/// finishes in a few seconds.
pub fn small_config(seed: u64, out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::with_seed(seed);
    cfg.out = out.to_path_buf();
    cfg.benchmark.domains.truncate(3);
    cfg.benchmark.train_per_domain = 40;
    cfg.benchmark.test_per_domain = 20;
    cfg.encoder.image_size = 16;
    cfg.run.b = 2;
    cfg.run.filters = 8;
    cfg.run.batch_size = 8;
    cfg.run.buffer.capacity_per_domain = 10;
    cfg.run.seed = seed;
    cfg.validate().unwrap();
    cfg
}

pub fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("boltrm-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

pub fn write_config(cfg: &ExperimentConfig, path: &Path) {
    std::fs::write(path, toml::to_string(cfg).unwrap()).unwrap();
}

pub fn boltrm(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_boltrm"))
        .args(args)
        .env("BOLTRM_LOG", "info")
        .output()
        .expect("spawn boltrm")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}
