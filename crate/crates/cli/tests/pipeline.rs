mod support;

use std::fs;

use boltrm_cli::config::AblationRow;
use boltrm_cli::stages::{checkpoint_file, MetricsFile, RunFile};
use boltrm_cli::{run_all, ABLATION_DIR, DATASET_DIR, REPORT_DIR, RUN_DIR};
use support::*;

#[test]
fn all_then_rerun_skips_everything() {
    let dir = scratch("rerun");
    let cfg_path = dir.join("exp.toml");
    let mut cfg = small_config(5, &dir.join("out"));
    cfg.ablation = vec![
        AblationRow { b: Some(1), ..AblationRow::named("b1") },
        AblationRow { b: Some(3), ..AblationRow::named("b3") },
    ];
    write_config(&cfg, &cfg_path);
    let args = ["--config", cfg_path.to_str().unwrap(), "--jobs", "1", "all"];
    let first = boltrm(&args);
    assert!(first.status.success(), "{}", stderr(&first));
    let out = dir.join("out");
    for f in ["manifest.json", "images.json", "domain_1.brm", "images_3.brm"] {
        assert!(out.join(DATASET_DIR).join(f).is_file(), "{f}");
    }
    for f in ["run.json", "accuracy_matrix.csv", "metrics.json", "episode_3.brm"] {
        assert!(out.join(RUN_DIR).join(f).is_file(), "{f}");
    }
    for f in ["report.csv", "report.json", "accuracy_run.svg", "accuracy_run.csv"] {
        assert!(out.join(REPORT_DIR).join(f).is_file(), "{f}");
    }
    let ablation = fs::read_to_string(out.join(ABLATION_DIR).join("ablation.csv")).unwrap();
    let lines: Vec<&str> = ablation.lines().collect();
    assert_eq!(lines[0], "name,b,selection,lr,momentum,wd,conv,bn,acc,la,fm");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("b1,1,highest,0.005,0.85,0.00005,2,1,"), "{}", lines[1]);

    let metrics: MetricsFile = serde_json::from_slice(&fs::read(out.join(RUN_DIR).join("metrics.json")).unwrap()).unwrap();
    assert!((0.0..=1.0).contains(&metrics.acc));
    assert_eq!(metrics.per_domain.len(), 3);
    assert!(metrics.friedman.is_some());

    // second pass: library call reports every stage as skipped
    let cfg2 = boltrm_cli::config::ExperimentConfig::load(&cfg_path).unwrap();
    let done = run_all(&cfg2, &out, 1).unwrap();
    assert!(
        done.ran == vec!["ablate"] && done.skipped == vec!["generate", "encode", "train", "evaluate", "report"],
        "{done:?}"
    );
    let again = boltrm(&args);
    assert!(again.status.success(), "{}", stderr(&again));
    assert!(stderr(&again).contains("train: inputs unchanged"), "{}", stderr(&again));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn train_without_dataset_names_the_field() {
    let dir = scratch("nodata");
    let out = boltrm(&["--seed", "1", "--out", dir.to_str().unwrap(), "train", "--dataset", dir.join("missing").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("dataset"), "{}", stderr(&out));
    assert!(stderr(&out).contains("stage `train` failed"), "{}", stderr(&out));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn seed_is_mandatory_without_config() {
    let dir = scratch("noseed");
    let out = boltrm(&["--out", dir.to_str().unwrap(), "generate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--seed"), "{}", stderr(&out));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn bad_config_values_exit_2() {
    let dir = scratch("badcfg");
    let path = dir.join("c.toml");
    fs::write(&path, "schema_version = 1\nseed = 3\n[run]\nselection = \"best\"\n").unwrap();
    let out = boltrm(&["--config", path.to_str().unwrap(), "generate"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let out = boltrm(&["--seed", "3", "--out", dir.to_str().unwrap(), "train", "--selection", "best"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("--selection"), "{}", stderr(&out));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn stage_by_stage_with_tampering() {
    let dir = scratch("stages");
    let cfg_path = dir.join("exp.toml");
    write_config(&small_config(8, &dir.join("out")), &cfg_path);
    let c = cfg_path.to_str().unwrap();
    for stage in ["generate", "encode", "train", "evaluate"] {
        let out = boltrm(&["--config", c, stage]);
        assert!(out.status.success(), "{stage}: {}", stderr(&out));
    }
    let run_dir = dir.join("out").join(RUN_DIR);
    let run: RunFile = serde_json::from_slice(&fs::read(run_dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(run.episodes.len(), 3);
    assert_eq!(run.episodes[2].hashes_after_episode.len(), 3);

    // a second run to compare against
    let iso = dir.join("iso");
    let out = boltrm(&["--config", c, "--out", iso.to_str().unwrap(), "train", "--mode", "isolated", "--dataset", dir.join("out").join(DATASET_DIR).to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = boltrm(&["--config", c, "--out", iso.to_str().unwrap(), "evaluate"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = boltrm(&[
        "--config", c, "report", "--format", "csv,svg", "--runs",
        run_dir.to_str().unwrap(), iso.join(RUN_DIR).to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report_dir = dir.join("out").join(REPORT_DIR);
    assert!(report_dir.join("cd.svg").is_file() && report_dir.join("cd.csv").is_file());
    assert!(!report_dir.join("report.json").exists());
    let out = boltrm(&["--config", c, "report", "--format", "pdf", "--runs", run_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    // flipping one checkpoint byte is an integrity failure
    let ckpt = run_dir.join(checkpoint_file(2));
    let mut bytes = fs::read(&ckpt).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    fs::write(&ckpt, bytes).unwrap();
    let out = boltrm(&["--config", c, "evaluate"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));

    // and so is a damaged image file under train
    let images = dir.join("out").join(DATASET_DIR).join("images_1.brm");
    let mut bytes = fs::read(&images).unwrap();
    bytes[20] ^= 1;
    fs::write(&images, bytes).unwrap();
    let out = boltrm(&["--config", c, "--seed", "9", "train"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    fs::remove_dir_all(&dir).unwrap();
}
