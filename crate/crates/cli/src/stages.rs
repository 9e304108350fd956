//! The pipeline stages. Each one reads its inputs from disk, writes its
//! outputs plus a `pipeline.json` entry, and is skipped when neither the
//! settings nor the inputs changed since the last run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use boltrm_core::cl::{head_seed, run_sequence, trunk_seed, RunConfig, RunMode, Selection};
use boltrm_core::formats::{read_images, read_series, write_images, write_series, SeriesRecord};
use boltrm_core::metrics::{
    class_report, cl_metrics, critical_difference, friedman, AccuracyMatrix, DomainScores,
};
use boltrm_core::mtf::{encode_series, DomainImages, EncoderConfig};
use boltrm_core::nn::NetConfig;
use boltrm_core::seed::sha256_hex;
use boltrm_core::sim::{build_domain, BenchmarkConfig, ClassLabel, DomainSpec, PassageConditions, Split};
use log::{error, info};
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use crate::config::{AblationRow, EvaluateConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::{read, read_json, read_verified, record, up_to_date, write, write_json, Fingerprint};

pub const FORMAT_VERSION: u32 = 1;
pub const DATASET_MANIFEST: &str = "manifest.json";
pub const IMAGES_MANIFEST: &str = "images.json";
pub const RUN_FILE: &str = "run.json";
pub const MATRIX_FILE: &str = "accuracy_matrix.csv";
pub const WEIGHTS_FILE: &str = "weights_history.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const ABLATION_FILE: &str = "ablation.csv";

pub fn domain_file(id: u32) -> String {
    format!("domain_{id}.brm")
}

pub fn images_file(id: u32) -> String {
    format!("images_{id}.brm")
}

pub fn checkpoint_file(episode: u32) -> String {
    format!("episode_{episode}.brm")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    Skipped,
}

pub fn thread_pool(jobs: usize) -> CliResult<ThreadPool> {
    if jobs == 0 {
        return Err(CliError::config("--jobs", "must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(CliError::runtime)
}

fn skip(stage: &str, dir: &Path) -> Outcome {
    info!("{stage}: inputs unchanged, keeping {}", dir.display());
    Outcome::Skipped
}

// ---------------------------------------------------------------- generate

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub config: BenchmarkConfig,
    pub domains: Vec<DomainEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainEntry {
    pub domain_id: u32,
    pub spec: DomainSpec,
    pub file: String,
    pub sha256: String,
    pub train_count: usize,
    pub test_count: usize,
    /// Train samples first, then test, in file order.
    pub samples: Vec<SampleMeta>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub split: Split,
    pub label: ClassLabel,
    pub seed: u64,
    pub noise_std_scale: f64,
    pub conditions: PassageConditions,
}

pub fn generate(bench: &BenchmarkConfig, seed: u64, out: &Path, pool: &ThreadPool) -> CliResult<Outcome> {
    bench.validate()?;
    let fp = Fingerprint::new("generate")
        .value("benchmark", bench)
        .value("seed", &seed)
        .finish();
    if up_to_date(out, "generate", &fp) {
        return Ok(skip("generate", out));
    }
    let start = Instant::now();
    let tracks = bench.track_bank(seed);
    let domains = pool.install(|| {
        (0..bench.domains.len())
            .into_par_iter()
            .map(|i| {
                let data = build_domain(bench, &tracks, i, seed)?;
                let id = data.spec.domain_id;
                let passages = || data.train.iter().chain(&data.test);
                let records: Vec<SeriesRecord> = passages()
                    .map(|r| SeriesRecord {
                        label: r.label,
                        accel: r.accel.values.clone(),
                        strain: r.strain.values.clone(),
                    })
                    .collect();
                let bytes = write_series(&records)?;
                let file = domain_file(id);
                write(&out.join(&file), &bytes)?;
                let samples = passages()
                    .enumerate()
                    .map(|(j, r)| SampleMeta {
                        split: if j < data.train.len() { Split::Train } else { Split::Test },
                        label: r.label,
                        seed: r.seed,
                        noise_std_scale: r.noise_std_scale,
                        conditions: r.conditions.clone(),
                    })
                    .collect();
                info!("generate: domain {id} done");
                Ok(DomainEntry {
                    domain_id: id,
                    spec: data.spec.clone(),
                    file,
                    sha256: sha256_hex(&bytes),
                    train_count: data.train.len(),
                    test_count: data.test.len(),
                    samples,
                })
            })
            .collect::<CliResult<Vec<_>>>()
    })?;
    let manifest = DatasetManifest {
        version: FORMAT_VERSION,
        seed,
        config: bench.clone(),
        domains,
    };
    let manifest_path = out.join(DATASET_MANIFEST);
    write_json(&manifest_path, &manifest)?;
    let mut outputs = vec![manifest_path];
    outputs.extend(manifest.domains.iter().map(|d| out.join(&d.file)));
    record(out, "generate", &fp, &outputs, start.elapsed())?;
    Ok(Outcome::Ran)
}

fn require_file(dir: &Path, name: &str, field: &str, hint: &str) -> CliResult<PathBuf> {
    if !dir.is_dir() {
        return Err(CliError::config(field, format!("directory {} does not exist", dir.display())));
    }
    let path = dir.join(name);
    if !path.is_file() {
        return Err(CliError::config(field, format!("{} has no {name}; {hint}", dir.display())));
    }
    Ok(path)
}

pub fn load_dataset_manifest(dir: &Path) -> CliResult<DatasetManifest> {
    let path = require_file(dir, DATASET_MANIFEST, "dataset", "run `generate` first")?;
    read_json(&path)
}

// ------------------------------------------------------------------ encode

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImagesManifest {
    pub version: u32,
    pub encoder: EncoderConfig,
    pub dataset_seed: u64,
    pub dataset_manifest_sha256: String,
    pub domains: Vec<ImageEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub domain_id: u32,
    pub file: String,
    pub sha256: String,
    pub train_count: usize,
    pub test_count: usize,
}

pub fn encode(dataset: &Path, out: &Path, enc: &EncoderConfig, pool: &ThreadPool) -> CliResult<Outcome> {
    enc.validate()?;
    let manifest_path = require_file(dataset, DATASET_MANIFEST, "dataset", "run `generate` first")?;
    let manifest_bytes = read(&manifest_path)?;
    let fp = Fingerprint::new("encode")
        .value("encoder", enc)
        .value("dataset_manifest", &sha256_hex(&manifest_bytes))
        .finish();
    if up_to_date(out, "encode", &fp) {
        return Ok(skip("encode", out));
    }
    let start = Instant::now();
    let manifest: DatasetManifest = read_json(&manifest_path)?;
    let entries = pool.install(|| {
        manifest
            .domains
            .par_iter()
            .map(|d| {
                let bytes = read_verified(&dataset.join(&d.file), &d.sha256)?;
                let records = read_series(&bytes)?;
                if records.len() != d.train_count + d.test_count {
                    return Err(CliError::integrity(format!(
                        "{}: {} records, manifest says {}",
                        d.file,
                        records.len(),
                        d.train_count + d.test_count
                    )));
                }
                let samples = records
                    .iter()
                    .map(|r| encode_series(r.label, &r.accel, &r.strain, enc))
                    .collect::<boltrm_core::Result<Vec<_>>>()?;
                let image_bytes = write_images(enc.image_size, &samples)?;
                let file = images_file(d.domain_id);
                write(&out.join(&file), &image_bytes)?;
                info!("encode: domain {} done", d.domain_id);
                Ok(ImageEntry {
                    domain_id: d.domain_id,
                    file,
                    sha256: sha256_hex(&image_bytes),
                    train_count: d.train_count,
                    test_count: d.test_count,
                })
            })
            .collect::<CliResult<Vec<_>>>()
    })?;
    let images = ImagesManifest {
        version: FORMAT_VERSION,
        encoder: *enc,
        dataset_seed: manifest.seed,
        dataset_manifest_sha256: sha256_hex(&manifest_bytes),
        domains: entries,
    };
    let path = out.join(IMAGES_MANIFEST);
    write_json(&path, &images)?;
    let mut outputs = vec![path];
    outputs.extend(images.domains.iter().map(|d| out.join(&d.file)));
    record(out, "encode", &fp, &outputs, start.elapsed())?;
    Ok(Outcome::Ran)
}

/// Reads and verifies every encoded domain listed in `images.json`.
pub fn load_images(dir: &Path) -> CliResult<(ImagesManifest, Vec<DomainImages>)> {
    let path = require_file(dir, IMAGES_MANIFEST, "dataset", "run `encode` first")?;
    let manifest: ImagesManifest = read_json(&path)?;
    let mut domains = Vec::with_capacity(manifest.domains.len());
    for d in &manifest.domains {
        let bytes = read_verified(&dir.join(&d.file), &d.sha256)?;
        let file = read_images(&bytes)?;
        if file.size != manifest.encoder.image_size
            || file.samples.len() != d.train_count + d.test_count
            || (!file.samples.is_empty() && file.channels != manifest.encoder.channels())
        {
            return Err(CliError::integrity(format!("{}: contents disagree with images.json", d.file)));
        }
        let mut samples = file.samples;
        let test = samples.split_off(d.train_count);
        domains.push(DomainImages {
            domain_id: d.domain_id,
            train: samples,
            test,
        });
    }
    Ok((manifest, domains))
}

// ------------------------------------------------------------------- train

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFile {
    pub version: u32,
    pub config: RunConfig,
    pub net: NetConfig,
    pub encoder: EncoderConfig,
    pub dataset_seed: u64,
    pub images_manifest_sha256: String,
    pub num_domains: usize,
    pub param_count: usize,
    pub episodes: Vec<EpisodeFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeFile {
    pub index: u32,
    /// Domains that got a head in this episode.
    pub trained: Vec<u32>,
    pub replay_counts: BTreeMap<u32, usize>,
    pub samples_seen: usize,
    pub steps: usize,
    pub mean_loss: f64,
    pub trunk_seed: u64,
    pub head_seeds: BTreeMap<u32, u64>,
    pub checkpoint: String,
    pub checkpoint_sha256: String,
    /// Hashes of episodes `1..=index` taken right after this episode.
    pub hashes_after_episode: Vec<String>,
}

pub fn train(images_dir: &Path, run_dir: &Path, cfg: &RunConfig) -> CliResult<Outcome> {
    let images_path = require_file(images_dir, IMAGES_MANIFEST, "dataset", "run `encode` first")?;
    let fp = Fingerprint::new("train").value("run", cfg).file(&images_path)?.finish();
    if up_to_date(run_dir, "train", &fp) {
        return Ok(skip("train", run_dir));
    }
    let start = Instant::now();
    let images_sha = sha256_hex(&read(&images_path)?);
    let (manifest, domains) = load_images(images_dir)?;
    cfg.validate(domains.len())?;
    let out = run_sequence(&domains, manifest.encoder.image_size, cfg)?;

    let mut outputs = Vec::new();
    let mut episodes = Vec::with_capacity(out.episodes.len());
    for (record, model) in out.episodes.iter().zip(&out.model.episodes) {
        let k = record.index;
        let file = checkpoint_file(k);
        let path = run_dir.join(&file);
        write(&path, &model.checkpoint_bytes()?)?;
        outputs.push(path);
        episodes.push(EpisodeFile {
            index: k,
            trained: record.stats.trained.clone(),
            replay_counts: record.stats.replay_counts.clone(),
            samples_seen: record.stats.samples_seen,
            steps: record.stats.steps,
            mean_loss: record.stats.mean_loss,
            trunk_seed: trunk_seed(cfg.seed, k),
            head_seeds: record.stats.trained.iter().map(|&d| (d, head_seed(cfg.seed, k, d))).collect(),
            checkpoint: file,
            checkpoint_sha256: record.checkpoint_sha256.clone(),
            hashes_after_episode: out.hashes_mid_run[k as usize - 1].clone(),
        });
    }
    let run_file = RunFile {
        version: FORMAT_VERSION,
        config: *cfg,
        net: out.model.net,
        encoder: manifest.encoder,
        dataset_seed: manifest.dataset_seed,
        images_manifest_sha256: images_sha,
        num_domains: domains.len(),
        param_count: out.model.param_count(),
        episodes,
    };
    let run_path = run_dir.join(RUN_FILE);
    write_json(&run_path, &run_file)?;
    outputs.push(run_path);

    let mut matrix = String::from("episode,domain,accuracy\n");
    for (l, row) in out.accuracy.rows().iter().enumerate() {
        for (i, a) in row.iter().enumerate() {
            matrix.push_str(&format!("{},{},{a}\n", l + 1, i + 1));
        }
    }
    let mut weights = String::from("episode,domain,weight\n");
    for e in &out.episodes {
        for (i, w) in e.weights.w.iter().enumerate() {
            weights.push_str(&format!("{},{},{w}\n", e.index, i + 1));
        }
    }
    let k = out.model.net.num_classes;
    let mut preds = String::from("domain,index,label");
    for c in 0..k {
        preds.push_str(&format!(",p{c}"));
    }
    preds.push('\n');
    for p in &out.predictions {
        for (j, (y, row)) in p.labels.iter().zip(p.probs.chunks(k)).enumerate() {
            preds.push_str(&format!("{},{j},{y}", p.domain_id));
            for v in row {
                preds.push_str(&format!(",{v}"));
            }
            preds.push('\n');
        }
    }
    for (name, text) in [(MATRIX_FILE, matrix), (WEIGHTS_FILE, weights), (PREDICTIONS_FILE, preds)] {
        let path = run_dir.join(name);
        write(&path, text.as_bytes())?;
        outputs.push(path);
    }
    record(run_dir, "train", &fp, &outputs, start.elapsed())?;
    Ok(Outcome::Ran)
}

pub fn load_run(dir: &Path) -> CliResult<RunFile> {
    read_json(&require_file(dir, RUN_FILE, "run", "run `train` first")?)
}

fn csv_rows(path: &Path, columns: usize) -> CliResult<Vec<Vec<String>>> {
    let text = String::from_utf8(read(path)?).map_err(|e| CliError::integrity(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let cells: Vec<String> = line.split(',').map(str::to_string).collect();
        if cells.len() != columns {
            return Err(CliError::integrity(format!("{}: line {} has {} cells", path.display(), n + 1, cells.len())));
        }
        rows.push(cells);
    }
    Ok(rows)
}

fn cell<T: std::str::FromStr>(path: &Path, value: &str) -> CliResult<T> {
    value
        .parse()
        .map_err(|_| CliError::integrity(format!("{}: bad value `{value}`", path.display())))
}

pub fn load_matrix(run_dir: &Path) -> CliResult<AccuracyMatrix> {
    let path = run_dir.join(MATRIX_FILE);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for r in csv_rows(&path, 3)? {
        let (l, i, a): (usize, usize, f64) = (cell(&path, &r[0])?, cell(&path, &r[1])?, cell(&path, &r[2])?);
        if l == rows.len() + 1 {
            rows.push(Vec::new());
        }
        if l != rows.len() || i != rows[l - 1].len() + 1 {
            return Err(CliError::integrity(format!("{}: entries out of order", path.display())));
        }
        rows[l - 1].push(a);
    }
    AccuracyMatrix::from_rows(rows).map_err(|e| CliError::integrity(e.to_string()))
}

/// Final ensemble probabilities per test sample.
pub struct Predictions {
    pub domains: Vec<u32>,
    pub labels: Vec<usize>,
    pub probs: Vec<Vec<f64>>,
}

impl Predictions {
    pub fn predicted(&self) -> Vec<usize> {
        self.probs
            .iter()
            .map(|row| {
                let mut best = 0;
                for (c, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

pub fn load_predictions(run_dir: &Path, num_classes: usize) -> CliResult<Predictions> {
    let path = run_dir.join(PREDICTIONS_FILE);
    let mut out = Predictions {
        domains: Vec::new(),
        labels: Vec::new(),
        probs: Vec::new(),
    };
    for r in csv_rows(&path, 3 + num_classes)? {
        out.domains.push(cell(&path, &r[0])?);
        out.labels.push(cell(&path, &r[2])?);
        out.probs.push(r[3..].iter().map(|v| cell(&path, v)).collect::<CliResult<_>>()?);
    }
    Ok(out)
}

/// Checks every checkpoint against `run.json` and the freeze contract:
/// the hash of episode `j` recorded after any later episode equals its
/// final hash.
pub fn verify_checkpoints(run_dir: &Path, run: &RunFile) -> CliResult<()> {
    for e in &run.episodes {
        read_verified(&run_dir.join(&e.checkpoint), &e.checkpoint_sha256)?;
    }
    let finals: Vec<&str> = run.episodes.iter().map(|e| e.checkpoint_sha256.as_str()).collect();
    for e in &run.episodes {
        for (j, h) in e.hashes_after_episode.iter().enumerate() {
            if finals.get(j) != Some(&h.as_str()) {
                return Err(CliError::integrity(format!(
                    "episode {} changed after episode {} was trained",
                    j + 1,
                    e.index
                )));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- evaluate

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub acc: f64,
    pub la: f64,
    pub fm: Option<f64>,
    pub per_domain: BTreeMap<u32, DomainScores>,
    pub friedman: Option<FriedmanSummary>,
    pub cd: Option<CdSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FriedmanSummary {
    pub stat: f64,
    pub p: f64,
    /// What the blocks are, e.g. "test folds".
    pub blocks: String,
    pub n_blocks: usize,
    /// Treatment labels in column order.
    pub treatments: Vec<String>,
    /// Mean rank per treatment; 1 is best.
    pub mean_ranks: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdSummary {
    pub value: f64,
    pub alpha: f64,
    /// Treatments not significantly different, best first.
    pub groups: Vec<Vec<String>>,
}

/// Friedman test and critical difference on `scores[block][treatment]`
/// where higher is better.
pub fn rank_test(
    scores: &[Vec<f64>],
    treatments: &[String],
    blocks: &str,
    alpha: f64,
) -> CliResult<(FriedmanSummary, Option<CdSummary>)> {
    let negated: Vec<Vec<f64>> = scores.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
    let f = friedman(&negated)?;
    let cd = if (2..=20).contains(&treatments.len()) {
        let cd = critical_difference(&f.mean_ranks, f.n_blocks, alpha)?;
        Some(CdSummary {
            value: cd.cd,
            alpha,
            groups: cd
                .groups
                .iter()
                .map(|g| g.iter().map(|&i| treatments[i].clone()).collect())
                .collect(),
        })
    } else {
        None
    };
    Ok((
        FriedmanSummary {
            stat: f.statistic,
            p: f.p_value,
            blocks: blocks.to_string(),
            n_blocks: f.n_blocks,
            treatments: treatments.to_vec(),
            mean_ranks: f.mean_ranks,
        },
        cd,
    ))
}

pub fn evaluate(run_dir: &Path, cfg: &EvaluateConfig) -> CliResult<Outcome> {
    let run_path = require_file(run_dir, RUN_FILE, "run", "run `train` first")?;
    let run: RunFile = read_json(&run_path)?;
    verify_checkpoints(run_dir, &run)?;
    let fp = Fingerprint::new("evaluate")
        .value("evaluate", cfg)
        .file(&run_path)?
        .file(&run_dir.join(MATRIX_FILE))?
        .file(&run_dir.join(PREDICTIONS_FILE))?
        .finish();
    if up_to_date(run_dir, "evaluate", &fp) {
        return Ok(skip("evaluate", run_dir));
    }
    let start = Instant::now();
    let metrics = compute_metrics(run_dir, &run, cfg)?;
    let path = run_dir.join(METRICS_FILE);
    write_json(&path, &metrics)?;
    record(run_dir, "evaluate", &fp, &[path], start.elapsed())?;
    Ok(Outcome::Ran)
}

pub fn compute_metrics(run_dir: &Path, run: &RunFile, cfg: &EvaluateConfig) -> CliResult<MetricsFile> {
    let matrix = load_matrix(run_dir)?;
    let cl = cl_metrics(&matrix)?;
    let preds = load_predictions(run_dir, run.net.num_classes)?;
    let predicted = preds.predicted();
    let report = class_report(&predicted, &preds.labels, &preds.domains, run.net.num_classes)?;

    // blocks: contiguous folds of each domain's test split; treatments: domains
    let domain_ids: Vec<u32> = report.per_domain.keys().copied().collect();
    let (friedman, cd) = if domain_ids.len() >= 2 {
        let mut scores = vec![vec![0.0; domain_ids.len()]; cfg.folds];
        for (col, &d) in domain_ids.iter().enumerate() {
            let idx: Vec<usize> = (0..preds.domains.len()).filter(|&j| preds.domains[j] == d).collect();
            if idx.len() < cfg.folds {
                return Err(CliError::config(
                    "evaluate.folds",
                    format!("domain {d} has {} test samples, fewer than {} folds", idx.len(), cfg.folds),
                ));
            }
            for (fold, row) in scores.iter_mut().enumerate() {
                let lo = fold * idx.len() / cfg.folds;
                let hi = (fold + 1) * idx.len() / cfg.folds;
                let hits = idx[lo..hi].iter().filter(|&&j| predicted[j] == preds.labels[j]).count();
                row[col] = hits as f64 / (hi - lo) as f64;
            }
        }
        let names: Vec<String> = domain_ids.iter().map(|d| format!("domain {d}")).collect();
        let (f, cd) = rank_test(&scores, &names, "test folds", cfg.alpha)?;
        (Some(f), cd)
    } else {
        (None, None)
    };
    Ok(MetricsFile {
        acc: cl.acc,
        la: cl.la,
        fm: cl.fm,
        per_domain: report.per_domain,
        friedman,
        cd,
    })
}

// ------------------------------------------------------------------ ablate

#[derive(Clone, Debug, PartialEq)]
pub struct AblationResult {
    pub row: AblationRow,
    pub config: RunConfig,
    pub metrics: Result<(f64, f64, Option<f64>), String>,
}

fn selection_name(s: Selection) -> String {
    serde_json::to_value(s)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn mode_name(m: RunMode) -> String {
    serde_json::to_value(m)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn ablation_csv(results: &[AblationResult]) -> String {
    let mut text = String::from("name,b,selection,lr,momentum,wd,conv,bn,acc,la,fm\n");
    for r in results {
        let c = &r.config;
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},",
            r.row.name,
            c.b,
            selection_name(c.selection),
            c.optim.lr,
            c.optim.momentum,
            c.optim.weight_decay,
            c.conv,
            c.bn
        ));
        match &r.metrics {
            Ok((acc, la, fm)) => {
                let fm = fm.map(|v| v.to_string()).unwrap_or_default();
                text.push_str(&format!("{acc},{la},{fm}\n"));
            }
            Err(_) => text.push_str(",,\n"),
        }
    }
    text
}

/// Runs each row as its own seeded run under `out/<name>/`. A failing row
/// is logged and left blank in `ablation.csv`; the others still run.
pub fn ablate(
    images_dir: &Path,
    out: &Path,
    base: &RunConfig,
    rows: &[AblationRow],
    eval: &EvaluateConfig,
    pool: &ThreadPool,
) -> CliResult<Vec<AblationResult>> {
    if rows.is_empty() {
        return Err(CliError::config("ablation", "grid is empty"));
    }
    let start = Instant::now();
    let results: Vec<AblationResult> = pool.install(|| {
        rows.par_iter()
            .map(|row| {
                let config = row.apply(base);
                let dir = out.join(&row.name);
                let metrics = train(images_dir, &dir, &config)
                    .and_then(|_| evaluate(&dir, eval))
                    .and_then(|_| read_json::<MetricsFile>(&dir.join(METRICS_FILE)))
                    .map(|m| (m.acc, m.la, m.fm))
                    .map_err(|e| {
                        error!("ablation row `{}` failed: {e}", row.name);
                        e.to_string()
                    });
                AblationResult {
                    row: row.clone(),
                    config,
                    metrics,
                }
            })
            .collect()
    });
    let path = out.join(ABLATION_FILE);
    write(&path, ablation_csv(&results).as_bytes())?;
    let fp = Fingerprint::new("ablate").value("base", base).value("rows", &rows).finish();
    record(out, "ablate", &fp, &[path], start.elapsed())?;
    Ok(results)
}
