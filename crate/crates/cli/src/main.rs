use std::path::PathBuf;
use std::process::ExitCode;

use boltrm_cli::config::{parse_enum, preset, ExperimentConfig};
use boltrm_cli::error::{CliError, CliResult};
use boltrm_cli::report::Format;
use boltrm_cli::stages::{self, thread_pool, Outcome};
use boltrm_cli::{report, run_all, ABLATION_DIR, DATASET_DIR, REPORT_DIR, RUN_DIR};
use clap::{Args, Parser, Subcommand};

/// Continual-learning wheel-flat and polygon diagnosis pipeline.
#[derive(Parser, Debug)]
#[command(name = "boltrm", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config file's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root; overrides the config file's.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for generate, encode and ablate.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the benchmark passages into <out>/dataset.
    Generate,
    /// Turn a dataset's passages into MTF images, stored next to it.
    Encode {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Quantile bins.
        #[arg(long)]
        q: Option<usize>,
        /// Image side length.
        #[arg(long)]
        size: Option<usize>,
    },
    /// Run the continual-learning sequence into <out>/run.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// bolt or isolated.
        #[arg(long)]
        mode: Option<String>,
        /// Maximum domains per episode.
        #[arg(long)]
        b: Option<usize>,
        /// highest, split50, split10high, split10low or multinomial.
        #[arg(long)]
        selection: Option<String>,
    },
    /// Compute metrics.json for a trained run.
    Evaluate {
        #[arg(long)]
        run: Option<PathBuf>,
    },
    /// Compare evaluated runs into <out>/report.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        /// Comma-separated subset of csv, json, svg.
        #[arg(long, default_value = "csv,json,svg")]
        format: String,
    },
    /// Run an ablation grid into <out>/ablation.
    Ablate {
        /// er-size, selection, hyperparams or baseline; defaults to the
        /// config file's grid.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Every stage in order.
    All,
}

/// Config file, then command-line overrides. Without a file, `--seed` is
/// mandatory unless the stage consumes no randomness.
fn resolve(global: &Global, needs_seed: bool) -> CliResult<ExperimentConfig> {
    let mut cfg = match (&global.config, global.seed) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(seed)) => ExperimentConfig::with_seed(seed),
        (None, None) if !needs_seed => ExperimentConfig::with_seed(0),
        (None, None) => return Err(CliError::config("--seed", "required when no --config is given")),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
        cfg.run.seed = seed;
    }
    if let Some(out) = &global.out {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn jobs(global: &Global) -> usize {
    global
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn announce(stage: &str, outcome: Outcome) {
    match outcome {
        Outcome::Ran => log::info!("{stage}: done"),
        Outcome::Skipped => log::info!("{stage}: skipped"),
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let g = &cli.global;
    match cli.command {
        Command::Generate => {
            let cfg = resolve(g, true)?;
            let pool = thread_pool(jobs(g))?;
            let o = stages::generate(&cfg.benchmark, cfg.seed, &cfg.out.join(DATASET_DIR), &pool)
                .map_err(|e| e.in_stage("generate"))?;
            announce("generate", o);
        }
        Command::Encode { dataset, q, size } => {
            let mut cfg = resolve(g, false)?;
            if let Some(q) = q {
                cfg.encoder.q = q;
            }
            if let Some(size) = size {
                cfg.encoder.image_size = size;
            }
            cfg.encoder.validate()?;
            let dir = dataset.unwrap_or_else(|| cfg.out.join(DATASET_DIR));
            let pool = thread_pool(jobs(g))?;
            let o = stages::encode(&dir, &dir, &cfg.encoder, &pool).map_err(|e| e.in_stage("encode"))?;
            announce("encode", o);
        }
        Command::Train { dataset, mode, b, selection } => {
            let mut cfg = resolve(g, true)?;
            if let Some(m) = mode {
                cfg.run.mode = parse_enum("--mode", &m)?;
            }
            if let Some(b) = b {
                cfg.run.b = b;
            }
            if let Some(s) = selection {
                cfg.run.selection = parse_enum("--selection", &s)?;
            }
            cfg.validate()?;
            let dir = dataset.unwrap_or_else(|| cfg.out.join(DATASET_DIR));
            let o = stages::train(&dir, &cfg.out.join(RUN_DIR), &cfg.run).map_err(|e| e.in_stage("train"))?;
            announce("train", o);
        }
        Command::Evaluate { run } => {
            let cfg = resolve(g, false)?;
            let dir = run.unwrap_or_else(|| cfg.out.join(RUN_DIR));
            let o = stages::evaluate(&dir, &cfg.evaluate).map_err(|e| e.in_stage("evaluate"))?;
            announce("evaluate", o);
        }
        Command::Report { runs, format } => {
            let cfg = resolve(g, false)?;
            let mut formats = format
                .split(',')
                .map(|f| f.trim().parse::<Format>())
                .collect::<CliResult<Vec<_>>>()?;
            formats.sort();
            formats.dedup();
            let o = report::report(&runs, &cfg.out.join(REPORT_DIR), &formats, cfg.evaluate.alpha)
                .map_err(|e| e.in_stage("report"))?;
            announce("report", o);
        }
        Command::Ablate { preset: name, dataset } => {
            let cfg = resolve(g, true)?;
            let rows = match name {
                Some(n) => preset(&n).ok_or_else(|| CliError::config("--preset", format!("unknown preset `{n}`")))?,
                None => cfg.ablation.clone(),
            };
            for row in &rows {
                row.apply(&cfg.run).validate(cfg.benchmark.domains.len())?;
            }
            let dir = dataset.unwrap_or_else(|| cfg.out.join(DATASET_DIR));
            let pool = thread_pool(jobs(g))?;
            let results = stages::ablate(&dir, &cfg.out.join(ABLATION_DIR), &cfg.run, &rows, &cfg.evaluate, &pool)
                .map_err(|e| e.in_stage("ablate"))?;
            let failed: Vec<&str> = results
                .iter()
                .filter(|r| r.metrics.is_err())
                .map(|r| r.row.name.as_str())
                .collect();
            if !failed.is_empty() {
                return Err(CliError::runtime(format!("rows failed: {}", failed.join(", "))).in_stage("ablate"));
            }
        }
        Command::All => {
            let cfg = resolve(g, true)?;
            let done = run_all(&cfg, &cfg.out, jobs(g))?;
            log::info!("all: ran {:?}, skipped {:?}", done.ran, done.skipped);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BOLTRM_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("boltrm: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
