//! Cross-run comparison: tables, accuracy-evolution charts and a CD diagram.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::manifest::{read_json, record, up_to_date, write, Fingerprint};
use crate::stages::{
    load_matrix, load_run, mode_name, rank_test, CdSummary, FriedmanSummary, MetricsFile, Outcome, METRICS_FILE,
    MATRIX_FILE, RUN_FILE,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl std::str::FromStr for Format {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "svg" => Ok(Self::Svg),
            other => Err(CliError::config("--format", format!("unknown format `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub mode: String,
    pub b: usize,
    pub selection: String,
    pub acc: f64,
    pub la: f64,
    pub fm: Option<f64>,
    pub param_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: Vec<ReportRow>,
    /// Runs ranked on their final per-domain accuracies.
    pub friedman: Option<FriedmanSummary>,
    pub cd: Option<CdSummary>,
}

struct LoadedRun {
    row: ReportRow,
    matrix: Vec<Vec<f64>>,
}

/// Last `depth` path components joined by `_`, e.g. `iso_run`.
fn run_name(dir: &Path, depth: usize) -> String {
    let parts: Vec<String> = dir
        .components()
        .filter_map(|c| match c {
            std::path::Component::Normal(s) => Some(s.to_string_lossy().into_owned()),
            _ => None,
        })
        .collect();
    parts[parts.len().saturating_sub(depth)..].join("_")
}

/// Shortest distinct suffix names for the run directories.
fn run_names(runs: &[PathBuf]) -> CliResult<Vec<String>> {
    let max_depth = runs.iter().map(|d| d.components().count()).max().unwrap_or(1);
    for depth in 1..=max_depth.max(1) {
        let names: Vec<String> = runs.iter().map(|d| run_name(d, depth)).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() == names.len() && names.iter().all(|n| !n.is_empty()) {
            return Ok(names);
        }
    }
    Err(CliError::config("--runs", "run directories must be distinct"))
}

fn load(dir: &Path, name: String) -> CliResult<LoadedRun> {
    if !dir.join(METRICS_FILE).is_file() {
        return Err(CliError::config(
            "--runs",
            format!("{} has no {METRICS_FILE}; run `evaluate` first", dir.display()),
        ));
    }
    let run = load_run(dir)?;
    let metrics: MetricsFile = read_json(&dir.join(METRICS_FILE))?;
    let matrix = load_matrix(dir)?;
    let selection = serde_json::to_value(run.config.selection)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    Ok(LoadedRun {
        row: ReportRow {
            name,
            mode: mode_name(run.config.mode),
            b: run.config.b,
            selection,
            acc: metrics.acc,
            la: metrics.la,
            fm: metrics.fm,
            param_count: run.param_count,
        },
        matrix: matrix.rows().to_vec(),
    })
}

pub fn build(runs: &[PathBuf], alpha: f64) -> CliResult<(Report, Vec<Vec<Vec<f64>>>)> {
    if runs.is_empty() {
        return Err(CliError::config("--runs", "need at least one run directory"));
    }
    let loaded = runs
        .iter()
        .zip(run_names(runs)?)
        .map(|(d, name)| load(d, name))
        .collect::<CliResult<Vec<_>>>()?;
    let (friedman, cd) = if loaded.len() >= 2 {
        let d = loaded[0].matrix.len();
        if loaded.iter().any(|r| r.matrix.len() != d) {
            return Err(CliError::config("--runs", "runs cover different numbers of domains"));
        }
        // blocks: domains; treatments: runs
        let scores: Vec<Vec<f64>> = (0..d)
            .map(|i| loaded.iter().map(|r| r.matrix[d - 1][i]).collect())
            .collect();
        let names: Vec<String> = loaded.iter().map(|r| r.row.name.clone()).collect();
        let (f, cd) = rank_test(&scores, &names, "domains", alpha)?;
        (Some(f), cd)
    } else {
        (None, None)
    };
    let matrices = loaded.iter().map(|r| r.matrix.clone()).collect();
    let report = Report {
        runs: loaded.into_iter().map(|r| r.row).collect(),
        friedman,
        cd,
    };
    Ok((report, matrices))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn report_csv(report: &Report) -> String {
    let mut text = String::from("name,mode,b,selection,acc,la,fm,param_count\n");
    for r in &report.runs {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{}",
            r.name,
            r.mode,
            r.b,
            r.selection,
            r.acc,
            r.la,
            opt(r.fm),
            r.param_count
        );
    }
    text
}

/// Per-domain accuracy after each episode, one series per domain.
pub fn evolution_csv(matrix: &[Vec<f64>]) -> String {
    let mut text = String::from("episode,domain,accuracy\n");
    for (l, row) in matrix.iter().enumerate() {
        for (i, a) in row.iter().enumerate() {
            let _ = writeln!(text, "{},{},{a}", l + 1, i + 1);
        }
    }
    text
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn evolution_svg(title: &str, matrix: &[Vec<f64>]) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 120.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let d = matrix.len().max(1);
    let x = |ep: usize| left + if d == 1 { pw / 2.0 } else { pw * (ep - 1) as f64 / (d - 1) as f64 };
    let y = |a: f64| top + ph * (1.0 - a);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, left + pw / 2.0, escape(title));
    for tick in 0..=5 {
        let a = tick as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{0:.1}" x2="{1}" y2="{0:.1}" stroke="#ddd"/><text x="{2}" y="{3:.1}" text-anchor="end">{a:.1}</text>"##,
            y(a),
            left + pw,
            left - 6.0,
            y(a) + 4.0
        );
    }
    for ep in 1..=d {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{ep}</text>"#,
            x(ep),
            top + ph + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">episode</text>"#, left + pw / 2.0, h - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="15" y="{0}" text-anchor="middle" transform="rotate(-90 15 {0})">accuracy</text>"#,
        top + ph / 2.0
    );
    for dom in 0..d {
        let color = PALETTE[dom % PALETTE.len()];
        let points: Vec<String> = matrix
            .iter()
            .enumerate()
            .filter_map(|(l, row)| row.get(dom).map(|&a| format!("{:.1},{:.1}", x(l + 1), y(a))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        );
        let ly = top + 14.0 * dom as f64 + 6.0;
        let _ = writeln!(
            s,
            r#"<line x1="{0}" y1="{ly}" x2="{1}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{2}" y="{3}">domain {4}</text>"#,
            left + pw + 10.0,
            left + pw + 30.0,
            left + pw + 35.0,
            ly + 4.0,
            dom + 1
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn cd_csv(f: &FriedmanSummary, cd: Option<&CdSummary>) -> String {
    let mut text = String::from("treatment,mean_rank,group\n");
    for (name, rank) in f.treatments.iter().zip(&f.mean_ranks) {
        let groups: Vec<String> = cd
            .map(|c| {
                c.groups
                    .iter()
                    .enumerate()
                    .filter(|(_, g)| g.contains(name))
                    .map(|(i, _)| (i + 1).to_string())
                    .collect()
            })
            .unwrap_or_default();
        let _ = writeln!(text, "{name},{rank},{}", groups.join(";"));
    }
    text
}

/// Mean ranks on an axis, with a bar of length CD and one thick line per
/// group of treatments that are not significantly different.
pub fn cd_svg(f: &FriedmanSummary, cd: Option<&CdSummary>) -> String {
    let k = f.treatments.len().max(2);
    let (w, left, right) = (640.0, 40.0, 40.0);
    let axis_y = 70.0;
    let scale = (w - left - right) / (k - 1) as f64;
    let x = |r: f64| left + (r - 1.0) * scale;
    let groups = cd.map(|c| c.groups.len()).unwrap_or(0);
    let h = axis_y + 20.0 + 10.0 * groups as f64 + 22.0 * f.treatments.len() as f64 + 20.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="16" text-anchor="middle">Friedman {:.3}, p = {:.4} ({} {})</text>"#,
        w / 2.0,
        f.stat,
        f.p,
        f.n_blocks,
        escape(&f.blocks)
    );
    let _ = writeln!(s, r#"<line x1="{left}" y1="{axis_y}" x2="{}" y2="{axis_y}" stroke="black"/>"#, w - right);
    for r in 1..=k {
        let _ = writeln!(
            s,
            r#"<line x1="{0:.1}" y1="{axis_y}" x2="{0:.1}" y2="{1}" stroke="black"/><text x="{0:.1}" y="{2}" text-anchor="middle">{r}</text>"#,
            x(r as f64),
            axis_y - 5.0,
            axis_y - 9.0
        );
    }
    if let Some(c) = cd {
        let _ = writeln!(
            s,
            r#"<line x1="{left}" y1="32" x2="{:.1}" y2="32" stroke="black" stroke-width="2"/><text x="{:.1}" y="28" text-anchor="start">CD = {:.3}</text>"#,
            left + c.value * scale,
            left + c.value * scale + 6.0,
            c.value
        );
        for (gi, g) in c.groups.iter().enumerate() {
            if g.len() < 2 {
                continue;
            }
            let ranks: Vec<f64> = g
                .iter()
                .filter_map(|n| f.treatments.iter().position(|t| t == n).map(|i| f.mean_ranks[i]))
                .collect();
            let lo = ranks.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ranks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let gy = axis_y + 12.0 + 10.0 * gi as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{gy}" x2="{:.1}" y2="{gy}" stroke="black" stroke-width="4"/>"#,
                x(lo) - 3.0,
                x(hi) + 3.0
            );
        }
    }
    let mut order: Vec<usize> = (0..f.treatments.len()).collect();
    order.sort_by(|&a, &b| f.mean_ranks[a].total_cmp(&f.mean_ranks[b]).then(a.cmp(&b)));
    let label_top = axis_y + 20.0 + 10.0 * groups as f64;
    for (row, &i) in order.iter().enumerate() {
        let ly = label_top + 22.0 * row as f64 + 12.0;
        let rx = x(f.mean_ranks[i]);
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="gray" points="{rx:.1},{axis_y} {rx:.1},{ly} {:.1},{ly}"/><text x="{:.1}" y="{:.1}">{} ({:.2})</text>"#,
            rx + 10.0,
            rx + 14.0,
            ly + 4.0,
            escape(&f.treatments[i]),
            f.mean_ranks[i]
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes the requested formats under `out` and records the stage.
pub fn report(runs: &[PathBuf], out: &Path, formats: &[Format], alpha: f64) -> CliResult<Outcome> {
    if formats.is_empty() {
        return Err(CliError::config("--format", "need at least one of csv, json, svg"));
    }
    let start = Instant::now();
    let mut fp = Fingerprint::new("report").value("formats", &format!("{formats:?}")).value("alpha", &alpha);
    for (dir, name) in runs.iter().zip(run_names(runs)?) {
        fp = fp
            .value("run", &name)
            .file(&dir.join(RUN_FILE))
            .and_then(|f| f.file(&dir.join(MATRIX_FILE)))
            .and_then(|f| f.file(&dir.join(METRICS_FILE)))
            .map_err(|_| {
                CliError::config("--runs", format!("{} is not an evaluated run directory", dir.display()))
            })?;
    }
    let fp = fp.finish();
    if up_to_date(out, "report", &fp) {
        log::info!("report: inputs unchanged, keeping {}", out.display());
        return Ok(Outcome::Skipped);
    }
    let (report, matrices) = build(runs, alpha)?;
    let mut outputs = Vec::new();
    let mut emit = |name: String, text: String| -> CliResult<()> {
        let path = out.join(name);
        write(&path, text.as_bytes())?;
        outputs.push(path);
        Ok(())
    };
    if formats.contains(&Format::Csv) {
        emit("report.csv".into(), report_csv(&report))?;
    }
    if formats.contains(&Format::Json) {
        let mut text = serde_json::to_string_pretty(&report).map_err(CliError::runtime)?;
        text.push('\n');
        emit("report.json".into(), text)?;
    }
    if formats.contains(&Format::Svg) {
        for (row, matrix) in report.runs.iter().zip(&matrices) {
            emit(format!("accuracy_{}.svg", row.name), evolution_svg(&format!("{} accuracy per domain", row.name), matrix))?;
            emit(format!("accuracy_{}.csv", row.name), evolution_csv(matrix))?;
        }
        if let Some(f) = &report.friedman {
            emit("cd.svg".into(), cd_svg(f, report.cd.as_ref()))?;
            emit("cd.csv".into(), cd_csv(f, report.cd.as_ref()))?;
        }
    }
    record(out, "report", &fp, &outputs, start.elapsed())?;
    Ok(Outcome::Ran)
}
