//! Run orchestration and output files.
//!
//! A run writes, under the output directory:
//!
//! - `report.json`: the resolved config, engine results, assertions and RNG
//!   accounting. It contains no timestamps or thread counts, so identical
//!   configs give identical bytes.
//! - `timing.json`: wall-clock seconds and worker threads.
//! - `tables/<name>.csv` and `plots/<name>.svg`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{CliError, Result};
use crate::experiments::{execute, Assertion, Outcome, RngAccounting};
use crate::svg;

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub results: Value,
    pub assertions: Vec<Assertion>,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rng: Option<RngAccounting>,
    pub tables: Vec<String>,
    pub plots: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Timing {
    wall_clock_seconds: f64,
    threads: usize,
}

/// What a finished run wrote.
#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub assertions: Vec<Assertion>,
}

impl RunSummary {
    pub fn failed(&self) -> Vec<&Assertion> {
        self.assertions.iter().filter(|a| !a.passed).collect()
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Parses and resolves a config file without computing anything.
pub fn validate(path: &Path, out: Option<&Path>) -> Result<crate::config::Resolved> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(o) = out {
        cfg.output.dir = o.display().to_string();
    }
    let base = path.parent().unwrap_or(Path::new("."));
    cfg.resolve(base)
}

/// Runs the experiment of a config file and writes its outputs.
pub fn run(path: &Path, out: Option<&Path>) -> Result<RunSummary> {
    let start = Instant::now();
    let resolved = validate(path, out)?;
    let outcome = execute(&resolved)?;
    let out_dir = resolved.out_dir.clone();
    write_outputs(&out_dir, resolved.config, outcome, start)
}

fn write_outputs(out_dir: &Path, config: ExperimentConfig, outcome: Outcome, start: Instant) -> Result<RunSummary> {
    let Outcome { results, tables, plots, assertions, rng } = outcome;
    mkdir(&out_dir.join("tables"))?;
    let mut table_files = Vec::new();
    for t in &tables {
        let rel = format!("tables/{}.csv", t.name);
        write(&out_dir.join(&rel), t.to_csv().as_bytes())?;
        table_files.push(rel);
    }
    let mut plot_files = Vec::new();
    if config.output.plots && !plots.is_empty() {
        mkdir(&out_dir.join("plots"))?;
        for p in &plots {
            // a plot with nothing finite to draw is skipped rather than failing the run
            if let Ok(text) = svg::render(&p.spec, &p.series) {
                let rel = format!("plots/{}.svg", p.name);
                write(&out_dir.join(&rel), text.as_bytes())?;
                plot_files.push(rel);
            }
        }
    }
    let report = RunReport {
        tool: "nevlab",
        version: env!("CARGO_PKG_VERSION"),
        experiment: config.experiment,
        passed: assertions.iter().all(|a| a.passed),
        config,
        results,
        assertions: assertions.clone(),
        rng,
        tables: table_files,
        plots: plot_files,
    };
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    write(&out_dir.join("report.json"), json.as_bytes())?;
    let timing = Timing { wall_clock_seconds: start.elapsed().as_secs_f64(), threads: rayon::current_num_threads() };
    let mut tj = serde_json::to_string_pretty(&timing).expect("timing serializes");
    tj.push('\n');
    write(&out_dir.join("timing.json"), tj.as_bytes())?;
    Ok(RunSummary { out_dir: out_dir.to_path_buf(), assertions })
}

/// Options of the `plot` command.
#[derive(Clone, Debug, Default)]
pub struct PlotRequest {
    pub x: String,
    pub y: Vec<String>,
    pub log_x: bool,
    pub log_y: bool,
    pub title: Option<String>,
    pub reference: Option<f64>,
}

/// Renders columns of a CSV table; rows with a nonzero `flagged` cell are
/// shaded.
pub fn plot_csv(csv: &Path, req: &PlotRequest, out: &Path) -> Result<()> {
    let table = crate::table::Table::read(csv)?;
    if req.y.is_empty() {
        return Err(CliError::Plot("no y column given".into()));
    }
    let xs = table.numeric(&req.x)?;
    let series = req
        .y
        .iter()
        .map(|c| Ok(svg::Series { label: c.clone(), points: xs.iter().copied().zip(table.numeric(c)?).collect() }))
        .collect::<Result<Vec<_>>>()?;
    let shaded = table.flags().map(|f| svg::flag_intervals(&xs, &f, req.log_x)).unwrap_or_default();
    let spec = svg::PlotSpec {
        title: req.title.clone().unwrap_or_else(|| format!("{} vs {}", req.y.join(", "), req.x)),
        x_label: req.x.clone(),
        y_label: req.y.join(", "),
        log_x: req.log_x,
        log_y: req.log_y,
        shaded,
        reference: req.reference,
    };
    let text = svg::render(&spec, &series)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        mkdir(parent)?;
    }
    write(out, text.as_bytes())
}
