//! `simulate`, `benchmark` and `report`.
//!
//! Commands compute everything in memory and then write their files from
//! one thread.

use crate::config::{to_json, ExperimentConfig};
use crate::csvio::{self, num};
use crate::error::CliError;
use nmr_reservoir::reservoir::Reservoir;
use nmr_reservoir::tasks::{
    binary_streams, bits_to_signed, BenchmarkReport, Benchmarker, InputMode, TaskKind,
};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const TRACES_FILE: &str = "traces.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const MSE_VS_M_FILE: &str = "mse_vs_m.csv";

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_config_echo(cfg: &ExperimentConfig, dir: &Path) -> Result<PathBuf, CliError> {
    let path = dir.join(CONFIG_FILE);
    csvio::write(&path, to_json(cfg).as_bytes())?;
    Ok(path)
}

fn check_config(cfg: &ExperimentConfig) -> Result<(), CliError> {
    cfg.validate()
        .map_err(|e| CliError::Validation(e.to_string()))
}

pub struct SimulateOutput {
    pub traces: PathBuf,
    pub config: PathBuf,
    pub rows: usize,
    pub warnings: Vec<String>,
}

/// Probe traces for every binary stream of length `L`, in lexicographic
/// stream order (bit 1 most significant).
pub fn simulate_csv(cfg: &ExperimentConfig) -> Result<(Vec<u8>, usize), CliError> {
    check_config(cfg)?;
    let system = cfg
        .spin_system()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let params = cfg.sequence_params();
    let reservoir = Reservoir::new(system, params)?;
    let mut rows = Vec::new();
    for (k, bits) in binary_streams(params.input_length).iter().enumerate() {
        let trace = reservoir.run(&bits_to_signed(bits), cfg.epsilon)?;
        for l in 0..params.input_length {
            for m in 0..params.samples_per_input {
                let t = (m + 1) as f64 * params.sample_interval;
                rows.push([
                    k.to_string(),
                    (l + 1).to_string(),
                    (m + 1).to_string(),
                    num(t),
                    num(trace.signal(l, m)),
                ]);
            }
        }
    }
    let n = rows.len();
    Ok((csvio::render(&csvio::TRACES, rows), n))
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<SimulateOutput, CliError> {
    let (bytes, rows) = simulate_csv(cfg)?;
    let dir = Path::new(&cfg.out);
    prepare_out(dir)?;
    let traces = dir.join(TRACES_FILE);
    csvio::write(&traces, &bytes)?;
    let config = write_config_echo(cfg, dir)?;
    let warnings = cfg.spin_system().map(|s| s.warnings()).unwrap_or_default();
    Ok(SimulateOutput {
        traces,
        config,
        rows,
        warnings,
    })
}

/// One metrics row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub task: String,
    pub m: usize,
    pub mse: f64,
    pub digitized_errors: Option<usize>,
}

pub fn task_label(report: &BenchmarkReport) -> String {
    format!("{}:{}", report.task.kind, report.task.scheme)
}

pub struct BenchmarkOutput {
    pub metrics: PathBuf,
    pub predictions: PathBuf,
    pub config: PathBuf,
    pub rows: Vec<MetricRow>,
}

/// Runs every selected task at every selected `M`.
pub fn run_reports(cfg: &ExperimentConfig) -> Result<Vec<BenchmarkReport>, CliError> {
    check_config(cfg)?;
    let tasks = cfg
        .tasks()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let settings = cfg
        .benchmark_settings()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let bench = Benchmarker::new(settings)?;
    let mut out = Vec::new();
    for task in &tasks {
        for m in cfg.m_values() {
            let r = bench
                .run(task, m)
                .map_err(|e| CliError::in_task(&format!("{}:{}", task.kind, task.scheme), e))?;
            if !r.mse.is_finite() {
                return Err(CliError::Numerical(format!(
                    "{}: non-finite MSE at M = {m}",
                    task_label(&r)
                )));
            }
            out.push(r);
        }
    }
    Ok(out)
}

pub fn metrics_csv(reports: &[BenchmarkReport]) -> Vec<u8> {
    csvio::render(
        &csvio::METRICS,
        reports.iter().map(|r| {
            [
                task_label(r),
                r.m_used.to_string(),
                num(r.mse),
                r.digitized_errors
                    .map(|e| e.to_string())
                    .unwrap_or_default(),
            ]
        }),
    )
}

pub fn predictions_csv(reports: &[BenchmarkReport]) -> Vec<u8> {
    let rows = reports.iter().flat_map(|r| {
        let label = task_label(r);
        r.per_instance.iter().map(move |p| {
            [
                label.clone(),
                r.m_used.to_string(),
                p.label.clone(),
                p.inputs
                    .iter()
                    .map(|&x| num(x))
                    .collect::<Vec<_>>()
                    .join(";"),
                num(p.target),
                num(p.prediction),
            ]
        })
    });
    csvio::render(&csvio::PREDICTIONS, rows)
}

pub fn benchmark(cfg: &ExperimentConfig) -> Result<BenchmarkOutput, CliError> {
    let reports = run_reports(cfg)?;
    let dir = Path::new(&cfg.out);
    prepare_out(dir)?;
    let metrics = dir.join(METRICS_FILE);
    csvio::write(&metrics, &metrics_csv(&reports))?;
    let predictions = dir.join(PREDICTIONS_FILE);
    csvio::write(&predictions, &predictions_csv(&reports))?;
    let config = write_config_echo(cfg, dir)?;
    Ok(BenchmarkOutput {
        metrics,
        predictions,
        config,
        rows: reports
            .iter()
            .map(|r| MetricRow {
                task: task_label(r),
                m: r.m_used,
                mse: r.mse,
                digitized_errors: r.digitized_errors,
            })
            .collect(),
    })
}

fn field<'a>(path: &Path, rec: &'a csv::StringRecord, i: usize) -> Result<&'a str, CliError> {
    rec.get(i).ok_or_else(|| CliError::Format {
        path: path.to_path_buf(),
        message: format!("short row {rec:?}"),
    })
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    rec: &csv::StringRecord,
    i: usize,
) -> Result<T, CliError> {
    let s = field(path, rec, i)?;
    s.parse().map_err(|_| CliError::Format {
        path: path.to_path_buf(),
        message: format!("cannot parse `{s}` in row {rec:?}"),
    })
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>, CliError> {
    csvio::read(&csvio::METRICS, path)?
        .iter()
        .map(|rec| {
            let errors = field(path, rec, 3)?;
            Ok(MetricRow {
                task: field(path, rec, 0)?.to_string(),
                m: parse_field(path, rec, 1)?,
                mse: parse_field(path, rec, 2)?,
                digitized_errors: if errors.is_empty() {
                    None
                } else {
                    Some(parse_field(path, rec, 3)?)
                },
            })
        })
        .collect()
}

pub struct ReportOutput {
    pub table: String,
    pub files: Vec<PathBuf>,
}

fn is_function_task(label: &str) -> bool {
    let name = label.split(':').next().unwrap_or(label);
    name.parse::<TaskKind>()
        .map(|k| k.input_mode() == InputMode::Continuous)
        .unwrap_or(false)
}

/// Surface rows keyed by task label and `M`.
type Surfaces = BTreeMap<(String, usize), Vec<[String; 4]>>;

fn surfaces(path: &Path) -> Result<Surfaces, CliError> {
    let mut out = Surfaces::new();
    for rec in csvio::read(&csvio::PREDICTIONS, path)? {
        let task = field(path, &rec, 0)?;
        if !is_function_task(task) {
            continue;
        }
        let m: usize = parse_field(path, &rec, 1)?;
        let inputs: Vec<&str> = field(path, &rec, 3)?.split(';').collect();
        if inputs.len() != 2 {
            return Err(CliError::Format {
                path: path.to_path_buf(),
                message: format!("function task {task} with {} inputs", inputs.len()),
            });
        }
        out.entry((task.to_string(), m)).or_default().push([
            inputs[0].to_string(),
            inputs[1].to_string(),
            field(path, &rec, 4)?.to_string(),
            field(path, &rec, 5)?.to_string(),
        ]);
    }
    Ok(out)
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// Summarizes metrics files and writes plot data into `out`.
///
/// A `predictions.csv` next to a metrics file contributes function-surface
/// files.
pub fn report(paths: &[PathBuf], out: &Path) -> Result<ReportOutput, CliError> {
    if paths.is_empty() {
        return Err(CliError::Validation("no metrics files given".into()));
    }
    let mut sources = Vec::new();
    for p in paths {
        sources.push((p.clone(), read_metrics(p)?));
    }
    if sources.iter().all(|(_, rows)| rows.is_empty()) {
        return Err(CliError::NoData);
    }
    let multi = sources.len() > 1;

    let mut table = String::new();
    for (path, rows) in &sources {
        let _ = writeln!(table, "{}", path.display());
        let _ = writeln!(
            table,
            "  {:<20} {:>4} {:>14} {:>8}",
            "task", "M", "mse", "errors"
        );
        if rows.is_empty() {
            let _ = writeln!(table, "  no data");
        }
        for r in rows {
            let errors = r
                .digitized_errors
                .map(|e| e.to_string())
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(
                table,
                "  {:<20} {:>4} {:>14.6e} {:>8}",
                r.task, r.m, r.mse, errors
            );
        }
    }

    prepare_out(out)?;
    let mut files = Vec::new();
    let series = |i: usize, task: &str| {
        if multi {
            format!("{i}/{task}")
        } else {
            task.to_string()
        }
    };
    let plot_rows: Vec<[String; 3]> = sources
        .iter()
        .enumerate()
        .flat_map(|(i, (_, rows))| {
            rows.iter()
                .map(move |r| [series(i, &r.task), r.m.to_string(), num(r.mse)])
        })
        .collect();
    let mse_path = out.join(MSE_VS_M_FILE);
    csvio::write(&mse_path, &csvio::render(&csvio::MSE_VS_M, plot_rows))?;
    files.push(mse_path);

    for (i, (path, _)) in sources.iter().enumerate() {
        let pred = path.with_file_name(PREDICTIONS_FILE);
        if !pred.is_file() {
            continue;
        }
        for ((task, m), rows) in surfaces(&pred)? {
            let prefix = if multi {
                format!("{i}_")
            } else {
                String::new()
            };
            let p = out.join(format!("surface_{prefix}{}_M{m}.csv", file_safe(&task)));
            csvio::write(&p, &csvio::render(&csvio::SURFACE, rows))?;
            files.push(p);
        }
    }
    Ok(ReportOutput { table, files })
}
