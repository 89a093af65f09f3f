//! Subcommand implementations behind the `strhc` binary. Each returns the
//! process exit code; diagnostics go to stderr, summaries to stdout.

use std::fmt::Display;
use std::path::{Path, PathBuf};

use serde::Serialize;
use strhc_core::config::{Ablation, RunConfig};
use strhc_core::controller::{write_steps_csv, RunStatus, SimulationLog};
use strhc_core::metrics::{compute_metrics, horizon_sweep, status_label, MetricsReport, REPORT_COLUMNS};
use strhc_core::replay::load_trajectories;
use strhc_core::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_COLLISION: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub ablation: Option<Ablation>,
}

pub fn exit_code(status: &RunStatus) -> i32 {
    match status {
        RunStatus::Completed => EXIT_OK,
        RunStatus::Collided { .. } => EXIT_COLLISION,
        RunStatus::SolverFailed { .. } => EXIT_SOLVER,
    }
}

fn fail(e: impl Display) -> i32 {
    eprintln!("error: {e}");
    EXIT_CONFIG
}

/// Writes `bytes` to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

fn load_config(path: &Path, ov: &Overrides) -> Result<(RunConfig, PathBuf), Error> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = ov.seed {
        cfg.seed = seed;
    }
    if let Some(a) = ov.ablation {
        cfg.ablation = a;
    }
    if let Some(out) = &ov.out {
        cfg.out = out.to_string_lossy().into_owned();
    }
    cfg.validate()?;
    let out = PathBuf::from(&cfg.out);
    let out = if out.is_relative() && ov.out.is_none() {
        path.parent().unwrap_or(Path::new(".")).join(out)
    } else {
        out
    };
    Ok((cfg, out))
}

#[derive(Serialize)]
struct MetricsDoc<'a> {
    config_hash: &'a str,
    seed: u64,
    status: &'a RunStatus,
    metrics: &'a MetricsReport,
    config: &'a str,
}

/// log.json, steps.csv and metrics.json for one episode, each written
/// atomically into `dir`.
pub fn write_artifacts(dir: &Path, log: &SimulationLog, report: &MetricsReport) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(log)? + "\n";
    write_atomic(&dir.join("log.json"), json.as_bytes())?;
    let mut csv = Vec::new();
    write_steps_csv(log, &mut csv)?;
    write_atomic(&dir.join("steps.csv"), &csv)?;
    let doc = MetricsDoc {
        config_hash: &log.meta.config_hash,
        seed: log.meta.seed,
        status: &log.status,
        metrics: report,
        config: &log.meta.config,
    };
    let json = serde_json::to_string_pretty(&doc)? + "\n";
    write_atomic(&dir.join("metrics.json"), json.as_bytes())?;
    Ok(())
}

pub fn cmd_run(config: &Path, ov: &Overrides) -> i32 {
    let (cfg, out) = match load_config(config, ov) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let log = match cfg.run() {
        Ok(l) => l,
        Err(e) => return fail(e),
    };
    let report = match compute_metrics(&log, &cfg.task, &cfg.metrics) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    if let Err(e) = write_artifacts(&out, &log, &report) {
        return fail(e);
    }
    println!(
        "{}: {} steps, s_min {:.4}, e_mae {:.4}, pct_in_lane {:.3}, t_solve_avg {:.2} ms -> {}",
        status_label(&log.status),
        report.steps,
        report.s_min,
        report.e_mae,
        report.pct_in_lane,
        report.t_solve_avg,
        out.display()
    );
    exit_code(&log.status)
}

pub fn cmd_sweep(config: &Path, horizons: &[f64], v_ds: &[f64], ov: &Overrides) -> i32 {
    let (cfg, out) = match load_config(config, ov) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let cells = match horizon_sweep(&cfg, horizons, v_ds) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if let Err(e) = std::fs::create_dir_all(&out) {
        return fail(e);
    }

    let mut table = Vec::new();
    let mut worst = EXIT_OK;
    let header = ["v_d", "T", "N", "config_hash"]
        .into_iter()
        .chain(REPORT_COLUMNS)
        .collect::<Vec<_>>();
    {
        let template = cfg.resolved();
        let mut w = csv::Writer::from_writer(&mut table);
        let _ = w.write_record(&header);
        for cell in &cells {
            let hash = cell.config.hash().unwrap_or_default();
            let mut row = vec![cell.v_d.to_string(), cell.horizon.to_string(), cell.n.to_string(), hash];
            let code = match &cell.outcome {
                Ok((log, report)) => {
                    let dir = out.join(format!("vd{}_T{}", cell.v_d, cell.horizon));
                    if let Err(e) = write_artifacts(&dir, log, report) {
                        return fail(e);
                    }
                    row.extend(report.csv_cells(&log.status));
                    exit_code(&log.status)
                }
                Err(msg) => {
                    eprintln!("cell v_d={} T={}: {msg}", cell.v_d, cell.horizon);
                    row.extend(std::iter::repeat_n(String::new(), REPORT_COLUMNS.len() - 1));
                    row.push(format!("error: {msg}"));
                    EXIT_CONFIG
                }
            };
            worst = worst.max(code);
            let _ = w.write_record(&row);
        }
        let _ = w.flush();
        drop(w);
        let mut text = format!("# template config_hash: {}\n", template.hash().unwrap_or_default());
        for line in template.to_toml().unwrap_or_default().lines() {
            text.push_str(&format!("# {line}\n"));
        }
        table.splice(0..0, text.into_bytes());
    }
    if let Err(e) = write_atomic(&out.join("sweep.csv"), &table) {
        return fail(e);
    }
    for cell in &cells {
        let summary = match &cell.outcome {
            Ok((log, r)) => format!(
                "{} dist_first_avoid {} s_min {:.4}",
                status_label(&log.status),
                r.dist_first_avoid.map(|d| format!("{d:.3}")).unwrap_or_else(|| "-".into()),
                r.s_min
            ),
            Err(e) => format!("error: {e}"),
        };
        println!("v_d {:>5} T {:>4} N {:>3}: {summary}", cell.v_d, cell.horizon, cell.n);
    }
    println!("wrote {}", out.join("sweep.csv").display());
    worst
}

pub fn cmd_validate(dataset: &Path) -> i32 {
    let ds = match load_trajectories(dataset) {
        Ok(d) => d,
        Err(e) => return fail(e),
    };
    let st = ds.timestep_stats();
    println!("vehicles: {}", ds.vehicle_count());
    println!("samples: {}", ds.sample_count());
    println!("span: {} s to {} s ({} s)", ds.start, ds.end, ds.end - ds.start);
    println!("timestep: min {} s, median {} s, max {} s", st.min, st.median, st.max);
    if ds.velocities_derived {
        println!("notice: velocities derived from positions (no vx/vy columns)");
    }
    EXIT_OK
}
