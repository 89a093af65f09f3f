//! Episode statistics (safety, task accuracy, smoothness, timing) and the
//! horizon / target-speed sweep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::controller::{RunStatus, SimulationLog};
use crate::costs::TaskSpec;
use crate::error::{Error, Result};
use crate::serde_util::nonfinite;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsOptions {
    /// Half-width of the band around the target centerline counted as
    /// "in lane" (m).
    pub lane_band: f64,
    /// Lateral deviation marking the start of an avoidance manoeuvre (m).
    pub avoid_threshold: f64,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        Self {
            lane_band: 2.0,
            avoid_threshold: 0.5,
        }
    }
}

impl MetricsOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.lane_band > 0.0 && self.avoid_threshold > 0.0) {
            return Err(Error::Config(
                "metrics.lane_band and metrics.avoid_threshold must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub steps: usize,
    pub collided: bool,
    pub solver_failures: usize,
    #[serde(with = "nonfinite")]
    pub s_min: f64,
    pub e_mae: f64,
    pub e_max: f64,
    pub lat_mae: f64,
    pub lat_max: f64,
    pub pct_in_lane: f64,
    pub a_mae: f64,
    pub a_max: f64,
    pub j_mae: f64,
    pub j_max: f64,
    pub dist_long: f64,
    /// Mean solve time per step (ms).
    pub t_solve_avg: f64,
    /// Gap to the slower lane leader when the EV first leaves its lane
    /// centre; `None` if it never had to.
    pub dist_first_avoid: Option<f64>,
}

fn mean_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut sum, mut max, mut n) = (0.0, 0.0f64, 0usize);
    for v in values {
        sum += v;
        max = max.max(v);
        n += 1;
    }
    if n == 0 {
        (0.0, 0.0)
    } else {
        (sum / n as f64, max)
    }
}

pub fn compute_metrics(log: &SimulationLog, task: &TaskSpec, opts: &MetricsOptions) -> Result<MetricsReport> {
    let r = &log.records;
    let (first, last) = match (r.first(), r.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::EmptyLog),
    };
    let n = r.len() as f64;
    let (e_mae, e_max) = mean_max(r.iter().map(|x| (x.ev.v_lon - task.v_d).abs()));
    let (lat_mae, lat_max) = mean_max(r.iter().map(|x| (x.ev.py - task.py_d).abs()));
    let in_lane = r
        .iter()
        .filter(|x| (x.ev.py - task.py_d).abs() <= opts.lane_band)
        .count();
    let (a_mae, a_max) = mean_max(r.iter().map(|x| x.applied.accel.abs()));
    let (j_mae, j_max) = mean_max(
        r.windows(2)
            .map(|p| ((p[1].applied.accel - p[0].applied.accel) / log.period).abs()),
    );
    let dist_first_avoid = r
        .iter()
        .find_map(|x| {
            let leader = x.lane_leader?;
            let deviating = (x.ev.py - task.py_d).abs() > opts.avoid_threshold;
            (deviating && leader.speed < task.v_d).then_some(leader.dx)
        });
    Ok(MetricsReport {
        steps: r.len(),
        collided: matches!(log.status, RunStatus::Collided { .. }),
        solver_failures: r.iter().filter(|x| x.solver_failed).count(),
        s_min: r.iter().map(|x| x.min_h).fold(f64::INFINITY, f64::min),
        e_mae,
        e_max,
        lat_mae,
        lat_max,
        pct_in_lane: in_lane as f64 / n,
        a_mae,
        a_max,
        j_mae,
        j_max,
        dist_long: last.ev.px - first.ev.px,
        t_solve_avg: r.iter().map(|x| x.solve_time).sum::<f64>() / n * 1e3,
        dist_first_avoid,
    })
}

pub const REPORT_COLUMNS: [&str; 17] = [
    "steps",
    "collided",
    "solver_failures",
    "s_min",
    "e_mae",
    "e_max",
    "lat_mae",
    "lat_max",
    "pct_in_lane",
    "a_mae",
    "a_max",
    "j_mae",
    "j_max",
    "dist_long",
    "dist_first_avoid",
    "t_solve_avg_ms",
    "status",
];

impl MetricsReport {
    /// CSV cells in `REPORT_COLUMNS` order, with the run status last.
    pub fn csv_cells(&self, status: &RunStatus) -> Vec<String> {
        let mut out = vec![
            self.steps.to_string(),
            self.collided.to_string(),
            self.solver_failures.to_string(),
            nonfinite::to_text(self.s_min),
        ];
        out.extend(
            [
                self.e_mae,
                self.e_max,
                self.lat_mae,
                self.lat_max,
                self.pct_in_lane,
                self.a_mae,
                self.a_max,
                self.j_mae,
                self.j_max,
                self.dist_long,
            ]
            .iter()
            .map(|v| v.to_string()),
        );
        out.push(self.dist_first_avoid.map(|d| d.to_string()).unwrap_or_default());
        out.push(format!("{:.3}", self.t_solve_avg));
        out.push(status_label(status));
        out
    }
}

pub fn status_label(s: &RunStatus) -> String {
    match s {
        RunStatus::Completed => "completed".into(),
        RunStatus::Collided { time } => format!("collided@{time:.2}"),
        RunStatus::SolverFailed { time } => format!("solver-failed@{time:.2}"),
    }
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub v_d: f64,
    /// Prediction horizon (s).
    pub horizon: f64,
    pub n: usize,
    pub config: RunConfig,
    pub outcome: std::result::Result<(SimulationLog, MetricsReport), String>,
}

/// Runs one episode per (v_d, horizon) pair of `template`, v_d-major. The
/// horizon `T` sets `N = T / Ts`, which must be integral. Cells run in
/// parallel on the current rayon pool; a failing cell is reported in its
/// `outcome` rather than aborting the sweep.
pub fn horizon_sweep(template: &RunConfig, horizons: &[f64], v_ds: &[f64]) -> Result<Vec<SweepCell>> {
    let ts = template.ocp.ts;
    let mut jobs = Vec::new();
    for &v_d in v_ds {
        for &t in horizons {
            let steps = t / ts;
            let n = steps.round();
            if !(n >= 1.0 && (steps - n).abs() < 1e-6) {
                return Err(Error::Config(format!(
                    "horizon {t} s is not a positive multiple of Ts = {ts} s"
                )));
            }
            let mut cfg = template.clone();
            cfg.task.v_d = v_d;
            cfg.ocp.n = n as usize;
            jobs.push((v_d, t, n as usize, cfg.resolved()));
        }
    }
    Ok(jobs
        .into_par_iter()
        .map(|(v_d, horizon, n, config)| {
            let outcome = config
                .validate()
                .and_then(|_| config.run())
                .and_then(|log| {
                    let report = compute_metrics(&log, &config.task, &config.metrics)?;
                    Ok((log, report))
                })
                .map_err(|e| e.to_string());
            SweepCell {
                v_d,
                horizon,
                n,
                config,
                outcome,
            }
        })
        .collect())
}
