//! Receding-horizon loop: measure, select and predict the nearest vehicles,
//! solve, apply the first control, warm start the next solve, log.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::costs::{CostBreakdown, CostWeights, TaskSpec};
use crate::dynamics::{shoot_interval, Bounds, ControlInput, VehicleParams, VehicleState};
use crate::error::{Error, Result};
use crate::prediction::{nearest_m, ConstantVelocity, Predictor, SvId};
use crate::replay::{world_at, TrajectoryDataset};
use crate::safety::{barrier_h, SafetyParams, SvState};
use crate::serde_util::nonfinite;
use crate::sim::{check_collision, step_world, CollisionReport, ScenarioConfig, WorldState};
use crate::solver::{sqp_solve, warm_start_shift, OcpConfig, OcpProblem, SolveResult};

/// Everything the planner needs besides the measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    pub vehicle: VehicleParams,
    pub bounds: Bounds,
    pub safety: SafetyParams,
    pub weights: CostWeights,
    pub task: TaskSpec,
    pub ocp: OcpConfig,
    /// Half-width of the target-lane band used to find the lane leader (m).
    pub lane_half_width: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            vehicle: VehicleParams::default(),
            bounds: Bounds::default(),
            safety: SafetyParams::default(),
            weights: CostWeights::cruise(),
            task: TaskSpec::default(),
            ocp: OcpConfig::default(),
            lane_half_width: 2.0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate()?;
        self.bounds.validate()?;
        self.safety.validate()?;
        self.weights.validate()?;
        self.task.validate(&self.bounds)?;
        self.ocp.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub time: f64,
    pub ev: VehicleState,
    pub svs: Vec<(SvId, SvState)>,
}

/// Closed-loop world the planner drives.
pub trait Environment {
    fn observe(&self) -> Observation;
    /// Advances one control period. Returns `false` when the environment has
    /// no data left to continue.
    fn step(&mut self, u: &ControlInput) -> Result<bool>;
    fn check_collision(&self, sp: &SafetyParams) -> CollisionReport;
    fn period(&self) -> f64;
    fn mode(&self) -> Mode;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Sim,
    Replay,
}

pub struct SimEnv {
    pub scenario: ScenarioConfig,
    pub world: WorldState,
    pub vehicle: VehicleParams,
    pub period: f64,
    pub substeps: usize,
}

impl Environment for SimEnv {
    fn observe(&self) -> Observation {
        Observation {
            time: self.world.time,
            ev: self.world.ev,
            svs: self.world.sv_states(),
        }
    }

    fn step(&mut self, u: &ControlInput) -> Result<bool> {
        self.world = step_world(&self.scenario, &self.world, u, self.period, self.substeps, &self.vehicle)?;
        Ok(true)
    }

    fn check_collision(&self, sp: &SafetyParams) -> CollisionReport {
        check_collision(&self.world, sp)
    }

    fn period(&self) -> f64 {
        self.period
    }

    fn mode(&self) -> Mode {
        Mode::Sim
    }
}

/// Replays recorded vehicles around a simulated EV. Recorded vehicles do not
/// react to the EV.
pub struct ReplayEnv {
    pub dataset: TrajectoryDataset,
    pub ev: VehicleState,
    pub vehicle: VehicleParams,
    pub start: f64,
    pub period: f64,
    pub substeps: usize,
    step: usize,
}

impl ReplayEnv {
    pub fn new(
        dataset: TrajectoryDataset,
        ev: VehicleState,
        vehicle: VehicleParams,
        start: f64,
        period: f64,
        substeps: usize,
    ) -> Result<Self> {
        world_at(&dataset, start)?;
        Ok(Self {
            dataset,
            ev,
            vehicle,
            start,
            period,
            substeps,
            step: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.start + self.step as f64 * self.period
    }

    fn svs(&self) -> Vec<(SvId, SvState)> {
        // time stays inside the span: step() refuses to leave it
        world_at(&self.dataset, self.time()).unwrap_or_default()
    }
}

impl Environment for ReplayEnv {
    fn observe(&self) -> Observation {
        Observation {
            time: self.time(),
            ev: self.ev,
            svs: self.svs(),
        }
    }

    fn step(&mut self, u: &ControlInput) -> Result<bool> {
        let next = self.start + (self.step + 1) as f64 * self.period;
        if next > self.dataset.end {
            return Ok(false);
        }
        self.ev = shoot_interval(&self.ev, u, self.period, self.substeps, &self.vehicle);
        self.step += 1;
        Ok(true)
    }

    fn check_collision(&self, sp: &SafetyParams) -> CollisionReport {
        let min_h = self
            .svs()
            .iter()
            .map(|(_, s)| barrier_h(self.ev.position(), s.position(), sp))
            .fold(f64::INFINITY, f64::min);
        CollisionReport {
            collided: min_h < 0.0,
            margin_violated: (0.0..sp.c).contains(&min_h),
            min_h,
        }
    }

    fn period(&self) -> f64 {
        self.period
    }

    fn mode(&self) -> Mode {
        Mode::Replay
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuessSource {
    /// All-zero guess with the first-solve iteration cap.
    Zero,
    /// Shifted previous solution with the warm iteration cap.
    Warm,
    /// Warm solve failed; zero guess with the first-solve cap.
    Retry,
    /// Every attempt failed; full braking applied.
    Fallback,
}

impl GuessSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            GuessSource::Zero => "zero",
            GuessSource::Warm => "warm",
            GuessSource::Retry => "retry",
            GuessSource::Fallback => "fallback",
        }
    }
}

/// Nearest slower-or-not vehicle ahead of the EV inside the target lane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneLeader {
    pub id: SvId,
    /// Longitudinal centre-to-centre distance ahead of the EV (m).
    pub dx: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub ev: VehicleState,
    pub applied: ControlInput,
    #[serde(with = "nonfinite")]
    pub min_h: f64,
    pub costs: CostBreakdown,
    pub iterations: usize,
    pub converged: bool,
    pub solver_failed: bool,
    pub guess: GuessSource,
    /// Largest multiple-shooting defect of the returned trajectory.
    pub max_defect: f64,
    pub selected: Vec<SvId>,
    pub lane_leader: Option<LaneLeader>,
    /// Wall-clock time spent solving (s).
    pub solve_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum RunStatus {
    Completed,
    Collided { time: f64 },
    SolverFailed { time: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMeta {
    pub config_hash: String,
    pub seed: u64,
    pub mode: Mode,
    /// Fully resolved configuration the run was produced from.
    pub config: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationLog {
    pub meta: LogMeta,
    pub period: f64,
    pub records: Vec<StepRecord>,
    pub status: RunStatus,
}

fn lane_leader(obs: &Observation, cfg: &PlannerConfig) -> Option<LaneLeader> {
    obs.svs
        .iter()
        .filter(|(_, s)| s.ox > obs.ev.px && (s.oy - cfg.task.py_d).abs() <= cfg.lane_half_width)
        .min_by(|a, b| a.1.ox.total_cmp(&b.1.ox).then(a.0.cmp(&b.0)))
        .map(|&(id, s)| LaneLeader {
            id,
            dx: s.ox - obs.ev.px,
            speed: s.ovx,
        })
}

fn usable(r: &Result<SolveResult>) -> bool {
    matches!(r, Ok(s) if s.cost.is_finite() && s.controls.iter().all(ControlInput::is_finite))
}

pub struct StepOutcome {
    pub applied: ControlInput,
    /// `None` when every solve attempt failed.
    pub result: Option<SolveResult>,
    pub record: StepRecord,
}

/// One planning cycle from the measurement `obs`. `prev` is the previous
/// cycle's solution, used as a shifted warm start.
pub fn rhc_step(
    obs: &Observation,
    prev: Option<&SolveResult>,
    cfg: &PlannerConfig,
    step: usize,
    min_h: f64,
) -> Result<StepOutcome> {
    let started = Instant::now();
    let n = cfg.ocp.n;
    let selected = nearest_m(&obs.ev, &obs.svs, cfg.safety.m);
    let predictions = selected
        .iter()
        .map(|(id, s)| ConstantVelocity.predict(*id, s, n, cfg.ocp.ts))
        .collect();
    let problem = OcpProblem {
        x0: obs.ev,
        task: cfg.task,
        predictions,
        vehicle: cfg.vehicle,
        safety: cfg.safety.clone(),
        weights: cfg.weights,
        bounds: cfg.bounds,
        config: cfg.ocp,
    };
    if !obs.ev.is_finite() {
        return Err(Error::Config(format!("non-finite EV state at step {step}")));
    }

    let zero = vec![ControlInput::ZERO; n];
    let (mut solved, mut guess) = match prev {
        Some(p) if p.controls.len() == n => (sqp_solve(&problem, &warm_start_shift(p), cfg.ocp.nu), GuessSource::Warm),
        _ => (sqp_solve(&problem, &zero, cfg.ocp.nu0), GuessSource::Zero),
    };
    if !usable(&solved) && guess == GuessSource::Warm {
        solved = sqp_solve(&problem, &zero, cfg.ocp.nu0);
        guess = GuessSource::Retry;
    }
    let result = if usable(&solved) { solved.ok() } else { None };

    let (applied, record_costs, iterations, converged, max_defect) = match &result {
        Some(r) => (
            r.controls[0],
            r.cost_breakdown,
            r.iterations,
            r.converged,
            r.max_defect(&cfg.vehicle, &cfg.ocp),
        ),
        None => {
            guess = GuessSource::Fallback;
            (
                ControlInput::new(-cfg.bounds.a_d_max, 0.0),
                CostBreakdown::default(),
                0,
                false,
                0.0,
            )
        }
    };
    let record = StepRecord {
        step,
        time: obs.time,
        ev: obs.ev,
        applied,
        min_h,
        costs: record_costs,
        iterations,
        converged,
        solver_failed: result.is_none(),
        guess,
        max_defect,
        selected: selected.iter().map(|(id, _)| *id).collect(),
        lane_leader: lane_leader(obs, cfg),
        solve_time: started.elapsed().as_secs_f64(),
    };
    Ok(StepOutcome {
        applied,
        result,
        record,
    })
}

/// Drives `env` for `duration` seconds (or until a collision or the end of
/// the environment's data).
pub fn run_closed_loop<E: Environment>(
    env: &mut E,
    cfg: &PlannerConfig,
    duration: f64,
    meta: LogMeta,
) -> Result<SimulationLog> {
    if !(duration > 0.0) {
        return Err(Error::Config(format!("duration must be positive, got {duration}")));
    }
    cfg.validate()?;
    let period = env.period();
    let steps = (duration / period - 1e-9).ceil() as usize;
    let mut records = Vec::with_capacity(steps);
    let mut prev: Option<SolveResult> = None;
    let mut status = RunStatus::Completed;
    for step in 0..steps {
        let mut obs = env.observe();
        obs.time = step as f64 * period;
        let report = env.check_collision(&cfg.safety);
        let out = rhc_step(&obs, prev.as_ref(), cfg, step, report.min_h)?;
        if out.record.solver_failed && status == RunStatus::Completed {
            status = RunStatus::SolverFailed { time: obs.time };
        }
        records.push(out.record);
        if report.collided {
            status = RunStatus::Collided { time: obs.time };
            break;
        }
        prev = out.result;
        if !env.step(&out.applied)? {
            break;
        }
    }
    Ok(SimulationLog {
        meta,
        period,
        records,
        status,
    })
}

pub fn write_log_json(log: &SimulationLog, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(log)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_log_json(path: impl AsRef<Path>) -> Result<SimulationLog> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

pub const STEPS_HEADER: [&str; 25] = [
    "step",
    "time",
    "px",
    "py",
    "phi",
    "v_lon",
    "v_lat",
    "omega",
    "accel",
    "steer",
    "min_h",
    "cost_goal",
    "cost_safety",
    "cost_control",
    "cost_terminal",
    "cost_state_penalty",
    "iterations",
    "converged",
    "solver_failed",
    "guess",
    "max_defect",
    "selected",
    "leader_id",
    "leader_dx",
    "solve_time_ms",
];

/// Per-step CSV. The resolved configuration is embedded as leading `#`
/// comment lines; the timing column is last.
pub fn write_steps_csv<W: Write>(log: &SimulationLog, mut w: W) -> Result<()> {
    writeln!(w, "# config_hash: {}", log.meta.config_hash)?;
    writeln!(w, "# seed: {}", log.meta.seed)?;
    for line in log.meta.config.lines() {
        writeln!(w, "# {line}")?;
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(STEPS_HEADER)?;
    for r in &log.records {
        let e = &r.ev;
        let c = &r.costs;
        let nums = [
            r.time, e.px, e.py, e.phi, e.v_lon, e.v_lat, e.omega, r.applied.accel, r.applied.steer,
        ];
        let mut row: Vec<String> = vec![r.step.to_string()];
        row.extend(nums.iter().map(|v| v.to_string()));
        row.push(nonfinite::to_text(r.min_h));
        row.extend(
            [c.goal, c.safety, c.control, c.terminal, c.state_penalty]
                .iter()
                .map(|v| v.to_string()),
        );
        row.push(r.iterations.to_string());
        row.push(r.converged.to_string());
        row.push(r.solver_failed.to_string());
        row.push(r.guess.as_str().into());
        row.push(r.max_defect.to_string());
        row.push(r.selected.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";"));
        match r.lane_leader {
            Some(l) => {
                row.push(l.id.to_string());
                row.push(l.dx.to_string());
            }
            None => {
                row.push(String::new());
                row.push(String::new());
            }
        }
        row.push(format!("{:.3}", r.solve_time * 1e3));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}
