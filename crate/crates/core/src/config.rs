//! Run configuration: a sectioned TOML file naming every model, planner and
//! scenario constant. Missing keys take defaults that depend on the run mode
//! (IDM simulation or replay) and on the task kind.
//!
//! ```toml
//! mode = "sim"
//! seed = 3
//! duration = 40.0
//!
//! [task]
//! v_d = 15.0
//! py_d = -2.0
//!
//! [safety]
//! c = 1.0
//! gamma = 50.0
//!
//! [vehicle]
//! kf = -128916.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::controller::{run_closed_loop, LogMeta, Mode, PlannerConfig, ReplayEnv, SimEnv, SimulationLog};
use crate::costs::{CostWeights, TaskSpec};
use crate::dynamics::{Bounds, VehicleParams, VehicleState};
use crate::error::{Error, Result};
use crate::metrics::MetricsOptions;
use crate::replay::load_trajectories;
use crate::safety::SafetyParams;
use crate::sim::{spawn_scenario, IdmParams, ScenarioConfig};
use crate::solver::OcpConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    #[default]
    None,
    /// Constant safety weights along the horizon (no temporal decay).
    FixedAttention,
}

/// Diagonal weight matrices over the state and input vectors. Only the
/// entries the cost actually uses may be nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostMatrices {
    #[serde(rename = "Q1", skip_serializing_if = "Option::is_none")]
    pub q1: Option<[f64; 6]>,
    #[serde(rename = "R", skip_serializing_if = "Option::is_none")]
    pub r: Option<[f64; 2]>,
    #[serde(rename = "QT", skip_serializing_if = "Option::is_none")]
    pub qt: Option<[f64; 6]>,
}

impl CostMatrices {
    pub fn from_weights(w: &CostWeights) -> Self {
        Self {
            q1: Some([0.0, w.q_lat, 0.0, w.q_vel, 0.0, 0.0]),
            r: Some([w.r_accel, w.r_steer]),
            qt: Some([0.0, 0.0, w.qt_phi, 0.0, 0.0, w.qt_omega]),
        }
    }

    /// Weights with unspecified matrices taken from `base`.
    pub fn weights(&self, base: &CostWeights) -> Result<CostWeights> {
        let check = |name: &str, m: &[f64; 6], used: [usize; 2]| {
            let stray = (0..6).find(|i| !used.contains(i) && m[*i] != 0.0);
            match stray {
                Some(i) => Err(Error::Config(format!(
                    "costs.{name}: entry {i} must be 0 (only entries {} and {} are used)",
                    used[0], used[1]
                ))),
                None => Ok(()),
            }
        };
        let mut w = *base;
        if let Some(q1) = &self.q1 {
            check("Q1", q1, [1, 3])?;
            w.q_lat = q1[1];
            w.q_vel = q1[3];
        }
        if let Some(r) = &self.r {
            w.r_accel = r[0];
            w.r_steer = r[1];
        }
        if let Some(qt) = &self.qt {
            check("QT", qt, [2, 5])?;
            w.qt_phi = qt[2];
            w.qt_omega = qt[5];
        }
        Ok(w)
    }
}

/// Road and traffic layout of the IDM world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub lane_count: usize,
    pub lane_width: f64,
    pub spawn_range: [f64; 2],
    pub sv_count: usize,
    pub sv_speed_range: [f64; 2],
    pub vehicle_length: f64,
    pub recycle: bool,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let s = ScenarioConfig::default();
        Self {
            lane_count: s.lane_count,
            lane_width: s.lane_width,
            spawn_range: s.spawn_range,
            sv_count: s.sv_count,
            sv_speed_range: s.sv_speed_range,
            vehicle_length: s.vehicle_length,
            recycle: s.recycle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplaySection {
    /// Trajectory CSV; relative paths are resolved against the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    /// Dataset time at which the episode starts (defaults to its first
    /// sample).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    /// Episode length (s).
    pub duration: f64,
    pub ablation: Ablation,
    /// Output directory for artifacts. Not part of the serialized config, so
    /// the hash and embedded config do not depend on where a run is written.
    #[serde(skip_serializing)]
    pub out: String,
    pub vehicle: VehicleParams,
    pub bounds: Bounds,
    pub safety: SafetyParams,
    pub costs: CostMatrices,
    pub ocp: OcpConfig,
    pub task: TaskSpec,
    /// Initial EV state; defaults to the target lane at the target speed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ev: Option<VehicleState>,
    pub scenario: ScenarioSection,
    pub idm: IdmParams,
    pub replay: ReplaySection,
    pub metrics: MetricsOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::defaults_for(Mode::Sim)
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Prefixes a validation message with the line of the key it names
/// (`section.key` at the start of the message), if that key is in `source`.
fn anchor(source: &str, err: Error) -> Error {
    let Error::Config(msg) = err else {
        return err;
    };
    let path: String = msg
        .chars()
        .take_while(|c| c.is_alphanumeric() || *c == '_' || *c == '.')
        .collect();
    let Some((section, key)) = path.split_once('.') else {
        return Error::Config(msg);
    };
    let mut current = "";
    let mut header_line = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim();
            if current == section {
                header_line = Some(i + 1);
            }
            continue;
        }
        let lhs = line.split('=').next().unwrap_or("").trim();
        if current == section && lhs == key {
            return Error::Config(format!("line {}: {msg}", i + 1));
        }
    }
    match header_line {
        Some(l) => Error::Config(format!("line {l}: {msg}")),
        None => Error::Config(msg),
    }
}

impl RunConfig {
    /// All defaults for `mode`: 10 Hz control with a 5 s horizon for the
    /// IDM world, 12.5 Hz with 70 steps for replay.
    pub fn defaults_for(mode: Mode) -> Self {
        let (ocp, duration) = match mode {
            Mode::Sim => (OcpConfig::default(), 40.0),
            Mode::Replay => (
                OcpConfig {
                    n: 70,
                    ts: 0.08,
                    ..OcpConfig::default()
                },
                20.0,
            ),
        };
        Self {
            mode,
            seed: 0,
            duration,
            ablation: Ablation::None,
            out: "out".into(),
            vehicle: VehicleParams::default(),
            bounds: Bounds::default(),
            safety: SafetyParams::default(),
            costs: CostMatrices::default(),
            ocp,
            task: TaskSpec::default(),
            ev: None,
            scenario: ScenarioSection::default(),
            idm: IdmParams::default(),
            replay: ReplaySection::default(),
            metrics: MetricsOptions::default(),
        }
    }

    /// Parses and validates a config. `base_dir` anchors a relative dataset
    /// path. Errors carry the offending line where it can be located. Task
    /// derived defaults (cost matrices, EV start) stay unset until
    /// [`RunConfig::resolved`], so later task edits still reach them.
    pub fn from_toml_str(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let user: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        // structural pass for unknown keys and wrong types, with line spans
        toml::from_str::<RunConfig>(text).map_err(|e| Error::Config(e.to_string().trim_end().into()))?;

        let mode = match user.get("mode").and_then(|v| v.as_str()) {
            Some("replay") => Mode::Replay,
            _ => Mode::Sim,
        };
        let mut merged = toml::Table::try_from(Self::defaults_for(mode))
            .map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, user);
        let mut cfg: RunConfig = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if let (Some(ds), Some(dir)) = (&cfg.replay.dataset, base_dir) {
            let p = PathBuf::from(ds);
            if p.is_relative() {
                cfg.replay.dataset = Some(dir.join(p).to_string_lossy().into_owned());
            }
        }
        cfg.validate().map_err(|e| anchor(text, e))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text, path.parent())
    }

    /// Copy with every derived default written out: cost matrices from the
    /// task kind and the EV start state from the task.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        let base = CostWeights::for_task(self.task.task_kind);
        let w = self.costs.weights(&base).unwrap_or(base);
        let full = CostMatrices::from_weights(&w);
        out.costs = CostMatrices {
            q1: self.costs.q1.or(full.q1),
            r: self.costs.r.or(full.r),
            qt: self.costs.qt.or(full.qt),
        };
        if out.ev.is_none() {
            out.ev = Some(VehicleState::new(0.0, self.task.py_d, 0.0, self.task.v_d, 0.0, 0.0));
        }
        out
    }

    pub fn weights(&self) -> Result<CostWeights> {
        let base = CostWeights::for_task(self.task.task_kind);
        self.costs.weights(&base)
    }

    pub fn ev_init(&self) -> VehicleState {
        self.ev
            .unwrap_or_else(|| VehicleState::new(0.0, self.task.py_d, 0.0, self.task.v_d, 0.0, 0.0))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Config(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        self.planner()?.validate()?;
        self.metrics.validate()?;
        match self.mode {
            Mode::Sim => self.scenario_config().validate(),
            Mode::Replay => {
                let Some(ds) = &self.replay.dataset else {
                    return Err(Error::Config("replay.dataset is required in replay mode".into()));
                };
                if !Path::new(ds).is_file() {
                    return Err(Error::Config(format!("replay.dataset: file not found: {ds}")));
                }
                if !self.ev_init().is_finite() {
                    return Err(Error::Config("ev initial state must be finite".into()));
                }
                Ok(())
            }
        }
    }

    pub fn planner(&self) -> Result<PlannerConfig> {
        let safety = match self.ablation {
            Ablation::None => self.safety.clone(),
            Ablation::FixedAttention => self.safety.with_fixed_attention(),
        };
        Ok(PlannerConfig {
            vehicle: self.vehicle,
            bounds: self.bounds,
            safety,
            weights: self.weights()?,
            task: self.task,
            ocp: self.ocp,
            lane_half_width: self.metrics.lane_band,
        })
    }

    pub fn scenario_config(&self) -> ScenarioConfig {
        let s = &self.scenario;
        ScenarioConfig {
            lane_count: s.lane_count,
            lane_width: s.lane_width,
            spawn_range: s.spawn_range,
            sv_count: s.sv_count,
            sv_speed_range: s.sv_speed_range,
            vehicle_length: s.vehicle_length,
            recycle: s.recycle,
            idm: self.idm,
            ev_init: self.ev_init(),
            task: self.task,
            duration: self.duration,
            rng_seed: self.seed,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// First 16 hex digits of the SHA-256 of the resolved TOML.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.resolved().to_toml()?.as_bytes());
        Ok(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Runs one closed-loop episode as configured.
    pub fn run(&self) -> Result<SimulationLog> {
        let cfg = self.resolved();
        let planner = cfg.planner()?;
        let meta = LogMeta {
            config_hash: cfg.hash()?,
            seed: cfg.seed,
            mode: cfg.mode,
            config: cfg.to_toml()?,
        };
        match cfg.mode {
            Mode::Sim => {
                let scenario = cfg.scenario_config();
                let world = spawn_scenario(&scenario)?;
                let mut env = SimEnv {
                    scenario,
                    world,
                    vehicle: cfg.vehicle,
                    period: cfg.ocp.ts,
                    substeps: cfg.ocp.substeps,
                };
                run_closed_loop(&mut env, &planner, cfg.duration, meta)
            }
            Mode::Replay => {
                let path = cfg
                    .replay
                    .dataset
                    .as_deref()
                    .ok_or_else(|| Error::Config("replay.dataset is required in replay mode".into()))?;
                let ds = load_trajectories(path)?;
                let start = cfg.replay.start.unwrap_or(ds.start);
                let mut env = ReplayEnv::new(ds, cfg.ev_init(), cfg.vehicle, start, cfg.ocp.ts, cfg.ocp.substeps)?;
                run_closed_loop(&mut env, &planner, cfg.duration, meta)
            }
        }
    }
}
