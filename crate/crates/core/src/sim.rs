//! Synthetic multi-lane traffic: IDM car-following surrounding vehicles on a
//! straight unidirectional road, seeded scenario generation, world stepping
//! and collision monitoring.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::costs::TaskSpec;
use crate::dynamics::{shoot_interval, ControlInput, VehicleParams, VehicleState};
use crate::error::{Error, Result};
use crate::prediction::SvId;
use crate::safety::{barrier_h, SafetyParams, SvState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdmParams {
    /// Minimum bumper-to-bumper gap (m).
    pub s0: f64,
    /// Safe time headway (s).
    pub headway: f64,
    pub a_max: f64,
    pub b_comf: f64,
    pub delta_exp: f64,
    /// Magnitude of the hardest deceleration the model may output.
    pub b_hard: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            s0: 1.0,
            headway: 1.0,
            a_max: 1.5,
            b_comf: 1.5,
            delta_exp: 4.0,
            b_hard: 8.0,
        }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("idm.s0", self.s0),
            ("idm.headway", self.headway),
            ("idm.a_max", self.a_max),
            ("idm.b_comf", self.b_comf),
            ("idm.delta_exp", self.delta_exp),
            ("idm.b_hard", self.b_hard),
        ];
        for (name, v) in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Desired dynamic gap `s*`.
    pub fn desired_gap(&self, v: f64, v_lead: f64) -> f64 {
        self.s0 + v * self.headway + v * (v - v_lead) / (2.0 * (self.a_max * self.b_comf).sqrt())
    }
}

/// IDM acceleration for a follower at speed `v` with desired speed `v0`,
/// `gap` metres behind a leader moving at `v_lead`.
pub fn idm_accel(gap: f64, v: f64, v_lead: f64, v0: f64, p: &IdmParams) -> Result<f64> {
    if !(gap > 0.0) {
        return Err(Error::VehicleOverlap { gap });
    }
    let s_star = p.desired_gap(v, v_lead);
    let free = (v / v0).powf(p.delta_exp);
    let a = p.a_max * (1.0 - free - (s_star / gap).powi(2));
    Ok(a.clamp(-p.b_hard, p.a_max))
}

/// Free-road IDM acceleration (no leader).
pub fn idm_free_accel(v: f64, v0: f64, p: &IdmParams) -> f64 {
    (p.a_max * (1.0 - (v / v0).powf(p.delta_exp))).clamp(-p.b_hard, p.a_max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub lane_count: usize,
    pub lane_width: f64,
    /// Longitudinal spawn interval relative to the EV (m).
    pub spawn_range: [f64; 2],
    pub sv_count: usize,
    pub sv_speed_range: [f64; 2],
    /// Bumper-to-bumper length of every vehicle (m).
    pub vehicle_length: f64,
    /// Move vehicles that leave the spawn window to its opposite end so the
    /// traffic density around the EV stays constant.
    pub recycle: bool,
    pub idm: IdmParams,
    pub ev_init: VehicleState,
    pub task: TaskSpec,
    pub duration: f64,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let task = TaskSpec::default();
        Self {
            lane_count: 6,
            lane_width: 4.0,
            spawn_range: [-50.0, 130.0],
            sv_count: 18,
            sv_speed_range: [7.2, 12.0],
            vehicle_length: 4.5,
            recycle: true,
            idm: IdmParams::default(),
            ev_init: VehicleState::new(0.0, task.py_d, 0.0, task.v_d, 0.0, 0.0),
            task,
            duration: 40.0,
            rng_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lane_count == 0 {
            return Err(Error::Config("scenario.lane_count must be at least 1".into()));
        }
        if !(self.lane_width > 0.0) {
            return Err(Error::Config("scenario.lane_width must be positive".into()));
        }
        let [lo, hi] = self.spawn_range;
        if !(lo < hi) {
            return Err(Error::Config(format!(
                "scenario.spawn_range: min {lo} must be below max {hi}"
            )));
        }
        let [vlo, vhi] = self.sv_speed_range;
        if !(vlo > 0.0 && vlo <= vhi) {
            return Err(Error::Config(format!(
                "scenario.sv_speed_range must satisfy 0 < min <= max, got [{vlo}, {vhi}]"
            )));
        }
        if !(self.vehicle_length > 0.0) {
            return Err(Error::Config("scenario.vehicle_length must be positive".into()));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Config(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if !self.ev_init.is_finite() {
            return Err(Error::Config("ev initial state must be finite".into()));
        }
        self.idm.validate()
    }

    /// Lateral coordinate of lane `lane`'s centerline; lanes are centered on
    /// `y = 0` with lane 0 the lowest.
    pub fn lane_center(&self, lane: usize) -> f64 {
        (lane as f64 - (self.lane_count as f64 - 1.0) / 2.0) * self.lane_width
    }

    /// Lane whose centerline is nearest to `y`.
    pub fn lane_of(&self, y: f64) -> usize {
        let offset = y / self.lane_width + (self.lane_count as f64 - 1.0) / 2.0;
        offset.round().clamp(0.0, (self.lane_count - 1) as f64) as usize
    }

    /// Lanes the EV body overlaps at lateral position `y`.
    fn lanes_occupied(&self, y: f64, half_width: f64) -> Vec<usize> {
        (0..self.lane_count)
            .filter(|&l| (self.lane_center(l) - y).abs() < self.lane_width / 2.0 + half_width)
            .collect()
    }

    /// Centre-to-centre spacing required in front of a follower at speed `v`.
    fn spacing(&self, v: f64) -> f64 {
        self.vehicle_length + self.idm.s0 + v * self.idm.headway
    }
}

/// An IDM-driven surrounding vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimVehicle {
    pub id: SvId,
    pub lane: usize,
    pub state: SvState,
    /// Desired speed.
    pub v0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub time: f64,
    pub ev: VehicleState,
    pub svs: Vec<SimVehicle>,
}

impl WorldState {
    pub fn sv_states(&self) -> Vec<(SvId, SvState)> {
        self.svs.iter().map(|s| (s.id, s.state)).collect()
    }
}

/// Half the EV's body width used to decide which lanes it blocks.
const EV_HALF_WIDTH: f64 = 0.9;
/// Smallest gap fed to the IDM when the EV cuts in closer than a vehicle
/// length.
const MIN_EV_GAP: f64 = 0.1;
const SPAWN_ATTEMPTS: usize = 1000;

fn fits(cfg: &ScenarioConfig, placed: &[SimVehicle], lane: usize, x: f64, v: f64) -> bool {
    placed.iter().filter(|o| o.lane == lane).all(|o| {
        let d = x - o.state.ox;
        // whoever is behind needs its own headway spacing
        if d >= 0.0 {
            d >= cfg.spacing(o.state.ovx)
        } else {
            -d >= cfg.spacing(v)
        }
    })
}

fn clear_of_ev(cfg: &ScenarioConfig, ev: &VehicleState, lane: usize, x: f64, v: f64) -> bool {
    if !cfg.lanes_occupied(ev.py, EV_HALF_WIDTH).contains(&lane) {
        return true;
    }
    let d = x - ev.px;
    if d >= 0.0 {
        d >= cfg.spacing(ev.v_lon)
    } else {
        -d >= cfg.spacing(v)
    }
}

/// Places `sv_count` vehicles at random lanes and positions within the spawn
/// window, each cruising at its own desired speed. Vehicles are spaced at
/// least one vehicle length plus the IDM steady-state gap apart, and keep
/// the same clearance to the EV.
pub fn spawn_scenario(cfg: &ScenarioConfig) -> Result<WorldState> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let ev = cfg.ev_init;
    let [lo, hi] = cfg.spawn_range;
    let [vlo, vhi] = cfg.sv_speed_range;
    let mut svs: Vec<SimVehicle> = Vec::with_capacity(cfg.sv_count);
    for index in 0..cfg.sv_count {
        let v0 = if vhi > vlo { rng.random_range(vlo..vhi) } else { vlo };
        let mut placed = false;
        for _ in 0..SPAWN_ATTEMPTS {
            let lane = rng.random_range(0..cfg.lane_count);
            let x = ev.px + rng.random_range(lo..hi);
            if fits(cfg, &svs, lane, x, v0) && clear_of_ev(cfg, &ev, lane, x, v0) {
                svs.push(SimVehicle {
                    id: index as SvId + 1,
                    lane,
                    state: SvState::new(x, cfg.lane_center(lane), v0, 0.0),
                    v0,
                });
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::InfeasiblePacking {
                index,
                attempts: SPAWN_ATTEMPTS,
            });
        }
    }
    Ok(WorldState {
        time: 0.0,
        ev,
        svs,
    })
}

/// Nearest vehicle ahead of position `x` in `lane` among the SVs (excluding
/// `skip`) and the EV: returns (gap, leader speed).
fn leader(
    cfg: &ScenarioConfig,
    w: &WorldState,
    skip: usize,
    lane: usize,
    x: f64,
) -> Option<(f64, f64, bool)> {
    let mut best: Option<(f64, f64, bool)> = None;
    for (j, o) in w.svs.iter().enumerate() {
        if j == skip || o.lane != lane || o.state.ox < x {
            continue;
        }
        // equal positions: the lower index leads, so exactly one of a pair follows
        if o.state.ox == x && j > skip {
            continue;
        }
        let d = o.state.ox - x;
        if best.is_none_or(|b| d < b.0) {
            best = Some((d, o.state.ovx, false));
        }
    }
    if cfg.lanes_occupied(w.ev.py, EV_HALF_WIDTH).contains(&lane) && w.ev.px >= x {
        let d = w.ev.px - x;
        if best.is_none_or(|b| d < b.0) {
            best = Some((d, w.ev.v_lon * w.ev.phi.cos() - w.ev.v_lat * w.ev.phi.sin(), true));
        }
    }
    best
}

/// Advances the world by `dt`: the EV integrates the bicycle model with
/// `substeps` RK4 steps, SVs follow their same-lane leader with the IDM
/// (semi-implicit Euler) and stay on their centerline.
pub fn step_world(
    cfg: &ScenarioConfig,
    w: &WorldState,
    ev_u: &ControlInput,
    dt: f64,
    substeps: usize,
    vehicle: &VehicleParams,
) -> Result<WorldState> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    let mut accels = Vec::with_capacity(w.svs.len());
    for (i, sv) in w.svs.iter().enumerate() {
        let v = sv.state.ovx;
        let a = match leader(cfg, w, i, sv.lane, sv.state.ox) {
            None => idm_free_accel(v, sv.v0, &cfg.idm),
            Some((d, v_lead, is_ev)) => {
                let gap = d - cfg.vehicle_length;
                let gap = if is_ev { gap.max(MIN_EV_GAP) } else { gap };
                idm_accel(gap, v, v_lead, sv.v0, &cfg.idm)?
            }
        };
        accels.push(a);
    }

    let ev = shoot_interval(&w.ev, ev_u, dt, substeps, vehicle);
    let mut svs: Vec<SimVehicle> = w
        .svs
        .iter()
        .zip(&accels)
        .map(|(sv, a)| {
            let v = (sv.state.ovx + a * dt).max(0.0);
            let x = sv.state.ox + v * dt;
            SimVehicle {
                state: SvState::new(x, cfg.lane_center(sv.lane), v, 0.0),
                ..*sv
            }
        })
        .collect();
    if cfg.recycle {
        recycle(cfg, &ev, &mut svs);
    }
    Ok(WorldState {
        time: w.time + dt,
        ev,
        svs,
    })
}

/// Moves vehicles that dropped behind the spawn window to its front edge
/// (and those that ran ahead of it to its rear edge), keeping lane and speed.
/// A move is deferred while the destination spot is occupied.
fn recycle(cfg: &ScenarioConfig, ev: &VehicleState, svs: &mut [SimVehicle]) {
    let [lo, hi] = cfg.spawn_range;
    for i in 0..svs.len() {
        let rel = svs[i].state.ox - ev.px;
        let target = if rel < lo {
            ev.px + hi
        } else if rel > hi + (hi - lo) {
            ev.px + lo
        } else {
            continue;
        };
        let sv = svs[i];
        let others: Vec<SimVehicle> = svs
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, o)| *o)
            .collect();
        if fits(cfg, &others, sv.lane, target, sv.state.ovx)
            && clear_of_ev(cfg, ev, sv.lane, target, sv.state.ovx)
        {
            svs[i].state.ox = target;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionReport {
    pub collided: bool,
    pub margin_violated: bool,
    #[serde(with = "crate::serde_util::nonfinite")]
    pub min_h: f64,
}

/// Barrier check against every vehicle in the world. An empty world reports
/// `min_h = +inf`.
pub fn check_collision(w: &WorldState, sp: &SafetyParams) -> CollisionReport {
    let min_h = w
        .svs
        .iter()
        .map(|s| barrier_h(w.ev.position(), s.state.position(), sp))
        .fold(f64::INFINITY, f64::min);
    CollisionReport {
        collided: min_h < 0.0,
        margin_violated: (0.0..sp.c).contains(&min_h),
        min_h,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty() -> ScenarioConfig {
        ScenarioConfig {
            sv_count: 0,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn idm_examples() {
        let p = IdmParams::default();
        let v0 = 10.0;
        let a = idm_accel(1e9, v0, v0, v0, &p).unwrap();
        assert!(a.abs() < 1e-9 && a <= 0.0, "{a}");
        assert_eq!(idm_accel(1e9, 0.0, 5.0, v0, &p).unwrap(), p.a_max);

        let v = 0.5 * v0;
        let s_star = p.desired_gap(v, v);
        let a = idm_accel(s_star, v, v, v0, &p).unwrap();
        assert!((a + 0.0625 * p.a_max).abs() < 1e-9, "{a}");
    }

    #[test]
    fn idm_rejects_overlap_and_clamps() {
        let p = IdmParams::default();
        assert!(matches!(idm_accel(0.0, 5.0, 5.0, 10.0, &p), Err(Error::VehicleOverlap { .. })));
        assert!(matches!(idm_accel(-1.0, 5.0, 5.0, 10.0, &p), Err(Error::VehicleOverlap { .. })));
        assert_eq!(idm_accel(0.01, 10.0, 0.0, 10.0, &p).unwrap(), -p.b_hard);
    }

    #[test]
    fn idm_platoon_equilibrium() {
        let p = IdmParams::default();
        let v0 = 10.0;
        // the equilibrium gap at v < v0 solves 1 - (v/v0)^4 = (s*/s)^2
        let v = 8.0;
        let s_star = p.desired_gap(v, v);
        let gap = s_star / (1.0 - (v / v0).powi(4)).sqrt();
        for _ in 0..5 {
            assert!(idm_accel(gap, v, v, v0, &p).unwrap().abs() < 1e-6);
        }
    }

    #[test]
    fn lane_geometry() {
        let c = ScenarioConfig::default();
        let centers: Vec<f64> = (0..6).map(|l| c.lane_center(l)).collect();
        assert_eq!(centers, vec![-10.0, -6.0, -2.0, 2.0, 6.0, 10.0]);
        assert_eq!(c.lane_of(-2.0), 2);
        assert_eq!(c.lane_of(-0.1), 2);
        assert_eq!(c.lane_of(0.1), 3);
        assert_eq!(c.lane_of(-50.0), 0);
        assert_eq!(c.lanes_occupied(-2.0, EV_HALF_WIDTH), vec![2]);
        assert_eq!(c.lanes_occupied(0.0, EV_HALF_WIDTH), vec![2, 3]);
    }

    #[test]
    fn spawn_empty_and_deterministic() {
        let w = spawn_scenario(&empty()).unwrap();
        assert!(w.svs.is_empty());
        assert_eq!(w.ev, empty().ev_init);

        let cfg = ScenarioConfig {
            rng_seed: 7,
            ..ScenarioConfig::default()
        };
        assert_eq!(spawn_scenario(&cfg).unwrap(), spawn_scenario(&cfg).unwrap());
        let other = ScenarioConfig {
            rng_seed: 8,
            ..cfg.clone()
        };
        assert_ne!(spawn_scenario(&cfg).unwrap(), spawn_scenario(&other).unwrap());
    }

    #[test]
    fn spawn_respects_gaps() {
        for seed in 0..20 {
            let cfg = ScenarioConfig {
                rng_seed: seed,
                ..ScenarioConfig::default()
            };
            let w = spawn_scenario(&cfg).unwrap();
            assert_eq!(w.svs.len(), 18);
            for (i, a) in w.svs.iter().enumerate() {
                assert!(a.state.ox - w.ev.px >= -50.0 && a.state.ox - w.ev.px < 130.0);
                assert!((7.2..12.0).contains(&a.v0));
                assert_eq!(a.state.oy, cfg.lane_center(a.lane));
                for b in &w.svs[i + 1..] {
                    if a.lane == b.lane {
                        let gap = (a.state.ox - b.state.ox).abs() - cfg.vehicle_length;
                        assert!(gap >= cfg.idm.s0, "seed {seed}: gap {gap}");
                    }
                }
            }
            assert!(check_collision(&w, &SafetyParams::default()).min_h > 0.0);
        }
    }

    #[test]
    fn spawn_infeasible_packing() {
        let cfg = ScenarioConfig {
            lane_count: 1,
            spawn_range: [0.0, 10.0],
            sv_count: 5,
            ..ScenarioConfig::default()
        };
        assert!(matches!(spawn_scenario(&cfg), Err(Error::InfeasiblePacking { .. })));
    }

    #[test]
    fn ev_coasts_on_empty_road() {
        let cfg = empty();
        let w = spawn_scenario(&cfg).unwrap();
        let n = step_world(&cfg, &w, &ControlInput::ZERO, 0.1, 5, &VehicleParams::default()).unwrap();
        assert!((n.ev.px - w.ev.px - w.ev.v_lon * 0.1).abs() < 1e-9);
        assert!((n.time - 0.1).abs() < 1e-15);
    }

    fn lone(x: f64, lane: usize, v: f64, v0: f64, id: SvId, cfg: &ScenarioConfig) -> SimVehicle {
        SimVehicle {
            id,
            lane,
            state: SvState::new(x, cfg.lane_center(lane), v, 0.0),
            v0,
        }
    }

    #[test]
    fn lone_sv_accelerates_and_follower_brakes() {
        let cfg = ScenarioConfig {
            recycle: false,
            ..empty()
        };
        let p = VehicleParams::default();
        let mut w = spawn_scenario(&cfg).unwrap();
        w.svs.push(lone(60.0, 0, 8.0, 11.0, 1, &cfg));
        let n = step_world(&cfg, &w, &ControlInput::ZERO, 0.1, 5, &p).unwrap();
        assert!(n.svs[0].state.ovx > 8.0);

        // follower closing on a slower leader
        w.svs.push(lone(50.0, 0, 12.0, 12.0, 2, &cfg));
        let n = step_world(&cfg, &w, &ControlInput::ZERO, 0.1, 5, &p).unwrap();
        assert!(n.svs[1].state.ovx < 12.0);
        let (gap, v, vl) = (10.0 - cfg.vehicle_length, 12.0, 8.0);
        assert!(idm_accel(gap, v, vl, 12.0, &cfg.idm).unwrap() < 0.0);
    }

    #[test]
    fn sv_follows_ev_as_leader() {
        let cfg = ScenarioConfig {
            recycle: false,
            ..empty()
        };
        let mut w = spawn_scenario(&cfg).unwrap();
        let ev_lane = cfg.lane_of(w.ev.py);
        w.svs.push(lone(-10.0, ev_lane, 12.0, 12.0, 1, &cfg));
        w.ev.v_lon = 5.0;
        let n = step_world(&cfg, &w, &ControlInput::ZERO, 0.1, 5, &VehicleParams::default()).unwrap();
        assert!(n.svs[0].state.ovx < 12.0);
        // overlapping the EV does not abort the world
        w.svs[0].state.ox = -2.0;
        assert!(step_world(&cfg, &w, &ControlInput::ZERO, 0.1, 5, &VehicleParams::default()).is_ok());
    }

    #[test]
    fn stepping_has_no_hidden_state() {
        let cfg = ScenarioConfig {
            rng_seed: 3,
            ..ScenarioConfig::default()
        };
        let p = VehicleParams::default();
        let w = spawn_scenario(&cfg).unwrap();
        let u = ControlInput::new(0.3, 0.01);
        let a = step_world(&cfg, &step_world(&cfg, &w, &u, 0.1, 5, &p).unwrap(), &u, 0.1, 5, &p).unwrap();
        let w2 = w.clone();
        let b1 = step_world(&cfg, &w2, &u, 0.1, 5, &p).unwrap();
        let b = step_world(&cfg, &b1, &u, 0.1, 5, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn idm_traffic_never_overlaps() {
        let p = VehicleParams::default();
        for seed in 0..5 {
            let cfg = ScenarioConfig {
                rng_seed: seed,
                ..ScenarioConfig::default()
            };
            let mut w = spawn_scenario(&cfg).unwrap();
            // EV matches the traffic so it never blocks a lane abruptly
            w.ev.v_lon = 10.0;
            for _ in 0..600 {
                w = step_world(&cfg, &w, &ControlInput::ZERO, 0.1, 5, &p).unwrap();
                for (i, a) in w.svs.iter().enumerate() {
                    for b in &w.svs[i + 1..] {
                        if a.lane == b.lane {
                            assert!((a.state.ox - b.state.ox).abs() > cfg.vehicle_length);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn recycling_keeps_traffic_around_the_ev() {
        let cfg = ScenarioConfig {
            rng_seed: 1,
            ..ScenarioConfig::default()
        };
        let p = VehicleParams::default();
        let mut w = spawn_scenario(&cfg).unwrap();
        // move the EV to an empty lane-free corridor: only its speed matters
        w.ev.py = 20.0;
        for _ in 0..400 {
            w = step_world(&cfg, &w, &ControlInput::ZERO, 0.1, 5, &p).unwrap();
        }
        let near = w
            .svs
            .iter()
            .filter(|s| (s.state.ox - w.ev.px).abs() < 200.0)
            .count();
        assert!(near >= 15, "{near}");
    }

    #[test]
    fn collision_examples() {
        let sp = SafetyParams::default();
        let w = spawn_scenario(&empty()).unwrap();
        let r = check_collision(&w, &sp);
        assert_eq!(r.min_h, f64::INFINITY);
        assert!(!r.collided && !r.margin_violated);

        let mut w = WorldState {
            time: 0.0,
            ev: VehicleState::new(0.0, 0.0, 0.0, 10.0, 0.0, 0.0),
            svs: vec![SimVehicle {
                id: 1,
                lane: 0,
                state: SvState::new(-3.0, 0.0, 0.0, 0.0),
                v0: 10.0,
            }],
        };
        let r = check_collision(&w, &sp);
        assert_eq!(r.min_h, 0.0);
        assert!(!r.collided && r.margin_violated);

        w.svs[0].state.ox = -1.0;
        let r = check_collision(&w, &sp);
        assert!((r.min_h - (1.0 / 9.0 - 1.0)).abs() < 1e-12);
        assert!(r.collided);
    }
}
