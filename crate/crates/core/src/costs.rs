//! Task-oriented cost terms and the running-cost assembly.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Bounds, ControlInput, VehicleState};
use crate::error::{Error, Result};
use crate::safety::{safety_cost, SafetyParams, SvState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    #[default]
    Cruise,
    Racing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSpec {
    pub v_d: f64,
    pub py_d: f64,
    #[serde(default)]
    pub task_kind: TaskKind,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            v_d: 15.0,
            py_d: -2.0,
            task_kind: TaskKind::Cruise,
        }
    }
}

impl TaskSpec {
    pub fn validate(&self, bounds: &Bounds) -> Result<()> {
        if !(self.v_d >= bounds.v_lon_min && self.v_d <= bounds.v_lon_max) {
            return Err(Error::Config(format!(
                "task.v_d = {} violates the bounds check: must lie in [v_lon_min, v_lon_max] = [{}, {}]",
                self.v_d, bounds.v_lon_min, bounds.v_lon_max
            )));
        }
        if !(self.py_d >= bounds.py_min && self.py_d <= bounds.py_max) {
            return Err(Error::Config(format!(
                "task.py_d = {} violates the bounds check: must lie in [py_min, py_max] = [{}, {}]",
                self.py_d, bounds.py_min, bounds.py_max
            )));
        }
        Ok(())
    }
}

/// Nonzero diagonal entries of the goal, control, and terminal weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub q_lat: f64,
    pub q_vel: f64,
    pub r_accel: f64,
    pub r_steer: f64,
    pub qt_phi: f64,
    pub qt_omega: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self::cruise()
    }
}

impl CostWeights {
    pub fn cruise() -> Self {
        Self {
            q_lat: 1e3,
            q_vel: 1e5,
            r_accel: 5e4,
            r_steer: 5e6,
            qt_phi: 1e10,
            qt_omega: 1e8,
        }
    }

    /// Cruise weights with the relaxed terminal block used for racing.
    pub fn racing() -> Self {
        Self {
            qt_phi: 1e4,
            qt_omega: 1e4,
            ..Self::cruise()
        }
    }

    pub fn for_task(kind: TaskKind) -> Self {
        match kind {
            TaskKind::Cruise => Self::cruise(),
            TaskKind::Racing => Self::racing(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.q_lat,
            self.q_vel,
            self.r_accel,
            self.r_steer,
            self.qt_phi,
            self.qt_omega,
        ];
        if all.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Config(format!("cost weights must be >= 0: {all:?}")));
        }
        Ok(())
    }
}

pub fn goal_cost(x: &VehicleState, task: &TaskSpec, w: &CostWeights) -> f64 {
    let ey = x.py - task.py_d;
    let ev = x.v_lon - task.v_d;
    w.q_lat * ey * ey + w.q_vel * ev * ev
}

pub fn terminal_cost(x: &VehicleState, w: &CostWeights) -> f64 {
    w.qt_phi * x.phi * x.phi + w.qt_omega * x.omega * x.omega
}

pub fn control_cost(u: &ControlInput, w: &CostWeights) -> f64 {
    w.r_accel * u.accel * u.accel + w.r_steer * u.steer * u.steer
}

/// Stage cost at prediction step `k`.
pub fn running_cost(
    x: &VehicleState,
    u: &ControlInput,
    svs: &[SvState],
    k: usize,
    task: &TaskSpec,
    w: &CostWeights,
    sp: &SafetyParams,
) -> f64 {
    goal_cost(x, task, w) + safety_cost(x, svs, k as f64, sp) + control_cost(u, w)
}

/// Per-term totals of a trajectory objective.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub goal: f64,
    pub safety: f64,
    pub control: f64,
    pub terminal: f64,
    /// Quadratic penalty on state-bound violations.
    pub state_penalty: f64,
}

impl CostBreakdown {
    pub fn running(&self) -> f64 {
        self.goal + self.safety + self.control
    }

    pub fn total(&self) -> f64 {
        self.running() + self.terminal + self.state_penalty
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub dominant: bool,
    pub terminal: f64,
    pub running: f64,
    pub message: String,
}

/// Checks whether the terminal cost exceeds the accumulated running cost.
/// This is a diagnostic only; callers log the message and carry on.
pub fn check_terminal_dominance(costs: &CostBreakdown) -> DominanceReport {
    let running = costs.running();
    let dominant = costs.terminal > running;
    let message = if dominant {
        format!(
            "terminal cost {:.6e} exceeds running cost {:.6e}",
            costs.terminal, running
        )
    } else {
        format!(
            "warning: terminal cost {:.6e} does not exceed running cost {:.6e}",
            costs.terminal, running
        )
    };
    DominanceReport {
        dominant,
        terminal: costs.terminal,
        running,
        message,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::safety::spatial_h;
    use proptest::prelude::*;

    fn on_target(task: &TaskSpec) -> VehicleState {
        VehicleState::new(0.0, task.py_d, 0.0, task.v_d, 0.0, 0.0)
    }

    #[test]
    fn goal_cost_examples() {
        let task = TaskSpec::default();
        let w = CostWeights::cruise();
        assert_eq!(goal_cost(&on_target(&task), &task, &w), 0.0);
        let mut x = on_target(&task);
        x.v_lon += 1.0;
        assert_eq!(goal_cost(&x, &task, &w), 1e5);
        let mut x = on_target(&task);
        x.py += 1.0;
        assert_eq!(goal_cost(&x, &task, &w), 1e3);
    }

    #[test]
    fn terminal_cost_examples() {
        let w = CostWeights::cruise();
        assert_eq!(terminal_cost(&VehicleState::default(), &w), 0.0);
        let x = VehicleState::new(0.0, 0.0, 0.01, 0.0, 0.0, 0.0);
        assert!((terminal_cost(&x, &w) - 1e6).abs() < 1e-6);
        let x = VehicleState::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.1);
        assert!((terminal_cost(&x, &w) - 1e6).abs() < 1e-6);
    }

    #[test]
    fn control_cost_examples() {
        let w = CostWeights::cruise();
        assert_eq!(control_cost(&ControlInput::ZERO, &w), 0.0);
        assert_eq!(control_cost(&ControlInput::new(1.0, 0.0), &w), 5e4);
        assert!((control_cost(&ControlInput::new(0.0, 0.1), &w) - 5e4).abs() < 1e-6);
    }

    #[test]
    fn running_cost_examples() {
        let task = TaskSpec::default();
        let w = CostWeights::cruise();
        let sp = SafetyParams::default();
        let x = on_target(&task);
        assert_eq!(running_cost(&x, &ControlInput::ZERO, &[], 0, &task, &w, &sp), 0.0);

        // offset (3, 2) puts the vehicle exactly at h = c = 1
        let sv = SvState::new(3.0, task.py_d + 2.0, 0.0, 0.0);
        assert_eq!(spatial_h(&x, &sv, &sp), 0.5);
        let c = running_cost(&x, &ControlInput::ZERO, &[sv], 0, &task, &w, &sp);
        assert!((c - 25000.0).abs() < 1e-9, "{c}");

        let y = VehicleState::new(1.0, -1.3, 0.02, 13.0, 0.1, 0.01);
        let u = ControlInput::new(0.4, -0.03);
        let total = running_cost(&y, &u, &[sv], 3, &task, &w, &sp);
        let parts = goal_cost(&y, &task, &w)
            + safety_cost(&y, &[sv], 3.0, &sp)
            + control_cost(&u, &w);
        assert_eq!(total, parts);
    }

    #[test]
    fn dominance_examples() {
        let r = check_terminal_dominance(&CostBreakdown::default());
        assert!(!r.dominant);
        assert!(r.message.starts_with("warning"));

        let w = CostWeights::cruise();
        let terminal = terminal_cost(&VehicleState::new(0.0, 0.0, 0.01, 0.0, 0.0, 0.0), &w);
        let r = check_terminal_dominance(&CostBreakdown {
            goal: 1e4,
            terminal,
            ..Default::default()
        });
        assert!(r.dominant);

        // relaxed racing block: a small heading residue no longer dominates
        let w = CostWeights::racing();
        let terminal = terminal_cost(&VehicleState::new(0.0, 0.0, 0.01, 0.0, 0.0, 0.0), &w);
        let r = check_terminal_dominance(&CostBreakdown {
            goal: 1e4,
            terminal,
            ..Default::default()
        });
        assert!(!r.dominant);
    }

    #[test]
    fn task_validation_uses_bounds() {
        let b = Bounds::default();
        assert!(TaskSpec::default().validate(&b).is_ok());
        let err = TaskSpec {
            v_d: 30.0,
            ..Default::default()
        }
        .validate(&b)
        .unwrap_err();
        assert!(err.to_string().contains("bounds check"));
        assert!(TaskSpec {
            py_d: 11.0,
            ..Default::default()
        }
        .validate(&b)
        .is_err());
    }

    fn state_strategy() -> impl Strategy<Value = VehicleState> {
        (-10.0..10.0f64, -0.3..0.3f64, 0.0..24.0f64, -0.5..0.5f64)
            .prop_map(|(py, phi, v, om)| VehicleState::new(0.0, py, phi, v, 0.0, om))
    }

    proptest! {
        #[test]
        fn quadratics_are_convex(a in state_strategy(), b in state_strategy()) {
            let task = TaskSpec::default();
            let w = CostWeights::cruise();
            let mid = VehicleState::from_vector(&((a.to_vector() + b.to_vector()) * 0.5));
            let g = |x: &VehicleState| goal_cost(x, &task, &w);
            let t = |x: &VehicleState| terminal_cost(x, &w);
            prop_assert!(g(&mid) <= 0.5 * (g(&a) + g(&b)) * (1.0 + 1e-12) + 1e-9);
            prop_assert!(t(&mid) <= 0.5 * (t(&a) + t(&b)) * (1.0 + 1e-12) + 1e-9);
            prop_assert!(g(&a) >= 0.0 && t(&a) >= 0.0);
        }

        #[test]
        fn running_cost_gradient_matches_fd(
            px in -5.0..5.0f64, py in -4.0..0.0f64, v in 8.0..18.0f64,
            sx in -8.0..8.0f64, sy in -4.0..0.0f64, k in 0usize..40,
        ) {
            let task = TaskSpec::default();
            let w = CostWeights::cruise();
            let sp = SafetyParams::default();
            let sv = SvState::new(sx, sy, 0.0, 0.0);
            let x = VehicleState::new(px, py, 0.0, v, 0.0, 0.0);
            let h = crate::safety::barrier_h(x.position(), sv.position(), &sp);
            prop_assume!((h - sp.c).abs() > 1e-2);
            let u = ControlInput::ZERO;
            let f = |x: &VehicleState| running_cost(x, &u, &[sv], k, &task, &w, &sp);
            // analytic gradient in (px, py, v_lon)
            let (hv, dhx, dhy) = crate::safety::spatial_h_with_grad(&x, &sv, &sp);
            let q = crate::safety::attention_weight(0, k as f64, &sp);
            let ga = [
                2.0 * q * hv * dhx,
                2.0 * w.q_lat * (py - task.py_d) + 2.0 * q * hv * dhy,
                2.0 * w.q_vel * (v - task.v_d),
            ];
            let step = 1e-6;
            let mut gf = [0.0; 3];
            for (j, g) in gf.iter_mut().enumerate() {
                let mut xp = x.to_vector();
                let mut xm = x.to_vector();
                let idx = [0, 1, 3][j];
                xp[idx] += step;
                xm[idx] -= step;
                *g = (f(&VehicleState::from_vector(&xp)) - f(&VehicleState::from_vector(&xm))) / (2.0 * step);
            }
            let scale = gf.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
            for j in 0..3 {
                prop_assert!((ga[j] - gf[j]).abs() / scale < 1e-5, "{j}: {} vs {}", ga[j], gf[j]);
            }
        }
    }
}
