//! Spatiotemporal safety barrier: the elliptic distance barrier, the smooth
//! enhancement step, the spatial penalty kernel, temporal attention weights,
//! and the aggregate per-step safety cost.

use serde::{Deserialize, Serialize};

use crate::dynamics::VehicleState;
use crate::error::{Error, Result};

/// Position and velocity of a surrounding vehicle in the road frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SvState {
    pub ox: f64,
    pub oy: f64,
    pub ovx: f64,
    pub ovy: f64,
}

impl SvState {
    pub fn new(ox: f64, oy: f64, ovx: f64, ovy: f64) -> Self {
        Self { ox, oy, ovx, ovy }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.ox, self.oy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyParams {
    /// Ellipse semi-axis along the road (m).
    pub a: f64,
    /// Ellipse semi-axis across the road (m).
    pub b: f64,
    pub c: f64,
    pub lambda: f64,
    pub eta: f64,
    /// Temporal discount in prediction steps. Infinite disables the decay.
    pub gamma: f64,
    /// Per-slot attention factors; slot `i` is the i-th nearest vehicle.
    pub w: Vec<f64>,
    #[serde(rename = "M")]
    pub m: usize,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self {
            a: 3.0,
            b: 2.0,
            c: 1.0,
            lambda: 1.0,
            eta: 1e-5,
            gamma: 50.0,
            w: vec![1e5; 6],
            m: 6,
        }
    }
}

impl SafetyParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("safety.a", self.a),
            ("safety.b", self.b),
            ("safety.lambda", self.lambda),
            ("safety.eta", self.eta),
            ("safety.gamma", self.gamma),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("safety.c must be >= 0, got {}", self.c)));
        }
        if self.m == 0 {
            return Err(Error::Config("safety.M must be at least 1".into()));
        }
        if self.w.len() != self.m {
            return Err(Error::Config(format!(
                "safety.w has {} entries but safety.M = {}",
                self.w.len(),
                self.m
            )));
        }
        if let Some(bad) = self.w.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::Config(format!("safety.w entries must be >= 0, got {bad}")));
        }
        Ok(())
    }

    /// Attention factor of slot `i` (0-based); slots past the list weigh zero.
    pub fn weight(&self, i: usize) -> f64 {
        self.w.get(i).copied().unwrap_or(0.0)
    }

    /// Same parameters with the temporal decay switched off.
    pub fn with_fixed_attention(&self) -> Self {
        Self {
            gamma: f64::INFINITY,
            ..self.clone()
        }
    }
}

pub fn barrier_h(ev_pos: (f64, f64), sv_pos: (f64, f64), sp: &SafetyParams) -> f64 {
    let dx = (ev_pos.0 - sv_pos.0) / sp.a;
    let dy = (ev_pos.1 - sv_pos.1) / sp.b;
    dx * dx + dy * dy - 1.0
}

/// Gradient of [`barrier_h`] with respect to the ego position.
pub fn barrier_h_grad(ev_pos: (f64, f64), sv_pos: (f64, f64), sp: &SafetyParams) -> (f64, f64) {
    (
        2.0 * (ev_pos.0 - sv_pos.0) / (sp.a * sp.a),
        2.0 * (ev_pos.1 - sv_pos.1) / (sp.b * sp.b),
    )
}

/// Smooth step: near 2 inside the margin (`h < c`), near 0 outside.
pub fn enhancement_b(h: f64, sp: &SafetyParams) -> f64 {
    // 1 - z / (eta + |z|), rearranged to avoid cancellation for z >> eta
    let z = h - sp.c;
    if z >= 0.0 {
        sp.eta / (sp.eta + z)
    } else {
        (sp.eta - 2.0 * z) / (sp.eta - z)
    }
}

fn enhancement_b_deriv(h: f64, sp: &SafetyParams) -> f64 {
    let d = sp.eta + (h - sp.c).abs();
    -sp.eta / (d * d)
}

// guards the pole at h = -lambda (coincident centers with lambda = 1)
const DENOM_FLOOR: f64 = 1e-12;

fn spatial_from_h(h: f64, sp: &SafetyParams) -> f64 {
    enhancement_b(h, sp) / (sp.lambda + h).max(DENOM_FLOOR)
}

/// dH/dh for the spatial kernel.
pub fn spatial_h_deriv(h: f64, sp: &SafetyParams) -> f64 {
    let den = (sp.lambda + h).max(DENOM_FLOOR);
    enhancement_b_deriv(h, sp) / den - enhancement_b(h, sp) / (den * den)
}

pub fn spatial_h(ev: &VehicleState, sv: &SvState, sp: &SafetyParams) -> f64 {
    spatial_from_h(barrier_h(ev.position(), sv.position(), sp), sp)
}

/// Value and position gradient `(H, dH/dpx, dH/dpy)` of the spatial kernel.
pub fn spatial_h_with_grad(ev: &VehicleState, sv: &SvState, sp: &SafetyParams) -> (f64, f64, f64) {
    let h = barrier_h(ev.position(), sv.position(), sp);
    let (gx, gy) = barrier_h_grad(ev.position(), sv.position(), sp);
    let dh = spatial_h_deriv(h, sp);
    (spatial_from_h(h, sp), dh * gx, dh * gy)
}

/// Temporal attention weight of slot `i` (0-based) at prediction step `t`.
pub fn attention_weight(i: usize, t: f64, sp: &SafetyParams) -> f64 {
    let decay = if sp.gamma.is_infinite() {
        1.0
    } else {
        (-t / sp.gamma).exp()
    };
    sp.weight(i) * decay
}

/// Safety cost at prediction step `t`: the attention-weighted sum of squared
/// spatial kernels over the listed vehicles, in slot order.
pub fn safety_cost(ev: &VehicleState, svs: &[SvState], t: f64, sp: &SafetyParams) -> f64 {
    svs.iter()
        .enumerate()
        .map(|(i, sv)| {
            let h = spatial_h(ev, sv, sp);
            attention_weight(i, t, sp) * h * h
        })
        .sum()
}

pub fn min_barrier(ev: &VehicleState, svs: &[SvState], sp: &SafetyParams) -> Result<f64> {
    svs.iter()
        .map(|sv| barrier_h(ev.position(), sv.position(), sp))
        .reduce(f64::min)
        .ok_or(Error::NoVehicles)
}
