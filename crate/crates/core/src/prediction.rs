//! Nominal surrounding-vehicle predictor and nearest-vehicle selection.

use serde::{Deserialize, Serialize};

use crate::dynamics::VehicleState;
use crate::safety::SvState;

pub type SvId = i64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvPrediction {
    pub sv_id: SvId,
    /// States at the shooting-node times, `N + 1` entries.
    pub states: Vec<SvState>,
}

impl SvPrediction {
    pub fn horizon(&self) -> usize {
        self.states.len().saturating_sub(1)
    }
}

/// Nominal motion model used to extrapolate a measured vehicle over the
/// planning horizon.
pub trait Predictor {
    fn predict(&self, sv_id: SvId, sv: &SvState, n: usize, ts: f64) -> SvPrediction;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantVelocity;

impl Predictor for ConstantVelocity {
    fn predict(&self, sv_id: SvId, sv: &SvState, n: usize, ts: f64) -> SvPrediction {
        predict_constant_velocity(sv_id, sv, n, ts)
    }
}

pub fn predict_constant_velocity(sv_id: SvId, sv: &SvState, n: usize, ts: f64) -> SvPrediction {
    let states = (0..=n)
        .map(|k| {
            let t = k as f64 * ts;
            SvState::new(sv.ox + t * sv.ovx, sv.oy + t * sv.ovy, sv.ovx, sv.ovy)
        })
        .collect();
    SvPrediction { sv_id, states }
}

/// The `m` vehicles closest to the ego position, nearest first. Equal
/// distances are ordered by ascending id.
pub fn nearest_m(ev: &VehicleState, all: &[(SvId, SvState)], m: usize) -> Vec<(SvId, SvState)> {
    let mut ranked: Vec<(f64, SvId, SvState)> = all
        .iter()
        .map(|&(id, sv)| ((sv.ox - ev.px).hypot(sv.oy - ev.py), id, sv))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked.into_iter().take(m).map(|(_, id, sv)| (id, sv)).collect()
}
