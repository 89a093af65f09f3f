//! Direct multiple-shooting optimal control solved by Gauss-Newton SQP.
//!
//! States are eliminated by forward shooting (condensing), so every iterate
//! satisfies the defect constraints exactly and the subproblem is a dense
//! box-constrained QP over control increments. Control bounds are enforced
//! by projection inside that QP; state bounds enter as a quadratic penalty.

mod boxqp;
mod transcription;

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use boxqp::{solve_box_qp, BoxQpOptions, BoxQpResult, BoxQpStatus};
pub use transcription::{transcribe, ResidualLayout, Transcription};

use crate::costs::{CostBreakdown, CostWeights, TaskSpec};
use crate::dynamics::{
    shoot_interval, Bounds, ControlInput, ControlVec, VehicleParams, VehicleState, NU,
};
use crate::error::{Error, Result};
use crate::prediction::SvPrediction;
use crate::safety::SafetyParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcpConfig {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "Ts")]
    pub ts: f64,
    pub nu0: usize,
    pub nu: usize,
    pub step_tol: f64,
    pub cost_tol: f64,
    pub rho_state: f64,
    pub substeps: usize,
}

impl Default for OcpConfig {
    fn default() -> Self {
        Self {
            n: 50,
            ts: 0.1,
            nu0: 15,
            nu: 5,
            step_tol: 1e-6,
            cost_tol: 1e-8,
            rho_state: 1e6,
            substeps: 5,
        }
    }
}

impl OcpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("ocp.N must be at least 1".into()));
        }
        if !(self.ts > 0.0 && self.ts.is_finite()) {
            return Err(Error::Config(format!("ocp.Ts must be positive, got {}", self.ts)));
        }
        if self.nu == 0 || self.nu0 < self.nu {
            return Err(Error::Config(format!(
                "iteration caps must satisfy nu0 >= nu >= 1, got nu0={} nu={}",
                self.nu0, self.nu
            )));
        }
        if !(self.step_tol > 0.0 && self.cost_tol > 0.0) {
            return Err(Error::Config("ocp tolerances must be positive".into()));
        }
        if !(self.rho_state >= 0.0) {
            return Err(Error::Config("ocp.rho_state must be >= 0".into()));
        }
        if self.substeps == 0 {
            return Err(Error::Config("ocp.substeps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn horizon_seconds(&self) -> f64 {
        self.n as f64 * self.ts
    }
}

/// One instance of the finite-horizon problem.
#[derive(Debug, Clone)]
pub struct OcpProblem {
    pub x0: VehicleState,
    pub task: TaskSpec,
    pub predictions: Vec<SvPrediction>,
    pub vehicle: VehicleParams,
    pub safety: SafetyParams,
    pub weights: CostWeights,
    pub bounds: Bounds,
    pub config: OcpConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub states: Vec<VehicleState>,
    pub controls: Vec<ControlInput>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Norm of the last control increment.
    pub kkt_like_residual: f64,
    pub solve_time: f64,
    pub cost_breakdown: CostBreakdown,
}

impl SolveResult {
    /// Largest defect `|x_{k+1} - Phi(x_k, u_k)|_inf` along the trajectory.
    pub fn max_defect(&self, vehicle: &VehicleParams, config: &OcpConfig) -> f64 {
        self.controls
            .iter()
            .enumerate()
            .map(|(k, u)| {
                let next = shoot_interval(&self.states[k], u, config.ts, config.substeps, vehicle);
                (next.to_vector() - self.states[k + 1].to_vector()).amax()
            })
            .fold(0.0, f64::max)
    }
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 20;

fn to_vecs(controls: &[ControlInput]) -> Vec<ControlVec> {
    controls.iter().map(|u| u.to_vector()).collect()
}

fn flatten(controls: &[ControlVec]) -> DVector<f64> {
    DVector::from_iterator(NU * controls.len(), controls.iter().flat_map(|u| [u[0], u[1]]))
}

fn unflatten(v: &DVector<f64>) -> Vec<ControlVec> {
    (0..v.len() / NU)
        .map(|k| ControlVec::new(v[NU * k], v[NU * k + 1]))
        .collect()
}

/// Runs at most `max_iters` Gauss-Newton SQP iterations from `guess`.
pub fn sqp_solve(problem: &OcpProblem, guess: &[ControlInput], max_iters: usize) -> Result<SolveResult> {
    let started = Instant::now();
    let nlp = transcribe(problem)?;
    let n = nlp.horizon();
    if guess.len() != n {
        return Err(Error::Config(format!(
            "guess has {} controls, expected N = {n}",
            guess.len()
        )));
    }
    let bounds = &problem.bounds;
    let cfg = &problem.config;
    let (ulo, uhi) = (bounds.control_lower(), bounds.control_upper());
    let lo_all = flatten(&vec![ulo; n]);
    let hi_all = flatten(&vec![uhi; n]);

    let mut u = flatten(&to_vecs(
        &guess.iter().map(|g| bounds.clamp_control(*g)).collect::<Vec<_>>(),
    ));
    let mut f = nlp.objective(&unflatten(&u));
    if !f.is_finite() {
        return Err(Error::InvalidWarmStart);
    }

    let mut iterations = 0;
    let mut converged = false;
    let mut last_step = f64::INFINITY;
    let qp_opts = BoxQpOptions::default();

    while iterations < max_iters {
        iterations += 1;
        let (model, _) = nlp.condense(&unflatten(&u));
        let lo = &lo_all - &u;
        let hi = &hi_all - &u;
        let qp = solve_box_qp(
            &model.hessian,
            &model.gradient,
            &lo,
            &hi,
            &DVector::zeros(u.len()),
            &qp_opts,
        );
        let d = qp.x;
        let dnorm = d.norm();
        let slope = model.gradient.dot(&d);
        if dnorm < cfg.step_tol || slope >= 0.0 {
            last_step = dnorm.min(last_step);
            converged = true;
            break;
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = DVector::from_iterator(
                u.len(),
                (0..u.len()).map(|i| (u[i] + alpha * d[i]).clamp(lo_all[i], hi_all[i])),
            );
            let ft = nlp.objective(&unflatten(&trial));
            if ft.is_finite() && ft <= f + ARMIJO * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, ft)) = accepted else {
            break;
        };

        last_step = (&trial - &u).norm();
        let decrease = f - ft;
        u = trial;
        f = ft;
        if last_step < cfg.step_tol || decrease <= cfg.cost_tol * f.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }

    let controls_v = unflatten(&u);
    let states_v = nlp.rollout(&controls_v);
    let breakdown = nlp.breakdown(&states_v, &controls_v);
    Ok(SolveResult {
        states: states_v.iter().map(VehicleState::from_vector).collect(),
        controls: controls_v.iter().map(ControlInput::from_vector).collect(),
        cost: breakdown.total(),
        iterations,
        converged,
        kkt_like_residual: last_step,
        solve_time: started.elapsed().as_secs_f64(),
        cost_breakdown: breakdown,
    })
}

/// Shifts a solution one interval forward, repeating the final control.
pub fn warm_start_shift(prev: &SolveResult) -> Vec<ControlInput> {
    let mut guess: Vec<ControlInput> = prev.controls.iter().skip(1).copied().collect();
    if let Some(last) = prev.controls.last() {
        guess.push(*last);
    }
    guess
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    /// `|g_analytic - g_fd|_inf / |g_fd|_inf`.
    pub max_rel_error: f64,
    /// Smallest `|h - c|` along the trajectory.
    pub kink_distance: f64,
    /// Whether the point lies outside the enhancement-function kink band.
    pub smooth: bool,
}

/// Compares the condensed gradient with central finite differences of the
/// objective (step `1e-6`) at `point`.
pub fn gradient_check(problem: &OcpProblem, point: &[ControlInput]) -> Result<GradientCheck> {
    let nlp = transcribe(problem)?;
    let controls = to_vecs(point);
    if controls.len() != nlp.horizon() {
        return Err(Error::Config("point length differs from N".into()));
    }
    let (model, _) = nlp.condense(&controls);
    let base = flatten(&controls);
    let step = 1e-6;
    let mut fd = DVector::zeros(base.len());
    for i in 0..base.len() {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[i] += step;
        minus[i] -= step;
        fd[i] = (nlp.objective(&unflatten(&plus)) - nlp.objective(&unflatten(&minus))) / (2.0 * step);
    }
    let scale = fd.amax().max(1e-300);
    let kink_distance = nlp.min_kink_distance(&controls);
    Ok(GradientCheck {
        max_rel_error: (&model.gradient - &fd).amax() / scale,
        kink_distance,
        smooth: kink_distance > 10.0 * problem.safety.eta,
    })
}

#[cfg(test)]
mod tests;
