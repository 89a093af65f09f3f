//! Multiple-shooting transcription as a sum of squared residuals, plus the
//! condensed Gauss-Newton model over the control sequence.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix6, Vector6};

use crate::costs::CostBreakdown;
use crate::dynamics::{shoot_vec, shoot_vec_sens, ControlVec, StateVec, NU, NX};
use crate::error::{Error, Result};
use crate::safety::{attention_weight, barrier_h, spatial_h_with_grad};
use crate::solver::OcpProblem;
use crate::dynamics::VehicleState;

/// Residual bookkeeping for one problem instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResidualLayout {
    pub goal: usize,
    pub safety: usize,
    pub control: usize,
    pub terminal: usize,
}

impl ResidualLayout {
    pub fn total(&self) -> usize {
        self.goal + self.safety + self.control + self.terminal
    }
}

/// A transcribed problem: residual structure and evaluation routines.
#[derive(Debug)]
pub struct Transcription<'a> {
    pub(crate) problem: &'a OcpProblem,
    n: usize,
    sqrt_attention: Vec<Vec<f64>>,
}

/// Condensed quadratic model of the objective around a control sequence.
#[derive(Debug, Clone)]
pub(crate) struct CondensedModel {
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// Builds the residual/constraint structure for `problem`.
pub fn transcribe(problem: &OcpProblem) -> Result<Transcription<'_>> {
    let n = problem.config.n;
    if n == 0 {
        return Err(Error::Config("ocp.N must be at least 1".into()));
    }
    for p in &problem.predictions {
        if p.states.len() != n + 1 {
            return Err(Error::Config(format!(
                "prediction for vehicle {} has {} states, expected N + 1 = {}",
                p.sv_id,
                p.states.len(),
                n + 1
            )));
        }
    }
    if problem.predictions.len() > problem.safety.m {
        return Err(Error::Config(format!(
            "{} predictions exceed safety.M = {}",
            problem.predictions.len(),
            problem.safety.m
        )));
    }
    if !problem.x0.is_finite() {
        return Err(Error::Config("initial state is not finite".into()));
    }
    let sqrt_attention = (0..problem.predictions.len())
        .map(|i| {
            (0..n)
                .map(|k| attention_weight(i, k as f64, &problem.safety).sqrt())
                .collect()
        })
        .collect();
    Ok(Transcription {
        problem,
        n,
        sqrt_attention,
    })
}

fn bound_violation(x: &StateVec, lo: &StateVec, hi: &StateVec) -> Vector6<f64> {
    Vector6::from_fn(|i, _| {
        if x[i] > hi[i] {
            x[i] - hi[i]
        } else if x[i] < lo[i] {
            x[i] - lo[i]
        } else {
            0.0
        }
    })
}

impl<'a> Transcription<'a> {
    pub fn horizon(&self) -> usize {
        self.n
    }

    pub fn layout(&self) -> ResidualLayout {
        let n = self.n;
        ResidualLayout {
            goal: 2 * n,
            safety: self.problem.predictions.len() * n,
            control: NU * n,
            terminal: 2,
        }
    }

    /// Forward shooting from the initial state; returns `N + 1` states.
    pub fn rollout(&self, controls: &[ControlVec]) -> Vec<StateVec> {
        let p = self.problem;
        let mut states = Vec::with_capacity(self.n + 1);
        let mut x = p.x0.to_vector();
        states.push(x);
        for u in controls {
            x = shoot_vec(&x, u, p.config.ts, p.config.substeps, &p.vehicle);
            states.push(x);
        }
        states
    }

    /// Objective residuals in layout order: goal, safety, control, terminal.
    /// State-bound penalty residuals are excluded.
    pub fn residuals(&self, states: &[StateVec], controls: &[ControlVec]) -> DVector<f64> {
        let p = self.problem;
        let w = &p.weights;
        let mut r = Vec::with_capacity(self.layout().total());
        for x in &states[..self.n] {
            r.push(w.q_lat.sqrt() * (x[1] - p.task.py_d));
            r.push(w.q_vel.sqrt() * (x[3] - p.task.v_d));
        }
        for k in 0..self.n {
            let ev = VehicleState::from_vector(&states[k]);
            for (i, pred) in p.predictions.iter().enumerate() {
                let (h, _, _) = spatial_h_with_grad(&ev, &pred.states[k], &p.safety);
                r.push(self.sqrt_attention[i][k] * h);
            }
        }
        for u in controls {
            r.push(w.r_accel.sqrt() * u[0]);
            r.push(w.r_steer.sqrt() * u[1]);
        }
        let xn = &states[self.n];
        r.push(w.qt_phi.sqrt() * xn[2]);
        r.push(w.qt_omega.sqrt() * xn[5]);
        DVector::from_vec(r)
    }

    fn state_penalty(&self, states: &[StateVec]) -> f64 {
        let b = &self.problem.bounds;
        let (lo, hi) = (b.state_lower(), b.state_upper());
        states[1..]
            .iter()
            .map(|x| bound_violation(x, &lo, &hi).norm_squared())
            .sum::<f64>()
            * self.problem.config.rho_state
    }

    pub fn breakdown(&self, states: &[StateVec], controls: &[ControlVec]) -> CostBreakdown {
        let r = self.residuals(states, controls);
        let l = self.layout();
        let sq = |from: usize, len: usize| r.rows(from, len).norm_squared();
        CostBreakdown {
            goal: sq(0, l.goal),
            safety: sq(l.goal, l.safety),
            control: sq(l.goal + l.safety, l.control),
            terminal: sq(l.goal + l.safety + l.control, l.terminal),
            state_penalty: self.state_penalty(states),
        }
    }

    /// Total objective including the state-bound penalty.
    pub fn objective(&self, controls: &[ControlVec]) -> f64 {
        let states = self.rollout(controls);
        self.breakdown(&states, controls).total()
    }

    /// Smallest `|h - c|` over every predicted pair along the rollout;
    /// infinite without surrounding vehicles.
    pub fn min_kink_distance(&self, controls: &[ControlVec]) -> f64 {
        let p = self.problem;
        let states = self.rollout(controls);
        let mut best = f64::INFINITY;
        for k in 0..self.n {
            for pred in &p.predictions {
                let s = pred.states[k];
                let h = barrier_h((states[k][0], states[k][1]), (s.ox, s.oy), &p.safety);
                best = best.min((h - p.safety.c).abs());
            }
        }
        best
    }

    /// Gradient and Gauss-Newton Hessian of the sum-of-squares objective at
    /// `controls`, with states eliminated by forward
    /// shooting.
    pub(crate) fn condense(&self, controls: &[ControlVec]) -> (CondensedModel, Vec<StateVec>) {
        let p = self.problem;
        let w = &p.weights;
        let n = self.n;
        let nv = NU * n;
        let rho = p.config.rho_state;
        let (lo, hi) = (p.bounds.state_lower(), p.bounds.state_upper());

        let mut states = Vec::with_capacity(n + 1);
        let mut a_mats = Vec::with_capacity(n);
        let mut b_mats = Vec::with_capacity(n);
        let mut x = p.x0.to_vector();
        states.push(x);
        for u in controls {
            let (next, a, b) = shoot_vec_sens(&x, u, p.config.ts, p.config.substeps, &p.vehicle);
            a_mats.push(a);
            b_mats.push(b);
            x = next;
            states.push(x);
        }

        let mut gradient = DVector::zeros(nv);
        let mut hessian = DMatrix::zeros(nv, nv);

        // sensitivity of the current node w.r.t. the first 2k controls
        let mut sens = DMatrix::<f64>::zeros(NX, nv);
        for k in 1..=n {
            let cols = NU * k;
            {
                let prev = sens.columns(0, cols - NU).into_owned();
                let a = &a_mats[k - 1];
                sens.columns_mut(0, cols - NU).copy_from(&(a * prev));
                sens.fixed_view_mut::<NX, NU>(0, cols - NU).copy_from(&b_mats[k - 1]);
            }

            let xk = &states[k];
            let mut g = Matrix6::<f64>::zeros();
            let mut q = Vector6::<f64>::zeros();

            if k < n {
                g[(1, 1)] += w.q_lat;
                g[(3, 3)] += w.q_vel;
                q[1] += w.q_lat * (xk[1] - p.task.py_d);
                q[3] += w.q_vel * (xk[3] - p.task.v_d);

                let ev = VehicleState::from_vector(xk);
                for (i, pred) in p.predictions.iter().enumerate() {
                    let (h, dx, dy) = spatial_h_with_grad(&ev, &pred.states[k], &p.safety);
                    let s = self.sqrt_attention[i][k];
                    let (jx, jy) = (s * dx, s * dy);
                    let r = s * h;
                    g[(0, 0)] += jx * jx;
                    g[(0, 1)] += jx * jy;
                    g[(1, 0)] += jx * jy;
                    g[(1, 1)] += jy * jy;
                    q[0] += jx * r;
                    q[1] += jy * r;
                }
            } else {
                g[(2, 2)] += w.qt_phi;
                g[(5, 5)] += w.qt_omega;
                q[2] += w.qt_phi * xk[2];
                q[5] += w.qt_omega * xk[5];
            }

            let viol = bound_violation(xk, &lo, &hi);
            for i in 0..NX {
                if viol[i] != 0.0 {
                    g[(i, i)] += rho;
                    q[i] += rho * viol[i];
                }
            }

            let s = sens.columns(0, cols);
            let gs = g * s;
            let mut hv = hessian.view_mut((0, 0), (cols, cols));
            hv.gemm_tr(2.0, &s, &gs, 1.0);
            let mut gv = gradient.rows_mut(0, cols);
            gv.gemv_tr(2.0, &s, &q, 1.0);
        }

        let rdiag = Matrix2::new(w.r_accel, 0.0, 0.0, w.r_steer);
        for (k, u) in controls.iter().enumerate() {
            let i = NU * k;
            gradient[i] += 2.0 * w.r_accel * u[0];
            gradient[i + 1] += 2.0 * w.r_steer * u[1];
            let mut blk = hessian.fixed_view_mut::<NU, NU>(i, i);
            blk += 2.0 * rdiag;
        }

        (
            CondensedModel {
                gradient,
                hessian,
            },
            states,
        )
    }
}
