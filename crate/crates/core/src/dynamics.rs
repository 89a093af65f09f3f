//! Dynamic bicycle model with linear tire forces and its fixed-step RK4
//! discretization.
//!
//! State ordering throughout the crate is `[px, py, phi, v_lon, v_lat, omega]`
//! and control ordering is `[accel, steer]`.

use nalgebra::{Matrix6, SMatrix, Vector2, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type StateVec = Vector6<f64>;
pub type ControlVec = Vector2<f64>;
pub type StateJacobian = Matrix6<f64>;
pub type ControlJacobian = SMatrix<f64, 6, 2>;

pub const NX: usize = 6;
pub const NU: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleState {
    pub px: f64,
    pub py: f64,
    pub phi: f64,
    pub v_lon: f64,
    pub v_lat: f64,
    pub omega: f64,
}

impl VehicleState {
    pub fn new(px: f64, py: f64, phi: f64, v_lon: f64, v_lat: f64, omega: f64) -> Self {
        Self {
            px,
            py,
            phi,
            v_lon,
            v_lat,
            omega,
        }
    }

    pub fn to_vector(&self) -> StateVec {
        StateVec::new(self.px, self.py, self.phi, self.v_lon, self.v_lat, self.omega)
    }

    pub fn from_vector(v: &StateVec) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn position(&self) -> (f64, f64) {
        (self.px, self.py)
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub accel: f64,
    pub steer: f64,
}

impl ControlInput {
    pub const ZERO: ControlInput = ControlInput {
        accel: 0.0,
        steer: 0.0,
    };

    pub fn new(accel: f64, steer: f64) -> Self {
        Self { accel, steer }
    }

    pub fn to_vector(&self) -> ControlVec {
        ControlVec::new(self.accel, self.steer)
    }

    pub fn from_vector(v: &ControlVec) -> Self {
        Self::new(v[0], v[1])
    }

    pub fn is_finite(&self) -> bool {
        self.accel.is_finite() && self.steer.is_finite()
    }
}

/// Vehicle model constants. `kf` and `kr` are negative cornering
/// stiffnesses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    pub m: f64,
    #[serde(rename = "Iz")]
    pub iz: f64,
    pub lf: f64,
    pub lr: f64,
    pub kf: f64,
    pub kr: f64,
    /// Lower clamp for the longitudinal speed in the slip-angle denominators.
    pub v_lon_floor: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            m: 1412.0,
            iz: 1536.7,
            lf: 1.06,
            lr: 1.85,
            kf: -128916.0,
            kr: -85944.0,
            v_lon_floor: 0.5,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vehicle.m", self.m),
            ("vehicle.Iz", self.iz),
            ("vehicle.lf", self.lf),
            ("vehicle.lr", self.lr),
            ("vehicle.v_lon_floor", self.v_lon_floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.kf < 0.0 && self.kr < 0.0) {
            return Err(Error::Config(format!(
                "cornering stiffnesses must be negative, got kf={} kr={}",
                self.kf, self.kr
            )));
        }
        Ok(())
    }
}

/// Box bounds on the state and control. Acceleration bounds are stored as
/// magnitudes: the admissible range is `[-a_d_max, a_a_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bounds {
    pub px_min: f64,
    pub px_max: f64,
    pub py_min: f64,
    pub py_max: f64,
    pub phi_max: f64,
    pub v_lon_min: f64,
    pub v_lon_max: f64,
    pub v_lat_max: f64,
    pub omega_max: f64,
    pub a_d_max: f64,
    pub a_a_max: f64,
    pub delta_max: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            px_min: f64::NEG_INFINITY,
            px_max: f64::INFINITY,
            py_min: -10.0,
            py_max: 10.0,
            phi_max: 0.227,
            v_lon_min: 0.0,
            v_lon_max: 24.0,
            v_lat_max: 3.0,
            omega_max: 5.0,
            a_d_max: 3.0,
            a_a_max: 1.5,
            delta_max: 0.6,
        }
    }
}

impl Bounds {
    pub fn validate(&self) -> Result<()> {
        let pairs = [
            ("px", self.px_min, self.px_max),
            ("py", self.py_min, self.py_max),
            ("v_lon", self.v_lon_min, self.v_lon_max),
        ];
        for (name, lo, hi) in pairs {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::Config(format!(
                    "bounds.{name}: min {lo} exceeds max {hi}"
                )));
            }
        }
        let mags = [
            ("bounds.phi_max", self.phi_max),
            ("bounds.v_lat_max", self.v_lat_max),
            ("bounds.omega_max", self.omega_max),
            ("bounds.a_d_max", self.a_d_max),
            ("bounds.a_a_max", self.a_a_max),
            ("bounds.delta_max", self.delta_max),
        ];
        for (name, v) in mags {
            if !(v >= 0.0) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn state_lower(&self) -> StateVec {
        StateVec::new(
            self.px_min,
            self.py_min,
            -self.phi_max,
            self.v_lon_min,
            -self.v_lat_max,
            -self.omega_max,
        )
    }

    pub fn state_upper(&self) -> StateVec {
        StateVec::new(
            self.px_max,
            self.py_max,
            self.phi_max,
            self.v_lon_max,
            self.v_lat_max,
            self.omega_max,
        )
    }

    pub fn control_lower(&self) -> ControlVec {
        ControlVec::new(-self.a_d_max, -self.delta_max)
    }

    pub fn control_upper(&self) -> ControlVec {
        ControlVec::new(self.a_a_max, self.delta_max)
    }

    pub fn clamp_control(&self, u: ControlInput) -> ControlInput {
        ControlInput::new(
            u.accel.clamp(-self.a_d_max, self.a_a_max),
            u.steer.clamp(-self.delta_max, self.delta_max),
        )
    }

    pub fn control_within(&self, u: &ControlInput) -> bool {
        u.accel >= -self.a_d_max
            && u.accel <= self.a_a_max
            && u.steer >= -self.delta_max
            && u.steer <= self.delta_max
    }

    pub fn state_within(&self, x: &VehicleState) -> bool {
        let v = x.to_vector();
        let (lo, hi) = (self.state_lower(), self.state_upper());
        (0..NX).all(|i| v[i] >= lo[i] && v[i] <= hi[i])
    }
}

/// Front and rear lateral tire forces (N).
pub fn tire_forces(x: &VehicleState, u: &ControlInput, p: &VehicleParams) -> (f64, f64) {
    let v = x.v_lon.max(p.v_lon_floor);
    let alpha_f = (x.v_lat + p.lf * x.omega) / v - u.steer;
    let alpha_r = (x.v_lat - p.lr * x.omega) / v;
    (p.kf * alpha_f, p.kr * alpha_r)
}

fn rhs(x: &StateVec, u: &ControlVec, p: &VehicleParams) -> StateVec {
    let (phi, v_lon, v_lat, omega) = (x[2], x[3], x[4], x[5]);
    let (a, delta) = (u[0], u[1]);
    let v = v_lon.max(p.v_lon_floor);
    let ff = p.kf * ((v_lat + p.lf * omega) / v - delta);
    let fr = p.kr * (v_lat - p.lr * omega) / v;
    let (s, c) = phi.sin_cos();
    let (sd, cd) = delta.sin_cos();
    StateVec::new(
        v_lon * c - v_lat * s,
        v_lat * c + v_lon * s,
        omega,
        a + v_lat * omega - ff * sd / p.m,
        -v_lon * omega + (ff * cd + fr) / p.m,
        (p.lf * ff * cd - p.lr * fr) / p.iz,
    )
}

fn rhs_jacobians(
    x: &StateVec,
    u: &ControlVec,
    p: &VehicleParams,
) -> (StateJacobian, ControlJacobian) {
    let (phi, v_lon, v_lat, omega) = (x[2], x[3], x[4], x[5]);
    let delta = u[1];
    let clamped = v_lon < p.v_lon_floor;
    let v = v_lon.max(p.v_lon_floor);
    let nf = v_lat + p.lf * omega;
    let nr = v_lat - p.lr * omega;
    let ff = p.kf * (nf / v - delta);

    // partials of the tire forces w.r.t. (v_lon, v_lat, omega, delta)
    let dv = if clamped { 0.0 } else { 1.0 };
    let ff_vlon = -p.kf * nf / (v * v) * dv;
    let ff_vlat = p.kf / v;
    let ff_omega = p.kf * p.lf / v;
    let ff_delta = -p.kf;
    let fr_vlon = -p.kr * nr / (v * v) * dv;
    let fr_vlat = p.kr / v;
    let fr_omega = -p.kr * p.lr / v;

    let (s, c) = phi.sin_cos();
    let (sd, cd) = delta.sin_cos();

    let mut fx = StateJacobian::zeros();
    fx[(0, 2)] = -v_lon * s - v_lat * c;
    fx[(0, 3)] = c;
    fx[(0, 4)] = -s;
    fx[(1, 2)] = -v_lat * s + v_lon * c;
    fx[(1, 3)] = s;
    fx[(1, 4)] = c;
    fx[(2, 5)] = 1.0;

    fx[(3, 3)] = -ff_vlon * sd / p.m;
    fx[(3, 4)] = omega - ff_vlat * sd / p.m;
    fx[(3, 5)] = v_lat - ff_omega * sd / p.m;

    fx[(4, 3)] = -omega + (ff_vlon * cd + fr_vlon) / p.m;
    fx[(4, 4)] = (ff_vlat * cd + fr_vlat) / p.m;
    fx[(4, 5)] = -v_lon + (ff_omega * cd + fr_omega) / p.m;

    fx[(5, 3)] = (p.lf * ff_vlon * cd - p.lr * fr_vlon) / p.iz;
    fx[(5, 4)] = (p.lf * ff_vlat * cd - p.lr * fr_vlat) / p.iz;
    fx[(5, 5)] = (p.lf * ff_omega * cd - p.lr * fr_omega) / p.iz;

    let mut fu = ControlJacobian::zeros();
    fu[(3, 0)] = 1.0;
    fu[(3, 1)] = -(ff_delta * sd + ff * cd) / p.m;
    fu[(4, 1)] = (ff_delta * cd - ff * sd) / p.m;
    fu[(5, 1)] = p.lf * (ff_delta * cd - ff * sd) / p.iz;

    (fx, fu)
}

/// Time derivative of the state under constant control.
pub fn continuous_dynamics(x: &VehicleState, u: &ControlInput, p: &VehicleParams) -> StateVec {
    rhs(&x.to_vector(), &u.to_vector(), p)
}

/// Analytic Jacobians of [`continuous_dynamics`] with respect to state and
/// control.
pub fn dynamics_jacobians(
    x: &VehicleState,
    u: &ControlInput,
    p: &VehicleParams,
) -> (StateJacobian, ControlJacobian) {
    rhs_jacobians(&x.to_vector(), &u.to_vector(), p)
}

fn rk4_vec(x: &StateVec, u: &ControlVec, dt: f64, p: &VehicleParams) -> StateVec {
    let k1 = rhs(x, u, p);
    let k2 = rhs(&(x + 0.5 * dt * k1), u, p);
    let k3 = rhs(&(x + 0.5 * dt * k2), u, p);
    let k4 = rhs(&(x + dt * k3), u, p);
    x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

fn rk4_vec_sens(
    x: &StateVec,
    u: &ControlVec,
    dt: f64,
    p: &VehicleParams,
) -> (StateVec, StateJacobian, ControlJacobian) {
    let id = StateJacobian::identity();
    let k1 = rhs(x, u, p);
    let (a1, b1) = rhs_jacobians(x, u, p);

    let x2 = x + 0.5 * dt * k1;
    let k2 = rhs(&x2, u, p);
    let (a2, b2) = rhs_jacobians(&x2, u, p);
    let dk2_dx = a2 * (id + 0.5 * dt * a1);
    let dk2_du = a2 * (0.5 * dt * b1) + b2;

    let x3 = x + 0.5 * dt * k2;
    let k3 = rhs(&x3, u, p);
    let (a3, b3) = rhs_jacobians(&x3, u, p);
    let dk3_dx = a3 * (id + 0.5 * dt * dk2_dx);
    let dk3_du = a3 * (0.5 * dt * dk2_du) + b3;

    let x4 = x + dt * k3;
    let k4 = rhs(&x4, u, p);
    let (a4, b4) = rhs_jacobians(&x4, u, p);
    let dk4_dx = a4 * (id + dt * dk3_dx);
    let dk4_du = a4 * (dt * dk3_du) + b4;

    let next = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    let a = id + dt / 6.0 * (a1 + 2.0 * dk2_dx + 2.0 * dk3_dx + dk4_dx);
    let b = dt / 6.0 * (b1 + 2.0 * dk2_du + 2.0 * dk3_du + dk4_du);
    (next, a, b)
}

/// One classical RK4 step with the control held constant over `dt`.
pub fn rk4_step(x: &VehicleState, u: &ControlInput, dt: f64, p: &VehicleParams) -> VehicleState {
    VehicleState::from_vector(&rk4_vec(&x.to_vector(), &u.to_vector(), dt, p))
}

/// The shooting map: `substeps` RK4 steps of length `ts / substeps`.
pub fn shoot_interval(
    x: &VehicleState,
    u: &ControlInput,
    ts: f64,
    substeps: usize,
    p: &VehicleParams,
) -> VehicleState {
    VehicleState::from_vector(&shoot_vec(&x.to_vector(), &u.to_vector(), ts, substeps, p))
}

pub(crate) fn shoot_vec(
    x: &StateVec,
    u: &ControlVec,
    ts: f64,
    substeps: usize,
    p: &VehicleParams,
) -> StateVec {
    let n = substeps.max(1);
    let h = ts / n as f64;
    let mut out = *x;
    for _ in 0..n {
        out = rk4_vec(&out, u, h, p);
    }
    out
}

/// Shooting map together with its sensitivities `(d next/dx, d next/du)`.
pub fn shoot_interval_sensitivity(
    x: &VehicleState,
    u: &ControlInput,
    ts: f64,
    substeps: usize,
    p: &VehicleParams,
) -> (VehicleState, StateJacobian, ControlJacobian) {
    let (next, a, b) = shoot_vec_sens(&x.to_vector(), &u.to_vector(), ts, substeps, p);
    (VehicleState::from_vector(&next), a, b)
}

pub(crate) fn shoot_vec_sens(
    x: &StateVec,
    u: &ControlVec,
    ts: f64,
    substeps: usize,
    p: &VehicleParams,
) -> (StateVec, StateJacobian, ControlJacobian) {
    let n = substeps.max(1);
    let h = ts / n as f64;
    let (mut out, mut a, mut b) = rk4_vec_sens(x, u, h, p);
    for _ in 1..n {
        let (next, aj, bj) = rk4_vec_sens(&out, u, h, p);
        out = next;
        b = aj * b + bj;
        a = aj * a;
    }
    (out, a, b)
}
