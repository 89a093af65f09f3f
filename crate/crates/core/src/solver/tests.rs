use super::*;
use crate::costs::{running_cost, terminal_cost};
use crate::prediction::predict_constant_velocity;
use crate::safety::SvState;

fn problem(n: usize, x0: VehicleState, svs: &[SvState]) -> OcpProblem {
    let config = OcpConfig {
        n,
        ..OcpConfig::default()
    };
    OcpProblem {
        x0,
        task: TaskSpec::default(),
        predictions: svs
            .iter()
            .enumerate()
            .map(|(i, s)| predict_constant_velocity(i as i64, s, n, config.ts))
            .collect(),
        vehicle: VehicleParams::default(),
        safety: SafetyParams::default(),
        weights: CostWeights::cruise(),
        bounds: Bounds::default(),
        config,
    }
}

fn on_target() -> VehicleState {
    let t = TaskSpec::default();
    VehicleState::new(0.0, t.py_d, 0.0, t.v_d, 0.0, 0.0)
}

fn zeros(n: usize) -> Vec<ControlInput> {
    vec![ControlInput::ZERO; n]
}

#[test]
fn residual_counts() {
    let p = problem(1, on_target(), &[]);
    let nlp = transcribe(&p).unwrap();
    assert_eq!(nlp.layout().total(), 2 + 2 + 2);

    let p = problem(7, on_target(), &[]);
    let base = transcribe(&p).unwrap().layout().total();
    let p = problem(7, on_target(), &[SvState::new(20.0, -2.0, 10.0, 0.0)]);
    let with_sv = transcribe(&p).unwrap().layout();
    assert_eq!(with_sv.total(), base + 7);
    assert_eq!(with_sv.safety, 7);
}

#[test]
fn transcribe_rejects_mismatched_predictions() {
    let mut p = problem(5, on_target(), &[SvState::new(20.0, -2.0, 10.0, 0.0)]);
    p.predictions[0].states.pop();
    assert!(matches!(transcribe(&p), Err(Error::Config(_))));
}

#[test]
fn objective_equals_cost_module_sums() {
    let svs = [
        SvState::new(12.0, -2.0, 9.0, 0.0),
        SvState::new(5.0, 2.0, 11.0, 0.0),
        SvState::new(-8.0, -6.0, 10.0, 0.0),
    ];
    let x0 = VehicleState::new(0.0, -1.5, 0.01, 14.0, 0.1, 0.02);
    let p = problem(20, x0, &svs);
    let nlp = transcribe(&p).unwrap();
    let controls: Vec<ControlInput> = (0..20)
        .map(|k| ControlInput::new(0.05 * k as f64 - 0.4, 0.01 * ((k % 5) as f64 - 2.0)))
        .collect();
    let cv = to_vecs(&controls);
    let states: Vec<VehicleState> = nlp
        .rollout(&cv)
        .iter()
        .map(VehicleState::from_vector)
        .collect();
    let mut expected = 0.0;
    for k in 0..20 {
        let sv_k: Vec<SvState> = p.predictions.iter().map(|pr| pr.states[k]).collect();
        expected += running_cost(&states[k], &controls[k], &sv_k, k, &p.task, &p.weights, &p.safety);
    }
    expected += terminal_cost(&states[20], &p.weights);
    let got = nlp.objective(&cv);
    assert!(
        (got - expected).abs() <= 1e-12 * expected.abs(),
        "{got} vs {expected}"
    );
}

#[test]
fn on_target_start_is_stationary() {
    let p = problem(20, on_target(), &[]);
    let r = sqp_solve(&p, &zeros(20), 15).unwrap();
    assert!(r.cost < 1e-6, "{}", r.cost);
    assert!(r.controls.iter().all(|u| u.accel.abs() < 1e-9 && u.steer.abs() < 1e-9));
    assert!(r.converged);
}

#[test]
fn free_road_speed_tracking() {
    let mut x0 = on_target();
    x0.v_lon = 14.0;
    let p = problem(50, x0, &[]);
    let r = sqp_solve(&p, &zeros(50), p.config.nu0).unwrap();
    let vn = r.states.last().unwrap().v_lon;
    assert!((vn - 15.0).abs() < 0.1, "terminal speed {vn}");
    assert!(r.controls.iter().all(|u| p.bounds.control_within(u)));
    assert!(r.max_defect(&p.vehicle, &p.config) <= 1e-9);
}

#[test]
fn large_speed_demand_saturates_acceleration() {
    let mut x0 = on_target();
    x0.v_lon = 5.0;
    let p = problem(50, x0, &[]);
    let r = sqp_solve(&p, &zeros(50), p.config.nu0).unwrap();
    assert_eq!(r.controls[0].accel, 1.5);
    assert_eq!(r.controls[1].accel, 1.5);
}

#[test]
fn warm_start_shift_examples() {
    let base = SolveResult {
        states: vec![VehicleState::default(); 4],
        controls: vec![ControlInput::new(0.3, 0.01); 3],
        cost: 0.0,
        iterations: 1,
        converged: true,
        kkt_like_residual: 0.0,
        solve_time: 0.0,
        cost_breakdown: CostBreakdown::default(),
    };
    assert_eq!(warm_start_shift(&base), base.controls);

    let seq: Vec<ControlInput> = (0..4).map(|k| ControlInput::new(k as f64, -(k as f64))).collect();
    let r = SolveResult {
        controls: seq.clone(),
        ..base
    };
    let shifted = warm_start_shift(&r);
    assert_eq!(shifted.len(), 4);
    assert_eq!(&shifted[..3], &seq[1..]);
    assert_eq!(shifted[3], seq[3]);
}

#[test]
fn gradient_check_quadratic_only() {
    let x0 = VehicleState::new(0.0, -1.0, 0.02, 13.0, 0.1, 0.01);
    let p = problem(20, x0, &[]);
    let point: Vec<ControlInput> = (0..20)
        .map(|k| ControlInput::new(0.3 - 0.02 * k as f64, 0.004 * (k as f64 - 10.0) / 10.0))
        .collect();
    let g = gradient_check(&p, &point).unwrap();
    assert!(g.smooth);
    assert!(g.max_rel_error < 1e-7, "{}", g.max_rel_error);
}

#[test]
fn gradient_check_with_vehicles() {
    let svs = [
        SvState::new(9.0, -1.0, 11.0, 0.0),
        SvState::new(4.0, -4.5, 12.0, 0.0),
        SvState::new(15.0, 1.0, 8.0, 0.0),
    ];
    let x0 = VehicleState::new(0.0, -2.0, 0.0, 14.0, 0.0, 0.0);
    let p = problem(20, x0, &svs);
    let point: Vec<ControlInput> = (0..20)
        .map(|k| ControlInput::new(-0.2, 0.002 * k as f64))
        .collect();
    let g = gradient_check(&p, &point).unwrap();
    assert!(g.smooth, "kink distance {}", g.kink_distance);
    assert!(g.max_rel_error < 1e-4, "{}", g.max_rel_error);
}

#[test]
fn objective_is_monotone_across_iterations() {
    let svs = [SvState::new(25.0, -2.0, 9.0, 0.0), SvState::new(10.0, 2.0, 10.0, 0.0)];
    let p = problem(30, on_target(), &svs);
    let mut prev = f64::INFINITY;
    for iters in 1..=8 {
        let r = sqp_solve(&p, &zeros(30), iters).unwrap();
        assert!(r.cost <= prev, "iteration {iters}: {} > {prev}", r.cost);
        prev = r.cost;
    }
}

#[test]
fn solve_is_deterministic_and_feasible() {
    let svs = [SvState::new(25.0, -2.0, 9.0, 0.0), SvState::new(10.0, 2.0, 10.0, 0.0)];
    let p = problem(30, on_target(), &svs);
    let a = sqp_solve(&p, &zeros(30), 10).unwrap();
    let b = sqp_solve(&p, &zeros(30), 10).unwrap();
    assert_eq!(a.states, b.states);
    assert_eq!(a.controls, b.controls);
    assert_eq!(a.cost.to_bits(), b.cost.to_bits());
    assert!(a.max_defect(&p.vehicle, &p.config) <= 1e-9);
    assert!(a.controls.iter().all(|u| p.bounds.control_within(u)));
}

#[test]
fn nonfinite_initial_cost_is_rejected() {
    let p = problem(5, on_target(), &[SvState::new(f64::NAN, -2.0, 0.0, 0.0)]);
    assert!(matches!(sqp_solve(&p, &zeros(5), 5), Err(Error::InvalidWarmStart)));
}

#[test]
fn guess_length_is_checked() {
    let p = problem(5, on_target(), &[]);
    assert!(matches!(sqp_solve(&p, &zeros(4), 5), Err(Error::Config(_))));
}

/// One-step problem without safety terms: the solver must land on the
/// least-squares minimizer found by an independent damped Newton iteration
/// on a finite-difference gradient and Hessian.
#[test]
fn one_step_matches_independent_least_squares() {
    let x0 = VehicleState::new(0.0, -2.0, 0.05, 12.0, 0.2, 0.1);
    let mut p = problem(1, x0, &[]);
    p.safety.w = vec![0.0; p.safety.m];
    p.weights.r_accel = 1e3;
    p.weights.r_steer = 1e3;
    p.weights.qt_phi = 1e4;
    p.weights.qt_omega = 1e3;
    let r = sqp_solve(&p, &zeros(1), 50).unwrap();

    let f = |a: f64, d: f64| {
        let x1 = shoot_interval(&x0, &ControlInput::new(a, d), p.config.ts, p.config.substeps, &p.vehicle);
        p.weights.r_accel * a * a
            + p.weights.r_steer * d * d
            + p.weights.qt_phi * x1.phi * x1.phi
            + p.weights.qt_omega * x1.omega * x1.omega
    };
    let (mut a, mut d) = (0.0f64, 0.0f64);
    let h = 1e-4;
    for _ in 0..100 {
        let ga = (f(a + h, d) - f(a - h, d)) / (2.0 * h);
        let gd = (f(a, d + h) - f(a, d - h)) / (2.0 * h);
        let haa = (f(a + h, d) - 2.0 * f(a, d) + f(a - h, d)) / (h * h);
        let hdd = (f(a, d + h) - 2.0 * f(a, d) + f(a, d - h)) / (h * h);
        let had = (f(a + h, d + h) - f(a + h, d - h) - f(a - h, d + h) + f(a - h, d - h))
            / (4.0 * h * h);
        let det = haa * hdd - had * had;
        let da = (hdd * ga - had * gd) / det;
        let dd = (haa * gd - had * ga) / det;
        a -= da;
        d -= dd;
        if da.abs() + dd.abs() < 1e-14 {
            break;
        }
    }
    assert!(p.bounds.control_within(&ControlInput::new(a, d)));
    assert!((r.controls[0].accel - a).abs() < 1e-6, "{} vs {a}", r.controls[0].accel);
    assert!((r.controls[0].steer - d).abs() < 1e-6, "{} vs {d}", r.controls[0].steer);
}

