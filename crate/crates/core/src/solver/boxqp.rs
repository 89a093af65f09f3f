//! Projected-Newton solver for box-constrained convex quadratic programs
//!
//! ```text
//! minimize   g'x + 0.5 x'Hx
//! subject to lo <= x <= hi
//! ```
//!
//! Each iteration fixes the variables sitting on a bound whose gradient
//! points outward, takes a Newton step on the remaining free block, and
//! runs a projected Armijo search along it.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxQpStatus {
    /// Free-block gradient below tolerance.
    Converged,
    /// Relative improvement below tolerance.
    SmallImprovement,
    /// Every variable is clamped.
    AllClamped,
    /// Projected search could not decrease the model.
    LineSearchFailed,
    /// Free Hessian block not positive definite.
    NotPositiveDefinite,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct BoxQpResult {
    pub x: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    pub status: BoxQpStatus,
}

#[derive(Debug, Clone, Copy)]
pub struct BoxQpOptions {
    pub max_iter: usize,
    pub min_grad: f64,
    pub min_rel_improve: f64,
    pub step_dec: f64,
    pub min_step: f64,
    pub armijo: f64,
}

impl Default for BoxQpOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            min_grad: 1e-10,
            min_rel_improve: 1e-12,
            step_dec: 0.6,
            min_step: 1e-22,
            armijo: 0.1,
        }
    }
}

fn clamp(x: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(x.len(), (0..x.len()).map(|i| x[i].max(lo[i]).min(hi[i])))
}

fn model(h: &DMatrix<f64>, g: &DVector<f64>, x: &DVector<f64>) -> f64 {
    g.dot(x) + 0.5 * x.dot(&(h * x))
}

pub fn solve_box_qp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    x0: &DVector<f64>,
    opts: &BoxQpOptions,
) -> BoxQpResult {
    let n = g.len();
    let mut x = clamp(x0, lo, hi);
    let mut value = model(h, g, &x);
    let mut status = BoxQpStatus::MaxIterations;
    let mut prev_clamped: Option<Vec<bool>> = None;
    let mut factor: Option<(Vec<usize>, nalgebra::Cholesky<f64, nalgebra::Dyn>)> = None;
    let grad_scale = 1.0 + g.amax();
    let mut iterations = 0;

    for iter in 0..opts.max_iter {
        iterations = iter + 1;
        let grad = g + h * &x;
        let clamped: Vec<bool> = (0..n)
            .map(|i| (x[i] <= lo[i] && grad[i] > 0.0) || (x[i] >= hi[i] && grad[i] < 0.0))
            .collect();
        let free: Vec<usize> = (0..n).filter(|&i| !clamped[i]).collect();
        if free.is_empty() {
            status = BoxQpStatus::AllClamped;
            break;
        }

        if prev_clamped.as_ref() != Some(&clamped) || factor.is_none() {
            let hff = DMatrix::from_fn(free.len(), free.len(), |r, c| h[(free[r], free[c])]);
            match hff.cholesky() {
                Some(ch) => factor = Some((free.clone(), ch)),
                None => {
                    status = BoxQpStatus::NotPositiveDefinite;
                    break;
                }
            }
            prev_clamped = Some(clamped.clone());
        }
        let (free_idx, chol) = factor.as_ref().expect("factor set above");

        let grad_norm = free_idx.iter().map(|&i| grad[i] * grad[i]).sum::<f64>().sqrt();
        if grad_norm < opts.min_grad * grad_scale {
            status = BoxQpStatus::Converged;
            break;
        }

        // Newton step on the free block with clamped variables held fixed
        let mut x_clamped = DVector::zeros(n);
        for i in 0..n {
            if clamped[i] {
                x_clamped[i] = x[i];
            }
        }
        let grad_clamped = g + h * &x_clamped;
        let rhs = DVector::from_iterator(free_idx.len(), free_idx.iter().map(|&i| grad_clamped[i]));
        let newton = chol.solve(&rhs);
        let mut search = DVector::zeros(n);
        for (r, &i) in free_idx.iter().enumerate() {
            search[i] = -newton[r] - x[i];
        }

        let sdotg = search.dot(&grad);
        if sdotg >= 0.0 {
            status = BoxQpStatus::Converged;
            break;
        }

        let mut step = 1.0;
        let mut candidate = clamp(&(&x + &search * step), lo, hi);
        let mut cand_value = model(h, g, &candidate);
        while (cand_value - value) / (step * sdotg) < opts.armijo {
            step *= opts.step_dec;
            if step < opts.min_step {
                break;
            }
            candidate = clamp(&(&x + &search * step), lo, hi);
            cand_value = model(h, g, &candidate);
        }
        if step < opts.min_step {
            status = BoxQpStatus::LineSearchFailed;
            break;
        }

        let improvement = value - cand_value;
        x = candidate;
        value = cand_value;
        if improvement < opts.min_rel_improve * value.abs().max(1e-300) {
            status = BoxQpStatus::SmallImprovement;
            break;
        }
    }

    BoxQpResult {
        x,
        value,
        iterations,
        status,
    }
}
