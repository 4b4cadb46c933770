//! Full-batch gradient descent with backtracking (Armijo) line search
//! over a flat parameter vector. Deterministic given the starting point.

use crate::error::{Error, Result};

pub struct GdOptions {
    pub max_iters: usize,
    /// Stop when the gradient infinity norm drops below this.
    pub grad_tol: f64,
    pub init_step: f64,
}

impl Default for GdOptions {
    fn default() -> Self {
        GdOptions {
            max_iters: 2000,
            grad_tol: 1e-6,
            init_step: 1.0,
        }
    }
}

pub struct GdResult {
    pub params: Vec<f64>,
    /// Loss after every accepted step, starting with the initial loss.
    pub loss_trace: Vec<f64>,
    pub iterations: usize,
    pub final_grad_inf_norm: f64,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimize `objective` (returning loss and gradient) from `params0`.
pub fn gradient_descent<F>(params0: Vec<f64>, objective: F, opts: &GdOptions) -> Result<GdResult>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let mut params = params0;
    let (mut loss, mut grad) = objective(&params);
    if !loss.is_finite() {
        return Err(Error::Model("non-finite initial loss".into()));
    }
    let mut trace = vec![loss];
    let mut step = opts.init_step;
    let armijo = 1e-4;
    let mut iterations = 0;

    for _ in 0..opts.max_iters {
        let grad_norm = inf_norm(&grad);
        if grad_norm < opts.grad_tol {
            break;
        }
        let grad_sq: f64 = grad.iter().map(|g| g * g).sum();
        // backtrack until sufficient decrease
        let mut accepted = false;
        let mut t = step;
        while t > 1e-18 {
            let candidate: Vec<f64> = params
                .iter()
                .zip(&grad)
                .map(|(p, g)| p - t * g)
                .collect();
            let (cand_loss, cand_grad) = objective(&candidate);
            if cand_loss.is_finite() && cand_loss <= loss - armijo * t * grad_sq {
                params = candidate;
                loss = cand_loss;
                grad = cand_grad;
                trace.push(loss);
                // let the step grow back so one bad region does not
                // pin us at a tiny step forever
                step = (t * 2.0).min(1e6);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        if !accepted {
            break;
        }
    }

    Ok(GdResult {
        final_grad_inf_norm: inf_norm(&grad),
        params,
        loss_trace: trace,
        iterations,
    })
}

/// Central finite-difference gradient of a scalar function; the
/// independent oracle used by the gradient-check tests.
pub fn finite_difference_gradient<F>(params: &[f64], f: F, h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut grad = vec![0.0; params.len()];
    let mut work = params.to_vec();
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + h;
        let up = f(&work);
        work[i] = orig - h;
        let down = f(&work);
        work[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_converges() {
        // f(x) = sum (x_i - i)^2
        let f = |p: &[f64]| {
            let loss: f64 = p.iter().enumerate().map(|(i, x)| (x - i as f64).powi(2)).sum();
            let grad: Vec<f64> = p.iter().enumerate().map(|(i, x)| 2.0 * (x - i as f64)).collect();
            (loss, grad)
        };
        let result = gradient_descent(vec![10.0; 5], f, &GdOptions::default()).unwrap();
        for (i, p) in result.params.iter().enumerate() {
            assert!((p - i as f64).abs() < 1e-5);
        }
        // monotone trace
        for w in result.loss_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn finite_difference_matches_analytic() {
        let f = |p: &[f64]| p.iter().map(|x| x.powi(4)).sum::<f64>();
        let p = vec![0.5, -1.2, 2.0];
        let fd = finite_difference_gradient(&p, f, 1e-5);
        for (x, g) in p.iter().zip(&fd) {
            assert!((g - 4.0 * x.powi(3)).abs() < 1e-6);
        }
    }
}
