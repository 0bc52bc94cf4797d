//! Limited-memory quasi-Newton descent with Armijo backtracking.
//!
//! The objective may refuse a trial point by returning
//! [`Error::PenaltyBlowup`]; the line search treats that as an infinite
//! value and shrinks the step.
//!
//! Near convergence the Armijo decrease drops below the rounding noise of
//! the objective. A trial is then also accepted when the value does not
//! rise beyond that noise and the gradient norm shrinks.

use std::collections::VecDeque;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::scalar::{c, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    pub shrink: f64,
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    MaxIterations,
    /// No step along steepest descent gave sufficient decrease.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct Outcome<T: Real> {
    pub x: DVector<T>,
    pub value: T,
    pub grad: DVector<T>,
    pub grad_norm: T,
    pub iterations: usize,
    pub stop: StopReason,
    /// Objective after every accepted step, starting value first.
    pub trace: Vec<T>,
}

impl<T: Real> Outcome<T> {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::GradientTolerance
    }
}

pub struct Options<T: Real> {
    pub grad_tol: T,
    pub max_iters: usize,
    pub memory: usize,
    pub line_search: LineSearch,
    /// Scaling of the first (steepest-descent) direction.
    pub initial_scale: T,
}

enum Trial<T: Real> {
    Accepted(DVector<T>, T, DVector<T>, T),
    Rejected { all_blowups: bool },
}

fn line_search<T: Real, F>(
    f: &mut F,
    x: &DVector<T>,
    value: T,
    grad_norm: T,
    slope: T,
    dir: &DVector<T>,
    ls: &LineSearch,
) -> Result<Trial<T>>
where
    F: FnMut(&DVector<T>) -> Result<(T, DVector<T>)>,
{
    let mut alpha = T::one();
    let mut all_blowups = true;
    let noise = c::<T>(8.0) * T::EPS * (T::one() + value.abs());
    for _ in 0..ls.max_backtracks {
        let trial = x + dir * alpha;
        match f(&trial) {
            Ok((v, g)) => {
                all_blowups = false;
                let armijo = v <= value + c::<T>(ls.sufficient_decrease) * alpha * slope;
                let within_noise = v <= value + noise && g.norm() < grad_norm;
                if v.is_finite() && (armijo || within_noise) {
                    return Ok(Trial::Accepted(trial, v, g, alpha));
                }
            }
            Err(Error::PenaltyBlowup { .. }) => {}
            Err(e) => return Err(e),
        }
        alpha *= c(ls.shrink);
    }
    Ok(Trial::Rejected { all_blowups })
}

/// Minimizes `f` from `x0`. `f` returns value and gradient.
pub fn minimize<T: Real, F>(mut f: F, x0: DVector<T>, opts: &Options<T>) -> Result<Outcome<T>>
where
    F: FnMut(&DVector<T>) -> Result<(T, DVector<T>)>,
{
    let (mut value, mut grad) = f(&x0)?;
    let mut x = x0;
    let mut trace = vec![value];
    let mut history: VecDeque<(DVector<T>, DVector<T>, T)> = VecDeque::new();
    let mut iterations = 0;
    loop {
        let grad_norm = grad.norm();
        if grad_norm <= opts.grad_tol {
            return Ok(Outcome {
                x,
                value,
                grad,
                grad_norm,
                iterations,
                stop: StopReason::GradientTolerance,
                trace,
            });
        }
        if iterations >= opts.max_iters {
            return Ok(Outcome {
                x,
                value,
                grad,
                grad_norm,
                iterations,
                stop: StopReason::MaxIterations,
                trace,
            });
        }
        iterations += 1;

        let mut dir = two_loop(&grad, &history, opts.initial_scale);
        let mut slope = dir.dot(&grad);
        if !(slope < T::zero()) {
            history.clear();
            dir = &grad * (-opts.initial_scale);
            slope = dir.dot(&grad);
        }
        let mut outcome =
            line_search(&mut f, &x, value, grad_norm, slope, &dir, &opts.line_search)?;
        if matches!(outcome, Trial::Rejected { .. }) && !history.is_empty() {
            history.clear();
            dir = &grad * (-opts.initial_scale);
            slope = dir.dot(&grad);
            outcome = line_search(&mut f, &x, value, grad_norm, slope, &dir, &opts.line_search)?;
        }
        match outcome {
            Trial::Accepted(xn, vn, gn, _) => {
                let s = &xn - &x;
                let y = &gn - &grad;
                let sy = s.dot(&y);
                if sy > T::EPS * s.norm() * y.norm() {
                    history.push_back((s, y, T::one() / sy));
                    if history.len() > opts.memory {
                        history.pop_front();
                    }
                }
                x = xn;
                value = vn;
                grad = gn;
                trace.push(value);
            }
            Trial::Rejected { all_blowups } => {
                if all_blowups {
                    return Err(Error::StuckAtBarrier(iterations));
                }
                return Ok(Outcome {
                    x,
                    value,
                    grad,
                    grad_norm,
                    iterations,
                    stop: StopReason::Stalled,
                    trace,
                });
            }
        }
    }
}

fn two_loop<T: Real>(
    grad: &DVector<T>,
    history: &VecDeque<(DVector<T>, DVector<T>, T)>,
    scale: T,
) -> DVector<T> {
    let mut q = grad.clone();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = *rho * s.dot(&q);
        q -= y * a;
        alphas.push(a);
    }
    let gamma = match history.back() {
        Some((s, y, _)) => s.dot(y) / y.dot(y),
        None => scale,
    };
    let mut r = q * gamma;
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = *rho * y.dot(&r);
        r += s * (*a - b);
    }
    -r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &DVector<f64>| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = DVector::from_vec(vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ]);
            Ok((v, g))
        };
        let opts = Options {
            grad_tol: 1e-10,
            max_iters: 500,
            memory: 8,
            line_search: LineSearch::default(),
            initial_scale: 1e-3,
        };
        let out = minimize(f, DVector::from_vec(vec![-1.2, 1.0]), &opts).unwrap();
        assert!(out.converged());
        assert!((out.x[0] - 1.0).abs() < 1e-8 && (out.x[1] - 1.0).abs() < 1e-8);
        assert!(out.trace.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn reaches_gradients_below_value_noise() {
        let f = |x: &DVector<f64>| {
            let v = 1.0 + 0.5 * (x[0] * x[0] + 100.0 * x[1] * x[1]);
            Ok((v, DVector::from_vec(vec![x[0], 100.0 * x[1]])))
        };
        let opts = Options {
            grad_tol: 1e-13,
            max_iters: 500,
            memory: 4,
            line_search: LineSearch::default(),
            initial_scale: 1e-2,
        };
        let out = minimize(f, DVector::from_vec(vec![0.3, -0.2]), &opts).unwrap();
        assert!(out.converged(), "{:?}", out.stop);
    }

    #[test]
    fn barrier_everywhere_is_reported() {
        let f = |x: &DVector<f64>| {
            if x[0] != 0.0 {
                return Err(Error::PenaltyBlowup { t: 1.0, delta: 0.5 });
            }
            Ok((x[0], DVector::from_vec(vec![1.0])))
        };
        let opts = Options {
            grad_tol: 1e-10,
            max_iters: 5,
            memory: 4,
            line_search: LineSearch::default(),
            initial_scale: 1.0,
        };
        assert!(matches!(
            minimize(f, DVector::from_vec(vec![0.0]), &opts),
            Err(Error::StuckAtBarrier(_))
        ));
    }
}
