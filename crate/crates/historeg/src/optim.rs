//! Optimizers driving the registration: a damped Gauss-Newton loop for the
//! parametric models and limited-memory BFGS for the B-spline coefficients,
//! both with backtracking (Armijo) line search and shared stopping rules.

use crate::image::Image;
use crate::ngf::{gn_system, NgfLevel, NgfWorkspace, ParamModel};
use nalgebra::{SMatrix, SVector};
use std::collections::VecDeque;

/// Armijo sufficient-decrease constant.
const ARMIJO_C: f64 = 1e-4;
/// Gradient norms below this are treated as an already-solved problem.
const GRADIENT_FLOOR: f64 = 1e-14;

/// Iteration limits and convergence tolerances shared by all steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSettings {
    /// Per-level iteration cap for rigid and affine Gauss-Newton.
    pub max_iterations_parametric: usize,
    /// Per-level iteration cap for the non-parametric step.
    pub max_iterations_nonparametric: usize,
    /// Stop when the gradient norm falls below this fraction of its
    /// starting value.
    pub gradient_tolerance: f64,
    /// Stop when the relative objective decrease falls below this.
    pub objective_tolerance: f64,
    /// Stop when the relative parameter update falls below this.
    pub parameter_tolerance: f64,
    /// Number of curvature pairs kept by L-BFGS.
    pub lbfgs_memory: usize,
    /// Maximum step halvings before a line search gives up.
    pub max_line_search_halvings: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iterations_parametric: 50,
            max_iterations_nonparametric: 100,
            gradient_tolerance: 1e-6,
            objective_tolerance: 1e-6,
            parameter_tolerance: 1e-6,
            lbfgs_memory: 10,
            max_line_search_halvings: 20,
        }
    }
}

/// Why an optimization loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Gradient norm fell below the relative tolerance.
    GradientTolerance,
    /// Objective stopped decreasing.
    ObjectiveChange,
    /// Parameter updates became negligible.
    ParameterChange,
    /// Iteration cap reached.
    MaxIterations,
    /// No step length produced sufficient decrease; the last accepted
    /// iterate is returned. A diagnostic, not an error.
    LineSearchStalled,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::GradientTolerance => "gradient tolerance",
            StopReason::ObjectiveChange => "objective change",
            StopReason::ParameterChange => "parameter change",
            StopReason::MaxIterations => "max iterations",
            StopReason::LineSearchStalled => "line search stalled",
        }
    }
}

/// Outcome of one optimization run (one level of one step).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunReport {
    pub iterations: usize,
    pub initial_value: f64,
    pub final_value: f64,
    pub stop: StopReason,
}

/// Solves `H d = -g`, adding Tikhonov damping `1e-10 * trace(H) / K` to the
/// diagonal when the plain system has no Cholesky factorization; falls back
/// to steepest descent if even the damped system fails.
fn solve_direction<const K: usize>(
    hessian: &SMatrix<f64, K, K>,
    gradient: &SVector<f64, K>,
) -> SVector<f64, K> {
    if let Some(chol) = hessian.cholesky() {
        return chol.solve(&-gradient);
    }
    let damping = 1e-10 * hessian.trace() / K as f64;
    let damped = hessian + SMatrix::<f64, K, K>::identity() * damping;
    if let Some(chol) = damped.cholesky() {
        return chol.solve(&-gradient);
    }
    -gradient
}

/// Minimizes the NGF distance over a parametric model on one level by damped
/// Gauss-Newton with backtracking line search.
pub fn gauss_newton<const K: usize, M: ParamModel<K>>(
    level: &NgfLevel,
    template: &Image,
    init: M,
    settings: &OptimizerSettings,
    ws: &mut NgfWorkspace,
) -> (M, RunReport) {
    let mut model = init;
    let mut sys = gn_system(level, template, &model, ws);
    let initial_value = sys.value;
    let g0 = sys.gradient.norm();
    if g0 < GRADIENT_FLOOR {
        return (
            model,
            RunReport {
                iterations: 0,
                initial_value,
                final_value: initial_value,
                stop: StopReason::GradientTolerance,
            },
        );
    }

    let mut value = initial_value;
    let mut iterations = 0;
    let stop = loop {
        if iterations >= settings.max_iterations_parametric {
            break StopReason::MaxIterations;
        }
        let mut direction = solve_direction(&sys.hessian, &sys.gradient);
        let mut slope = sys.gradient.dot(&direction);
        if slope >= 0.0 {
            direction = -sys.gradient;
            slope = -sys.gradient.norm_squared();
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=settings.max_line_search_halvings {
            let candidate = model.step(&(direction * t));
            let trial = level.value(template, |p| candidate.apply(p), ws);
            if trial <= value + ARMIJO_C * t * slope {
                accepted = Some((candidate, trial, t));
                break;
            }
            t *= 0.5;
        }
        let Some((candidate, trial, t)) = accepted else {
            break StopReason::LineSearchStalled;
        };
        iterations += 1;

        let step_norm = direction.amax() * t;
        let value_drop = value - trial;
        model = candidate;
        value = trial;
        sys = gn_system(level, template, &model, ws);

        if sys.gradient.norm() <= settings.gradient_tolerance * g0 {
            break StopReason::GradientTolerance;
        }
        if value_drop <= settings.objective_tolerance * (1.0 + value.abs()) {
            break StopReason::ObjectiveChange;
        }
        if step_norm <= settings.parameter_tolerance * (1.0 + model.param_norm_inf()) {
            break StopReason::ParameterChange;
        }
    };
    (
        model,
        RunReport {
            iterations,
            initial_value,
            final_value: value,
            stop,
        },
    )
}

/// A smooth function of many variables, evaluated in place.
pub trait Objective {
    fn value(&mut self, x: &[f64]) -> f64;
    /// Returns the value and writes the gradient into `grad`.
    fn value_and_gradient(&mut self, x: &[f64], grad: &mut [f64]) -> f64;
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `objective` starting from `x` (updated in place) with two-loop
/// L-BFGS. Curvature pairs with non-positive `s . y` are discarded; the
/// inverse Hessian seed is the standard `s.y / y.y` scaling.
pub fn lbfgs(
    objective: &mut dyn Objective,
    x: &mut [f64],
    settings: &OptimizerSettings,
    max_iterations: usize,
) -> RunReport {
    let n = x.len();
    let mut grad = vec![0.0; n];
    let mut value = objective.value_and_gradient(x, &mut grad);
    let initial_value = value;
    let g0 = norm2(&grad);
    if g0 < GRADIENT_FLOOR {
        return RunReport {
            iterations: 0,
            initial_value,
            final_value: value,
            stop: StopReason::GradientTolerance,
        };
    }

    // (s, y, 1 / s.y) triples, newest last.
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut direction = vec![0.0; n];
    let mut x_trial = vec![0.0; n];
    let mut grad_prev = vec![0.0; n];
    let mut alphas = Vec::new();

    let mut iterations = 0;
    let stop = loop {
        if iterations >= max_iterations {
            break StopReason::MaxIterations;
        }

        // Two-loop recursion: direction = -(approximate inverse Hessian) * grad.
        direction.copy_from_slice(&grad);
        alphas.clear();
        for (s, y, inv_sy) in pairs.iter().rev() {
            let alpha = inv_sy * dot(s, &direction);
            for (d, yk) in direction.iter_mut().zip(y) {
                *d -= alpha * yk;
            }
            alphas.push(alpha);
        }
        if let Some((_, y, inv_sy)) = pairs.back() {
            let gamma = 1.0 / (inv_sy * dot(y, y));
            for d in direction.iter_mut() {
                *d *= gamma;
            }
        }
        for ((s, y, inv_sy), alpha) in pairs.iter().zip(alphas.iter().rev()) {
            let beta = inv_sy * dot(y, &direction);
            for (d, sk) in direction.iter_mut().zip(s) {
                *d += (alpha - beta) * sk;
            }
        }
        for d in direction.iter_mut() {
            *d = -*d;
        }

        let mut slope = dot(&grad, &direction);
        if slope >= 0.0 {
            for (d, g) in direction.iter_mut().zip(&grad) {
                *d = -g;
            }
            slope = -norm2(&grad).powi(2);
        }

        // Unit trial step once the metric is scaled; a conservative first
        // step before any curvature information exists.
        let mut t = if pairs.is_empty() {
            1.0 / (1.0 + norm_inf(&grad))
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..=settings.max_line_search_halvings {
            for ((xt, xi), d) in x_trial.iter_mut().zip(x.iter()).zip(&direction) {
                *xt = xi + t * d;
            }
            let trial = objective.value(&x_trial);
            if trial <= value + ARMIJO_C * t * slope {
                accepted = Some(trial);
                break;
            }
            t *= 0.5;
        }
        let Some(trial) = accepted else {
            break StopReason::LineSearchStalled;
        };
        iterations += 1;

        grad_prev.copy_from_slice(&grad);
        let value_drop = value - trial;
        value = objective.value_and_gradient(&x_trial, &mut grad);
        let step_norm = t * norm_inf(&direction);

        let mut s = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut sy = 0.0;
        for i in 0..n {
            s[i] = x_trial[i] - x[i];
            y[i] = grad[i] - grad_prev[i];
            sy += s[i] * y[i];
        }
        x.copy_from_slice(&x_trial);
        if sy > 1e-12 * norm2(&s) * norm2(&y) {
            if pairs.len() == settings.lbfgs_memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }

        if norm2(&grad) <= settings.gradient_tolerance * g0 {
            break StopReason::GradientTolerance;
        }
        if value_drop <= settings.objective_tolerance * (1.0 + value.abs()) {
            break StopReason::ObjectiveChange;
        }
        if step_norm <= settings.parameter_tolerance * (1.0 + norm_inf(x)) {
            break StopReason::ParameterChange;
        }
    };
    RunReport {
        iterations,
        initial_value,
        final_value: value,
        stop,
    }
}
