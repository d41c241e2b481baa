//! Projected limited-memory BFGS for minimisation under lower bounds.
//!
//! Each iteration builds a quasi-Newton direction on the free variables
//! (those not held at their bound by an outward-pointing gradient), then
//! backtracks along the projected path `P(x + t d)` until the Armijo
//! condition holds. Accepted iterates therefore never increase the objective.

use std::collections::VecDeque;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimOptions {
    pub max_iterations: usize,
    /// Stop when `max |projected gradient| <= gradient_tolerance * max(1, |f|)`.
    pub gradient_tolerance: f64,
    /// Stop after two consecutive iterations with relative decrease below this.
    pub function_tolerance: f64,
    pub memory: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            gradient_tolerance: 1e-7,
            function_tolerance: 1e-14,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Termination {
    Gradient,
    FunctionChange,
    IterationLimit,
    LineSearchFailure,
    InfeasibleStart,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// Objective after each accepted iterate, starting with the initial point.
    pub history: Vec<f64>,
}

impl OptimOutcome {
    pub fn converged(&self) -> bool {
        matches!(self.termination, Termination::Gradient | Termination::FunctionChange)
    }
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn project(x: &mut [f64], lower: &[f64]) {
    for (v, &lb) in x.iter_mut().zip(lower) {
        if *v < lb {
            *v = lb;
        }
    }
}

/// Minimises `f` subject to `x >= lower`.
///
/// `f(x, grad)` returns the objective and writes the gradient, or `None` if
/// the point is infeasible (non-finite objective). Infeasible trial points
/// are treated as failed line-search steps.
pub fn minimize_bounded<F>(mut f: F, x0: &[f64], lower: &[f64], options: &OptimOptions) -> OptimOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> Option<f64>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lower);
    let mut g = vec![0.0; n];
    let mut evaluations = 1;
    let mut fx = match f(&x, &mut g) {
        Some(v) if v.is_finite() && g.iter().all(|d| d.is_finite()) => v,
        _ => {
            return OptimOutcome {
                x,
                value: f64::INFINITY,
                iterations: 0,
                evaluations,
                termination: Termination::InfeasibleStart,
                history: Vec::new(),
            }
        }
    };
    let mut history = vec![fx];
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(options.memory);
    let mut small_steps = 0;
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut d = vec![0.0; n];

    for iteration in 0..options.max_iterations {
        let free: Vec<bool> = (0..n).map(|i| !(x[i] <= lower[i] && g[i] > 0.0)).collect();
        let pg_max = (0..n).filter(|&i| free[i]).map(|i| g[i].abs()).fold(0.0, f64::max);
        if pg_max <= options.gradient_tolerance * fx.abs().max(1.0) {
            return finish(x, fx, iteration, evaluations, Termination::Gradient, history);
        }

        // two-loop recursion on the masked gradient
        let mut q: Vec<f64> = (0..n).map(|i| if free[i] { g[i] } else { 0.0 }).collect();
        let mut coeffs = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = rho * dot(s, &q);
            for i in 0..n {
                q[i] -= a * y[i];
            }
            coeffs.push(a);
        }
        let gamma = memory.back().map_or(1.0, |(s, y, _)| dot(s, y) / dot(y, y));
        for v in q.iter_mut() {
            *v *= gamma;
        }
        for ((s, y, rho), a) in memory.iter().zip(coeffs.iter().rev()) {
            let b = rho * dot(y, &q);
            for i in 0..n {
                q[i] += (a - b) * s[i];
            }
        }
        for i in 0..n {
            d[i] = if free[i] { -q[i] } else { 0.0 };
        }
        if dot(&d, &g) >= 0.0 {
            memory.clear();
            for i in 0..n {
                d[i] = if free[i] { -g[i] } else { 0.0 };
            }
        }

        let mut step = if memory.is_empty() {
            let d_max = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            (1.0 / d_max).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            project(&mut x_new, lower);
            let moved: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
            if moved.iter().all(|&m| m == 0.0) {
                break;
            }
            evaluations += 1;
            if let Some(v) = f(&x_new, &mut g_new) {
                if v.is_finite() && g_new.iter().all(|d| d.is_finite()) && v <= fx + ARMIJO * dot(&g, &moved) {
                    accepted = Some((v, moved));
                    break;
                }
            }
            step *= 0.5;
        }

        let Some((f_next, s)) = accepted else {
            if !memory.is_empty() {
                // retry from steepest descent next iteration
                memory.clear();
                continue;
            }
            return finish(x, fx, iteration, evaluations, Termination::LineSearchFailure, history);
        };

        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if memory.len() == options.memory {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }

        let decrease = fx - f_next;
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        fx = f_next;
        history.push(fx);

        if decrease <= options.function_tolerance * fx.abs().max(1.0) {
            small_steps += 1;
            if small_steps >= 2 {
                return finish(x, fx, iteration + 1, evaluations, Termination::FunctionChange, history);
            }
        } else {
            small_steps = 0;
        }
    }
    let iterations = options.max_iterations;
    finish(x, fx, iterations, evaluations, Termination::IterationLimit, history)
}

fn finish(
    x: Vec<f64>,
    value: f64,
    iterations: usize,
    evaluations: usize,
    termination: Termination,
    history: Vec<f64>,
) -> OptimOutcome {
    OptimOutcome {
        x,
        value,
        iterations,
        evaluations,
        termination,
        history,
    }
}
