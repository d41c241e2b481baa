//! Maximum-likelihood fitting.
//!
//! The transition matrices are estimated in closed form. The remaining
//! parameters split into one independent problem per event type `e`, over
//! `nu_e` and the kernel components `(., ., e)`, each maximised from several
//! starting points with a bound-constrained quasi-Newton method. Parameters
//! stay in natural units; internally each coordinate is divided by its
//! starting magnitude, which rescales the problem without moving the bounds
//! off zero.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{self, source_slots, LikelihoodBreakdown};
use crate::model::{Dimensions, ExpKernelParams, MarkedSequence, SdHawkesModel};
use crate::optim::{minimize_bounded, OptimOptions, Termination};
use crate::simulate::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterBounds {
    pub nu_min: f64,
    pub alpha_min: f64,
    pub beta_min: f64,
}

impl Default for ParameterBounds {
    fn default() -> Self {
        Self {
            nu_min: 1e-8,
            alpha_min: 0.0,
            beta_min: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub n_random_starts: usize,
    /// Explicit starting points, tried before the random ones.
    pub warm_starts: Vec<ExpKernelParams>,
    /// Fit a single-state model first and use it (copied across states) as a start.
    pub ordinary_warm_start: bool,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub bounds: ParameterBounds,
    pub seed: u64,
    /// Run subproblems and starts on the rayon pool.
    pub parallel: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_random_starts: 3,
            warm_starts: Vec::new(),
            ordinary_warm_start: true,
            max_iterations: 1000,
            gradient_tolerance: OptimOptions::default().gradient_tolerance,
            bounds: ParameterBounds::default(),
            seed: 0,
            parallel: true,
        }
    }
}

impl FitConfig {
    fn check(&self) -> Result<()> {
        let b = &self.bounds;
        if !(b.nu_min > 0.0 && b.beta_min > 0.0 && b.alpha_min >= 0.0) {
            return Err(Error::invalid("lower bounds for nu and beta must be positive, alpha's non-negative"));
        }
        if self.n_random_starts == 0 && self.warm_starts.is_empty() && !self.ordinary_warm_start {
            return Err(Error::invalid("no starting points: need random starts or warm starts"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartOrigin {
    Warm,
    Ordinary,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartTrace {
    pub event: usize,
    pub start_id: usize,
    pub origin: StartOrigin,
    pub initial_value: f64,
    pub final_value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// `(nu, alpha[k], beta[k])` at the start, `k` the source slot.
    pub start: (f64, Vec<f64>, Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub model: SdHawkesModel,
    pub log_likelihood: f64,
    pub breakdown: LikelihoodBreakdown,
    pub traces: Vec<StartTrace>,
    /// Winning start id per event type.
    pub chosen_start: Vec<usize>,
    /// Transition rows never observed (filled uniformly).
    pub unobserved_transition_rows: Vec<(usize, usize)>,
}

struct Subproblem<'a> {
    seq: &'a MarkedSequence,
    sources: &'a [usize],
    target: usize,
    slots: usize,
}

impl Subproblem<'_> {
    /// Unpacks `[nu, alpha..., beta...]`.
    fn split(theta: &[f64]) -> (f64, &[f64], &[f64]) {
        let slots = (theta.len() - 1) / 2;
        (theta[0], &theta[1..1 + slots], &theta[1 + slots..])
    }

    fn value(&self, theta: &[f64]) -> Option<f64> {
        let (nu, a, b) = Self::split(theta);
        likelihood::target_objective(self.seq, self.sources, self.target, nu, a, b, false)
            .ok()
            .map(|o| o.value())
            .filter(|v| v.is_finite())
    }

    /// Negative objective and gradient.
    fn negated(&self, theta: &[f64], grad: &mut [f64]) -> Option<f64> {
        let (nu, a, b) = Self::split(theta);
        let obj = likelihood::target_objective(self.seq, self.sources, self.target, nu, a, b, true).ok()?;
        grad[0] = -obj.d_nu;
        for k in 0..self.slots {
            grad[1 + k] = -obj.d_alpha[k];
            grad[1 + self.slots + k] = -obj.d_beta[k];
        }
        let v = obj.value();
        v.is_finite().then_some(-v)
    }
}

fn pack(nu: f64, alpha: &[f64], beta: &[f64]) -> Vec<f64> {
    let mut theta = Vec::with_capacity(1 + 2 * alpha.len());
    theta.push(nu);
    theta.extend_from_slice(alpha);
    theta.extend_from_slice(beta);
    theta
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

/// Random starting points for target `e`, drawn log-uniformly: `nu` within a
/// decade either side of the per-type empirical rate, `beta` in `[0.1, 1e5]`,
/// and `alpha / beta` in `[1e-4, 1] / (d_e d_x)` so the starting kernel
/// norms sum to at most one.
fn random_starts(seq: &MarkedSequence, dims: &Dimensions, target: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let (de, dx) = (dims.n_events(), dims.n_states());
    let slots = de * dx;
    let span = seq.t_end - seq.t0;
    let rate = (seq.in_window_len().max(1) as f64 / span) / de as f64;
    let mut rng = rng_for(seed, 1 + target as u64);
    (0..count)
        .map(|_| {
            let nu = log_uniform(&mut rng, 0.1 * rate, 10.0 * rate);
            let beta: Vec<f64> = (0..slots).map(|_| log_uniform(&mut rng, 1e-1, 1e5)).collect();
            let scale = 1.0 / (100.0 * slots as f64);
            let alpha: Vec<f64> = beta.iter().map(|&b| log_uniform(&mut rng, 1e-2, 1e2) * scale * b).collect();
            pack(nu, &alpha, &beta)
        })
        .collect()
}

fn lower_bounds(slots: usize, bounds: &ParameterBounds) -> Vec<f64> {
    let mut lb = vec![bounds.nu_min];
    lb.extend(std::iter::repeat_n(bounds.alpha_min, slots));
    lb.extend(std::iter::repeat_n(bounds.beta_min, slots));
    lb
}

struct StartRun {
    trace: StartTrace,
    theta: Vec<f64>,
}

fn run_start(problem: &Subproblem, start_id: usize, origin: StartOrigin, start: &[f64], config: &FitConfig) -> StartRun {
    let lower = lower_bounds(problem.slots, &config.bounds);
    let mut x0 = start.to_vec();
    for (v, &lb) in x0.iter_mut().zip(&lower) {
        if !(*v >= lb) {
            *v = lb;
        }
    }
    // per-coordinate scale: starting magnitude, floored for zero alphas
    let floor = x0[1 + problem.slots..].iter().copied().fold(0.0, f64::max).max(1.0) * 1e-3;
    let scale: Vec<f64> = x0
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if (1..=problem.slots).contains(&i) {
                let k = i - 1;
                v.max(1e-3 * x0[1 + problem.slots + k]).max(floor * 1e-3)
            } else {
                v.max(1e-12)
            }
        })
        .collect();
    let u0: Vec<f64> = x0.iter().zip(&scale).map(|(v, s)| v / s).collect();
    let u_lower: Vec<f64> = lower.iter().zip(&scale).map(|(v, s)| v / s).collect();
    let options = OptimOptions {
        max_iterations: config.max_iterations,
        gradient_tolerance: config.gradient_tolerance,
        ..OptimOptions::default()
    };
    let mut theta = vec![0.0; x0.len()];
    let mut grad = vec![0.0; x0.len()];
    let outcome = minimize_bounded(
        |u, g| {
            for i in 0..u.len() {
                theta[i] = u[i] * scale[i];
            }
            let v = problem.negated(&theta, &mut grad)?;
            for i in 0..u.len() {
                g[i] = grad[i] * scale[i];
            }
            Some(v)
        },
        &u0,
        &u_lower,
        &options,
    );
    let fitted: Vec<f64> = outcome
        .x
        .iter()
        .zip(&scale)
        .zip(&lower)
        .map(|((u, s), &lb)| (u * s).max(lb))
        .collect();
    let initial_value = problem.value(&x0).unwrap_or(f64::NEG_INFINITY);
    let final_value = if outcome.termination == Termination::InfeasibleStart {
        f64::NEG_INFINITY
    } else {
        problem.value(&fitted).unwrap_or(f64::NEG_INFINITY)
    };
    let (nu, a, b) = Subproblem::split(&x0);
    StartRun {
        trace: StartTrace {
            event: problem.target,
            start_id,
            origin,
            initial_value,
            final_value,
            iterations: outcome.iterations,
            evaluations: outcome.evaluations,
            converged: outcome.converged(),
            termination: outcome.termination.clone(),
            start: (nu, a.to_vec(), b.to_vec()),
        },
        theta: fitted,
    }
}

/// Broadcasts single-state kernel parameters over `n_states` source states.
fn broadcast_ordinary(ordinary: &ExpKernelParams, n_states: usize) -> Result<ExpKernelParams> {
    let de = ordinary.n_events();
    let mut alpha = Vec::with_capacity(de * n_states * de);
    let mut beta = Vec::with_capacity(de * n_states * de);
    for ep in 0..de {
        for _ in 0..n_states {
            for e in 0..de {
                alpha.push(ordinary.alpha(ep, 0, e));
                beta.push(ordinary.beta(ep, 0, e));
            }
        }
    }
    ExpKernelParams::new(de, n_states, ordinary.nu.clone(), alpha, beta)
}

/// Fits a model with `dims` to `seq`.
pub fn fit(seq: &MarkedSequence, dims: &Dimensions, config: &FitConfig) -> Result<EstimateResult> {
    config.check()?;
    seq.validate(dims)?;
    let (de, dx) = (dims.n_events(), dims.n_states());
    let slots = de * dx;
    for w in &config.warm_starts {
        if w.n_events() != de || w.n_states() != dx {
            return Err(Error::invalid("warm start dimensions do not match"));
        }
    }

    let transitions = likelihood::transition_mle(seq, dims)?;

    // start list shared by all subproblems: warm, ordinary, random
    let mut kernel_starts: Vec<(StartOrigin, ExpKernelParams)> =
        config.warm_starts.iter().map(|w| (StartOrigin::Warm, w.clone())).collect();
    if config.ordinary_warm_start && dx > 1 {
        let ordinary_config = FitConfig {
            warm_starts: Vec::new(),
            ordinary_warm_start: false,
            n_random_starts: config.n_random_starts.max(1),
            ..config.clone()
        };
        let ordinary = fit_ordinary(seq, dims, &ordinary_config)?;
        kernel_starts.push((StartOrigin::Ordinary, broadcast_ordinary(&ordinary.model.kernel, dx)?));
    }

    let sources = source_slots(seq, dx);
    let jobs: Vec<(usize, usize, StartOrigin, Vec<f64>)> = (0..de)
        .flat_map(|e| {
            let mut list: Vec<(StartOrigin, Vec<f64>)> = kernel_starts
                .iter()
                .map(|(origin, k)| {
                    let (nu, a, b) = k.target_block(e);
                    (*origin, pack(nu, &a, &b))
                })
                .collect();
            list.extend(
                random_starts(seq, dims, e, config.n_random_starts, config.seed)
                    .into_iter()
                    .map(|theta| (StartOrigin::Random, theta)),
            );
            list.into_iter()
                .enumerate()
                .map(move |(id, (origin, theta))| (e, id, origin, theta))
        })
        .collect();

    let run = |(e, id, origin, theta): &(usize, usize, StartOrigin, Vec<f64>)| {
        let problem = Subproblem {
            seq,
            sources: &sources,
            target: *e,
            slots,
        };
        run_start(&problem, *id, *origin, theta, config)
    };
    let runs: Vec<StartRun> = if config.parallel {
        jobs.par_iter().map(run).collect()
    } else {
        jobs.iter().map(run).collect()
    };

    let mut kernel = ExpKernelParams::new(de, dx, vec![0.0; de], vec![0.0; slots * de], vec![0.0; slots * de])?;
    let mut chosen = Vec::with_capacity(de);
    for e in 0..de {
        // runs are ordered by (event, start id); strict improvement keeps the lowest id on ties
        let mut best: Option<&StartRun> = None;
        for r in runs.iter().filter(|r| r.trace.event == e) {
            if r.trace.final_value.is_finite() && best.is_none_or(|b| r.trace.final_value > b.trace.final_value) {
                best = Some(r);
            }
        }
        let Some(best) = best else {
            return Err(Error::Estimation {
                event: e,
                traces: runs.iter().filter(|r| r.trace.event == e).map(|r| r.trace.clone()).collect(),
            });
        };
        let (nu, a, b) = Subproblem::split(&best.theta);
        kernel.set_target_block(e, nu, a, b);
        chosen.push(best.trace.start_id);
    }

    let model = SdHawkesModel::new(dims.clone(), transitions.phi, kernel)?;
    let breakdown = likelihood::log_likelihood(&model, seq)?;
    Ok(EstimateResult {
        log_likelihood: breakdown.total,
        breakdown,
        model,
        traces: runs.into_iter().map(|r| r.trace).collect(),
        chosen_start: chosen,
        unobserved_transition_rows: transitions.unobserved_rows,
    })
}

/// Fits the single-state (ordinary Hawkes) model to `seq` with states erased.
pub fn fit_ordinary(seq: &MarkedSequence, dims: &Dimensions, config: &FitConfig) -> Result<EstimateResult> {
    seq.validate(dims)?;
    let stateless = dims.stateless();
    let erased = seq.erase_states();
    let mut cfg = config.clone();
    cfg.ordinary_warm_start = false;
    cfg.warm_starts = config
        .warm_starts
        .iter()
        .filter(|w| w.n_states() == 1)
        .cloned()
        .collect();
    if cfg.warm_starts.is_empty() && cfg.n_random_starts == 0 {
        cfg.n_random_starts = 1;
    }
    fit(&erased, &stateless, &cfg)
}

/// Fits the ordinary Hawkes process of dimension `d_e * d_x` on the lifted
/// sequence, i.e. an intensity `nu_{ex} + sum k_{e'x' -> ex}` per composite type.
pub fn fit_lifted(seq: &MarkedSequence, dims: &Dimensions, config: &FitConfig) -> Result<EstimateResult> {
    let lifted = seq.lift(dims)?;
    let mut cfg = config.clone();
    cfg.ordinary_warm_start = false;
    cfg.warm_starts.retain(|w| w.n_events() == dims.n_slots() && w.n_states() == 1);
    if cfg.warm_starts.is_empty() && cfg.n_random_starts == 0 {
        cfg.n_random_starts = 1;
    }
    fit(&lifted, &dims.lifted(), &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TransitionDistribution;
    use crate::simulate::{simulate, SimulationConfig};

    #[test]
    fn bounds_must_be_positive() {
        let cfg = FitConfig {
            bounds: ParameterBounds {
                nu_min: 0.0,
                ..ParameterBounds::default()
            },
            ..FitConfig::default()
        };
        assert!(cfg.check().is_err());
    }

    #[test]
    fn fit_dominates_the_poisson_maximum() {
        let m = SdHawkesModel::ordinary(1, vec![2.0], vec![0.0], vec![1.0]).unwrap();
        let seq = simulate(&m, &SimulationConfig::horizon(500.0, 4)).unwrap();
        let fit = fit(&seq, &m.dims, &FitConfig::default()).unwrap();
        // the nested Poisson model has MLE n / T and log-likelihood n ln(n/T) - n
        let n = seq.len() as f64;
        let poisson = n * (n / 500.0).ln() - n;
        assert!(fit.breakdown.point_process_term() >= poisson - 1e-6, "{} < {poisson}", fit.log_likelihood);
    }

    #[test]
    fn random_starts_are_reproducible_and_in_range() {
        let dims = Dimensions::numbered(2, 3).unwrap();
        let seq = MarkedSequence::new(vec![0.5, 1.0], vec![0, 1], vec![0, 2], 0, 0.0, 10.0).unwrap();
        let a = random_starts(&seq, &dims, 1, 4, 9);
        assert_eq!(a, random_starts(&seq, &dims, 1, 4, 9));
        for theta in &a {
            let (nu, alpha, beta) = Subproblem::split(theta);
            assert!((0.01..=1.0).contains(&nu));
            let norm: f64 = alpha.iter().zip(beta).map(|(a, b)| a / b).sum();
            assert!(norm <= 1.0 + 1e-12);
            assert!(beta.iter().all(|b| (0.1..=1e5).contains(b)));
        }
    }

    #[test]
    fn ordinary_fit_equals_fit_on_erased_states() {
        let dims = Dimensions::numbered(2, 2).unwrap();
        let m = SdHawkesModel::new(
            dims.clone(),
            TransitionDistribution::uniform(2, 2),
            ExpKernelParams::new(2, 2, vec![0.5, 0.5], vec![0.5; 8], vec![4.0; 8]).unwrap(),
        )
        .unwrap();
        let seq = simulate(&m, &SimulationConfig::horizon(300.0, 8)).unwrap();
        let cfg = FitConfig {
            n_random_starts: 2,
            seed: 3,
            ..FitConfig::default()
        };
        let a = fit_ordinary(&seq, &dims, &cfg).unwrap();
        let b = fit(&seq.erase_states(), &dims.stateless(), &cfg).unwrap();
        assert_eq!(a.model.kernel, b.model.kernel);
        assert_eq!(a.log_likelihood, b.log_likelihood);
    }

    #[test]
    fn objective_never_decreases_along_accepted_iterates() {
        let dims = Dimensions::numbered(1, 2).unwrap();
        let m = SdHawkesModel::new(
            dims.clone(),
            TransitionDistribution::uniform(1, 2),
            ExpKernelParams::new(1, 2, vec![1.0], vec![0.0, 1.0], vec![4.0, 4.0]).unwrap(),
        )
        .unwrap();
        let seq = simulate(&m, &SimulationConfig::horizon(400.0, 2)).unwrap();
        let cfg = FitConfig {
            n_random_starts: 2,
            ..FitConfig::default()
        };
        let res = fit(&seq, &dims, &cfg).unwrap();
        for t in &res.traces {
            assert!(t.final_value >= t.initial_value - 1e-9 * t.initial_value.abs());
        }
    }
}
