//! Log-likelihood of a state-dependent Hawkes process with exponential kernels.
//!
//! The log-likelihood splits into a transition term, which depends on `phi`
//! only, and the point-process part `l_plus - l_minus`, which depends on
//! `(nu, alpha, beta)` only. The point-process part further splits into one
//! independent term per target event type `e`, involving `nu_e` and the
//! kernel components `(., ., e)`; [`target_objective`] evaluates one such term
//! with its gradient in `O(N d_e d_x)` time.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Dimensions, MarkedSequence, SdHawkesModel, TransitionDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LikelihoodBreakdown {
    /// `sum ln phi_{e_n}(x_{n-1}, x_n)` over in-window events.
    pub transition_term: f64,
    /// `sum ln lambda_{e_n}(t_n)` over in-window events.
    pub l_plus: f64,
    /// `int_{t0}^{T} sum_e lambda_e(t) dt`.
    pub l_minus: f64,
    pub total: f64,
    /// Set when an observed transition has probability zero (`total` is `-inf`).
    pub impossible_transition: bool,
}

impl LikelihoodBreakdown {
    pub fn point_process_term(&self) -> f64 {
        self.l_plus - self.l_minus
    }
}

/// Value and gradient of the target-`e` term of `l_plus - l_minus`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetObjective {
    pub l_plus: f64,
    pub l_minus: f64,
    pub d_nu: f64,
    /// Indexed by source slot `e' * d_x + x'`.
    pub d_alpha: Vec<f64>,
    pub d_beta: Vec<f64>,
}

impl TargetObjective {
    pub fn value(&self) -> f64 {
        self.l_plus - self.l_minus
    }
}

/// Evaluates `sum_{n: e_n = e} ln lambda_e(t_n) - int_{t0}^{T} lambda_e` and,
/// if `with_gradient`, its partial derivatives, for target `e` with
/// parameters `nu`, `alpha[k]`, `beta[k]` (`k` the source slot).
///
/// `sources[i]` is the slot of event `i`. History events (`t_i <= t0`) only
/// excite. Returns a domain error if the intensity is not positive at an
/// event of type `e`.
pub fn target_objective(
    seq: &MarkedSequence,
    sources: &[usize],
    target: usize,
    nu: f64,
    alpha: &[f64],
    beta: &[f64],
    with_gradient: bool,
) -> Result<TargetObjective> {
    let slots = alpha.len();
    let (t0, t_end) = (seq.t0, seq.t_end);
    let mut s = vec![0.0; slots];
    let mut s1 = vec![0.0; slots];
    let mut out = TargetObjective {
        l_plus: 0.0,
        l_minus: nu * (t_end - t0),
        d_nu: 0.0,
        d_alpha: vec![0.0; if with_gradient { slots } else { 0 }],
        d_beta: vec![0.0; if with_gradient { slots } else { 0 }],
    };
    let mut last = f64::NEG_INFINITY;

    for (i, (&t, &e)) in seq.times.iter().zip(&seq.events).enumerate() {
        if last.is_finite() {
            let dt = t - last;
            for k in 0..slots {
                if s[k] == 0.0 {
                    continue;
                }
                let decay = (-beta[k] * dt).exp();
                if with_gradient {
                    s1[k] = decay * (s1[k] + dt * s[k]);
                }
                s[k] *= decay;
            }
        }
        last = t;

        if e == target && t > t0 {
            let mut lambda = nu;
            for k in 0..slots {
                lambda += alpha[k] * s[k];
            }
            if !(lambda > 0.0) {
                return Err(Error::Domain(format!("intensity {lambda} at event {i} (t = {t}) is not positive")));
            }
            out.l_plus += lambda.ln();
            if with_gradient {
                let inv = 1.0 / lambda;
                out.d_nu += inv;
                for k in 0..slots {
                    out.d_alpha[k] += s[k] * inv;
                    out.d_beta[k] -= alpha[k] * s1[k] * inv;
                }
            }
        }

        // compensator contribution of event i
        let k = sources[i];
        let (a, b) = (alpha[k], beta[k]);
        let tail = (-b * (t_end - t)).exp();
        if t <= t0 {
            let head = (-b * (t0 - t)).exp();
            out.l_minus += a / b * (head - tail);
            if with_gradient {
                out.d_alpha[k] -= (head - tail) / b;
                let d = a / b * ((t_end - t) * tail - (t0 - t) * head) - a / (b * b) * (head - tail);
                out.d_beta[k] -= d;
            }
        } else {
            out.l_minus += a / b * (1.0 - tail);
            if with_gradient {
                out.d_alpha[k] -= (1.0 - tail) / b;
                let d = a / b * (t_end - t) * tail - a / (b * b) * (1.0 - tail);
                out.d_beta[k] -= d;
            }
        }

        s[k] += 1.0;
    }
    if with_gradient {
        out.d_nu -= t_end - t0;
    }
    Ok(out)
}

pub(crate) fn source_slots(seq: &MarkedSequence, n_states: usize) -> Vec<usize> {
    seq.events.iter().zip(&seq.states).map(|(&e, &x)| e * n_states + x).collect()
}

/// Transition term `sum ln phi` and whether an observed transition is impossible.
pub fn transition_term(phi: &TransitionDistribution, seq: &MarkedSequence) -> (f64, bool) {
    let mut prev = seq.initial_state;
    let mut total = 0.0;
    let mut impossible = false;
    for i in seq.history_len()..seq.len() {
        let p = phi.prob(seq.events[i], prev, seq.states[i]);
        if p <= 0.0 {
            impossible = true;
        }
        total += p.ln();
        prev = seq.states[i];
    }
    if impossible {
        total = f64::NEG_INFINITY;
    }
    (total, impossible)
}

/// Exact log-likelihood via the exponential recursions.
pub fn log_likelihood(model: &SdHawkesModel, seq: &MarkedSequence) -> Result<LikelihoodBreakdown> {
    seq.validate(&model.dims)?;
    let sources = source_slots(seq, model.n_states());
    let mut l_plus = 0.0;
    let mut l_minus = 0.0;
    for e in 0..model.n_events() {
        let (nu, a, b) = model.kernel.target_block(e);
        let obj = target_objective(seq, &sources, e, nu, &a, &b, false)?;
        l_plus += obj.l_plus;
        l_minus += obj.l_minus;
    }
    let (transition, impossible) = transition_term(&model.phi, seq);
    Ok(LikelihoodBreakdown {
        transition_term: transition,
        l_plus,
        l_minus,
        total: transition + l_plus - l_minus,
        impossible_transition: impossible,
    })
}

/// Gradient of `l_plus - l_minus`; the transition term does not depend on these parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gradient {
    pub nu: Vec<f64>,
    /// Flat `[e'][x'][e]`, same layout as the model.
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

pub fn gradient(model: &SdHawkesModel, seq: &MarkedSequence) -> Result<Gradient> {
    seq.validate(&model.dims)?;
    let de = model.n_events();
    let sources = source_slots(seq, model.n_states());
    let mut g = Gradient {
        nu: vec![0.0; de],
        alpha: vec![0.0; model.kernel.alpha.len()],
        beta: vec![0.0; model.kernel.beta.len()],
    };
    for e in 0..de {
        let (nu, a, b) = model.kernel.target_block(e);
        let obj = target_objective(seq, &sources, e, nu, &a, &b, true)?;
        g.nu[e] = obj.d_nu;
        for k in 0..a.len() {
            g.alpha[k * de + e] = obj.d_alpha[k];
            g.beta[k * de + e] = obj.d_beta[k];
        }
    }
    Ok(g)
}

/// Direct `O(N^2)` evaluation with no recursions. Used as an oracle.
pub fn log_likelihood_naive(model: &SdHawkesModel, seq: &MarkedSequence) -> Result<LikelihoodBreakdown> {
    seq.validate(&model.dims)?;
    let k = &model.kernel;
    let (t0, t_end) = (seq.t0, seq.t_end);
    let mut l_plus = 0.0;
    for n in seq.history_len()..seq.len() {
        let e = seq.events[n];
        let mut lambda = k.nu[e];
        for i in 0..n {
            let lag = seq.times[n] - seq.times[i];
            lambda += k.alpha(seq.events[i], seq.states[i], e) * (-k.beta(seq.events[i], seq.states[i], e) * lag).exp();
        }
        if !(lambda > 0.0) {
            return Err(Error::Domain(format!("intensity {lambda} at event {n} is not positive")));
        }
        l_plus += lambda.ln();
    }
    let mut l_minus: f64 = k.nu.iter().map(|nu| nu * (t_end - t0)).sum();
    for i in 0..seq.len() {
        let start = seq.times[i].max(t0);
        for e in 0..model.n_events() {
            let a = k.alpha(seq.events[i], seq.states[i], e);
            let b = k.beta(seq.events[i], seq.states[i], e);
            // int_{start}^{T} a exp(-b (u - t_i)) du
            l_minus += a / b * ((-b * (start - seq.times[i])).exp() - (-b * (t_end - seq.times[i])).exp());
        }
    }
    let (transition, impossible) = transition_term(&model.phi, seq);
    Ok(LikelihoodBreakdown {
        transition_term: transition,
        l_plus,
        l_minus,
        total: transition + l_plus - l_minus,
        impossible_transition: impossible,
    })
}

/// Empirical transition probabilities, with the rows that were never visited.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionEstimate {
    pub phi: TransitionDistribution,
    /// `(event, from_state)` rows with no observations, filled uniformly.
    pub unobserved_rows: Vec<(usize, usize)>,
}

/// Closed-form maximiser of the transition term: count ratios per row.
pub fn transition_mle(seq: &MarkedSequence, dims: &Dimensions) -> Result<TransitionEstimate> {
    seq.validate(dims)?;
    let (de, dx) = (dims.n_events(), dims.n_states());
    let mut counts = vec![0u64; de * dx * dx];
    let mut prev = seq.initial_state;
    for i in seq.history_len()..seq.len() {
        let (e, x) = (seq.events[i], seq.states[i]);
        counts[(e * dx + prev) * dx + x] += 1;
        prev = x;
    }
    let mut probs = vec![0.0; de * dx * dx];
    let mut unobserved = Vec::new();
    for e in 0..de {
        for x in 0..dx {
            let row = (e * dx + x) * dx;
            let total: u64 = counts[row..row + dx].iter().sum();
            if total == 0 {
                unobserved.push((e, x));
                probs[row..row + dx].fill(1.0 / dx as f64);
            } else {
                for j in 0..dx {
                    probs[row + j] = counts[row + j] as f64 / total as f64;
                }
            }
        }
    }
    Ok(TransitionEstimate {
        phi: TransitionDistribution::from_flat(de, dx, probs)?,
        unobserved_rows: unobserved,
    })
}
