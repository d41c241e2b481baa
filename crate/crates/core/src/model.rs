//! Domain types for state-dependent Hawkes processes with exponential kernels.
//!
//! A model couples `d_e` event types with a finite state space of `d_x`
//! states. The excitation from an event of type `e'` that left the system in
//! state `x'` onto events of type `e` is `alpha[e'][x'][e] * exp(-beta[e'][x'][e] * t)`,
//! and each event of type `e` moves the state according to the row-stochastic
//! matrix `phi[e]`.
//!
//! Kernel arrays are stored flat. The slot `k = e' * d_x + x'` is the
//! composite (lifted) index of the source pair, so `alpha[k * d_e + e]` is the
//! impact of source slot `k` on target type `e`.

use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

/// Tolerance on the row sums of transition matrices.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dimensions {
    event_labels: Vec<String>,
    state_labels: Vec<String>,
}

impl Dimensions {
    pub fn new(event_labels: Vec<String>, state_labels: Vec<String>) -> Result<Self> {
        if event_labels.is_empty() || state_labels.is_empty() {
            return Err(Error::invalid("at least one event type and one state are required"));
        }
        check_distinct("event", &event_labels)?;
        check_distinct("state", &state_labels)?;
        Ok(Self {
            event_labels,
            state_labels,
        })
    }

    /// Dimensions labelled `0..d_e` and `0..d_x`.
    pub fn numbered(n_events: usize, n_states: usize) -> Result<Self> {
        Self::new(
            (0..n_events).map(|i| i.to_string()).collect(),
            (0..n_states).map(|i| i.to_string()).collect(),
        )
    }

    pub fn n_events(&self) -> usize {
        self.event_labels.len()
    }

    pub fn n_states(&self) -> usize {
        self.state_labels.len()
    }

    /// Number of source slots `(e', x')`, i.e. the dimension of the lifted process.
    pub fn n_slots(&self) -> usize {
        self.n_events() * self.n_states()
    }

    pub fn event_labels(&self) -> &[String] {
        &self.event_labels
    }

    pub fn state_labels(&self) -> &[String] {
        &self.state_labels
    }

    pub fn event_index(&self, label: &str) -> Option<usize> {
        self.event_labels.iter().position(|l| l == label)
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.state_labels.iter().position(|l| l == label)
    }

    /// Event-major composite index `e * d_x + x`.
    pub fn composite(&self, event: usize, state: usize) -> Result<usize> {
        if event >= self.n_events() || state >= self.n_states() {
            return Err(Error::invalid(format!(
                "pair (event {event}, state {state}) out of range for {}x{}",
                self.n_events(),
                self.n_states()
            )));
        }
        Ok(event * self.n_states() + state)
    }

    pub fn split(&self, composite: usize) -> Result<(usize, usize)> {
        if composite >= self.n_slots() {
            return Err(Error::invalid(format!(
                "composite type {composite} out of range ({} slots)",
                self.n_slots()
            )));
        }
        Ok((composite / self.n_states(), composite % self.n_states()))
    }

    /// Dimensions of the lifted process: one event type per `(e, x)` pair and a
    /// single dummy state.
    pub fn lifted(&self) -> Self {
        let mut labels = Vec::with_capacity(self.n_slots());
        for e in &self.event_labels {
            for x in &self.state_labels {
                labels.push(format!("{e}|{x}"));
            }
        }
        Self {
            event_labels: labels,
            state_labels: vec!["*".to_string()],
        }
    }

    /// Same event types, single state.
    pub fn stateless(&self) -> Self {
        Self {
            event_labels: self.event_labels.clone(),
            state_labels: vec!["*".to_string()],
        }
    }
}

fn check_distinct(kind: &str, labels: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(Error::invalid(format!("duplicate {kind} label {l:?}")));
        }
    }
    Ok(())
}

/// Per-event-type transition matrices, `phi[e][x][x']`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDistribution {
    n_events: usize,
    n_states: usize,
    probs: Vec<f64>,
}

impl TransitionDistribution {
    /// Builds from a flat `[e][x][x']` array without validating the rows.
    pub fn from_flat(n_events: usize, n_states: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_events * n_states * n_states {
            return Err(Error::invalid(format!(
                "transition array has {} entries, expected {}",
                probs.len(),
                n_events * n_states * n_states
            )));
        }
        Ok(Self {
            n_events,
            n_states,
            probs,
        })
    }

    pub fn from_nested(phi: &[Vec<Vec<f64>>]) -> Result<Self> {
        let n_events = phi.len();
        let n_states = phi.first().map_or(0, |m| m.len());
        let mut probs = Vec::with_capacity(n_events * n_states * n_states);
        for (e, m) in phi.iter().enumerate() {
            if m.len() != n_states {
                return Err(Error::invalid(format!("phi[{e}] has {} rows, expected {n_states}", m.len())));
            }
            for (x, row) in m.iter().enumerate() {
                if row.len() != n_states {
                    return Err(Error::invalid(format!(
                        "phi[{e}][{x}] has {} columns, expected {n_states}",
                        row.len()
                    )));
                }
                probs.extend_from_slice(row);
            }
        }
        Self::from_flat(n_events, n_states, probs)
    }

    pub fn uniform(n_events: usize, n_states: usize) -> Self {
        let p = 1.0 / n_states as f64;
        Self {
            n_events,
            n_states,
            probs: vec![p; n_events * n_states * n_states],
        }
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn prob(&self, event: usize, from: usize, to: usize) -> f64 {
        self.probs[(event * self.n_states + from) * self.n_states + to]
    }

    pub fn row(&self, event: usize, from: usize) -> &[f64] {
        let start = (event * self.n_states + from) * self.n_states;
        &self.probs[start..start + self.n_states]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.probs
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.n_events)
            .map(|e| (0..self.n_states).map(|x| self.row(e, x).to_vec()).collect())
            .collect()
    }
}

/// Base rates and exponential kernel coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpKernelParams {
    n_events: usize,
    n_states: usize,
    pub nu: Vec<f64>,
    /// Flat `[e'][x'][e]`.
    pub alpha: Vec<f64>,
    /// Flat `[e'][x'][e]`.
    pub beta: Vec<f64>,
}

impl ExpKernelParams {
    pub fn new(n_events: usize, n_states: usize, nu: Vec<f64>, alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        let k = n_events * n_states * n_events;
        if nu.len() != n_events || alpha.len() != k || beta.len() != k {
            return Err(Error::invalid(format!(
                "kernel arrays have lengths nu={}, alpha={}, beta={}; expected {n_events}, {k}, {k}",
                nu.len(),
                alpha.len(),
                beta.len()
            )));
        }
        Ok(Self {
            n_events,
            n_states,
            nu,
            alpha,
            beta,
        })
    }

    pub fn from_nested(nu: Vec<f64>, alpha: &[Vec<Vec<f64>>], beta: &[Vec<Vec<f64>>]) -> Result<Self> {
        let n_events = nu.len();
        let n_states = alpha.first().map_or(0, |m| m.len());
        let flatten = |name: &str, a: &[Vec<Vec<f64>>]| -> Result<Vec<f64>> {
            if a.len() != n_events {
                return Err(Error::invalid(format!("{name} has {} source events, expected {n_events}", a.len())));
            }
            let mut out = Vec::with_capacity(n_events * n_states * n_events);
            for (ep, m) in a.iter().enumerate() {
                if m.len() != n_states {
                    return Err(Error::invalid(format!("{name}[{ep}] has {} states, expected {n_states}", m.len())));
                }
                for (xp, row) in m.iter().enumerate() {
                    if row.len() != n_events {
                        return Err(Error::invalid(format!(
                            "{name}[{ep}][{xp}] has {} targets, expected {n_events}",
                            row.len()
                        )));
                    }
                    out.extend_from_slice(row);
                }
            }
            Ok(out)
        };
        let a = flatten("alpha", alpha)?;
        let b = flatten("beta", beta)?;
        Self::new(n_events, n_states, nu, a, b)
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn index(&self, source_event: usize, source_state: usize, target: usize) -> usize {
        (source_event * self.n_states + source_state) * self.n_events + target
    }

    #[inline]
    pub fn alpha(&self, source_event: usize, source_state: usize, target: usize) -> f64 {
        self.alpha[self.index(source_event, source_state, target)]
    }

    #[inline]
    pub fn beta(&self, source_event: usize, source_state: usize, target: usize) -> f64 {
        self.beta[self.index(source_event, source_state, target)]
    }

    /// Full L¹ norm `alpha / beta` of one kernel component.
    pub fn norm(&self, source_event: usize, source_state: usize, target: usize) -> f64 {
        let i = self.index(source_event, source_state, target);
        self.alpha[i] / self.beta[i]
    }

    pub fn nested(&self, flat: &[f64]) -> Vec<Vec<Vec<f64>>> {
        (0..self.n_events)
            .map(|ep| {
                (0..self.n_states)
                    .map(|xp| {
                        let start = self.index(ep, xp, 0);
                        flat[start..start + self.n_events].to_vec()
                    })
                    .collect()
            })
            .collect()
    }

    /// Parameters of target type `e`: `(nu_e, alpha[.][.][e], beta[.][.][e])`,
    /// the slices ordered by source slot.
    pub fn target_block(&self, target: usize) -> (f64, Vec<f64>, Vec<f64>) {
        let slots = self.n_events * self.n_states;
        let a = (0..slots).map(|k| self.alpha[k * self.n_events + target]).collect();
        let b = (0..slots).map(|k| self.beta[k * self.n_events + target]).collect();
        (self.nu[target], a, b)
    }

    pub fn set_target_block(&mut self, target: usize, nu: f64, alpha: &[f64], beta: &[f64]) {
        self.nu[target] = nu;
        for (k, (&a, &b)) in alpha.iter().zip(beta).enumerate() {
            self.alpha[k * self.n_events + target] = a;
            self.beta[k * self.n_events + target] = b;
        }
    }
}

/// One violated invariant of a model.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Shape(String),
    RowSum { event: usize, from: usize, sum: f64 },
    ProbabilityOutOfRange { event: usize, from: usize, to: usize, value: f64 },
    BaseRateNotPositive { event: usize, value: f64 },
    NegativeImpact { source_event: usize, source_state: usize, target: usize, value: f64 },
    DecayNotPositive { source_event: usize, source_state: usize, target: usize, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape(s) => write!(f, "shape mismatch: {s}"),
            Violation::RowSum { event, from, sum } => {
                write!(f, "row sum ≠ 1: phi[{event}][{from}] sums to {sum}")
            }
            Violation::ProbabilityOutOfRange { event, from, to, value } => {
                write!(f, "probability outside [0, 1]: phi[{event}][{from}][{to}] = {value}")
            }
            Violation::BaseRateNotPositive { event, value } => {
                write!(f, "base rate not strictly positive: nu[{event}] = {value}")
            }
            Violation::NegativeImpact {
                source_event,
                source_state,
                target,
                value,
            } => write!(f, "negative impact coefficient alpha[{source_event}][{source_state}][{target}] = {value}"),
            Violation::DecayNotPositive {
                source_event,
                source_state,
                target,
                value,
            } => write!(f, "decay not strictly positive: beta[{source_event}][{source_state}][{target}] = {value}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdHawkesModel {
    pub dims: Dimensions,
    pub phi: TransitionDistribution,
    pub kernel: ExpKernelParams,
}

impl SdHawkesModel {
    /// Builds a model and rejects it if any invariant fails.
    pub fn new(dims: Dimensions, phi: TransitionDistribution, kernel: ExpKernelParams) -> Result<Self> {
        let model = Self { dims, phi, kernel };
        let report = model.validate();
        if report.is_empty() {
            Ok(model)
        } else {
            Err(Error::InvalidModel(report))
        }
    }

    pub fn n_events(&self) -> usize {
        self.dims.n_events()
    }

    pub fn n_states(&self) -> usize {
        self.dims.n_states()
    }

    /// Lists every violated invariant; an empty report means the model is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut report = Vec::new();
        let (de, dx) = (self.dims.n_events(), self.dims.n_states());
        if self.phi.n_events() != de || self.phi.n_states() != dx {
            report.push(Violation::Shape(format!(
                "phi is {}x{}x{}, dims are {de} events and {dx} states",
                self.phi.n_events(),
                self.phi.n_states(),
                self.phi.n_states()
            )));
        }
        if self.kernel.n_events() != de || self.kernel.n_states() != dx {
            report.push(Violation::Shape(format!(
                "kernel is for {} events and {} states, dims are {de} and {dx}",
                self.kernel.n_events(),
                self.kernel.n_states()
            )));
        }
        if !report.is_empty() {
            return report;
        }

        for e in 0..de {
            for x in 0..dx {
                let row = self.phi.row(e, x);
                for (to, &p) in row.iter().enumerate() {
                    if !(0.0..=1.0).contains(&p) {
                        report.push(Violation::ProbabilityOutOfRange {
                            event: e,
                            from: x,
                            to,
                            value: p,
                        });
                    }
                }
                let sum: f64 = row.iter().sum();
                if !((sum - 1.0).abs() <= ROW_SUM_TOLERANCE) {
                    report.push(Violation::RowSum { event: e, from: x, sum });
                }
            }
        }
        for (e, &nu) in self.kernel.nu.iter().enumerate() {
            if !(nu > 0.0 && nu.is_finite()) {
                report.push(Violation::BaseRateNotPositive { event: e, value: nu });
            }
        }
        for ep in 0..de {
            for xp in 0..dx {
                for e in 0..de {
                    let a = self.kernel.alpha(ep, xp, e);
                    let b = self.kernel.beta(ep, xp, e);
                    if !(a >= 0.0 && a.is_finite()) {
                        report.push(Violation::NegativeImpact {
                            source_event: ep,
                            source_state: xp,
                            target: e,
                            value: a,
                        });
                    }
                    if !(b > 0.0 && b.is_finite()) {
                        report.push(Violation::DecayNotPositive {
                            source_event: ep,
                            source_state: xp,
                            target: e,
                            value: b,
                        });
                    }
                }
            }
        }
        report
    }

    /// Checks the two sufficient conditions for a unique non-explosive solution.
    pub fn check_stability(&self) -> StabilityReport {
        let (de, dx) = (self.n_events(), self.n_states());
        let mut conditions = Vec::with_capacity(de * dx);
        for e in 0..de {
            let total_norm: f64 = (0..de)
                .flat_map(|ep| (0..dx).map(move |xp| (ep, xp)))
                .map(|(ep, xp)| self.kernel.norm(ep, xp, e))
                .sum();
            for x in 0..dx {
                let max_prob = (0..dx).map(|xp| self.phi.prob(e, xp, x)).fold(0.0, f64::max);
                let bound = if max_prob > 0.0 { 1.0 / max_prob } else { f64::INFINITY };
                conditions.push(IntegralCondition {
                    event: e,
                    state: x,
                    total_norm,
                    bound,
                    margin: bound - total_norm,
                    holds: total_norm < bound,
                });
            }
        }
        StabilityReport {
            // exponential kernels are bounded by alpha
            bounded_kernels: true,
            integral_condition: conditions,
        }
    }

    /// Model for the same process observed without states (`d_x = 1`).
    pub fn ordinary(n_events: usize, nu: Vec<f64>, alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        let dims = Dimensions::numbered(n_events, 1)?;
        let phi = TransitionDistribution::from_flat(n_events, 1, vec![1.0; n_events])?;
        let kernel = ExpKernelParams::new(n_events, 1, nu, alpha, beta)?;
        Self::new(dims, phi, kernel)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegralCondition {
    pub event: usize,
    pub state: usize,
    /// `sum over (e', x') of alpha / beta` for target `event`.
    pub total_norm: f64,
    /// `1 / max_{x'} phi_e(x', x)`.
    pub bound: f64,
    pub margin: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub bounded_kernels: bool,
    pub integral_condition: Vec<IntegralCondition>,
}

impl StabilityReport {
    pub fn integral_condition_holds(&self) -> bool {
        self.integral_condition.iter().all(|c| c.holds)
    }

    pub fn guarantees_existence(&self) -> bool {
        self.bounded_kernels || self.integral_condition_holds()
    }
}

/// A realisation `{(t_n, e_n, x_n)}` on the window `(t0, t_end]`.
///
/// Events with `t_n <= t0` form an optional history prefix: they excite the
/// intensity inside the window but contribute no likelihood terms. The state
/// preceding the first in-window event is `initial_state`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedSequence {
    pub times: Vec<f64>,
    pub events: Vec<usize>,
    pub states: Vec<usize>,
    pub initial_state: usize,
    pub t0: f64,
    pub t_end: f64,
}

impl MarkedSequence {
    pub fn new(
        times: Vec<f64>,
        events: Vec<usize>,
        states: Vec<usize>,
        initial_state: usize,
        t0: f64,
        t_end: f64,
    ) -> Result<Self> {
        let seq = Self {
            times,
            events,
            states,
            initial_state,
            t0,
            t_end,
        };
        seq.check_structure()?;
        Ok(seq)
    }

    pub fn empty(initial_state: usize, t0: f64, t_end: f64) -> Result<Self> {
        Self::new(Vec::new(), Vec::new(), Vec::new(), initial_state, t0, t_end)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of history-prefix events (times `<= t0`).
    pub fn history_len(&self) -> usize {
        self.times.partition_point(|&t| t <= self.t0)
    }

    pub fn in_window_len(&self) -> usize {
        self.len() - self.history_len()
    }

    fn check_structure(&self) -> Result<()> {
        if self.events.len() != self.times.len() || self.states.len() != self.times.len() {
            return Err(Error::invalid(format!(
                "sequence columns differ in length: {} times, {} events, {} states",
                self.times.len(),
                self.events.len(),
                self.states.len()
            )));
        }
        if !(self.t0.is_finite() && self.t_end.is_finite() && self.t0 < self.t_end) {
            return Err(Error::invalid(format!("window ({}, {}] is empty or not finite", self.t0, self.t_end)));
        }
        for (i, &t) in self.times.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::invalid(format!("time {i} is not finite")));
            }
            if i > 0 && t <= self.times[i - 1] {
                return Err(Error::invalid(format!(
                    "times not strictly increasing at index {i}: {} then {t}",
                    self.times[i - 1]
                )));
            }
        }
        if let Some(&last) = self.times.last() {
            if last > self.t_end {
                return Err(Error::invalid(format!("event at {last} lies after window end {}", self.t_end)));
            }
        }
        Ok(())
    }

    /// Full validation against model dimensions.
    pub fn validate(&self, dims: &Dimensions) -> Result<()> {
        self.check_structure()?;
        if self.initial_state >= dims.n_states() {
            return Err(Error::invalid(format!(
                "initial state {} out of range ({} states)",
                self.initial_state,
                dims.n_states()
            )));
        }
        for (i, (&e, &x)) in self.events.iter().zip(&self.states).enumerate() {
            if e >= dims.n_events() {
                return Err(Error::invalid(format!("event type {e} at index {i} out of range")));
            }
            if x >= dims.n_states() {
                return Err(Error::invalid(format!("state {x} at index {i} out of range")));
            }
        }
        Ok(())
    }

    /// Maps `(e, x)` marks to composite types `e * d_x + x` with a single dummy state.
    pub fn lift(&self, dims: &Dimensions) -> Result<Self> {
        self.validate(dims)?;
        let events = self
            .events
            .iter()
            .zip(&self.states)
            .map(|(&e, &x)| dims.composite(e, x))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            times: self.times.clone(),
            states: vec![0; events.len()],
            events,
            initial_state: 0,
            t0: self.t0,
            t_end: self.t_end,
        })
    }

    /// Inverse of [`lift`](Self::lift). The lifted form does not carry the
    /// initial state, so it must be supplied.
    pub fn unlift(&self, dims: &Dimensions, initial_state: usize) -> Result<Self> {
        if initial_state >= dims.n_states() {
            return Err(Error::invalid(format!("initial state {initial_state} out of range")));
        }
        let mut events = Vec::with_capacity(self.len());
        let mut states = Vec::with_capacity(self.len());
        for &c in &self.events {
            let (e, x) = dims.split(c)?;
            events.push(e);
            states.push(x);
        }
        Ok(Self {
            times: self.times.clone(),
            events,
            states,
            initial_state,
            t0: self.t0,
            t_end: self.t_end,
        })
    }

    /// Same events with every state set to 0.
    pub fn erase_states(&self) -> Self {
        Self {
            times: self.times.clone(),
            events: self.events.clone(),
            states: vec![0; self.len()],
            initial_state: 0,
            t0: self.t0,
            t_end: self.t_end,
        }
    }

    /// Count of in-window events per type.
    pub fn event_counts(&self, n_events: usize) -> Vec<usize> {
        let mut counts = vec![0; n_events];
        for &e in &self.events[self.history_len()..] {
            counts[e] += 1;
        }
        counts
    }
}
