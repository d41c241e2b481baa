//! Exact simulation by Ogata thinning.
//!
//! Exponential kernels are non-increasing between events, so the total
//! intensity right after the last accepted event dominates the intensity
//! until the next one. A candidate `T + U` with `U ~ Exp(R(T))` is accepted
//! with probability `R(T + U) / R(T)`. The event type is then drawn
//! proportionally to `lambda_e(T_n)` and the new state from
//! `phi[E_n][X_{n-1}]`.
//!
//! Randomness comes from ChaCha8 (`rand_chacha` 0.9). Replication `r` of a
//! seeded experiment uses stream `r` of the generator seeded with `seed`, so
//! results do not depend on scheduling.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::intensity::IntensityState;
use crate::model::{MarkedSequence, SdHawkesModel};

pub const DEFAULT_MAX_EVENTS: usize = 10_000_000;

/// When a simulation stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Simulate on `(t0, horizon]`.
    Horizon(f64),
    /// Simulate exactly this many events; the window ends at the last one.
    Events(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub initial_state: usize,
    pub t0: f64,
    pub stop: StopRule,
    pub seed: u64,
    pub max_events: usize,
}

impl SimulationConfig {
    pub fn horizon(horizon: f64, seed: u64) -> Self {
        Self {
            initial_state: 0,
            t0: 0.0,
            stop: StopRule::Horizon(horizon),
            seed,
            max_events: DEFAULT_MAX_EVENTS,
        }
    }

    pub fn events(n: usize, seed: u64) -> Self {
        Self {
            stop: StopRule::Events(n),
            ..Self::horizon(f64::INFINITY, seed)
        }
    }

    pub fn with_initial_state(mut self, state: usize) -> Self {
        self.initial_state = state;
        self
    }

    fn check(&self, model: &SdHawkesModel) -> Result<()> {
        if self.initial_state >= model.n_states() {
            return Err(Error::invalid(format!("initial state {} out of range", self.initial_state)));
        }
        if self.max_events == 0 {
            return Err(Error::invalid("max_events must be at least 1"));
        }
        match self.stop {
            StopRule::Horizon(h) if !(h > self.t0 && h.is_finite()) => Err(Error::invalid(format!(
                "horizon {h} must be finite and after the start time {}",
                self.t0
            ))),
            StopRule::Events(0) => Err(Error::invalid("event target must be at least 1")),
            StopRule::Events(n) if n > self.max_events => Err(Error::Explosion {
                count: n,
                cap: self.max_events,
            }),
            _ => Ok(()),
        }
    }
}

/// Generator for stream `stream` of `seed`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A path under construction: the rolling intensity state and the accepted events.
#[derive(Debug, Clone)]
pub struct RunningPath {
    pub state: IntensityState,
    pub times: Vec<f64>,
    pub events: Vec<usize>,
    pub states: Vec<usize>,
}

impl RunningPath {
    pub fn new(model: &SdHawkesModel, t0: f64, initial_state: usize) -> Self {
        Self {
            state: IntensityState::new(model, t0, initial_state),
            times: Vec::new(),
            events: Vec::new(),
            states: Vec::new(),
        }
    }

    /// Continues from a history prefix; the path's compensator origin is `seq.t0`.
    pub fn from_history(model: &SdHawkesModel, seq: &MarkedSequence) -> Result<Self> {
        let state = IntensityState::from_prefix_inclusive(model, seq, seq.t0)?;
        Ok(Self {
            state,
            times: seq.times.clone(),
            events: seq.events.clone(),
            states: seq.states.clone(),
        })
    }
}

fn exp_draw<R: RngCore + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

fn draw_index<R: RngCore + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    // rounding at the top end: last index with positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

/// One iteration of the thinning loop. Returns the next `(T_n, E_n, X_n)`
/// or `None` if the next event would fall after `horizon`. The event is
/// applied to `path`.
pub fn simulate_next<R: RngCore + ?Sized>(
    model: &SdHawkesModel,
    path: &mut RunningPath,
    rng: &mut R,
    horizon: f64,
) -> Result<Option<(f64, usize, usize)>> {
    let mut dominating = path.state.total_intensity(model);
    loop {
        let step = exp_draw(rng, dominating);
        if step == 0.0 {
            continue;
        }
        let candidate = path.state.current_time() + step;
        if candidate > horizon {
            path.state.advance_to(model, horizon)?;
            return Ok(None);
        }
        path.state.advance_to(model, candidate)?;
        let rate = path.state.total_intensity(model);
        let u: f64 = rng.random();
        if u * dominating <= rate {
            break;
        }
        dominating = rate;
    }
    let lambda = path.state.intensity(model);
    let event = draw_index(rng, &lambda);
    let previous = path.state.current_state();
    let state = draw_index(rng, model.phi.row(event, previous));
    let t = path.state.current_time();
    path.state.on_event(model, event, state);
    path.times.push(t);
    path.events.push(event);
    path.states.push(state);
    Ok(Some((t, event, state)))
}

/// Simulates a path with a generator seeded from `config.seed`.
pub fn simulate(model: &SdHawkesModel, config: &SimulationConfig) -> Result<MarkedSequence> {
    let mut rng = rng_for(config.seed, 0);
    simulate_with_rng(model, config, &mut rng)
}

pub fn simulate_with_rng<R: RngCore + ?Sized>(
    model: &SdHawkesModel,
    config: &SimulationConfig,
    rng: &mut R,
) -> Result<MarkedSequence> {
    let report = model.validate();
    if !report.is_empty() {
        return Err(Error::InvalidModel(report));
    }
    config.check(model)?;
    let mut path = RunningPath::new(model, config.t0, config.initial_state);
    let (horizon, target) = match config.stop {
        StopRule::Horizon(h) => (h, usize::MAX),
        StopRule::Events(n) => (f64::INFINITY, n),
    };
    while path.times.len() < target {
        match simulate_next(model, &mut path, rng, horizon)? {
            Some(_) => {
                if path.times.len() > config.max_events {
                    return Err(Error::Explosion {
                        count: path.times.len(),
                        cap: config.max_events,
                    });
                }
            }
            None => break,
        }
    }
    let t_end = match config.stop {
        StopRule::Horizon(h) => h,
        StopRule::Events(_) => *path.times.last().expect("at least one event was simulated"),
    };
    MarkedSequence::new(path.times, path.events, path.states, config.initial_state, config.t0, t_end)
}
