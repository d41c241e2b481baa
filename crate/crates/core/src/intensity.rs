//! Rolling exponential sums for O(1) intensity and compensator updates.
//!
//! For every kernel component `(e', x', e)` the state keeps
//!
//! * `S  = sum_i exp(-beta (t - t_i))`
//! * `S1 = sum_i (t - t_i) exp(-beta (t - t_i))`
//! * `C  = sum_i (alpha / beta) exp(-beta (max(t0, t_i) - t_i))`
//!
//! over past events `t_i` of source slot `(e', x')`. Advancing by `dt`
//! multiplies `S` by `exp(-beta dt)` and sets `S1 <- exp(-beta dt) (S1 + dt S)`,
//! so history is never re-summed.
//!
//! An event applied with [`IntensityState::on_event`] counts at lag `0+`:
//! reading the intensity right after it gives the right limit `lambda(t+)`,
//! reading it before gives the predictable value `lambda(t)`.

use crate::error::{Error, Result};
use crate::model::{MarkedSequence, SdHawkesModel};

/// Decayed terms below this are flushed to zero.
pub const UNDERFLOW_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct IntensityState {
    current_time: f64,
    t0: f64,
    current_state: usize,
    s: Vec<f64>,
    s1: Vec<f64>,
    c: Vec<f64>,
}

impl IntensityState {
    /// Empty history at time `t0`, which is also the origin of the compensator.
    pub fn new(model: &SdHawkesModel, t0: f64, initial_state: usize) -> Self {
        let n = model.kernel.alpha.len();
        Self {
            current_time: t0,
            t0,
            current_state: initial_state,
            s: vec![0.0; n],
            s1: vec![0.0; n],
            c: vec![0.0; n],
        }
    }

    /// State at time `t` built from every event of `seq` strictly before `t`.
    ///
    /// The compensator origin is `seq.t0`; history events before it are
    /// replayed from the first one.
    pub fn from_prefix(model: &SdHawkesModel, seq: &MarkedSequence, t: f64) -> Result<Self> {
        let end = seq.times.partition_point(|&s| s < t);
        Self::replay(model, seq, end, t)
    }

    /// State at time `t` including events exactly at `t` (right limit).
    pub fn from_prefix_inclusive(model: &SdHawkesModel, seq: &MarkedSequence, t: f64) -> Result<Self> {
        let end = seq.times.partition_point(|&s| s <= t);
        Self::replay(model, seq, end, t)
    }

    fn replay(model: &SdHawkesModel, seq: &MarkedSequence, end: usize, t: f64) -> Result<Self> {
        let start = seq.times.first().map_or(seq.t0, |&first| first.min(seq.t0)).min(t);
        let mut state = Self::new(model, start, seq.initial_state);
        state.t0 = seq.t0;
        for i in 0..end {
            state.advance_to(model, seq.times[i])?;
            state.on_event(model, seq.events[i], seq.states[i]);
        }
        // the initial state applies at t0 regardless of the prefix's last mark
        if seq.times[..end].iter().all(|&s| s <= seq.t0) {
            state.current_state = seq.initial_state;
        }
        state.advance_to(model, t)?;
        Ok(state)
    }

    pub fn current_time(&self) -> f64 {
        self.current_time
    }

    pub fn current_state(&self) -> usize {
        self.current_state
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn s1(&self) -> &[f64] {
        &self.s1
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// Decays all sums by `dt >= 0`.
    pub fn advance(&mut self, model: &SdHawkesModel, dt: f64) -> Result<()> {
        if !(dt >= 0.0) {
            return Err(Error::invalid(format!("cannot advance by negative or NaN dt {dt}")));
        }
        if dt == 0.0 {
            return Ok(());
        }
        for (i, &beta) in model.kernel.beta.iter().enumerate() {
            let s = self.s[i];
            if s == 0.0 && self.s1[i] == 0.0 {
                continue;
            }
            let decay = (-beta * dt).exp();
            let mut s1 = decay * (self.s1[i] + dt * s);
            let mut s_new = decay * s;
            if s_new < UNDERFLOW_FLOOR {
                s_new = 0.0;
            }
            if s1 < UNDERFLOW_FLOOR {
                s1 = 0.0;
            }
            self.s[i] = s_new;
            self.s1[i] = s1;
        }
        self.current_time += dt;
        Ok(())
    }

    pub fn advance_to(&mut self, model: &SdHawkesModel, t: f64) -> Result<()> {
        let dt = t - self.current_time;
        self.advance(model, dt)?;
        // avoid drift from repeated additions
        self.current_time = t;
        Ok(())
    }

    /// Registers an event `(e, x)` at the current time.
    pub fn on_event(&mut self, model: &SdHawkesModel, event: usize, state: usize) {
        let de = model.n_events();
        let lag_to_origin = (self.t0 - self.current_time).max(0.0);
        let base = model.kernel.index(event, state, 0);
        for target in 0..de {
            let i = base + target;
            self.s[i] += 1.0;
            let a = model.kernel.alpha[i];
            let b = model.kernel.beta[i];
            self.c[i] += a / b * (-b * lag_to_origin).exp();
        }
        self.current_state = state;
    }

    /// Event intensities `lambda_e = nu_e + sum alpha S`.
    pub fn intensity(&self, model: &SdHawkesModel) -> Vec<f64> {
        let mut lambda = model.kernel.nu.clone();
        let de = model.n_events();
        for (i, (&a, &s)) in model.kernel.alpha.iter().zip(&self.s).enumerate() {
            lambda[i % de] += a * s;
        }
        lambda
    }

    pub fn total_intensity(&self, model: &SdHawkesModel) -> f64 {
        self.intensity(model).iter().sum()
    }

    /// Lifted intensities `phi_e(X, x) lambda_e`, row `e`, column `x`.
    pub fn lifted_intensity(&self, model: &SdHawkesModel) -> Vec<Vec<f64>> {
        lift_rates(model, self.current_state, &self.intensity(model))
    }

    /// Integrated intensities `int_{t0}^{t} lambda_e` at the current time.
    pub fn compensator(&self, model: &SdHawkesModel) -> Vec<f64> {
        let de = model.n_events();
        let elapsed = self.current_time - self.t0;
        let mut out: Vec<f64> = model.kernel.nu.iter().map(|&nu| nu * elapsed).collect();
        for i in 0..self.s.len() {
            let ratio = model.kernel.alpha[i] / model.kernel.beta[i];
            out[i % de] += self.c[i] - ratio * self.s[i];
        }
        out
    }
}

pub(crate) fn lift_rates(model: &SdHawkesModel, current_state: usize, lambda: &[f64]) -> Vec<Vec<f64>> {
    lambda
        .iter()
        .enumerate()
        .map(|(e, &l)| model.phi.row(e, current_state).iter().map(|&p| p * l).collect())
        .collect()
}

/// Predictable intensity `lambda(t)`: events at exactly `t` are excluded.
pub fn intensity_at(model: &SdHawkesModel, seq: &MarkedSequence, t: f64) -> Result<Vec<f64>> {
    Ok(IntensityState::from_prefix(model, seq, t)?.intensity(model))
}

/// Right limit `lambda(t+)`, including the jump of an event exactly at `t`.
/// This is the value that must dominate the intensity during thinning.
pub fn intensity_right_limit(model: &SdHawkesModel, seq: &MarkedSequence, t: f64) -> Result<Vec<f64>> {
    Ok(IntensityState::from_prefix_inclusive(model, seq, t)?.intensity(model))
}

/// Lifted intensity `phi_e(X(t-), x) lambda_e(t)` at `t`.
pub fn lifted_intensity_at(model: &SdHawkesModel, seq: &MarkedSequence, t: f64) -> Result<Vec<Vec<f64>>> {
    Ok(IntensityState::from_prefix(model, seq, t)?.lifted_intensity(model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dimensions, ExpKernelParams, TransitionDistribution};

    fn two_state_model() -> SdHawkesModel {
        let dims = Dimensions::numbered(1, 2).unwrap();
        let phi = TransitionDistribution::from_nested(&[vec![vec![0.5, 0.5], vec![0.5, 0.5]]]).unwrap();
        let kernel = ExpKernelParams::new(1, 2, vec![1.0], vec![0.0, 1.0], vec![4.0, 4.0]).unwrap();
        SdHawkesModel::new(dims, phi, kernel).unwrap()
    }

    #[test]
    fn no_history_gives_base_rates() {
        let dims = Dimensions::numbered(2, 1).unwrap();
        let m = SdHawkesModel::new(
            dims,
            TransitionDistribution::from_flat(2, 1, vec![1.0, 1.0]).unwrap(),
            ExpKernelParams::new(2, 1, vec![1.0, 2.0], vec![0.3; 4], vec![1.0; 4]).unwrap(),
        )
        .unwrap();
        let seq = MarkedSequence::empty(0, 0.0, 1.0).unwrap();
        assert_eq!(intensity_at(&m, &seq, 0.5).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn excitation_only_in_second_state() {
        let m = two_state_model();
        let in_state_2 = MarkedSequence::new(vec![1.0], vec![0], vec![1], 0, 0.0, 2.0).unwrap();
        let l = intensity_at(&m, &in_state_2, 1.5).unwrap()[0];
        assert!((l - (1.0 + (-2.0f64).exp())).abs() < 1e-15);
        assert!((l - 1.13534).abs() < 1e-5);

        let in_state_1 = MarkedSequence::new(vec![1.0], vec![0], vec![0], 0, 0.0, 2.0).unwrap();
        assert_eq!(intensity_at(&m, &in_state_1, 1.5).unwrap()[0], 1.0);
    }

    #[test]
    fn predictable_versus_right_limit() {
        let m = two_state_model();
        let seq = MarkedSequence::new(vec![1.0], vec![0], vec![1], 0, 0.0, 2.0).unwrap();
        assert_eq!(intensity_at(&m, &seq, 1.0).unwrap()[0], 1.0);
        assert_eq!(intensity_right_limit(&m, &seq, 1.0).unwrap()[0], 2.0);
    }

    #[test]
    fn lifted_rows_use_transition_row() {
        let dims = Dimensions::numbered(1, 2).unwrap();
        let m = SdHawkesModel::new(
            dims,
            TransitionDistribution::from_nested(&[vec![vec![0.3, 0.7], vec![1.0, 0.0]]]).unwrap(),
            ExpKernelParams::new(1, 2, vec![2.0], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
        )
        .unwrap();
        let seq = MarkedSequence::empty(0, 0.0, 1.0).unwrap();
        let lifted = lifted_intensity_at(&m, &seq, 0.5).unwrap();
        assert!((lifted[0][0] - 0.6).abs() < 1e-15 && (lifted[0][1] - 1.4).abs() < 1e-15);

        let seq = MarkedSequence::empty(1, 0.0, 1.0).unwrap();
        assert_eq!(lifted_intensity_at(&m, &seq, 0.5).unwrap(), vec![vec![2.0, 0.0]]);
    }

    #[test]
    fn event_adds_one_to_every_target() {
        let dims = Dimensions::numbered(2, 2).unwrap();
        let m = SdHawkesModel::new(
            dims,
            TransitionDistribution::uniform(2, 2),
            ExpKernelParams::new(2, 2, vec![1.0, 1.0], vec![0.1; 8], vec![3.0; 8]).unwrap(),
        )
        .unwrap();
        let mut st = IntensityState::new(&m, 0.0, 0);
        st.on_event(&m, 0, 0);
        for k in 0..2 {
            assert_eq!(st.s()[m.kernel.index(0, 0, k)], 1.0);
        }
        assert_eq!(st.s().iter().sum::<f64>(), 2.0);
    }

    #[test]
    fn decay_half_life_and_semigroup() {
        let m = two_state_model();
        let mut st = IntensityState::new(&m, 0.0, 0);
        st.on_event(&m, 0, 0);
        st.advance(&m, std::f64::consts::LN_2 / 4.0).unwrap();
        assert!((st.s()[0] - 0.5).abs() < 1e-15);

        let mut a = IntensityState::new(&m, 0.0, 0);
        a.on_event(&m, 0, 1);
        let mut b = a.clone();
        a.advance(&m, 0.5).unwrap();
        assert!((a.s()[1] - (-2.0f64).exp()).abs() < 1e-16);

        a.advance(&m, 0.37).unwrap();
        b.advance(&m, 0.87).unwrap();
        for i in 0..2 {
            assert!((a.s()[i] - b.s()[i]).abs() < 1e-12);
            assert!((a.s1()[i] - b.s1()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_and_negative_advance() {
        let m = two_state_model();
        let mut st = IntensityState::new(&m, 0.0, 0);
        st.on_event(&m, 0, 1);
        let before = st.clone();
        st.advance(&m, 0.0).unwrap();
        assert_eq!(st, before);
        assert!(st.advance(&m, -1e-3).is_err());
    }

    #[test]
    fn tiny_terms_flush_to_zero() {
        let m = two_state_model();
        let mut st = IntensityState::new(&m, 0.0, 0);
        st.on_event(&m, 0, 1);
        st.advance(&m, 200.0).unwrap();
        assert_eq!(st.s()[1], 0.0);
        assert_eq!(st.s1()[1], 0.0);
    }
}
