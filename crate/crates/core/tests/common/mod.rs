#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdhawkes::model::{Dimensions, ExpKernelParams, MarkedSequence, SdHawkesModel, TransitionDistribution};
use sdhawkes::{simulate, SimulationConfig};

/// Parameters kept in nested form `[e'][x'][e]` so the oracles below never
/// touch the library's flat layout.
#[derive(Debug, Clone)]
pub struct Nested {
    pub nu: Vec<f64>,
    pub alpha: Vec<Vec<Vec<f64>>>,
    pub beta: Vec<Vec<Vec<f64>>>,
    /// `phi[e][x][x']`
    pub phi: Vec<Vec<Vec<f64>>>,
}

impl Nested {
    pub fn de(&self) -> usize {
        self.nu.len()
    }

    pub fn dx(&self) -> usize {
        self.phi[0].len()
    }

    pub fn model(&self) -> SdHawkesModel {
        let dims = Dimensions::numbered(self.de(), self.dx()).unwrap();
        let kernel = ExpKernelParams::from_nested(self.nu.clone(), &self.alpha, &self.beta).unwrap();
        SdHawkesModel::new(dims, TransitionDistribution::from_nested(&self.phi).unwrap(), kernel).unwrap()
    }
}

/// One event type, two states, self-excitation only after events that leave
/// the process in the second state; transitions uniform.
pub fn two_state_model() -> Nested {
    Nested {
        nu: vec![1.0],
        alpha: vec![vec![vec![0.0], vec![1.0]]],
        beta: vec![vec![vec![4.0], vec![4.0]]],
        phi: vec![vec![vec![0.5, 0.5], vec![0.5, 0.5]]],
    }
}

/// Two event types, five states, strongly state-dependent behaviour.
pub fn five_state_model() -> Nested {
    // rows: source event; pairs of columns: (state, target)
    let alpha_rows = [
        [2.0, 10.0, 1.0, 3.0, 1000.0, 30.0, 2000.0, 40.0, 100.0, 1000.0],
        [10.0, 2.0, 3.0, 1.0, 20.0, 3000.0, 2000.0, 50.0, 60.0, 2000.0],
    ];
    let beta_rows = [
        [10.0, 15.0, 8.0, 4.0, 3000.0, 500.0, 6000.0, 160.0, 500.0, 8000.0],
        [15.0, 10.0, 4.0, 8.0, 1000.0, 5000.0, 10000.0, 300.0, 120.0, 5000.0],
    ];
    let nest = |rows: [[f64; 10]; 2]| -> Vec<Vec<Vec<f64>>> {
        rows.iter().map(|r| (0..5).map(|x| vec![r[2 * x], r[2 * x + 1]]).collect()).collect()
    };
    let phi0 = [
        [0.7, 0.3, 0.0, 0.0, 0.0],
        [0.1, 0.8, 0.1, 0.0, 0.0],
        [0.0, 0.1, 0.6, 0.2, 0.1],
        [0.2, 0.2, 0.3, 0.1, 0.2],
        [0.1, 0.3, 0.3, 0.1, 0.2],
    ];
    let phi1 = [
        [0.0, 0.1, 0.2, 0.3, 0.4],
        [0.2, 0.1, 0.4, 0.2, 0.1],
        [0.1, 0.3, 0.1, 0.3, 0.2],
        [0.0, 0.0, 0.1, 0.8, 0.1],
        [0.1, 0.0, 0.1, 0.1, 0.7],
    ];
    let phi = [phi0, phi1].iter().map(|m| m.iter().map(|r| r.to_vec()).collect()).collect();
    Nested {
        nu: vec![5.0, 1.0],
        alpha: nest(alpha_rows),
        beta: nest(beta_rows),
        phi,
    }
}

/// Random stable parameters: the total norm out of every source slot stays below 0.8.
pub fn random_nested(rng: &mut ChaCha8Rng, de: usize, dx: usize) -> Nested {
    let nu = (0..de).map(|_| rng.random_range(0.2..2.0)).collect();
    let mut alpha = vec![vec![vec![0.0; de]; dx]; de];
    let mut beta = vec![vec![vec![0.0; de]; dx]; de];
    for ep in 0..de {
        for x in 0..dx {
            for e in 0..de {
                let b: f64 = 10f64.powf(rng.random_range(-0.5..1.5));
                let norm = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..0.8 / de as f64) };
                alpha[ep][x][e] = norm * b;
                beta[ep][x][e] = b;
            }
        }
    }
    let phi = (0..de)
        .map(|_| {
            (0..dx)
                .map(|_| {
                    let w: Vec<f64> = (0..dx).map(|_| rng.random_range(0.05..1.0)).collect();
                    let s: f64 = w.iter().sum();
                    w.iter().map(|v| v / s).collect()
                })
                .collect()
        })
        .collect();
    Nested { nu, alpha, beta, phi }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Simulated path of `n` events; with `history`, the window opens at the
/// time of the middle event so the first half becomes a history prefix.
pub fn path(model: &SdHawkesModel, n: usize, seed: u64, history: bool) -> MarkedSequence {
    let seq = simulate(model, &SimulationConfig::events(n, seed)).unwrap();
    if !history || seq.len() < 2 {
        return seq;
    }
    let mid = seq.len() / 2;
    let t0 = 0.5 * (seq.times[mid - 1] + seq.times[mid]);
    let initial = seq.states[mid - 1];
    MarkedSequence::new(seq.times, seq.events, seq.states, initial, t0, seq.t_end + 0.25).unwrap()
}

/// `lambda_e(t)` summing every event strictly before `t`.
pub fn oracle_intensity(p: &Nested, seq: &MarkedSequence, t: f64) -> Vec<f64> {
    let mut lambda = p.nu.clone();
    for i in 0..seq.len() {
        if seq.times[i] >= t {
            break;
        }
        let (ep, x) = (seq.events[i], seq.states[i]);
        for (e, l) in lambda.iter_mut().enumerate() {
            *l += p.alpha[ep][x][e] * (-p.beta[ep][x][e] * (t - seq.times[i])).exp();
        }
    }
    lambda
}

/// `int_{t0}^{t} lambda_e`, each kernel integrated from `max(t0, t_i)`.
pub fn oracle_compensator(p: &Nested, seq: &MarkedSequence, t: f64) -> Vec<f64> {
    let mut out: Vec<f64> = p.nu.iter().map(|nu| nu * (t - seq.t0)).collect();
    for i in 0..seq.len() {
        let ti = seq.times[i];
        if ti >= t {
            break;
        }
        let from = ti.max(seq.t0);
        let (ep, x) = (seq.events[i], seq.states[i]);
        for (e, c) in out.iter_mut().enumerate() {
            let (a, b) = (p.alpha[ep][x][e], p.beta[ep][x][e]);
            *c += a / b * ((-b * (from - ti)).exp() - (-b * (t - ti)).exp());
        }
    }
    out
}

/// `(transition, l_plus, l_minus)` by direct summation.
pub fn oracle_loglik(p: &Nested, seq: &MarkedSequence) -> (f64, f64, f64) {
    let h = seq.times.partition_point(|&t| t <= seq.t0);
    let mut l_plus = 0.0;
    let mut trans = 0.0;
    let mut prev = seq.initial_state;
    for n in h..seq.len() {
        l_plus += oracle_intensity(p, seq, seq.times[n])[seq.events[n]].ln();
        trans += p.phi[seq.events[n]][prev][seq.states[n]].ln();
        prev = seq.states[n];
    }
    let l_minus = oracle_compensator(p, seq, seq.t_end).iter().sum();
    (trans, l_plus, l_minus)
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
