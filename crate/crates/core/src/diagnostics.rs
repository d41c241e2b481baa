//! Time-change residuals and goodness-of-fit summaries.
//!
//! Event residuals are the increments of `int lambda_e` between consecutive
//! events of type `e`; total residuals are the increments of
//! `int phi_e(X(t), x) lambda_e(t) dt` between consecutive `(e, x)` events.
//! Every stream starts at the window origin `t0`. Under the true model each
//! stream is i.i.d. Exp(1).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::intensity::IntensityState;
use crate::model::{MarkedSequence, SdHawkesModel};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualSet {
    /// `event_residuals[e]`.
    pub event_residuals: Vec<Vec<f64>>,
    /// `total_residuals[e][x]`.
    pub total_residuals: Vec<Vec<Vec<f64>>>,
    /// `(e, x)` streams with fewer than two events.
    pub short_streams: Vec<(usize, usize)>,
    /// `int_{last type-e event}^{T} lambda_e`, the part not covered by residuals.
    pub event_tails: Vec<f64>,
}

/// Computes event and total residuals in one pass.
pub fn residuals(model: &SdHawkesModel, seq: &MarkedSequence) -> Result<ResidualSet> {
    seq.validate(&model.dims)?;
    let (de, dx) = (model.n_events(), model.n_states());
    let mut state = IntensityState::from_prefix_inclusive(model, seq, seq.t0)?;

    // integrated intensity since each stream's previous event
    let mut open_event = vec![0.0; de];
    let mut open_total = vec![vec![0.0; dx]; de];
    let mut event_res = vec![Vec::new(); de];
    let mut total_res = vec![vec![Vec::new(); dx]; de];
    let mut total_counts = vec![vec![0usize; dx]; de];
    let mut last_comp = state.compensator(model);

    let integrate_to = |state: &mut IntensityState,
                        t: f64,
                        last_comp: &mut Vec<f64>,
                        open_event: &mut Vec<f64>,
                        open_total: &mut Vec<Vec<f64>>|
     -> Result<()> {
        let from_state = state.current_state();
        state.advance_to(model, t)?;
        let comp = state.compensator(model);
        for e in 0..de {
            let inc = (comp[e] - last_comp[e]).max(0.0);
            open_event[e] += inc;
            for (x, &p) in model.phi.row(e, from_state).iter().enumerate() {
                open_total[e][x] += p * inc;
            }
        }
        *last_comp = comp;
        Ok(())
    };

    for i in seq.history_len()..seq.len() {
        let (t, e, x) = (seq.times[i], seq.events[i], seq.states[i]);
        integrate_to(&mut state, t, &mut last_comp, &mut open_event, &mut open_total)?;
        event_res[e].push(std::mem::take(&mut open_event[e]));
        total_res[e][x].push(std::mem::take(&mut open_total[e][x]));
        total_counts[e][x] += 1;
        state.on_event(model, e, x);
        // the jump does not change the integrated intensity
        last_comp = state.compensator(model);
    }
    integrate_to(&mut state, seq.t_end, &mut last_comp, &mut open_event, &mut open_total)?;

    let mut short = Vec::new();
    for e in 0..de {
        for x in 0..dx {
            if total_counts[e][x] < 2 {
                short.push((e, x));
            }
        }
    }
    Ok(ResidualSet {
        event_residuals: event_res,
        total_residuals: total_res,
        short_streams: short,
        event_tails: open_event,
    })
}

/// Event residuals only.
pub fn event_residuals(model: &SdHawkesModel, seq: &MarkedSequence) -> Result<Vec<Vec<f64>>> {
    Ok(residuals(model, seq)?.event_residuals)
}

/// Total residuals only; streams with fewer than two events are emptied and
/// listed in the second element.
pub fn total_residuals(model: &SdHawkesModel, seq: &MarkedSequence) -> Result<(Vec<Vec<Vec<f64>>>, Vec<(usize, usize)>)> {
    let set = residuals(model, seq)?;
    let mut total = set.total_residuals;
    for &(e, x) in &set.short_streams {
        total[e][x].clear();
    }
    Ok((total, set.short_streams))
}

/// Exp(1) quantile `-ln(1 - p)`.
pub fn exp1_quantile(p: f64) -> f64 {
    -(-p).ln_1p()
}

/// `(theoretical, empirical)` quantile pairs at plotting positions `(i - 0.5) / n`.
pub fn qq_points(residuals: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = residuals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, r)| (exp1_quantile((i as f64 + 0.5) / n), r))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample Kolmogorov–Smirnov test against `1 - exp(-x)`, with the
/// asymptotic Kolmogorov p-value of `sqrt(n) D`.
pub fn ks_exp1(residuals: &[f64]) -> Result<KsResult> {
    if residuals.len() < 2 {
        return Err(Error::invalid(format!("KS test needs at least 2 residuals, got {}", residuals.len())));
    }
    let mut sorted = residuals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &r) in sorted.iter().enumerate() {
        let cdf = -(-r.max(0.0)).exp_m1();
        d = d.max((i as f64 + 1.0) / n - cdf).max(cdf - i as f64 / n);
    }
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_survival(n.sqrt() * d),
        n: sorted.len(),
    })
}

/// `P(K > x)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.0 {
        // small-x form converges faster: sqrt(2 pi)/x sum exp(-(2k-1)^2 pi^2 / (8 x^2))
        let pi2 = std::f64::consts::PI.powi(2);
        let mut cdf = 0.0;
        for k in 1..=50 {
            let m = (2 * k - 1) as f64;
            cdf += (-m * m * pi2 / (8.0 * x * x)).exp();
        }
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * cdf).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * x * x).exp();
        sum += if k as i64 % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Sample autocorrelations at lags `1..=max_lag`. `None` when the variance is
/// zero and the autocorrelation is undefined.
pub fn correlogram(residuals: &[f64], max_lag: usize) -> Result<Option<Vec<f64>>> {
    let n = residuals.len();
    if n < 2 {
        return Err(Error::invalid(format!("correlogram needs at least 2 residuals, got {n}")));
    }
    let mean = residuals.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = residuals.iter().map(|r| r - mean).collect();
    let var: f64 = centred.iter().map(|c| c * c).sum();
    if var <= 0.0 {
        return Ok(None);
    }
    let acf = (1..=max_lag)
        .map(|lag| {
            if lag >= n {
                return 0.0;
            }
            centred[..n - lag].iter().zip(&centred[lag..]).map(|(a, b)| a * b).sum::<f64>() / var
        })
        .collect();
    Ok(Some(acf))
}

/// Summary of one residual stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamSummary {
    pub stream: String,
    pub n: usize,
    pub ks: Option<f64>,
    pub p: Option<f64>,
    pub acf: Option<Vec<f64>>,
}

pub fn summarise(stream: impl Into<String>, residuals: &[f64], max_lag: usize) -> StreamSummary {
    let ks = ks_exp1(residuals).ok();
    let acf = correlogram(residuals, max_lag).ok().flatten();
    StreamSummary {
        stream: stream.into(),
        n: residuals.len(),
        ks: ks.map(|k| k.statistic),
        p: ks.map(|k| k.p_value),
        acf,
    }
}
