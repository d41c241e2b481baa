//! Monte Carlo consistency and parametric bootstrap harnesses.
//!
//! Replications run in parallel. Replication `r` draws its path from its own
//! generator stream, so results do not depend on scheduling.

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{norm_curves, standard_grid};
use crate::error::{Error, Result};
use crate::estimate::{fit, FitConfig};
use crate::model::SdHawkesModel;
use crate::simulate::{rng_for, simulate_with_rng, SimulationConfig};

/// Signed error `(hat_j - truth_j) / truth_j` at the coordinate maximising
/// its magnitude; the lowest such index wins ties.
pub fn worst_relative_error(hat: &[f64], truth: &[f64]) -> Result<f64> {
    if hat.len() != truth.len() {
        return Err(Error::invalid("parameter vectors differ in length"));
    }
    if let Some(j) = truth.iter().position(|&t| !(t > 0.0)) {
        return Err(Error::invalid(format!(
            "true coordinate {j} is {}; relative error needs positive values",
            truth[j]
        )));
    }
    Ok(worst_by(hat.iter().zip(truth).map(|(h, t)| (h - t) / t)))
}

/// As [`worst_relative_error`] with denominator one.
pub fn worst_absolute_error(hat: &[f64], truth: &[f64]) -> Result<f64> {
    if hat.len() != truth.len() {
        return Err(Error::invalid("parameter vectors differ in length"));
    }
    Ok(worst_by(hat.iter().zip(truth).map(|(h, t)| h - t)))
}

fn worst_by(errors: impl Iterator<Item = f64>) -> f64 {
    let mut worst = 0.0f64;
    for e in errors {
        if e.abs() > worst.abs() {
            worst = e;
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterGroup {
    Phi,
    Nu,
    Alpha,
    Beta,
}

impl ParameterGroup {
    pub const ALL: [ParameterGroup; 4] = [Self::Phi, Self::Nu, Self::Alpha, Self::Beta];

    pub fn name(self) -> &'static str {
        match self {
            Self::Phi => "phi",
            Self::Nu => "nu",
            Self::Alpha => "alpha",
            Self::Beta => "beta",
        }
    }
}

/// Worst errors of an estimate in each group.
///
/// `phi` uses absolute errors, the others relative errors. Kernel components
/// with true `alpha = 0` are left out of both `alpha` and `beta`: relative
/// error is undefined for the former and the latter does not enter the
/// likelihood.
pub fn group_errors(hat: &SdHawkesModel, truth: &SdHawkesModel) -> Result<[f64; 4]> {
    if hat.dims.n_events() != truth.dims.n_events() || hat.dims.n_states() != truth.dims.n_states() {
        return Err(Error::invalid("models differ in dimensions"));
    }
    let active: Vec<usize> = (0..truth.kernel.alpha.len()).filter(|&i| truth.kernel.alpha[i] > 0.0).collect();
    let pick = |v: &[f64]| active.iter().map(|&i| v[i]).collect::<Vec<_>>();
    Ok([
        worst_absolute_error(hat.phi.as_flat(), truth.phi.as_flat())?,
        worst_relative_error(&hat.kernel.nu, &truth.kernel.nu)?,
        worst_relative_error(&pick(&hat.kernel.alpha), &pick(&truth.kernel.alpha))?,
        worst_relative_error(&pick(&hat.kernel.beta), &pick(&truth.kernel.beta))?,
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstErrorRecord {
    pub sample_size: usize,
    pub replication: usize,
    pub group: ParameterGroup,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationFailure {
    pub sample_size: usize,
    pub replication: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct MonteCarloReport {
    pub records: Vec<WorstErrorRecord>,
    pub failures: Vec<ReplicationFailure>,
}

impl MonteCarloReport {
    /// Median of `|error|` for one group at one sample size.
    pub fn median_abs(&self, sample_size: usize, group: ParameterGroup) -> Option<f64> {
        let mut v: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.sample_size == sample_size && r.group == group)
            .map(|r| r.value.abs())
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloConfig {
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    /// Template for each fit; the true model is prepended as a warm start.
    pub fit: FitConfig,
    pub initial_state: usize,
}

impl MonteCarloConfig {
    pub fn new(sample_sizes: Vec<usize>, replications: usize, seed: u64) -> Self {
        Self {
            sample_sizes,
            replications,
            seed,
            fit: FitConfig {
                n_random_starts: 0,
                ordinary_warm_start: false,
                parallel: false,
                ..FitConfig::default()
            },
            initial_state: 0,
        }
    }
}

/// Stream id for replication `r` at sample-size index `k`.
fn stream_id(k: usize, r: usize) -> u64 {
    ((k as u64) << 32) | r as u64
}

/// Seed for the random starts of one replication.
fn fit_seed(seed: u64, stream: u64) -> u64 {
    seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// For each sample size `N`: simulate `N` events, refit with the truth as a
/// warm start and record the four group errors.
pub fn monte_carlo_consistency(truth: &SdHawkesModel, config: &MonteCarloConfig) -> Result<MonteCarloReport> {
    let report = truth.validate();
    if !report.is_empty() {
        return Err(Error::InvalidModel(report));
    }
    let jobs: Vec<(usize, usize, usize)> = config
        .sample_sizes
        .iter()
        .enumerate()
        .flat_map(|(k, &n)| (0..config.replications).map(move |r| (k, n, r)))
        .collect();
    let results: Vec<(usize, usize, Result<[f64; 4]>)> = jobs
        .par_iter()
        .map(|&(k, n, r)| {
            let stream = stream_id(k, r);
            let outcome = (|| {
                let sim = SimulationConfig::events(n, config.seed).with_initial_state(config.initial_state);
                let seq = simulate_with_rng(truth, &sim, &mut rng_for(config.seed, stream))?;
                let mut fc = config.fit.clone();
                fc.warm_starts.insert(0, truth.kernel.clone());
                fc.seed = fit_seed(config.seed, stream);
                let est = fit(&seq, &truth.dims, &fc)?;
                group_errors(&est.model, truth)
            })();
            (n, r, outcome)
        })
        .collect();
    let mut out = MonteCarloReport::default();
    for (n, r, res) in results {
        match res {
            Ok(errs) => {
                for (g, v) in ParameterGroup::ALL.iter().zip(errs) {
                    out.records.push(WorstErrorRecord {
                        sample_size: n,
                        replication: r,
                        group: *g,
                        value: v,
                    });
                }
            }
            Err(e) => out.failures.push(ReplicationFailure {
                sample_size: n,
                replication: r,
                message: e.to_string(),
            }),
        }
    }
    Ok(out)
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pointwise `[lower, upper]` quantiles over samples of equal-length vectors.
pub fn bands_from_samples(samples: &[Vec<f64>], lower: f64, upper: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = samples.first().ok_or_else(|| Error::invalid("no samples"))?;
    if samples.iter().any(|s| s.len() != first.len()) {
        return Err(Error::invalid("samples differ in length"));
    }
    if !(0.0..=1.0).contains(&lower) || !(lower..=1.0).contains(&upper) {
        return Err(Error::invalid(format!("quantile levels {lower}, {upper} are not ordered in [0, 1]")));
    }
    let mut lo = Vec::with_capacity(first.len());
    let mut hi = Vec::with_capacity(first.len());
    let mut column = vec![0.0; samples.len()];
    for j in 0..first.len() {
        for (c, s) in column.iter_mut().zip(samples) {
            *c = s[j];
        }
        column.sort_by(f64::total_cmp);
        lo.push(quantile(&column, lower));
        hi.push(quantile(&column, upper));
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapConfig {
    pub horizon: f64,
    pub replications: usize,
    pub seed: u64,
    pub lower: f64,
    pub upper: f64,
    pub grid: Vec<f64>,
    /// Template for each refit; the fitted model is prepended as a warm start.
    pub fit: FitConfig,
    pub initial_state: usize,
    /// Fewest successful refits for which bands are reported.
    pub min_successes: usize,
}

impl BootstrapConfig {
    pub fn new(horizon: f64, replications: usize, seed: u64) -> Self {
        Self {
            horizon,
            replications,
            seed,
            lower: 0.005,
            upper: 0.995,
            grid: standard_grid(41),
            fit: FitConfig {
                n_random_starts: 1,
                ordinary_warm_start: false,
                parallel: false,
                ..FitConfig::default()
            },
            initial_state: 0,
            min_successes: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterBand {
    pub parameter: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveBand {
    pub source_event: usize,
    pub state: usize,
    pub target_event: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapReport {
    pub grid: Vec<f64>,
    pub parameters: Vec<ParameterBand>,
    pub curves: Vec<CurveBand>,
    pub successes: usize,
    pub failures: Vec<ReplicationFailure>,
    /// Refitted models, in replication order.
    #[serde(skip)]
    pub samples: Vec<SdHawkesModel>,
}

/// Parameter names in the order of [`parameter_vector`].
pub fn parameter_names(model: &SdHawkesModel) -> Vec<String> {
    let (de, dx) = (model.n_events(), model.n_states());
    let mut names: Vec<String> = (0..de).map(|e| format!("nu[{e}]")).collect();
    for p in ["alpha", "beta"] {
        for ep in 0..de {
            for x in 0..dx {
                for e in 0..de {
                    names.push(format!("{p}[{ep}][{x}][{e}]"));
                }
            }
        }
    }
    for e in 0..de {
        for x in 0..dx {
            for y in 0..dx {
                names.push(format!("phi[{e}][{x}][{y}]"));
            }
        }
    }
    names
}

/// `nu`, `alpha`, `beta`, `phi`, flattened.
pub fn parameter_vector(model: &SdHawkesModel) -> Vec<f64> {
    let k = &model.kernel;
    k.nu.iter()
        .chain(&k.alpha)
        .chain(&k.beta)
        .chain(model.phi.as_flat())
        .copied()
        .collect()
}

/// Simulates `B` paths on `(0, horizon]` from `fitted`, refits each and
/// returns quantile bands for every parameter and truncated-norm curve.
pub fn parametric_bootstrap(fitted: &SdHawkesModel, config: &BootstrapConfig) -> Result<BootstrapReport> {
    let report = fitted.validate();
    if !report.is_empty() {
        return Err(Error::InvalidModel(report));
    }
    if config.replications < 2 {
        return Err(Error::invalid("bootstrap needs at least two replications"));
    }
    let results: Vec<Result<SdHawkesModel>> = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let stream = r as u64;
            let sim = SimulationConfig::horizon(config.horizon, config.seed).with_initial_state(config.initial_state);
            let seq = simulate_with_rng(fitted, &sim, &mut rng_for(config.seed, stream))?;
            let mut fc = config.fit.clone();
            fc.warm_starts.insert(0, fitted.kernel.clone());
            fc.seed = fit_seed(config.seed, stream);
            Ok(fit(&seq, &fitted.dims, &fc)?.model)
        })
        .collect();
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(m) => samples.push(m),
            Err(e) => failures.push(ReplicationFailure {
                sample_size: 0,
                replication: r,
                message: e.to_string(),
            }),
        }
    }
    if samples.len() < config.min_successes.max(2) {
        return Err(Error::Numerical(format!(
            "only {} of {} bootstrap refits succeeded",
            samples.len(),
            config.replications
        )));
    }

    let params: Vec<Vec<f64>> = samples.iter().map(parameter_vector).collect();
    let (lo, hi) = bands_from_samples(&params, config.lower, config.upper)?;
    let parameters = parameter_names(fitted)
        .into_iter()
        .zip(lo.into_iter().zip(hi))
        .map(|(parameter, (lower, upper))| ParameterBand { parameter, lower, upper })
        .collect();

    let per_sample: Vec<Vec<crate::analysis::NormCurve>> = samples
        .iter()
        .map(|m| norm_curves(m, &config.grid))
        .collect::<Result<_>>()?;
    let mut curves = Vec::new();
    for (c, template) in per_sample[0].iter().enumerate() {
        let values: Vec<Vec<f64>> = per_sample.iter().map(|s| s[c].values.clone()).collect();
        let (lower, upper) = bands_from_samples(&values, config.lower, config.upper)?;
        curves.push(CurveBand {
            source_event: template.source_event,
            state: template.state,
            target_event: template.target_event,
            lower,
            upper,
        });
    }

    Ok(BootstrapReport {
        grid: config.grid.clone(),
        parameters,
        curves,
        successes: samples.len(),
        failures,
        samples,
    })
}

/// Fraction of grid points, over all curves, where `truth`'s truncated norm
/// lies inside the bands.
pub fn curve_coverage(report: &BootstrapReport, truth: &SdHawkesModel) -> Result<f64> {
    let curves = norm_curves(truth, &report.grid)?;
    let (mut inside, mut total) = (0usize, 0usize);
    for (band, curve) in report.curves.iter().zip(&curves) {
        for j in 0..curve.values.len() {
            total += 1;
            if band.lower[j] <= curve.values[j] && curve.values[j] <= band.upper[j] {
                inside += 1;
            }
        }
    }
    Ok(inside as f64 / total.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worst_error_examples() {
        assert!((worst_relative_error(&[1.2, 1.9], &[1.0, 2.0]).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(worst_relative_error(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert!((worst_relative_error(&[1.1, 0.9], &[1.0, 1.0]).unwrap() - 0.1).abs() < 1e-12);
        assert!(worst_relative_error(&[1.0], &[0.0]).is_err());
        assert!((worst_absolute_error(&[0.75], &[0.8]).unwrap() + 0.05).abs() < 1e-12);
        assert_eq!(worst_absolute_error(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        assert!((worst_absolute_error(&[0.53, 0.43], &[0.5, 0.5]).unwrap() + 0.07).abs() < 1e-12);
    }

    #[test]
    fn worst_error_matches_a_direct_scan() {
        let truth: [f64; 5] = [0.5, 2.0, 1.5, 3.0, 0.25];
        let hat = [0.6, 1.7, 1.5, 3.3, 0.2];
        let mut best = (0usize, 0.0f64);
        for j in 0..truth.len() {
            let r = ((hat[j] - truth[j]) / truth[j]).abs();
            if r > best.1 {
                best = (j, r);
            }
        }
        let expected = (hat[best.0] - truth[best.0]) / truth[best.0];
        assert_eq!(worst_relative_error(&hat, &truth).unwrap(), expected);
    }

    #[test]
    fn quantiles_and_bands() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&s, 0.0), 1.0);
        assert_eq!(quantile(&s, 0.5), 3.0);
        assert_eq!(quantile(&s, 0.625), 3.5);
        let samples = vec![vec![1.0, 10.0], vec![1.0, 10.0]];
        let (lo, hi) = bands_from_samples(&samples, 0.005, 0.995).unwrap();
        assert_eq!(lo, hi);
        let samples: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64]).collect();
        let (lo99, hi99) = bands_from_samples(&samples, 0.005, 0.995).unwrap();
        let (lo90, hi90) = bands_from_samples(&samples, 0.05, 0.95).unwrap();
        assert!(lo99[0] <= lo90[0] && hi90[0] <= hi99[0]);
    }

    #[test]
    fn zero_replications_give_an_empty_report() {
        let m = SdHawkesModel::ordinary(1, vec![1.0], vec![0.5], vec![2.0]).unwrap();
        let rep = monte_carlo_consistency(&m, &MonteCarloConfig::new(vec![100], 0, 1)).unwrap();
        assert!(rep.records.is_empty() && rep.failures.is_empty());
    }

    #[test]
    fn parameter_names_align_with_vector() {
        let m = SdHawkesModel::ordinary(2, vec![1.0, 1.0], vec![0.1; 4], vec![2.0; 4]).unwrap();
        assert_eq!(parameter_names(&m).len(), parameter_vector(&m).len());
    }
}
