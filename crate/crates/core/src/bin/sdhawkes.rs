use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;
use serde_json::{json, Value};

use sdhawkes::analysis::{endogeneity, norm_curves, standard_grid};
use sdhawkes::diagnostics::{residuals, summarise};
use sdhawkes::estimate::{fit, FitConfig};
use sdhawkes::experiments::{
    monte_carlo_consistency, parameter_names, parameter_vector, parametric_bootstrap, BootstrapConfig,
    MonteCarloConfig, ParameterGroup,
};
use sdhawkes::io::{read_model, read_sequence, write_model, write_sequence, ModelFile};
use sdhawkes::lobdata::{ingest, parse_clock, StateVariableSpec};
use sdhawkes::simulate::{simulate, SimulationConfig, StopRule, DEFAULT_MAX_EVENTS};
use sdhawkes::{likelihood, Error};

/// State-dependent Hawkes processes: simulate, fit, diagnose and analyse.
///
/// Results are printed to stdout as JSON; series go to the CSV files named by
/// the flags. Logs go to stderr (set RUST_LOG to change the level).
#[derive(Debug, Parser)]
#[command(name = "sdhawkes", version, args_override_self = true)]
struct Cli {
    /// JSON object of flag values for the subcommand, e.g. {"seed": 7}; flags on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for parallel work (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a path and write the sequence CSV and its sidecar JSON.
    Simulate(SimulateArgs),
    /// Fit a model to a sequence by maximum likelihood.
    Estimate(EstimateArgs),
    /// Print the log-likelihood breakdown of a sequence under a model.
    Loglik(LoglikArgs),
    /// Write event and total residuals per stream and summarise them.
    Residuals(ResidualsArgs),
    /// Spectral radius per state and truncated kernel norm curves.
    Analyze(AnalyzeArgs),
    /// Turn LOBSTER message and book files into a sequence.
    Ingest(IngestArgs),
    /// Monte Carlo consistency experiment.
    Mc(McArgs),
    /// Parametric bootstrap of a fitted model.
    Bootstrap(BootstrapArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Simulate on (t0, horizon].
    #[arg(long, conflicts_with = "events", required_unless_present = "events")]
    horizon: Option<f64>,
    /// Simulate this many events instead.
    #[arg(long)]
    events: Option<usize>,
    /// Window start.
    #[arg(long, default_value_t = 0.0)]
    t0: f64,
    /// Initial state as label or index.
    #[arg(long, default_value = "0")]
    initial_state: String,
    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Abort with an explosion error beyond this many events.
    #[arg(long, default_value_t = DEFAULT_MAX_EVENTS)]
    max_events: usize,
    /// Sequence CSV; the sidecar is written next to it with a .json extension.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Random starting points per event type.
    #[arg(long, default_value_t = 3)]
    starts: usize,
    /// Seed for the random starting points.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Model JSON used as an extra starting point.
    #[arg(long)]
    warm_start: Option<PathBuf>,
    /// Skip the single-state warm start.
    #[arg(long)]
    no_ordinary_start: bool,
    /// Optimiser iterations per start and event type.
    #[arg(long, default_value_t = 1000)]
    max_iterations: usize,
}

impl FitArgs {
    fn config(&self) -> Result<FitConfig, Error> {
        let mut cfg = FitConfig {
            n_random_starts: self.starts,
            seed: self.seed,
            ordinary_warm_start: !self.no_ordinary_start,
            max_iterations: self.max_iterations,
            ..FitConfig::default()
        };
        if let Some(p) = &self.warm_start {
            cfg.warm_starts.push(read_model(p)?.kernel);
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Sequence CSV (with sidecar).
    #[arg(long)]
    events: PathBuf,
    /// Where to write the fitted model JSON.
    #[arg(long)]
    model_out: PathBuf,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Debug, Args)]
struct LoglikArgs {
    /// Model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Sequence CSV (with sidecar).
    #[arg(long)]
    events: PathBuf,
}

#[derive(Debug, Args)]
struct ResidualsArgs {
    /// Model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Sequence CSV (with sidecar).
    #[arg(long)]
    events: PathBuf,
    /// Directory for the per-stream CSVs (created if missing).
    #[arg(long)]
    out_dir: PathBuf,
    /// Largest autocorrelation lag reported.
    #[arg(long, default_value_t = 20)]
    max_lag: usize,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Long-format CSV of truncated norm curves.
    #[arg(long)]
    curves_out: PathBuf,
    /// Points on the log-spaced grid from 1e-6 to 1e2 seconds.
    #[arg(long, default_value_t = 161)]
    grid_points: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StateKind {
    Spread,
    Qi,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// LOBSTER message file.
    #[arg(long)]
    messages: PathBuf,
    /// LOBSTER order book file (level 1 or deeper), row-aligned with the messages.
    #[arg(long)]
    book: PathBuf,
    /// State variable.
    #[arg(long, value_enum)]
    state: StateKind,
    /// Window start, HH:MM[:SS] or seconds after midnight.
    #[arg(long, default_value = "12:00")]
    from: String,
    /// Window end, same format as --from.
    #[arg(long, default_value = "14:30")]
    to: String,
    /// Tick size in currency units (spread states only).
    #[arg(long, default_value_t = 0.01)]
    tick: f64,
    /// Keep events before the window as a history prefix.
    #[arg(long)]
    keep_history: bool,
    /// Sequence CSV; the sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct McArgs {
    /// True model.
    #[arg(long)]
    model: PathBuf,
    /// Sample sizes (events per path).
    #[arg(long, value_delimiter = ',', default_values_t = [5000usize, 40000])]
    sizes: Vec<usize>,
    /// Paths per sample size.
    #[arg(long, default_value_t = 20)]
    replications: usize,
    /// Random starts per fit in addition to the true-parameter start.
    #[arg(long, default_value_t = 0)]
    starts: usize,
    /// Master seed; each replication derives its own stream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Long-format CSV: sample_size,replication,group,value.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BootstrapArgs {
    /// Fitted model to resample from.
    #[arg(long)]
    model: PathBuf,
    /// Length of each simulated path.
    #[arg(long)]
    horizon: f64,
    /// Number of bootstrap paths.
    #[arg(long, default_value_t = 100)]
    replications: usize,
    /// Random starts per refit in addition to the fitted-model start.
    #[arg(long, default_value_t = 1)]
    starts: usize,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Lower quantile level of the bands.
    #[arg(long, default_value_t = 0.005)]
    lower: f64,
    /// Upper quantile level of the bands.
    #[arg(long, default_value_t = 0.995)]
    upper: f64,
    /// Points on the truncated-norm time grid.
    #[arg(long, default_value_t = 41)]
    grid_points: usize,
    /// Long-format CSV of refitted parameters: replication,parameter,value.
    #[arg(long)]
    out: PathBuf,
    /// Long-format CSV of curve bands.
    #[arg(long)]
    bands_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let argv = match expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(summary) => {
            let text = serde_json::to_string_pretty(&summary).expect("summary serialises");
            // a closed pipe on stdout is not an error of ours
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 2 } else { 3 })
        }
    }
}

/// Replaces `--config FILE` with the flags it holds, placed right after the
/// subcommand so that later command-line flags override them.
fn expand_config(args: Vec<String>) -> Result<Vec<String>, String> {
    let Some(pos) = args.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(args);
    };
    let mut args = args;
    let path = if let Some(p) = args[pos].strip_prefix("--config=") {
        let p = p.to_string();
        args.remove(pos);
        p
    } else {
        if pos + 1 >= args.len() {
            return Err("--config needs a file".into());
        }
        let p = args.remove(pos + 1);
        args.remove(pos);
        p
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| format!("config {path}: {e}"))?;
    let Value::Object(map) = value else {
        return Err(format!("config {path} must be a JSON object"));
    };
    let mut injected = Vec::new();
    for (key, v) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        match v {
            Value::Bool(true) => injected.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::String(s) => injected.extend([flag, s]),
            Value::Number(n) => injected.extend([flag, n.to_string()]),
            Value::Array(items) => {
                let parts: Vec<String> = items
                    .into_iter()
                    .map(|i| match i {
                        Value::String(s) => s,
                        other => other.to_string(),
                    })
                    .collect();
                injected.extend([flag, parts.join(",")]);
            }
            Value::Object(_) => return Err(format!("config key `{key}` must not be an object")),
        }
    }
    // the subcommand is the first argument that is not a flag or a global flag's value
    let mut at = 1;
    while at < args.len() && args[at].starts_with('-') {
        at += if args[at] == "--jobs" { 2 } else { 1 };
    }
    let at = (at + 1).min(args.len());
    args.splice(at..at, injected);
    Ok(args)
}

fn run(command: Command) -> Result<Value, Error> {
    match command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Loglik(a) => cmd_loglik(a),
        Command::Residuals(a) => cmd_residuals(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Mc(a) => cmd_mc(a),
        Command::Bootstrap(a) => cmd_bootstrap(a),
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, Error> {
    Ok(serde_json::to_value(v)?)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, Error> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

fn cmd_simulate(a: SimulateArgs) -> Result<Value, Error> {
    let model = read_model(&a.model)?;
    let initial_state = model
        .dims
        .state_index(&a.initial_state)
        .or_else(|| a.initial_state.parse().ok())
        .ok_or_else(|| Error::InvalidInput(format!("unknown initial state `{}`", a.initial_state)))?;
    let stop = match (a.horizon, a.events) {
        (Some(h), _) => StopRule::Horizon(h),
        (None, Some(n)) => StopRule::Events(n),
        (None, None) => unreachable!("clap requires one of the two"),
    };
    let config = SimulationConfig {
        initial_state,
        t0: a.t0,
        stop,
        seed: a.seed,
        max_events: a.max_events,
    };
    let seq = simulate(&model, &config)?;
    write_sequence(&a.out, &seq, &model.dims)?;
    info!("wrote {} events to {}", seq.len(), a.out.display());
    Ok(json!({
        "events": seq.len(),
        "counts": seq.event_counts(model.n_events()),
        "t0": seq.t0,
        "T": seq.t_end,
        "out": a.out,
    }))
}

#[derive(Serialize)]
struct EstimateSummary<'a> {
    model: ModelFile,
    log_likelihood: f64,
    breakdown: &'a likelihood::LikelihoodBreakdown,
    chosen_start: &'a [usize],
    unobserved_transition_rows: &'a [(usize, usize)],
    traces: &'a [sdhawkes::estimate::StartTrace],
}

fn cmd_estimate(a: EstimateArgs) -> Result<Value, Error> {
    let (seq, dims) = read_sequence(&a.events, None)?;
    let result = fit(&seq, &dims, &a.fit.config()?)?;
    write_model(&a.model_out, &result.model)?;
    to_value(&EstimateSummary {
        model: ModelFile::from(&result.model),
        log_likelihood: result.log_likelihood,
        breakdown: &result.breakdown,
        chosen_start: &result.chosen_start,
        unobserved_transition_rows: &result.unobserved_transition_rows,
        traces: &result.traces,
    })
}

fn cmd_loglik(a: LoglikArgs) -> Result<Value, Error> {
    let model = read_model(&a.model)?;
    let (seq, _) = read_sequence(&a.events, Some(&model.dims))?;
    to_value(&likelihood::log_likelihood(&model, &seq)?)
}

fn write_column(path: &Path, values: &[f64]) -> Result<(), Error> {
    let mut w = csv_writer(path)?;
    w.write_record(["residual"])?;
    for v in values {
        w.write_record([v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_residuals(a: ResidualsArgs) -> Result<Value, Error> {
    let model = read_model(&a.model)?;
    let (seq, _) = read_sequence(&a.events, Some(&model.dims))?;
    let set = residuals(&model, &seq)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let (el, xl) = (model.dims.event_labels(), model.dims.state_labels());
    let mut summaries = Vec::new();
    for (e, r) in set.event_residuals.iter().enumerate() {
        let name = format!("event_{}", el[e]);
        write_column(&a.out_dir.join(format!("{name}.csv")), r)?;
        summaries.push(summarise(name, r, a.max_lag));
    }
    for (e, per_state) in set.total_residuals.iter().enumerate() {
        for (x, r) in per_state.iter().enumerate() {
            let name = format!("total_{}_{}", el[e], xl[x]);
            write_column(&a.out_dir.join(format!("{name}.csv")), r)?;
            summaries.push(summarise(name, r, a.max_lag));
        }
    }
    to_value(&summaries)
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<Value, Error> {
    let model = read_model(&a.model)?;
    let states = endogeneity(&model)?;
    let grid = standard_grid(a.grid_points);
    let mut w = csv_writer(&a.curves_out)?;
    w.write_record(["source_event", "state", "target_event", "t", "norm"])?;
    let (el, xl) = (model.dims.event_labels(), model.dims.state_labels());
    for c in norm_curves(&model, &grid)? {
        for (t, v) in grid.iter().zip(&c.values) {
            w.write_record([
                el[c.source_event].as_str(),
                xl[c.state].as_str(),
                el[c.target_event].as_str(),
                &t.to_string(),
                &v.to_string(),
            ])?;
        }
    }
    w.flush()?;
    to_value(&states)
}

fn cmd_ingest(a: IngestArgs) -> Result<Value, Error> {
    let spec = match a.state {
        StateKind::Spread => StateVariableSpec::spread_with_tick(a.tick)?,
        StateKind::Qi => StateVariableSpec::QueueImbalance,
    };
    let (from, to) = (parse_clock(&a.from)?, parse_clock(&a.to)?);
    let messages = BufReader::new(File::open(&a.messages)?);
    let book = BufReader::new(File::open(&a.book)?);
    let (seq, dims, report) = ingest(messages, book, &spec, from, to, a.keep_history)?;
    write_sequence(&a.out, &seq, &dims)?;
    Ok(json!({
        "events": seq.len(),
        "counts": seq.event_counts(dims.n_events()),
        "initial_state": dims.state_labels()[seq.initial_state],
        "report": to_value(&report)?,
        "out": a.out,
    }))
}

fn cmd_mc(a: McArgs) -> Result<Value, Error> {
    let truth = read_model(&a.model)?;
    let mut config = MonteCarloConfig::new(a.sizes.clone(), a.replications, a.seed);
    config.fit.n_random_starts = a.starts;
    let report = monte_carlo_consistency(&truth, &config)?;
    let mut w = csv_writer(&a.out)?;
    w.write_record(["sample_size", "replication", "group", "value"])?;
    for r in &report.records {
        w.write_record([
            r.sample_size.to_string(),
            r.replication.to_string(),
            r.group.name().to_string(),
            r.value.to_string(),
        ])?;
    }
    w.flush()?;
    let medians: Vec<Value> = a
        .sizes
        .iter()
        .map(|&n| {
            let mut m = serde_json::Map::new();
            m.insert("sample_size".into(), json!(n));
            for g in ParameterGroup::ALL {
                m.insert(g.name().into(), json!(report.median_abs(n, g)));
            }
            Value::Object(m)
        })
        .collect();
    Ok(json!({ "median_abs_worst_error": medians, "failures": report.failures }))
}

fn cmd_bootstrap(a: BootstrapArgs) -> Result<Value, Error> {
    let model = read_model(&a.model)?;
    let mut config = BootstrapConfig::new(a.horizon, a.replications, a.seed);
    config.lower = a.lower;
    config.upper = a.upper;
    config.grid = standard_grid(a.grid_points);
    config.fit.n_random_starts = a.starts;
    let report = parametric_bootstrap(&model, &config)?;
    let names = parameter_names(&model);
    let mut w = csv_writer(&a.out)?;
    w.write_record(["replication", "parameter", "value"])?;
    for (r, m) in report.samples.iter().enumerate() {
        for (name, v) in names.iter().zip(parameter_vector(m)) {
            w.write_record([r.to_string(), name.clone(), v.to_string()])?;
        }
    }
    w.flush()?;
    if let Some(path) = &a.bands_out {
        let mut w = csv_writer(path)?;
        w.write_record(["source_event", "state", "target_event", "t", "lower", "upper"])?;
        for c in &report.curves {
            for (j, t) in report.grid.iter().enumerate() {
                w.write_record([
                    c.source_event.to_string(),
                    c.state.to_string(),
                    c.target_event.to_string(),
                    t.to_string(),
                    c.lower[j].to_string(),
                    c.upper[j].to_string(),
                ])?;
            }
        }
        w.flush()?;
    }
    info!("{} of {} refits succeeded", report.successes, a.replications);
    Ok(json!({
        "successes": report.successes,
        "failures": report.failures,
        "parameters": report.parameters,
    }))
}
