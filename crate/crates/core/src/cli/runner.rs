//! Experiment commands and their CSV outputs.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::analysis::{self, fold_paths};
use crate::cli::config::{ConfigError, LoadedConfig};
use crate::error::Error;
use crate::integrator::{simulate_path, SimConfig};
use crate::localtime;
use crate::model::validate_dissipativity;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Validate,
    Moments,
    Contraction,
    Invariant,
    Localtime,
    Lossrate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Validate => "validate",
            Command::Moments => "moments",
            Command::Contraction => "contraction",
            Command::Invariant => "invariant",
            Command::Localtime => "localtime",
            Command::Lossrate => "lossrate",
        }
    }
}

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    /// Library error that reflects an unusable configuration.
    Invalid(Error),
    Numerical(Error),
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Numerical(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Invalid(e) => write!(f, "config error: {e}"),
            RunError::Numerical(e) => write!(f, "numerical abort: {e}"),
            RunError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFinite { .. } => RunError::Numerical(e),
            other => RunError::Invalid(other),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

/// Floats are written with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// One CSV table in memory.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Table {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, RunError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| RunError::Io(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub label: String,
    pub seconds: f64,
}

/// Settings that are not part of the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub seed: u64,
    pub code_version: String,
    pub outputs: Vec<String>,
    pub timings: Vec<Timing>,
    pub warnings: Vec<String>,
}

/// Result of a command: files written and any warnings.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub out_dir: PathBuf,
}

struct Outputs {
    tables: Vec<(String, Table)>,
    warnings: Vec<String>,
    timings: Vec<Timing>,
}

impl Outputs {
    fn new() -> Self {
        Outputs {
            tables: Vec::new(),
            warnings: Vec::new(),
            timings: Vec::new(),
        }
    }

    fn table(&mut self, name: &str, table: Table) {
        self.tables.push((name.to_string(), table));
    }

    fn timed<T>(&mut self, label: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push(Timing {
            label: label.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

/// Run one command on a loaded configuration and write its outputs.
pub fn run_experiment(
    command: Command,
    mut config: LoadedConfig,
    options: &RunOptions,
) -> Result<RunOutcome, RunError> {
    if let Some(seed) = options.seed {
        config.raw.simulation.seed = seed;
        config.digest = config.raw.digest();
    }
    let out_dir = options.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    let mut out = Outputs::new();
    match command {
        Command::Simulate => simulate(&config, &mut out)?,
        Command::Validate => validate(&config, &mut out)?,
        Command::Moments => moments(&config, &mut out)?,
        Command::Contraction => contraction(&config, &mut out)?,
        Command::Invariant => invariant(&config, &mut out)?,
        Command::Localtime => local_time(&config, &mut out)?,
        Command::Lossrate => loss_rate(&config, &mut out)?,
    }
    fs::create_dir_all(&out_dir)?;
    let mut files = Vec::new();
    for (name, table) in &out.tables {
        let file = format!("{name}.csv");
        fs::write(out_dir.join(&file), table.to_bytes()?)?;
        files.push(file);
    }
    let manifest = RunManifest {
        command: command.name().to_string(),
        config_digest: config.digest.clone(),
        seed: config.sim().seed,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        outputs: files,
        timings: out.timings,
        warnings: out.warnings,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| RunError::Io(e.to_string()))?;
    fs::write(out_dir.join("manifest.json"), json + "\n")?;
    Ok(RunOutcome { manifest, out_dir })
}

/// Load, run and report; returns the process exit code.
pub fn run_from_file(command: Command, config_path: &Path, options: &RunOptions) -> u8 {
    let result = crate::cli::config::load_config(config_path)
        .map_err(RunError::from)
        .and_then(|c| run_experiment(command, c, options));
    match result {
        Ok(outcome) => {
            for w in &outcome.manifest.warnings {
                eprintln!("warning: {w}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn report_for(config: &LoadedConfig) -> crate::model::DissipativityReport {
    validate_dissipativity(&config.params)
}

fn simulate(config: &LoadedConfig, out: &mut Outputs) -> Result<(), RunError> {
    let sim = config.sim();
    let d = config.params.dim;
    let every = config.output_every();
    let mut header = vec!["path".to_string(), "t".to_string()];
    for name in ["x", "k", "k_cont", "k_jump", "y", "gamma"] {
        header.extend((0..d).map(|i| format!("{name}_{i}")));
    }
    let mut jump_header = vec!["path".to_string(), "t".to_string(), "step".to_string()];
    for name in ["mark", "x_left", "jump", "dk"] {
        jump_header.extend((0..d).map(|i| format!("{name}_{i}")));
    }
    let indices = analysis::output_indices(sim.steps(), every);
    type Rows = (Vec<Vec<String>>, Vec<Vec<String>>);
    let (rows, jumps): Rows = out.timed("simulate", || {
        fold_paths(
            sim.paths,
            || (Vec::new(), Vec::new()),
            |acc: &mut Rows, p| {
                let rec = simulate_path(sim, &config.model, &config.marks, &config.raw.initial, sim.stream(p))?;
                for &n in &indices {
                    let mut row = vec![p.to_string(), fmt_f64(rec.time(n))];
                    for data in [&rec.x, &rec.k, &rec.k_cont, &rec.k_jump, &rec.y, &rec.gamma] {
                        row.extend(rec.row(data, n).iter().map(|v| fmt_f64(*v)));
                    }
                    acc.0.push(row);
                }
                for j in &rec.jumps {
                    let mut row = vec![p.to_string(), fmt_f64(j.time), j.step.to_string()];
                    for v in [&j.mark, &j.x_left, &j.jump, &j.dk] {
                        row.extend(v.iter().map(|x| fmt_f64(*x)));
                    }
                    acc.1.push(row);
                }
                Ok(())
            },
            |a, b| {
                a.0.extend(b.0);
                a.1.extend(b.1);
            },
        )
    })?;
    let mut t = Table::new(&header);
    rows.into_iter().for_each(|r| t.push(r));
    out.table("paths", t);
    let mut t = Table::new(&jump_header);
    jumps.into_iter().for_each(|r| t.push(r));
    out.table("jumps", t);
    Ok(())
}

fn validate(config: &LoadedConfig, out: &mut Outputs) -> Result<(), RunError> {
    let r = report_for(config);
    let mut scan = Table::new(&[
        "epsilon_sq",
        "alpha",
        "alpha1",
        "alpha2",
        "beta1",
        "beta2",
        "feasible",
        "selected",
    ]);
    for p in &r.scan {
        let ok = p.alpha1 > p.alpha2 && p.alpha2 >= 0.0 && p.beta1 > p.beta2 && p.beta2 >= 0.0;
        scan.push(vec![
            fmt_f64(p.epsilon_sq),
            fmt_f64(r.alpha),
            fmt_f64(p.alpha1),
            fmt_f64(p.alpha2),
            fmt_f64(p.beta1),
            fmt_f64(p.beta2),
            ok.to_string(),
            (p.epsilon_sq == r.epsilon_sq).to_string(),
        ]);
    }
    out.table("dissipativity_scan", scan);
    let mut summary = Table::new(&[
        "feasible",
        "epsilon",
        "epsilon_sq",
        "alpha",
        "alpha1",
        "alpha2",
        "beta1",
        "beta2",
        "lambda_moment",
        "lambda_contraction",
        "delay",
        "diagnostics",
    ]);
    summary.push(vec![
        r.feasible.to_string(),
        fmt_f64(r.epsilon),
        fmt_f64(r.epsilon_sq),
        fmt_f64(r.alpha),
        fmt_f64(r.alpha1),
        fmt_f64(r.alpha2),
        fmt_f64(r.beta1),
        fmt_f64(r.beta2),
        fmt_opt(r.lambda_moment),
        fmt_opt(r.lambda_contraction),
        fmt_f64(r.delay),
        r.diagnostics.clone(),
    ]);
    out.table("dissipativity", summary);
    if !r.feasible {
        out.warnings
            .push(format!("model is not dissipative on the ε grid: {}", r.diagnostics));
    }
    Ok(())
}

fn moments(config: &LoadedConfig, out: &mut Outputs) -> Result<(), RunError> {
    let report = report_for(config);
    let rows = out.timed("moments", || {
        analysis::moment_experiment(
            config.sim(),
            &config.model,
            &config.marks,
            &config.raw.initial,
            &report,
            config.output_every(),
        )
    })?;
    let mut t = Table::new(&[
        "t",
        "estimate",
        "stderr",
        "segment_estimate",
        "segment_stderr",
        "bound_at_t",
        "bound",
    ]);
    for r in rows {
        t.push(vec![
            fmt_f64(r.t),
            fmt_f64(r.estimate),
            fmt_f64(r.stderr),
            fmt_f64(r.segment_estimate),
            fmt_f64(r.segment_stderr),
            fmt_f64(r.bound_at_t),
            fmt_f64(r.bound),
        ]);
    }
    out.table("moments", t);
    Ok(())
}

fn contraction(config: &LoadedConfig, out: &mut Outputs) -> Result<(), RunError> {
    let report = report_for(config);
    let eta = config.initial_alt()?;
    let r = out.timed("contraction", || {
        analysis::contraction_experiment(
            config.sim(),
            &config.model,
            &config.marks,
            &config.raw.initial,
            eta,
            &report,
        )
    })?;
    let mut t = Table::new(&["t", "gap", "stderr"]);
    for n in analysis::output_indices(r.times.len() - 1, config.output_every()) {
        t.push(vec![fmt_f64(r.times[n]), fmt_f64(r.gap[n]), fmt_f64(r.gap_stderr[n])]);
    }
    out.table("contraction", t);
    let mut fit = Table::new(&[
        "rate",
        "intercept",
        "window_start",
        "window_end",
        "points",
        "lambda_star",
        "rate_over_lambda_star",
    ]);
    match r.fit {
        Some(f) => fit.push(vec![
            fmt_f64(f.rate),
            fmt_f64(f.intercept),
            fmt_f64(f.start),
            fmt_f64(f.end),
            f.points.to_string(),
            fmt_f64(r.lambda_star),
            fmt_f64(f.rate / r.lambda_star),
        ]),
        None => fit.push(vec![
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            "0".into(),
            fmt_f64(r.lambda_star),
            String::new(),
        ]),
    }
    out.table("contraction_fit", fit);
    out.warnings.extend(r.warning);
    Ok(())
}

fn invariant(config: &LoadedConfig, out: &mut Outputs) -> Result<(), RunError> {
    let eta = config.initial_alt()?;
    let r = out.timed("invariant", || {
        analysis::invariant_experiment(
            config.sim(),
            &config.model,
            &config.marks,
            &config.raw.initial,
            eta,
            config.burn_in(),
            config.stride(),
            config.ks_alpha(),
        )
    })?;
    let thetas = r.from_xi.thetas();
    let mut t = Table::new(&["coordinate", "theta", "ks", "band", "within_band"]);
    for (i, row) in r.ks.iter().enumerate() {
        for (j, ks) in row.iter().enumerate() {
            t.push(vec![
                i.to_string(),
                fmt_f64(thetas[j]),
                fmt_f64(*ks),
                fmt_f64(r.band),
                (*ks <= r.band).to_string(),
            ]);
        }
    }
    out.table("invariant", t);
    let mut s = Table::new(&[
        "distance",
        "band",
        "ks_alpha",
        "samples_xi",
        "samples_eta",
        "within_band",
    ]);
    s.push(vec![
        fmt_f64(r.distance),
        fmt_f64(r.band),
        fmt_f64(config.ks_alpha()),
        r.from_xi.sample_count().to_string(),
        r.from_eta.sample_count().to_string(),
        r.within_band().to_string(),
    ]);
    out.table("invariant_summary", s);
    Ok(())
}

fn local_time(config: &LoadedConfig, out: &mut Outputs) -> Result<(), RunError> {
    let sim = config.sim();
    let coord = config.coordinate();
    let mut levels: Vec<(SimConfig, Option<f64>)> = vec![(sim.clone(), config.raw.experiment.band)];
    for &h in &config.raw.experiment.refinements {
        let mut s = sim.clone();
        s.step = h;
        levels.push((s, None));
    }
    let mut summary = Table::new(&[
        "step",
        "band",
        "paths",
        "half_local_time",
        "k_cont",
        "drift_correction",
        "relative_error",
    ]);
    for (k, (level, band)) in levels.iter().enumerate() {
        // Output rows follow the configured time spacing at every level.
        let every = ((config.output_every() as f64 * sim.step / level.step).round() as usize).max(1);
        let s = out.timed(&format!("localtime level {k}"), || {
            localtime::local_time_experiment(
                level,
                &config.model,
                &config.marks,
                &config.raw.initial,
                coord,
                *band,
                every,
            )
        })?;
        if k == 0 {
            let mut t = Table::new(&["t", "half_local_time", "k_cont", "drift_correction"]);
            for n in 0..s.times.len() {
                t.push(vec![
                    fmt_f64(s.times[n]),
                    fmt_f64(s.half_local_time[n]),
                    fmt_f64(s.k_cont[n]),
                    fmt_f64(s.drift_correction[n]),
                ]);
            }
            out.table("localtime", t);
        }
        summary.push(vec![
            fmt_f64(s.step),
            fmt_f64(s.band),
            s.paths.to_string(),
            fmt_f64(*s.half_local_time.last().unwrap()),
            fmt_f64(*s.k_cont.last().unwrap()),
            fmt_f64(*s.drift_correction.last().unwrap()),
            fmt_f64(s.relative_error()),
        ]);
    }
    out.table("localtime_summary", summary);
    Ok(())
}

fn loss_rate(config: &LoadedConfig, out: &mut Outputs) -> Result<(), RunError> {
    let r = out.timed("lossrate", || {
        localtime::loss_rate_experiment(
            config.sim(),
            &config.model,
            &config.marks,
            &config.raw.initial,
            config.coordinate(),
            config.burn_in(),
            config.raw.experiment.band,
        )
    })?;
    let mut t = Table::new(&[
        "coordinate",
        "window_start",
        "window_end",
        "paths",
        "estimate",
        "estimate_stderr",
        "target",
        "target_stderr",
        "regulator_rate",
        "relative_gap",
    ]);
    t.push(vec![
        r.coordinate.to_string(),
        fmt_f64(r.window_start),
        fmt_f64(r.window_end),
        r.paths.to_string(),
        fmt_f64(r.estimate),
        fmt_f64(r.estimate_stderr),
        fmt_f64(r.target),
        fmt_f64(r.target_stderr),
        fmt_f64(r.regulator_rate),
        fmt_f64(r.relative_gap()),
    ]);
    out.table("lossrate", t);
    Ok(())
}
