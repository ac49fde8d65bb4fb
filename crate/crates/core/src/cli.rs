//! Command-line front end: `verify`, `sample` and `estimate`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::exact::exact_expectation;
use crate::monte_carlo::{mc_expectation, sample_configurations, SamplerConfig};
use crate::verifier::{run_suite, to_json, BackendSelection, RunOptions, SuiteConfig};
use crate::{Error, ExactEngine, FunctionalSpec, GroundSpace};

#[derive(Parser)]
#[command(
    name = "poisson-calculus",
    version,
    about = "Operator calculus on finite Poisson spaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteBackend {
    Exact,
    Mc,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimateBackend {
    Exact,
    Mc,
}

#[derive(Subcommand)]
enum Command {
    /// Run the identity suite; exits 0 iff every check passes.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        backend: SuiteBackend,
        /// Overrides mc.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides mc.samples.
        #[arg(long)]
        samples: Option<u64>,
        /// Overrides mc.workers.
        #[arg(long)]
        workers: Option<usize>,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Record wall time per check (reports are then not byte-stable).
        #[arg(long)]
        timings: bool,
    },
    /// Draw configurations and print them as JSON lines.
    Sample {
        /// Suite config or a bare `{"weights": [...]}` space.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        count: u64,
        /// Defaults to mc.seed of the config, or 0.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate E F for a registry functional and print the result as JSON.
    Estimate {
        #[arg(long)]
        functional: String,
        /// JSON object of parameters, e.g. '{"B":[1,2],"degree":2}'.
        #[arg(long, default_value = "{}")]
        params: String,
        /// Space to use; the canonical space (0.5, 1.0, 1.5) if omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "mc")]
        backend: EstimateBackend,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

/// Space, truncation and sampler settings from either config shape.
fn load_settings(path: &Path) -> Result<SuiteConfig, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        key: path.display().to_string(),
        message: e.to_string(),
    })?;
    let is_suite = serde_json::from_str::<serde_json::Value>(&text)
        .map(|v| v.get("space").is_some())
        .unwrap_or(true);
    if is_suite {
        return SuiteConfig::from_json(&text);
    }
    let space: GroundSpace = serde_json::from_str(&text).map_err(|e| Error::Config {
        key: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    let mut cfg = SuiteConfig::default_suite();
    cfg.space = space;
    cfg.randomized_space = None;
    cfg.cases.clear();
    Ok(cfg)
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

fn io_error(e: std::io::Error) -> Error {
    Error::Config {
        key: "output".into(),
        message: e.to_string(),
    }
}

fn verify(
    io: &mut Io<'_>,
    config: &Path,
    backend: SuiteBackend,
    overrides: (Option<u64>, Option<u64>, Option<usize>),
    report: Option<&Path>,
    timings: bool,
) -> Result<bool, Error> {
    let mut cfg = SuiteConfig::from_path(config)?;
    let (seed, samples, workers) = overrides;
    cfg.mc.seed = seed.unwrap_or(cfg.mc.seed);
    cfg.mc.samples = samples.unwrap_or(cfg.mc.samples);
    cfg.mc.workers = workers.unwrap_or(cfg.mc.workers);
    cfg.validate()?;
    let backends = match backend {
        SuiteBackend::Exact => BackendSelection::Exact,
        SuiteBackend::Mc => BackendSelection::Mc,
        SuiteBackend::Both => BackendSelection::Both,
    };
    let reports = run_suite(&cfg, &RunOptions { backends, timings })?;
    for r in &reports {
        writeln!(io.err, "{}", r.summary()).map_err(io_error)?;
    }
    let failed = reports.iter().filter(|r| !r.pass).count();
    writeln!(io.err, "{} checks, {} failed", reports.len(), failed).map_err(io_error)?;
    let json = to_json(&reports);
    match report {
        Some(path) => std::fs::write(path, json).map_err(|e| Error::Config {
            key: path.display().to_string(),
            message: e.to_string(),
        })?,
        None => io.out.write_all(json.as_bytes()).map_err(io_error)?,
    }
    Ok(failed == 0)
}

fn sample(io: &mut Io<'_>, config: &Path, count: u64, seed: Option<u64>) -> Result<(), Error> {
    let cfg = load_settings(config)?;
    let seed = seed.unwrap_or(cfg.mc.seed);
    let mut out = std::io::BufWriter::new(&mut *io.out);
    for eta in sample_configurations(&cfg.space, seed, count) {
        let line = serde_json::to_string(&eta).expect("configurations serialize");
        writeln!(out, "{line}").map_err(io_error)?;
    }
    out.flush().map_err(io_error)
}

fn estimate(
    io: &mut Io<'_>,
    functional: &str,
    params: &str,
    config: Option<&Path>,
    backend: EstimateBackend,
    overrides: (Option<u64>, Option<u64>, Option<usize>),
) -> Result<(), Error> {
    let cfg = match config {
        Some(p) => load_settings(p)?,
        None => {
            let mut c = SuiteConfig::default_suite();
            c.randomized_space = None;
            c.cases.clear();
            c
        }
    };
    let f = FunctionalSpec::from_name_and_params(functional, params)?.build(&cfg.space)?;
    let value = match backend {
        EstimateBackend::Mc => {
            let (seed, samples, workers) = overrides;
            let sc = SamplerConfig::new(
                seed.unwrap_or(cfg.mc.seed),
                samples.unwrap_or(cfg.mc.samples),
                workers.unwrap_or(cfg.mc.workers),
            );
            serde_json::to_value(mc_expectation(&f, &cfg.space, &sc)?)
        }
        EstimateBackend::Exact => {
            let engine = ExactEngine::new(&cfg.space, cfg.truncation.tol, cfg.truncation.budget)?;
            let v = exact_expectation(&f, engine.table());
            Ok(serde_json::json!({
                "mean": v.value,
                "error_bound": v.error_bound,
                "certified": v.certified,
                "state_count": engine.table().len(),
            }))
        }
    }
    .expect("estimates serialize");
    writeln!(io.out, "{value}").map_err(io_error)
}

/// Parses `args` (program name first) and runs the command.
///
/// Returns the process exit code: 0 on success (for `verify`, every check
/// passed), 1 when some check failed, 2 on usage or config errors.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return e.exit_code() as u8;
        }
    };
    let mut io = Io { out, err };
    let result = match cli.command {
        Command::Verify {
            config,
            backend,
            seed,
            samples,
            workers,
            report,
            timings,
        } => verify(
            &mut io,
            &config,
            backend,
            (seed, samples, workers),
            report.as_deref(),
            timings,
        ),
        Command::Sample {
            config,
            count,
            seed,
        } => sample(&mut io, &config, count, seed).map(|_| true),
        Command::Estimate {
            functional,
            params,
            config,
            backend,
            seed,
            samples,
            workers,
        } => estimate(
            &mut io,
            &functional,
            &params,
            config.as_deref(),
            backend,
            (seed, samples, workers),
        )
        .map(|_| true),
    };
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let _ = writeln!(io.err, "error: {e}");
            2
        }
    }
}
