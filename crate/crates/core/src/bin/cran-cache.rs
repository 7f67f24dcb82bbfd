use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use cran_cache::channels::{self, ChannelSet};
use cran_cache::experiments::{self, ExperimentConfig, ExperimentReport, ReportFormat, Scheme};
use cran_cache::formulation::PowerBudget;
use cran_cache::linalg::CMat;
use cran_cache::model::InterferenceModel;
use cran_cache::sca::{self, ScaOptions, SolveTrace};
use cran_cache::verify::{self, OracleResult};
use cran_cache::{Error, Result};

/// Cache-size allocation and delivery beamforming for cloud-RAN base stations.
#[derive(Parser)]
#[command(name = "cran-cache", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment config JSON; the reference 4×3 layout with M=8, N=2, T=20
    /// when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's training seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// csv or json.
    #[arg(long, global = true, default_value = "json")]
    format: ReportFormat,
    /// Also write the outer iteration trace as CSV.
    #[arg(long, global = true)]
    trace: bool,
    /// Record wall-clock time per outer iteration in the trace. Makes the
    /// trace non-reproducible.
    #[arg(long, global = true)]
    timing: bool,
    /// Report rates in bit/s over 20 MHz unless the config sets a bandwidth.
    #[arg(long, global = true)]
    absolute: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write the training and evaluation channel sets.
    GenerateChannels,
    /// Optimize caches on the training channels.
    SolveCache {
        /// Training channels file instead of drawing them from the seed.
        #[arg(long)]
        channels: Option<PathBuf>,
    },
    /// Design delivery beamformers for one evaluation realization.
    SolveMcmb {
        /// Cache file from solve-cache or round-cache; uniform split when
        /// absent.
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        realization: usize,
        /// Evaluation channels file instead of drawing them from the seed.
        #[arg(long)]
        channels: Option<PathBuf>,
    },
    /// The proposed scheme and every configured baseline.
    RunExperiment,
    /// Only the configured baselines.
    RunBaselines,
    /// Run the numerical oracles and print their results.
    Verify {
        /// Probes per oracle instance.
        #[arg(long, default_value_t = 200)]
        probes: usize,
    },
    /// Round a cache file to integers within the cache budget.
    RoundCache {
        #[arg(long)]
        input: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            report_error("usage", &e.to_string());
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(e.kind(), &e.to_string());
            ExitCode::FAILURE
        }
    }
}

fn report_error(kind: &str, message: &str) {
    eprintln!("{}", json!({ "error": kind, "message": message.trim() }));
}

fn run(cli: &Cli) -> Result<()> {
    let c = &cli.common;
    let config = load_config(c)?;
    std::fs::create_dir_all(&c.out).map_err(|e| io_error(&c.out, e))?;
    match &cli.command {
        Command::GenerateChannels => generate_channels(c, &config),
        Command::SolveCache { channels } => solve_cache(c, &config, channels.as_deref()),
        Command::SolveMcmb {
            cache,
            realization,
            channels,
        } => solve_mcmb(c, &config, cache.as_deref(), *realization, channels.as_deref()),
        Command::RunExperiment => {
            let reports = experiments::run_experiment(&config)?;
            write_reports(c, &reports)
        }
        Command::RunBaselines => {
            let train = config.training_channels()?;
            let eval = config.eval_channels()?;
            let reports = config
                .baselines
                .iter()
                .filter(|s| **s != Scheme::Proposed)
                .map(|&s| experiments::run_scheme(&config, s, &train.h, &eval.h))
                .collect::<Result<Vec<_>>>()?;
            write_reports(c, &reports)
        }
        Command::Verify { probes } => run_verify(c, &config, *probes),
        Command::RoundCache { input } => round_cache(c, &config, input),
    }
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut config = match &c.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::paper_geometry(8, 2, 20),
    };
    if let Some(seed) = c.seed {
        config.problem.seed = seed;
    }
    if c.absolute && config.bandwidth_hz.is_none() {
        config.bandwidth_hz = Some(20e6);
    }
    config.validate()?;
    Ok(config)
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn sca_options(c: &Common, base: ScaOptions) -> ScaOptions {
    ScaOptions {
        timing: c.timing,
        ..base
    }
}

fn write_trace(c: &Common, name: &str, trace: &SolveTrace) -> Result<()> {
    if c.trace {
        write(&c.out.join(name), &trace.to_csv())?;
    }
    Ok(())
}

fn load_channel_file(path: &Path, config: &ExperimentConfig) -> Result<ChannelSet> {
    let set = channels::load_channels(path)?;
    set.check_against(&config.problem)?;
    Ok(set)
}

fn generate_channels(c: &Common, config: &ExperimentConfig) -> Result<()> {
    channels::save_channels(&config.training_channels()?, &c.out.join("train_channels.txt"))?;
    channels::save_channels(&config.eval_channels()?, &c.out.join("eval_channels.txt"))
}

#[derive(Serialize)]
struct CacheSolution {
    /// One value per BS, or `[k][file]` for the multi-file problem.
    cache: Value,
    objective: f64,
    outer_iterations: usize,
    converged: bool,
    stalled: bool,
    certificate: f64,
    fingerprint: String,
    seed: u64,
}

fn solve_cache(c: &Common, config: &ExperimentConfig, channel_file: Option<&Path>) -> Result<()> {
    let p = &config.problem;
    let options = sca_options(c, ScaOptions::cache_allocation(p));
    let (cache, result) = match &config.catalog {
        Some(catalog) => {
            if channel_file.is_some() {
                return Err(Error::InvalidInput(
                    "a channels file is not supported for the multi-file problem".into(),
                ));
            }
            let solved = sca::solve_multifile(p, catalog, &config.multifile_channels()?, &options)?;
            (json!(solved.cache), solved.result)
        }
        None => {
            let train = match channel_file {
                Some(path) => load_channel_file(path, config)?,
                None => config.training_channels()?,
            };
            let result = sca::solve_cache_allocation(p, &train.h, &options)?;
            (json!(result.primal.cache), result)
        }
    };
    write_trace(c, "cache_trace.csv", &result.trace)?;
    let solution = CacheSolution {
        cache,
        objective: result.trace.rows.last().map_or(f64::NAN, |r| r.objective),
        outer_iterations: result.trace.rows.len() - 1,
        converged: result.converged,
        stalled: result.stalled,
        certificate: result.certificate,
        fingerprint: p.fingerprint(),
        seed: p.seed,
    };
    match c.format {
        ReportFormat::Json => write_json(&c.out.join("cache.json"), &solution),
        ReportFormat::Csv => {
            let mut text = String::from("base_station,file,cache\n");
            for (k, row) in cache_rows(&solution.cache)?.iter().enumerate() {
                for (f, v) in row.iter().enumerate() {
                    text.push_str(&format!("{k},{f},{v:?}\n"));
                }
            }
            write(&c.out.join("cache.csv"), &text)
        }
    }
}

/// Per-BS rows of a cache value: a flat list is one file per BS.
fn cache_rows(value: &Value) -> Result<Vec<Vec<f64>>> {
    let bad = || Error::InvalidInput("cache must be a list of numbers or of lists of numbers".into());
    let items = value.as_array().ok_or_else(bad)?;
    items
        .iter()
        .map(|item| match item {
            Value::Array(row) => row.iter().map(|x| x.as_f64().ok_or_else(bad)).collect(),
            x => Ok(vec![x.as_f64().ok_or_else(bad)?]),
        })
        .collect()
}

fn read_cache_value(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let value: Value = serde_json::from_str(&text)?;
    match value {
        Value::Object(mut map) => map
            .remove("cache")
            .ok_or_else(|| Error::InvalidInput(format!("{}: no \"cache\" field", path.display()))),
        v => Ok(v),
    }
}

fn solve_mcmb(
    c: &Common,
    config: &ExperimentConfig,
    cache_file: Option<&Path>,
    realization: usize,
    channel_file: Option<&Path>,
) -> Result<()> {
    let p = &config.problem;
    let cache: Vec<f64> = match cache_file {
        Some(path) => {
            let rows = cache_rows(&read_cache_value(path)?)?;
            if rows.iter().any(|r| r.len() != 1) {
                return Err(Error::InvalidInput("delivery needs one cache value per BS".into()));
            }
            rows.into_iter().map(|r| r[0]).collect()
        }
        None => experiments::uniform_cache(p),
    };
    let eval = match channel_file {
        Some(path) => channels::load_channels(path)?,
        None => config.eval_channels()?,
    };
    let h: &Vec<CMat> = eval.h.get(realization).ok_or_else(|| {
        Error::InvalidInput(format!("realization {realization} out of range, {} available", eval.h.len()))
    })?;
    let delivered = sca::solve_mcmb_with(p, h, &cache, InterferenceModel::Full, PowerBudget::Sum)?;
    write_trace(c, "mcmb_trace.csv", &delivered.trace)?;
    let scale = config.bandwidth_hz.unwrap_or(1.0);
    let unit = if config.bandwidth_hz.is_some() { "bit/s" } else { "bit/s/Hz" };
    let sum_rate = delivered.report.sum_rate_bits[0] * scale;
    let cluster_rates: Vec<f64> = delivered
        .report
        .cluster_rate
        .iter()
        .map(|r| r[0] / std::f64::consts::LN_2 * scale)
        .collect();
    let beam_power: Vec<f64> = delivered
        .beamformers
        .iter()
        .map(cran_cache::linalg::frobenius_sq)
        .collect();
    match c.format {
        ReportFormat::Json => write_json(
            &c.out.join("delivery.json"),
            &json!({
                "realization": realization,
                "unit": unit,
                "sum_rate": sum_rate,
                "cluster_rates": cluster_rates,
                "beam_power": beam_power,
                "cache": cache,
                "outer_iterations": delivered.trace.rows.len() - 1,
                "converged": delivered.converged,
            }),
        ),
        ReportFormat::Csv => {
            let mut text = String::from("cluster,rate,beam_power\n");
            for (g, (r, pw)) in cluster_rates.iter().zip(&beam_power).enumerate() {
                text.push_str(&format!("{g},{r:?},{pw:?}\n"));
            }
            write(&c.out.join("delivery.csv"), &text)
        }
    }
}

fn write_reports(c: &Common, reports: &[ExperimentReport]) -> Result<()> {
    let ext = match c.format {
        ReportFormat::Csv => "csv",
        ReportFormat::Json => "json",
    };
    for report in reports {
        experiments::emit_report(report, &c.out.join(format!("{}.{ext}", report.scheme.name())), c.format)?;
    }
    let summary: Vec<Value> = reports
        .iter()
        .map(|r| {
            json!({
                "scheme": r.scheme,
                "unit": r.unit,
                "mean": r.mean,
                "realizations": r.rates.len(),
                "failures": r.failures.len(),
                "cache": r.cache,
            })
        })
        .collect();
    write_json(&c.out.join("summary.json"), &summary)
}

fn run_verify(c: &Common, config: &ExperimentConfig, probes: usize) -> Result<()> {
    let seed = config.problem.seed;
    let mut results: Vec<OracleResult> = Vec::new();
    let small = cran_cache::ProblemConfig::uniform(2, 2, 4, 1, 2);
    // probe channels are unit-variance with no path loss, so unit noise keeps
    // their SNR in the range the configured geometry produces
    let mut shaped = config.problem.clone();
    shaped.noise = vec![1.0; shaped.base_stations];
    for (i, instance) in [shaped, small.clone()].iter().enumerate() {
        results.extend(verify::check_prop1(instance, probes, seed.wrapping_add(i as u64))?);
    }
    results.push(verify::check_prop2(&small, probes.clamp(1, 50), seed)?);
    results.push(verify::check_fixed_beam_cache(seed, 1, 1e-2)?);
    for r in &results {
        println!("{}", r.line());
    }
    write_json(&c.out.join("verify.json"), &results)?;
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(format!("oracle checks failed: {}", failed.join(", "))))
    }
}

fn round_cache(c: &Common, config: &ExperimentConfig, input: &Path) -> Result<()> {
    let rows = cache_rows(&read_cache_value(input)?)?;
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    let rounded = sca::round_cache(&flat, config.problem.cache_budget);
    let mut it = rounded.into_iter();
    let shaped: Vec<Vec<i64>> = rows.iter().map(|r| it.by_ref().take(r.len()).collect()).collect();
    let cache = if shaped.iter().all(|r| r.len() == 1) {
        json!(shaped.iter().map(|r| r[0]).collect::<Vec<_>>())
    } else {
        json!(shaped)
    };
    write_json(&c.out.join("cache_rounded.json"), &json!({ "cache": cache }))
}
