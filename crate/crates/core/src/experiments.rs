//! Scheme comparisons: the optimized cache allocation against uniform
//! caching, time-division delivery and interference-blind design, each
//! evaluated on the same held-out channel realizations.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{self, ChannelSet};
use crate::config::ProblemConfig;
use crate::error::{Error, Result};
use crate::formulation::{FileCatalog, Formulation, PowerBudget};
use crate::linalg::CMat;
use crate::model::{self, InterferenceModel, PrimalState};
use crate::sca::{self, ScaOptions};

/// Base-station distances of the reference layout: four clusters of three.
pub const PAPER_DISTANCES: [f64; 12] = [
    160.0, 260.0, 360.0, 200.0, 280.0, 360.0, 160.0, 280.0, 400.0, 240.0, 320.0, 400.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Proposed,
    Uniform,
    TimeDivision,
    IgnoreInterference,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::Proposed,
        Scheme::Uniform,
        Scheme::TimeDivision,
        Scheme::IgnoreInterference,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Uniform => "uniform",
            Scheme::TimeDivision => "time_division",
            Scheme::IgnoreInterference => "ignore_interference",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown scheme {s:?}")))
    }
}

/// A problem instance together with its geometry and evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub problem: ProblemConfig,
    /// Distance of every BS from the computation center, meters.
    pub distances: Vec<f64>,
    #[serde(default = "defaults::antenna_gain_db")]
    pub antenna_gain_db: f64,
    #[serde(default = "defaults::eval_realizations")]
    pub eval_realizations: usize,
    /// Seed of the evaluation channels; `seed + 1` when absent.
    #[serde(default)]
    pub eval_seed: Option<u64>,
    #[serde(default = "defaults::baselines")]
    pub baselines: Vec<Scheme>,
    /// Multiply rates by this bandwidth (Hz) to report bit/s instead of
    /// bit/s/Hz.
    #[serde(default)]
    pub bandwidth_hz: Option<f64>,
    /// Files per cluster for the multi-file problem.
    #[serde(default)]
    pub catalog: Option<FileCatalog>,
    /// Let every request tuple reuse the same channel samples instead of
    /// drawing its own.
    #[serde(default)]
    pub shared_tuple_channels: bool,
}

mod defaults {
    use super::Scheme;

    pub fn antenna_gain_db() -> f64 {
        17.0
    }
    pub fn eval_realizations() -> usize {
        40
    }
    pub fn baselines() -> Vec<Scheme> {
        vec![Scheme::Uniform, Scheme::TimeDivision, Scheme::IgnoreInterference]
    }
}

impl ExperimentConfig {
    /// Reference layout (4 clusters × 3 BSs, 17 dBi, −150 dBm/Hz over 20 MHz)
    /// with the given antenna and sample counts.
    pub fn paper_geometry(tx_antennas: usize, rx_antennas: usize, samples: usize) -> Self {
        let mut problem = ProblemConfig::uniform(4, 3, tx_antennas, rx_antennas, samples);
        let noise = channels::noise_power(-150.0, 20e6).expect("valid link budget");
        problem.noise = vec![noise; 12];
        ExperimentConfig {
            problem,
            distances: PAPER_DISTANCES.to_vec(),
            antenna_gain_db: defaults::antenna_gain_db(),
            eval_realizations: defaults::eval_realizations(),
            eval_seed: None,
            baselines: defaults::baselines(),
            bandwidth_hz: None,
            catalog: None,
            shared_tuple_channels: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        if self.distances.len() != self.problem.base_stations {
            return Err(Error::InvalidConfig(format!(
                "{} distances for K={}",
                self.distances.len(),
                self.problem.base_stations
            )));
        }
        if let Some(cat) = &self.catalog {
            cat.validate(self.problem.clusters)?;
        }
        if let Some(b) = self.bandwidth_hz {
            if !(b > 0.0) {
                return Err(Error::InvalidConfig(format!("bandwidth_hz must be positive, got {b}")));
            }
        }
        Ok(())
    }

    pub fn eval_seed(&self) -> u64 {
        self.eval_seed.unwrap_or(self.problem.seed.wrapping_add(1))
    }

    pub fn training_channels(&self) -> Result<ChannelSet> {
        channels::sample_channels(&self.problem, &self.distances, self.antenna_gain_db, self.problem.seed)
    }

    pub fn eval_channels(&self) -> Result<ChannelSet> {
        channels::sample_channels_n(
            &self.problem,
            self.eval_realizations,
            &self.distances,
            self.antenna_gain_db,
            self.eval_seed(),
        )
    }

    /// Training samples for each request tuple of the catalog, `[f][t][k]`.
    /// Tuple `f` uses samples `f·T .. (f+1)·T` of one long draw unless the
    /// channels are shared.
    pub fn multifile_channels(&self) -> Result<Vec<Vec<Vec<CMat>>>> {
        let cat = self
            .catalog
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("no file catalog configured".into()))?;
        let tuples = cat.tuples().len();
        let t_count = self.problem.samples;
        let draws = if self.shared_tuple_channels { t_count } else { tuples * t_count };
        let set = channels::sample_channels_n(
            &self.problem,
            draws,
            &self.distances,
            self.antenna_gain_db,
            self.problem.seed,
        )?;
        Ok((0..tuples)
            .map(|f| {
                let start = if self.shared_tuple_channels { 0 } else { f * t_count };
                set.h[start..start + t_count].to_vec()
            })
            .collect())
    }

    fn rate_unit(&self) -> (&'static str, f64) {
        match self.bandwidth_hz {
            Some(b) => ("bit/s", b),
            None => ("bit/s/Hz", 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub realization: usize,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scheme: Scheme,
    pub unit: String,
    /// Sum rate of every evaluation realization that solved, in order.
    pub rates: Vec<f64>,
    /// Index of every entry of `rates`.
    pub realizations: Vec<usize>,
    /// Empirical CDF as (rate, P[rate ≤ value]) steps.
    pub cdf: Vec<(f64, f64)>,
    pub mean: f64,
    /// Cache allocation used for delivery, one entry per BS.
    pub cache: Vec<f64>,
    pub fingerprint: String,
    pub train_seed: u64,
    pub eval_seed: u64,
    pub failures: Vec<Failure>,
}

/// Right-continuous empirical CDF of `values`.
pub fn empirical_cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, (i + 1) as f64 / n))
        .collect()
}

fn assemble(
    config: &ExperimentConfig,
    scheme: Scheme,
    cache: Vec<f64>,
    outcomes: Vec<Result<f64>>,
) -> Result<ExperimentReport> {
    let (unit, scale) = config.rate_unit();
    let mut rates = Vec::new();
    let mut realizations = Vec::new();
    let mut failures = Vec::new();
    for (r, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(bits) => {
                rates.push(bits * scale);
                realizations.push(r);
            }
            Err(e) => {
                log::warn!("{scheme}: realization {r} failed: {e}");
                failures.push(Failure {
                    realization: r,
                    kind: e.kind().into(),
                    message: e.to_string(),
                });
            }
        }
    }
    if rates.is_empty() && !failures.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{scheme}: all {} realizations failed, first: {}",
            failures.len(),
            failures[0].message
        )));
    }
    let mean = if rates.is_empty() {
        f64::NAN
    } else {
        rates.iter().sum::<f64>() / rates.len() as f64
    };
    Ok(ExperimentReport {
        scheme,
        unit: unit.into(),
        cdf: empirical_cdf(&rates),
        rates,
        realizations,
        mean,
        cache,
        fingerprint: config.problem.fingerprint(),
        train_seed: config.problem.seed,
        eval_seed: config.eval_seed(),
        failures,
    })
}

fn check_eval(config: &ExperimentConfig, eval: &[Vec<CMat>]) -> Result<()> {
    let p = &config.problem;
    for (r, hs) in eval.iter().enumerate() {
        if hs.len() != p.base_stations
            || hs.iter().any(|h| h.nrows() != p.rx_antennas || h.ncols() != p.tx_antennas)
        {
            return Err(Error::InvalidInput(format!(
                "evaluation realization {r} does not match K={} N={} M={}",
                p.base_stations, p.rx_antennas, p.tx_antennas
            )));
        }
    }
    Ok(())
}

/// Delivery at fixed caches on every realization, in parallel, with results
/// kept in realization order. `evaluate` turns the designed beamformers into
/// a sum rate in bits.
fn deliver<F>(
    config: &ExperimentConfig,
    eval: &[Vec<CMat>],
    cache: &[f64],
    model: InterferenceModel,
    power: PowerBudget,
    evaluate: F,
) -> Vec<Result<f64>>
where
    F: Fn(&[CMat], &[CMat]) -> Result<f64> + Sync,
{
    eval.par_iter()
        .map(|h| {
            let out = sca::solve_mcmb_with(&config.problem, h, cache, model, power)?;
            evaluate(h, &out.beamformers)
        })
        .collect()
}

fn full_rate_bits<'a>(
    config: &'a ExperimentConfig,
    cache: &[f64],
    model: InterferenceModel,
    scale: f64,
) -> impl Fn(&[CMat], &[CMat]) -> Result<f64> + Sync + 'a {
    let cache = cache.to_vec();
    move |h: &[CMat], v: &[CMat]| {
        let primal = PrimalState {
            cache: cache.clone(),
            beamformers: vec![v.to_vec()],
            eta: vec![vec![0.0; config.problem.clusters]],
        };
        let report = model::sum_rate_with(&config.problem, &[h.to_vec()], &primal, model)?;
        Ok(report.sum_rate_bits[0] * scale)
    }
}

/// Optimized caches from the training samples, then full-interference
/// delivery on every evaluation realization.
pub fn run_proposed(config: &ExperimentConfig, train: &[Vec<CMat>], eval: &[Vec<CMat>]) -> Result<ExperimentReport> {
    check_eval(config, eval)?;
    let options = ScaOptions::cache_allocation(&config.problem);
    let solved = sca::solve_cache_allocation(&config.problem, train, &options)?;
    let cache = solved.primal.cache;
    run_with_cache(config, Scheme::Proposed, eval, cache)
}

/// Delivery with the given caches under the full interference model.
pub fn run_with_cache(
    config: &ExperimentConfig,
    scheme: Scheme,
    eval: &[Vec<CMat>],
    cache: Vec<f64>,
) -> Result<ExperimentReport> {
    check_eval(config, eval)?;
    let outcomes = deliver(
        config,
        eval,
        &cache,
        InterferenceModel::Full,
        PowerBudget::Sum,
        full_rate_bits(config, &cache, InterferenceModel::Full, 1.0),
    );
    assemble(config, scheme, cache, outcomes)
}

/// C_k = C_tot / K, capped at the file size.
pub fn uniform_cache(config: &ProblemConfig) -> Vec<f64> {
    let share = config.cache_budget / config.base_stations as f64;
    (0..config.base_stations)
        .map(|k| share.min(config.file_size_of_bs(k)))
        .collect()
}

pub fn run_uniform_baseline(config: &ExperimentConfig, eval: &[Vec<CMat>]) -> Result<ExperimentReport> {
    let cache = uniform_cache(&config.problem);
    run_with_cache(config, Scheme::Uniform, eval, cache)
}

/// Every cluster transmits alone in 1/G of the time with the full power
/// budget, so no interference arises; caches are optimized jointly for the
/// scaled interference-free rates.
pub fn run_timedivision_baseline(
    config: &ExperimentConfig,
    train: &[Vec<CMat>],
    eval: &[Vec<CMat>],
) -> Result<ExperimentReport> {
    check_eval(config, eval)?;
    let p = &config.problem;
    let share = 1.0 / p.clusters as f64;
    let form = Formulation::cache_allocation_with(p, train.len(), InterferenceModel::Ignored, PowerBudget::PerCluster, share);
    let solved = sca::solve_formulation(&form, train, &ScaOptions::cache_allocation(p))?;
    let cache = solved.primal.cache;
    let outcomes = deliver(
        config,
        eval,
        &cache,
        InterferenceModel::Ignored,
        PowerBudget::PerCluster,
        full_rate_bits(config, &cache, InterferenceModel::Ignored, share),
    );
    assemble(config, Scheme::TimeDivision, cache, outcomes)
}

/// Caches and beamformers designed as if other clusters were silent, rates
/// measured with the interference they actually cause.
pub fn run_ignore_interference_baseline(
    config: &ExperimentConfig,
    train: &[Vec<CMat>],
    eval: &[Vec<CMat>],
) -> Result<ExperimentReport> {
    check_eval(config, eval)?;
    let p = &config.problem;
    let form = Formulation::cache_allocation_with(p, train.len(), InterferenceModel::Ignored, PowerBudget::Sum, 1.0);
    let solved = sca::solve_formulation(&form, train, &ScaOptions::cache_allocation(p))?;
    let cache = solved.primal.cache;
    let outcomes = deliver(
        config,
        eval,
        &cache,
        InterferenceModel::Ignored,
        PowerBudget::Sum,
        full_rate_bits(config, &cache, InterferenceModel::Full, 1.0),
    );
    assemble(config, Scheme::IgnoreInterference, cache, outcomes)
}

pub fn run_scheme(
    config: &ExperimentConfig,
    scheme: Scheme,
    train: &[Vec<CMat>],
    eval: &[Vec<CMat>],
) -> Result<ExperimentReport> {
    match scheme {
        Scheme::Proposed => run_proposed(config, train, eval),
        Scheme::Uniform => run_uniform_baseline(config, eval),
        Scheme::TimeDivision => run_timedivision_baseline(config, train, eval),
        Scheme::IgnoreInterference => run_ignore_interference_baseline(config, train, eval),
    }
}

/// The proposed scheme followed by every configured baseline, all on the
/// same training and evaluation channels.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ExperimentReport>> {
    config.validate()?;
    let train = config.training_channels()?;
    let eval = config.eval_channels()?;
    let mut schemes = vec![Scheme::Proposed];
    schemes.extend(config.baselines.iter().copied().filter(|s| *s != Scheme::Proposed));
    schemes
        .into_iter()
        .map(|s| run_scheme(config, s, &train.h, &eval.h))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(Error::InvalidInput(format!("unknown format {s:?}, expected csv or json"))),
        }
    }
}

/// One row per realization: its rate and the matching CDF step.
pub fn report_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("realization,sum_rate,cdf_rate,cdf_probability\n");
    for (i, (r, rate)) in report.realizations.iter().zip(&report.rates).enumerate() {
        let (x, p) = report.cdf[i];
        out.push_str(&format!("{r},{rate:?},{x:?},{p:?}\n"));
    }
    out
}

pub fn emit_report(report: &ExperimentReport, path: &Path, format: ReportFormat) -> Result<()> {
    if report.rates.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: report has no realizations, nothing written",
            report.scheme
        )));
    }
    let text = match format {
        ReportFormat::Csv => report_csv(report),
        ReportFormat::Json => serde_json::to_string_pretty(report)? + "\n",
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_steps() {
        let cdf = empirical_cdf(&[3.0, 1.0, 2.0, 2.0]);
        assert_eq!(cdf, vec![(1.0, 0.25), (2.0, 0.5), (2.0, 0.75), (3.0, 1.0)]);
        assert_eq!(empirical_cdf(&[5.0]), vec![(5.0, 1.0)]);
    }

    #[test]
    fn uniform_split() {
        let cfg = ProblemConfig::uniform(4, 3, 8, 2, 1);
        assert_eq!(uniform_cache(&cfg), vec![10.0; 12]);
    }

    #[test]
    fn scheme_names_roundtrip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(json, format!("\"{}\"", s.name()));
        }
    }

    #[test]
    fn config_json_roundtrip() {
        let cfg = ExperimentConfig::paper_geometry(8, 2, 20);
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"P_tot\""));
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }
}
