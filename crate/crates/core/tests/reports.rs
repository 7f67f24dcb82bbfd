use cran_cache::experiments::{self, ExperimentConfig, ExperimentReport, ReportFormat, Scheme};

fn small() -> ExperimentConfig {
    let mut config = ExperimentConfig::paper_geometry(4, 2, 2);
    config.eval_realizations = 3;
    config.problem.seed = 6;
    config
}

fn uniform_report() -> ExperimentReport {
    let config = small();
    let eval = config.eval_channels().unwrap();
    experiments::run_uniform_baseline(&config, &eval.h).unwrap()
}

#[test]
fn uniform_baseline_report_is_consistent() {
    let r = uniform_report();
    assert_eq!(r.scheme, Scheme::Uniform);
    assert_eq!(r.rates.len(), 3);
    assert_eq!(r.cache, vec![10.0; 12]);
    let mean = r.rates.iter().sum::<f64>() / 3.0;
    assert!((r.mean - mean).abs() <= 1e-12 * mean);
    assert_eq!(r.cdf.last().unwrap().1, 1.0);
    assert_eq!(r.eval_seed, 7);
}

#[test]
fn json_round_trip() {
    let r = uniform_report();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    experiments::emit_report(&r, &path, ReportFormat::Json).unwrap();
    let back: ExperimentReport = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back, r);
}

#[test]
fn csv_has_a_row_per_realization() {
    let r = uniform_report();
    let text = experiments::report_csv(&r);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "realization,sum_rate,cdf_rate,cdf_probability");
    assert_eq!(lines.len(), 1 + r.rates.len());
}

#[test]
fn empty_report_writes_nothing() {
    let mut r = uniform_report();
    r.rates.clear();
    r.realizations.clear();
    r.cdf.clear();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    assert!(experiments::emit_report(&r, &path, ReportFormat::Csv).is_err());
    assert!(!path.exists());
}

#[test]
fn single_realization_cdf_is_one_step() {
    let mut config = small();
    config.eval_realizations = 1;
    let eval = config.eval_channels().unwrap();
    let r = experiments::run_uniform_baseline(&config, &eval.h).unwrap();
    assert_eq!(r.cdf, vec![(r.rates[0], 1.0)]);
}

#[test]
fn absolute_rates_scale_by_bandwidth() {
    let mut config = small();
    config.eval_realizations = 1;
    let eval = config.eval_channels().unwrap();
    let per_hz = experiments::run_uniform_baseline(&config, &eval.h).unwrap();
    config.bandwidth_hz = Some(20e6);
    let abs = experiments::run_uniform_baseline(&config, &eval.h).unwrap();
    assert_eq!(abs.unit, "bit/s");
    assert!((abs.rates[0] - per_hz.rates[0] * 20e6).abs() <= 1e-9 * abs.rates[0]);
}
