use cran_cache::experiments::{self, ExperimentConfig, Scheme};
use cran_cache::formulation::FileCatalog;
use cran_cache::linalg::{c64, CMat};
use cran_cache::sca::{self, ScaOptions};
use cran_cache::ProblemConfig;

/// The default delivery prox weights suit path-loss channels against
/// −150 dBm/Hz noise; with unit-gain channels and unit noise the surrogate
/// curvature is orders of magnitude smaller, so ρ2 = 10 would stall each step.
fn unit_scale(config: ProblemConfig) -> ProblemConfig {
    ProblemConfig {
        mcmb_rho1: 1.0,
        mcmb_rho2: 0.1,
        ..config
    }
}

#[test]
fn single_link_reaches_capacity() {
    // one BS, one cluster, nothing cached: the best beamformer is matched
    // filtering with all power, giving log2(1 + P |h|² / σ²)
    for (i, h) in [
        CMat::from_row_slice(1, 2, &[c64(0.3, -0.4), c64(0.5, 0.1)]),
        CMat::from_row_slice(1, 3, &[c64(1.2, 0.0), c64(-0.2, 0.7), c64(0.05, 0.3)]),
    ]
    .into_iter()
    .enumerate()
    {
        let mut config = unit_scale(ProblemConfig::uniform(1, 1, h.ncols(), 1, 1));
        config.cache_budget = 0.0;
        let out = sca::solve_mcmb(&config, std::slice::from_ref(&h), &[0.0]).unwrap();
        let capacity = (1.0 + config.power_budget * h.norm_squared() / config.noise[0]).log2();
        let got = out.report.sum_rate_bits[0];
        assert!((got - capacity).abs() <= 1e-3 * capacity, "case {i}: {got} vs {capacity}");
    }
}

#[test]
fn caching_scales_the_single_link_rate() {
    let h = CMat::from_row_slice(1, 2, &[c64(0.3, -0.4), c64(0.5, 0.1)]);
    let config = unit_scale(ProblemConfig::uniform(1, 1, 2, 1, 1));
    let out = sca::solve_mcmb(&config, std::slice::from_ref(&h), &[60.0]).unwrap();
    let capacity = (1.0 + config.power_budget * h.norm_squared() / config.noise[0]).log2();
    let expected = capacity * 100.0 / 40.0;
    let got = out.report.sum_rate_bits[0];
    assert!((got - expected).abs() <= 1e-3 * expected, "{got} vs {expected}");
}

#[test]
fn one_certain_file_is_the_single_file_problem() {
    let mut config = ExperimentConfig::paper_geometry(4, 2, 3);
    config.problem.seed = 8;
    let catalog = FileCatalog::uniform_clusters(4, &[100.0], &[1.0]);
    config.catalog = Some(catalog.clone());
    let p = &config.problem;
    let options = ScaOptions::cache_allocation(p);
    let multi = sca::solve_multifile(p, &catalog, &config.multifile_channels().unwrap(), &options).unwrap();
    let single = sca::solve_cache_allocation(p, &config.training_channels().unwrap().h, &options).unwrap();
    let flat: Vec<u64> = multi.cache.iter().flatten().map(|c| c.to_bits()).collect();
    let expected: Vec<u64> = single.primal.cache.iter().map(|c| c.to_bits()).collect();
    assert_eq!(flat, expected);
    assert_eq!(multi.result.trace.objectives(), single.trace.objectives());
}

fn one_cluster() -> ExperimentConfig {
    let mut config = ExperimentConfig::paper_geometry(4, 2, 3);
    let p = ProblemConfig {
        noise: config.problem.noise[..3].to_vec(),
        cache_budget: 30.0,
        seed: 14,
        ..ProblemConfig::uniform(1, 3, 4, 2, 3)
    };
    config.problem = p;
    config.distances.truncate(3);
    config.eval_realizations = 3;
    config
}

#[test]
fn baselines_coincide_without_other_clusters() {
    let config = one_cluster();
    let train = config.training_channels().unwrap();
    let eval = config.eval_channels().unwrap();
    let run = |s| experiments::run_scheme(&config, s, &train.h, &eval.h).unwrap();
    let proposed = run(Scheme::Proposed);
    for scheme in [Scheme::TimeDivision, Scheme::IgnoreInterference] {
        let other = run(scheme);
        for (a, b) in proposed.rates.iter().zip(&other.rates) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{scheme}: {a} vs {b}");
        }
        for (a, b) in proposed.cache.iter().zip(&other.cache) {
            assert!((a - b).abs() <= 1e-6 * 100.0, "{scheme}: cache {a} vs {b}");
        }
    }
}
