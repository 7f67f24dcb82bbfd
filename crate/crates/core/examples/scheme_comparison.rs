//! The proposed allocation against the baselines on a reduced layout.
//! Takes a few seconds in release mode.

use cran_cache::experiments::{self, ExperimentConfig};

fn main() -> cran_cache::Result<()> {
    let mut config = ExperimentConfig::paper_geometry(4, 2, 4);
    config.eval_realizations = 5;
    config.problem.seed = 11;
    for report in experiments::run_experiment(&config)? {
        println!("{:20} mean {:7.3} {}  ({} realizations)", report.scheme.name(), report.mean, report.unit, report.rates.len());
    }
    Ok(())
}
