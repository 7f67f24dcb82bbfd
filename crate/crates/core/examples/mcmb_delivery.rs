//! Delivery beamforming for one channel realization with uniform caches.

use cran_cache::experiments::{self, ExperimentConfig};
use cran_cache::sca;

fn main() -> cran_cache::Result<()> {
    let mut config = ExperimentConfig::paper_geometry(4, 2, 1);
    config.eval_realizations = 1;
    let eval = config.eval_channels()?;
    let cache = experiments::uniform_cache(&config.problem);
    let out = sca::solve_mcmb(&config.problem, &eval.h[0], &cache)?;

    println!("sum rate {:.3} bit/s/Hz after {} iterations", out.report.sum_rate_bits[0], out.trace.rows.len() - 1);
    for (g, v) in out.beamformers.iter().enumerate() {
        println!("cluster {g}: power {:.3} W", cran_cache::linalg::frobenius_sq(v));
    }
    Ok(())
}
