//! Optimizes cache sizes on a small two-cluster layout and prints the
//! allocation next to each BS's distance.

use cran_cache::experiments::ExperimentConfig;
use cran_cache::sca::{self, ScaOptions};

fn main() -> cran_cache::Result<()> {
    let mut config = ExperimentConfig::paper_geometry(4, 2, 4);
    config.problem.seed = 1;
    let train = config.training_channels()?;
    let p = &config.problem;
    let result = sca::solve_cache_allocation(p, &train.h, &ScaOptions::cache_allocation(p))?;

    let objs = result.trace.objectives();
    println!(
        "{} outer iterations, objective {:.3} -> {:.3}, converged {}",
        objs.len() - 1,
        objs[0],
        objs[objs.len() - 1],
        result.converged
    );
    for (k, c) in result.primal.cache.iter().enumerate() {
        println!("cluster {} BS {k:2} at {:3.0} m: cache {c:6.2}", p.cluster_of[k], config.distances[k]);
    }
    println!("total {:.2} of {}", result.primal.cache.iter().sum::<f64>(), p.cache_budget);
    Ok(())
}
