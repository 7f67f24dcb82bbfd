//! Plain projected gradient against the accelerated variant on the first
//! subproblem of a small instance.

use cran_cache::dual::{self, DualMode, SolveOptions};
use cran_cache::experiments::ExperimentConfig;
use cran_cache::formulation::Formulation;
use cran_cache::sca;

fn main() -> cran_cache::Result<()> {
    let mut config = ExperimentConfig::paper_geometry(4, 2, 4);
    config.problem.seed = 3;
    let train = config.training_channels()?;
    let form = Formulation::cache_allocation(&config.problem);
    let x0 = sca::initial_point(&form, &train.h, None)?;
    let coeffs = sca::build_coefficients(&form, &train.h, &x0)?;

    for mode in [DualMode::Plain, DualMode::Accelerated] {
        let start = std::time::Instant::now();
        let sol = dual::solve_subproblem(&form, &coeffs, &x0, SolveOptions::new(mode))?;
        println!(
            "{mode:?}: dual objective {:.8}, {} iterations, {:.2?}",
            sol.dual_objective,
            sol.iterations,
            start.elapsed()
        );
    }
    Ok(())
}
