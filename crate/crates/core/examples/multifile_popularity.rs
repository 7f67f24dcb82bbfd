//! Two files per cluster with skewed popularity: the popular file gets most
//! of each BS's cache.

use cran_cache::experiments::ExperimentConfig;
use cran_cache::formulation::FileCatalog;
use cran_cache::sca::{self, ScaOptions};

fn main() -> cran_cache::Result<()> {
    let mut config = ExperimentConfig::paper_geometry(4, 2, 3);
    config.problem.seed = 2;
    let catalog = FileCatalog::uniform_clusters(4, &[100.0, 100.0], &[0.9, 0.1]);
    config.catalog = Some(catalog.clone());
    let channels = config.multifile_channels()?;
    let p = &config.problem;
    let out = sca::solve_multifile(p, &catalog, &channels, &ScaOptions::cache_allocation(p))?;

    for (k, files) in out.cache.iter().enumerate() {
        let total: f64 = files.iter().sum();
        let share = if total > 0.0 { files[0] / total } else { f64::NAN };
        println!("BS {k:2}: popular {:6.2}  other {:6.2}  popular share {share:.2}", files[0], files[1]);
    }
    Ok(())
}
