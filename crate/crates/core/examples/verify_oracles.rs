//! Checks the surrogate bounds, the closed-form Lagrangian minimizer and the
//! cache solver against independent numerical references.

use cran_cache::verify;
use cran_cache::ProblemConfig;

fn main() -> cran_cache::Result<()> {
    let config = ProblemConfig::uniform(2, 2, 4, 1, 2);
    let mut results = verify::check_prop1(&config, 100, 5)?;
    results.push(verify::check_prop2(&config, 10, 5)?);
    results.push(verify::check_fixed_beam_cache(5, 1, 1e-2)?);
    for r in &results {
        println!("{}", r.line());
    }
    Ok(())
}
