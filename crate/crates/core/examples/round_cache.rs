//! Integer cache sizes that stay within the budget.

use cran_cache::sca::round_cache;

fn main() {
    for (cache, budget) in [
        (vec![10.4, 9.6], 20.0),
        (vec![10.7, 9.6], 20.0),
        (vec![3.5, 3.5, 3.5], 10.0),
        (vec![0.0, 15.9, 24.1], 40.0),
    ] {
        println!("{cache:?} within {budget} -> {:?}", round_cache(&cache, budget));
    }
}
