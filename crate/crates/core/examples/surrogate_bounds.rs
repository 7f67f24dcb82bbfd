//! The quadratic upper bound on the rate constraint: tight at the expansion
//! point and above the true value elsewhere.

use cran_cache::linalg::{c64, CMat};
use cran_cache::model::{self, InterferenceModel};
use cran_cache::surrogate;

fn main() -> cran_cache::Result<()> {
    let h = CMat::from_fn(1, 3, |_, j| c64(0.8 - 0.2 * j as f64, 0.1 * j as f64));
    let v0 = vec![
        CMat::from_fn(3, 1, |i, _| c64(1.0, 0.1 * i as f64)),
        CMat::from_fn(3, 1, |i, _| c64(0.2 * i as f64, 0.3)),
    ];
    let (file, eta_i, cache_i) = (10.0, 0.3, 4.0);
    let coeff = surrogate::expansion_coefficients(&h, &v0, 0, 1.0, eta_i, cache_i, InterferenceModel::Full)?;

    for step in [0.0, 0.1, 0.5, 1.0] {
        let v: Vec<CMat> = v0.iter().map(|x| x.map(|z| z * c64(1.0 + step, -step))).collect();
        let (cache, eta) = (cache_i + 2.0 * step, eta_i + step);
        let mi = model::link_mutual_information(&h, &v, 0, 1.0, InterferenceModel::Full)?;
        let lhs = (file - cache) * eta - mi;
        let bound = surrogate::eval_f(&coeff, cache, eta, &v, file, eta_i, cache_i);
        println!("step {step:.1}: constraint {lhs:9.5}  bound {bound:9.5}  gap {:.3e}", bound - lhs);
    }
    Ok(())
}
