//! Mutual information of one link with and without inter-cluster
//! interference, and the resulting cluster rate.

use cran_cache::linalg::{c64, CMat};
use cran_cache::model::{self, InterferenceModel};

fn main() -> cran_cache::Result<()> {
    // 2×4 channel, one beamformer per cluster
    let h = CMat::from_fn(2, 4, |i, j| c64(1.0 + 0.1 * (i + j) as f64, 0.2 * i as f64 - 0.1 * j as f64));
    let own = CMat::from_fn(4, 2, |i, j| c64(if i == j { 1.0 } else { 0.1 }, 0.0));
    let other = CMat::from_fn(4, 2, |i, j| c64(0.3, if i == j + 1 { 0.2 } else { 0.0 }));
    let v = vec![own, other];

    let full = model::link_mutual_information(&h, &v, 0, 0.5, InterferenceModel::Full)?;
    let alone = model::link_mutual_information(&h, &v, 0, 0.5, InterferenceModel::Ignored)?;
    println!("MI with interference    {full:.4} nats");
    println!("MI without interference {alone:.4} nats");

    // a 100-unit file with 40 units cached needs only 60 units of backhaul
    let rate = model::cluster_rate([(full, 40.0, 100.0), (alone, 0.0, 100.0)]).expect("some BS needs backhaul");
    println!("cluster rate            {rate:.4} nats/s/Hz");
    Ok(())
}
