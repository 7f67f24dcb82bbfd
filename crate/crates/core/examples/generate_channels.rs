//! Draws path-loss-scaled Rayleigh channels for the reference layout and
//! round-trips them through the text format.

use cran_cache::channels;
use cran_cache::experiments::ExperimentConfig;

fn main() -> cran_cache::Result<()> {
    let mut config = ExperimentConfig::paper_geometry(8, 2, 5);
    config.problem.seed = 7;
    let set = config.training_channels()?;
    for (k, (d, pl)) in set.header.distances.iter().zip(&set.header.pathloss_db).enumerate() {
        println!("BS {k:2}: {d:5.0} m, path loss {pl:6.2} dB");
    }

    let text = channels::to_text(&set)?;
    let back = channels::parse_channels(&text)?;
    assert_eq!(back.h, set.h);
    println!("{} samples, {} bytes of text, round-trip exact", set.samples(), text.len());
    Ok(())
}
