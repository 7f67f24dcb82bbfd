//! Rayleigh-faded backhaul channels with distance-based path loss, and their
//! on-disk format.
//!
//! File layout: line 1 is a JSON header, line 2 the CSV header
//! `t,k,row,col,re,im`, then one line per complex entry in (t, k, row, col)
//! order with shortest round-trip decimal floats.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ProblemConfig;
use crate::error::{Error, Result};
use crate::linalg::{c64, CMat};

pub const GENERATOR: &str = "ChaCha20Rng/stream=(k<<32)|t";
pub const FORMAT_VERSION: u32 = 1;

/// Path loss in dB at `distance_m` meters: 128.1 + 37.6 log10(d / 1 km).
pub fn path_loss_db(distance_m: f64) -> Result<f64> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(Error::Domain(format!("distance must be positive, got {distance_m}")));
    }
    Ok(128.1 + 37.6 * (distance_m / 1000.0).log10())
}

/// Noise power in watts for a PSD in dBm/Hz over `bandwidth_hz`.
pub fn noise_power(psd_dbm_per_hz: f64, bandwidth_hz: f64) -> Result<f64> {
    if !(bandwidth_hz > 0.0) {
        return Err(Error::Domain(format!("bandwidth must be positive, got {bandwidth_hz}")));
    }
    let dbm = psd_dbm_per_hz + 10.0 * bandwidth_hz.log10();
    Ok(10f64.powf((dbm - 30.0) / 10.0))
}

/// Per-entry variance of a link with the given gain and loss.
pub fn linear_gain(antenna_gain_db: f64, pathloss_db: f64) -> f64 {
    10f64.powf((antenna_gain_db - pathloss_db) / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelHeader {
    pub format_version: u32,
    #[serde(rename = "K")]
    pub base_stations: usize,
    #[serde(rename = "G")]
    pub clusters: usize,
    #[serde(rename = "M")]
    pub tx_antennas: usize,
    #[serde(rename = "N")]
    pub rx_antennas: usize,
    #[serde(rename = "T")]
    pub samples: usize,
    pub seed: u64,
    pub generator: String,
    pub distances: Vec<f64>,
    pub pathloss_db: Vec<f64>,
    pub antenna_gain_db: f64,
    pub fingerprint: String,
}

/// `h[t][k]` is the N×M channel from the computation center to BS k in
/// sample t.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub header: ChannelHeader,
    pub h: Vec<Vec<CMat>>,
}

impl ChannelSet {
    pub fn samples(&self) -> usize {
        self.h.len()
    }

    /// Checks shapes against a problem instance.
    pub fn check_against(&self, config: &ProblemConfig) -> Result<()> {
        let hd = &self.header;
        if hd.base_stations != config.base_stations
            || hd.tx_antennas != config.tx_antennas
            || hd.rx_antennas != config.rx_antennas
        {
            return Err(Error::Validation(format!(
                "channel set is K={} M={} N={}, config is K={} M={} N={}",
                hd.base_stations,
                hd.tx_antennas,
                hd.rx_antennas,
                config.base_stations,
                config.tx_antennas,
                config.rx_antennas
            )));
        }
        Ok(())
    }
}

/// Draws `samples` realizations: entry (k, t) uses its own ChaCha20 stream,
/// so the result does not depend on thread scheduling.
pub fn sample_channels_n(
    config: &ProblemConfig,
    samples: usize,
    distances: &[f64],
    antenna_gain_db: f64,
    seed: u64,
) -> Result<ChannelSet> {
    let k_count = config.base_stations;
    if distances.len() != k_count {
        return Err(Error::InvalidInput(format!(
            "{} distances for K={k_count}",
            distances.len()
        )));
    }
    let pathloss_db = distances
        .iter()
        .map(|&d| path_loss_db(d))
        .collect::<Result<Vec<_>>>()?;
    let std: Vec<f64> = pathloss_db
        .iter()
        .map(|&pl| (linear_gain(antenna_gain_db, pl) / 2.0).sqrt())
        .collect();
    let (n, m) = (config.rx_antennas, config.tx_antennas);
    let h: Vec<Vec<CMat>> = (0..samples)
        .into_par_iter()
        .map(|t| {
            (0..k_count)
                .map(|k| {
                    let mut rng = ChaCha20Rng::seed_from_u64(seed);
                    rng.set_stream(((k as u64) << 32) | t as u64);
                    let sd = std[k];
                    // row-major draw order
                    let mut entries = Vec::with_capacity(n * m);
                    for _ in 0..n * m {
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = StandardNormal.sample(&mut rng);
                        entries.push(c64(sd * re, sd * im));
                    }
                    CMat::from_row_slice(n, m, &entries)
                })
                .collect()
        })
        .collect();
    Ok(ChannelSet {
        header: ChannelHeader {
            format_version: FORMAT_VERSION,
            base_stations: k_count,
            clusters: config.clusters,
            tx_antennas: m,
            rx_antennas: n,
            samples,
            seed,
            generator: GENERATOR.into(),
            distances: distances.to_vec(),
            pathloss_db,
            antenna_gain_db,
            fingerprint: config.fingerprint(),
        },
        h,
    })
}

/// `config.samples` realizations.
pub fn sample_channels(
    config: &ProblemConfig,
    distances: &[f64],
    antenna_gain_db: f64,
    seed: u64,
) -> Result<ChannelSet> {
    sample_channels_n(config, config.samples, distances, antenna_gain_db, seed)
}

pub fn to_text(set: &ChannelSet) -> Result<String> {
    let mut out = serde_json::to_string(&set.header)?;
    out.push('\n');
    out.push_str("t,k,row,col,re,im\n");
    for (t, per_k) in set.h.iter().enumerate() {
        for (k, h) in per_k.iter().enumerate() {
            for r in 0..h.nrows() {
                for c in 0..h.ncols() {
                    let z = h[(r, c)];
                    writeln!(out, "{t},{k},{r},{c},{:?},{:?}", z.re, z.im).expect("string write");
                }
            }
        }
    }
    Ok(out)
}

pub fn save_channels(set: &ChannelSet, path: &Path) -> Result<()> {
    std::fs::write(path, to_text(set)?).map_err(|e| Error::io(path, e))
}

pub fn load_channels(path: &Path) -> Result<ChannelSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_channels(&text)
}

const COLUMNS: [&str; 6] = ["t", "k", "row", "col", "re", "im"];

fn parse_err(offset: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        field: field.into(),
        message: message.into(),
    }
}

pub fn parse_channels(text: &str) -> Result<ChannelSet> {
    let header_end = text
        .find('\n')
        .ok_or_else(|| parse_err(text.len(), "header", "missing newline after header"))?;
    let header: ChannelHeader = serde_json::from_str(&text[..header_end])
        .map_err(|e| parse_err(0, "header", e.to_string()))?;
    if header.format_version != FORMAT_VERSION {
        return Err(parse_err(0, "format_version", format!("unsupported version {}", header.format_version)));
    }
    if header.distances.len() != header.base_stations || header.pathloss_db.len() != header.base_stations {
        return Err(Error::Validation(format!(
            "header lists {} distances for K={}",
            header.distances.len(),
            header.base_stations
        )));
    }

    let mut offset = header_end + 1;
    let rest = &text[offset..];
    let cols_end = rest
        .find('\n')
        .ok_or_else(|| parse_err(offset, "columns", "missing column header"))?;
    if rest[..cols_end] != COLUMNS.join(",") {
        return Err(parse_err(offset, "columns", format!("expected {}", COLUMNS.join(","))));
    }
    offset += cols_end + 1;

    let (k_count, n, m, t_count) = (
        header.base_stations,
        header.rx_antennas,
        header.tx_antennas,
        header.samples,
    );
    let expected = t_count * k_count * n * m;
    let mut values = vec![c64(0.0, 0.0); expected];
    let mut seen = 0usize;
    for line in text[offset..].split_inclusive('\n') {
        let body = line.strip_suffix('\n').unwrap_or(line);
        if !line.ends_with('\n') && !body.is_empty() {
            return Err(parse_err(offset + line.len(), "line", "truncated final line"));
        }
        if body.is_empty() {
            offset += line.len();
            continue;
        }
        let mut fields = [0usize; 4];
        let mut reim = [0f64; 2];
        let mut field_offset = offset;
        let mut parts = body.split(',');
        for (i, name) in COLUMNS.iter().enumerate() {
            let part = parts
                .next()
                .ok_or_else(|| parse_err(field_offset, name, "missing field"))?;
            if i < 4 {
                fields[i] = part
                    .parse()
                    .map_err(|_| parse_err(field_offset, name, format!("not an index: {part:?}")))?;
            } else {
                reim[i - 4] = part
                    .parse()
                    .map_err(|_| parse_err(field_offset, name, format!("not a number: {part:?}")))?;
            }
            field_offset += part.len() + 1;
        }
        if parts.next().is_some() {
            return Err(parse_err(field_offset, "line", "too many fields"));
        }
        let [t, k, r, c] = fields;
        if k >= k_count {
            return Err(Error::Validation(format!(
                "row at byte {offset} has k={k} but header declares K={k_count}"
            )));
        }
        if t >= t_count || r >= n || c >= m {
            return Err(parse_err(offset, "t", format!("index ({t},{k},{r},{c}) outside declared shape")));
        }
        let idx = ((t * k_count + k) * n + r) * m + c;
        if idx != seen {
            return Err(parse_err(offset, "t", format!("entry ({t},{k},{r},{c}) out of order")));
        }
        values[idx] = c64(reim[0], reim[1]);
        seen += 1;
        offset += line.len();
    }
    if seen != expected {
        return Err(parse_err(
            offset,
            "t",
            format!("file ends after {seen} of {expected} entries"),
        ));
    }

    let h = (0..t_count)
        .map(|t| {
            (0..k_count)
                .map(|k| {
                    let start = (t * k_count + k) * n * m;
                    CMat::from_row_slice(n, m, &values[start..start + n * m])
                })
                .collect()
        })
        .collect();
    Ok(ChannelSet { header, h })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_loss_values() {
        assert!((path_loss_db(1000.0).unwrap() - 128.1).abs() < 1e-12);
        assert!((path_loss_db(160.0).unwrap() - 98.17).abs() < 5e-3);
        assert!((path_loss_db(400.0).unwrap() - 113.14).abs() < 5e-3);
        assert!(path_loss_db(0.0).is_err());
        assert!(path_loss_db(-5.0).is_err());
    }

    #[test]
    fn noise_power_values() {
        assert!((noise_power(-30.0, 1.0).unwrap() - 1e-6).abs() < 1e-20);
        assert!((noise_power(0.0, 1.0).unwrap() - 1e-3).abs() < 1e-18);
        let w = noise_power(-150.0, 20e6).unwrap();
        assert!((w - 2.0e-11).abs() < 1e-22);
        assert!(noise_power(-150.0, 0.0).is_err());
    }

    #[test]
    fn paper_gain_chain() {
        let v = linear_gain(17.0, path_loss_db(160.0).unwrap());
        assert!((v - 7.64e-9).abs() / 7.64e-9 < 2e-3);
    }

    #[test]
    fn unit_variance_rayleigh() {
        let cfg = ProblemConfig::uniform(1, 1, 1000, 1, 1000);
        // antenna gain cancels the path loss
        let pl = path_loss_db(1000.0).unwrap();
        let set = sample_channels(&cfg, &[1000.0], pl, 5).unwrap();
        let mean: f64 = set
            .h
            .iter()
            .flat_map(|per_k| per_k[0].iter().map(|z| z.norm_sqr()))
            .sum::<f64>()
            / 1e6;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn deterministic_and_roundtrip() {
        let cfg = ProblemConfig::uniform(2, 2, 4, 2, 3);
        let d = [160.0, 260.0, 200.0, 360.0];
        let a = sample_channels(&cfg, &d, 17.0, 9).unwrap();
        let b = sample_channels(&cfg, &d, 17.0, 9).unwrap();
        assert_eq!(a, b);
        let back = parse_channels(&to_text(&a).unwrap()).unwrap();
        assert_eq!(a, back);
        let c = sample_channels(&cfg, &d, 17.0, 10).unwrap();
        assert_ne!(a.h, c.h);
    }

    #[test]
    fn truncated_and_mismatched_files() {
        let cfg = ProblemConfig::uniform(1, 2, 3, 1, 2);
        let set = sample_channels(&cfg, &[160.0, 200.0], 17.0, 1).unwrap();
        let text = to_text(&set).unwrap();
        let cut = &text[..text.len() - 7];
        match parse_channels(cut) {
            Err(Error::Parse { offset, .. }) => assert!(offset > 0),
            other => panic!("expected parse error, got {other:?}"),
        }
        let missing_rows: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(matches!(parse_channels(&missing_rows), Err(Error::Parse { .. })));

        let wrong_k = text.replacen("\"K\":2", "\"K\":1", 1);
        assert!(matches!(parse_channels(&wrong_k), Err(Error::Validation(_))));

        let bad_field = text.replacen(",0,0,0,", ",0,0,x,", 1);
        match parse_channels(&bad_field) {
            Err(Error::Parse { field, .. }) => assert_eq!(field, "col"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
