//! Problem instance description.
//!
//! The JSON keys mirror the mathematical symbols (`G`, `K`, `M`, `N`, `P_tot`,
//! ...) so that configuration files read like the model they describe. Cluster
//! indices in `cluster_of` are zero-based.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    /// Number of multicast clusters.
    #[serde(rename = "G")]
    pub clusters: usize,
    /// Number of base stations.
    #[serde(rename = "K")]
    pub base_stations: usize,
    /// Cluster index of every base station.
    pub cluster_of: Vec<usize>,
    /// Antennas at the computation center.
    #[serde(rename = "M")]
    pub tx_antennas: usize,
    /// Antennas per base station.
    #[serde(rename = "N")]
    pub rx_antennas: usize,
    /// Streams per cluster.
    #[serde(rename = "d")]
    pub streams: usize,
    /// Total transmit power in watts.
    #[serde(rename = "P_tot")]
    pub power_budget: f64,
    /// Total cache budget in content units.
    #[serde(rename = "C_tot")]
    pub cache_budget: f64,
    /// Requested file size per cluster in content units.
    #[serde(rename = "F_g")]
    pub file_sizes: Vec<f64>,
    /// Noise power per base station in watts.
    #[serde(rename = "sigma2")]
    pub noise: Vec<f64>,
    /// Number of channel samples used for cache optimization.
    #[serde(rename = "T")]
    pub samples: usize,
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    /// Dual step size.
    pub beta: f64,
    pub tol_inner: f64,
    /// Largest constraint residual the inner solver may stop at.
    #[serde(default = "defaults::tol_feas")]
    pub tol_feas: f64,
    pub tol_outer: f64,
    pub outer_window: usize,
    pub seed: u64,
    #[serde(default = "defaults::max_inner")]
    pub max_inner: usize,
    #[serde(default = "defaults::max_outer")]
    pub max_outer: usize,
    /// Halve the dual step until each update satisfies the ascent
    /// condition. Off means β stays fixed.
    #[serde(default = "defaults::backtracking")]
    pub backtracking: bool,
    #[serde(default = "defaults::mcmb_rho1")]
    pub mcmb_rho1: f64,
    #[serde(default = "defaults::mcmb_rho2")]
    pub mcmb_rho2: f64,
    #[serde(default = "defaults::mcmb_beta")]
    pub mcmb_beta: f64,
    #[serde(default = "defaults::mcmb_tol")]
    pub mcmb_tol: f64,
    #[serde(default = "defaults::mcmb_tol_inner")]
    pub mcmb_tol_inner: f64,
    #[serde(default = "defaults::mcmb_max_iter")]
    pub mcmb_max_iter: usize,
}

mod defaults {
    pub fn max_inner() -> usize {
        100_000
    }
    pub fn tol_feas() -> f64 {
        1e-4
    }
    pub fn backtracking() -> bool {
        true
    }
    pub fn max_outer() -> usize {
        2_000
    }
    pub fn mcmb_rho1() -> f64 {
        1e3
    }
    pub fn mcmb_rho2() -> f64 {
        10.0
    }
    pub fn mcmb_beta() -> f64 {
        1.0
    }
    pub fn mcmb_tol() -> f64 {
        1e-4
    }
    pub fn mcmb_tol_inner() -> f64 {
        1e-3
    }
    pub fn mcmb_max_iter() -> usize {
        500
    }
}

impl ProblemConfig {
    /// Builds a configuration with contiguous, equally sized clusters, 40 W
    /// of power, 120 units of cache, files of 100 units and unit noise.
    ///
    /// The prox weights (ρ1 = 1e3, ρ2 = 10, ρ3 = 1) suit power budgets of
    /// tens of watts and files of ~100 units; with ρ1 = 1e5 and ρ2 = 1e4 each
    /// outer step barely moves and the windowed stopping rule fires at the
    /// starting point.
    pub fn uniform(
        clusters: usize,
        per_cluster: usize,
        tx_antennas: usize,
        rx_antennas: usize,
        samples: usize,
    ) -> Self {
        let k = clusters * per_cluster;
        ProblemConfig {
            clusters,
            base_stations: k,
            cluster_of: (0..k).map(|i| i / per_cluster).collect(),
            tx_antennas,
            rx_antennas,
            streams: rx_antennas.min(tx_antennas),
            power_budget: 40.0,
            cache_budget: 120.0,
            file_sizes: vec![100.0; clusters],
            noise: vec![1.0; k],
            samples,
            rho1: 1e3,
            rho2: 10.0,
            rho3: 1.0,
            beta: 1.0,
            tol_inner: 1e-3,
            tol_feas: defaults::tol_feas(),
            tol_outer: 1e-2,
            outer_window: 10,
            seed: 0,
            max_inner: defaults::max_inner(),
            max_outer: defaults::max_outer(),
            backtracking: defaults::backtracking(),
            mcmb_rho1: defaults::mcmb_rho1(),
            mcmb_rho2: defaults::mcmb_rho2(),
            mcmb_beta: defaults::mcmb_beta(),
            mcmb_tol: defaults::mcmb_tol(),
            mcmb_tol_inner: defaults::mcmb_tol_inner(),
            mcmb_max_iter: defaults::mcmb_max_iter(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.rx_antennas == 0 || self.tx_antennas <= self.rx_antennas {
            return bad(format!(
                "need M > N >= 1, got M={} N={}",
                self.tx_antennas, self.rx_antennas
            ));
        }
        if self.streams != self.rx_antennas {
            return bad(format!("d must equal N, got d={}", self.streams));
        }
        if self.clusters == 0 || self.base_stations == 0 {
            return bad("G and K must be positive".into());
        }
        if self.cluster_of.len() != self.base_stations {
            return bad(format!(
                "cluster_of has {} entries, K={}",
                self.cluster_of.len(),
                self.base_stations
            ));
        }
        let mut seen = vec![false; self.clusters];
        for (k, &g) in self.cluster_of.iter().enumerate() {
            if g >= self.clusters {
                return bad(format!("BS {k} assigned to cluster {g} >= G"));
            }
            seen[g] = true;
        }
        if let Some(g) = seen.iter().position(|s| !s) {
            return bad(format!("cluster {g} has no base stations"));
        }
        if self.file_sizes.len() != self.clusters {
            return bad("F_g must have G entries".into());
        }
        if self.noise.len() != self.base_stations {
            return bad("sigma2 must have K entries".into());
        }
        if !(self.power_budget > 0.0) {
            return bad("P_tot must be positive".into());
        }
        if !(self.cache_budget >= 0.0) {
            return bad("C_tot must be non-negative".into());
        }
        if self.file_sizes.iter().any(|f| !(*f > 0.0)) {
            return bad("F_g must be positive".into());
        }
        if self.noise.iter().any(|s| !(*s > 0.0)) {
            return bad("sigma2 must be positive".into());
        }
        for (name, v) in [
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("rho3", self.rho3),
            ("beta", self.beta),
            ("mcmb_rho1", self.mcmb_rho1),
            ("mcmb_rho2", self.mcmb_rho2),
            ("mcmb_beta", self.mcmb_beta),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive and finite"));
            }
        }
        if self.samples == 0 {
            return bad("T must be positive".into());
        }
        if self.outer_window == 0 {
            return bad("outer_window must be positive".into());
        }
        Ok(())
    }

    /// Base stations of each cluster, in index order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.clusters];
        for (k, &g) in self.cluster_of.iter().enumerate() {
            members[g].push(k);
        }
        members
    }

    pub fn file_size_of_bs(&self, k: usize) -> f64 {
        self.file_sizes[self.cluster_of[k]]
    }

    /// Stable hash of the serialized configuration.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ProblemConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_config_is_valid() {
        let cfg = ProblemConfig::uniform(4, 3, 8, 2, 20);
        cfg.validate().unwrap();
        assert_eq!(cfg.members()[3], vec![9, 10, 11]);
    }

    #[test]
    fn json_keys_follow_symbols() {
        let cfg = ProblemConfig::uniform(2, 2, 4, 2, 3);
        let v: serde_json::Value = serde_json::to_value(&cfg).unwrap();
        for key in ["G", "K", "M", "N", "d", "P_tot", "C_tot", "F_g", "sigma2", "T"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let back = ProblemConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut cfg = ProblemConfig::uniform(2, 2, 4, 2, 3);
        cfg.tx_antennas = 2;
        assert!(cfg.validate().is_err());

        let mut cfg = ProblemConfig::uniform(2, 2, 4, 2, 3);
        cfg.cluster_of = vec![0, 0, 0, 0];
        assert!(cfg.validate().is_err());

        let mut cfg = ProblemConfig::uniform(2, 2, 4, 2, 3);
        cfg.rho3 = 0.0;
        assert!(cfg.validate().is_err());
    }
}
