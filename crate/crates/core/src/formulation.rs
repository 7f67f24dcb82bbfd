//! The sample problem in a single shape shared by every solver mode.
//!
//! A *scenario* is one channel realization with its own beamformers and
//! auxiliary rates: a training sample `t` for cache allocation, the single
//! delivery channel for beamforming design, or a (request tuple, sample) pair
//! for the multi-file problem. Cache variables are *entries*; scenario `s`
//! maps base station `k` to entry `cache_entry[s][k]`.

use serde::{Deserialize, Serialize};

use crate::config::ProblemConfig;
use crate::error::{Error, Result};
use crate::model::InterferenceModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PowerBudget {
    /// One budget shared by all clusters of a scenario.
    Sum,
    /// Every cluster gets the full budget on its own (time-division).
    PerCluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CacheMode {
    Optimize,
    /// Cache sizes are data; the rate constraint is linear in η.
    Fixed,
}

#[derive(Debug, Clone)]
pub struct Formulation {
    pub clusters: usize,
    pub cluster_of: Vec<usize>,
    pub members: Vec<Vec<usize>>,
    pub noise: Vec<f64>,
    pub tx_antennas: usize,
    pub streams: usize,
    pub scenarios: usize,
    pub cache_entry: Vec<Vec<usize>>,
    pub cache_capacity: Vec<f64>,
    /// Base station holding each entry.
    pub entry_owner: Vec<usize>,
    /// `[s][g]`.
    pub file_size: Vec<Vec<f64>>,
    /// Objective weight of η_{g,s}, `[s][g]`.
    pub weight: Vec<Vec<f64>>,
    pub power_budget: f64,
    pub power: PowerBudget,
    pub cache_budget: f64,
    pub model: InterferenceModel,
    pub cache_mode: CacheMode,
    /// Keep every V at the expansion point; only C and η move.
    pub fixed_beamformers: bool,
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    pub beta: f64,
    pub tol_inner: f64,
    pub tol_feas: f64,
    pub max_inner: usize,
    pub backtracking: bool,
}

impl Formulation {
    /// Cache allocation over `config.samples` training samples.
    pub fn cache_allocation(config: &ProblemConfig) -> Self {
        Self::cache_allocation_with(config, config.samples, InterferenceModel::Full, PowerBudget::Sum, 1.0)
    }

    pub fn cache_allocation_with(
        config: &ProblemConfig,
        samples: usize,
        model: InterferenceModel,
        power: PowerBudget,
        weight: f64,
    ) -> Self {
        let k = config.base_stations;
        Formulation {
            clusters: config.clusters,
            cluster_of: config.cluster_of.clone(),
            members: config.members(),
            noise: config.noise.clone(),
            tx_antennas: config.tx_antennas,
            streams: config.streams,
            scenarios: samples,
            cache_entry: vec![(0..k).collect(); samples],
            cache_capacity: (0..k).map(|i| config.file_size_of_bs(i)).collect(),
            entry_owner: (0..k).collect(),
            file_size: vec![config.file_sizes.clone(); samples],
            weight: vec![vec![weight; config.clusters]; samples],
            power_budget: config.power_budget,
            power,
            cache_budget: config.cache_budget,
            model,
            cache_mode: CacheMode::Optimize,
            fixed_beamformers: false,
            rho1: config.rho1,
            rho2: config.rho2,
            rho3: config.rho3,
            beta: config.beta,
            tol_inner: config.tol_inner,
            tol_feas: config.tol_feas,
            max_inner: config.max_inner,
            backtracking: config.backtracking,
        }
    }

    /// Beamforming design for one channel realization at fixed cache sizes.
    pub fn delivery(config: &ProblemConfig, model: InterferenceModel, power: PowerBudget) -> Self {
        let mut form = Self::cache_allocation_with(config, 1, model, power, 1.0);
        form.cache_mode = CacheMode::Fixed;
        form.rho1 = config.mcmb_rho1;
        form.rho2 = config.mcmb_rho2;
        form.beta = config.mcmb_beta;
        form.tol_inner = config.mcmb_tol_inner;
        form
    }

    /// Multi-file cache allocation. Scenario `s = f · T + t` pairs request
    /// tuple `f` (index into `catalog.tuples()`) with sample `t`; entry
    /// `k · |F| + file` holds BS k's share of a file of its cluster, where
    /// `|F|` is the largest catalog size.
    pub fn multifile(config: &ProblemConfig, catalog: &FileCatalog) -> Result<Self> {
        catalog.validate(config.clusters)?;
        let tuples = catalog.tuples();
        let stride = catalog.max_files();
        let k_count = config.base_stations;
        let t_count = config.samples;
        let mut cache_entry = Vec::new();
        let mut file_size = Vec::new();
        let mut weight = Vec::new();
        for tuple in &tuples {
            for _ in 0..t_count {
                cache_entry.push(
                    (0..k_count)
                        .map(|k| k * stride + tuple[config.cluster_of[k]])
                        .collect(),
                );
                file_size.push(
                    (0..config.clusters)
                        .map(|g| catalog.sizes[g][tuple[g]])
                        .collect(),
                );
                weight.push(
                    (0..config.clusters)
                        .map(|g| catalog.popularity[g][tuple[g]])
                        .collect(),
                );
            }
        }
        let mut cache_capacity = vec![0.0; k_count * stride];
        for k in 0..k_count {
            let g = config.cluster_of[k];
            for (f, size) in catalog.sizes[g].iter().enumerate() {
                cache_capacity[k * stride + f] = *size;
            }
        }
        let mut form = Self::cache_allocation(config);
        form.scenarios = tuples.len() * t_count;
        form.cache_entry = cache_entry;
        form.cache_capacity = cache_capacity;
        form.entry_owner = (0..k_count * stride).map(|j| j / stride).collect();
        form.file_size = file_size;
        form.weight = weight;
        Ok(form)
    }

    pub fn power_groups(&self) -> usize {
        match self.power {
            PowerBudget::Sum => 1,
            PowerBudget::PerCluster => self.clusters,
        }
    }

    pub fn power_group_of(&self, g: usize) -> usize {
        match self.power {
            PowerBudget::Sum => 0,
            PowerBudget::PerCluster => g,
        }
    }

    pub fn entries(&self) -> usize {
        self.cache_capacity.len()
    }

    /// Entries that exist in at least one scenario. Unused slots of the
    /// multi-file layout (clusters with fewer files) stay at zero.
    pub fn used_entries(&self) -> Vec<bool> {
        let mut used = vec![false; self.entries()];
        for row in &self.cache_entry {
            for &j in row {
                used[j] = true;
            }
        }
        used
    }

    pub fn file_size_of(&self, s: usize, k: usize) -> f64 {
        self.file_size[s][self.cluster_of[k]]
    }
}

/// Files each cluster may request, with sizes and request probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileCatalog {
    /// `[g][file]`.
    pub sizes: Vec<Vec<f64>>,
    /// `[g][file]`, each row sums to one.
    pub popularity: Vec<Vec<f64>>,
}

impl FileCatalog {
    /// The same files and popularities for every cluster.
    pub fn uniform_clusters(clusters: usize, sizes: &[f64], popularity: &[f64]) -> Self {
        FileCatalog {
            sizes: vec![sizes.to_vec(); clusters],
            popularity: vec![popularity.to_vec(); clusters],
        }
    }

    pub fn validate(&self, clusters: usize) -> Result<()> {
        if self.sizes.len() != clusters || self.popularity.len() != clusters {
            return Err(Error::InvalidInput(format!(
                "catalog covers {} clusters, expected {clusters}",
                self.sizes.len()
            )));
        }
        for (g, (sizes, pops)) in self.sizes.iter().zip(&self.popularity).enumerate() {
            if sizes.is_empty() || sizes.len() != pops.len() {
                return Err(Error::InvalidInput(format!("cluster {g}: sizes and popularities differ in length")));
            }
            if sizes.iter().any(|s| !(*s > 0.0)) || pops.iter().any(|p| !(*p >= 0.0)) {
                return Err(Error::InvalidInput(format!("cluster {g}: sizes must be positive, popularities non-negative")));
            }
            let total: f64 = pops.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!("cluster {g}: popularities sum to {total}")));
            }
        }
        Ok(())
    }

    pub fn max_files(&self) -> usize {
        self.sizes.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// All request tuples in lexicographic order, last cluster fastest.
    pub fn tuples(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for files in &self.sizes {
            let mut next = Vec::with_capacity(out.len() * files.len());
            for prefix in &out {
                for f in 0..files.len() {
                    let mut t = prefix.clone();
                    t.push(f);
                    next.push(t);
                }
            }
            out = next;
        }
        out
    }

    /// p_f = Π_g p_{f_g}.
    pub fn tuple_probability(&self, tuple: &[usize]) -> f64 {
        tuple
            .iter()
            .enumerate()
            .map(|(g, &f)| self.popularity[g][f])
            .product()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tuple_probabilities_sum_to_one() {
        let cat = FileCatalog {
            sizes: vec![vec![100.0, 50.0], vec![100.0, 80.0, 10.0]],
            popularity: vec![vec![0.7, 0.3], vec![0.5, 0.25, 0.25]],
        };
        cat.validate(2).unwrap();
        let tuples = cat.tuples();
        assert_eq!(tuples.len(), 6);
        assert_eq!(tuples[1], vec![0, 1]);
        let total: f64 = tuples.iter().map(|t| cat.tuple_probability(t)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_popularity() {
        let cat = FileCatalog::uniform_clusters(2, &[100.0, 100.0], &[0.5, 0.6]);
        assert!(cat.validate(2).is_err());
    }

    #[test]
    fn multifile_layout() {
        let cfg = ProblemConfig::uniform(2, 3, 4, 2, 2);
        let cat = FileCatalog::uniform_clusters(2, &[100.0, 100.0], &[0.9, 0.1]);
        let form = Formulation::multifile(&cfg, &cat).unwrap();
        assert_eq!(form.scenarios, 8);
        assert_eq!(form.entries(), 12);
        // tuple (0, 1), sample 1
        let s = 3;
        assert_eq!(form.cache_entry[s][0], 0);
        assert_eq!(form.cache_entry[s][3], 7);
        assert_eq!(form.weight[s], vec![0.9, 0.1]);
    }
}
