//! Backhaul rate model: per-BS mutual information, cluster download rates and
//! feasibility of a primal point.
//!
//! All rates are in nats. Divide by `ln 2` for bits.

use serde::{Deserialize, Serialize};

use crate::config::ProblemConfig;
use crate::error::{Error, Result};
use crate::linalg::{self, c64, CMat};

/// Which inter-cluster terms enter the interference-plus-noise covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum InterferenceModel {
    /// Σ_{g'≠g_k} H V_{g'} V_{g'}^H H^H + σ² I.
    #[default]
    Full,
    /// σ² I only; other clusters' beams are treated as absent.
    Ignored,
}

/// Primal variables of the sample-approximation problem.
///
/// Beamformers and auxiliary rates are indexed `[t][g]`, i.e. all clusters of
/// one channel sample are stored together.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalState {
    /// Cache entries, one per BS in the single-file problem.
    pub cache: Vec<f64>,
    pub beamformers: Vec<Vec<CMat>>,
    pub eta: Vec<Vec<f64>>,
}

/// Evaluation of the downloading sum-rate over a set of channel samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// `[k][t]`, nats.
    pub mutual_info: Vec<Vec<f64>>,
    /// `[g][t]`, nats; `f64::INFINITY` when every BS of the cluster is fully cached.
    pub cluster_rate: Vec<Vec<f64>>,
    pub sum_rate: Vec<f64>,
    pub sum_rate_bits: Vec<f64>,
    pub fully_cached: Vec<bool>,
}

/// Σ_{g'∈interferers} H V_{g'} V_{g'}^H H^H + σ² I.
pub fn interference_covariance(
    h: &CMat,
    v_all: &[CMat],
    gk: usize,
    sigma2: f64,
    model: InterferenceModel,
) -> CMat {
    let n = h.nrows();
    let mut y = CMat::identity(n, n) * c64(sigma2, 0.0);
    if model == InterferenceModel::Full {
        for (g, v) in v_all.iter().enumerate() {
            if g == gk {
                continue;
            }
            let hv = h * v;
            y.gemm(c64(1.0, 0.0), &hv, &hv.adjoint(), c64(1.0, 0.0));
        }
    }
    y
}

/// J_k = (Σ_{g'≠g_k} H_k V_{g'} V_{g'}^H H_k^H + σ_k² I_N)^{-1}.
pub fn interference_inverse(h: &CMat, v_all: &[CMat], gk: usize, sigma2: f64) -> CMat {
    assert!(sigma2 > 0.0, "noise power must be positive");
    let y = interference_covariance(h, v_all, gk, sigma2, InterferenceModel::Full);
    let j = linalg::cholesky(y)
        .expect("interference covariance is positive definite")
        .inverse();
    linalg::hermitize(&j)
}

/// log det(I_N + H V V^H H^H J), evaluated through the Hermitian d×d form
/// log det(I_d + V^H H^H J H V).
pub fn mutual_information(h: &CMat, v: &CMat, j: &CMat) -> Result<f64> {
    if !linalg::all_finite(h) || !linalg::all_finite(v) || !linalg::all_finite(j) {
        return Err(Error::NonFinite("mutual information inputs".into()));
    }
    let hv = h * v;
    let inner = linalg::hermitize(&(CMat::identity(v.ncols(), v.ncols()) + hv.adjoint() * j * &hv));
    linalg::logdet_hpd(&inner)
        .ok_or_else(|| Error::Domain("I + V^H H^H J H V is not positive definite".into()))
}

/// The same quantity through the N×N form and an LU determinant.
pub fn mutual_information_nxn(h: &CMat, v: &CMat, j: &CMat) -> Result<f64> {
    if !linalg::all_finite(h) || !linalg::all_finite(v) || !linalg::all_finite(j) {
        return Err(Error::NonFinite("mutual information inputs".into()));
    }
    let hv = h * v;
    let m = CMat::identity(h.nrows(), h.nrows()) + &hv * hv.adjoint() * j;
    Ok(m.lu().determinant().norm().ln())
}

/// Mutual information of BS `k` under the given interference model, computed
/// as log det(I_d + Z^H Y^{-1} Z) with Z = H V_{g_k} and a Cholesky factor of Y.
pub fn link_mutual_information(
    h: &CMat,
    v_all: &[CMat],
    gk: usize,
    sigma2: f64,
    model: InterferenceModel,
) -> Result<f64> {
    if !linalg::all_finite(h) {
        return Err(Error::NonFinite("channel matrix".into()));
    }
    let y = interference_covariance(h, v_all, gk, sigma2, model);
    let chol = linalg::cholesky(y)
        .ok_or_else(|| Error::Domain("interference covariance not positive definite".into()))?;
    let z = h * &v_all[gk];
    let w = chol
        .l_dirty()
        .solve_lower_triangular(&z)
        .ok_or_else(|| Error::Domain("singular Cholesky factor".into()))?;
    let d = z.ncols();
    let inner = linalg::hermitize(&(CMat::identity(d, d) + w.adjoint() * w));
    linalg::logdet_hpd(&inner).ok_or_else(|| Error::Domain("log-det argument not positive definite".into()))
}

/// min over non-fully-cached members of F/(F − C_k) · I_k. Returns `None`
/// when every member is fully cached.
pub fn cluster_rate<I>(members: I) -> Option<f64>
where
    I: IntoIterator<Item = (f64, f64, f64)>,
{
    let mut best: Option<f64> = None;
    for (mi, cache, file) in members {
        if cache >= file {
            continue;
        }
        let r = file / (file - cache) * mi;
        best = Some(match best {
            Some(b) if b <= r => b,
            _ => r,
        });
    }
    best
}

/// Downloading sum-rate of every sample, with the true interference model.
pub fn sum_rate(config: &ProblemConfig, channels: &[Vec<CMat>], primal: &PrimalState) -> Result<RateReport> {
    sum_rate_with(config, channels, primal, InterferenceModel::Full)
}

/// `channels[t][k]` are the N×M matrices; `primal.beamformers[t]` the matching
/// beamformers.
pub fn sum_rate_with(
    config: &ProblemConfig,
    channels: &[Vec<CMat>],
    primal: &PrimalState,
    model: InterferenceModel,
) -> Result<RateReport> {
    let k_count = config.base_stations;
    let t_count = channels.len();
    if primal.beamformers.len() != t_count {
        return Err(Error::InvalidInput(format!(
            "{} beamformer samples for {} channel samples",
            primal.beamformers.len(),
            t_count
        )));
    }
    for k in 0..k_count {
        let f = config.file_size_of_bs(k);
        let c = primal.cache[k];
        if c > f {
            return Err(Error::Domain(format!("C_{k} = {c} exceeds file size {f}")));
        }
    }
    let fully_cached: Vec<bool> = (0..k_count)
        .map(|k| primal.cache[k] >= config.file_size_of_bs(k))
        .collect();

    let mut mutual_info = vec![vec![0.0; t_count]; k_count];
    for t in 0..t_count {
        for k in 0..k_count {
            mutual_info[k][t] = link_mutual_information(
                &channels[t][k],
                &primal.beamformers[t],
                config.cluster_of[k],
                config.noise[k],
                model,
            )?;
        }
    }

    let members = config.members();
    let mut cluster = vec![vec![0.0; t_count]; config.clusters];
    let mut sum = vec![0.0; t_count];
    for t in 0..t_count {
        for (g, ks) in members.iter().enumerate() {
            let r = cluster_rate(
                ks.iter()
                    .map(|&k| (mutual_info[k][t], primal.cache[k], config.file_sizes[g])),
            )
            .unwrap_or(f64::INFINITY);
            cluster[g][t] = r;
            sum[t] += r;
        }
    }
    let bits = sum.iter().map(|r| r / std::f64::consts::LN_2).collect();
    Ok(RateReport {
        mutual_info,
        cluster_rate: cluster,
        sum_rate: sum,
        sum_rate_bits: bits,
        fully_cached,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Constraint {
    Power { sample: usize },
    CacheBudget,
    CacheLower { entry: usize },
    CacheUpper { entry: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: Constraint,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn max_violation(&self) -> f64 {
        self.violations.iter().map(|v| v.magnitude).fold(0.0, f64::max)
    }
}

/// Power, cache-budget and cache-box constraints of the sample problem.
pub fn check_feasibility(config: &ProblemConfig, primal: &PrimalState, tol: f64) -> FeasibilityReport {
    let mut violations = Vec::new();
    for (t, vs) in primal.beamformers.iter().enumerate() {
        let power: f64 = vs.iter().map(linalg::frobenius_sq).sum();
        let excess = power - config.power_budget;
        if excess > tol {
            violations.push(Violation {
                constraint: Constraint::Power { sample: t },
                magnitude: excess,
            });
        }
    }
    let total: f64 = primal.cache.iter().sum();
    if total - config.cache_budget > tol {
        violations.push(Violation {
            constraint: Constraint::CacheBudget,
            magnitude: total - config.cache_budget,
        });
    }
    for (k, &c) in primal.cache.iter().enumerate() {
        if -c > tol {
            violations.push(Violation {
                constraint: Constraint::CacheLower { entry: k },
                magnitude: -c,
            });
        }
        let f = config.file_size_of_bs(k);
        if c - f > tol {
            violations.push(Violation {
                constraint: Constraint::CacheUpper { entry: k },
                magnitude: c - f,
            });
        }
    }
    FeasibilityReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(x: f64) -> CMat {
        CMat::from_element(1, 1, c64(x, 0.0))
    }

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMat {
        CMat::from_fn(r, c, |_, _| c64(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    #[test]
    fn interference_inverse_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random(&mut rng, 2, 4);
        let v = vec![random(&mut rng, 4, 2)];
        let j = interference_inverse(&h, &v, 0, 1.0);
        assert!((j - CMat::identity(2, 2)).norm() < 1e-15);

        let v = vec![CMat::zeros(4, 2), CMat::zeros(4, 2)];
        let j = interference_inverse(&h, &v, 0, 4.0);
        assert!((j - CMat::identity(2, 2) * c64(0.25, 0.0)).norm() < 1e-15);

        let j = interference_inverse(&scalar(1.0), &[scalar(0.3), scalar(1.0)], 0, 1.0);
        assert!((j[(0, 0)] - c64(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn interference_inverse_is_an_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = random(&mut rng, 2, 5);
        let v: Vec<CMat> = (0..3).map(|_| random(&mut rng, 5, 2)).collect();
        let j = interference_inverse(&h, &v, 1, 0.7);
        let y = interference_covariance(&h, &v, 1, 0.7, InterferenceModel::Full);
        assert!((j * y - CMat::identity(2, 2)).norm() < 1e-10);
    }

    #[test]
    fn mutual_information_scalar_cases() {
        let j = scalar(1.0);
        assert_eq!(mutual_information(&scalar(1.0), &scalar(0.0), &j).unwrap(), 0.0);
        let p: f64 = 3.7;
        let mi = mutual_information(&scalar(1.0), &scalar(p.sqrt()), &j).unwrap();
        assert!((mi - (1.0 + p).ln()).abs() < 1e-14);
    }

    #[test]
    fn mutual_information_rejects_non_finite() {
        let h = scalar(f64::NAN);
        assert!(matches!(
            mutual_information(&h, &scalar(1.0), &scalar(1.0)),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn unitary_rotation_and_det_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let h = random(&mut rng, 2, 4);
            let v: Vec<CMat> = (0..2).map(|_| random(&mut rng, 4, 2)).collect();
            let j = interference_inverse(&h, &v, 0, 0.3);
            let base = mutual_information(&h, &v[0], &j).unwrap();
            // unitary from the QR of a random matrix
            let q = random(&mut rng, 2, 2).qr().q();
            let rotated = mutual_information(&h, &(&v[0] * q), &j).unwrap();
            assert!((base - rotated).abs() <= 1e-10 * base.abs().max(1.0));
            let nxn = mutual_information_nxn(&h, &v[0], &j).unwrap();
            assert!((base - nxn).abs() <= 1e-10 * base.abs().max(1.0));
            let link = link_mutual_information(&h, &v, 0, 0.3, InterferenceModel::Full).unwrap();
            assert!((base - link).abs() <= 1e-10 * base.abs().max(1.0));
        }
    }

    fn one_cluster_config(k: usize) -> ProblemConfig {
        let mut cfg = ProblemConfig::uniform(1, k, 2, 1, 1);
        cfg.file_sizes = vec![100.0];
        cfg.cache_budget = 100.0;
        cfg
    }

    fn primal_with(cache: Vec<f64>, v: CMat) -> PrimalState {
        PrimalState {
            cache,
            beamformers: vec![vec![v]],
            eta: vec![vec![0.0]],
        }
    }

    #[test]
    fn sum_rate_scaling_rules() {
        let cfg = one_cluster_config(1);
        let h = vec![vec![CMat::from_row_slice(1, 2, &[c64(1.0, 0.0), c64(0.5, 0.2)])]];
        let v = CMat::from_column_slice(2, 1, &[c64(0.7, 0.1), c64(-0.2, 0.4)]);
        let raw = sum_rate(&cfg, &h, &primal_with(vec![0.0], v.clone())).unwrap();
        assert!((raw.sum_rate[0] - raw.mutual_info[0][0]).abs() < 1e-15);
        let half = sum_rate(&cfg, &h, &primal_with(vec![50.0], v)).unwrap();
        assert!((half.sum_rate[0] - 2.0 * half.mutual_info[0][0]).abs() < 1e-14);
    }

    #[test]
    fn cluster_min_over_members() {
        // MI (1.0, 3.0) nats, C = (50, 0), F = 100 → min(2.0, 3.0)
        let r = cluster_rate([(1.0, 50.0, 100.0), (3.0, 0.0, 100.0)]).unwrap();
        assert_eq!(r, 2.0);
        let enumerated = [1.0 * 100.0 / 50.0, 3.0 * 100.0 / 100.0]
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        assert_eq!(r, enumerated);
        // fully cached member drops out
        assert_eq!(cluster_rate([(1.0, 100.0, 100.0), (3.0, 0.0, 100.0)]), Some(3.0));
        assert_eq!(cluster_rate([(1.0, 100.0, 100.0)]), None);
    }

    #[test]
    fn sum_rate_flags_fully_cached_and_rejects_overflow() {
        let cfg = one_cluster_config(2);
        let h = vec![vec![
            CMat::from_row_slice(1, 2, &[c64(1.0, 0.0), c64(0.0, 0.0)]),
            CMat::from_row_slice(1, 2, &[c64(0.0, 0.0), c64(1.0, 0.0)]),
        ]];
        let v = CMat::from_column_slice(2, 1, &[c64(1.0, 0.0), c64(1.0, 0.0)]);
        let r = sum_rate(&cfg, &h, &primal_with(vec![100.0, 0.0], v.clone())).unwrap();
        assert_eq!(r.fully_cached, vec![true, false]);
        assert!((r.sum_rate[0] - 2f64.ln()).abs() < 1e-14);
        let r = sum_rate(&cfg, &h, &primal_with(vec![100.0, 100.0], v.clone())).unwrap();
        assert!(r.cluster_rate[0][0].is_infinite());
        assert!(matches!(
            sum_rate(&cfg, &h, &primal_with(vec![100.5, 0.0], v)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn sum_rate_monotone_in_cache() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut cfg = ProblemConfig::uniform(2, 2, 3, 1, 1);
        cfg.noise = vec![0.5; 4];
        let h = vec![(0..4).map(|_| random(&mut rng, 1, 3)).collect::<Vec<_>>()];
        let v: Vec<CMat> = (0..2).map(|_| random(&mut rng, 3, 1)).collect();
        let base_cache = vec![10.0, 20.0, 5.0, 0.0];
        let primal = PrimalState {
            cache: base_cache.clone(),
            beamformers: vec![v],
            eta: vec![vec![0.0; 2]],
        };
        let base = sum_rate(&cfg, &h, &primal).unwrap();
        for k in 0..4 {
            let mut p = primal.clone();
            p.cache[k] += 1.0;
            let bumped = sum_rate(&cfg, &h, &p).unwrap();
            assert!(bumped.sum_rate[0] >= base.sum_rate[0]);
            let g = cfg.cluster_of[k];
            let own = base.mutual_info[k][0] * 100.0 / (100.0 - base_cache[k]);
            if (own - base.cluster_rate[g][0]).abs() < 1e-12 {
                assert!(bumped.sum_rate[0] > base.sum_rate[0]);
            }
        }
    }

    #[test]
    fn feasibility_reports() {
        let cfg = ProblemConfig::uniform(2, 2, 3, 1, 2);
        let v0 = CMat::from_element(3, 1, c64((cfg.power_budget / 6.0).sqrt(), 0.0));
        let equal = PrimalState {
            cache: vec![cfg.cache_budget / 4.0; 4],
            beamformers: vec![vec![v0.clone(), v0.clone()]; 2],
            eta: vec![vec![0.0; 2]; 2],
        };
        assert!(check_feasibility(&cfg, &equal, 1e-9).is_feasible());

        let mut over = equal.clone();
        over.cache.iter_mut().for_each(|c| *c += 1.0);
        let report = check_feasibility(&cfg, &over, 1e-9);
        assert_eq!(report.violations.len(), 1);
        assert!((report.violations[0].magnitude - 4.0).abs() < 1e-12);

        let mut loud = equal.clone();
        for vs in loud.beamformers.iter_mut() {
            for v in vs.iter_mut() {
                *v *= C64::new(2f64.sqrt(), 0.0);
            }
        }
        let report = check_feasibility(&cfg, &loud, 1e-9);
        assert_eq!(report.violations.len(), 2);
        for v in &report.violations {
            assert!((v.magnitude - cfg.power_budget).abs() < 1e-9);
        }
    }
}
