//! Outer successive convex approximation loops: cache allocation over
//! training samples, beamforming design for delivery at fixed caches, and the
//! multi-file variant.
//!
//! Each outer step expands the surrogate bounds at the current point, solves
//! the prox-regularized subproblem in the dual, then restores feasibility and
//! sets every η to its largest feasible value min_k I_k / (F − C_k).

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ProblemConfig;
use crate::dual::{self, DualMode, DualState, InnerTraceRow, SolveOptions, SubproblemSolution, SurrogateCoeffs};
use crate::error::{Error, Result};
use crate::formulation::{CacheMode, FileCatalog, Formulation, PowerBudget};
use crate::linalg::{self, c64, CMat};
use crate::model::{self, InterferenceModel, PrimalState, RateReport};
use crate::surrogate;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaOptions {
    pub dual: SolveOptions,
    pub max_outer: usize,
    pub outer_window: usize,
    pub tol_outer: f64,
    /// Re-solves with a 10× tighter inner tolerance before a non-improving
    /// step ends the run.
    pub retries: usize,
    /// Start each inner solve from the previous multipliers instead of all
    /// ones.
    pub warm_start: bool,
    pub timing: bool,
    pub record_inner: bool,
}

impl ScaOptions {
    pub fn cache_allocation(config: &ProblemConfig) -> Self {
        ScaOptions {
            dual: SolveOptions::new(DualMode::Accelerated),
            max_outer: config.max_outer,
            outer_window: config.outer_window,
            tol_outer: config.tol_outer,
            retries: 3,
            warm_start: true,
            timing: false,
            record_inner: false,
        }
    }

    /// Stops when two consecutive objectives differ by less than `mcmb_tol`.
    pub fn delivery(config: &ProblemConfig) -> Self {
        ScaOptions {
            dual: SolveOptions::new(DualMode::Accelerated),
            max_outer: config.mcmb_max_iter,
            outer_window: 1,
            tol_outer: config.mcmb_tol,
            retries: 3,
            warm_start: true,
            timing: false,
            record_inner: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterTraceRow {
    pub iteration: usize,
    /// −Σ w F η at the accepted iterate.
    pub objective: f64,
    pub inner_iterations: usize,
    pub wall_ms: Option<f64>,
    pub max_residual: f64,
    pub retries: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub rows: Vec<OuterTraceRow>,
    /// Inner traces per outer iteration, when recorded.
    pub inner: Vec<Vec<InnerTraceRow>>,
}

impl SolveTrace {
    pub fn objectives(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.objective).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,objective,inner_iterations,wall_ms,max_residual\n");
        for r in &self.rows {
            let wall = r.wall_ms.map(|w| format!("{w:.3}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{:?},{},{},{:?}\n",
                r.iteration, r.objective, r.inner_iterations, wall, r.max_residual
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ScaResult {
    pub primal: PrimalState,
    pub trace: SolveTrace,
    /// The windowed relative-decrease rule fired.
    pub converged: bool,
    /// A step failed to improve even after tighter inner solves.
    pub stalled: bool,
    /// Relative objective improvement from one more subproblem solve at the
    /// returned point.
    pub certificate: f64,
}

pub fn objective(form: &Formulation, primal: &PrimalState) -> f64 {
    let mut total = 0.0;
    for s in 0..form.scenarios {
        for g in 0..form.clusters {
            total -= form.weight[s][g] * form.file_size[s][g] * primal.eta[s][g];
        }
    }
    total
}

/// Largest violation of the power, budget and box constraints.
pub fn feasibility_residual(form: &Formulation, primal: &PrimalState) -> f64 {
    let mut worst = 0.0f64;
    for vs in &primal.beamformers {
        let mut power = vec![0.0; form.power_groups()];
        for (g, v) in vs.iter().enumerate() {
            power[form.power_group_of(g)] += linalg::frobenius_sq(v);
        }
        for p in power {
            worst = worst.max(p - form.power_budget);
        }
    }
    let total: f64 = primal.cache.iter().sum();
    worst = worst.max(total - form.cache_budget);
    for (j, &c) in primal.cache.iter().enumerate() {
        worst = worst.max(-c).max(c - form.cache_capacity[j]);
    }
    worst
}

/// Euclidean projection onto {0 ≤ c ≤ cap, Σ c ≤ budget}.
pub fn project_cache(cache: &[f64], caps: &[f64], budget: f64) -> Vec<f64> {
    let clip = |tau: f64| -> Vec<f64> {
        cache
            .iter()
            .zip(caps)
            .map(|(&c, &u)| (c - tau).max(0.0).min(u))
            .collect()
    };
    let base = clip(0.0);
    if base.iter().sum::<f64>() <= budget {
        return base;
    }
    let mut lo = 0.0;
    let mut hi = cache.iter().cloned().fold(0.0, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if clip(mid).iter().sum::<f64>() > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    clip(hi)
}

pub fn restore_feasibility(form: &Formulation, primal: &mut PrimalState) {
    for vs in primal.beamformers.iter_mut() {
        let mut power = vec![0.0; form.power_groups()];
        for (g, v) in vs.iter().enumerate() {
            power[form.power_group_of(g)] += linalg::frobenius_sq(v);
        }
        for (g, v) in vs.iter_mut().enumerate() {
            let p = power[form.power_group_of(g)];
            if p > form.power_budget {
                *v *= c64((form.power_budget / p).sqrt(), 0.0);
            }
        }
    }
    if form.cache_mode == CacheMode::Optimize {
        primal.cache = project_cache(&primal.cache, &form.cache_capacity, form.cache_budget);
    }
}

/// Sets η_{g,s} = min over BSs that still need backhaul of I_k / (F − C_k).
/// Clusters without such BSs keep their η when caches are optimized and get
/// η = 0 when caches are fixed.
pub fn tighten_eta(form: &Formulation, channels: &[Vec<CMat>], primal: &mut PrimalState) -> Result<()> {
    let etas: Vec<Vec<f64>> = (0..form.scenarios)
        .into_par_iter()
        .map(|s| {
            let mut out = primal.eta[s].clone();
            for g in 0..form.clusters {
                let f = form.file_size[s][g];
                let mut best: Option<f64> = None;
                for &k in &form.members[g] {
                    let c = primal.cache[form.cache_entry[s][k]];
                    if c >= f {
                        continue;
                    }
                    let mi = model::link_mutual_information(
                        &channels[s][k],
                        &primal.beamformers[s],
                        g,
                        form.noise[k],
                        form.model,
                    )?;
                    let r = mi / (f - c);
                    best = Some(best.map_or(r, |b: f64| b.min(r)));
                }
                match (best, form.cache_mode) {
                    (Some(r), _) => out[g] = r,
                    (None, CacheMode::Fixed) => out[g] = 0.0,
                    (None, CacheMode::Optimize) => {}
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    primal.eta = etas;
    Ok(())
}

/// Equal power split, equal cache split (or the given caches), tight η.
pub fn initial_point(
    form: &Formulation,
    channels: &[Vec<CMat>],
    cache: Option<&[f64]>,
) -> Result<PrimalState> {
    let clusters_per_group = match form.power {
        PowerBudget::Sum => form.clusters,
        PowerBudget::PerCluster => 1,
    };
    let (m, d) = (form.tx_antennas, form.streams);
    let entry = (form.power_budget / (clusters_per_group * m * d) as f64).sqrt();
    let v0 = CMat::from_element(m, d, c64(entry, 0.0));

    let cache = match cache {
        Some(c) => {
            if c.len() != form.entries() {
                return Err(Error::InvalidInput(format!(
                    "{} cache values for {} entries",
                    c.len(),
                    form.entries()
                )));
            }
            for (j, &x) in c.iter().enumerate() {
                if !(x >= 0.0) || x > form.cache_capacity[j] {
                    return Err(Error::Domain(format!(
                        "cache entry {j} = {x} outside [0, {}]",
                        form.cache_capacity[j]
                    )));
                }
            }
            c.to_vec()
        }
        None => equal_cache_split(form),
    };
    let mut primal = PrimalState {
        cache,
        beamformers: vec![vec![v0; form.clusters]; form.scenarios],
        eta: vec![vec![0.0; form.clusters]; form.scenarios],
    };
    tighten_eta(form, channels, &mut primal)?;
    Ok(primal)
}

/// C_tot / (K · |files of the BS's cluster|) per entry, kept below the
/// smallest file size.
pub fn equal_cache_split(form: &Formulation) -> Vec<f64> {
    let used = form.used_entries();
    let k_count = form.cluster_of.len();
    let mut files_of = vec![0usize; k_count];
    for (j, &u) in used.iter().enumerate() {
        if u {
            files_of[form.entry_owner[j]] += 1;
        }
    }
    let min_cap = form
        .cache_capacity
        .iter()
        .zip(&used)
        .filter(|(_, &u)| u)
        .map(|(&c, _)| c)
        .fold(f64::INFINITY, f64::min);
    let mut clamped = false;
    let out = (0..form.entries())
        .map(|j| {
            if !used[j] {
                return 0.0;
            }
            let share = form.cache_budget / (k_count * files_of[form.entry_owner[j]]) as f64;
            if share >= min_cap {
                clamped = true;
                0.99 * min_cap
            } else {
                share
            }
        })
        .collect();
    if clamped {
        log::warn!("equal cache split reaches a file size; starting from 0.99 of the smallest file instead");
    }
    out
}

pub fn build_coefficients(
    form: &Formulation,
    channels: &[Vec<CMat>],
    primal: &PrimalState,
) -> Result<SurrogateCoeffs> {
    (0..form.scenarios)
        .into_par_iter()
        .map(|s| {
            (0..form.cluster_of.len())
                .map(|k| {
                    let g = form.cluster_of[k];
                    let h = &channels[s][k];
                    let v = &primal.beamformers[s];
                    match form.cache_mode {
                        CacheMode::Optimize => surrogate::expansion_coefficients(
                            h,
                            v,
                            g,
                            form.noise[k],
                            primal.eta[s][g],
                            primal.cache[form.cache_entry[s][k]],
                            form.model,
                        ),
                        CacheMode::Fixed => surrogate::mcmb_coefficients(h, v, g, form.noise[k], form.model),
                    }
                })
                .collect()
        })
        .collect()
}

/// One surrogate solve from `x`, followed by feasibility restoration and η
/// tightening.
pub fn sca_step(
    form: &Formulation,
    channels: &[Vec<CMat>],
    x: &PrimalState,
    options: SolveOptions,
    warm: Option<&DualState>,
) -> Result<(PrimalState, SubproblemSolution)> {
    let coeffs = build_coefficients(form, channels, x)?;
    let sol = match warm {
        Some(start) => dual::solve_subproblem_from(form, &coeffs, x, options, start.clone())?,
        None => dual::solve_subproblem(form, &coeffs, x, options)?,
    };
    let mut next = sol.primal.clone();
    restore_feasibility(form, &mut next);
    tighten_eta(form, channels, &mut next)?;
    Ok((next, sol))
}

fn check_channels(form: &Formulation, channels: &[Vec<CMat>]) -> Result<()> {
    if channels.len() != form.scenarios {
        return Err(Error::InvalidInput(format!(
            "{} channel scenarios for {} in the formulation",
            channels.len(),
            form.scenarios
        )));
    }
    let k_count = form.cluster_of.len();
    for (s, hs) in channels.iter().enumerate() {
        if hs.len() != k_count {
            return Err(Error::InvalidInput(format!("scenario {s} has {} channels, K={k_count}", hs.len())));
        }
        for h in hs {
            if h.ncols() != form.tx_antennas || h.nrows() != form.streams {
                return Err(Error::InvalidInput(format!(
                    "channel is {}×{}, expected {}×{}",
                    h.nrows(),
                    h.ncols(),
                    form.streams,
                    form.tx_antennas
                )));
            }
            if !linalg::all_finite(h) {
                return Err(Error::NonFinite(format!("channel of scenario {s}")));
            }
        }
    }
    Ok(())
}

/// The generic outer loop.
pub fn run_sca(
    form: &Formulation,
    channels: &[Vec<CMat>],
    initial: PrimalState,
    options: &ScaOptions,
) -> Result<ScaResult> {
    check_channels(form, channels)?;
    let mut x = initial;
    let mut obj = objective(form, &x);
    let mut trace = SolveTrace::default();
    trace.rows.push(OuterTraceRow {
        iteration: 0,
        objective: obj,
        inner_iterations: 0,
        wall_ms: None,
        max_residual: feasibility_residual(form, &x).max(0.0),
        retries: 0,
    });
    let mut converged = false;
    let mut stalled = false;
    let mut warm: Option<DualState> = None;

    for i in 1..=options.max_outer {
        let start = options.timing.then(Instant::now);
        let mut sub = form.clone();
        let mut dual_opts = options.dual;
        dual_opts.record_trace = options.record_inner;
        let mut accepted = None;
        let mut inner_total = 0;
        for attempt in 0..=options.retries {
            let step = sca_step(&sub, channels, &x, dual_opts, warm.as_ref()).map_err(|e| Error::Outer {
                iteration: i,
                trace: trace.clone(),
                source: Box::new(e),
            })?;
            inner_total += step.1.iterations;
            let cand_obj = objective(form, &step.0);
            log::debug!(
                "outer {i} attempt {attempt}: objective {obj:.6} -> raw {:.6} -> restored {cand_obj:.6}, power residual {:.3e}, inner {}",
                objective(form, &step.1.primal),
                feasibility_residual(form, &step.1.primal),
                step.1.iterations
            );
            if cand_obj <= obj {
                accepted = Some((step, cand_obj, attempt));
                break;
            }
            sub.tol_inner *= 0.1;
            sub.tol_feas *= 0.1;
        }
        let Some(((next, sol), next_obj, attempts)) = accepted else {
            stalled = true;
            break;
        };
        x = next;
        obj = next_obj;
        if options.warm_start {
            warm = Some(sol.dual.clone());
        }
        trace.rows.push(OuterTraceRow {
            iteration: i,
            objective: obj,
            inner_iterations: inner_total,
            wall_ms: start.map(|s| s.elapsed().as_secs_f64() * 1e3),
            max_residual: feasibility_residual(form, &x).max(0.0),
            retries: attempts,
        });
        if options.record_inner {
            trace.inner.push(sol.trace);
        }
        let w = options.outer_window;
        if i >= w {
            let past = trace.rows[i - w].objective;
            let rel = (past - obj) / past.abs().max(f64::MIN_POSITIVE);
            if rel < options.tol_outer {
                converged = true;
                break;
            }
        }
    }

    let certificate = match sca_step(form, channels, &x, options.dual, warm.as_ref()) {
        Ok((cand, _)) => {
            let cand_obj = objective(form, &cand);
            ((obj - cand_obj) / obj.abs().max(f64::MIN_POSITIVE)).max(0.0)
        }
        Err(e) => {
            log::warn!("stationarity re-solve failed: {e}");
            f64::NAN
        }
    };
    Ok(ScaResult {
        primal: x,
        trace,
        converged,
        stalled,
        certificate,
    })
}

/// Equal-split initialization for the single-file problem.
pub fn initialize_cache_problem(config: &ProblemConfig, channels: &[Vec<CMat>]) -> Result<PrimalState> {
    let form = Formulation::cache_allocation_with(
        config,
        channels.len(),
        InterferenceModel::Full,
        PowerBudget::Sum,
        1.0,
    );
    initial_point(&form, channels, None)
}

/// Cache allocation over the training samples `channels[t][k]`.
pub fn solve_cache_allocation(
    config: &ProblemConfig,
    channels: &[Vec<CMat>],
    options: &ScaOptions,
) -> Result<ScaResult> {
    let form = Formulation::cache_allocation_with(
        config,
        channels.len(),
        InterferenceModel::Full,
        PowerBudget::Sum,
        1.0,
    );
    solve_formulation(&form, channels, options)
}

pub fn solve_formulation(form: &Formulation, channels: &[Vec<CMat>], options: &ScaOptions) -> Result<ScaResult> {
    check_channels(form, channels)?;
    let init = initial_point(form, channels, None)?;
    run_sca(form, channels, init, options)
}

/// Cache allocation with every beamformer held at `beamformers[t]`; only C
/// and η move.
pub fn solve_cache_fixed_beamformers(
    config: &ProblemConfig,
    channels: &[Vec<CMat>],
    beamformers: &[Vec<CMat>],
    options: &ScaOptions,
) -> Result<ScaResult> {
    let mut form = Formulation::cache_allocation_with(
        config,
        channels.len(),
        InterferenceModel::Full,
        PowerBudget::Sum,
        1.0,
    );
    form.fixed_beamformers = true;
    check_channels(&form, channels)?;
    if beamformers.len() != channels.len() || beamformers.iter().any(|v| v.len() != form.clusters) {
        return Err(Error::InvalidInput(format!(
            "need {} samples × {} cluster beamformers",
            channels.len(),
            form.clusters
        )));
    }
    let mut init = initial_point(&form, channels, None)?;
    init.beamformers = beamformers.to_vec();
    tighten_eta(&form, channels, &mut init)?;
    run_sca(&form, channels, init, options)
}

/// Beamformers for one realization at fixed caches.
#[derive(Debug, Clone)]
pub struct DeliveryResult {
    pub beamformers: Vec<CMat>,
    /// Rates under true inter-cluster interference.
    pub report: RateReport,
    pub trace: SolveTrace,
    pub converged: bool,
}

/// Delivery beamforming under the true interference model and a shared power
/// budget.
pub fn solve_mcmb(config: &ProblemConfig, h: &[CMat], cache: &[f64]) -> Result<DeliveryResult> {
    solve_mcmb_with(config, h, cache, InterferenceModel::Full, PowerBudget::Sum)
}

pub fn solve_mcmb_with(
    config: &ProblemConfig,
    h: &[CMat],
    cache: &[f64],
    model: InterferenceModel,
    power: PowerBudget,
) -> Result<DeliveryResult> {
    let form = Formulation::delivery(config, model, power);
    let channels = vec![h.to_vec()];
    check_channels(&form, &channels)?;
    let init = initial_point(&form, &channels, Some(cache))?;
    let result = run_sca(&form, &channels, init, &ScaOptions::delivery(config))?;
    let report = model::sum_rate(config, &channels, &result.primal)?;
    Ok(DeliveryResult {
        beamformers: result.primal.beamformers.into_iter().next().expect("one scenario"),
        report,
        trace: result.trace,
        converged: result.converged,
    })
}

#[derive(Debug, Clone)]
pub struct MultiFileResult {
    /// `[k][file]`.
    pub cache: Vec<Vec<f64>>,
    pub result: ScaResult,
}

/// Multi-file allocation; `channels[f][t][k]` holds the samples of request
/// tuple `f` in `catalog.tuples()` order.
pub fn solve_multifile(
    config: &ProblemConfig,
    catalog: &FileCatalog,
    channels: &[Vec<Vec<CMat>>],
    options: &ScaOptions,
) -> Result<MultiFileResult> {
    let form = Formulation::multifile(config, catalog)?;
    let tuples = catalog.tuples().len();
    if channels.len() != tuples || channels.iter().any(|c| c.len() != config.samples) {
        return Err(Error::InvalidInput(format!(
            "need {tuples} request tuples × {} samples of channels",
            config.samples
        )));
    }
    let flat: Vec<Vec<CMat>> = channels.iter().flatten().cloned().collect();
    let result = solve_formulation(&form, &flat, options)?;
    let stride = catalog.max_files();
    let cache = (0..config.base_stations)
        .map(|k| {
            let g = config.cluster_of[k];
            (0..catalog.sizes[g].len())
                .map(|f| result.primal.cache[k * stride + f])
                .collect()
        })
        .collect();
    Ok(MultiFileResult { cache, result })
}

/// Nearest-integer rounding, then while the budget is exceeded decrement the
/// entry with the largest rounding-up residual (lowest index on ties).
pub fn round_cache(cache: &[f64], budget: f64) -> Vec<i64> {
    let mut rounded: Vec<i64> = cache.iter().map(|c| c.round() as i64).collect();
    let mut residual: Vec<f64> = cache
        .iter()
        .zip(&rounded)
        .map(|(&c, &r)| r as f64 - c)
        .collect();
    while (rounded.iter().sum::<i64>() as f64) > budget {
        let mut pick: Option<usize> = None;
        for (j, &r) in residual.iter().enumerate() {
            if r > 0.0 && pick.is_none_or(|p| r > residual[p]) {
                pick = Some(j);
            }
        }
        let Some(j) = pick else { break };
        rounded[j] -= 1;
        residual[j] -= 1.0;
    }
    rounded
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_examples() {
        assert_eq!(round_cache(&[10.4, 9.6], 20.0), vec![10, 10]);
        assert_eq!(round_cache(&[10.6, 9.6], 20.0), vec![10, 10]);
        assert_eq!(round_cache(&[3.0, 7.0, 0.0], 10.0), vec![3, 7, 0]);
        assert_eq!(round_cache(&[10.7, 9.6], 20.0), vec![11, 9]);
        assert_eq!(round_cache(&[10.9, 9.6], 20.0), vec![11, 9]);
    }

    #[test]
    fn projection_meets_budget() {
        let p = project_cache(&[50.0, 30.0, -2.0, 120.0], &[100.0; 4], 120.0);
        assert!((p.iter().sum::<f64>() - 120.0).abs() < 1e-9);
        assert!(p.iter().all(|&c| (0.0..=100.0).contains(&c)));
        let q = project_cache(&[10.0, 20.0], &[100.0, 100.0], 120.0);
        assert_eq!(q, vec![10.0, 20.0]);
    }

    #[test]
    fn paper_initialization() {
        let cfg = ProblemConfig::uniform(4, 3, 20, 2, 1);
        let h: Vec<Vec<CMat>> = vec![vec![CMat::zeros(2, 20); 12]];
        let x = initialize_cache_problem(&cfg, &h).unwrap();
        assert!(x.beamformers[0].iter().all(|v| v.iter().all(|z| *z == c64(0.5, 0.0))));
        assert!(x.cache.iter().all(|&c| c == 10.0));
        assert!(x.eta[0].iter().all(|&e| e == 0.0));
    }
}
