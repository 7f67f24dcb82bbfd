//! Dual first-order solver for the strongly convex SCA subproblem.
//!
//! Every dual point (δ, λ, μ) determines the Lagrangian minimizer in closed
//! form; the dual function is then climbed by projected gradient steps,
//! optionally with momentum extrapolation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formulation::{CacheMode, Formulation};
use crate::linalg::{self, c64, CMat};
use crate::model::{InterferenceModel, PrimalState};
use crate::surrogate::SurrogateCoeff;

/// `[s][k]`.
pub type SurrogateCoeffs = Vec<Vec<SurrogateCoeff>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    /// `[s][power group]`.
    pub delta: Vec<Vec<f64>>,
    /// `[s][k]`.
    pub lambda: Vec<Vec<f64>>,
    pub mu: f64,
    pub tilde_delta: Vec<Vec<f64>>,
    pub tilde_lambda: Vec<Vec<f64>>,
    pub tilde_mu: f64,
    pub theta: f64,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualGradient {
    pub delta: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    pub mu: f64,
}

impl DualGradient {
    /// Largest positive residual over the power and budget constraints and
    /// the rate constraints marked active.
    pub fn max_violation_on(&self, active: &[Vec<bool>]) -> f64 {
        let mut m = self.mu.max(0.0);
        for &x in self.delta.iter().flatten() {
            m = m.max(x);
        }
        for (row, act) in self.lambda.iter().zip(active) {
            for (&x, &a) in row.iter().zip(act) {
                if a {
                    m = m.max(x);
                }
            }
        }
        m
    }

    /// Largest positive constraint residual.
    pub fn max_violation(&self) -> f64 {
        let mut m = self.mu.max(0.0);
        for row in self.delta.iter().chain(&self.lambda) {
            for &x in row {
                m = m.max(x);
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DualMode {
    Plain,
    Accelerated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub mode: DualMode,
    /// Multiplies the extrapolation weight; 0 turns the accelerated method
    /// into the plain one.
    pub momentum_scale: f64,
    pub record_trace: bool,
}

impl SolveOptions {
    pub fn new(mode: DualMode) -> Self {
        SolveOptions {
            mode,
            momentum_scale: 1.0,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerTraceRow {
    pub iteration: usize,
    pub dual_objective: f64,
    pub max_violation: f64,
    pub theta: f64,
}

#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub primal: PrimalState,
    pub dual: DualState,
    pub dual_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<InnerTraceRow>,
}

/// Closed-form minimizer of the Lagrangian together with the dual value and
/// gradient at the same dual point.
#[derive(Debug, Clone)]
pub struct DualEvaluation {
    pub primal: PrimalState,
    pub gradient: DualGradient,
    pub objective: f64,
}

/// Links whose rate constraint takes part in the subproblem. With fixed
/// caches a fully cached BS needs no backhaul and is dropped.
pub fn active_links(form: &Formulation, expansion: &PrimalState) -> Vec<Vec<bool>> {
    (0..form.scenarios)
        .map(|s| {
            (0..form.cluster_of.len())
                .map(|k| match form.cache_mode {
                    CacheMode::Optimize => true,
                    CacheMode::Fixed => {
                        expansion.cache[form.cache_entry[s][k]] < form.file_size_of(s, k)
                    }
                })
                .collect()
        })
        .collect()
}

impl DualState {
    /// All multipliers one, θ = 1.
    pub fn initial(form: &Formulation, active: &[Vec<bool>]) -> Self {
        let delta = vec![vec![1.0; form.power_groups()]; form.scenarios];
        let lambda: Vec<Vec<f64>> = active
            .iter()
            .map(|row| row.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect())
            .collect();
        let mu = match form.cache_mode {
            CacheMode::Optimize => 1.0,
            CacheMode::Fixed => 0.0,
        };
        DualState {
            tilde_delta: delta.clone(),
            tilde_lambda: lambda.clone(),
            tilde_mu: mu,
            delta,
            lambda,
            mu,
            theta: 1.0,
            iteration: 0,
        }
    }
}

/// Cache part of the closed-form minimizer.
pub fn recover_cache(form: &Formulation, expansion: &PrimalState, dual: &DualState) -> Vec<f64> {
    if form.cache_mode == CacheMode::Fixed {
        return expansion.cache.clone();
    }
    let n = form.entries();
    let mut num = vec![0.0; n];
    let mut den = vec![form.rho3; n];
    for s in 0..form.scenarios {
        for (k, &lam) in dual.lambda[s].iter().enumerate() {
            let j = form.cache_entry[s][k];
            num[j] += lam * expansion.eta[s][form.cluster_of[k]];
            den[j] += lam;
        }
    }
    let used = form.used_entries();
    (0..n)
        .map(|j| {
            if !used[j] {
                return 0.0;
            }
            let c = expansion.cache[j] + (num[j] - dual.mu) / den[j];
            c.max(0.0).min(form.cache_capacity[j])
        })
        .collect()
}

struct ScenarioResult {
    beams: Vec<CMat>,
    eta: Vec<f64>,
    power_residual: Vec<f64>,
    rate_residual: Vec<f64>,
    /// Υ and multiplier terms contributed by this scenario.
    objective: f64,
}

fn solve_scenario(
    form: &Formulation,
    coeffs: &[SurrogateCoeff],
    expansion: &PrimalState,
    cache: &[f64],
    dual: &DualState,
    s: usize,
) -> Result<ScenarioResult> {
    let g_count = form.clusters;
    let m = form.tx_antennas;
    let lambda = &dual.lambda[s];
    let v_i = &expansion.beamformers[s];
    let eta_i = &expansion.eta[s];

    let weighted_a = |ks: &mut dyn Iterator<Item = usize>| {
        let mut acc = CMat::zeros(m, m);
        for k in ks {
            if lambda[k] != 0.0 {
                acc += &coeffs[k].a * c64(lambda[k], 0.0);
            }
        }
        acc
    };
    let rhs = |g: usize| {
        let mut r = &v_i[g] * c64(form.rho2, 0.0);
        for &k in &form.members[g] {
            if lambda[k] != 0.0 {
                r -= coeffs[k].b_mat.adjoint() * c64(lambda[k], 0.0);
            }
        }
        r
    };
    let solve = |sys: CMat, rhs: CMat| -> Result<CMat> {
        let chol = linalg::cholesky(sys).ok_or_else(|| Error::Conditioning {
            context: "beamformer system matrix".into(),
            condition: f64::INFINITY,
        })?;
        Ok(chol.solve(&rhs))
    };
    let shifted = |mut a: CMat, shift: f64| {
        for i in 0..m {
            a[(i, i)] += c64(shift, 0.0);
        }
        a
    };

    let mut beams = Vec::with_capacity(g_count);
    match (form.model, form.power_groups()) {
        _ if form.fixed_beamformers => beams.extend(v_i.iter().cloned()),
        (InterferenceModel::Full, 1) => {
            let sys = shifted(weighted_a(&mut (0..lambda.len())), form.rho2 + dual.delta[s][0]);
            let chol = linalg::cholesky(sys).ok_or_else(|| Error::Conditioning {
                context: "beamformer system matrix".into(),
                condition: f64::INFINITY,
            })?;
            for g in 0..g_count {
                beams.push(chol.solve(&rhs(g)));
            }
        }
        (InterferenceModel::Full, _) => {
            let base = weighted_a(&mut (0..lambda.len()));
            for g in 0..g_count {
                let sys = shifted(base.clone(), form.rho2 + dual.delta[s][g]);
                beams.push(solve(sys, rhs(g))?);
            }
        }
        (InterferenceModel::Ignored, _) => {
            for g in 0..g_count {
                let p = form.power_group_of(g);
                let sys = shifted(
                    weighted_a(&mut form.members[g].iter().copied()),
                    form.rho2 + dual.delta[s][p],
                );
                beams.push(solve(sys, rhs(g))?);
            }
        }
    }

    let mut eta = Vec::with_capacity(g_count);
    for g in 0..g_count {
        let f = form.file_size[s][g];
        let w = form.weight[s][g];
        let lam_sum: f64 = form.members[g].iter().map(|&k| lambda[k]).sum();
        let e = match form.cache_mode {
            CacheMode::Optimize => {
                let lam_c: f64 = form.members[g]
                    .iter()
                    .map(|&k| lambda[k] * expansion.cache[form.cache_entry[s][k]])
                    .sum();
                eta_i[g] + ((w - lam_sum) * f + lam_c) / (form.rho1 + lam_sum)
            }
            CacheMode::Fixed => {
                let lam_rem: f64 = form.members[g]
                    .iter()
                    .map(|&k| lambda[k] * (f - cache[form.cache_entry[s][k]]))
                    .sum();
                eta_i[g] + (w * f - lam_rem) / form.rho1
            }
        };
        eta.push(e);
    }

    let norms: Vec<f64> = beams.iter().map(linalg::frobenius_sq).collect();
    let mut power_residual = vec![-form.power_budget; form.power_groups()];
    for g in 0..g_count {
        power_residual[form.power_group_of(g)] += norms[g];
    }

    let grams: Vec<CMat> = match form.model {
        InterferenceModel::Full => vec![linalg::gram_sum(m, beams.iter())],
        InterferenceModel::Ignored => beams
            .iter()
            .map(|v| linalg::gram_sum(m, std::iter::once(v)))
            .collect(),
    };
    let mut rate_residual = vec![0.0; lambda.len()];
    for (k, c) in coeffs.iter().enumerate() {
        let g = form.cluster_of[k];
        let gram = match form.model {
            InterferenceModel::Full => &grams[0],
            InterferenceModel::Ignored => &grams[g],
        };
        let cache_k = cache[form.cache_entry[s][k]];
        rate_residual[k] = c.quadratic_from_gram(gram)
            + c.linear(&beams[g])
            + c.b
            + c.cache_terms(cache_k, eta[g], form.file_size[s][g]);
    }

    let mut objective = 0.0;
    for g in 0..g_count {
        let d_eta = eta[g] - eta_i[g];
        objective += -form.weight[s][g] * form.file_size[s][g] * eta[g]
            + form.rho1 / 2.0 * d_eta * d_eta
            + form.rho2 * linalg::frobenius_sq(&(&beams[g] - &v_i[g]));
    }
    for (p, r) in power_residual.iter().enumerate() {
        objective += dual.delta[s][p] * r;
    }
    for (k, r) in rate_residual.iter().enumerate() {
        objective += lambda[k] * r;
    }

    Ok(ScenarioResult {
        beams,
        eta,
        power_residual,
        rate_residual,
        objective,
    })
}

/// Lagrangian minimizer, dual value and dual gradient at `dual`.
pub fn evaluate_dual(
    form: &Formulation,
    coeffs: &SurrogateCoeffs,
    expansion: &PrimalState,
    dual: &DualState,
) -> Result<DualEvaluation> {
    let cache = recover_cache(form, expansion, dual);
    let results: Vec<ScenarioResult> = (0..form.scenarios)
        .into_par_iter()
        .map(|s| solve_scenario(form, &coeffs[s], expansion, &cache, dual, s))
        .collect::<Result<_>>()?;

    let mut objective = 0.0;
    let mut beamformers = Vec::with_capacity(form.scenarios);
    let mut eta = Vec::with_capacity(form.scenarios);
    let mut g_delta = Vec::with_capacity(form.scenarios);
    let mut g_lambda = Vec::with_capacity(form.scenarios);
    for r in results {
        objective += r.objective;
        beamformers.push(r.beams);
        eta.push(r.eta);
        g_delta.push(r.power_residual);
        g_lambda.push(r.rate_residual);
    }
    let mut g_mu = 0.0;
    if form.cache_mode == CacheMode::Optimize {
        let total: f64 = cache.iter().sum();
        g_mu = total - form.cache_budget;
        objective += dual.mu * g_mu;
        for (j, c) in cache.iter().enumerate() {
            let d = c - expansion.cache[j];
            objective += form.rho3 / 2.0 * d * d;
        }
    }
    Ok(DualEvaluation {
        primal: PrimalState {
            cache,
            beamformers,
            eta,
        },
        gradient: DualGradient {
            delta: g_delta,
            lambda: g_lambda,
            mu: g_mu,
        },
        objective,
    })
}

/// Closed-form primal recovery alone.
pub fn recover_primal(
    form: &Formulation,
    coeffs: &SurrogateCoeffs,
    expansion: &PrimalState,
    dual: &DualState,
) -> Result<PrimalState> {
    Ok(evaluate_dual(form, coeffs, expansion, dual)?.primal)
}

/// Dual gradient at the point that produced `eval`.
pub fn dual_gradient(eval: &DualEvaluation) -> &DualGradient {
    &eval.gradient
}

fn step_rows(x: &[Vec<f64>], g: &[Vec<f64>], beta: f64) -> Vec<Vec<f64>> {
    x.iter()
        .zip(g)
        .map(|(xr, gr)| xr.iter().zip(gr).map(|(a, b)| (a + beta * b).max(0.0)).collect())
        .collect()
}

/// Keeps multipliers of dropped links at zero.
fn mask_rows(x: &mut [Vec<f64>], active: &[Vec<bool>]) {
    for (row, act) in x.iter_mut().zip(active) {
        for (v, &a) in row.iter_mut().zip(act) {
            if !a {
                *v = 0.0;
            }
        }
    }
}

/// max(x + β ∇D, 0) for every multiplier.
pub fn projected_step(dual: &DualState, grad: &DualGradient, beta: f64) -> DualState {
    let delta = step_rows(&dual.delta, &grad.delta, beta);
    let lambda = step_rows(&dual.lambda, &grad.lambda, beta);
    let mu = (dual.mu + beta * grad.mu).max(0.0);
    DualState {
        tilde_delta: delta.clone(),
        tilde_lambda: lambda.clone(),
        tilde_mu: mu,
        delta,
        lambda,
        mu,
        theta: dual.theta,
        iteration: dual.iteration + 1,
    }
}

pub fn next_theta(theta: f64) -> f64 {
    (1.0 + (1.0 + 4.0 * theta * theta).sqrt()) / 2.0
}

/// Projected step from the extrapolated point followed by extrapolation with
/// weight `scale · (θ_old − 1)/θ_new`. The extrapolated multipliers are kept
/// non-negative, since the closed-form recovery is only a minimizer there.
pub fn momentum_step(dual: &DualState, grad: &DualGradient, beta: f64, scale: f64) -> DualState {
    let theta = next_theta(dual.theta);
    let w = scale * (dual.theta - 1.0) / theta;
    let tilde_delta = step_rows(&dual.delta, &grad.delta, beta);
    let tilde_lambda = step_rows(&dual.lambda, &grad.lambda, beta);
    let tilde_mu = (dual.mu + beta * grad.mu).max(0.0);
    let extrapolate = |new: &[Vec<f64>], old: &[Vec<f64>]| -> Vec<Vec<f64>> {
        new.iter()
            .zip(old)
            .map(|(nr, or)| {
                nr.iter()
                    .zip(or)
                    .map(|(n, o)| {
                        if w == 0.0 {
                            *n
                        } else {
                            (n + w * (n - o)).max(0.0)
                        }
                    })
                    .collect()
            })
            .collect()
    };
    let delta = extrapolate(&tilde_delta, &dual.tilde_delta);
    let lambda = extrapolate(&tilde_lambda, &dual.tilde_lambda);
    let mu = if w == 0.0 {
        tilde_mu
    } else {
        (tilde_mu + w * (tilde_mu - dual.tilde_mu)).max(0.0)
    };
    DualState {
        delta,
        lambda,
        mu,
        tilde_delta,
        tilde_lambda,
        tilde_mu,
        theta,
        iteration: dual.iteration + 1,
    }
}

fn inner_rows(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| x * y).sum()
}

fn diff_rows(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x - y).collect())
        .collect()
}

/// D(x⁺) ≥ D(y) + ⟨∇D(y), x⁺ − y⟩ − ‖x⁺ − y‖² / 2β, the ascent condition
/// that holds for every β below the inverse Lipschitz constant.
fn sufficient_ascent(y: &DualState, at_y: &DualEvaluation, next: &DualState, at_next: f64, beta: f64) -> bool {
    let dd = diff_rows(&next.delta, &y.delta);
    let dl = diff_rows(&next.lambda, &y.lambda);
    let dm = next.mu - y.mu;
    let g = &at_y.gradient;
    let lin = inner_rows(&g.delta, &dd) + inner_rows(&g.lambda, &dl) + g.mu * dm;
    let sq = inner_rows(&dd, &dd) + inner_rows(&dl, &dl) + dm * dm;
    let slack = 1e-12 * at_y.objective.abs().max(1.0);
    at_next >= at_y.objective + lin - sq / (2.0 * beta) - slack
}

/// The iterate a step lands on, before extrapolation.
fn landing(next: &DualState) -> DualState {
    DualState {
        delta: next.tilde_delta.clone(),
        lambda: next.tilde_lambda.clone(),
        mu: next.tilde_mu,
        ..next.clone()
    }
}

/// Runs the dual ascent from all-ones multipliers.
pub fn solve_subproblem(
    form: &Formulation,
    coeffs: &SurrogateCoeffs,
    expansion: &PrimalState,
    options: SolveOptions,
) -> Result<SubproblemSolution> {
    let active = active_links(form, expansion);
    let start = DualState::initial(form, &active);
    solve_subproblem_from(form, coeffs, expansion, options, start)
}

/// Runs the dual ascent from `start` until the relative change of the dual
/// objective between accepted iterates drops below `form.tol_inner` and no
/// constraint is violated by more than `form.tol_feas`.
///
/// With `form.backtracking` the step β starts at `form.beta` and is halved
/// until the ascent condition holds, in both modes; otherwise β is fixed.
pub fn solve_subproblem_from(
    form: &Formulation,
    coeffs: &SurrogateCoeffs,
    expansion: &PrimalState,
    options: SolveOptions,
    start: DualState,
) -> Result<SubproblemSolution> {
    let active = active_links(form, expansion);
    let mut y = DualState {
        theta: 1.0,
        iteration: 0,
        tilde_delta: start.delta.clone(),
        tilde_lambda: start.lambda.clone(),
        tilde_mu: start.mu,
        ..start
    };
    mask_rows(&mut y.lambda, &active);
    mask_rows(&mut y.tilde_lambda, &active);
    let mut at_y = evaluate_dual(form, coeffs, expansion, &y)?;
    let mut beta = form.beta;
    let mut trace = Vec::new();
    let mut previous = at_y.objective;
    let scale = match options.mode {
        DualMode::Plain => 0.0,
        DualMode::Accelerated => options.momentum_scale,
    };
    let mut last: Option<(DualEvaluation, DualState)> = None;

    for s in 0..form.max_inner {
        if !at_y.objective.is_finite() {
            return Err(Error::NonFinite(format!("dual objective at inner iteration {s}")));
        }
        let (next, at_landing) = loop {
            let mut next = momentum_step(&y, &at_y.gradient, beta, scale);
            mask_rows(&mut next.lambda, &active);
            mask_rows(&mut next.tilde_lambda, &active);
            let land = landing(&next);
            let at_land = evaluate_dual(form, coeffs, expansion, &land)?;
            if !form.backtracking
                || beta < 1e-15
                || sufficient_ascent(&y, &at_y, &land, at_land.objective, beta)
            {
                break (next, at_land);
            }
            beta /= 2.0;
        };
        if !at_landing.objective.is_finite() {
            return Err(Error::NonFinite(format!("dual objective at inner iteration {s}")));
        }
        if options.record_trace {
            trace.push(InnerTraceRow {
                iteration: s + 1,
                dual_objective: at_landing.objective,
                max_violation: at_landing.gradient.max_violation_on(&active),
                theta: next.theta,
            });
        }
        let change = (at_landing.objective - previous).abs() / at_landing.objective.abs().max(1.0);
        if change < form.tol_inner && at_landing.gradient.max_violation_on(&active) <= form.tol_feas {
            return Ok(SubproblemSolution {
                primal: at_landing.primal,
                dual: landing(&next),
                dual_objective: at_landing.objective,
                iterations: s + 1,
                converged: true,
                trace,
            });
        }
        previous = at_landing.objective;
        let moved = next.delta != next.tilde_delta || next.lambda != next.tilde_lambda || next.mu != next.tilde_mu;
        at_y = if moved {
            evaluate_dual(form, coeffs, expansion, &next)?
        } else {
            at_landing.clone()
        };
        last = Some((at_landing, landing(&next)));
        y = next;
    }

    let (eval, at) = last.unwrap_or_else(|| (at_y, y));
    Err(Error::NonConvergence {
        iterations: form.max_inner,
        last: Box::new(SubproblemSolution {
            primal: eval.primal,
            dual: at,
            dual_objective: eval.objective,
            iterations: form.max_inner,
            converged: false,
            trace,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_recursion() {
        let t1 = next_theta(1.0);
        assert!((t1 - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-15);
        assert!((next_theta(t1) - 2.19353).abs() < 1e-5);
    }

    fn state(lambda: f64, mu: f64) -> DualState {
        DualState {
            delta: vec![vec![1.0]],
            lambda: vec![vec![lambda]],
            mu,
            tilde_delta: vec![vec![1.0]],
            tilde_lambda: vec![vec![lambda]],
            tilde_mu: mu,
            theta: 1.0,
            iteration: 0,
        }
    }

    fn grad(lambda: f64, mu: f64) -> DualGradient {
        DualGradient {
            delta: vec![vec![0.0]],
            lambda: vec![vec![lambda]],
            mu,
        }
    }

    #[test]
    fn projection_examples() {
        assert_eq!(projected_step(&state(1.0, 0.0), &grad(-2.0, 0.0), 1.0).lambda[0][0], 0.0);
        assert_eq!(projected_step(&state(1.0, 0.0), &grad(0.5, 0.0), 1.0).lambda[0][0], 1.5);
        assert_eq!(projected_step(&state(1.0, 0.0), &grad(0.0, -3.0), 1.0).mu, 0.0);
    }

    #[test]
    fn first_momentum_step_is_plain() {
        let d = state(0.7, 2.0);
        let g = grad(0.25, -0.5);
        let a = momentum_step(&d, &g, 1.0, 1.0);
        let p = projected_step(&d, &g, 1.0);
        assert_eq!(a.lambda, p.lambda);
        assert_eq!(a.delta, p.delta);
        assert_eq!(a.mu, p.mu);
        assert!((a.theta - 1.618033988749895).abs() < 1e-15);
    }
}
