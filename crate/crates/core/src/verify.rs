//! Numerical oracles for the surrogate bounds and the closed-form Lagrangian
//! minimizer.
//!
//! The reference quantities here (true rate-constraint values, finite
//! differences, a projected-gradient Lagrangian minimizer, a grid search over
//! caches) are computed from the rate model alone and never call into the
//! dual solver's own evaluation code.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::ProblemConfig;
use crate::dual::{self, DualState};
use crate::error::{Error, Result};
use crate::formulation::Formulation;
use crate::linalg::{self, c64, CMat};
use crate::model::{self, InterferenceModel, PrimalState};
use crate::surrogate::{self, SurrogateCoeff};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub name: String,
    pub max_abs_deviation: f64,
    pub max_rel_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub samples: usize,
    pub seed: u64,
    /// Worst observation, for the report.
    pub detail: String,
}

impl OracleResult {
    pub fn line(&self) -> String {
        format!(
            "{} {:<28} abs={:.3e} rel={:.3e} tol={:.0e} n={} seed={}  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.max_abs_deviation,
            self.max_rel_deviation,
            self.tolerance,
            self.samples,
            self.seed,
            self.detail
        )
    }
}

/// Central differences of `f` at `x`, one real coordinate at a time.
pub fn fd_gradient<F>(f: F, x: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(step > 0.0) {
        return Err(Error::InvalidInput(format!("finite-difference step {step} must be positive")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = f(&probe);
        probe[i] = x[i] - step;
        let down = f(&probe);
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("function value near coordinate {i}")));
        }
        grad.push((up - down) / (2.0 * step));
    }
    Ok(grad)
}

/// Real coordinates of a list of matrices: column-major, real part then
/// imaginary part of every entry.
pub fn pack(vs: &[CMat]) -> Vec<f64> {
    let mut out = Vec::new();
    for v in vs {
        for z in v.iter() {
            out.push(z.re);
            out.push(z.im);
        }
    }
    out
}

/// Inverse of [`pack`] for matrices shaped like `like`.
pub fn unpack(x: &[f64], like: &[CMat]) -> Vec<CMat> {
    let mut pos = 0;
    like.iter()
        .map(|v| {
            let n = v.len();
            let m = CMat::from_iterator(
                v.nrows(),
                v.ncols(),
                (0..n).map(|i| c64(x[pos + 2 * i], x[pos + 2 * i + 1])),
            );
            pos += 2 * n;
            m
        })
        .collect()
}

/// Largest real or imaginary part in magnitude.
fn max_coordinate(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.re.abs()).max(z.im.abs()))
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> CMat {
    let s = scale / std::f64::consts::SQRT_2;
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c64(s * re, s * im)
    })
}

/// One random link with its expansion point.
struct Link {
    h: CMat,
    v: Vec<CMat>,
    cluster: usize,
    sigma2: f64,
    file: f64,
    eta_i: f64,
    cache_i: f64,
}

fn random_link(config: &ProblemConfig, k: usize, rng: &mut ChaCha8Rng) -> Link {
    let (m, n, d) = (config.tx_antennas, config.rx_antennas, config.streams);
    let file = config.file_size_of_bs(k);
    Link {
        h: gaussian(rng, n, m, 1.0),
        v: (0..config.clusters).map(|_| gaussian(rng, m, d, 1.0)).collect(),
        cluster: config.cluster_of[k],
        sigma2: config.noise[k],
        file,
        eta_i: rng.random::<f64>() * 0.1,
        cache_i: rng.random::<f64>() * file * 0.9,
    }
}

/// (F − C)η − log det(I + H V V^H H^H J) from the rate model.
fn true_lhs(link: &Link, cache: f64, eta: f64, v: &[CMat], model: InterferenceModel) -> f64 {
    let mi = model::link_mutual_information(&link.h, v, link.cluster, link.sigma2, model).unwrap_or(f64::NAN);
    (link.file - cache) * eta - mi
}

#[derive(Default)]
struct Worst {
    abs: f64,
    rel: f64,
    detail: String,
}

impl Worst {
    fn record(&mut self, abs: f64, rel: f64, detail: impl FnOnce() -> String) {
        if abs.is_nan() || rel.is_nan() || rel > self.rel || (rel == self.rel && abs > self.abs) {
            self.abs = if abs.is_nan() { f64::INFINITY } else { abs };
            self.rel = if rel.is_nan() { f64::INFINITY } else { rel };
            self.detail = detail();
        }
    }
}

/// The three surrogate checks for one configuration: the bound never falls
/// below the true left-hand side, touches it at the expansion point, and
/// has the same gradient there. Every link of the configuration is drawn at
/// random `n_samples` times, each with its own probe point.
pub fn check_prop1(config: &ProblemConfig, n_samples: usize, seed: u64) -> Result<Vec<OracleResult>> {
    check_prop1_with(config, n_samples, seed, 0.0)
}

/// As [`check_prop1`] with `b_offset` added to every bound constant; any
/// non-zero offset must break the equality check.
pub fn check_prop1_with(
    config: &ProblemConfig,
    n_samples: usize,
    seed: u64,
    b_offset: f64,
) -> Result<Vec<OracleResult>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dominance = Worst::default();
    let mut equality = Worst::default();
    let mut gradient = Worst::default();
    let mut mcmb_dominance = Worst::default();
    let mut mcmb_equality = Worst::default();
    let mut lowest_margin = f64::INFINITY;
    let mut lowest_mcmb_margin = f64::INFINITY;

    for sample in 0..n_samples {
        let k = sample % config.base_stations;
        let link = random_link(config, k, &mut rng);
        for model in [InterferenceModel::Full, InterferenceModel::Ignored] {
            let mut coeff = surrogate::expansion_coefficients(
                &link.h,
                &link.v,
                link.cluster,
                link.sigma2,
                link.eta_i,
                link.cache_i,
                model,
            )?;
            coeff.b += b_offset;
            let mut hat = surrogate::mcmb_coefficients(&link.h, &link.v, link.cluster, link.sigma2, model)?;
            hat.b += b_offset;

            // tightness
            let at = coeff.eval(link.cache_i, link.eta_i, link.file, &link.v);
            let truth = true_lhs(&link, link.cache_i, link.eta_i, &link.v, model);
            let dev = (at - truth).abs();
            equality.record(dev, dev, || format!("sample {sample} link {k} {model:?}"));
            let mi = -true_lhs(&link, link.file, 0.0, &link.v, model);
            let dev = (hat.eval_h(&link.v) + mi).abs();
            mcmb_equality.record(dev, dev, || format!("sample {sample} link {k} {model:?}"));

            // dominance at a random probe
            let spread = [0.01, 0.1, 0.5, 1.0, 2.0][sample % 5];
            let probe_v: Vec<CMat> = link
                .v
                .iter()
                .map(|v| v + gaussian(&mut rng, v.nrows(), v.ncols(), spread))
                .collect();
            let probe_c = rng.random::<f64>() * link.file;
            let probe_eta = rng.random::<f64>() * (2.0 * link.eta_i + 1.0);
            let bound = coeff.eval(probe_c, probe_eta, link.file, &probe_v);
            let truth = true_lhs(&link, probe_c, probe_eta, &probe_v, model);
            let margin = bound - truth;
            if margin < lowest_margin {
                lowest_margin = margin;
                dominance.detail = format!("sample {sample} link {k} {model:?} margin {margin:.3e}");
            }
            let margin_h = hat.eval_h(&probe_v) + (-true_lhs(&link, link.file, 0.0, &probe_v, model));
            if margin_h < lowest_mcmb_margin {
                lowest_mcmb_margin = margin_h;
                mcmb_dominance.detail = format!("sample {sample} link {k} {model:?} margin {margin_h:.3e}");
            }

            // gradient match at the expansion point, on a subset of samples
            if sample % 10 == 0 {
                let x0 = pack(&link.v);
                let fd = fd_gradient(|x| true_lhs(&link, link.cache_i, link.eta_i, &unpack(x, &link.v), model), &x0, 1e-5)?;
                let analytic: Vec<f64> = (0..link.v.len())
                    .flat_map(|g| pack(&[coeff.grad_v(g, &link.v)]))
                    .collect();
                for (i, (a, f)) in analytic.iter().zip(&fd).enumerate() {
                    let abs = (a - f).abs();
                    gradient.record(abs, abs / f.abs().max(1e-3), || {
                        format!("sample {sample} link {k} {model:?} V coordinate {i}: {a:.6e} vs {f:.6e}")
                    });
                }
                let ce = [link.cache_i, link.eta_i];
                let fd = fd_gradient(|x| true_lhs(&link, x[0], x[1], &link.v, model), &ce, 1e-5)?;
                let (dc, de) = coeff.grad_cache_eta(link.cache_i, link.eta_i, link.file);
                for (name, a, f) in [("C", dc, fd[0]), ("eta", de, fd[1])] {
                    let abs = (a - f).abs();
                    gradient.record(abs, abs / f.abs().max(1e-3), || {
                        format!("sample {sample} link {k} {model:?} {name}: {a:.6e} vs {f:.6e}")
                    });
                }
            }
        }
    }
    dominance.abs = (-lowest_margin).max(0.0);
    dominance.rel = dominance.abs;
    mcmb_dominance.abs = (-lowest_mcmb_margin).max(0.0);
    mcmb_dominance.rel = mcmb_dominance.abs;

    let result = |name: &str, w: Worst, tol: f64, use_rel: bool| OracleResult {
        name: name.into(),
        max_abs_deviation: w.abs,
        max_rel_deviation: w.rel,
        tolerance: tol,
        passed: if use_rel { w.rel <= tol } else { w.abs <= tol },
        samples: n_samples,
        seed,
        detail: w.detail,
    };
    Ok(vec![
        result("bound_dominance", dominance, 1e-9, false),
        result("bound_equality", equality, 1e-8, false),
        result("bound_gradient", gradient, 1e-4, true),
        result("delivery_bound_dominance", mcmb_dominance, 1e-9, false),
        result("delivery_bound_equality", mcmb_equality, 1e-8, false),
    ])
}

/// Random instance for the Lagrangian check: channels, expansion point and
/// coefficients of every (sample, link).
pub struct LagrangianInstance {
    pub form: Formulation,
    pub channels: Vec<Vec<CMat>>,
    pub expansion: PrimalState,
    pub coeffs: Vec<Vec<SurrogateCoeff>>,
}

pub fn lagrangian_instance(config: &ProblemConfig, seed: u64) -> Result<LagrangianInstance> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, n, d) = (config.tx_antennas, config.rx_antennas, config.streams);
    let t_count = config.samples;
    let channels: Vec<Vec<CMat>> = (0..t_count)
        .map(|_| (0..config.base_stations).map(|_| gaussian(&mut rng, n, m, 1.0)).collect())
        .collect();
    let beamformers: Vec<Vec<CMat>> = (0..t_count)
        .map(|_| (0..config.clusters).map(|_| gaussian(&mut rng, m, d, 1.0)).collect())
        .collect();
    let eta: Vec<Vec<f64>> = (0..t_count)
        .map(|_| (0..config.clusters).map(|_| rng.random::<f64>() * 0.1).collect())
        .collect();
    let cache: Vec<f64> = (0..config.base_stations)
        .map(|k| rng.random::<f64>() * 0.9 * config.file_size_of_bs(k))
        .collect();
    let expansion = PrimalState {
        cache,
        beamformers,
        eta,
    };
    let form = Formulation::cache_allocation(config);
    let coeffs = (0..t_count)
        .map(|t| {
            (0..config.base_stations)
                .map(|k| {
                    surrogate::expansion_coefficients(
                        &channels[t][k],
                        &expansion.beamformers[t],
                        config.cluster_of[k],
                        config.noise[k],
                        expansion.eta[t][config.cluster_of[k]],
                        expansion.cache[k],
                        InterferenceModel::Full,
                    )
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LagrangianInstance {
        form,
        channels,
        expansion,
        coeffs,
    })
}

/// Multipliers at which the Lagrangian is minimized.
#[derive(Debug, Clone)]
pub struct Multipliers {
    /// `[t]`.
    pub delta: Vec<f64>,
    /// `[t][k]`.
    pub lambda: Vec<Vec<f64>>,
    pub mu: f64,
}

/// Value of a rate-constraint bound written out from its coefficients.
fn bound_value(c: &SurrogateCoeff, v: &[CMat], cache: f64, eta: f64, file: f64, eta_i: f64, cache_i: f64) -> f64 {
    let mut quad = 0.0;
    for vg in v {
        quad += (vg.adjoint() * &c.a * vg).trace().re;
    }
    let lin = 2.0 * (&c.b_mat * &v[c.cluster]).trace().re;
    quad + lin + c.b + (eta * eta + cache * cache) / 2.0 + file * eta - (eta_i + cache_i) * (eta + cache)
}

/// Lagrangian of the prox-regularized subproblem.
pub fn lagrangian(inst: &LagrangianInstance, mult: &Multipliers, x: &PrimalState) -> f64 {
    let form = &inst.form;
    let e = &inst.expansion;
    let mut total = 0.0;
    for t in 0..form.scenarios {
        let mut power = -form.power_budget;
        for g in 0..form.clusters {
            let f = form.file_size[t][g];
            let de = x.eta[t][g] - e.eta[t][g];
            let dv = &x.beamformers[t][g] - &e.beamformers[t][g];
            total += -f * x.eta[t][g] + form.rho1 / 2.0 * de * de + form.rho2 * linalg::frobenius_sq(&dv);
            power += linalg::frobenius_sq(&x.beamformers[t][g]);
        }
        total += mult.delta[t] * power;
        for k in 0..form.cluster_of.len() {
            let g = form.cluster_of[k];
            let c = &inst.coeffs[t][k];
            total += mult.lambda[t][k]
                * bound_value(
                    c,
                    &x.beamformers[t],
                    x.cache[k],
                    x.eta[t][g],
                    form.file_size[t][g],
                    e.eta[t][g],
                    e.cache[k],
                );
        }
    }
    for k in 0..x.cache.len() {
        let dc = x.cache[k] - e.cache[k];
        total += form.rho3 / 2.0 * dc * dc;
    }
    total + mult.mu * (x.cache.iter().sum::<f64>() - form.cache_budget)
}

/// Minimizes the Lagrangian over C ∈ [0, F], free η and free V by projected
/// gradient descent with per-block steps, until no coordinate moves by more
/// than `tol`.
pub fn minimize_lagrangian(inst: &LagrangianInstance, mult: &Multipliers, tol: f64) -> PrimalState {
    let form = &inst.form;
    let e = &inst.expansion;
    let k_count = form.cluster_of.len();
    let t_count = form.scenarios;
    let mut x = e.clone();

    // Block curvatures: V sees 2(ρ2 + δ + Σ λ ‖A‖), η sees ρ1 + Σ λ, C sees ρ3 + Σ_t λ.
    let mut step_v = vec![0.0; t_count];
    let mut step_eta = vec![vec![0.0; form.clusters]; t_count];
    for t in 0..t_count {
        let mut curv = form.rho2 + mult.delta[t];
        for k in 0..k_count {
            curv += mult.lambda[t][k] * inst.coeffs[t][k].a.norm();
        }
        step_v[t] = 1.0 / (2.0 * curv);
        for g in 0..form.clusters {
            let lam: f64 = form.members[g].iter().map(|&k| mult.lambda[t][k]).sum();
            step_eta[t][g] = 1.0 / (form.rho1 + lam);
        }
    }
    let step_c: Vec<f64> = (0..k_count)
        .map(|k| 1.0 / (form.rho3 + (0..t_count).map(|t| mult.lambda[t][k]).sum::<f64>()))
        .collect();

    for _ in 0..1_000_000 {
        let mut moved = 0.0f64;
        let mut grad_c = vec![0.0; k_count];
        let mut next_v = x.beamformers.clone();
        let mut next_eta = x.eta.clone();
        for t in 0..t_count {
            for g in 0..form.clusters {
                let v = &x.beamformers[t][g];
                let mut grad = (v - &e.beamformers[t][g]) * c64(2.0 * form.rho2, 0.0) + v * c64(2.0 * mult.delta[t], 0.0);
                let mut grad_eta = -form.file_size[t][g] + form.rho1 * (x.eta[t][g] - e.eta[t][g]);
                for k in 0..k_count {
                    let lam = mult.lambda[t][k];
                    if lam == 0.0 {
                        continue;
                    }
                    let c = &inst.coeffs[t][k];
                    grad += &c.a * v * c64(2.0 * lam, 0.0);
                    if form.cluster_of[k] == g {
                        grad += c.b_mat.adjoint() * c64(2.0 * lam, 0.0);
                        grad_eta += lam * (x.eta[t][g] + form.file_size[t][g] - e.eta[t][g] - e.cache[k]);
                    }
                }
                let v_new = v - grad * c64(step_v[t], 0.0);
                moved = moved.max(max_coordinate(&(&v_new - v)));
                next_v[t][g] = v_new;
                let eta_new = x.eta[t][g] - step_eta[t][g] * grad_eta;
                moved = moved.max((eta_new - x.eta[t][g]).abs());
                next_eta[t][g] = eta_new;
            }
            for k in 0..k_count {
                let g = form.cluster_of[k];
                grad_c[k] += mult.lambda[t][k] * (x.cache[k] - e.eta[t][g] - e.cache[k]);
            }
        }
        for k in 0..k_count {
            let grad = grad_c[k] + form.rho3 * (x.cache[k] - e.cache[k]) + mult.mu;
            let c_new = (x.cache[k] - step_c[k] * grad).clamp(0.0, form.cache_capacity[k]);
            moved = moved.max((c_new - x.cache[k]).abs());
            x.cache[k] = c_new;
        }
        x.beamformers = next_v;
        x.eta = next_eta;
        if moved < tol {
            break;
        }
    }
    x
}

/// Compares the closed-form Lagrangian minimizer against the numerical one
/// at `n_duals` random non-negative multiplier points.
pub fn check_prop2(config: &ProblemConfig, n_duals: usize, seed: u64) -> Result<OracleResult> {
    if !(config.rho1 > 0.0 && config.rho2 > 0.0 && config.rho3 > 0.0) {
        return Err(Error::InvalidInput(format!(
            "prox weights must be positive, got rho1={} rho2={} rho3={}",
            config.rho1, config.rho2, config.rho3
        )));
    }
    let inst = lagrangian_instance(config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut worst = Worst::default();
    for i in 0..n_duals {
        let mult = if i == 0 {
            Multipliers {
                delta: vec![0.0; config.samples],
                lambda: vec![vec![0.0; config.base_stations]; config.samples],
                mu: 0.0,
            }
        } else {
            Multipliers {
                delta: (0..config.samples).map(|_| rng.random::<f64>()).collect(),
                lambda: (0..config.samples)
                    .map(|_| (0..config.base_stations).map(|_| rng.random::<f64>() * 2.0).collect())
                    .collect(),
                mu: rng.random::<f64>(),
            }
        };
        let deviation = compare_minimizers(&inst, &mult)?;
        worst.record(deviation.0, deviation.0, || format!("dual point {i}: {}", deviation.1));
    }
    Ok(OracleResult {
        name: "lagrangian_minimizer".into(),
        max_abs_deviation: worst.abs,
        max_rel_deviation: worst.rel,
        tolerance: 1e-6,
        passed: worst.abs <= 1e-6,
        samples: n_duals,
        seed,
        detail: worst.detail,
    })
}

/// Largest per-coordinate gap between the closed form and the numerical
/// minimizer, with the coordinate's name.
pub fn compare_minimizers(inst: &LagrangianInstance, mult: &Multipliers) -> Result<(f64, String)> {
    let form = &inst.form;
    let groups = form.power_groups();
    let dual_point = DualState {
        delta: mult.delta.iter().map(|&d| vec![d; groups]).collect(),
        lambda: mult.lambda.clone(),
        mu: mult.mu,
        tilde_delta: mult.delta.iter().map(|&d| vec![d; groups]).collect(),
        tilde_lambda: mult.lambda.clone(),
        tilde_mu: mult.mu,
        theta: 1.0,
        iteration: 0,
    };
    let closed = dual::recover_primal(form, &inst.coeffs, &inst.expansion, &dual_point)?;
    let numeric = minimize_lagrangian(inst, mult, 1e-12);
    let mut worst = (0.0f64, String::new());
    let mut note = |dev: f64, what: String| {
        if dev > worst.0 || dev.is_nan() {
            worst = (if dev.is_nan() { f64::INFINITY } else { dev }, what);
        }
    };
    for (k, (a, b)) in closed.cache.iter().zip(&numeric.cache).enumerate() {
        note((a - b).abs(), format!("C[{k}]"));
    }
    for t in 0..form.scenarios {
        for g in 0..form.clusters {
            note((closed.eta[t][g] - numeric.eta[t][g]).abs(), format!("eta[{t}][{g}]"));
            let dv = max_coordinate(&(&closed.beamformers[t][g] - &numeric.beamformers[t][g]));
            note(dv, format!("V[{t}][{g}]"));
        }
    }
    Ok(worst)
}

/// Rate data for the grid search: MI of every (sample, link) at fixed
/// beamformers.
pub struct FixedBeamInstance {
    pub config: ProblemConfig,
    /// `[t][k]`, nats.
    pub mutual_info: Vec<Vec<f64>>,
}

impl FixedBeamInstance {
    pub fn new(config: &ProblemConfig, channels: &[Vec<CMat>], beamformers: &[Vec<CMat>]) -> Result<Self> {
        let mutual_info = channels
            .iter()
            .zip(beamformers)
            .map(|(hs, vs)| {
                hs.iter()
                    .enumerate()
                    .map(|(k, h)| {
                        model::link_mutual_information(h, vs, config.cluster_of[k], config.noise[k], InterferenceModel::Full)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FixedBeamInstance {
            config: config.clone(),
            mutual_info,
        })
    }

    /// Σ_t Σ_g F_g η_{g,t} with every η at its largest feasible value;
    /// infinite once a whole cluster is cached.
    pub fn objective(&self, cache: &[f64]) -> f64 {
        let cfg = &self.config;
        let members = cfg.members();
        let mut total = 0.0;
        for mi in &self.mutual_info {
            for (g, ks) in members.iter().enumerate() {
                let f = cfg.file_sizes[g];
                let eta = ks
                    .iter()
                    .filter(|&&k| cache[k] < f)
                    .map(|&k| mi[k] / (f - cache[k]))
                    .fold(f64::INFINITY, f64::min);
                total += f * eta;
            }
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOptimum {
    pub cache: Vec<f64>,
    pub objective: f64,
    /// Largest objective change between the optimum and a grid neighbour.
    pub step_change: f64,
}

/// Exhaustive search over caches that are multiples of `grid_step`, within
/// the boxes and the budget.
pub fn brute_force_cache(inst: &FixedBeamInstance, grid_step: f64) -> Result<GridOptimum> {
    let cfg = &inst.config;
    let k_count = cfg.base_stations;
    if k_count > 3 {
        return Err(Error::Refused(format!("grid search needs K <= 3, got K={k_count}")));
    }
    if !(grid_step > 0.0) {
        return Err(Error::InvalidInput(format!("grid step {grid_step} must be positive")));
    }
    let levels: Vec<usize> = (0..k_count)
        .map(|k| (cfg.file_size_of_bs(k).min(cfg.cache_budget) / grid_step + 1e-9).floor() as usize)
        .collect();
    let budget_levels = (cfg.cache_budget / grid_step + 1e-9).floor() as usize;
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut idx = vec![0usize; k_count];
    let value = |idx: &[usize]| -> f64 {
        let cache: Vec<f64> = idx.iter().map(|&i| i as f64 * grid_step).collect();
        inst.objective(&cache)
    };
    loop {
        if idx.iter().sum::<usize>() <= budget_levels {
            let v = value(&idx);
            if best.as_ref().is_none_or(|(_, b)| v > *b) {
                best = Some((idx.clone(), v));
            }
        }
        let mut pos = 0;
        loop {
            if pos == k_count {
                let (best_idx, objective) = best.expect("the zero cache is always on the grid");
                let mut step_change = 0.0f64;
                for k in 0..k_count {
                    for delta in [-1i64, 1] {
                        let mut n = best_idx.clone();
                        let moved = n[k] as i64 + delta;
                        if moved < 0 || moved as usize > levels[k] {
                            continue;
                        }
                        n[k] = moved as usize;
                        if n.iter().sum::<usize>() > budget_levels {
                            continue;
                        }
                        step_change = step_change.max((value(&n) - objective).abs());
                    }
                }
                return Ok(GridOptimum {
                    cache: best_idx.iter().map(|&i| i as f64 * grid_step).collect(),
                    objective,
                    step_change,
                });
            }
            if idx[pos] < levels[pos] {
                idx[pos] += 1;
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// The two-BS, one-cluster instance used by [`check_fixed_beam_cache`]:
/// config, channels `[t][k]` and unit-power beamformers `[t][0]`.
pub fn fixed_beam_case(seed: u64, samples: usize) -> (ProblemConfig, Vec<Vec<CMat>>, Vec<Vec<CMat>>) {
    let mut config = ProblemConfig::uniform(1, 2, 3, 1, samples);
    config.file_sizes = vec![1.0];
    config.cache_budget = 0.6;
    config.power_budget = 1.0;
    config.rho1 = 1.0;
    config.rho2 = 1.0;
    config.rho3 = 0.1;
    config.tol_outer = 1e-7;
    config.max_outer = 3000;
    config.seed = seed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // BS 1 sees a stronger channel, close enough that the optimum is interior
    let gains = [1.0, 1.4];
    let channels: Vec<Vec<CMat>> = (0..config.samples)
        .map(|_| gains.iter().map(|&g| gaussian(&mut rng, 1, 3, g)).collect())
        .collect();
    let beamformers: Vec<Vec<CMat>> = (0..config.samples)
        .map(|_| {
            let v = gaussian(&mut rng, 3, 1, 1.0);
            let norm = linalg::frobenius_sq(&v).sqrt();
            vec![v.unscale(norm)]
        })
        .collect();
    (config, channels, beamformers)
}

/// Two base stations in one cluster with fixed random beamformers: the SCA
/// cache solver against the grid optimum. Passes when the solver's objective
/// falls short of the grid's by no more than one grid step's worth of
/// objective change.
///
/// With one sample the objective along the budget line rises to a single
/// peak, so the local solver should find the global optimum. With several
/// samples it is a sum of such peaks and may have a local maximum at a kink
/// where the solver can stop.
pub fn check_fixed_beam_cache(seed: u64, samples: usize, grid_step: f64) -> Result<OracleResult> {
    let (config, channels, beamformers) = fixed_beam_case(seed, samples);
    let inst = FixedBeamInstance::new(&config, &channels, &beamformers)?;
    let grid = brute_force_cache(&inst, grid_step)?;
    let options = crate::sca::ScaOptions::cache_allocation(&config);
    let solved = crate::sca::solve_cache_fixed_beamformers(&config, &channels, &beamformers, &options)?;
    let achieved = inst.objective(&solved.primal.cache);
    let shortfall = grid.objective - achieved;
    let tolerance = grid.step_change;
    Ok(OracleResult {
        name: "fixed_beam_cache_vs_grid".into(),
        max_abs_deviation: shortfall.max(0.0),
        max_rel_deviation: shortfall.max(0.0) / grid.objective.abs().max(f64::MIN_POSITIVE),
        tolerance,
        passed: shortfall <= tolerance,
        samples,
        seed,
        detail: format!(
            "solver cache {:?} objective {achieved:.6}, grid cache {:?} objective {:.6}",
            solved.primal.cache, grid.cache, grid.objective
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_examples() {
        let g = fd_gradient(|x| x[0] * x[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-9);
        let g = fd_gradient(|_| 4.2, &[1.0, -2.0], 1e-5).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        let g = fd_gradient(|x| (1.0 + x[0] * x[0]).ln(), &[1.0], 1e-5).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn fd_names_bad_coordinate() {
        let err = fd_gradient(|x| if x[1] > 0.5 { f64::NAN } else { x[0] }, &[0.0, 0.5], 1e-3).unwrap_err();
        assert!(err.to_string().contains("coordinate 1"), "{err}");
    }

    #[test]
    fn fd_error_is_second_order() {
        let f = |x: &[f64]| (x[0]).sin() * x[0].exp();
        let exact = 0.7f64.cos() * 0.7f64.exp() + 0.7f64.sin() * 0.7f64.exp();
        let errs: Vec<f64> = [1e-2, 1e-3]
            .iter()
            .map(|&h| (fd_gradient(f, &[0.7], h).unwrap()[0] - exact).abs())
            .collect();
        let order = (errs[0] / errs[1]).log10();
        assert!(order >= 1.8, "order {order}");
    }

    #[test]
    fn pack_roundtrip() {
        let v = vec![CMat::from_fn(2, 3, |i, j| c64(i as f64, j as f64 + 0.5)), CMat::zeros(1, 1)];
        assert_eq!(unpack(&pack(&v), &v), v);
    }

    #[test]
    fn grid_refuses_large_instances() {
        let cfg = ProblemConfig::uniform(2, 2, 4, 1, 1);
        let inst = FixedBeamInstance {
            config: cfg,
            mutual_info: vec![vec![1.0; 4]],
        };
        assert!(matches!(brute_force_cache(&inst, 0.1), Err(Error::Refused(_))));
    }

    #[test]
    fn grid_single_bs_takes_everything() {
        let mut cfg = ProblemConfig::uniform(1, 1, 2, 1, 1);
        cfg.file_sizes = vec![1.0];
        cfg.cache_budget = 0.5;
        let inst = FixedBeamInstance {
            config: cfg,
            mutual_info: vec![vec![2.0]],
        };
        let best = brute_force_cache(&inst, 0.01).unwrap();
        assert!((best.cache[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn grid_symmetric_pair_splits_evenly() {
        let mut cfg = ProblemConfig::uniform(1, 2, 2, 1, 1);
        cfg.file_sizes = vec![1.0];
        cfg.cache_budget = 0.6;
        let inst = FixedBeamInstance {
            config: cfg,
            mutual_info: vec![vec![1.5, 1.5]],
        };
        let best = brute_force_cache(&inst, 0.01).unwrap();
        assert!((best.cache[0] - 0.3).abs() < 1e-9 && (best.cache[1] - 0.3).abs() < 1e-9, "{:?}", best.cache);
    }

    #[test]
    fn prop2_rejects_zero_rho3() {
        let mut cfg = ProblemConfig::uniform(2, 2, 4, 1, 2);
        cfg.rho3 = 0.0;
        assert!(matches!(check_prop2(&cfg, 1, 0), Err(Error::InvalidInput(_))));
    }
}
