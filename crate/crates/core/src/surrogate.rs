//! Convex quadratic upper bounds of the rate constraints.
//!
//! For a link k with beamformers V^(i) the log-det term is majorized by
//! `Σ_g tr(V_g^H A V_g) + 2 Re tr(B V_{g_k}) + const`, which is tight and
//! gradient-matching at V^(i). The cache-allocation form adds the η/C
//! coupling `(η² + C²)/2 + F η − (η^(i) + C^(i))(η + C)`.

use crate::error::{Error, Result};
use crate::linalg::{self, c64, CMat};
use crate::model::InterferenceModel;

/// Pivot-ratio condition estimate above which `I − U^H H V` is rejected.
pub const CONDITION_LIMIT: f64 = 1e12;

/// What the bound is attached to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundKind {
    /// (F − C)η − log det(...), with C and η both variables.
    Cache { eta_i: f64, cache_i: f64 },
    /// (F − C)η − log det(...), with C held at the stored value.
    Delivery,
}

#[derive(Debug, Clone)]
pub struct SurrogateCoeff {
    /// N×d.
    pub u: CMat,
    /// M×M Hermitian PSD.
    pub a: CMat,
    /// d×M.
    pub b_mat: CMat,
    pub b: f64,
    /// d×d, kept for diagnostics.
    pub q: CMat,
    pub cluster: usize,
    pub model: InterferenceModel,
    pub kind: BoundKind,
}

/// U, A, B, b for one link at the expansion point `v_all`.
///
/// `eta_i` and `cache_i` only enter the constant `b` through
/// `(η^(i) + C^(i))²/2`.
pub fn expansion_coefficients(
    h: &CMat,
    v_all: &[CMat],
    gk: usize,
    sigma2: f64,
    eta_i: f64,
    cache_i: f64,
    model: InterferenceModel,
) -> Result<SurrogateCoeff> {
    let mut c = quadratic_part(h, v_all, gk, sigma2, model)?;
    let s = eta_i + cache_i;
    c.b += s * s / 2.0;
    c.kind = BoundKind::Cache { eta_i, cache_i };
    Ok(c)
}

/// Â, B̂, b̂ for the delivery problem: the same quadratic part with no η/C
/// coupling in the constant.
pub fn mcmb_coefficients(
    h: &CMat,
    v_all: &[CMat],
    gk: usize,
    sigma2: f64,
    model: InterferenceModel,
) -> Result<SurrogateCoeff> {
    quadratic_part(h, v_all, gk, sigma2, model)
}

fn quadratic_part(
    h: &CMat,
    v_all: &[CMat],
    gk: usize,
    sigma2: f64,
    model: InterferenceModel,
) -> Result<SurrogateCoeff> {
    if !linalg::all_finite(h) || v_all.iter().any(|v| !linalg::all_finite(v)) {
        return Err(Error::NonFinite("expansion point".into()));
    }
    let n = h.nrows();
    let z = h * &v_all[gk];
    let d = z.ncols();

    let mut x = CMat::identity(n, n) * c64(sigma2, 0.0);
    match model {
        InterferenceModel::Full => {
            for v in v_all {
                let hv = h * v;
                x.gemm(c64(1.0, 0.0), &hv, &hv.adjoint(), c64(1.0, 0.0));
            }
        }
        InterferenceModel::Ignored => {
            x.gemm(c64(1.0, 0.0), &z, &z.adjoint(), c64(1.0, 0.0));
        }
    }
    let x_chol = linalg::cholesky(linalg::hermitize(&x)).ok_or_else(|| Error::Conditioning {
        context: "received covariance".into(),
        condition: f64::INFINITY,
    })?;
    let u = x_chol.solve(&z);

    let q = linalg::hermitize(&(CMat::identity(d, d) - u.adjoint() * &z));
    let q_chol = linalg::cholesky(q.clone()).ok_or_else(|| Error::Conditioning {
        context: "I - U^H H V".into(),
        condition: f64::INFINITY,
    })?;
    let condition = linalg::cholesky_condition(&q_chol);
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::Conditioning {
            context: "I - U^H H V".into(),
            condition,
        });
    }

    let uh_h = u.adjoint() * h;
    let q_inv_uh_h = q_chol.solve(&uh_h);
    let a = linalg::hermitize(&(uh_h.adjoint() * &q_inv_uh_h));
    let b_mat = -q_inv_uh_h;

    let inner = CMat::identity(d, d) + u.adjoint() * &u * c64(sigma2, 0.0);
    let trace_term = q_chol.solve(&inner).trace().re;
    let b = trace_term + linalg::logdet_from_cholesky(&q_chol) - d as f64;

    Ok(SurrogateCoeff {
        u,
        a,
        b_mat,
        b,
        q,
        cluster: gk,
        model,
        kind: BoundKind::Delivery,
    })
}

impl SurrogateCoeff {
    /// Σ_g tr(V_g^H A V_g) given the Gram matrix the model sees: Σ_g V_g V_g^H
    /// for the full model, V_{g_k} V_{g_k}^H when interference is ignored.
    pub fn quadratic_from_gram(&self, gram: &CMat) -> f64 {
        linalg::re_trace_product(&self.a, gram)
    }

    /// 2 Re tr(B V_{g_k}).
    pub fn linear(&self, v_own: &CMat) -> f64 {
        2.0 * linalg::re_trace_product(&self.b_mat, v_own)
    }

    /// The quadratic bound of −log det(...) alone.
    pub fn eval_h(&self, v_all: &[CMat]) -> f64 {
        let quad: f64 = match self.model {
            InterferenceModel::Full => v_all
                .iter()
                .map(|v| linalg::re_trace_product(&v.adjoint(), &(&self.a * v)))
                .sum(),
            InterferenceModel::Ignored => {
                let v = &v_all[self.cluster];
                linalg::re_trace_product(&v.adjoint(), &(&self.a * v))
            }
        };
        quad + self.linear(&v_all[self.cluster]) + self.b
    }

    /// Bound of (F − C)η − log det(...).
    pub fn eval(&self, cache: f64, eta: f64, file_size: f64, v_all: &[CMat]) -> f64 {
        let h = self.eval_h(v_all);
        h + self.cache_terms(cache, eta, file_size)
    }

    /// Everything in the bound that is not a function of V.
    pub fn cache_terms(&self, cache: f64, eta: f64, file_size: f64) -> f64 {
        match self.kind {
            BoundKind::Cache { eta_i, cache_i } => {
                (eta * eta + cache * cache) / 2.0 + file_size * eta - (eta_i + cache_i) * (eta + cache)
            }
            BoundKind::Delivery => (file_size - cache) * eta,
        }
    }

    /// (∂/∂C, ∂/∂η) of the bound.
    pub fn grad_cache_eta(&self, cache: f64, eta: f64, file_size: f64) -> (f64, f64) {
        match self.kind {
            BoundKind::Cache { eta_i, cache_i } => (cache - eta_i - cache_i, eta + file_size - eta_i - cache_i),
            BoundKind::Delivery => (-eta, file_size - cache),
        }
    }

    /// Gradient with respect to V_g, packed so that its real and imaginary
    /// parts are the derivatives along the real and imaginary coordinates.
    pub fn grad_v(&self, g: usize, v_all: &[CMat]) -> CMat {
        let mut grad = match self.model {
            InterferenceModel::Full => &self.a * &v_all[g] * c64(2.0, 0.0),
            InterferenceModel::Ignored if g == self.cluster => &self.a * &v_all[g] * c64(2.0, 0.0),
            InterferenceModel::Ignored => CMat::zeros(v_all[g].nrows(), v_all[g].ncols()),
        };
        if g == self.cluster {
            grad += self.b_mat.adjoint() * c64(2.0, 0.0);
        }
        grad
    }
}

/// f of the cache-allocation bound evaluated from explicit coefficients.
#[allow(clippy::too_many_arguments)]
pub fn eval_f(
    coeff: &SurrogateCoeff,
    cache: f64,
    eta: f64,
    v_all: &[CMat],
    file_size: f64,
    eta_i: f64,
    cache_i: f64,
) -> f64 {
    coeff.eval_h(v_all) + (eta * eta + cache * cache) / 2.0 + file_size * eta
        - (eta_i + cache_i) * (eta + cache)
}

pub fn eval_h(coeff: &SurrogateCoeff, v_all: &[CMat]) -> f64 {
    coeff.eval_h(v_all)
}
