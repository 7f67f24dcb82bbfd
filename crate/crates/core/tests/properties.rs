use cran_cache::experiments::empirical_cdf;
use cran_cache::linalg::{c64, CMat};
use cran_cache::model::{self, InterferenceModel};
use cran_cache::sca::{project_cache, round_cache};
use cran_cache::surrogate;
use proptest::prelude::*;

fn cmat(rows: usize, cols: usize, vals: &[(f64, f64)]) -> CMat {
    CMat::from_fn(rows, cols, |i, j| {
        let (re, im) = vals[(i * cols + j) % vals.len()];
        c64(re, im)
    })
}

fn entries(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rounding_respects_budget(cache in prop::collection::vec(0.0..50.0f64, 1..8), slack in 0.0..5.0f64) {
        let budget = cache.iter().sum::<f64>() + slack;
        let r = round_cache(&cache, budget);
        prop_assert!(r.iter().sum::<i64>() as f64 <= budget + 1e-9);
        for (x, y) in cache.iter().zip(&r) {
            prop_assert!((*y as f64 - x).abs() < 1.0 + 1e-12);
            prop_assert!(*y >= 0);
        }
    }

    #[test]
    fn projection_is_feasible_and_idempotent(
        cache in prop::collection::vec(-20.0..150.0f64, 1..8),
        budget in 0.0..200.0f64,
    ) {
        let caps = vec![100.0; cache.len()];
        let p = project_cache(&cache, &caps, budget);
        prop_assert!(p.iter().sum::<f64>() <= budget + 1e-9);
        for &x in &p {
            prop_assert!((-1e-12..=100.0 + 1e-12).contains(&x));
        }
        let again = project_cache(&p, &caps, budget);
        for (a, b) in p.iter().zip(&again) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn cdf_is_a_monotone_step_to_one(values in prop::collection::vec(0.0..100.0f64, 1..40)) {
        let cdf = empirical_cdf(&values);
        prop_assert_eq!(cdf.len(), values.len());
        for w in cdf.windows(2) {
            prop_assert!(w[0].0 <= w[1].0);
            prop_assert!(w[0].1 <= w[1].1);
        }
        prop_assert_eq!(cdf.last().unwrap().1, 1.0);
    }

    #[test]
    fn cluster_rate_falls_with_less_cache(
        mi in prop::collection::vec(0.1..10.0f64, 1..5),
        cache in prop::collection::vec(0.0..99.0f64, 5),
        cut in 0.0..1.0f64,
    ) {
        let full: Vec<(f64, f64, f64)> = mi.iter().zip(&cache).map(|(&m, &c)| (m, c, 100.0)).collect();
        let less: Vec<(f64, f64, f64)> = full.iter().map(|&(m, c, f)| (m, c * cut, f)).collect();
        let a = model::cluster_rate(full).unwrap();
        let b = model::cluster_rate(less).unwrap();
        prop_assert!(b <= a * (1.0 + 1e-12));
        prop_assert!(a >= mi.iter().cloned().fold(f64::INFINITY, f64::min) - 1e-12);
    }

    #[test]
    fn interference_lowers_mutual_information(h in entries(6), v0 in entries(6), v1 in entries(6), sigma2 in 0.1..2.0f64) {
        let h = cmat(2, 3, &h);
        let v = vec![cmat(3, 2, &v0), cmat(3, 2, &v1)];
        let full = model::link_mutual_information(&h, &v, 0, sigma2, InterferenceModel::Full).unwrap();
        let alone = model::link_mutual_information(&h, &v, 0, sigma2, InterferenceModel::Ignored).unwrap();
        prop_assert!(full >= -1e-12);
        prop_assert!(full <= alone + 1e-9);
    }

    #[test]
    fn bound_dominates_and_touches(
        h in entries(3), v0 in entries(3), v1 in entries(3),
        d0 in entries(3), d1 in entries(3),
        eta_i in 0.0..2.0f64, cache_i in 0.0..9.0f64,
        eta in 0.0..3.0f64, cache in 0.0..10.0f64,
        ignored in any::<bool>(),
    ) {
        let model = if ignored { InterferenceModel::Ignored } else { InterferenceModel::Full };
        let h = cmat(1, 3, &h);
        let vi = vec![cmat(3, 1, &v0), cmat(3, 1, &v1)];
        let v = vec![&vi[0] + cmat(3, 1, &d0), &vi[1] + cmat(3, 1, &d1)];
        let file = 10.0;
        let coeff = surrogate::expansion_coefficients(&h, &vi, 0, 1.0, eta_i, cache_i, model).unwrap();
        let lhs = |c: f64, e: f64, v: &[CMat]| {
            (file - c) * e - model::link_mutual_information(&h, v, 0, 1.0, model).unwrap()
        };
        let at = surrogate::eval_f(&coeff, cache_i, eta_i, &vi, file, eta_i, cache_i);
        prop_assert!((at - lhs(cache_i, eta_i, &vi)).abs() <= 1e-9 * (1.0 + at.abs()));
        let bound = surrogate::eval_f(&coeff, cache, eta, &v, file, eta_i, cache_i);
        prop_assert!(bound - lhs(cache, eta, &v) >= -1e-9 * (1.0 + bound.abs()));
    }
}
