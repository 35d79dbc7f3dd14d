use corlmc::covariance::{build_sigma_z, CovarianceSpec, Location, SpatialDesign};
use corlmc::data::{uniform_scores, ReplicateMatrix};
use corlmc::density::copula_logdensity;
use corlmc::diagnostics::{empirical_lambda, tail_weighted_rho, Tail};
use corlmc::margins::FactorLoadings;
use corlmc::simulate::FactorLaw;
use corlmc::tails::{lambda_within, stable_tail_exponential, stable_tail_pareto};
use proptest::prelude::*;

fn upper_loadings_with_dependence() -> impl Strategy<Value = [f64; 4]> {
    // δ_i = α_i0 / α_i kept above 1.2
    (0.3..2.0f64, 0.0..0.8f64, 0.3..2.0f64, 0.0..0.8f64).prop_map(|(a10, r1, a20, r2)| [a10, a10 * r1, a20, a20 * r2])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn latent_correlation_is_positive_definite(
        coords in prop::collection::vec((0.0..5.0f64, 0.0..5.0f64), 2..7),
        theta0 in 0.05..5.0f64,
        t1 in 0.05..5.0f64,
        t2 in 0.05..5.0f64,
    ) {
        let mut locs: Vec<Location> = Vec::new();
        for (k, (x, y)) in coords.into_iter().enumerate() {
            if locs.iter().all(|l| (l.coords[0] - x).hypot(l.coords[1] - y) > 1e-3) {
                locs.push(Location::new(k as i64, vec![x, y]));
            }
        }
        let design = SpatialDesign::new(2, locs).unwrap();
        let spec = CovarianceSpec::shared_exponential(theta0, &[t1, t2]).unwrap();
        let s = build_sigma_z(&design, &spec).unwrap();
        prop_assert!(s.log_det().is_finite());
        for a in 0..design.dim() {
            prop_assert!((s.matrix()[(a, a)] - 1.0).abs() < 1e-7);
        }
    }

    #[test]
    fn stable_tail_function_bounds_and_homogeneity(
        up in upper_loadings_with_dependence(),
        rho in -0.9..0.9f64,
        x1 in 0.05..5.0f64,
        x2 in 0.05..5.0f64,
        t in 0.1..10.0f64,
    ) {
        let l = FactorLoadings::from_vectors(&up, &[0.0; 4]).unwrap();
        let v = stable_tail_exponential(x1, x2, &l, rho).unwrap();
        prop_assert!(v >= x1.max(x2) - 1e-12 && v <= x1 + x2 + 1e-12, "{v}");
        let w = stable_tail_exponential(t * x1, t * x2, &l, rho).unwrap();
        prop_assert!((w - t * v).abs() < 1e-10 * (1.0 + w));
    }

    #[test]
    fn marshall_olkin_bounds(up in upper_loadings_with_dependence(), k in 1.1..10.0f64, x1 in 0.05..5.0f64, x2 in 0.05..5.0f64) {
        let l = FactorLoadings::from_vectors(&up, &[0.0; 4]).unwrap();
        let v = stable_tail_pareto(x1, x2, &l, k).unwrap();
        prop_assert!(v >= x1.max(x2) - 1e-12 && v <= x1 + x2 + 1e-12);
    }

    #[test]
    fn within_coefficient_increases_with_correlation(r1 in -1.0..1.0f64, dr in 0.0..1.0f64, a in 0.0..3.0f64) {
        let r2 = (r1 + dr).min(1.0);
        let (l1, l2) = (lambda_within(r1, a).unwrap(), lambda_within(r2, a).unwrap());
        prop_assert!(l2 >= l1 && (0.0..=1.0).contains(&l1));
    }

    #[test]
    fn scores_are_ranks_in_the_unit_interval(values in prop::collection::vec(-10.0..10.0f64, 6..40)) {
        let n_rep = values.len() / 2;
        let design = SpatialDesign::transect(1, 2).unwrap();
        let data = ReplicateMatrix::new(design, values[..2 * n_rep].to_vec()).unwrap();
        let s = uniform_scores(&data).unwrap();
        for c in 0..2 {
            let col = s.column(c);
            prop_assert!(col.iter().all(|&u| u > 0.0 && u < 1.0));
            let total: f64 = col.iter().sum();
            prop_assert!((total - n_rep as f64 / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn empirical_measures_stay_in_range(seed in 0u64..1000) {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 + 0.5) / (1u64 << 53) as f64
        };
        let u1: Vec<f64> = (0..400).map(|_| next()).collect();
        let u2: Vec<f64> = u1.iter().map(|&u| 0.5 * u + 0.5 * next()).collect();
        for tail in [Tail::Lower, Tail::Upper] {
            let l = empirical_lambda(&u1, &u2, 0.1, tail).unwrap();
            prop_assert!((0.0..=1.0).contains(&l.value));
            let r = tail_weighted_rho(&u1, &u2, tail).unwrap();
            prop_assert!(r.value.is_nan() || (-1.0 - 1e-12..=1.0 + 1e-12).contains(&r.value));
        }
    }

    #[test]
    fn factor_law_text_round_trips(k in 1.01..50.0f64, kappa in 0.05..0.99f64) {
        for law in [FactorLaw::Exponential, FactorLaw::Pareto { k }, FactorLaw::Weibull { kappa }] {
            let back: FactorLaw = law.to_string().parse().unwrap();
            prop_assert_eq!(back, law);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn relabelling_variables_leaves_the_copula_unchanged(
        up in prop::array::uniform4(0.0..1.5f64),
        lo in prop::array::uniform4(0.0..1.5f64),
        u1 in 0.01..0.99f64,
        u2 in 0.01..0.99f64,
        t1 in 0.2..3.0f64,
        t2 in 0.2..3.0f64,
    ) {
        let mut up = up;
        let mut lo = lo;
        up[3] = 0.0;
        lo[3] = 0.0;
        let l = FactorLoadings::from_vectors(&up, &lo).unwrap();
        let design = SpatialDesign::transect(2, 1).unwrap();
        let a = copula_logdensity(&[u1], &[u2], &design, &CovarianceSpec::shared_exponential(1.0, &[t1, t2]).unwrap(), &l).unwrap();
        let b = copula_logdensity(&[u2], &[u1], &design, &CovarianceSpec::shared_exponential(1.0, &[t2, t1]).unwrap(), &l.swapped()).unwrap();
        prop_assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}
