//! Property tests for the structural invariants of the library.

use choicebo_core::benchmarks::hypervolume;
use choicebo_core::domain::{
    check_consistency, dominates, non_dominated_set, option_table, simulate_choice, ChoiceObservation, ObjectiveMatrix,
};
use choicebo_core::gp::{gram_cholesky, kernel_matern32, GpModel, KernelParams, LatentMatrix};
use choicebo_core::likelihood::{choice_log_likelihood, LikelihoodConfig};
use choicebo_core::mobo::{nearest_rank_quantile, sole_choice_probability};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(m, d)| {
        // a coarse grid makes ties and duplicate rows common
        prop::collection::vec(prop::collection::vec((-4i32..=4).prop_map(|v| v as f64 * 0.5), d), m)
    })
}

fn vec_of(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, d)
}

/// A choice set of 2..=5 options with `n_e` latent dimensions and a chosen
/// subset picked by index mask.
fn choice_instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>, f64)> {
    (2usize..=5, 1usize..=3).prop_flat_map(|(size, n_e)| {
        (
            prop::collection::vec(prop::collection::vec(-2.0f64..2.0, n_e), size),
            prop::collection::vec(any::<bool>(), size),
            0.05f64..1.0,
        )
            .prop_map(|(rows, mask, sigma)| {
                let mut chosen: Vec<usize> = (0..rows.len()).filter(|&i| mask[i]).collect();
                if chosen.is_empty() {
                    chosen.push(0);
                }
                (rows, chosen, sigma)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn dominance_is_a_strict_partial_order(a in vec_of(3), b in vec_of(3), c in vec_of(3)) {
        prop_assert!(!dominates(&a, &a).unwrap());
        if dominates(&a, &b).unwrap() {
            prop_assert!(!dominates(&b, &a).unwrap());
            if dominates(&b, &c).unwrap() {
                prop_assert!(dominates(&a, &c).unwrap());
            }
        }
    }

    #[test]
    fn front_matches_noise_free_choice(rows in matrix(12, 4), seed in any::<u64>()) {
        let front = non_dominated_set(&ObjectiveMatrix::from_rows(&rows).unwrap()).unwrap();
        let opts = option_table(rows.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs = simulate_choice(&opts, |x: &[f64]| x.to_vec(), 0.0, &mut rng).unwrap();
        prop_assert_eq!(obs.canonical_chosen(), front);
        prop_assert!(check_consistency(&obs, &LatentMatrix::from_rows(&rows).unwrap()).unwrap());
    }

    #[test]
    fn front_is_invariant_under_monotone_column_maps(rows in matrix(12, 3), scale in 0.1f64..5.0, shift in -3.0f64..3.0) {
        let before = non_dominated_set(&ObjectiveMatrix::from_rows(&rows).unwrap()).unwrap();
        let mapped: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().enumerate().map(|(d, &v)| match d % 3 {
                0 => scale * v + shift,
                1 => v.powi(3),
                _ => v.exp(),
            }).collect())
            .collect();
        let after = non_dominated_set(&ObjectiveMatrix::from_rows(&mapped).unwrap()).unwrap();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn kernel_is_bounded_and_gram_is_psd(
        pts in prop::collection::vec(vec_of(2), 2..12),
        ls in 0.05f64..3.0,
        var in 0.1f64..5.0,
    ) {
        let opts = option_table(pts).unwrap();
        let params = KernelParams::isotropic(1, ls, var, 0.1).unwrap();
        for a in &opts {
            prop_assert!((kernel_matern32(a, a, &params, 0).unwrap() - var).abs() < 1e-12);
            for b in &opts {
                let k = kernel_matern32(a, b, &params, 0).unwrap();
                prop_assert!(k.abs() <= var + 1e-12);
                prop_assert!((k - kernel_matern32(b, a, &params, 0).unwrap()).abs() < 1e-15);
            }
        }
        prop_assert!(gram_cholesky(&opts, &params, 1e-8).is_ok());
    }

    #[test]
    fn whitening_round_trips(
        pts in prop::collection::vec(vec_of(2), 2..10),
        vals in prop::collection::vec(-2.0f64..2.0, 20),
    ) {
        // distinct points keep the factor well conditioned
        let mut pts = pts;
        for (i, p) in pts.iter_mut().enumerate() {
            p[0] += 10.0 * i as f64;
        }
        let opts = option_table(pts).unwrap();
        let params = KernelParams::isotropic(2, 0.7, 1.3, 0.1).unwrap();
        let factors = gram_cholesky(&opts, &params, 1e-8).unwrap();
        let m = opts.len();
        let values = DMatrix::from_fn(m, 2, |i, d| vals[(i * 2 + d) % vals.len()]);
        let white = LatentMatrix::whiten(values.clone(), &factors).unwrap();
        let back = LatentMatrix::from_whitened(white.whitened().unwrap().clone(), &factors).unwrap();
        let err = (back.values() - &values).norm() / values.norm().max(1e-12);
        prop_assert!(err < 1e-10, "relative error {}", err);
    }

    #[test]
    fn predictive_covariance_factorises(
        pts in prop::collection::vec(vec_of(1), 2..8),
        test in prop::collection::vec(vec_of(1), 1..6),
    ) {
        let opts = option_table(pts).unwrap();
        let model = GpModel::new(&opts, KernelParams::isotropic(1, 0.5, 1.0, 0.1).unwrap()).unwrap();
        let cond = model.conditional(&test).unwrap();
        let cov = cond.covariance(0);
        let cov = (&cov + cov.transpose()) * 0.5;
        let jittered = &cov + DMatrix::identity(cov.nrows(), cov.ncols()) * 1e-8;
        prop_assert!(jittered.cholesky().is_some());
    }

    #[test]
    fn pair_likelihood_increases_with_the_gap(f in -2.0f64..2.0, gap in -3.0f64..3.0, step in 0.01f64..1.0, sigma in 0.05f64..1.0) {
        let obs = ChoiceObservation::new(vec![0, 1], vec![0]).unwrap();
        let cfg = LikelihoodConfig::with_noise(sigma);
        let at = |g: f64| choice_log_likelihood(&obs, &LatentMatrix::from_rows(&[vec![f + g], vec![f]]).unwrap(), &cfg).unwrap();
        let (lo, hi) = (at(gap), at(gap + step));
        // once both sides saturate at 1 or at the floor the values tie
        prop_assert!(hi > lo || (hi - lo).abs() < 1e-12);
    }

    #[test]
    fn likelihood_is_translation_invariant_and_bounded((rows, chosen, sigma) in choice_instance(), shift in -5.0f64..5.0) {
        let ids: Vec<usize> = (0..rows.len()).collect();
        let obs = ChoiceObservation::new(ids, chosen).unwrap();
        let cfg = LikelihoodConfig::with_noise(sigma);
        let ll = choice_log_likelihood(&obs, &LatentMatrix::from_rows(&rows).unwrap(), &cfg).unwrap();
        prop_assert!(ll.is_finite());
        prop_assert!(ll <= 1e-12);
        let shifted: Vec<Vec<f64>> = rows.iter().map(|r| {
            let mut r = r.clone();
            r[0] += shift;
            r
        }).collect();
        let ll2 = choice_log_likelihood(&obs, &LatentMatrix::from_rows(&shifted).unwrap(), &cfg).unwrap();
        prop_assert!((ll - ll2).abs() < 1e-9, "{} vs {}", ll, ll2);
    }

    #[test]
    fn quadrature_has_converged((rows, chosen, sigma) in choice_instance()) {
        let ids: Vec<usize> = (0..rows.len()).collect();
        let obs = ChoiceObservation::new(ids, chosen).unwrap();
        let lat = LatentMatrix::from_rows(&rows).unwrap();
        let at = |n: usize| {
            let cfg = LikelihoodConfig { quad_nodes: n, ..LikelihoodConfig::with_noise(sigma) };
            choice_log_likelihood(&obs, &lat, &cfg).unwrap().exp()
        };
        prop_assert!((at(32) - at(64)).abs() < 1e-8);
    }

    #[test]
    fn sole_choice_probability_depends_on_differences(
        rows in prop::collection::vec(vec_of(2), 2..6),
        shift in -3.0f64..3.0,
        sigma in 0.05f64..1.0,
    ) {
        let f = DMatrix::from_fn(rows.len(), 2, |i, d| rows[i][d]);
        let mut g = f.clone();
        g.column_mut(1).add_scalar_mut(shift);
        let (a, b) = (sole_choice_probability(&f, sigma), sole_choice_probability(&g, sigma));
        prop_assert!((a - b).abs() <= 1e-12 * a.max(b).max(1e-300));
    }

    #[test]
    fn quantile_commutes_with_monotone_maps(values in prop::collection::vec(0.0f64..1.0, 1..60), gamma in 0.51f64..0.99) {
        let mapped: Vec<f64> = values.iter().map(|v| v.sqrt() * 3.0 + 1.0).collect();
        let q = nearest_rank_quantile(&values, gamma);
        prop_assert_eq!(nearest_rank_quantile(&mapped, gamma), q.sqrt() * 3.0 + 1.0);
    }

    #[test]
    fn hypervolume_is_monotone_and_ignores_dominated_points(
        d in 2usize..=3,
        pts in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 1..20),
        extra in prop::collection::vec(0.0f64..1.0, 3),
        offset in prop::collection::vec(-5.0f64..5.0, 3),
    ) {
        let front: Vec<Vec<f64>> = pts.iter().map(|p| p[..d].to_vec()).collect();
        let reference = vec![-0.1; d];
        let hv = hypervolume(&front, &reference).unwrap();
        let mut more = front.clone();
        more.push(extra[..d].to_vec());
        prop_assert!(hypervolume(&more, &reference).unwrap() >= hv - 1e-12);

        let mut with_dominated = front.clone();
        with_dominated.push(front[0].iter().map(|v| v - 0.05).collect());
        prop_assert!((hypervolume(&with_dominated, &reference).unwrap() - hv).abs() < 1e-12);

        let shifted: Vec<Vec<f64>> = front.iter().map(|p| p.iter().zip(&offset).map(|(a, b)| a + b).collect()).collect();
        let shifted_ref: Vec<f64> = reference.iter().zip(&offset).map(|(a, b)| a + b).collect();
        prop_assert!((hypervolume(&shifted, &shifted_ref).unwrap() - hv).abs() < 1e-9 * hv.max(1.0));
    }
}
