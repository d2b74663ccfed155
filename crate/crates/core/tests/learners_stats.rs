use approx::assert_abs_diff_eq;
use rand::Rng;
use rand_distr::StandardNormal;

use perfspace::data::{dot, Matrix};
use perfspace::labels::{friedman_test, nemenyi_cd};
use perfspace::learners::{
    fit_elasticnet, fit_lasso, fit_ols, fit_svr, gnb_fit_predict, hamming_loss, r2_score, subset_accuracy, Gamma,
    SvrParams,
};
use perfspace::rng::rng_from_seed;
use perfspace::stats::{average_ranks, cohens_d, paired_t_test, pearson, spearman};

fn gaussian_matrix(n: usize, d: usize, seed: u64) -> Matrix {
    let mut rng = rng_from_seed(seed);
    let data = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_vec(n, d, data).unwrap()
}

#[test]
fn ols_handles_a_duplicated_column() {
    let rows = [[1.0, 0.5], [2.0, -1.0], [3.0, 2.0], [4.0, 0.0], [5.0, 1.5]];
    let x = Matrix::from_rows(&rows.map(|r| [r[0], r[1], r[0]])).unwrap();
    let noise = [0.1, -0.2, 0.05, 0.15, -0.1];
    let y: Vec<f64> = rows
        .iter()
        .zip(noise)
        .map(|(r, e)| 1.0 + 2.0 * r[0] + 3.0 * r[1] + e)
        .collect();
    let m = fit_ols(&x, &y).unwrap();
    let single = fit_ols(&Matrix::from_rows(&rows).unwrap(), &y).unwrap();
    for (p, q) in m
        .predict(&x)
        .iter()
        .zip(single.predict(&Matrix::from_rows(&rows).unwrap()))
    {
        assert_abs_diff_eq!(*p, q, epsilon = 1e-6);
    }
    // The jittered solve lands on the minimum-norm split of the shared weight.
    assert_abs_diff_eq!(m.coefficients[0], single.coefficients[0] / 2.0, epsilon = 1e-4);
    assert_abs_diff_eq!(m.coefficients[2], single.coefficients[0] / 2.0, epsilon = 1e-4);
    assert_abs_diff_eq!(m.coefficients[1], single.coefficients[1], epsilon = 1e-6);
}

#[test]
fn lasso_zeroes_out_above_the_critical_alpha() {
    let x = gaussian_matrix(10, 3, 4);
    let y: Vec<f64> = x.rows_iter().map(|r| 0.5 + r[0] - 2.0 * r[2]).collect();
    let n = y.len() as f64;
    let ym = y.iter().sum::<f64>() / n;
    let yc: Vec<f64> = y.iter().map(|v| v - ym).collect();
    let alpha_max = (0..3)
        .map(|j| {
            let c = x.column(j);
            let cm = c.iter().sum::<f64>() / n;
            let cc: Vec<f64> = c.iter().map(|v| v - cm).collect();
            dot(&cc, &yc).abs() / n
        })
        .fold(0.0, f64::max);

    let above = fit_lasso(&x, &y, alpha_max * 1.01).unwrap();
    assert!(above.converged);
    assert!(above.model.coefficients.iter().all(|w| *w == 0.0));
    assert_abs_diff_eq!(above.model.intercept, ym, epsilon = 1e-12);

    let below = fit_lasso(&x, &y, alpha_max * 0.9).unwrap();
    assert!(below.model.coefficients.iter().any(|w| *w != 0.0));
}

#[test]
fn elasticnet_approaches_lasso_as_l1_ratio_goes_to_one() {
    let x = gaussian_matrix(40, 4, 8);
    let mut rng = rng_from_seed(9);
    let y: Vec<f64> = x
        .rows_iter()
        .map(|r| r[0] - r[1] + 0.5 * r[3] + 0.1 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let lasso = fit_lasso(&x, &y, 0.05).unwrap().model;
    let en = fit_elasticnet(&x, &y, 0.05, 0.9999).unwrap().model;
    for (a, b) in lasso.coefficients.iter().zip(&en.coefficients) {
        assert_abs_diff_eq!(*a, *b, epsilon = 1e-4);
    }
    assert_abs_diff_eq!(lasso.intercept, en.intercept, epsilon = 1e-4);
}

fn sine(n: usize) -> (Matrix, Vec<f64>) {
    let xs: Vec<f64> = (0..n)
        .map(|i| 2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64)
        .collect();
    let y = xs.iter().map(|v| v.sin()).collect();
    (Matrix::from_columns(&[xs]).unwrap(), y)
}

#[test]
fn svr_fits_a_sine() {
    let (x, y) = sine(50);
    let m = fit_svr(&x, &y, &SvrParams::default()).unwrap();
    assert!(m.converged);
    let r2 = r2_score(&y, &m.predict(&x)).unwrap();
    assert!(r2 > 0.8, "R2 {r2}");
}

#[test]
fn svr_dual_satisfies_box_and_equality_constraints() {
    let (x, y) = sine(50);
    let params = SvrParams {
        c: 2.0,
        epsilon: 0.05,
        gamma: Gamma::Value(0.5),
        tol: 1e-6,
        ..SvrParams::default()
    };
    let m = fit_svr(&x, &y, &params).unwrap();
    assert!(m.converged);
    assert_abs_diff_eq!(m.dual_coef.iter().sum::<f64>(), 0.0, epsilon = 1e-9);
    for (sv, b) in m.support_vectors.rows_iter().zip(&m.dual_coef) {
        assert!(b.abs() <= params.c + 1e-12);
        // Free support vectors sit on the edge of the tube.
        if b.abs() > 1e-6 && b.abs() < params.c - 1e-6 {
            let i = x.rows_iter().position(|r| r == sv).unwrap();
            let resid = (y[i] - m.predict_row(sv)).abs();
            assert_abs_diff_eq!(resid, params.epsilon, epsilon = 1e-4);
        }
    }
}

#[test]
fn svr_on_doubled_rows_with_half_cost_predicts_the_same() {
    let (x, y) = sine(30);
    let params = SvrParams {
        tol: 1e-8,
        gamma: Gamma::Value(0.5),
        ..SvrParams::default()
    };
    let base = fit_svr(&x, &y, &params).unwrap();
    let x2 = x.vstack(&x).unwrap();
    let y2 = [y.clone(), y.clone()].concat();
    let doubled = fit_svr(
        &x2,
        &y2,
        &SvrParams {
            c: params.c / 2.0,
            ..params
        },
    )
    .unwrap();
    let probe = gaussian_matrix(20, 1, 3);
    for (a, b) in base.predict(&probe).iter().zip(doubled.predict(&probe)) {
        assert_abs_diff_eq!(*a, b, epsilon = 1e-6);
    }
}

#[test]
fn svr_on_doubled_rows_is_unchanged_without_bounded_vectors() {
    // With every dual coefficient strictly inside the box, splitting each one
    // across the two copies is still optimal at the same cost.
    let (x, y) = sine(30);
    let params = SvrParams {
        c: 100.0,
        tol: 1e-10,
        gamma: Gamma::Value(0.5),
        ..SvrParams::default()
    };
    let base = fit_svr(&x, &y, &params).unwrap();
    assert!(base.dual_coef.iter().all(|b| b.abs() < params.c / 2.0));
    let doubled = fit_svr(&x.vstack(&x).unwrap(), &[y.clone(), y].concat(), &params).unwrap();
    let probe = gaussian_matrix(20, 1, 3);
    for (a, b) in base.predict(&probe).iter().zip(doubled.predict(&probe)) {
        assert_abs_diff_eq!(*a, b, epsilon = 1e-6);
    }
}

#[test]
fn gnb_separates_distant_gaussians() {
    let a = gaussian_matrix(40, 2, 1);
    let b = gaussian_matrix(40, 2, 2);
    let shifted: Vec<Vec<f64>> = b.rows_iter().map(|r| vec![r[0] + 6.0, r[1] + 6.0]).collect();
    let x = a.vstack(&Matrix::from_rows(&shifted).unwrap()).unwrap();
    let labels: Vec<bool> = (0..80).map(|i| i >= 40).collect();
    let pred = gnb_fit_predict(&x, &labels, &Matrix::from_rows(&[[0.0, 0.0], [6.0, 6.0]]).unwrap()).unwrap();
    assert_eq!(pred, [false, true]);
}

#[test]
fn multilabel_metrics_on_a_small_example() {
    let truth = vec![vec![true, false, true], vec![false, false, true]];
    let pred = vec![vec![true, true, true], vec![false, false, true]];
    assert_abs_diff_eq!(hamming_loss(&truth, &pred).unwrap(), 1.0 / 6.0, epsilon = 1e-15);
    assert_abs_diff_eq!(subset_accuracy(&truth, &pred).unwrap(), 0.5, epsilon = 1e-15);
    assert_abs_diff_eq!(r2_score(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
}

/// Tie-corrected Friedman statistic in its variance form.
fn friedman_brute(ranks: &[Vec<f64>]) -> f64 {
    let n = ranks.len() as f64;
    let k = ranks[0].len();
    let kf = k as f64;
    let centre = n * (kf + 1.0) / 2.0;
    let num: f64 = (0..k)
        .map(|j| {
            let s: f64 = ranks.iter().map(|r| r[j]).sum();
            (s - centre).powi(2)
        })
        .sum();
    let sq: f64 = ranks.iter().flatten().map(|r| r * r).sum();
    (kf - 1.0) * num / (sq - n * kf * (kf + 1.0).powi(2) / 4.0)
}

#[test]
fn friedman_matches_a_direct_computation() {
    let ranks = vec![
        vec![1.0, 2.0, 3.0, 4.0],
        vec![2.0, 1.0, 3.0, 4.0],
        vec![1.0, 3.0, 2.0, 4.0],
        vec![1.5, 1.5, 3.0, 4.0],
        vec![2.0, 1.0, 4.0, 3.0],
        vec![1.0, 2.0, 3.5, 3.5],
    ];
    let f = friedman_test(&ranks).unwrap();
    assert_abs_diff_eq!(f.statistic, friedman_brute(&ranks), epsilon = 1e-9);
    assert_abs_diff_eq!(f.statistic, 13.551724137931043, epsilon = 1e-9);
    assert_abs_diff_eq!(f.p_value, 0.003583413049698102, epsilon = 1e-9);
    assert_eq!(f.df, 3.0);
}

#[test]
fn friedman_on_random_rank_tables() {
    let mut rng = rng_from_seed(77);
    for _ in 0..50 {
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|_| {
                // Coarse scores so ties are common.
                let s: Vec<f64> = (0..5).map(|_| rng.random_range(0..4) as f64).collect();
                average_ranks(&s)
            })
            .collect();
        let f = friedman_test(&rows).unwrap();
        if f.p_value < 1.0 {
            assert_abs_diff_eq!(f.statistic, friedman_brute(&rows), epsilon = 1e-9);
        }
    }
}

#[test]
fn nemenyi_cd_for_five_learners_and_ten_splits() {
    assert_abs_diff_eq!(
        nemenyi_cd(5, 100, 0.05).unwrap(),
        2.728 * (30.0f64 / 600.0).sqrt(),
        epsilon = 1e-12
    );
    assert!(nemenyi_cd(5, 10, 0.01).is_err());
}

#[test]
fn paired_t_reference_values() {
    let d = [0.5, 0.7, 0.6, 0.8, 0.4];
    let t = paired_t_test(&d, &[0.0; 5]).unwrap();
    assert_abs_diff_eq!(t.statistic, 8.485281374238568, epsilon = 1e-9);
    assert_abs_diff_eq!(t.p_value, 0.0010575646158306874, epsilon = 1e-9);
    let (lo, hi) = t.ci.unwrap();
    assert!(lo > 0.0 && hi > lo);
    assert_abs_diff_eq!((lo + hi) / 2.0, 0.6, epsilon = 1e-12);
}

#[test]
fn paired_t_constant_difference_is_degenerate() {
    let t = paired_t_test(&[1.0, 2.0, 3.0], &[0.5, 1.5, 2.5]).unwrap();
    assert!(t.degenerate);
    assert_eq!((t.statistic, t.p_value), (0.0, 1.0));
}

#[test]
fn paired_t_ci_excludes_zero_iff_significant() {
    let mut rng = rng_from_seed(5);
    for shift in [0.0, 0.1, 0.3, 0.5, 1.0] {
        for _ in 0..40 {
            let a: Vec<f64> = (0..10).map(|_| rng.sample::<f64, _>(StandardNormal) + shift).collect();
            let b: Vec<f64> = (0..10).map(|_| rng.sample(StandardNormal)).collect();
            let t = paired_t_test(&a, &b).unwrap();
            let (lo, hi) = t.ci.unwrap();
            assert_eq!(
                lo > 0.0 || hi < 0.0,
                t.p_value < 0.05,
                "p {} ci ({lo}, {hi})",
                t.p_value
            );
        }
    }
}

#[test]
fn cohens_d_recovers_a_known_shift() {
    let mut rng = rng_from_seed(12);
    let a: Vec<f64> = (0..4000).map(|_| rng.sample::<f64, _>(StandardNormal) + 0.8).collect();
    let b: Vec<f64> = (0..4000).map(|_| rng.sample(StandardNormal)).collect();
    let d = cohens_d(&a, &b).unwrap();
    assert!(!d.degenerate);
    assert!((d.value - 0.8).abs() < 0.08, "{}", d.value);
    assert!(cohens_d(&[1.0, 1.0], &[1.0, 1.0]).unwrap().degenerate);
}

#[test]
fn spearman_with_ties() {
    let s = spearman(&[1.0, 2.0, 2.0, 3.0, 5.0], &[2.0, 1.0, 4.0, 4.0, 6.0]).unwrap();
    assert_abs_diff_eq!(s.value, 0.7631578947368421, epsilon = 1e-12);
    assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap().degenerate);
}
