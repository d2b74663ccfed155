mod common;

use std::sync::atomic::{AtomicUsize, Ordering};

use approx::assert_abs_diff_eq;

use common::random_meta;
use perfspace::error::Error;
use perfspace::experiment::report::{
    prepare_out_dir, read_manifest, write_learning_curve, write_manifest, write_sampling_summary, PinnedDefaults,
    RunManifest,
};
use perfspace::experiment::{
    ablation_rows, check_shared_folds, evaluate_condition, granularity_compare, learning_curve, relative_delta,
    Condition, ExperimentConfig, MetaLearner, Metric, OracleLearner, SvrGnbLearner,
};
use perfspace::meta::{MetaInstance, Provenance};

fn small_cfg() -> ExperimentConfig {
    ExperimentConfig {
        folds: 4,
        repeats: 3,
        seeds: (0..4).collect(),
        ..ExperimentConfig::default()
    }
}

fn data() -> (Vec<MetaInstance>, Vec<MetaInstance>) {
    (
        random_meta(40, Provenance::Real, 1),
        random_meta(30, Provenance::Synthetic, 2),
    )
}

/// Ignores its training data entirely and checks that no synthetic row is
/// ever scored.
struct Constant {
    calls: AtomicUsize,
}

impl Constant {
    fn new() -> Self {
        Constant {
            calls: AtomicUsize::new(0),
        }
    }

    fn check(&self, test: &[&MetaInstance]) {
        assert!(
            test.iter().all(|m| m.provenance == Provenance::Real),
            "synthetic row in a test fold"
        );
        self.calls.fetch_add(1, Ordering::Relaxed);
    }
}

impl MetaLearner for Constant {
    fn name(&self) -> String {
        "constant".into()
    }

    fn regress(&self, _train: &[&MetaInstance], test: &[&MetaInstance]) -> perfspace::Result<Vec<[f64; 5]>> {
        self.check(test);
        Ok(vec![[0.3; 5]; test.len()])
    }

    fn classify(&self, _train: &[&MetaInstance], test: &[&MetaInstance]) -> perfspace::Result<Vec<[bool; 5]>> {
        self.check(test);
        Ok(vec![[true; 5]; test.len()])
    }
}

#[test]
fn oracle_learner_scores_perfectly() {
    let (real, pool) = data();
    let r = evaluate_condition(&real, &pool, &small_cfg().with(Condition::Margin, 10), &OracleLearner).unwrap();
    assert_eq!(r.units.len(), 12);
    assert_abs_diff_eq!(r.metric(Metric::R2).unwrap().mean, 1.0);
    assert_abs_diff_eq!(r.metric(Metric::HammingLoss).unwrap().mean, 0.0);
    assert_abs_diff_eq!(r.metric(Metric::SubsetAccuracy).unwrap().mean, 1.0);
}

#[test]
fn zero_synthetic_budget_matches_no_augmentation() {
    let (real, pool) = data();
    let learner = SvrGnbLearner::default();
    let none = evaluate_condition(&real, &pool, &small_cfg(), &learner).unwrap();
    let uni = evaluate_condition(&real, &pool, &small_cfg().with(Condition::Uniform, 0), &learner).unwrap();
    assert_eq!(none.units, uni.units);
    assert_eq!(none.metrics, uni.metrics);
}

#[test]
fn synthetic_draws_are_distinct_and_shared_across_folds() {
    let (real, pool) = data();
    let c = Constant::new();
    let r = evaluate_condition(&real, &pool, &small_cfg().with(Condition::Margin, 12), &c).unwrap();
    // Two calls (regress and classify) per fold per unit.
    assert_eq!(c.calls.load(Ordering::Relaxed), 2 * 4 * 12);
    for u in &r.units {
        assert_eq!(u.synthetic_used, 12);
        let mut idx = u.synthetic_indices.clone();
        idx.dedup();
        assert_eq!(idx.len(), 12, "indices are sorted and distinct");
        assert!(idx.iter().all(|&i| i < pool.len()));
    }
    // Different seeds see different folds and different draws.
    assert_ne!(r.units[0].fold_hash, r.units[3].fold_hash);
    assert_ne!(r.units[0].synthetic_indices, r.units[3].synthetic_indices);
}

#[test]
fn uniform_and_margin_coincide_at_the_pool_size() {
    let (real, pool) = data();
    let learner = SvrGnbLearner::default();
    let cfg = small_cfg();
    let uni = evaluate_condition(&real, &pool, &cfg.with(Condition::Uniform, pool.len()), &learner).unwrap();
    let mar = evaluate_condition(&real, &pool, &cfg.with(Condition::Margin, pool.len()), &learner).unwrap();
    for (a, b) in uni.units.iter().zip(&mar.units) {
        assert_eq!(a.synthetic_indices, b.synthetic_indices);
        assert_eq!(
            (a.r2, a.hamming_loss, a.subset_accuracy),
            (b.r2, b.hamming_loss, b.subset_accuracy)
        );
    }
}

#[test]
fn oversized_budget_is_rejected() {
    let (real, pool) = data();
    let e = evaluate_condition(&real, &pool, &small_cfg().with(Condition::Uniform, 31), &OracleLearner).unwrap_err();
    assert!(matches!(e, Error::Parameter(_)), "{e}");
    let few = random_meta(3, Provenance::Real, 0);
    assert!(evaluate_condition(&few, &pool, &small_cfg(), &OracleLearner).is_err());
}

#[test]
fn conditions_share_folds_but_other_fold_counts_do_not() {
    let (real, pool) = data();
    let c = Constant::new();
    let cfg = small_cfg();
    let none = evaluate_condition(&real, &pool, &cfg, &c).unwrap();
    let mar = evaluate_condition(&real, &pool, &cfg.with(Condition::Margin, 5), &c).unwrap();
    check_shared_folds(&[&none, &mar]).unwrap();
    let five = ExperimentConfig { folds: 5, ..cfg };
    let other = evaluate_condition(&real, &pool, &five, &c).unwrap();
    assert!(matches!(check_shared_folds(&[&none, &other]), Err(Error::Invariant(_))));
}

#[test]
fn relative_delta_respects_metric_direction() {
    let d = relative_delta(0.3342, 0.4050, Metric::HammingLoss);
    assert_abs_diff_eq!(d, 17.48, epsilon = 0.01);
    assert!(relative_delta(0.6, 0.5, Metric::R2) > 0.0);
    assert!(relative_delta(0.6, 0.5, Metric::SubsetAccuracy) > 0.0);
    assert!(relative_delta(0.6, 0.5, Metric::HammingLoss) < 0.0);
}

#[test]
fn ablation_rows_cover_every_metric() {
    let (real, pool) = data();
    let c = Constant::new();
    let cfg = small_cfg();
    let n = evaluate_condition(&real, &pool, &cfg, &c).unwrap();
    let u = evaluate_condition(&real, &pool, &cfg.with(Condition::Uniform, 10), &c).unwrap();
    let m = evaluate_condition(&real, &pool, &cfg.with(Condition::Margin, 10), &c).unwrap();
    let rows = ablation_rows(&n, &u, &m);
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert_eq!((r.delta_margin_vs_none, r.delta_uniform_vs_none), (0.0, 0.0));
    }
}

#[test]
fn insensitive_learner_gives_flat_curves_and_degenerate_tests() {
    let (real, pool) = data();
    let c = Constant::new();
    let curve = learning_curve(&real, &pool, &small_cfg(), &[10, 20], &c).unwrap();
    assert_eq!(curve.n_grid, [10, 20, 30]);
    assert_eq!(curve.rows.len(), 9);
    let tested: Vec<_> = curve.rows.iter().filter_map(|r| r.test.as_ref()).collect();
    assert_eq!(tested.len(), 3 * (curve.n_grid.len() - 1));
    assert!(tested.iter().all(|t| t.degenerate && t.p_value == 1.0));
    for r in &curve.rows {
        assert_eq!((r.mean_uniform, r.mean_margin), (r.mean_none, r.mean_none));
    }
    assert_eq!(curve.endpoint.len(), 3);
    assert!(curve.endpoint.iter().all(|e| e.n_syn == 30 && e.test.degenerate));

    let dir = tempfile::tempdir().unwrap();
    write_learning_curve(dir.path(), &curve).unwrap();
    let h2 = std::fs::read_to_string(dir.path().join("h2_pvalues.csv")).unwrap();
    assert_eq!(h2.lines().count(), 1 + 6);
}

#[test]
fn identical_pools_favour_neither() {
    let (real, pool) = data();
    let rows = granularity_compare(&real, &pool, &pool, &small_cfg(), &SvrGnbLearner::default()).unwrap();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert!(r.degenerate);
        assert_eq!((r.mean_diff, r.favours.as_str()), (0.0, "neither"));
    }
}

#[test]
fn manifest_round_trips() {
    let cfg = small_cfg().with(Condition::Margin, 7);
    let learner = SvrGnbLearner::default();
    let m = RunManifest {
        command: "evaluate".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        learner: learner.name(),
        config: cfg.clone(),
        inputs: vec!["meta.csv".into()],
        n_real: 40,
        pool_sizes: vec![30],
        n_grid: vec![],
        pinned: PinnedDefaults::new(&cfg, &learner),
    };
    let dir = tempfile::tempdir().unwrap();
    write_manifest(dir.path(), &m).unwrap();
    assert_eq!(read_manifest(&dir.path().join("manifest.json")).unwrap(), m);
}

#[test]
fn out_dir_needs_force_when_occupied() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    prepare_out_dir(&dir, false).unwrap();
    prepare_out_dir(&dir, false).unwrap();
    std::fs::write(dir.join("x"), "1").unwrap();
    assert!(matches!(prepare_out_dir(&dir, false), Err(Error::AlreadyExists(_))));
    prepare_out_dir(&dir, true).unwrap();
}

#[test]
fn sampling_summary_has_a_row_per_pool_member() {
    let (real, pool) = data();
    let c = Constant::new();
    let cfg = small_cfg();
    let u = evaluate_condition(&real, &pool, &cfg.with(Condition::Uniform, 10), &c).unwrap();
    let m = evaluate_condition(&real, &pool, &cfg.with(Condition::Margin, 10), &c).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("s.csv");
    write_sampling_summary(&path, &pool, cfg.alpha, &[&u, &m]).unwrap();
    let mut rd = csv::Reader::from_path(&path).unwrap();
    let headers = rd.headers().unwrap().clone();
    assert_eq!(&headers[6], "freq_uniform_10");
    assert_eq!(&headers[7], "freq_margin_10");
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), pool.len());
    let p_sum: f64 = rows.iter().map(|r| r[5].parse::<f64>().unwrap()).sum();
    assert_abs_diff_eq!(p_sum, 1.0, epsilon = 1e-12);
    // Each unit draws 10 rows, so frequencies sum to 10.
    let f_sum: f64 = rows.iter().map(|r| r[6].parse::<f64>().unwrap()).sum();
    assert_abs_diff_eq!(f_sum, 10.0, epsilon = 1e-9);
}
