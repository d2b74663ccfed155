use std::sync::Mutex;

use indexmap::IndexMap;

use perfspace::data::write_csv_to;
use perfspace::error::Error;
use perfspace::synth::families::build;
use perfspace::synth::llm::{parse_answer, render, INITIAL_TEMPLATE};
use perfspace::synth::proposer::{families_for, repair};
use perfspace::synth::{
    build_candidate, evaluate_xy, execute_mechanism, load_accepted, persist_accepted, run_cell, slot_dir,
    AttemptRecord, CellSession, CellStatus, ChatBackend, ChatMessage, ChatReply, Dials, Family, LlmProposer,
    MechanismSpec, PerformanceGrid, Proposal, ProposeFailure, Proposer, RunConfig, TargetCell, TokenUsage,
};

const M3_SPEC: &str = r#"{
  "version": 1, "n_rows": 200,
  "latents": [{"name": "z", "dist": {"gaussian": {"mean": 0, "sd": 1}}}],
  "observed_features": [{"expr": "z"}],
  "target_expr": ["*", 3.2, "z"],
  "noise": {"homoscedastic": {"sigma": 2.0}},
  "distractor_count": 40,
  "search": {"params": {}, "policy": "first_in_box"}
}"#;

fn cell(ii: usize, jj: usize) -> TargetCell {
    PerformanceGrid::new(7).unwrap().cell(ii, jj)
}

fn everywhere() -> TargetCell {
    TargetCell {
        ii: 0,
        jj: 0,
        x_lo: -1.0,
        x_hi: 1.0,
        y_lo: -1.0,
        y_hi: 1.0,
        x_center: 0.0,
        y_center: 0.0,
    }
}

#[test]
fn m3_linear_signal_buried_in_distractors() {
    // The band applies to the mean over 20 seeds. Single seeds spread widely
    // because OLS fits 41 coefficients on 160 rows per fold.
    let spec = MechanismSpec::from_json(M3_SPEC).unwrap();
    let mut lr = Vec::new();
    for seed in 0..20 {
        let e = execute_mechanism(&spec, seed, &everywhere()).unwrap();
        assert_eq!(e.dataset.n_features(), 41);
        assert!(e.scores.x_score < 0.3, "seed {seed}: KNN {}", e.scores.x_score);
        lr.push(e.scores.y_score);
    }
    let population = 3.2f64.powi(2) / (3.2f64.powi(2) + 4.0);
    let m = perfspace::data::mean(&lr);
    assert!((m - population).abs() <= 0.15, "mean LR {m} vs {population}");
}

#[test]
fn execution_is_byte_identical_per_seed() {
    let spec = MechanismSpec::from_json(M3_SPEC).unwrap();
    let csv = |seed| {
        let d = build_candidate(&spec, &IndexMap::new(), seed).unwrap();
        let mut buf = Vec::new();
        write_csv_to(&d, &mut buf).unwrap();
        buf
    };
    assert_eq!(csv(9), csv(9));
    assert_ne!(csv(9), csv(10));
}

#[test]
fn identity_scores_near_perfect() {
    let mut rng = perfspace::rng::rng_from_seed(1);
    use rand::Rng;
    let z: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..1.0)).collect();
    let d = perfspace::data::Dataset::with_default_names(
        "id",
        perfspace::data::Matrix::from_columns(std::slice::from_ref(&z)).unwrap(),
        z,
    )
    .unwrap();
    let s = evaluate_xy(&d).unwrap();
    assert!(s.y_score > 0.999 && s.x_score > 0.95, "{s:?}");
}

#[test]
fn documented_box_example_is_inside() {
    let c = cell(2, 3);
    assert!((c.x_lo - 0.428571).abs() < 1e-6 && (c.y_hi - 0.428571).abs() < 1e-6);
    assert!(c.contains(0.432, 0.401));
}

#[test]
fn proposer_regions_pick_expected_families() {
    for ii in 0..2 {
        let f = families_for(&cell(ii, 6))[0];
        assert!(matches!(f, Family::M6 | Family::M2));
        let (spec, _) = build(f, Dials::initial(f), 200);
        let max_d = spec
            .search
            .params
            .get("d_noise")
            .map(|v| v.iter().cloned().fold(0.0, f64::max))
            .unwrap_or(0.0);
        assert!(max_d <= 3.0, "{max_d}");
    }
    let f = families_for(&cell(4, 0))[0];
    assert_eq!(f, Family::M3);
    let (spec, _) = build(f, Dials::initial(f), 200);
    assert!(spec.search.params["d_noise"].iter().all(|d| (20.0..=90.0).contains(d)));
}

#[test]
fn overshooting_x_adds_distractors() {
    let c = cell(3, 3);
    let d0 = Dials::initial(Family::M1);
    let d1 = repair(Family::M1, d0, &c, c.x_hi + 0.2, c.y_center);
    assert!(d1.distractors > d0.distractors);
}

#[test]
fn initial_prompt_carries_six_numbers() {
    let c = cell(2, 3);
    let p = render(INITIAL_TEMPLATE, &[("target_description", &c.describe())]);
    for v in [c.x_lo, c.x_hi, c.y_lo, c.y_hi, c.x_center, c.y_center] {
        assert!(p.contains(&format!("{v:.6}")), "{v} missing from {p}");
    }
}

/// Replies from a fixed script, recording every conversation it sees.
struct Scripted {
    replies: Vec<String>,
    seen: Mutex<Vec<Vec<ChatMessage>>>,
}

impl ChatBackend for Scripted {
    fn complete(&self, messages: &[ChatMessage]) -> perfspace::Result<ChatReply> {
        let mut seen = self.seen.lock().unwrap();
        let i = seen.len();
        seen.push(messages.to_vec());
        let content = self
            .replies
            .get(i)
            .cloned()
            .ok_or_else(|| Error::Proposer("script exhausted".into()))?;
        Ok(ChatReply {
            content,
            tokens: Some(TokenUsage { input: 10, output: 5 }),
        })
    }
}

fn answer(spec: &str) -> String {
    format!(
        r#"{{"mechanism_brief": "linear", "mechanism_spec": {spec}, "expected_x_behavior": "low", "expected_y_behavior": "high"}}"#
    )
}

#[test]
fn stub_reply_round_trips() {
    let spec = MechanismSpec::from_json(M3_SPEC).unwrap();
    let a = parse_answer(&answer(&spec.to_json_pretty())).unwrap();
    assert_eq!(a.mechanism_spec.to_json_pretty(), spec.to_json_pretty());
    assert!(parse_answer(&answer(M3_SPEC).replace("\"low\"", "\"low\", \"extra\": 1")).is_err());
}

#[test]
fn llm_loop_reasks_once_then_spends_the_attempt() {
    let good = answer(M3_SPEC);
    let backend = Scripted {
        replies: vec![
            "not json".into(),
            good.clone(),
            "nope".into(),
            "still nope".into(),
            good,
        ],
        seen: Mutex::new(Vec::new()),
    };
    let p = LlmProposer::new(backend, "stub");
    let cfg = RunConfig {
        bins: 7,
        witnesses: 2,
        budget: 3,
        seed: 5,
    };
    let run = run_cell(&everywhere(), &cfg, &p, None).unwrap();
    assert_eq!(run.records.len(), 3);
    assert!(run.records[0].accepted);
    assert_eq!(run.records[0].tokens, Some(TokenUsage { input: 20, output: 10 }));
    assert!(!run.records[1].accepted && run.records[1].error.is_some());
    assert!(run.records[2].accepted);
    assert_eq!(run.status, CellStatus::Complete);
    // One thread per cell: after an accept the next turn asks for another
    // witness, after a spent attempt the repair turn says no scores came back.
    let seen = p.backend.seen.lock().unwrap();
    assert_eq!(seen.len(), 5);
    assert_eq!(seen[0][0].role, "system");
    let last = |i: usize| seen[i].last().unwrap().content.clone();
    assert_eq!(
        last(2),
        render(
            perfspace::synth::llm::NEXT_WITNESS_TEMPLATE,
            &[("target_description", &everywhere().describe())]
        )
    );
    assert!(last(4).contains("no scores"), "{}", last(4));
    assert_eq!(seen[4].len(), 10);
}

#[test]
fn network_failure_aborts_the_cell() {
    let p = LlmProposer::new(
        Scripted {
            replies: vec![],
            seen: Mutex::new(Vec::new()),
        },
        "stub",
    );
    let run = run_cell(
        &everywhere(),
        &RunConfig {
            bins: 7,
            witnesses: 1,
            budget: 5,
            seed: 0,
        },
        &p,
        None,
    )
    .unwrap();
    assert!(matches!(run.status, CellStatus::Aborted { .. }));
    assert!(run.accepted.is_empty());
}

/// Always proposes the same spec.
struct Fixed(&'static str);

struct FixedSession(&'static str);

impl CellSession for FixedSession {
    fn propose(&mut self, _attempt: usize, _history: &[AttemptRecord]) -> Result<Proposal, ProposeFailure> {
        Ok(Proposal {
            spec: MechanismSpec::from_json(self.0).unwrap(),
            brief: "fixed".into(),
            tokens: None,
        })
    }
}

impl Proposer for Fixed {
    fn id(&self) -> String {
        "fixed".into()
    }
    fn session(&self, _cell: &TargetCell) -> Box<dyn CellSession + '_> {
        Box::new(FixedSession(self.0))
    }
}

#[test]
fn always_in_box_fills_in_w_attempts() {
    let cfg = RunConfig {
        bins: 7,
        witnesses: 4,
        budget: 10,
        seed: 1,
    };
    let run = run_cell(&everywhere(), &cfg, &Fixed(M3_SPEC), None).unwrap();
    assert_eq!((run.records.len(), run.accepted.len()), (4, 4));
    assert_eq!(run.status, CellStatus::Complete);
    let slots: Vec<usize> = run.records.iter().map(|r| r.slot).collect();
    assert_eq!(slots, [0, 1, 2, 3]);
}

#[test]
fn never_in_box_exhausts_the_budget() {
    let cfg = RunConfig {
        bins: 7,
        witnesses: 2,
        budget: 6,
        seed: 1,
    };
    // M3 lands near x = 0, far from the top-right corner.
    let run = run_cell(&cell(6, 6), &cfg, &Fixed(M3_SPEC), None).unwrap();
    assert_eq!(run.records.len(), 6);
    assert!(run.accepted.is_empty());
    assert_eq!(run.status, CellStatus::Exhausted);
    // Retries for one slot reuse one execution seed.
    assert!(run.records.iter().all(|r| r.seed == run.records[0].seed));
}

#[test]
fn persisted_slot_round_trips_and_refuses_overwrite() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(slot_dir(tmp.path(), 2, 3, 6).ends_with("cell_02_03/ds_006"));
    let cfg = RunConfig {
        bins: 7,
        witnesses: 1,
        budget: 1,
        seed: 3,
    };
    let run = run_cell(&everywhere(), &cfg, &Fixed(M3_SPEC), None).unwrap();
    let (rec, data) = &run.accepted[0];
    let dir = persist_accepted(tmp.path(), rec, data).unwrap();
    for f in ["data.csv", "meta.json", "mechanism.json"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    assert_eq!(&load_accepted(&dir).unwrap(), rec);
    assert!(matches!(
        persist_accepted(tmp.path(), rec, data),
        Err(Error::AlreadyExists(_))
    ));
}
