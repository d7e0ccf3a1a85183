use std::collections::HashMap;
use std::fs;
use std::sync::Arc;

use proptest::prelude::*;
use proviq_core::codegen::{build_prompt, generate_program, select_examples, FixtureStore, GenMode};
use proviq_core::gateway::fault::{Corruption, FaultSpec};
use proviq_core::gateway::mock::{MockBackend, MockFrame, MockWorld};
use proviq_core::gateway::{Capability, Gateway};
use proviq_core::harness::{
    edit_video, evaluate, parse_dataset, EditMode, EvalOutcome, EvalReport, HarnessConfig, Runtime,
};
use proviq_core::interpreter::{execute, ExecBudget, ExecConfig};
use proviq_core::clip::Fps;
use proviq_core::lang::{compile, TaskKind};
use proviq_core::primitives::{PrimitiveParams, Session};
use proviq_testkit::suite::{fault_matrix, load_suite, mock_suite_dir, run_with};

#[test]
fn mock_suite_is_answered_perfectly() {
    let (config, dataset) = load_suite().unwrap();
    assert!(dataset.len() >= 30);
    let rt = Runtime::new(config).unwrap();
    let (report, records) = evaluate(&rt, &dataset).unwrap();
    let wrong: Vec<_> = records.iter().filter(|r| r.outcome != EvalOutcome::Correct).map(|r| &r.record.question_id).collect();
    assert!(wrong.is_empty(), "not correct: {wrong:?}");
    assert_eq!(report.accuracy, 1.0);
    assert_eq!(report.counts.values().sum::<usize>(), report.total);
    assert!(dataset.iter().filter(|r| r.options.as_ref().is_some_and(|o| o.len() == 5)).count() >= 5);
}

#[test]
fn report_arithmetic() {
    let (config, dataset) = load_suite().unwrap();
    let (_, mut records) = evaluate(&Runtime::new(config).unwrap(), &dataset).unwrap();
    let n = records.len();
    records[0].outcome = EvalOutcome::WrongAnswer;
    records[1].outcome = EvalOutcome::ModuleFailure;
    records[2].outcome = EvalOutcome::GenerationFailure;
    let report = EvalReport::from_records(&records);
    assert_eq!(report.counts[&EvalOutcome::Correct], n - 3);
    assert_eq!(report.counts.len(), 5);
    assert_eq!(report.counts.values().sum::<usize>(), n);
    assert!((report.accuracy - (n - 3) as f64 / n as f64).abs() < 1e-12);
    let typed: usize = report.by_type.values().map(|t| t.total).sum();
    assert_eq!(typed, records.iter().filter(|r| r.record.question_type.is_some()).count());
    for t in report.by_type.values() {
        assert!((t.accuracy - t.correct as f64 / t.total as f64).abs() < 1e-12);
    }
}

#[test]
fn faults_flip_only_questions_that_used_the_capability() {
    let (config, dataset) = load_suite().unwrap();
    let (_, cells) = fault_matrix(&config, &dataset, &[0.5, 1.0]).unwrap();
    let mut flipped_by_cap: HashMap<Capability, usize> = HashMap::new();
    for cell in &cells {
        assert!(cell.unattributed.is_empty(), "{:?}: {:?}", cell.fault, cell.unattributed);
        assert!(cell.generation_with_calls.is_empty());
        *flipped_by_cap.entry(cell.fault.capability).or_default() += cell.flipped.len();
    }
    for cap in [Capability::ImageQa, Capability::Detect, Capability::LlmComplete] {
        assert!(flipped_by_cap.get(&cap).copied().unwrap_or(0) > 0, "{cap} faults never changed an outcome");
    }
}

#[test]
fn dropped_detections_become_module_failures() {
    let (config, dataset) = load_suite().unwrap();
    let fault = FaultSpec::rate(Capability::Detect, Corruption::DropDetection, 1.0, 0);
    let records = run_with(&config, vec![fault], &dataset).unwrap();
    let ski = records.iter().find(|r| r.record.question_id == "ski_color").unwrap();
    assert_eq!(ski.outcome, EvalOutcome::ModuleFailure, "{:?}", ski.error);
    assert!(ski.capabilities.contains(&Capability::Detect));
}

#[test]
fn bad_fixture_is_a_generation_failure_without_calls() {
    let (mut config, _) = load_suite().unwrap();
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("broken.pvql"), "def answer_question(video, possible_answers):\n    for f in video:\n        return 1\n").unwrap();
    fs::write(dir.path().join("unknown.pvql"), "def answer_question(video, possible_answers):\n    return video.download()\n").unwrap();
    config.fixtures = Some(dir.path().to_owned());
    let dataset = parse_dataset(concat!(
        r#"{"question_id": "broken", "video_id": "ski_slope", "question": "q?", "type": "color", "answers": ["black"]}"#,
        "\n",
        r#"{"question_id": "unknown", "video_id": "ski_slope", "question": "q?", "type": "color", "answers": ["black"]}"#,
        "\n",
        r#"{"question_id": "absent", "video_id": "ski_slope", "question": "q?", "type": "color", "answers": ["black"]}"#,
        "\n",
    ))
    .unwrap();
    let (report, records) = evaluate(&Runtime::new(config).unwrap(), &dataset).unwrap();
    assert_eq!(report.counts[&EvalOutcome::GenerationFailure], 3);
    for r in &records {
        assert_eq!(r.backend_calls, 0);
        assert!(r.trace.is_none());
    }
    assert!(records[1].error.as_deref().unwrap().contains("download"));
}

fn suite_runtime() -> Runtime {
    Runtime::new(load_suite().unwrap().0).unwrap()
}

#[test]
fn execution_is_deterministic_and_fully_traced() {
    let rt = suite_runtime();
    let world = rt.world("ski_slope").unwrap().clone();
    let gw = Gateway::new(4).with_backend(Arc::new(MockBackend::new([world]))).with_call_log();
    let src = fs::read_to_string(mock_suite_dir().join("fixtures/ski_color.pvql")).unwrap();
    let program = compile(&src, TaskKind::Qa).unwrap();
    let video = rt.video("ski_slope").unwrap();
    let clip = rt.question_clip(&video);
    let before = clip.clone();
    let opts = vec!["black".to_owned(), "red".to_owned()];
    let cfg = ExecConfig::default();
    let (v1, t1) = execute(&program, &clip, Some(&opts), &cfg, &gw);
    let log = gw.call_log();
    let (v2, t2) = execute(&program, &clip, Some(&opts), &cfg, &gw);
    assert_eq!(v1, v2);
    assert_eq!(t1.clone().without_timing(), t2.without_timing());
    assert_eq!(clip, before);
    let mut traced: Vec<&str> = t1.calls().map(|c| c.request_id.as_str()).collect();
    let mut logged: Vec<&str> = log.iter().map(|c| c.request_id.as_str()).collect();
    traced.sort();
    logged.sort();
    assert_eq!(traced, logged);

    let roomy = ExecConfig { budget: ExecBudget { max_statements: 10_000, max_backend_calls: 1_000_000, wall_clock_limit_s: 6000.0 }, ..cfg.clone() };
    assert_eq!(execute(&program, &clip, Some(&opts), &roomy, &gw).0, v1);
}

#[test]
fn prompt_fingerprints_follow_configuration() {
    let rt = suite_runtime();
    let q = "What color is the skier's jacket?";
    let pool = rt.pool.for_task(TaskKind::Qa);
    let mut seen = Vec::new();
    for k in [0usize, 1, 2, 4, 8] {
        let ex = select_examples(q, &pool, k, &rt.table);
        assert_eq!(ex.len(), k.min(pool.len()));
        let a = build_prompt(&rt.api, &ex, q, None, TaskKind::Qa);
        let b = build_prompt(&rt.api, &ex, q, None, TaskKind::Qa);
        assert_eq!(a.fingerprint, b.fingerprint);
        assert!(!seen.contains(&a.fingerprint), "k={k} reused a fingerprint");
        seen.push(a.fingerprint);
    }
    let ex = select_examples(q, &pool, 4, &rt.table);
    let base = build_prompt(&rt.api, &ex, q, None, TaskKind::Qa).fingerprint;
    for m in ["find", "get_summary", "choose_option"] {
        let on = rt.api.flags()[m];
        let toggled = rt.api.clone().with(m, !on).unwrap();
        assert_ne!(build_prompt(&toggled, &ex, q, None, TaskKind::Qa).fingerprint, base, "{m}");
        let back = toggled.with(m, on).unwrap();
        assert_eq!(build_prompt(&back, &ex, q, None, TaskKind::Qa).fingerprint, base, "{m}");
    }
}

#[test]
fn fixture_programs_are_always_validated() {
    let rt = suite_runtime();
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("fenced", "```python\ndef answer_question(video, possible_answers):\n    return 1\n```\n", true),
        ("prose", "Here you go:\ndef answer_question(video, possible_answers):\n    return 1\n", false),
        ("wrong_entry", "def run(video):\n    return 1\n", false),
        ("eval", "def answer_question(video, possible_answers):\n    return eval(\"1\")\n", false),
        ("no_return", "def answer_question(video, possible_answers):\n    x = 1\n", false),
        ("empty", "", false),
    ];
    for (id, text, _) in cases {
        fs::write(dir.path().join(format!("{id}.pvql")), text).unwrap();
    }
    let store = FixtureStore::new(dir.path());
    let bundle = build_prompt(&rt.api, &[], "q", None, TaskKind::Qa);
    for (id, _, ok) in cases {
        match generate_program(&bundle, GenMode::Fixture { store: &store, question_id: Some(id) }) {
            Ok(g) => {
                assert!(ok, "{id} accepted");
                assert!(compile(&g.source, TaskKind::Qa).is_ok());
            }
            Err(e) => assert!(!ok, "{id} rejected: {e}"),
        }
    }
}

fn mask_world(mask: &[bool]) -> MockWorld {
    MockWorld {
        video_id: "m".into(),
        fps: Fps::integer(4).unwrap(),
        frame_count: mask.len() as u64,
        transcript: None,
        frames: mask
            .iter()
            .enumerate()
            .map(|(i, t)| MockFrame {
                index: i as u64,
                caption: Some("x".into()),
                predicates: [("is it on?".to_owned(), *t)].into(),
                ..Default::default()
            })
            .collect(),
        chunk_captions: vec![],
        llm: vec![],
    }
    .normalized()
    .unwrap()
}

proptest! {
    #[test]
    fn edit_segments_tile_the_video(mask in prop::collection::vec(any::<bool>(), 1..80)) {
        let w = mask_world(&mask);
        let clip = Arc::new(w.source_video()).full_clip();
        let gw = Gateway::new(2).with_backend(Arc::new(MockBackend::new([w])));
        let s = Session::new(&gw, PrimitiveParams::default());
        let removed = edit_video(&s, &clip, "is it on?", EditMode::RemoveMatching).unwrap();
        let kept = edit_video(&s, &clip, "is it on?", EditMode::KeepMatching).unwrap();
        for r in [&removed, &kept] {
            // sorted, non-empty and maximal: neighbours never touch
            prop_assert!(r.segments.iter().all(|s| s.start_frame < s.end_frame));
            prop_assert!(r.segments.windows(2).all(|w| w[0].end_frame < w[1].start_frame));
        }
        let mut all: Vec<(u64, u64)> = removed.segments.iter().chain(&kept.segments).map(|s| (s.start_frame, s.end_frame)).collect();
        all.sort();
        prop_assert_eq!(all.first().unwrap().0, 0);
        prop_assert_eq!(all.last().unwrap().1, mask.len() as u64);
        prop_assert!(all.windows(2).all(|w| w[0].1 == w[1].0));
        prop_assert_eq!(removed.manifest.len() + kept.manifest.len(), mask.len());
    }
}

#[test]
fn config_paths_resolve_against_the_file() {
    let (config, _) = load_suite().unwrap();
    assert!(config.fixtures.as_ref().unwrap().is_absolute() || config.fixtures.as_ref().unwrap().starts_with(mock_suite_dir()));
    let err = HarnessConfig::from_json(r#"{"workers": "four"}"#).unwrap_err().to_string();
    assert!(err.contains("workers"), "{err}");
}
