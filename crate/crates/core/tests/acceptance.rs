//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without the libtest harness so the lines always print.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use tutorlens_core::curriculum::{Curriculum, WeekSpec};
use tutorlens_core::evaluator::{
    evaluate_heuristic, evaluate_remote, AssessmentSet, Backend, Depth, EvaluateError,
    RemoteBackendConfig, SubtopicAssessment, DEFAULT_RUBRIC_PROMPT,
};
use tutorlens_core::metrics::{aggregate_class, build_report, compare_weeks, ClassAggregate};
use tutorlens_core::pipeline::{service, ArtifactKind, ArtifactStore, Pipeline, PipelineConfig};
use tutorlens_core::promptgen::{
    assemble_agent_config, DEFAULT_PEDAGOGY_TEMPLATE, DEFAULT_PERSONA_TEMPLATE,
    GENERIC_STARTER_PROMPTS, GUARDRAIL_ACCURACY, GUARDRAIL_SCOPE,
};
use tutorlens_core::report::{render_class_report, render_student_report};
use tutorlens_core::rounding;
use tutorlens_core::synth::{recovery_check, SynthSpec, WordsSpec};
use tutorlens_core::transcript::{parse_transcript, Role, SubmissionMeta, Transcript, TranscriptFormat, Turn};

/// Recovered mean turn length may differ from the plant by at most this many words.
const TURN_LENGTH_TOLERANCE_WORDS: f64 = 1.0;
/// Upper bound for the all-subtopics depth variant at coverage 0.31 (3 x 0.31).
const ALL_SUBTOPICS_DEPTH_BOUND: f64 = 0.93;
const RECOVERY_SPECS: u64 = 120;
const RECOVERY_SPECS_AT_031: u64 = 100;
const ORACLE_SETS: u64 = 25;
const DETERMINISM_TRANSCRIPTS: u64 = 50;
const DETERMINISM_RUNS: usize = 3;
const MALFORMED_VARIANTS: usize = 20;
const REMOTE_MAX_RETRIES: u32 = 2;
const DELIVERIES: usize = 5;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn alice(week_id: &str) -> Transcript {
    let raw = std::fs::read(common::fixture("transcripts/w1-alice.txt")).unwrap();
    let meta = SubmissionMeta {
        submission_id: "alice-w1".into(),
        student_pseudonym: "alice".into(),
        week_id: week_id.into(),
        submitted_at: common::SUBMITTED_AT,
    };
    parse_transcript(&raw, TranscriptFormat::PlainTextExport, &meta).unwrap()
}

fn class_aggregates(c: &Curriculum) -> (ClassAggregate, ClassAggregate) {
    (
        aggregate_class(&common::class_reports(c, "w1")).unwrap(),
        aggregate_class(&common::class_reports(c, "w2")).unwrap(),
    )
}

fn criterion_1(c: &Curriculum) -> Outcome {
    let (w1, w2) = class_aggregates(c);
    let shown = |a: &ClassAggregate| {
        [
            rounding::percent_one_decimal(a.median_coverage()),
            rounding::two_decimals(a.median_avg_depth()),
            format!("{:.1}", a.median_avg_turn_length().unwrap()),
        ]
    };
    ensure(shown(&w1) == ["52.5%", "1.33", "48.2"], || format!("week 1 medians {:?}", shown(&w1)))?;
    ensure(shown(&w2) == ["31.0%", "2.06", "54.4"], || format!("week 2 medians {:?}", shown(&w2)))?;
    let cmp = compare_weeks(&w1, &w2).map_err(|e| e.to_string())?;
    let rendered = cmp.rendered();
    ensure(rendered == ["\u{2212}41%", "+55%", "+13%"], || format!("rendered {rendered:?}"))?;
    Ok(format!("medians 52.5%/1.33/48.2 and 31.0%/2.06/54.4; changes {}", rendered.join(" ")))
}

fn criterion_2(c: &Curriculum) -> Outcome {
    let reports = common::class_reports(c, "w2");
    let agg = aggregate_class(&reports).unwrap();
    let engaged_only = agg.median_avg_depth().unwrap();
    ensure(rounding::percent_one_decimal(agg.median_coverage()) == "31.0%", || {
        format!("coverage {}", agg.median_coverage())
    })?;
    ensure(rounding::two_decimals(Some(engaged_only)) == "2.06", || {
        format!("engaged-only depth {engaged_only}")
    })?;
    // the rejected definition divides each student's depth sum by all 21 subtopics
    let all_subtopics: Vec<f64> = reports
        .iter()
        .map(|r| {
            r.per_subtopic.values().map(|m| m.depth.value() as f64).sum::<f64>() / r.total_subtopics as f64
        })
        .collect();
    let variant = tutorlens_core::metrics::median(&all_subtopics).unwrap();
    ensure(variant <= ALL_SUBTOPICS_DEPTH_BOUND, || format!("all-subtopics variant {variant}"))?;
    ensure((engaged_only - variant).abs() > 1.0, || "implementation matches the rejected variant".into())?;
    // the same rule on one student's assessment
    let s08 = &reports[7];
    ensure(s08.avg_topic_depth == Some(2.0), || format!("s08 depth {:?}", s08.avg_topic_depth))?;
    Ok(format!(
        "engaged-only median {} vs all-subtopics median {:.3} (bound {ALL_SUBTOPICS_DEPTH_BOUND})",
        rounding::two_decimals(Some(engaged_only)),
        variant
    ))
}

fn split(rng: &mut ChaCha8Rng, k: usize) -> [usize; 3] {
    let a = rng.random_range(0..=k);
    let b = rng.random_range(0..=k - a);
    [a, b, k - a - b]
}

fn random_spec(seed: u64, week: &WeekSpec, k: usize, mix: Option<usize>) -> SynthSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = week.subtopics.len();
    let depth_histogram = match mix {
        Some(d) => {
            let mut h = [0; 3];
            h[d] = k;
            h
        }
        None => split(&mut rng, k),
    };
    SynthSpec {
        seed,
        week_id: week.week_id.clone(),
        target_coverage: k as f64 / n as f64,
        depth_histogram,
        words_per_message: WordsSpec {
            mean: rng.random_range(3.0..40.0),
            spread: rng.random_range(0.0..8.0),
        },
        messages_per_engaged_subtopic: [1, rng.random_range(1..=3), rng.random_range(1..=3)],
        submitted_at: 0,
    }
}

fn criterion_3(c: &Curriculum) -> Outcome {
    let weeks = [c.week("w1").unwrap(), c.week("w2").unwrap()];
    let mut specs = Vec::new();
    for i in 0..RECOVERY_SPECS {
        let week = weeks[i as usize % 2];
        let n = week.subtopics.len();
        let mut rng = ChaCha8Rng::seed_from_u64(i);
        let k = rng.random_range((n as f64 * 0.1).ceil() as usize..=n);
        let mix = match i % 4 {
            3 => None,
            d => Some(d as usize),
        };
        specs.push((random_spec(10_000 + i, week, k, mix), week));
    }
    let w2 = weeks[1];
    let at_031 = (0.31 * w2.subtopics.len() as f64).round() as usize;
    for i in 0..RECOVERY_SPECS_AT_031 {
        let mut spec = random_spec(20_000 + i, w2, at_031, None);
        spec.target_coverage = 0.31;
        specs.push((spec, w2));
    }

    let mut failures = Vec::new();
    let mut mixes = BTreeSet::new();
    for (spec, week) in &specs {
        mixes.insert(spec.depth_histogram.map(|h| h > 0));
        match recovery_check(spec, week) {
            Ok(r) => {
                let turn_ok = r
                    .turn_length_delta
                    .is_none_or(|d| d.abs() <= TURN_LENGTH_TOLERANCE_WORDS);
                if !(r.within_contract() && turn_ok && r.coverage_delta == 0.0) {
                    failures.push(format!("seed {}: {:?}", spec.seed, r.depth_mismatches));
                }
            }
            Err(e) => failures.push(format!("seed {}: {e}", spec.seed)),
        }
    }
    ensure(failures.is_empty(), || format!("{} failures: {:?}", failures.len(), &failures[..failures.len().min(3)]))?;
    ensure(mixes.len() >= 7, || format!("only {} depth mixes exercised", mixes.len()))?;
    Ok(format!("{} specs ({} at coverage 0.31), {} depth mixes, 0 failures", specs.len(), RECOVERY_SPECS_AT_031, mixes.len()))
}

/// Straight-line recomputation of the three metrics from raw parts.
fn oracle(t: &Transcript, a: &AssessmentSet, total: usize) -> (f64, Option<f64>, Option<f64>) {
    let mut engaged = 0usize;
    let mut depth_sum = 0u32;
    let mut topic_means_sum = 0.0;
    let mut topic_means_n = 0usize;
    for entry in a.entries.values() {
        if entry.depth.value() < 1 {
            continue;
        }
        engaged += 1;
        depth_sum += entry.depth.value() as u32;
        let mut words = 0usize;
        let mut msgs = 0usize;
        for &i in &entry.attributed_student_turns {
            words += t.turns[i].text.split_whitespace().count();
            msgs += 1;
        }
        if msgs > 0 {
            topic_means_sum += words as f64 / msgs as f64;
            topic_means_n += 1;
        }
    }
    let coverage = engaged as f64 / total as f64;
    let depth = if engaged > 0 { Some(depth_sum as f64 / engaged as f64) } else { None };
    let turns = if topic_means_n > 0 { Some(topic_means_sum / topic_means_n as f64) } else { None };
    (coverage, depth, turns)
}

fn random_assessment(seed: u64) -> (Transcript, AssessmentSet, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=8);
    let turns: Vec<Turn> = (0..rng.random_range(2..=16))
        .map(|i| {
            let role = if i % 2 == 0 { Role::Student } else { Role::Agent };
            let words = rng.random_range(1..=40);
            Turn::new(i, role, vec!["word"; words].join(" "))
        })
        .collect();
    let mut entries: BTreeMap<String, SubtopicAssessment> = BTreeMap::new();
    let mut unattributed = Vec::new();
    for turn in turns.iter().filter(|t| t.role == Role::Student) {
        let pick = rng.random_range(0..=n);
        if pick == n {
            unattributed.push(turn.index);
            continue;
        }
        entries
            .entry(format!("s{pick}"))
            .or_insert_with(|| SubtopicAssessment {
                subtopic_id: format!("s{pick}"),
                depth: Depth::MENTIONED,
                attributed_student_turns: vec![],
                evidence: vec![],
            })
            .attributed_student_turns
            .push(turn.index);
    }
    for e in entries.values_mut() {
        e.depth = Depth::new(rng.random_range(0..=3)).unwrap();
    }
    let t = Transcript {
        submission_id: format!("o{seed}"),
        student_pseudonym: "p".into(),
        week_id: "w".into(),
        submitted_at: 0,
        turns,
    };
    let a = AssessmentSet {
        week_id: "w".into(),
        submission_id: t.submission_id.clone(),
        entries,
        unattributed_student_turns: unattributed,
        backend: Backend::Heuristic,
    };
    (t, a, n)
}

fn criterion_4() -> Outcome {
    let mut undefined = 0;
    for seed in 0..ORACLE_SETS {
        let (t, a, n) = random_assessment(seed);
        let r = build_report(&t, &a, n).map_err(|e| format!("seed {seed}: {e}"))?;
        let (cov, depth, turns) = oracle(&t, &a, n);
        ensure(
            r.topic_coverage == cov && r.avg_topic_depth == depth && r.avg_turn_length_per_topic == turns,
            || {
                format!(
                    "seed {seed}: module ({}, {:?}, {:?}) vs oracle ({cov}, {depth:?}, {turns:?})",
                    r.topic_coverage, r.avg_topic_depth, r.avg_turn_length_per_topic
                )
            },
        )?;
        undefined += usize::from(depth.is_none());
    }
    Ok(format!("{ORACLE_SETS} sets match exactly ({undefined} with no engaged subtopic)"))
}

fn random_transcript(seed: u64, week: &WeekSpec) -> Transcript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keywords: Vec<&str> = week.subtopics.iter().flat_map(|s| s.keywords.iter().map(String::as_str)).collect();
    let extras = ["why", "compare", "vs", "what if", "because", "ok", "thanks", "hmm", "the", "a", "and", "it", "?"];
    let mut turns = Vec::new();
    for i in 0..rng.random_range(1..=24) {
        let role = if rng.random_bool(0.6) { Role::Student } else { Role::Agent };
        let words: Vec<&str> = (0..rng.random_range(1..=30))
            .map(|_| {
                if rng.random_bool(0.15) {
                    keywords[rng.random_range(0..keywords.len())]
                } else {
                    extras[rng.random_range(0..extras.len())]
                }
            })
            .collect();
        turns.push(Turn::new(i, role, words.join(" ")));
    }
    Transcript {
        submission_id: format!("d{seed}"),
        student_pseudonym: "p".into(),
        week_id: week.week_id.clone(),
        submitted_at: 0,
        turns,
    }
}

fn criterion_5(c: &Curriculum) -> Outcome {
    let weeks: Vec<&WeekSpec> = c.weeks().collect();
    for seed in 0..DETERMINISM_TRANSCRIPTS {
        let week = weeks[seed as usize % weeks.len()];
        let t = random_transcript(seed, week);
        let runs: Vec<String> = (0..DETERMINISM_RUNS)
            .map(|_| evaluate_heuristic(&t, week).unwrap().to_json())
            .collect();
        ensure(runs.iter().all(|r| r == &runs[0]), || format!("seed {seed}: output differs across runs"))?;
        let a = evaluate_heuristic(&t, week).unwrap();
        let mut seen: Vec<usize> = a
            .entries
            .values()
            .flat_map(|e| e.attributed_student_turns.iter().copied())
            .chain(a.unattributed_student_turns.iter().copied())
            .collect();
        seen.sort_unstable();
        ensure(seen == t.student_turn_indices(), || format!("seed {seed}: partition broken"))?;
        let violations = a.check_against(&t, &week.subtopics);
        ensure(violations.is_empty(), || format!("seed {seed}: {violations:?}"))?;
    }
    Ok(format!("{DETERMINISM_TRANSCRIPTS} transcripts x {DETERMINISM_RUNS} runs byte-identical, partition holds"))
}

fn malformed_variants(valid: &Value) -> Vec<(&'static str, String)> {
    let obj = |f: &dyn Fn(&mut Value)| {
        let mut v = valid.clone();
        f(&mut v);
        v.to_string()
    };
    let first_turn = valid["entries"][0]["attributed_student_turns"][0].as_u64().unwrap();
    let s = valid.to_string();
    let last = valid["entries"].as_array().unwrap().len() - 1;
    let wrap = |content: String| json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string();
    let mut out: Vec<(&'static str, String)> = vec![
        ("depth above scale", obj(&|v| v["entries"][0]["depth"] = json!(4))),
        ("negative depth", obj(&|v| v["entries"][0]["depth"] = json!(-1))),
        ("depth as string", obj(&|v| v["entries"][0]["depth"] = json!("2"))),
        ("fractional depth", obj(&|v| v["entries"][0]["depth"] = json!(2.5))),
        ("double attribution", obj(&|v| {
            v["entries"][1]["attributed_student_turns"].as_array_mut().unwrap().push(json!(first_turn))
        })),
        ("attributed and unattributed", obj(&|v| {
            v["unattributed_student_turns"].as_array_mut().unwrap().push(json!(first_turn))
        })),
        ("missing schema", obj(&|v| { v.as_object_mut().unwrap().remove("schema"); })),
        ("missing entries", obj(&|v| { v.as_object_mut().unwrap().remove("entries"); })),
        ("missing unattributed list", obj(&|v| { v.as_object_mut().unwrap().remove("unattributed_student_turns"); })),
        ("entry missing depth", obj(&|v| { v["entries"][0].as_object_mut().unwrap().remove("depth"); })),
        ("trailing junk", format!("{s} Hope this helps!")),
        ("markdown fence", format!("```json\n{s}\n```")),
        ("two objects", format!("{s}\n{s}")),
        ("unknown subtopic", obj(&|v| v["entries"][0]["subtopic_id"] = json!("quantum-networking"))),
        ("agent turn attributed", obj(&|v| {
            v["entries"][0]["attributed_student_turns"].as_array_mut().unwrap().push(json!(1))
        })),
        ("turn index out of range", obj(&|v| {
            v["entries"][0]["attributed_student_turns"].as_array_mut().unwrap().push(json!(999))
        })),
        ("student turn missing from partition", obj(&|v| v["unattributed_student_turns"] = json!([]))),
        ("engaged entry without turns", obj(&|v| {
            let moved = v["entries"][last]["attributed_student_turns"].take();
            v["entries"][last]["attributed_student_turns"] = json!([]);
            for t in moved.as_array().unwrap() {
                v["unattributed_student_turns"].as_array_mut().unwrap().push(t.clone());
            }
        })),
        ("fabricated evidence", obj(&|v| v["entries"][0]["evidence"] = json!(["we discussed quantum tunnelling at length"]))),
    ];
    let mut bodies: Vec<(&'static str, String)> = out.drain(..).map(|(n, c)| (n, wrap(c))).collect();
    bodies.push((
        "two choices",
        json!({"choices": [
            {"message": {"role": "assistant", "content": s}},
            {"message": {"role": "assistant", "content": s}}
        ]})
        .to_string(),
    ));
    bodies
}

struct MockLlm {
    bodies: Vec<String>,
    hits: Vec<AtomicUsize>,
    unauthorized: AtomicUsize,
}

fn criterion_6(c: &Curriculum) -> Outcome {
    use axum::extract::{Path, State};
    use axum::http::{HeaderMap, StatusCode};
    use axum::routing::post;

    const TOKEN_VAR: &str = "TUTORLENS_ACCEPTANCE_TOKEN";
    std::env::set_var(TOKEN_VAR, "test-token");
    let week = c.week("w1").unwrap();
    let t = alice("w1");
    let mut valid = evaluate_heuristic(&t, week).unwrap();
    valid.backend = Backend::Remote;
    let valid: Value = serde_json::from_str(&valid.to_json()).unwrap();
    let mut bodies: Vec<(&str, String)> = malformed_variants(&valid);
    ensure(bodies.len() == MALFORMED_VARIANTS, || format!("{} variants built", bodies.len()))?;
    let control =
        json!({"choices": [{"message": {"role": "assistant", "content": valid.to_string()}}]}).to_string();
    bodies.push(("valid control", control));

    let mock = Arc::new(MockLlm {
        hits: bodies.iter().map(|_| AtomicUsize::new(0)).collect(),
        bodies: bodies.iter().map(|(_, b)| b.clone()).collect(),
        unauthorized: AtomicUsize::new(0),
    });
    let rt = tokio::runtime::Runtime::new().unwrap();
    let app = axum::Router::new()
        .route(
            "/v/{n}/chat/completions",
            post(|State(m): State<Arc<MockLlm>>, Path(n): Path<usize>, headers: HeaderMap| async move {
                if headers.get("authorization").and_then(|h| h.to_str().ok()) != Some("Bearer test-token") {
                    m.unauthorized.fetch_add(1, Ordering::SeqCst);
                    return (StatusCode::UNAUTHORIZED, String::new());
                }
                m.hits[n].fetch_add(1, Ordering::SeqCst);
                (StatusCode::OK, m.bodies[n].clone())
            }),
        )
        .with_state(mock.clone());
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    rt.spawn(async move { axum::serve(listener, app).await });

    let cfg = |n: usize| RemoteBackendConfig {
        endpoint_url: format!("http://{addr}/v/{n}/chat/completions"),
        model_name: "mock".into(),
        auth_token_env_var: TOKEN_VAR.into(),
        max_retries: REMOTE_MAX_RETRIES,
        timeout_secs: 10,
    };
    let mut coerced = Vec::new();
    for (n, (name, _)) in bodies.iter().enumerate().take(MALFORMED_VARIANTS) {
        match evaluate_remote(&t, week, &cfg(n), DEFAULT_RUBRIC_PROMPT) {
            Err(EvaluateError::SchemaInvalidAfterRetries { attempts, .. }) => {
                let hits = mock.hits[n].load(Ordering::SeqCst);
                ensure(attempts == REMOTE_MAX_RETRIES + 1 && hits == attempts as usize, || {
                    format!("{name}: {attempts} attempts, {hits} requests")
                })?;
            }
            Ok(_) => coerced.push(*name),
            Err(other) => return Err(format!("{name}: unexpected error {other}")),
        }
    }
    ensure(coerced.is_empty(), || format!("coerced acceptances: {coerced:?}"))?;
    let accepted = evaluate_remote(&t, week, &cfg(MALFORMED_VARIANTS), DEFAULT_RUBRIC_PROMPT)
        .map_err(|e| format!("valid control rejected: {e}"))?;
    ensure(accepted.entries == evaluate_heuristic(&t, week).unwrap().entries, || "control altered".into())?;
    ensure(mock.unauthorized.load(Ordering::SeqCst) == 0, || "requests without bearer token".into())?;
    Ok(format!(
        "{MALFORMED_VARIANTS} variants rejected after {} attempts each, 0 coerced; valid control accepted",
        REMOTE_MAX_RETRIES + 1
    ))
}

fn criterion_7(c: &Curriculum) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::new(common::fixture("curriculum.toml"), dir.path().join("store"));
    let pipeline = Arc::new(Pipeline::with_curriculum(cfg, c.clone()).map_err(|e| e.to_string())?);
    let rt = tokio::runtime::Runtime::new().unwrap();
    let handle = rt
        .block_on(async {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
            service::start(pipeline.clone(), listener).await
        })
        .unwrap();
    let url = format!("http://{}/submissions", handle.local_addr());
    let payload = std::fs::read(common::fixture("transcripts/w1-alice.txt")).unwrap();
    let fields = [("student_pseudonym", "alice"), ("week_id", "w1"), ("format", "text")];

    let snapshot = || {
        let list = pipeline.store().list().unwrap();
        let bytes: u64 = list.iter().map(|a| a.bytes_len).sum();
        (list, bytes)
    };
    let mut after_first = None;
    let mut keys = BTreeSet::new();
    for delivery in 1..=DELIVERIES {
        let (ct, body) = common::multipart(&fields, Some(&payload));
        let (status, text) = common::post_multipart(&url, &ct, body);
        ensure(status == 200, || format!("delivery {delivery}: {status} {text}"))?;
        let v: Value = serde_json::from_str(&text).unwrap();
        keys.insert(v["report_key"].as_str().unwrap().to_string());
        let snap = snapshot();
        match &after_first {
            None => after_first = Some(snap),
            Some(first) => ensure(first == &snap, || format!("store changed on delivery {delivery}"))?,
        }
    }
    let (list, bytes) = after_first.unwrap();
    let reports = list.iter().filter(|a| a.kind == ArtifactKind::Report).count();
    ensure(reports == 1 && keys.len() == 1, || format!("{reports} report artifacts, {} keys", keys.len()))?;

    let mut unknown = fields;
    unknown[1] = ("week_id", "w99");
    for _ in 0..2 {
        let (ct, body) = common::multipart(&unknown, Some(&payload));
        let (status, text) = common::post_multipart(&url, &ct, body);
        ensure(status == 422, || format!("unknown week: {status} {text}"))?;
    }
    let letters = pipeline
        .store()
        .list()
        .unwrap()
        .iter()
        .filter(|a| a.kind == ArtifactKind::DeadLetter)
        .count();
    ensure(letters == 1, || format!("{letters} dead letters"))?;
    rt.block_on(handle.shutdown()).map_err(|e| e.to_string())?;
    Ok(format!(
        "{DELIVERIES} deliveries: 1 report, store stable at {} artifacts / {bytes} bytes; unknown week: 1 dead letter",
        list.len()
    ))
}

fn criterion_8(c: &Curriculum) -> Outcome {
    let configs: Vec<_> = c
        .weeks()
        .map(|w| assemble_agent_config(c, &w.week_id, DEFAULT_PERSONA_TEMPLATE, DEFAULT_PEDAGOGY_TEMPLATE))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    ensure(c.modules.len() == 2, || "fixture should have two modules".into())?;
    for cfg in &configs {
        let doc = cfg.to_file();
        for clause in [GUARDRAIL_SCOPE, GUARDRAIL_ACCURACY] {
            ensure(doc.contains(clause), || format!("{}: missing guardrail `{clause}`", cfg.week_id))?;
        }
        for prompt in GENERIC_STARTER_PROMPTS {
            ensure(cfg.starter_prompts.iter().any(|p| p == prompt) && doc.contains(prompt), || {
                format!("{}: missing starter prompt `{prompt}`", cfg.week_id)
            })?;
        }
        ensure(cfg.persona_layer == configs[0].persona_layer, || format!("{}: persona differs", cfg.week_id))?;
        ensure(cfg.pedagogy_layer == configs[0].pedagogy_layer, || format!("{}: pedagogy differs", cfg.week_id))?;
    }
    let distinct: BTreeSet<&str> = configs.iter().map(|c| c.knowledge_layer.as_str()).collect();
    ensure(distinct.len() == configs.len(), || "knowledge layers repeat across weeks".into())?;
    Ok(format!("{} weeks: guardrails and starter prompts present, layers behave", configs.len()))
}

fn rect_heights(svg: &str) -> Vec<f64> {
    svg.lines()
        .filter(|l| l.starts_with("<rect"))
        .map(|l| {
            let start = l.find("height=\"").unwrap() + 8;
            l[start..start + l[start..].find('"').unwrap()].parse().unwrap()
        })
        .collect()
}

fn criterion_9(c: &Curriculum) -> Outcome {
    let week = c.week("w1").unwrap();
    let t = alice("w1");
    let report = build_report(&t, &evaluate_heuristic(&t, week).unwrap(), week.subtopics.len()).unwrap();
    let student = render_student_report(&report, week, t.submitted_at).map_err(|e| e.to_string())?;
    let (w1, w2) = class_aggregates(c);
    let cmp = compare_weeks(&w1, &w2).unwrap();
    let class = render_class_report(&[w1.clone(), w2.clone()], Some(&cmp), w1.as_of.max(w2.as_of))
        .map_err(|e| e.to_string())?;
    common::assert_golden(&student.file_name(), &student.body)?;
    common::assert_golden(&class.file_name(), &class.body)?;
    let heights = rect_heights(&class.charts[0]);
    ensure(heights == [52.5, 31.0] && heights[0] / heights[1] == 52.5 / 31.0, || {
        format!("coverage bar heights {heights:?}")
    })?;
    Ok(format!("{} and {} match golden files; bars 52.5:31", student.file_name(), class.file_name()))
}

fn main() {
    let started = Instant::now();
    let c = common::curriculum();
    let criteria: Vec<Criterion> = vec![
        ("aggregation arithmetic", Box::new(|| criterion_1(&c))),
        ("engaged-only depth averaging", Box::new(|| criterion_2(&c))),
        ("metric recovery", Box::new(|| criterion_3(&c))),
        ("brute-force oracle", Box::new(criterion_4)),
        ("evaluator determinism and partition", Box::new(|| criterion_5(&c))),
        ("remote schema hardening", Box::new(|| criterion_6(&c))),
        ("pipeline idempotency", Box::new(|| criterion_7(&c))),
        ("promptgen guardrails", Box::new(|| criterion_8(&c))),
        ("golden documents", Box::new(|| criterion_9(&c))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run))
            .unwrap_or_else(|p| {
                Err(p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".into()))
            });
        match outcome {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(reason) => {
                failed += 1;
                println!("FAIL {}. {name}: {reason}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        criteria.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
