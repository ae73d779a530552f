#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use tutorlens_core::curriculum::{parse_curriculum, Curriculum};
use tutorlens_core::evaluator::Depth;
use tutorlens_core::metrics::{EngagementReport, SubtopicMetrics};

pub const SUBMITTED_AT: i64 = 1_760_000_000;

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn golden(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(rel)
}

pub fn curriculum() -> Curriculum {
    parse_curriculum(&std::fs::read(fixture("curriculum.toml")).unwrap()).unwrap()
}

/// Compares `actual` with a golden file; `UPDATE_GOLDEN=1` rewrites it.
pub fn assert_golden(rel: &str, actual: &str) -> Result<(), String> {
    let path = golden(rel);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path)
        .map_err(|e| format!("{}: {e} (run with UPDATE_GOLDEN=1 to create)", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        let line = expected
            .lines()
            .zip(actual.lines())
            .position(|(a, b)| a != b)
            .map_or(expected.lines().count().min(actual.lines().count()), |i| i);
        Err(format!("{} differs from output, first at line {}", path.display(), line + 1))
    }
}

/// One hand-built student report: `mix` counts subtopics at depth 1, 2, 3;
/// every engaged subtopic has the same mean message length `words`.
fn student(
    c: &Curriculum,
    week_id: &str,
    n: usize,
    mix: [usize; 3],
    words: f64,
) -> EngagementReport {
    let week = c.week(week_id).unwrap();
    let total = week.subtopics.len();
    let depths: Vec<u8> = [1u8, 2, 3]
        .iter()
        .zip(mix)
        .flat_map(|(&d, k)| std::iter::repeat_n(d, k))
        .collect();
    let engaged = depths.len();
    // rotate the starting subtopic so students touch different topics
    let per_subtopic: BTreeMap<String, SubtopicMetrics> = depths
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            (
                week.subtopics[(i + n) % total].subtopic_id.clone(),
                SubtopicMetrics {
                    depth: Depth::new(d).unwrap(),
                    mean_student_words: Some(words),
                    message_count: d as usize,
                },
            )
        })
        .collect();
    EngagementReport {
        submission_id: format!("{week_id}-s{n:02}"),
        student_pseudonym: format!("student{n:02}"),
        week_id: week_id.to_string(),
        submitted_at: SUBMITTED_AT + n as i64,
        total_subtopics: total,
        engaged_subtopics: engaged,
        topic_coverage: engaged as f64 / total as f64,
        avg_topic_depth: Some(depths.iter().map(|&d| d as f64).sum::<f64>() / engaged as f64),
        avg_turn_length_per_topic: Some(words),
        pooled_turn_length: Some(words),
        per_subtopic,
    }
}

/// Sixteen reports per week whose medians display as the published class
/// figures: week 1 52.5% / 1.33 / 48.2 words, week 2 31.0% / 2.06 / 54.4.
pub fn class_reports(c: &Curriculum, week_id: &str) -> Vec<EngagementReport> {
    let rows: &[([usize; 3], f64)] = match week_id {
        "w1" => &[
            ([6, 0, 0], 40.0),
            ([6, 1, 0], 42.5),
            ([7, 1, 0], 44.0),
            ([6, 2, 0], 45.5),
            ([7, 2, 0], 46.0),
            ([8, 0, 1], 47.0),
            ([8, 2, 0], 47.5),
            ([7, 3, 0], 48.0),
            ([7, 4, 0], 48.4),
            ([6, 4, 1], 49.0),
            ([6, 5, 1], 50.5),
            ([5, 5, 2], 52.0),
            ([6, 5, 2], 55.0),
            ([6, 6, 2], 58.0),
            ([6, 6, 3], 61.5),
            ([5, 7, 4], 64.0),
        ],
        "w2" => &[
            ([2, 0, 0], 44.0),
            ([2, 1, 0], 47.0),
            ([2, 2, 0], 49.0),
            ([1, 3, 0], 50.0),
            ([1, 4, 0], 51.5),
            ([2, 2, 1], 52.0),
            ([2, 3, 1], 52.5),
            ([1, 4, 1], 54.0),
            ([1, 4, 2], 54.8),
            ([0, 5, 2], 55.5),
            ([1, 5, 2], 56.0),
            ([1, 5, 3], 58.0),
            ([1, 5, 4], 60.0),
            ([1, 6, 4], 62.0),
            ([1, 6, 5], 65.0),
            ([1, 7, 6], 70.0),
        ],
        other => panic!("no class fixture for {other}"),
    };
    rows.iter()
        .enumerate()
        .map(|(i, &(mix, words))| student(c, week_id, i + 1, mix, words))
        .collect()
}

/// Hand-rolled multipart/form-data body.
pub fn multipart(fields: &[(&str, &str)], file: Option<&[u8]>) -> (String, Vec<u8>) {
    let boundary = "----tutorlens-test-boundary";
    let mut body = Vec::new();
    for (name, value) in fields {
        body.extend_from_slice(
            format!("--{boundary}\r\nContent-Disposition: form-data; name=\"{name}\"\r\n\r\n{value}\r\n")
                .as_bytes(),
        );
    }
    if let Some(bytes) = file {
        body.extend_from_slice(
            format!(
                "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"t.txt\"\r\n\
                 Content-Type: text/plain\r\n\r\n"
            )
            .as_bytes(),
        );
        body.extend_from_slice(bytes);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{boundary}--\r\n").as_bytes());
    (format!("multipart/form-data; boundary={boundary}"), body)
}

/// POSTs a multipart body; returns status and body text.
pub fn post_multipart(url: &str, content_type: &str, body: Vec<u8>) -> (u16, String) {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into();
    let mut resp = agent
        .post(url)
        .header("Content-Type", content_type)
        .send(&body[..])
        .unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_to_string().unwrap())
}

pub fn get(url: &str) -> (u16, String) {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into();
    let mut resp = agent.get(url).call().unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_to_string().unwrap())
}

/// Checks a document (or fragment) is well-formed XML.
pub fn well_formed(doc: &str) -> Result<(), String> {
    let mut reader = quick_xml::Reader::from_str(doc);
    let mut depth = 0i64;
    loop {
        match reader.read_event() {
            Ok(quick_xml::events::Event::Start(_)) => depth += 1,
            Ok(quick_xml::events::Event::End(_)) => depth -= 1,
            Ok(quick_xml::events::Event::Eof) => break,
            Ok(_) => {}
            Err(e) => return Err(format!("at byte {}: {e}", reader.buffer_position())),
        }
        if depth < 0 {
            return Err("unbalanced end tag".into());
        }
    }
    if depth == 0 {
        Ok(())
    } else {
        Err(format!("{depth} unclosed element(s)"))
    }
}
