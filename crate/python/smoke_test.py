"""Smoke test for the tutorlens extension module.

Build it first, e.g. `maturin develop -m crates/python/Cargo.toml`, or
`cargo build -p tutorlens-python` and put target/debug/libtutorlens.so on
PYTHONPATH as tutorlens.so.
"""

from pathlib import Path

import tutorlens

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "crates" / "core" / "tests" / "fixtures"


def main():
    c = tutorlens.Curriculum.from_toml((FIXTURES / "curriculum.toml").read_text())
    assert c.validate() == [], c.validate()
    assert c.week_ids() == ["w1", "w2", "w3", "w4"]

    raw = (FIXTURES / "transcripts" / "w1-alice.txt").read_bytes()
    t = tutorlens.Transcript.parse(raw, "text", "alice-w1", "alice", "w1", 1_760_000_000)
    a = tutorlens.evaluate_heuristic(t, c)
    r = tutorlens.build_report(t, a, c)
    assert r.engaged_subtopics == 4 and r.total_subtopics == 20
    assert abs(r.topic_coverage - 0.2) < 1e-12
    assert tutorlens.Assessment.from_json(a.to_json()).depths() == a.depths()

    name, html = tutorlens.render_student_report(r, c, 0)
    assert name.endswith(".html") and "Engagement feedback" in html

    weeks = []
    for week, hist in (("w1", [3, 1, 0]), ("w2", [1, 2, 1])):
        reports = []
        for seed in range(5):
            st, planted = tutorlens.synthesize(c, week, seed, hist)
            got = tutorlens.build_report(st, tutorlens.evaluate_heuristic(st, c), c)
            assert got.topic_coverage == planted.topic_coverage
            assert got.avg_topic_depth == planted.avg_topic_depth
            reports.append(got)
        weeks.append(tutorlens.aggregate_class(reports))
    (changes, rendered) = tutorlens.compare_weeks(weeks[0], weeks[1])
    # 4 of 20 subtopics vs 4 of 21
    assert rendered[0] == "\u22125%" and changes[1] > 0, rendered
    _, class_html = tutorlens.render_class_report(weeks, 0)
    assert "Change from w1 to w2" in class_html

    cfg = tutorlens.agent_config(c, "w3")
    assert "not deviate from the goals of instructional support" in cfg

    try:
        tutorlens.Transcript.parse(b"{", "jsonl", "x", "p", "w1")
    except ValueError:
        pass
    else:
        raise AssertionError("malformed transcript accepted")
    print("smoke test ok")


if __name__ == "__main__":
    main()
