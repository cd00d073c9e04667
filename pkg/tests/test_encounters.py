import math
import random

import numpy as np
import pytest

from scrfit.encounters import (EncounterData, SessionBlock, ingest_encounters, mmdm, read_encounter_csv,
                               summarize, write_encounter_csv)
from scrfit.geometry import TrapArray


@pytest.fixture
def line_traps():
    return TrapArray(["t1", "t2", "t3", "t4"], [[0, 0], [100, 0], [300, 0], [400, 0]])


TOY = [
    ("a", "t1", 1, "1"), ("b", "t2", 2, "1"),
    ("a", "t1", 1, "2"), ("c", "t3", 1, "2"), ("d", "t2", 3, "2"),
    ("e", "t4", 2, "3"),
]


def test_single_record(line_traps):
    d = ingest_encounters([("u1", "t1", 1, "1")], line_traps)
    assert d.sessions[0].y.sum() == 1
    assert d.sessions[0].y[0, 0, 0] == 1


def test_duplicate_records_collapse(line_traps):
    one = ingest_encounters([("u1", "t1", 1, "1")], line_traps)
    two = ingest_encounters([("u1", "t1", 1, "1")] * 2, line_traps)
    np.testing.assert_array_equal(one.sessions[0].y, two.sessions[0].y)


def test_toy_counts(line_traps):
    d = ingest_encounters(TOY, line_traps)
    assert d.counts() == [2, 3, 1]
    assert d.n_occasions == 3
    assert summarize(d).n == [2, 3, 1]


def test_permutation_invariance(line_traps):
    rows = TOY * 2
    random.Random(4).shuffle(rows)
    a = ingest_encounters(TOY, line_traps)
    b = ingest_encounters(rows, line_traps)
    for x, y in zip(a.sessions, b.sessions):
        assert x.individual_ids == y.individual_ids
        np.testing.assert_array_equal(x.y, y.y)


def test_total_individuals_equals_distinct_pairs(line_traps):
    d = ingest_encounters(TOY, line_traps)
    assert sum(d.counts()) == len({(u, s) for u, _, _, s in TOY})


def test_unknown_trap_and_empty(line_traps):
    with pytest.raises(ValueError, match="tX, tY"):
        ingest_encounters([("u", "tX", 1, "1"), ("v", "tY", 1, "1")], line_traps)
    with pytest.raises(ValueError):
        ingest_encounters([], line_traps)


def test_bad_occasion_and_sessions(line_traps):
    with pytest.raises(ValueError, match="occasions"):
        ingest_encounters([("u", "t1", 5, "1")], line_traps, n_occasions=3)
    with pytest.raises(ValueError, match="contiguous"):
        ingest_encounters([("u", "t1", 1, "1"), ("v", "t1", 1, "3")], line_traps)


def test_empty_session_reported(line_traps):
    d = ingest_encounters([("u", "t1", 1, "1")], line_traps, sessions=["1", "2"])
    assert summarize(d).n == [1, 0]


def test_three_sessions_three_counts(line_traps):
    assert len(summarize(ingest_encounters(TOY, line_traps)).n) == 3


def test_mmdm_two_traps(line_traps):
    d = ingest_encounters([("u", "t1", 1, "1"), ("u", "t2", 2, "1")], line_traps)
    assert mmdm(d) == pytest.approx(100.0)


def test_mmdm_excludes_zero_moves(line_traps):
    rows = [("z", "t1", 1, "1"), ("z", "t1", 2, "1"),       # max move 0
            ("a", "t1", 1, "1"), ("a", "t2", 1, "1"),       # 100
            ("b", "t1", 1, "1"), ("b", "t2", 2, "1"), ("b", "t3", 3, "1")]  # 300
    assert mmdm(ingest_encounters(rows, line_traps)) == pytest.approx(200.0)


def test_mmdm_undefined_flagged(line_traps):
    d = ingest_encounters([("u", "t1", 1, "1"), ("u", "t1", 2, "1")], line_traps)
    s = summarize(d)
    assert math.isnan(s.mmdm_m) and not s.mmdm_defined
    assert s.to_dict()["mmdm_m"] is None


def test_mmdm_within_session(line_traps):
    # same user seen at t1 in session 1 and t4 in session 2 never moved within a session
    d = ingest_encounters([("u", "t1", 1, "1"), ("u", "t4", 1, "2")], line_traps)
    assert not summarize(d).mmdm_defined


def test_session_block_validation():
    with pytest.raises(ValueError):
        SessionBlock("1", np.zeros((1, 2, 2)), ["a"])
    with pytest.raises(ValueError):
        SessionBlock("1", np.full((1, 2, 2), 2), ["a"])


def test_csv_roundtrip(tmp_path, line_traps):
    d = ingest_encounters(TOY, line_traps)
    path = tmp_path / "enc.csv"
    write_encounter_csv(d, path, "# provenance: {}\n")
    back = read_encounter_csv(path, line_traps)
    for x, y in zip(d.sessions, back.sessions):
        np.testing.assert_array_equal(x.y, y.y)


def test_trap_detection_counts(line_traps):
    s = summarize(ingest_encounters(TOY, line_traps))
    assert s.total_detections == 6
    assert s.trap_detections.tolist() == [2, 2, 1, 1]


def test_encounterdata_shape_check(line_traps):
    with pytest.raises(ValueError):
        EncounterData([SessionBlock("1", np.ones((1, 3, 2)), ["a"])], line_traps, 2)
