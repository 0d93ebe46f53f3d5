import json
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from crs_learn.data import (
    BENIGN,
    SQLI,
    LabeledSample,
    SplitSpec,
    balanced_select,
    dataset_digest,
    export_jsonl,
    labels,
    load_corpus,
    parse_label,
    split,
)
from crs_learn.errors import InsufficientSamplesError, MalformedRecordError


def test_lines_format(tmp_path):
    p = tmp_path / "sqli.txt"
    p.write_bytes(b"1' or 1=1\n  padded  \r\n\n")
    got = load_corpus(p, label=1)
    assert [s.payload for s in got] == [b"1' or 1=1", b"  padded  \r", b""]
    assert all(s.label == SQLI for s in got)
    with pytest.raises(ValueError):
        load_corpus(p)


def test_three_line_file(tmp_path):
    p = tmp_path / "x.lines"
    p.write_text("a\nb\nc\n")
    assert len(load_corpus(p, format="lines", label="sqli")) == 3


def test_jsonl_missing_label_names_line(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text('{"payload": "a", "label": 0}\n{"payload": "b"}\n')
    with pytest.raises(MalformedRecordError) as exc:
        load_corpus(p)
    assert exc.value.line == 2
    relaxed = load_corpus(p, strict=False)
    assert len(relaxed) == 1 and relaxed.skipped[0][0] == 2


def test_permissive_skips_every_bad_kind(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text("\n".join([
        '{"payload": "ok", "label": "benign"}',
        "not json",
        '{"payload": 3, "label": 1}',
        '{"payload": "x", "label": 7}',
        '{"payload_b64": "@@", "label": 1}',
        "[1, 2]",
    ]) + "\n")
    got = load_corpus(p, strict=False)
    assert len(got) == 1
    assert [line for line, _ in got.skipped] == [2, 3, 4, 5, 6]


def test_csv_and_json_array(tmp_path):
    c = tmp_path / "d.csv"
    c.write_text('payload,label,source\n"a,b",1,sqlmap\nplain,0,\n')
    got = load_corpus(c)
    assert [(s.payload, s.label, s.source) for s in got] == [
        (b"a,b", 1, "sqlmap"), (b"plain", 0, "other")]
    bad = tmp_path / "bad.csv"
    bad.write_text("text,label\nx,1\n")
    with pytest.raises(MalformedRecordError):
        load_corpus(bad)
    j = tmp_path / "d.json"
    j.write_text(json.dumps([{"payload": "q", "label": 1}, "bare"]))
    assert len(load_corpus(j, label=0)) == 2


def test_duplicates_are_kept(tmp_path):
    p = tmp_path / "d.txt"
    p.write_text("same\nsame\n")
    assert len(load_corpus(p, label=0)) == 2


def test_export_round_trip(tmp_path, corpus):
    extra = [LabeledSample(b"\xff\xfe'", 1, "sqlmap"), LabeledSample(b"", 0)]
    samples = list(corpus) + extra
    export_jsonl(samples, tmp_path / "out.jsonl")
    back = load_corpus(tmp_path / "out.jsonl")
    assert back == samples
    assert dataset_digest(back) == dataset_digest(samples)


def test_sample_validation():
    assert LabeledSample("é", 0).payload == "é".encode()
    with pytest.raises(ValueError):
        LabeledSample(b"x", 2)
    with pytest.raises(ValueError):
        LabeledSample(None, 0)
    with pytest.raises(ValueError):
        parse_label(True)
    assert parse_label("Malicious") == SQLI and parse_label(0) == BENIGN


def test_fixture_corpus_is_balanced(corpus):
    assert len(corpus) == 200
    assert Counter(s.label for s in corpus) == {0: 100, 1: 100}


def test_balanced_select(corpus):
    a = balanced_select(corpus, 30, seed=4)
    assert a == balanced_select(corpus, 30, seed=4)
    assert a != balanced_select(corpus, 30, seed=5)
    assert Counter(labels(a).tolist()) == {0: 30, 1: 30}
    full = balanced_select(corpus, 100, seed=0)
    assert sorted(full, key=repr) == sorted(corpus, key=repr)
    with pytest.raises(InsufficientSamplesError) as exc:
        balanced_select(corpus, 101)
    assert "101" in str(exc.value)


def test_dedup_drops_repeats():
    s = [LabeledSample(b"a", 0), LabeledSample(b"a", 1), LabeledSample(b"b", 1)]
    assert len(balanced_select(s, 1)) == 2
    # after dedup the second b"a" is gone, leaving one sqli sample
    with pytest.raises(InsufficientSamplesError):
        balanced_select(s, 2, dedup=True)
    assert balanced_select(s, 1, dedup=True)[0].payload in (b"a", b"b")


def test_split_examples(corpus):
    train, test = split(corpus, SplitSpec(80, 20, seed=0))
    assert len(train) == 160 and len(test) == 40
    train, test = split(corpus, SplitSpec(100, 0))
    assert test == [] and len(train) == 200
    with pytest.raises(InsufficientSamplesError):
        split(corpus, SplitSpec(90, 20))
    with pytest.raises(ValueError):
        SplitSpec(-1, 3)


def _pool(n0, n1):
    # distinct payloads so the partition can be checked by identity of content
    return [LabeledSample(f"b{i}".encode(), 0) for i in range(n0)] + \
        [LabeledSample(f"s{i}".encode(), 1) for i in range(n1)]


@settings(max_examples=1000, deadline=None)
@given(st.integers(0, 30), st.integers(0, 30), st.integers(0, 10),
       st.integers(0, 2**32 - 1))
def test_split_invariants(n_train, n_test, spare, seed):
    n = n_train + n_test + spare
    pool = _pool(n, n)
    train, test = split(pool, SplitSpec(n_train, n_test, seed))
    assert sum(s.label for s in train) == n_train and len(train) == 2 * n_train
    assert sum(s.label for s in test) == n_test and len(test) == 2 * n_test
    assert not {s.payload for s in train} & {s.payload for s in test}
    assert set(train) | set(test) <= set(pool)
    if spare == 0:
        assert sorted(train + test, key=repr) == sorted(pool, key=repr)
    assert (train, test) == split(pool, SplitSpec(n_train, n_test, seed))
