import json

import pytest
from hypothesis import given, strategies as st

from expertfind.ingest import (ParseReport, RawPost, clean, load_split, parse_posts, parse_tags,
                               parse_timestamp, save_split, temporal_split)

from conftest import make_dataset


def _write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))


def test_parse_jsonl_counts(tmp_path):
    rows = [
        {"id": 1, "post_kind": "question", "owner_user_id": 5, "creation_ts": 10, "title": "t",
         "body": "b", "tags": ["A", "b"], "accepted_answer_id": 3, "extra": "ignored"},
        {"id": 2, "post_kind": "question", "owner_user_id": 6, "creation_ts": 11, "tags": "<x>"},
        {"id": 3, "post_kind": "answer", "owner_user_id": 7, "creation_ts": 12, "parent_id": 1},
        {"id": 4, "post_kind": "answer", "owner_user_id": 8, "creation_ts": 13, "parent_id": 1},
        {"id": 5, "post_kind": "answer", "owner_user_id": 9, "creation_ts": "2020-01-01T00:00:00Z",
         "parent_id": 2},
    ]
    p = tmp_path / "posts.jsonl"
    _write_jsonl(p, rows)
    posts = parse_posts(p)
    assert len(posts) == 5
    assert posts[0].tags == ("a", "b")
    assert posts[4].creation_ts == 1577836800.0


def test_parse_missing_id_is_skipped(tmp_path):
    p = tmp_path / "posts.jsonl"
    _write_jsonl(p, [{"post_kind": "answer", "owner_user_id": 1, "creation_ts": 1, "parent_id": 2},
                     {"id": 9, "post_kind": "answer", "owner_user_id": 1, "creation_ts": 1,
                      "parent_id": 2}])
    rep = ParseReport()
    posts = parse_posts(p, report=rep)
    assert len(posts) == 1
    assert rep.skipped == 1


def test_parse_unreadable_file_is_fatal(tmp_path):
    with pytest.raises(OSError):
        parse_posts(tmp_path / "missing.jsonl")
    with pytest.raises(OSError):
        parse_posts(tmp_path / "missing.xml", format="xml_dump")


def test_parse_xml_dump(tmp_path):
    p = tmp_path / "Posts.xml"
    p.write_text(
        '<?xml version="1.0" encoding="utf-8"?>\n<posts>\n'
        '  <row Id="1" PostTypeId="1" AcceptedAnswerId="2" CreationDate="2020-01-01T00:00:00.000"'
        ' OwnerUserId="10" Title="Hi" Body="&lt;p&gt;x&lt;/p&gt;" Tags="&lt;Python&gt;&lt;Flask&gt;" />\n'
        '  <row Id="2" PostTypeId="2" ParentId="1" CreationDate="2020-01-01T01:00:00.000"'
        ' OwnerUserId="11" Body="y" />\n'
        '  <row Id="3" PostTypeId="5" CreationDate="2020-01-01T01:00:00.000" Body="wiki" />\n'
        '</posts>\n')
    rep = ParseReport()
    posts = parse_posts(p, format="xml_dump", report=rep)
    assert [x.post_kind for x in posts] == ["question", "answer"]
    assert posts[0].tags == ("python", "flask")
    assert rep.ignored == 1


def test_parse_tags_forms():
    assert parse_tags("<Python><Flask>") == ("python", "flask")
    assert parse_tags("|a| B |") == ("a", "b")
    assert parse_tags([" X ", "x", "y"]) == ("x", "y")
    assert parse_tags(None) == ()


def test_parse_timestamp():
    assert parse_timestamp(5) == 5.0
    assert parse_timestamp("1970-01-01T00:01:00") == 60.0
    with pytest.raises(ValueError):
        parse_timestamp("")


def test_clean_drops_self_answered():
    ds = make_dataset([(1, 7, 0, ["a"], [(2, 7)], 2), (3, 7, 1, ["a"], [(4, 8)], 4)])
    assert set(ds.questions) == {3}
    assert set(ds.answers) == {4}


def test_clean_empty():
    ds = clean([])
    assert not ds.questions and not ds.answers and not ds.users


def test_clean_filters():
    raw = [
        RawPost(1, "question", 1, 0.0, "t", "", ("a",), accepted_answer_id=10),
        RawPost(2, "question", 1, 1.0, "t", "", ("a",), accepted_answer_id=None),
        RawPost(3, "question", 1, 2.0, "t", "", ("a",), accepted_answer_id=11),
        RawPost(4, "question", 1, 3.0, "t", "", ("a",), accepted_answer_id=99),  # missing answer
        RawPost(10, "answer", 2, 1.0, None, "", parent_id=1),
        RawPost(11, "answer", 3, 3.0, None, "", parent_id=3),
        RawPost(12, "answer", 4, 3.0, None, "", parent_id=2),  # parent dropped
        RawPost(None, "answer", 4, 3.0, None, "", parent_id=1),
    ]
    from expertfind.ingest import CleanReport
    rep = CleanReport()
    ds = clean(raw, report=rep)
    assert set(ds.questions) == {1, 3}
    assert set(ds.answers) == {10, 11}
    assert rep.dropped["accepted_answer_missing"] == 1
    assert rep.dropped["orphan_answer"] == 1
    assert rep.dropped["missing_id_or_owner"] == 1
    assert ds.users[2].accepted == 1 and ds.users[2].answers == 1


def _random_items(draw_ids):
    items = []
    for k, (asker, answerers) in enumerate(draw_ids):
        qid = 1000 * (k + 1)
        ans = [(qid + j + 1, u) for j, u in enumerate(answerers)]
        items.append((qid, asker, k % 4, ["t%d" % (k % 3)], ans, ans[0][0]))
    return items


corpora = st.lists(st.tuples(st.integers(1, 6), st.lists(st.integers(1, 6), min_size=1, max_size=3)),
                   min_size=0, max_size=15)


@given(corpora)
def test_clean_idempotent_and_consistent(spec):
    ds = make_dataset(_random_items(spec))
    again = clean(ds.to_raw(), ds.reputation())
    assert again == ds
    for a in ds.answers.values():
        assert a.parent_id in ds.questions
    for qid, q in ds.questions.items():
        assert ds.best_answerer(qid) != q.owner_user_id
        assert ds.best_answerer(qid) in ds.users


@given(corpora, st.floats(0.05, 0.95))
def test_split_partition(spec, ratio):
    ds = make_dataset(_random_items(spec))
    sp = temporal_split(ds, ratio)
    assert set(sp.train.questions) | set(sp.test.questions) == set(ds.questions)
    assert not set(sp.train.questions) & set(sp.test.questions)
    if sp.train.questions and sp.test.questions:
        key = lambda q: (q.creation_ts, q.id)
        assert max(map(key, sp.train.questions.values())) < min(map(key, sp.test.questions.values()))
    assert abs(len(sp.train.questions) - ratio * len(ds.questions)) <= 1


def test_split_examples():
    ds = make_dataset([(q, 1, q, ["a"], [(100 + q, 2)], 100 + q) for q in range(1, 11)])
    sp = temporal_split(ds, 0.8)
    assert len(sp.train.questions) == 8 and len(sp.test.questions) == 2
    one = make_dataset([(1, 1, 0, ["a"], [(2, 2)], 2)])
    sp1 = temporal_split(one, 0.8)
    assert len(sp1.train.questions) == 1 and len(sp1.test.questions) == 0
    with pytest.raises(ValueError):
        temporal_split(ds, 1.0)


def test_split_recomputes_user_stats():
    ds = make_dataset([(1, 1, 0, ["a"], [(11, 2)], 11), (2, 1, 5, ["a"], [(12, 2), (13, 3)], 12)])
    sp = temporal_split(ds, 0.5)
    assert sp.train.users[2].answers == 1
    assert sp.test.users[2].answers == 1 and sp.test.users[3].answers == 1


def test_split_roundtrip(tmp_path):
    ds = make_dataset([(q, 1, q, ["a", "b"], [(100 + q, 2)], 100 + q) for q in range(1, 6)],
                      reputation={2: 50})
    sp = temporal_split(ds, 0.6)
    save_split(sp, tmp_path)
    back = load_split(tmp_path)
    assert back == sp
