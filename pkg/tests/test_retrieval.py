import numpy as np
import pytest
from hypothesis import given, strategies as st

from expertfind.ingest import Question
from expertfind.retrieval import (InvertedIndex, RankedQuestions, bm25_query, build_indexes,
                                  content_order, interleave, strip_html, text_tokens, tokenize)

from conftest import make_dataset, make_layer

TOY = {
    1: "rust lifetime borrow checker",
    2: "rust rust cargo",
    3: "python lifetime object lifetime gc",
    4: "java garbage collector",
    5: "rust async lifetime tokio runtime rust",
}
# BM25 (k1=1.2, b=0.75, idf = ln(1 + (N - df + .5) / (df + .5))) for "rust lifetime",
# worked by hand: N=5, avgdl=4.2, df(rust)=df(lifetime)=3, idf=ln(12/7)
TOY_SCORES = {1: 1.0994100809646865, 2: 0.8058782632313963, 3: 0.7034361111257105,
              5: 1.119991804322316}


def _toy_index():
    return InvertedIndex.from_documents("text", [(q, float(q), 100 + q, t.split())
                                                 for q, t in TOY.items()])


def test_bm25_hand_table():
    res = bm25_query(_toy_index(), ["rust", "lifetime"], top_n=10)
    assert res.qids.tolist() == [5, 1, 2, 3]
    for qid, score, expert in res:
        assert score == pytest.approx(TOY_SCORES[qid], abs=1e-9)
        assert expert == 100 + qid


def test_bm25_edge_cases():
    idx = InvertedIndex.from_documents("tag", [(1, 0.0, 9, ["solo"])])
    res = bm25_query(idx, ["solo"], 5)
    assert res.qids.tolist() == [1] and res.scores[0] > 0
    assert len(bm25_query(_toy_index(), ["haskell"], 5)) == 0
    assert len(bm25_query(_toy_index(), ["rust"], 2)) == 2
    with pytest.raises(ValueError):
        bm25_query(idx, ["solo"], 0)


def test_bm25_exclude_and_ties_newest_first():
    idx = InvertedIndex.from_documents("tag", [(1, 10.0, 7, ["a"]), (2, 20.0, 8, ["a"]),
                                               (3, 20.0, 9, ["a"])])
    assert bm25_query(idx, ["a"], 5).qids.tolist() == [3, 2, 1]
    assert bm25_query(idx, ["a"], 5, exclude=[3]).qids.tolist() == [2, 1]


@given(st.lists(st.sampled_from(["rust", "lifetime", "cargo", "gc"]), min_size=1, max_size=4))
def test_unmatched_terms_do_not_change_scores(q):
    idx = _toy_index()
    base = idx.score_all(q)
    assert np.array_equal(base, idx.score_all(q + ["zzz", "qqq"]))
    assert not idx.score_all(["zzz"]).any()


def test_index_structure():
    idx = _toy_index()
    assert idx.vocabulary["rust"] == 3 and idx.vocabulary["cargo"] == 1
    assert idx.postings("rust") == [(1, 1), (2, 2), (5, 2)]
    assert idx.avg_doc_length == pytest.approx(np.mean([len(t.split()) for t in TOY.values()]))


def test_tokenizer():
    q = Question(1, 1, 0.0, "Fix NullPointerException in Java",
                 "<p>Call <code>foo_bar()</code> &amp; fail</p>", ("java",), 2)
    toks = text_tokens(q)
    assert "nullpointerexception" in toks and "java" in toks
    assert "foo" in toks and "bar" in toks and "in" not in toks
    assert strip_html("<b>x</b> < y") .split() == ["x", "<", "y"]
    assert tokenize("The cat", stopwords=None) == ["the", "cat"]


def test_build_indexes():
    ds = make_dataset([(1, 1, 0, ["python", "pandas"], [(11, 5)], 11, "Merge frames", "<p>join</p>"),
                       (2, 1, 1, ["rust"], [(12, 6)], 12, "Borrow", "")])
    tag, text = build_indexes(ds)
    assert tag.doc_len[tag.doc_ids.tolist().index(1)] == 2
    assert tag.vocabulary["python"] == 1
    assert text.doc_expert.tolist() == [5, 6]


def test_interleave_and_content_order():
    assert interleave([1, 2, 3], ["a"]) == [1, "a", 2, 3]
    layer = make_layer(4, [], experts={0, 1, 2}, nodes=[0, 1, 2, 3])

    def rq(experts):
        n = len(experts)
        return RankedQuestions(np.arange(n), np.ones(n), np.asarray(experts, dtype=np.int64))

    A, B, C = 0, 1, 2
    assert content_order(rq([A, B]), rq([C]), layer) == [A, C, B]
    assert content_order(rq([A, B]), rq([B, C]), layer) == [A, B, C]
    assert content_order(rq([]), rq([]), layer) == []
    # non-experts (3) and users outside the layer (42) are skipped
    assert content_order(rq([3, 42, A]), rq([C]), layer) == [C, A]
    assert content_order(rq([A]), rq([C]), layer, tag_first=False) == [C, A]


@given(st.lists(st.integers(0, 6), max_size=12), st.lists(st.integers(0, 6), max_size=12))
def test_content_order_properties(a, b):
    layer = make_layer(5, [], experts={0, 2, 4}, nodes=[0, 1, 2, 3, 4])
    mk = lambda e: RankedQuestions(np.arange(len(e)), np.ones(len(e)), np.asarray(e, np.int64))
    out = content_order(mk(a), mk(b), layer)
    assert len(out) == len(set(out))
    assert set(out) <= {0, 2, 4}
    merged = interleave(a, b)
    # relative order follows first occurrence in the merged stream
    assert out == sorted(out, key=merged.index)


def test_index_roundtrip(tmp_path):
    idx = _toy_index()
    idx.save(tmp_path / "i.bin", {"config_hash": "x"})
    back = InvertedIndex.load(tmp_path / "i.bin")
    q = ["rust", "lifetime"]
    assert np.array_equal(idx.score_all(q), back.score_all(q))
    assert back.kind == "text" and back.vocabulary == idx.vocabulary
