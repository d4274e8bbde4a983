"""BM25 indexes over past questions and the content-based expert ordering."""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from html.parser import HTMLParser
from typing import Iterable, Sequence

import numpy as np
from sklearn.feature_extraction.text import ENGLISH_STOP_WORDS

from .ingest import Dataset, Question
from .mlg import Layer
from .store import read_arrays, write_arrays

K1 = 1.2
B = 0.75
INDEX_FORMAT_VERSION = 1

_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)


class _TextOnly(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.parts: list[str] = []

    def handle_data(self, data):
        self.parts.append(data)

    def handle_starttag(self, tag, attrs):
        self.parts.append(" ")

    def handle_endtag(self, tag):
        self.parts.append(" ")


def strip_html(text: str) -> str:
    """Drop markup, keep all character data (code blocks included)."""
    p = _TextOnly()
    p.feed(text)
    p.close()
    return "".join(p.parts)


def tokenize(text: str, stopwords: frozenset | None = ENGLISH_STOP_WORDS) -> list[str]:
    toks = _TOKEN.findall(strip_html(text).lower())
    if stopwords:
        toks = [t for t in toks if t not in stopwords]
    return toks


def text_tokens(q: Question, stopwords=ENGLISH_STOP_WORDS) -> list[str]:
    return tokenize(f"{q.title} {q.body}", stopwords)


def tag_tokens(q: Question) -> list[str]:
    return list(q.tags)


@dataclass
class RankedQuestions:
    qids: np.ndarray
    scores: np.ndarray
    experts: np.ndarray

    def __len__(self) -> int:
        return int(self.qids.size)

    def __iter__(self):
        return iter(zip(self.qids.tolist(), self.scores.tolist(), self.experts.tolist()))

    @classmethod
    def empty(cls) -> "RankedQuestions":
        return cls(np.zeros(0, np.int64), np.zeros(0), np.zeros(0, np.int64))


class InvertedIndex:
    """Postings are kept CSR-style: ``post_ptr[t]:post_ptr[t+1]`` slices
    ``post_doc`` (document positions, ascending question id) and ``post_tf``."""

    def __init__(self, kind, terms, df, post_ptr, post_doc, post_tf, doc_ids, doc_ts,
                 doc_len, doc_expert, k1=K1, b=B):
        self.kind = kind
        self.terms = list(terms)
        self.term_id = {t: i for i, t in enumerate(self.terms)}
        self.df = np.asarray(df, dtype=np.int64)
        self.post_ptr = np.asarray(post_ptr, dtype=np.int64)
        self.post_doc = np.asarray(post_doc, dtype=np.int64)
        self.post_tf = np.asarray(post_tf, dtype=np.float64)
        self.doc_ids = np.asarray(doc_ids, dtype=np.int64)
        self.doc_ts = np.asarray(doc_ts, dtype=np.float64)
        self.doc_len = np.asarray(doc_len, dtype=np.float64)
        self.doc_expert = np.asarray(doc_expert, dtype=np.int64)
        self.avg_doc_length = float(self.doc_len.mean()) if self.doc_len.size else 0.0
        self.k1 = k1
        self.b = b

    @property
    def n_docs(self) -> int:
        return int(self.doc_ids.size)

    @property
    def vocabulary(self) -> dict[str, int]:
        return dict(zip(self.terms, self.df.tolist()))

    def postings(self, term: str) -> list[tuple[int, int]]:
        t = self.term_id.get(term)
        if t is None:
            return []
        sl = slice(self.post_ptr[t], self.post_ptr[t + 1])
        return list(zip(self.doc_ids[self.post_doc[sl]].tolist(), self.post_tf[sl].astype(int).tolist()))

    @classmethod
    def from_documents(cls, kind: str, docs: Sequence[tuple[int, float, int, list[str]]],
                       k1=K1, b=B) -> "InvertedIndex":
        """``docs`` holds (question id, timestamp, expert id, tokens)."""
        docs = sorted(docs, key=lambda d: d[0])
        per_term: dict[str, list[tuple[int, int]]] = {}
        lengths = []
        for pos, (_, _, _, toks) in enumerate(docs):
            lengths.append(len(toks))
            for term, tf in Counter(toks).items():
                per_term.setdefault(term, []).append((pos, tf))
        terms = sorted(per_term)
        ptr = [0]
        pdoc, ptf = [], []
        for t in terms:
            plist = per_term[t]
            pdoc.extend(p for p, _ in plist)
            ptf.extend(f for _, f in plist)
            ptr.append(len(pdoc))
        df = np.diff(ptr)
        return cls(kind, terms, df, ptr, pdoc, ptf, [d[0] for d in docs], [d[1] for d in docs],
                   lengths, [d[2] for d in docs], k1, b)

    def idf(self, term: str) -> float:
        t = self.term_id.get(term)
        if t is None:
            return 0.0
        n, df = self.n_docs, self.df[t]
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))

    def score_all(self, query_tokens: Iterable[str]) -> np.ndarray:
        """BM25 score of every document; each distinct query term counts once."""
        scores = np.zeros(self.n_docs)
        if not self.n_docs:
            return scores
        norm = self.k1 * (1.0 - self.b + self.b * self.doc_len / self.avg_doc_length) \
            if self.avg_doc_length > 0 else np.full(self.n_docs, self.k1)
        for term in sorted(set(query_tokens)):
            t = self.term_id.get(term)
            if t is None:
                continue
            sl = slice(self.post_ptr[t], self.post_ptr[t + 1])
            docs, tf = self.post_doc[sl], self.post_tf[sl]
            scores[docs] += self.idf(term) * tf * (self.k1 + 1.0) / (tf + norm[docs])
        return scores

    # -- persistence ------------------------------------------------------
    def save(self, path, meta: dict | None = None) -> None:
        arrays = {"df": self.df, "post_ptr": self.post_ptr, "post_doc": self.post_doc,
                  "post_tf": self.post_tf, "doc_ids": self.doc_ids, "doc_ts": self.doc_ts,
                  "doc_len": self.doc_len, "doc_expert": self.doc_expert}
        info = {"format": "expertfind-index", "version": INDEX_FORMAT_VERSION, "kind": self.kind,
                "k1": self.k1, "b": self.b, "terms": self.terms, **(meta or {})}
        write_arrays(path, arrays, info)

    @classmethod
    def load(cls, path) -> "InvertedIndex":
        a, meta = read_arrays(path)
        if meta.get("format") != "expertfind-index" or meta.get("version") != INDEX_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported index header {meta.get('format')!r} "
                             f"v{meta.get('version')}")
        return cls(meta["kind"], meta["terms"], a["df"], a["post_ptr"], a["post_doc"], a["post_tf"],
                   a["doc_ids"], a["doc_ts"], a["doc_len"], a["doc_expert"], meta["k1"], meta["b"])


def build_indexes(train: Dataset, stopwords=ENGLISH_STOP_WORDS) -> tuple[InvertedIndex, InvertedIndex]:
    tag_docs, text_docs = [], []
    for qid in sorted(train.questions):
        q = train.questions[qid]
        expert = train.best_answerer(qid)
        tag_docs.append((qid, q.creation_ts, expert, tag_tokens(q)))
        text_docs.append((qid, q.creation_ts, expert, text_tokens(q, stopwords)))
    return (InvertedIndex.from_documents("tag", tag_docs),
            InvertedIndex.from_documents("text", text_docs))


def bm25_query(index: InvertedIndex, query_tokens: Iterable[str], top_n: int = 1000,
               exclude: Iterable[int] = ()) -> RankedQuestions:
    """Top ``top_n`` questions with positive score; ties go to the newer question."""
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    scores = index.score_all(query_tokens)
    hit = scores > 0
    ex = np.asarray(list(exclude), dtype=np.int64)
    if ex.size:
        hit &= ~np.isin(index.doc_ids, ex)
    docs = np.flatnonzero(hit)
    if docs.size == 0:
        return RankedQuestions.empty()
    order = np.lexsort((-index.doc_ids[docs], -index.doc_ts[docs], -scores[docs]))[:top_n]
    docs = docs[order]
    return RankedQuestions(index.doc_ids[docs], scores[docs], index.doc_expert[docs])


def interleave(first: Sequence, second: Sequence) -> list:
    out = []
    for i in range(max(len(first), len(second))):
        if i < len(first):
            out.append(first[i])
        if i < len(second):
            out.append(second[i])
    return out


def content_order(tag_results: RankedQuestions, text_results: RankedQuestions, layer: Layer | None,
                  tag_first: bool = True) -> list[int]:
    """Alternate the two result lists, map questions to their accepted
    answerer, keep the layer's experts, drop repeats."""
    a, b = tag_results.experts.tolist(), text_results.experts.tolist()
    merged = interleave(a, b) if tag_first else interleave(b, a)
    seen: set[int] = set()
    out = []
    for u in merged:
        if u in seen:
            continue
        if layer is not None and (u not in layer or not layer.is_expert[layer.pos(u)]):
            continue
        seen.add(u)
        out.append(u)
    return out
