"""Parsing, cleaning and temporal splitting of community Q&A posts."""
from __future__ import annotations

import json
import logging
import math
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RawPost:
    id: int | None
    post_kind: str
    owner_user_id: int | None
    creation_ts: float
    title: str | None = None
    body: str = ""
    tags: tuple[str, ...] = ()
    accepted_answer_id: int | None = None
    parent_id: int | None = None


@dataclass(frozen=True)
class Question:
    id: int
    owner_user_id: int
    creation_ts: float
    title: str
    body: str
    tags: tuple[str, ...]
    accepted_answer_id: int


@dataclass(frozen=True)
class Answer:
    id: int
    owner_user_id: int
    creation_ts: float
    parent_id: int
    body: str = ""


@dataclass(frozen=True)
class UserStats:
    user_id: int
    answers: int = 0
    accepted: int = 0
    reputation: int = 0


@dataclass
class ParseReport:
    read: int = 0
    skipped: int = 0
    ignored: int = 0
    reasons: Counter = field(default_factory=Counter)

    def skip(self, reason: str) -> None:
        self.skipped += 1
        self.reasons[reason] += 1


@dataclass
class CleanReport:
    dropped: Counter = field(default_factory=Counter)


@dataclass(frozen=True)
class Dataset:
    """Cleaned corpus: every question has its accepted answer in ``answers``."""

    questions: Mapping[int, Question]
    answers: Mapping[int, Answer]
    users: Mapping[int, UserStats]
    tag_universe: frozenset

    def best_answerer(self, qid: int) -> int:
        q = self.questions[qid]
        return self.answers[q.accepted_answer_id].owner_user_id

    def ordered_question_ids(self) -> list[int]:
        return [q.id for q in sorted(self.questions.values(), key=lambda q: (q.creation_ts, q.id))]

    def to_raw(self) -> list[RawPost]:
        posts = [RawPost(q.id, "question", q.owner_user_id, q.creation_ts, q.title, q.body,
                         q.tags, accepted_answer_id=q.accepted_answer_id)
                 for q in self.questions.values()]
        posts += [RawPost(a.id, "answer", a.owner_user_id, a.creation_ts, None, a.body,
                          parent_id=a.parent_id)
                  for a in self.answers.values()]
        return posts

    def reputation(self) -> dict[int, int]:
        return {u.user_id: u.reputation for u in self.users.values() if u.reputation}


@dataclass(frozen=True)
class SplitDataset:
    train: Dataset
    test: Dataset
    split_ts: float


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def parse_tags(value) -> tuple[str, ...]:
    """Normalise tags given as a list, ``<a><b>`` dump form or ``|a|b|`` form."""
    if value is None:
        return ()
    if isinstance(value, str):
        s = value.strip()
        if s.startswith("<"):
            parts = s.replace(">", "<").split("<")
        elif "|" in s:
            parts = s.split("|")
        else:
            parts = s.split()
    else:
        parts = list(value)
    out: list[str] = []
    for p in parts:
        t = str(p).strip().lower()
        if t and t not in out:
            out.append(t)
    return tuple(out)


def parse_timestamp(value) -> float:
    """Epoch seconds (UTC) from a number or an ISO-8601 string."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, str) or not value:
        raise ValueError(f"bad timestamp {value!r}")
    s = value.strip()
    if s.endswith("Z"):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def _opt_int(value):
    if value is None or value == "":
        return None
    return int(value)


def _post_from_record(rec: Mapping) -> RawPost:
    if rec.get("id") is None:
        raise KeyError("id")
    kind = str(rec.get("post_kind", "")).lower()
    if kind not in ("question", "answer"):
        raise ValueError(f"unknown post_kind {kind!r}")
    tags = parse_tags(rec.get("tags")) if kind == "question" else ()
    return RawPost(
        id=int(rec["id"]),
        post_kind=kind,
        owner_user_id=_opt_int(rec.get("owner_user_id")),
        creation_ts=parse_timestamp(rec.get("creation_ts")),
        title=rec.get("title"),
        body=rec.get("body") or "",
        tags=tags,
        accepted_answer_id=_opt_int(rec.get("accepted_answer_id")) if kind == "question" else None,
        parent_id=_opt_int(rec.get("parent_id")) if kind == "answer" else None,
    )


_XML_KINDS = {"1": "question", "2": "answer"}


def _xml_record(attrib: Mapping[str, str]) -> dict | None:
    kind = _XML_KINDS.get(attrib.get("PostTypeId", ""))
    if kind is None:
        return None
    return {
        "id": attrib.get("Id"),
        "post_kind": kind,
        "owner_user_id": attrib.get("OwnerUserId"),
        "creation_ts": attrib.get("CreationDate"),
        "title": attrib.get("Title"),
        "body": attrib.get("Body", ""),
        "tags": attrib.get("Tags"),
        "accepted_answer_id": attrib.get("AcceptedAnswerId"),
        "parent_id": attrib.get("ParentId"),
    }


def parse_posts(path, format: str = "jsonl", report: ParseReport | None = None) -> list[RawPost]:
    """Read posts from a JSON-lines file or a public ``Posts.xml`` dump.

    Malformed records are skipped and counted in ``report``; an unreadable
    file raises ``OSError``.
    """
    report = report if report is not None else ParseReport()
    path = Path(path)
    posts: list[RawPost] = []
    if format == "jsonl":
        with path.open("r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                report.read += 1
                try:
                    posts.append(_post_from_record(json.loads(line)))
                except (KeyError, ValueError, TypeError) as exc:
                    report.skip(type(exc).__name__)
    elif format == "xml_dump":
        if not path.is_file():
            raise FileNotFoundError(path)
        for _, elem in ET.iterparse(path, events=("end",)):
            if elem.tag != "row":
                continue
            report.read += 1
            rec = _xml_record(elem.attrib)
            elem.clear()
            if rec is None:
                report.ignored += 1
                continue
            try:
                posts.append(_post_from_record(rec))
            except (KeyError, ValueError, TypeError) as exc:
                report.skip(type(exc).__name__)
    else:
        raise ValueError(f"unknown format {format!r}")
    if report.skipped:
        logger.info("parsed %d posts from %s, skipped %d", len(posts), path, report.skipped)
    return posts


def read_reputation(path) -> dict[int, int]:
    out: dict[int, int] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out[int(rec["id"])] = int(rec.get("reputation") or 0)
    return out


# ---------------------------------------------------------------------------
# cleaning
# ---------------------------------------------------------------------------

def _user_stats(questions: Iterable[Question], answers: Mapping[int, Answer],
                reputation: Mapping[int, int]) -> dict[int, UserStats]:
    n_ans: Counter = Counter()
    n_acc: Counter = Counter()
    askers = set()
    for a in answers.values():
        n_ans[a.owner_user_id] += 1
    for q in questions:
        askers.add(q.owner_user_id)
        n_acc[answers[q.accepted_answer_id].owner_user_id] += 1
    ids = sorted(askers | set(n_ans))
    return {u: UserStats(u, n_ans[u], n_acc[u], int(reputation.get(u, 0))) for u in ids}


def _build(questions: dict[int, Question], answers: dict[int, Answer],
           reputation: Mapping[int, int]) -> Dataset:
    tags = frozenset(t for q in questions.values() for t in q.tags)
    return Dataset(questions, answers, _user_stats(questions.values(), answers, reputation), tags)


def clean(raw: Iterable[RawPost], reputation: Mapping[int, int] | None = None,
          report: CleanReport | None = None) -> Dataset:
    report = report if report is not None else CleanReport()
    reputation = reputation or {}
    seen: set[int] = set()
    questions: dict[int, RawPost] = {}
    answers: dict[int, RawPost] = {}
    for p in raw:
        if p.id is None or p.owner_user_id is None:
            report.dropped["missing_id_or_owner"] += 1
            continue
        if p.id in seen:
            report.dropped["duplicate_id"] += 1
            continue
        seen.add(p.id)
        if p.post_kind == "question":
            if p.accepted_answer_id is None:
                report.dropped["no_accepted_answer"] += 1
            elif not p.tags:
                report.dropped["no_tags"] += 1
            else:
                questions[p.id] = p
        elif p.parent_id is None:
            report.dropped["answer_without_parent"] += 1
        else:
            answers[p.id] = p

    kept_q: dict[int, Question] = {}
    for qid in sorted(questions):
        p = questions[qid]
        acc = answers.get(p.accepted_answer_id)
        if acc is None or acc.parent_id != qid:
            report.dropped["accepted_answer_missing"] += 1
            continue
        if acc.owner_user_id == p.owner_user_id:
            report.dropped["self_answered"] += 1
            continue
        kept_q[qid] = Question(qid, p.owner_user_id, p.creation_ts, p.title or "", p.body,
                               p.tags, p.accepted_answer_id)

    kept_a: dict[int, Answer] = {}
    for aid in sorted(answers):
        p = answers[aid]
        if p.parent_id in kept_q:
            kept_a[aid] = Answer(aid, p.owner_user_id, p.creation_ts, p.parent_id, p.body)
        else:
            report.dropped["orphan_answer"] += 1
    if report.dropped:
        logger.info("clean dropped %s", dict(report.dropped))
    return _build(kept_q, kept_a, reputation)


def subset(ds: Dataset, question_ids: Iterable[int]) -> Dataset:
    """Restrict to ``question_ids``; answers and user stats follow."""
    qids = sorted(set(question_ids))
    questions = {q: ds.questions[q] for q in qids}
    answers = {a.id: a for a in sorted(ds.answers.values(), key=lambda a: a.id)
               if a.parent_id in questions}
    return _build(questions, answers, ds.reputation())


def temporal_split(ds: Dataset, ratio: float) -> SplitDataset:
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must lie in (0, 1), got {ratio}")
    order = ds.ordered_question_ids()
    n_train = math.ceil(ratio * len(order))
    train, test = order[:n_train], order[n_train:]
    if test:
        split_ts = ds.questions[test[0]].creation_ts
    elif train:
        split_ts = ds.questions[train[-1]].creation_ts
    else:
        split_ts = 0.0
    return SplitDataset(subset(ds, train), subset(ds, test), split_ts)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _write_jsonl(path: Path, rows: Iterable[dict]) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _read_jsonl(path: Path) -> list[dict]:
    with path.open("r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def save_dataset(ds: Dataset, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    qrows = []
    for qid in sorted(ds.questions):
        row = asdict(ds.questions[qid])
        row["tags"] = list(row["tags"])
        qrows.append(row)
    _write_jsonl(d / "questions.jsonl", qrows)
    _write_jsonl(d / "answers.jsonl", (asdict(ds.answers[a]) for a in sorted(ds.answers)))
    _write_jsonl(d / "users.jsonl", (asdict(ds.users[u]) for u in sorted(ds.users)))


def load_dataset(directory) -> Dataset:
    d = Path(directory)
    questions = {r["id"]: Question(**{**r, "tags": tuple(r["tags"])})
                 for r in _read_jsonl(d / "questions.jsonl")}
    answers = {r["id"]: Answer(**r) for r in _read_jsonl(d / "answers.jsonl")}
    users = {r["user_id"]: UserStats(**r) for r in _read_jsonl(d / "users.jsonl")}
    tags = frozenset(t for q in questions.values() for t in q.tags)
    return Dataset(questions, answers, users, tags)


def save_split(split: SplitDataset, directory, extra: Mapping | None = None) -> None:
    d = Path(directory)
    save_dataset(split.train, d / "train")
    save_dataset(split.test, d / "test")
    manifest = {
        "split_ts": split.split_ts,
        "train_questions": len(split.train.questions),
        "test_questions": len(split.test.questions),
        "train_answers": len(split.train.answers),
        "test_answers": len(split.test.answers),
        **(extra or {}),
    }
    (d / "split.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_split(directory) -> SplitDataset:
    d = Path(directory)
    manifest = json.loads((d / "split.json").read_text())
    return SplitDataset(load_dataset(d / "train"), load_dataset(d / "test"), manifest["split_ts"])
