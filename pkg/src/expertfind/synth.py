"""Planted-expert synthetic Q&A corpus for desk-scale experiments.

Each topic owns a broad "head" tag and several specific tags, each with its
own vocabulary. Planted experts have a Dirichlet topic affinity and, inside
each topic, a Dirichlet preference over its specific tags. Answerers are
drawn by affinity to the question's tags and the accepted answer is an
affinity-weighted lottery among them, sharpened by raising the affinities
to ``accept_sharpness``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

_FILLER = ("how", "do", "i", "the", "a", "to", "in", "is", "error", "when", "using", "with",
           "get", "code", "example", "problem", "working", "not", "value", "want")


@dataclass(frozen=True)
class SyntheticSpec:
    n_users: int = 200
    n_experts: int = 20
    n_tags: int = 60
    n_topics: int = 5
    n_questions: int = 5000
    concentration: float = 0.3
    seed: int = 0
    cross_topic_rate: float = 0.05
    head_tag_rate: float = 0.7
    words_per_tag: int = 6
    casual_answer_prob: float = 0.6
    n_prolific: int = 10
    expert_accept_weight: float = 8.0
    accept_sharpness: float = 3.0
    days: float = 180.0
    start_ts: float = 1593561600.0  # 2020-07-01T00:00:00Z

    def __post_init__(self):
        if self.n_experts > self.n_users:
            raise ValueError("n_experts must not exceed n_users")
        if self.n_topics > self.n_tags:
            raise ValueError("n_topics must not exceed n_tags")
        if self.n_tags < 2 * self.n_topics:
            raise ValueError("need at least a head and one specific tag per topic")
        if self.n_users - self.n_experts < 2:
            raise ValueError("need at least two non-expert users to act as askers")


def _tag_layout(spec: SyntheticSpec):
    heads = [f"topic{t}" for t in range(spec.n_topics)]
    specific: list[list[str]] = [[] for _ in range(spec.n_topics)]
    for j in range(spec.n_tags - spec.n_topics):
        t = j % spec.n_topics
        specific[t].append(f"topic{t}-sub{len(specific[t])}")
    return heads, specific


def generate_synthetic(spec: SyntheticSpec, out_dir) -> dict:
    """Write ``posts.jsonl``, ``users.jsonl`` and ``truth.json`` to ``out_dir``.

    Returns the ground truth. Output is byte-identical for a fixed spec.
    """
    rng = np.random.default_rng(spec.seed)
    heads, specific = _tag_layout(spec)
    vocab = {s: [f"{s.replace('-', '')}w{k}" for k in range(spec.words_per_tag)]
             for subs in specific for s in subs}
    topic_words = {t: [f"topic{t}word{k}" for k in range(spec.words_per_tag)]
                   for t in range(spec.n_topics)}

    experts = list(range(1, spec.n_experts + 1))
    casual = list(range(spec.n_experts + 1, spec.n_users + 1))
    prolific = casual[:min(spec.n_prolific, len(casual))]

    theta = rng.dirichlet(np.full(spec.n_topics, spec.concentration), size=spec.n_experts)
    phi = [[rng.dirichlet(np.full(len(specific[t]), spec.concentration)) for t in range(spec.n_topics)]
           for _ in experts]
    sub_index = {s: (t, j) for t, subs in enumerate(specific) for j, s in enumerate(subs)}

    def affinity(e_idx: int, subs: list[str]) -> float:
        return sum(theta[e_idx, sub_index[s][0]] * phi[e_idx][sub_index[s][0]][sub_index[s][1]]
                   for s in subs)

    posts = []
    accepted_count = {u: 0 for u in range(1, spec.n_users + 1)}
    answer_count = dict(accepted_count)
    next_id = 1
    gap = spec.days * 86400.0 / spec.n_questions
    for i in range(spec.n_questions):
        ts = spec.start_ts + i * gap + float(rng.uniform(0, gap))
        t = int(rng.integers(spec.n_topics))
        n_sub = 1 + int(rng.random() < 0.4)
        subs = list(rng.choice(specific[t], size=min(n_sub, len(specific[t])), replace=False))
        if rng.random() < spec.cross_topic_rate and spec.n_topics > 1:
            other = int((t + 1 + rng.integers(spec.n_topics - 1)) % spec.n_topics)
            subs.append(str(rng.choice(specific[other])))
        tags = ([heads[t]] if rng.random() < spec.head_tag_rate else []) + [str(s) for s in subs]

        words = [str(w) for s in subs for w in rng.choice(vocab[s], size=3)]
        words += [str(w) for w in rng.choice(topic_words[t], size=2)]
        words += [str(w) for w in rng.choice(_FILLER, size=4)]
        rng.shuffle(words)
        title = " ".join(words[:5])
        body = "<p>" + " ".join(words[5:]) + "</p>"

        aff = np.array([affinity(k, subs) for k in range(spec.n_experts)]) + 1e-3
        n_exp = min(spec.n_experts, 1 + int(rng.integers(3)))
        chosen = list(rng.choice(spec.n_experts, size=n_exp, replace=False, p=aff / aff.sum()))
        answerers = [experts[k] for k in chosen]
        weights = [spec.expert_accept_weight * aff[k] ** spec.accept_sharpness for k in chosen]
        if casual and rng.random() < spec.casual_answer_prob:
            pool = prolific if prolific and rng.random() < 0.5 else casual
            c = int(rng.choice(pool))
            answerers.append(c)
            weights.append(float(aff.mean()) ** spec.accept_sharpness)
        askers = [u for u in casual if u not in answerers]
        asker = int(rng.choice(askers))

        qid = next_id
        next_id += 1
        answer_ids = []
        for u in answerers:
            answer_ids.append(next_id)
            next_id += 1
        w = np.asarray(weights)
        winner = int(rng.choice(len(answerers), p=w / w.sum()))
        posts.append({"id": qid, "post_kind": "question", "owner_user_id": asker,
                      "creation_ts": round(ts, 3), "title": title, "body": body, "tags": tags,
                      "accepted_answer_id": answer_ids[winner]})
        for aid, u in zip(answer_ids, answerers):
            delay = float(rng.exponential(3.0)) * 3600.0
            posts.append({"id": aid, "post_kind": "answer", "owner_user_id": int(u),
                          "creation_ts": round(ts + delay, 3), "body": f"<p>answer by {u}</p>",
                          "parent_id": qid})
            answer_count[int(u)] += 1
        accepted_count[int(answerers[winner])] += 1

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "posts.jsonl").open("w") as fh:
        for p in posts:
            fh.write(json.dumps(p, sort_keys=True) + "\n")
    with (out / "users.jsonl").open("w") as fh:
        for u in range(1, spec.n_users + 1):
            rep = 15 * accepted_count[u] + 2 * answer_count[u] + int(rng.integers(0, 50))
            fh.write(json.dumps({"id": u, "reputation": rep}, sort_keys=True) + "\n")
    truth = {
        "spec": asdict(spec),
        "experts": experts,
        "topic_affinity": {str(e): theta[k].round(12).tolist() for k, e in enumerate(experts)},
        "tag_affinity": {str(e): {s: round(affinity(k, [s]), 12) for s in sub_index}
                         for k, e in enumerate(experts)},
        "tag_topic": {**{h: t for t, h in enumerate(heads)},
                      **{s: t for t, subs in enumerate(specific) for s in subs}},
    }
    (out / "truth.json").write_text(json.dumps(truth, indent=1, sort_keys=True) + "\n")
    return truth
