"""Command line entry point: ``expertfind <stage> [options]``.

Every stage command takes ``--config`` (YAML or JSON) and flag overrides.
Logs go to stderr, artifacts to the configured directory.
"""
from __future__ import annotations

import functools
import json
import logging
import sys

import click

from .pipeline import MODES, Pipeline, PipelineConfig, PipelineError, StageMismatchError, load_config

logger = logging.getLogger("expertfind")

_OVERRIDES = [
    click.option("--posts", type=click.Path(exists=True, dir_okay=False), help="Raw posts file."),
    click.option("--users", type=click.Path(exists=True, dir_okay=False), help="Users/reputation file."),
    click.option("--input-format", type=click.Choice(["jsonl", "xml_dump"])),
    click.option("--artifacts", type=click.Path(file_okay=False), help="Artifact directory."),
    click.option("--split-ratio", type=float),
    click.option("--lam", type=int, help="Number of feature tags."),
    click.option("--k-min", type=int),
    click.option("--k-max", type=int),
    click.option("--eps", type=int, help="Min accepted answers to join a layer."),
    click.option("--delta", type=float, help="Edge similarity threshold."),
    click.option("--beta", type=int, help="Min accepted answers for an expert candidate."),
    click.option("--alpha", type=float, help="Collection stop probability."),
    click.option("--walks", type=int),
    click.option("--steps", type=int),
    click.option("--top-n", type=int),
    click.option("--seed", type=int),
    click.option("--mode", type=click.Choice(MODES)),
    click.option("--ltr-queries", type=int),
    click.option("--tune-budget", type=int),
    click.option("--test-limit", type=int),
]


def pipeline_options(fn):
    @click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
    @click.option("--force", is_flag=True, help="Run even if upstream artifacts have another config hash.")
    @functools.wraps(fn)
    def wrapper(config_path, force, **kwargs):
        names = {p.name for p in _params}
        overrides = {k: kwargs.pop(k) for k in list(kwargs) if k in names}
        try:
            cfg = load_config(config_path, overrides)
        except (ValueError, TypeError) as exc:
            raise click.UsageError(str(exc)) from exc
        try:
            return fn(Pipeline(cfg, force=force), **kwargs)
        except (StageMismatchError, PipelineError) as exc:
            raise click.ClickException(str(exc)) from exc

    _params = []
    for opt in reversed(_OVERRIDES):
        wrapper = opt(wrapper)
    _params = [p for p in wrapper.__click_params__ if p.name not in ("config_path", "force")]
    return wrapper


@click.group()
@click.option("-v", "--verbose", count=True)
def main(verbose):
    """Topic-aware expert finding pipeline."""
    level = logging.WARNING - 10 * min(verbose, 2) if verbose else logging.INFO
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _stage_command(name, stage, doc):
    @main.command(name, help=doc)
    @pipeline_options
    def cmd(pipe):
        pipe.run_stage(stage)
        click.echo(json.dumps({"stage": stage, "config_hash": pipe.hash(stage)}))
    return cmd


_stage_command("ingest", "ingest", "Parse, clean and temporally split the raw posts.")
_stage_command("topics", "topics", "Cluster tags into topics.")
_stage_command("experts", "experts", "Identify the expert set from training answers.")
_stage_command("graph", "graph", "Build the multi-layer graph and its centralities.")
_stage_command("index", "index", "Build the tag and text BM25 indexes.")
_stage_command("ltr-build", "ltr", "Build the learning-to-rank dataset from the training tail.")
_stage_command("tune", "tune", "Random-search ranker hyperparameters.")
_stage_command("train", "train", "Train the ranker and write feature importances.")


@main.command("eval")
@pipeline_options
def eval_cmd(pipe):
    """Evaluate the configured mode on the test split."""
    pipe.run_stage("eval")
    click.echo(json.dumps(pipe.art.report.to_json(), indent=2, sort_keys=True))


@main.command("run")
@click.option("--resume", is_flag=True, help="Skip stages whose artifacts are current.")
@pipeline_options
def run_cmd(pipe, resume):
    """Run every stage of the configured mode."""
    report = pipe.run(resume=resume)
    click.echo(json.dumps(report.to_json(), indent=2, sort_keys=True))


def _find_question(pipe, qid):
    pipe._ensure_loaded("ingest")
    for ds in (pipe.art.test, pipe.art.train):
        if qid in ds.questions:
            return ds.questions[qid]
    raise click.BadParameter(f"question {qid} is not in the dataset", param_hint="--question-id")


def _question_from_file(path):
    from .ingest import Question, parse_tags

    with open(path) as fh:
        obj = json.load(fh)
    try:
        return Question(int(obj.get("id", 0)), int(obj.get("owner_user_id", 0)),
                        float(obj.get("creation_ts", 0.0)), obj.get("title", ""),
                        obj.get("body", ""), parse_tags(obj.get("tags", ())), None)
    except (TypeError, ValueError) as exc:
        raise click.BadParameter(str(exc), param_hint="--question-file") from exc


@main.command("select")
@click.option("--question-id", type=int, help="Question from the ingested corpus.")
@click.option("--question-file", type=click.Path(exists=True, dir_okay=False),
              help="JSON object with title, body and tags.")
@pipeline_options
def select_cmd(pipe, question_id, question_file):
    """Print the candidate set selected for one question."""
    from .selection import select_candidates

    if (question_id is None) == (question_file is None):
        raise click.UsageError("give exactly one of --question-id and --question-file")
    if question_file is not None:
        q, in_train = _question_from_file(question_file), False
    else:
        q = _find_question(pipe, question_id)
        in_train = question_id in pipe.art.train.questions
    pipe._ensure_loaded("graph")
    pipe._ensure_loaded("index")
    cs = select_candidates(q, pipe.art.mlg, pipe.art.indexes, pipe.art.centralities,
                           pipe.cfg.selection(), exclude_self=in_train)
    click.echo(json.dumps(cs.to_json(), indent=1))


@main.command("rank")
@click.option("--question-id", type=int, required=True)
@pipeline_options
def rank_cmd(pipe, question_id):
    """Print the ranked experts for one question under the configured mode."""
    q = _find_question(pipe, question_id)
    pipe._ensure_loaded("train" if pipe.cfg.uses_ranker else "graph")
    pipe._ensure_loaded("index")
    ranking, _ = pipe.rank_question(q)
    click.echo(json.dumps({"question_id": question_id, "ranking": ranking}))


@main.command("ablate")
@click.option("--modes", default=",".join(MODES), show_default=True)
@click.option("--baseline", default="cb", show_default=True, type=click.Choice(MODES))
@pipeline_options
def ablate_cmd(pipe, modes, baseline):
    """Run several modes into <artifacts>/<mode> and print the comparison table."""
    from .pipeline import run_ablation

    chosen = [m.strip() for m in modes.split(",") if m.strip()]
    bad = [m for m in chosen if m not in MODES]
    if bad:
        raise click.BadParameter(f"unknown modes {bad}", param_hint="--modes")
    table, _ = run_ablation(pipe.cfg, chosen, baseline, force=pipe.force)
    click.echo(table.to_text())


@main.command("synth")
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--users", "n_users", type=int, default=200, show_default=True)
@click.option("--experts", "n_experts", type=int, default=20, show_default=True)
@click.option("--tags", "n_tags", type=int, default=60, show_default=True)
@click.option("--topics", "n_topics", type=int, default=5, show_default=True)
@click.option("--questions", "n_questions", type=int, default=5000, show_default=True)
@click.option("--concentration", type=float, default=0.3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def synth_cmd(out, **kwargs):
    """Write a planted-expert synthetic corpus to OUT."""
    from .synth import SyntheticSpec, generate_synthetic

    try:
        spec = SyntheticSpec(**kwargs)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    generate_synthetic(spec, out)
    click.echo(json.dumps({"posts": f"{out}/posts.jsonl", "users": f"{out}/users.jsonl",
                           "truth": f"{out}/truth.json"}))


if __name__ == "__main__":
    main()
