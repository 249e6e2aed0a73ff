"""End-to-end wiring: synth -> ingest -> build -> train -> explain -> eval.

Also defines the default desk-scale benchmark configuration: a calibrated
synthetic world small enough to run in well under two minutes while keeping
the click-count labeler's softmax margins wide enough for clean gold sets.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

from .dataset import BuildConfig, PairExample, build_examples, load_dataset, split_dataset, write_dataset
from .evaluate import MetricsRow, metrics_rows, stratify_by_clicks, write_metrics_csv
from .explain import Bm25, Explainer, HighlightAll, Overlapper, load_stopwords, predict_dataset
from .logs import (
    aggregate_sharded,
    parse_log,
    ParseStats,
    read_aggregates,
    read_metadata,
    write_aggregates,
    write_events,
    write_metadata,
)
from .scoring import compute_idf
from .synth import SynthConfig, generate_corpus, generate_sessions, write_truth
from .tagger import TokenTagger
from .text import word_tokenize


@dataclass
class PipelineConfig:
    """One bundle of stage configurations sharing a seed."""

    seed: int = 0
    synth: SynthConfig = field(default_factory=SynthConfig)
    build: BuildConfig = field(default_factory=BuildConfig)
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    tagger_total_steps: int = 1500
    tagger_lr: float = 5e-3
    tagger_batch_size: int = 64
    tagger_eval_every: int = 100
    threads: int = 1


def benchmark_config(seed: int = 42) -> PipelineConfig:
    """The default synthetic benchmark: ~5k coclicked pairs at seed 42.

    Titles are kept in the 9-13 token band and the gold threshold at 0.11 so
    softmax scores of queried topic tokens sit clearly above zero-count
    tokens across the whole length range.
    """
    synth = SynthConfig(
        n_articles=250,
        cluster_size=4,
        topics_per_cluster=3,
        extra_topic_prob=1.0,
        extra_in_title_prob=0.5,
        filler_vocab=500,
        filler_zipf=1.3,
        stopword_vocab=25,
        title_len=(9, 13, 11),
        abstract_len=(30, 50),
        article_zipf=1.1,
        same_cluster_bias=0.95,
        sessions=70000,
        clicks_dist=(0.1, 0.5, 0.4),
        rng_seed=seed,
    )
    build = BuildConfig(gold_threshold=0.11, cap_fraction=0.40)
    return PipelineConfig(seed=seed, synth=synth, build=build)


@dataclass
class PipelineResult:
    workdir: Path
    paths: dict[str, Path]
    n_pairs: int
    drops: dict[str, int]
    split_sizes: dict[str, int]
    metrics: list[MetricsRow]
    elapsed_seconds: float


def corpus_documents(articles: dict) -> list[list[str]]:
    """Per-article token documents (title + abstract) used for idf/avgdl."""
    docs = []
    for key in sorted(articles):
        art = articles[key]
        docs.append([t.lower for t in word_tokenize(art.title)] + [t.lower for t in word_tokenize(art.abstract)])
    return docs


def title_documents(articles: dict) -> list[list[str]]:
    """Per-article title token documents; the default BM25/idf corpus."""
    return [
        [t.lower for t in word_tokenize(articles[key].title)] for key in sorted(articles)
    ]


def default_backends(articles: dict, tagger: TokenTagger | None = None) -> list[Explainer]:
    """The standard comparison set, fitted on the article titles."""
    docs = title_documents(articles)
    stopwords = load_stopwords()
    backends: list[Explainer] = [
        HighlightAll(),
        Overlapper(stopwords=stopwords).fit(docs),
        Bm25().fit(docs),
    ]
    if tagger is not None:
        backends.append(tagger)
    return backends


def run_pipeline(workdir: str | Path, config: PipelineConfig | None = None) -> PipelineResult:
    """Run every stage into ``workdir`` and return paths plus the metrics table."""
    if config is None:
        config = benchmark_config()
    started = time.monotonic()
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    paths = {
        "raw_log": workdir / "raw_log.tsv",
        "articles": workdir / "articles.tsv",
        "truth": workdir / "truth.jsonl",
        "aggregates": workdir / "aggregates.jsonl",
        "train": workdir / "dataset.train.jsonl",
        "dev": workdir / "dataset.dev.jsonl",
        "test": workdir / "dataset.test.jsonl",
        "checkpoint": workdir / "tagger.json",
        "train_log": workdir / "training_metrics.csv",
        "metrics": workdir / "metrics.csv",
    }

    # synth
    corpus = generate_corpus(config.synth)
    events = generate_sessions(corpus, config.synth)
    with open(paths["raw_log"], "w", encoding="utf-8") as fh:
        write_events(events, fh)
    with open(paths["articles"], "w", encoding="utf-8") as fh:
        write_metadata(corpus.articles, fh)
    with open(paths["truth"], "w", encoding="utf-8") as fh:
        write_truth(corpus, fh)

    # ingest
    stats = ParseStats()
    with open(paths["raw_log"], encoding="utf-8") as fh:
        parsed = list(parse_log(fh, stats))
    aggregates = aggregate_sharded(parsed, max(1, config.threads))
    with open(paths["aggregates"], "w", encoding="utf-8") as fh:
        write_aggregates(aggregates, fh)

    # build
    with open(paths["articles"], encoding="utf-8") as fh:
        articles = read_metadata(fh)
    with open(paths["aggregates"], encoding="utf-8") as fh:
        aggregates = read_aggregates(fh)
    examples, drops = build_examples(aggregates, articles, config.build)
    splits = split_dataset(examples, config.split_ratios, config.seed)
    for name in ("train", "dev", "test"):
        with open(paths[name], "w", encoding="utf-8") as fh:
            write_dataset(splits[name], fh)

    # train
    splits = {name: _load(paths[name]) for name in ("train", "dev", "test")}
    tagger = TokenTagger(
        lr=config.tagger_lr,
        total_steps=config.tagger_total_steps,
        batch_size=config.tagger_batch_size,
        eval_every=config.tagger_eval_every,
        rng_seed=config.seed,
        idf=compute_idf(title_documents(articles)),
    )
    with open(paths["train_log"], "w", encoding="utf-8") as fh:
        tagger.fit(splits["train"], splits["dev"], metrics_log=fh)
    with open(paths["checkpoint"], "w", encoding="utf-8") as fh:
        tagger.save(fh)

    # explain + eval on the held-out test split
    rows: list[MetricsRow] = []
    strata = stratify_by_clicks(splits["test"])
    for backend in default_backends(articles, tagger):
        predictions, _ = predict_dataset(backend, splits["test"])
        rows.extend(metrics_rows(backend.name, splits["test"], predictions, strata=strata))
    with open(paths["metrics"], "w", encoding="utf-8") as fh:
        write_metrics_csv(rows, fh)

    return PipelineResult(
        workdir=workdir,
        paths=paths,
        n_pairs=len(aggregates),
        drops=drops,
        split_sizes={name: len(splits[name]) for name in splits},
        metrics=rows,
        elapsed_seconds=time.monotonic() - started,
    )


def _load(path: Path) -> list[PairExample]:
    with open(path, encoding="utf-8") as fh:
        return load_dataset(fh)
