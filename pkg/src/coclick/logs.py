"""Session-log parsing and coclick aggregation.

A raw log is TSV with columns session_id, timestamp_ms, query, rank,
article_id. Within one (session, query) group, every rank-ordered pair of
distinct clicked articles is a coclick: the higher-ranked click is the seed,
the lower-ranked one the similar article. Aggregation reduces coclicks to
one record per (seed, similar) pair holding a normalized-query -> count map.

Aggregation is an associative, commutative merge over immutable inputs, so
event shards can be reduced in any grouping and yield identical results.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from typing import IO, Iterable, Iterator

from .base import DatasetError

RAW_LOG_COLUMNS = ("session_id", "timestamp_ms", "query", "rank", "article_id")
METADATA_COLUMNS = ("article_id", "title", "abstract")

PairKey = tuple[str, str]


@dataclass(frozen=True)
class SessionEvent:
    """One click row from a raw session log."""

    session_id: str
    query: str
    rank: int
    article_id: str
    timestamp: int


@dataclass(frozen=True)
class CoclickInstance:
    """Two articles clicked under the same (session, query); seed ranked higher."""

    seed_id: str
    similar_id: str
    query: str


@dataclass
class PairAggregate:
    """Per-pair map of normalized query -> coclick count."""

    seed_id: str
    similar_id: str
    query_counts: dict[str, int] = field(default_factory=dict)

    @property
    def combined_clicks(self) -> int:
        return sum(self.query_counts.values())


@dataclass
class ParseStats:
    """Counters exposed for monitoring a parse run."""

    parsed: int = 0
    malformed: int = 0


def normalize_query(query: str) -> str:
    """Canonical form used as an aggregation key: lowercase, whitespace collapsed."""
    return " ".join(query.lower().split())


def parse_log(lines: Iterable[str], stats: ParseStats | None = None) -> Iterator[SessionEvent]:
    """Yield a :class:`SessionEvent` per well-formed TSV line.

    Malformed lines (wrong field count, bad rank, empty query or article id)
    are skipped and tallied on ``stats``; real logs are dirty and a bad line
    should never abort an ingest.
    """
    if stats is None:
        stats = ParseStats()
    for line in lines:
        line = line.rstrip("\n")
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != len(RAW_LOG_COLUMNS):
            stats.malformed += 1
            continue
        session_id, ts_text, query, rank_text, article_id = fields
        query = query.strip()
        article_id = article_id.strip()
        try:
            rank = int(rank_text)
            timestamp = int(ts_text)
        except ValueError:
            stats.malformed += 1
            continue
        if rank < 1 or not query or not article_id or not session_id:
            stats.malformed += 1
            continue
        stats.parsed += 1
        yield SessionEvent(session_id, query, rank, article_id, timestamp)


def extract_coclicks(events: Iterable[SessionEvent]) -> list[CoclickInstance]:
    """Emit one coclick per rank-ordered pair of distinct articles in a group.

    Groups are (session_id, query). Repeated clicks on the same article keep
    only the lowest-ranked occurrence. Pairs need a strict rank order, so two
    clicks sharing a rank produce nothing.
    """
    groups: dict[tuple[str, str], list[SessionEvent]] = {}
    for event in events:
        groups.setdefault((event.session_id, event.query), []).append(event)

    instances: list[CoclickInstance] = []
    for (_, query), group in groups.items():
        best: dict[str, SessionEvent] = {}
        for event in sorted(group, key=lambda e: e.rank):
            if event.article_id not in best:
                best[event.article_id] = event
        clicks = sorted(best.values(), key=lambda e: (e.rank, e.article_id))
        for a, b in combinations(clicks, 2):
            if a.rank < b.rank:
                instances.append(CoclickInstance(a.article_id, b.article_id, query))
    return instances


def aggregate_pairs(instances: Iterable[CoclickInstance]) -> dict[PairKey, PairAggregate]:
    """Count coclicks per (seed, similar) pair, keyed by normalized query."""
    aggregates: dict[PairKey, PairAggregate] = {}
    for inst in instances:
        key = (inst.seed_id, inst.similar_id)
        agg = aggregates.get(key)
        if agg is None:
            agg = aggregates[key] = PairAggregate(inst.seed_id, inst.similar_id)
        nq = normalize_query(inst.query)
        agg.query_counts[nq] = agg.query_counts.get(nq, 0) + 1
    return aggregates


def merge_aggregates(
    a: dict[PairKey, PairAggregate], b: dict[PairKey, PairAggregate]
) -> dict[PairKey, PairAggregate]:
    """Pointwise sum of two aggregate maps; associative and commutative."""
    merged: dict[PairKey, PairAggregate] = {}
    for source in (a, b):
        for key, agg in source.items():
            target = merged.get(key)
            if target is None:
                target = merged[key] = PairAggregate(agg.seed_id, agg.similar_id)
            for query, count in agg.query_counts.items():
                target.query_counts[query] = target.query_counts.get(query, 0) + count
    return merged


def aggregate_sharded(
    events: Iterable[SessionEvent], shards: int
) -> dict[PairKey, PairAggregate]:
    """Aggregate via per-shard reduction then merge.

    Whole (session, query) groups stay inside one shard so this is exactly
    equivalent to a single-pass aggregate; the merge step is what a parallel
    runner would execute.
    """
    if shards < 1:
        shards = 1
    groups: dict[tuple[str, str], list[SessionEvent]] = {}
    for event in events:
        groups.setdefault((event.session_id, event.query), []).append(event)
    keys = list(groups)
    chunk = max(1, (len(keys) + shards - 1) // shards)
    result: dict[PairKey, PairAggregate] = {}
    for i in range(0, len(keys), chunk):
        shard_events = [e for k in keys[i : i + chunk] for e in groups[k]]
        shard_agg = aggregate_pairs(extract_coclicks(shard_events))
        result = merge_aggregates(result, shard_agg)
    return result


def write_aggregates(aggregates: dict[PairKey, PairAggregate], fh: IO[str]) -> None:
    """Write aggregates as JSON Lines, sorted by pair for reproducible output."""
    for key in sorted(aggregates):
        agg = aggregates[key]
        record = {
            "seed_id": agg.seed_id,
            "similar_id": agg.similar_id,
            "query_counts": dict(sorted(agg.query_counts.items())),
            "combined_clicks": agg.combined_clicks,
        }
        fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_aggregates(fh: IO[str]) -> dict[PairKey, PairAggregate]:
    aggregates: dict[PairKey, PairAggregate] = {}
    for lineno, line in enumerate(fh, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
            agg = PairAggregate(
                record["seed_id"],
                record["similar_id"],
                {q: int(c) for q, c in record["query_counts"].items()},
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"bad aggregate record at line {lineno}: {exc}") from exc
        aggregates[(agg.seed_id, agg.similar_id)] = agg
    return aggregates


@dataclass(frozen=True)
class Article:
    article_id: str
    title: str
    abstract: str = ""


def read_metadata(fh: IO[str]) -> dict[str, Article]:
    """Read the article metadata TSV (article_id, title, abstract)."""
    articles: dict[str, Article] = {}
    for lineno, line in enumerate(fh, start=1):
        line = line.rstrip("\n")
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) == 2:
            fields.append("")
        if len(fields) != len(METADATA_COLUMNS):
            raise DatasetError(f"bad metadata row at line {lineno}: {line!r}")
        article_id, title, abstract = fields
        articles[article_id] = Article(article_id, title, abstract)
    return articles


def write_metadata(articles: Iterable[Article], fh: IO[str]) -> None:
    for article in articles:
        fh.write(f"{article.article_id}\t{article.title}\t{article.abstract}\n")


def write_events(events: Iterable[SessionEvent], fh: IO[str]) -> None:
    for e in events:
        fh.write(f"{e.session_id}\t{e.timestamp}\t{e.query}\t{e.rank}\t{e.article_id}\n")
