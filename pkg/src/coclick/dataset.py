"""Build labeled (seed, similar) title-highlighting examples from pair aggregates.

For each coclicked pair, query click counts are folded onto the unique
tokens of the similar article title; a max-scaled softmax over those counts
plus a threshold picks the gold tokens. Noisy long-tail pairs are dropped by
three filters (combined clicks, title length, nonzero-count tokens), and the
survivors are split train/dev/test by seed-article group so near-duplicates
never straddle a split.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

from .base import DatasetError, LabelingError, check_ratios
from .logs import Article, PairAggregate, PairKey
from .scoring import threshold_cap_select
from .text import WordToken, unique_lower, word_tokenize

DROP_MIN_CLICKS = "min_clicks"
DROP_MIN_TITLE_LEN = "min_title_len"
DROP_MIN_NONZERO = "min_nonzero"
DROP_EMPTY_GOLD = "empty_gold"
DROP_MISSING_ARTICLE = "missing_article"


@dataclass
class TokenClickCounts:
    """Coclick count per unique lowercase similar-title token, in title order."""

    counts: dict[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def nonzero(self) -> int:
        return sum(1 for c in self.counts.values() if c > 0)


@dataclass
class PairExample:
    """One labeled dataset row.

    Titles and the abstract are stored raw; token views are recomputed so
    every consumer sees one consistent tokenization.
    """

    seed_id: str
    similar_id: str
    seed_title: str
    seed_abstract: str
    similar_title: str
    gold_tokens: set[str]
    token_counts: TokenClickCounts
    combined_clicks: int

    seed_title_tokens: list[WordToken] = field(init=False, repr=False)
    seed_abstract_tokens: list[WordToken] = field(init=False, repr=False)
    similar_title_tokens: list[WordToken] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.seed_title_tokens = word_tokenize(self.seed_title)
        self.seed_abstract_tokens = word_tokenize(self.seed_abstract)
        self.similar_title_tokens = word_tokenize(self.similar_title)

    @property
    def pair_key(self) -> PairKey:
        return (self.seed_id, self.similar_id)

    def unique_title_tokens(self) -> list[str]:
        return unique_lower(self.similar_title_tokens)


@dataclass
class BuildConfig:
    """Labeling and filtering knobs for dataset construction."""

    gold_threshold: float = 0.30
    cap_fraction: float = 0.40
    min_clicks: int = 20
    min_title_len: int = 7
    min_nonzero: int = 3


def count_title_token_clicks(
    aggregate: PairAggregate, similar_title_tokens: Sequence[WordToken]
) -> TokenClickCounts:
    """Sum, per unique title token, the clicks of queries containing that token.

    Query strings are word-tokenized with the shared tokenizer and matched
    case-insensitively; title tokens appearing in no query get count 0.
    """
    counts = TokenClickCounts({t: 0 for t in unique_lower(similar_title_tokens)})
    if not counts.counts:
        return counts
    for query, clicks in aggregate.query_counts.items():
        for qtok in set(t.lower for t in word_tokenize(query)):
            if qtok in counts.counts:
                counts.counts[qtok] += clicks
    return counts


def select_gold_tokens(
    counts: TokenClickCounts, p: float = 0.30, cap_fraction: float = 0.40
) -> set[str]:
    """Pick gold tokens: max-scaled softmax over per-token counts, threshold ``p``.

    Every unique title token participates in the softmax, zero-count ones
    included. When more than floor(cap_fraction * n) tokens pass the
    threshold, the top floor(cap_fraction * n) survive (by score, then raw
    count, then earlier title position).
    """
    if counts.total == 0:
        raise LabelingError("cannot label a pair with zero token clicks")
    tokens = list(counts.counts)
    values = [float(counts.counts[t]) for t in tokens]
    positions = list(range(len(tokens)))
    selected = threshold_cap_select(values, positions, p, cap_fraction)
    return {tokens[i] for i in selected}


def filter_pair(
    combined_clicks: int,
    similar_title_tokens: Sequence[WordToken],
    counts: TokenClickCounts,
    min_clicks: int = 20,
    min_title_len: int = 7,
    min_nonzero: int = 3,
) -> str | None:
    """Return a drop reason, or None when the candidate pair is kept."""
    if combined_clicks < min_clicks:
        return DROP_MIN_CLICKS
    if len(similar_title_tokens) < min_title_len:
        return DROP_MIN_TITLE_LEN
    if counts.nonzero() < min_nonzero:
        return DROP_MIN_NONZERO
    return None


def build_examples(
    aggregates: dict[PairKey, PairAggregate],
    articles: dict[str, Article],
    config: BuildConfig | None = None,
) -> tuple[list[PairExample], dict[str, int]]:
    """Label and filter every aggregate; returns kept examples + drop tallies.

    Output is sorted by (seed_id, similar_id) so any parallel or sharded
    labeling run produces identical files.
    """
    if config is None:
        config = BuildConfig()
    examples: list[PairExample] = []
    drops: dict[str, int] = {}

    def drop(reason: str) -> None:
        drops[reason] = drops.get(reason, 0) + 1

    for key in sorted(aggregates):
        agg = aggregates[key]
        seed = articles.get(agg.seed_id)
        similar = articles.get(agg.similar_id)
        if seed is None or similar is None:
            drop(DROP_MISSING_ARTICLE)
            continue
        title_tokens = word_tokenize(similar.title)
        counts = count_title_token_clicks(agg, title_tokens)
        reason = filter_pair(
            agg.combined_clicks,
            title_tokens,
            counts,
            config.min_clicks,
            config.min_title_len,
            config.min_nonzero,
        )
        if reason is not None:
            drop(reason)
            continue
        try:
            gold = select_gold_tokens(counts, config.gold_threshold, config.cap_fraction)
        except LabelingError:
            drop(DROP_EMPTY_GOLD)
            continue
        if not gold:
            drop(DROP_EMPTY_GOLD)
            continue
        examples.append(
            PairExample(
                seed_id=agg.seed_id,
                similar_id=agg.similar_id,
                seed_title=seed.title,
                seed_abstract=seed.abstract,
                similar_title=similar.title,
                gold_tokens=gold,
                token_counts=counts,
                combined_clicks=agg.combined_clicks,
            )
        )
    return examples, drops


def split_dataset(
    examples: Sequence[PairExample],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    rng_seed: int = 0,
) -> dict[str, list[PairExample]]:
    """Partition examples into train/dev/test by seed-article group.

    Groups are ordered by a salted hash of their seed id and assigned to
    splits by cumulative quota, so the partition is deterministic for a
    given seed and every example sharing a seed article lands in one split.
    """
    check_ratios(ratios)
    groups: dict[str, list[PairExample]] = {}
    for ex in examples:
        groups.setdefault(ex.seed_id, []).append(ex)

    def group_key(seed_id: str) -> tuple[str, str]:
        digest = hashlib.sha256(f"{rng_seed}:{seed_id}".encode("utf-8")).hexdigest()
        return (digest, seed_id)

    ordered = sorted(groups, key=group_key)
    total = len(examples)
    b1 = ratios[0] * total
    b2 = (ratios[0] + ratios[1]) * total
    splits: dict[str, list[PairExample]] = {"train": [], "dev": [], "test": []}
    assigned = 0
    for seed_id in ordered:
        group = groups[seed_id]
        if assigned < b1:
            name = "train"
        elif assigned < b2:
            name = "dev"
        else:
            name = "test"
        splits[name].extend(group)
        assigned += len(group)
    for part in splits.values():
        part.sort(key=lambda ex: ex.pair_key)
    return splits


def write_dataset(examples: Iterable[PairExample], fh: IO[str]) -> None:
    """Write examples as JSON Lines with a fixed key order."""
    for ex in examples:
        record = {
            "seed_id": ex.seed_id,
            "similar_id": ex.similar_id,
            "seed_title": ex.seed_title,
            "seed_abstract": ex.seed_abstract,
            "similar_title": ex.similar_title,
            "token_counts": ex.token_counts.counts,
            "combined_clicks": ex.combined_clicks,
            "gold_tokens": sorted(ex.gold_tokens),
        }
        fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_dataset(fh: IO[str]) -> list[PairExample]:
    """Read a dataset file, re-tokenize, and validate row invariants."""
    examples: list[PairExample] = []
    for lineno, line in enumerate(fh, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
            ex = PairExample(
                seed_id=record["seed_id"],
                similar_id=record["similar_id"],
                seed_title=record["seed_title"],
                seed_abstract=record["seed_abstract"],
                similar_title=record["similar_title"],
                gold_tokens=set(record["gold_tokens"]),
                token_counts=TokenClickCounts(
                    {t: int(c) for t, c in record["token_counts"].items()}
                ),
                combined_clicks=int(record["combined_clicks"]),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"bad dataset record at line {lineno}: {exc}") from exc
        title_tokens = set(ex.unique_title_tokens())
        if not ex.gold_tokens <= title_tokens:
            raise DatasetError(
                f"line {lineno}: gold tokens {sorted(ex.gold_tokens - title_tokens)} "
                f"not in title of pair ({ex.seed_id}, {ex.similar_id})"
            )
        if not set(ex.token_counts.counts) <= title_tokens:
            raise DatasetError(
                f"line {lineno}: token_counts keys outside title for pair "
                f"({ex.seed_id}, {ex.similar_id})"
            )
        examples.append(ex)
    return examples
