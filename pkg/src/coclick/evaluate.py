"""Recall/precision/F1 at token and title granularity, plus stratified views.

Token-level treats a prediction as a set of unique lowercase tokens;
title-level expands both gold and prediction to title positions first, so
duplicated tokens count once per occurrence. Aggregation is macro by
default (mean of per-instance recall and precision, F1 of the means) with a
pooled-count micro option; sums use ``math.fsum`` so results do not depend
on instance order.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

from .base import CoclickError, DatasetError
from .dataset import PairExample
from .logs import PairKey
from .text import WordToken, positions_of

log = logging.getLogger(__name__)


@dataclass
class EvalMetrics:
    """Aggregated metrics; rates are stored in [0, 1] and reported x100."""

    recall: float
    precision: float
    f1: float
    avg_pred_len: float
    n_instances: int


@dataclass(frozen=True)
class InstanceCounts:
    """Raw overlap counts for one instance, at either granularity."""

    tp: int
    n_gold: int
    n_pred: int


def f1_score(recall: float, precision: float) -> float:
    if recall + precision == 0.0:
        return 0.0
    return 2.0 * recall * precision / (recall + precision)


def token_metrics(gold: set[str], pred: set[str]) -> tuple[float, float] | None:
    """Per-instance (recall, precision) over unique tokens.

    Empty gold with empty prediction scores (1, 1); empty gold with a
    non-empty prediction returns None, meaning the instance is excluded.
    An empty prediction against non-empty gold scores (0, 0).
    """
    return _rates(_counts(gold, pred))


def title_metrics(
    title_tokens: Sequence[WordToken], gold: set[str], pred: set[str]
) -> tuple[float, float] | None:
    """Per-instance (recall, precision) over title positions."""
    gold_pos = positions_of(title_tokens, gold)
    pred_pos = positions_of(title_tokens, pred)
    return _rates(_counts(gold_pos, pred_pos))


def _counts(gold: set, pred: set) -> InstanceCounts:
    return InstanceCounts(tp=len(gold & pred), n_gold=len(gold), n_pred=len(pred))


def _rates(c: InstanceCounts) -> tuple[float, float] | None:
    if c.n_gold == 0:
        if c.n_pred == 0:
            return (1.0, 1.0)
        return None
    recall = c.tp / c.n_gold
    precision = c.tp / c.n_pred if c.n_pred > 0 else 0.0
    return (recall, precision)


def aggregate(
    instance_rates: Sequence[tuple[float, float]], pred_sizes: Sequence[int]
) -> EvalMetrics:
    """Macro-average per-instance rates; F1 is taken of the mean rates."""
    if not instance_rates:
        raise CoclickError("cannot aggregate an empty instance list")
    n = len(instance_rates)
    recall = math.fsum(r for r, _ in instance_rates) / n
    precision = math.fsum(p for _, p in instance_rates) / n
    avg_len = math.fsum(pred_sizes) / n if pred_sizes else 0.0
    return EvalMetrics(recall, precision, f1_score(recall, precision), avg_len, n)


def evaluate_predictions(
    examples: Sequence[PairExample],
    predictions: dict[PairKey, set[str]],
    granularity: str = "token",
    micro: bool = False,
) -> EvalMetrics:
    """Score a prediction map against dataset gold at the given granularity.

    Examples without a prediction entry are skipped with a warning tally, as
    are (defensively) instances with empty gold and a non-empty prediction.
    """
    if granularity not in ("token", "title"):
        raise ValueError(f"granularity must be 'token' or 'title', got {granularity!r}")
    counts: list[InstanceCounts] = []
    skipped_uncovered = 0
    skipped_empty_gold = 0
    for ex in examples:
        pred = predictions.get(ex.pair_key)
        if pred is None:
            skipped_uncovered += 1
            continue
        if granularity == "token":
            c = _counts(set(ex.gold_tokens), set(pred))
        else:
            c = _counts(
                positions_of(ex.similar_title_tokens, ex.gold_tokens),
                positions_of(ex.similar_title_tokens, pred),
            )
        if c.n_gold == 0 and c.n_pred > 0:
            skipped_empty_gold += 1
            continue
        counts.append(c)
    if skipped_uncovered:
        log.warning("evaluation skipped %d instances without predictions", skipped_uncovered)
    if skipped_empty_gold:
        log.warning(
            "evaluation excluded %d instances with empty gold and non-empty predictions",
            skipped_empty_gold,
        )
    if not counts:
        raise CoclickError("no instances left to evaluate")
    if micro:
        tp = sum(c.tp for c in counts)
        n_gold = sum(c.n_gold for c in counts)
        n_pred = sum(c.n_pred for c in counts)
        recall = tp / n_gold if n_gold else 1.0
        precision = tp / n_pred if n_pred else (1.0 if tp == n_gold == 0 else 0.0)
        avg_len = math.fsum(c.n_pred for c in counts) / len(counts)
        return EvalMetrics(recall, precision, f1_score(recall, precision), avg_len, len(counts))
    rates = [_rates(c) for c in counts]
    return aggregate(rates, [c.n_pred for c in counts])


@dataclass
class Stratum:
    """A named subset of the evaluation set."""

    name: str
    description: str
    pair_keys: list[PairKey]


def stratify_by_clicks(examples: Sequence[PairExample]) -> list[Stratum]:
    """Strata by combined coclick count: top 0.1% plus thirds of the sorted list.

    The top 0.1% stratum (at least one instance) overlaps the top third; the
    thirds partition everything. Ties break by pair id.
    """
    ordered = sorted(examples, key=lambda ex: (-ex.combined_clicks, ex.pair_key))
    n = len(ordered)
    if n == 0:
        return []
    top_n = max(1, int(0.001 * n))
    b1 = math.ceil(n / 3)
    b2 = math.ceil(2 * n / 3)
    return [
        Stratum("top_0.1pct", "highest 0.1% by combined clicks", [e.pair_key for e in ordered[:top_n]]),
        Stratum("top_third", "top third by combined clicks", [e.pair_key for e in ordered[:b1]]),
        Stratum("middle_third", "middle third by combined clicks", [e.pair_key for e in ordered[b1:b2]]),
        Stratum("bottom_third", "bottom third by combined clicks", [e.pair_key for e in ordered[b2:]]),
    ]


def stratify_by_similarity(
    examples: Sequence[PairExample], pair_scores: dict[PairKey, float]
) -> tuple[list[Stratum], int]:
    """Quintiles by externally supplied pair similarity, most similar first.

    Instances without a score are excluded and tallied. Ties break by pair id.
    """
    scored = []
    excluded = 0
    for ex in examples:
        score = pair_scores.get(ex.pair_key)
        if score is None or not math.isfinite(score):
            excluded += 1
            continue
        scored.append((score, ex.pair_key))
    if excluded:
        log.warning("similarity stratification excluded %d unscored instances", excluded)
    scored.sort(key=lambda item: (-item[0], item[1]))
    n = len(scored)
    strata = []
    for i in range(5):
        lo = math.ceil(i * n / 5)
        hi = math.ceil((i + 1) * n / 5)
        strata.append(
            Stratum(
                f"similarity_q{i + 1}",
                f"similarity quintile {i + 1} (1 = most similar)",
                [key for _, key in scored[lo:hi]],
            )
        )
    return strata, excluded


def load_pair_scores(fh: IO[str]) -> dict[PairKey, float]:
    """Read a pair-score file (JSON Lines: seed_id, similar_id, score)."""
    scores: dict[PairKey, float] = {}
    for lineno, line in enumerate(fh, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
            scores[(record["seed_id"], record["similar_id"])] = float(record["score"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"bad pair-score record at line {lineno}: {exc}") from exc
    return scores


@dataclass
class MetricsRow:
    """One line of the metrics report."""

    model: str
    granularity: str
    stratum: str
    metrics: EvalMetrics


def metrics_rows(
    model: str,
    examples: Sequence[PairExample],
    predictions: dict[PairKey, set[str]],
    granularities: Iterable[str] = ("token", "title"),
    strata: Sequence[Stratum] | None = None,
    micro: bool = False,
) -> list[MetricsRow]:
    """Rows for one model: overall plus any strata, at each granularity."""
    by_key = {ex.pair_key: ex for ex in examples}
    rows = []
    for granularity in granularities:
        rows.append(
            MetricsRow(
                model,
                granularity,
                "all",
                evaluate_predictions(examples, predictions, granularity, micro),
            )
        )
        for stratum in strata or []:
            members = [by_key[k] for k in stratum.pair_keys if k in by_key]
            if not members:
                continue
            rows.append(
                MetricsRow(
                    model,
                    granularity,
                    stratum.name,
                    evaluate_predictions(members, predictions, granularity, micro),
                )
            )
    return rows


def write_metrics_csv(rows: Sequence[MetricsRow], fh: IO[str]) -> None:
    """Report CSV: model,granularity,stratum,R,P,F1,L,N with rates x100."""
    fh.write("model,granularity,stratum,R,P,F1,L,N\n")
    for row in rows:
        m = row.metrics
        fh.write(
            f"{row.model},{row.granularity},{row.stratum},"
            f"{m.recall * 100:.2f},{m.precision * 100:.2f},{m.f1 * 100:.2f},"
            f"{m.avg_pred_len:.2f},{m.n_instances}\n"
        )
