"""Greedy construction of the blended result page, plus a brute-force
oracle for small instances."""

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .calibration import CalibratedCandidate
from .errors import ValidationError
from .metric import DEFAULT_METRIC_CONFIG, IntentDistribution, MetricConfig, err_iaa

_NO_RANK = 1 << 30


@dataclass(frozen=True)
class BlendedResult:
    doc_ids: tuple[str, ...]
    gains: tuple[float, ...]
    total: float
    dist: IntentDistribution


def tie_break_key(candidate: CalibratedCandidate):
    """Deterministic ordering for equal marginal gains: higher r_any,
    then lower ordinary rank, then doc_id."""
    rank = candidate.ordinary_rank if candidate.ordinary_rank is not None else _NO_RANK
    return (-candidate.r_any, rank, candidate.doc_id)


def candidate_arrays(candidates: Sequence[CalibratedCandidate]):
    """Pack candidates into the float arrays the blend kernel consumes."""
    m = len(candidates)
    r_fresh = np.fromiter((c.r_fresh for c in candidates), dtype=np.float64, count=m)
    r_any = np.fromiter((c.r_any for c in candidates), dtype=np.float64, count=m)
    order = sorted(range(m), key=lambda i: tie_break_key(candidates[i]))
    tie_rank = np.empty(m, dtype=np.int64)
    tie_rank[order] = np.arange(m, dtype=np.int64)
    return r_fresh, r_any, tie_rank


def blend(
    candidates: Sequence[CalibratedCandidate],
    dist: IntentDistribution,
    config: MetricConfig = DEFAULT_METRIC_CONFIG,
) -> BlendedResult:
    """Greedily order the pool, taking the largest marginal gain at each
    position, until the page depth or the pool is exhausted."""
    if not candidates:
        raise ValidationError("cannot blend an empty candidate pool")
    r_fresh, r_any, tie_rank = candidate_arrays(candidates)
    order, gains = kernels.greedy_blend(
        r_fresh,
        r_any,
        tie_rank,
        dist.p_fresh,
        dist.p_any,
        config.p_break,
        config.break_exponent.shift,
        config.depth,
    )
    doc_ids = tuple(candidates[int(i)].doc_id for i in order)
    gain_list = tuple(float(g) for g in gains)
    return BlendedResult(doc_ids, gain_list, float(gains.sum()), dist)


def brute_force_best(
    candidates: Sequence[CalibratedCandidate],
    dist: IntentDistribution,
    config: MetricConfig = DEFAULT_METRIC_CONFIG,
    max_positions: int = 5,
) -> tuple[tuple[str, ...], float]:
    """Exhaustive maximizer over all ordered selections; a test oracle.

    Guarded to |candidates| <= 8 and max_positions <= 5.  Candidates are
    enumerated in tie-break order and only strict improvements are kept,
    so ties resolve exactly as blend's per-position rules do.
    """
    if not candidates:
        raise ValidationError("cannot search an empty candidate pool")
    if len(candidates) > 8:
        raise ValidationError(
            f"brute force refused: {len(candidates)} candidates exceeds the guard of 8"
        )
    if max_positions > 5:
        raise ValidationError(
            f"brute force refused: max_positions {max_positions} exceeds the guard of 5"
        )
    k = min(max_positions, len(candidates), config.depth)
    ranked = sorted(candidates, key=tie_break_key)
    best_ids: tuple[str, ...] | None = None
    best_score = -1.0
    for ordering in itertools.permutations(ranked, k):
        score = err_iaa(ordering, dist, config)
        if score > best_score:
            best_score = score
            best_ids = tuple(c.doc_id for c in ordering)
    assert best_ids is not None
    return best_ids, best_score
