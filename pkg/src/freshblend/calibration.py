"""Rank-to-probability calibration and candidate assembly.

Retrieval scores vary wildly across queries, so satisfaction
probabilities are read off a position-prior table instead: the
probability of encountering a relevant document at each rank of an
ideal ranking.  The shipped default table is a configurable stand-in
(head 0.60, tail 0.10), not a measured value.
"""

from dataclasses import dataclass

from .corpus import Ranking
from .errors import ValidationError
from .freshness import DEFAULT_WINDOW, FreshnessWindow, is_fresh

DEFAULT_PRIORS = (0.60, 0.50, 0.42, 0.35, 0.29, 0.24, 0.20, 0.16, 0.13, 0.10)


@dataclass(frozen=True)
class PositionPriorTable:
    priors: tuple[float, ...] = DEFAULT_PRIORS

    def __post_init__(self):
        if not self.priors:
            raise ValidationError("prior table must be non-empty")
        previous = 1.0
        for i, p in enumerate(self.priors):
            if not 0.0 < p < 1.0:
                raise ValidationError(f"prior at rank {i + 1} out of (0,1): {p!r}")
            if p > previous:
                raise ValidationError("priors must be non-increasing with rank")
            previous = p


DEFAULT_PRIOR_TABLE = PositionPriorTable()


def position_prior(rank: int, table: PositionPriorTable = DEFAULT_PRIOR_TABLE) -> float:
    """Prior at `rank`; ranks beyond the table clamp to its last entry."""
    if rank < 1:
        raise ValidationError(f"rank must be >= 1, got {rank}")
    priors = table.priors
    return priors[rank - 1] if rank <= len(priors) else priors[-1]


@dataclass(frozen=True)
class CalibratedCandidate:
    """A document with per-intent satisfaction probabilities."""

    doc_id: str
    r_any: float
    r_fresh: float
    ordinary_rank: int | None = None
    fresh_rank: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.r_any <= 1.0:
            raise ValidationError(f"r_any out of [0,1]: {self.r_any!r}")
        if not 0.0 <= self.r_fresh <= 1.0:
            raise ValidationError(f"r_fresh out of [0,1]: {self.r_fresh!r}")
        if self.ordinary_rank is None and self.fresh_rank is None:
            raise ValidationError(f"candidate {self.doc_id!r} carries no rank")


def build_candidates(
    ordinary: Ranking,
    fresh: Ranking,
    table: PositionPriorTable = DEFAULT_PRIOR_TABLE,
    query_time: int = 0,
    window: FreshnessWindow = DEFAULT_WINDOW,
    depth: int = 10,
) -> list[CalibratedCandidate]:
    """Assemble the candidate pool from the two rankings.

    The pool is the union of the top-`depth` of both rankings.  A
    document inside the ordinary top page calibrates r_any from its
    ordinary rank; one promoted purely through the fresh ranking falls
    back to its fresh rank.  r_fresh is the prior of the fresh rank for
    fresh documents inside the fresh top page and 0 otherwise.

    Output order: ordinary-page candidates by ordinary rank, then
    fresh-only candidates by fresh rank, which makes assembly
    independent of input iteration order.
    """
    if depth < 1:
        raise ValidationError(f"depth must be >= 1, got {depth}")

    ordinary_ranks = {e.doc_id: e.rank for e in ordinary.entries}
    fresh_ranks = {e.doc_id: e.rank for e in fresh.entries}

    timestamps: dict[str, int] = {}
    for entry in (*ordinary.entries, *fresh.entries):
        known = timestamps.get(entry.doc_id)
        if known is not None and known != entry.timestamp:
            raise ValidationError(
                f"doc {entry.doc_id!r} has conflicting timestamps across rankings"
            )
        timestamps[entry.doc_id] = entry.timestamp

    ordinary_top = [e for e in ordinary.entries[:depth]]
    fresh_top = [e for e in fresh.entries[:depth]]
    in_ordinary_top = {e.doc_id for e in ordinary_top}

    def make(doc_id: str) -> CalibratedCandidate:
        ord_rank = ordinary_ranks.get(doc_id)
        frs_rank = fresh_ranks.get(doc_id)
        if doc_id in in_ordinary_top:
            r_any = position_prior(ord_rank, table)
        else:
            r_any = position_prior(frs_rank, table)
        fresh_doc = is_fresh(timestamps[doc_id], query_time, window)
        if fresh_doc and frs_rank is not None and frs_rank <= depth:
            r_fresh = position_prior(frs_rank, table)
        else:
            r_fresh = 0.0
        return CalibratedCandidate(doc_id, r_any, r_fresh, ord_rank, frs_rank)

    pool = [make(e.doc_id) for e in ordinary_top]
    pool.extend(make(e.doc_id) for e in fresh_top if e.doc_id not in in_ordinary_top)
    return pool
