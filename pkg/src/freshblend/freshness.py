"""Binary document freshness under a fixed time window, the derived
fresh ranking, and burst profiling of query logs."""

from dataclasses import dataclass, replace

import numpy as np

from .corpus import Ranking
from .errors import ConfigError, ParseError, UnknownQueryError, ValidationError
from .fileio import atomic_write_text, fmt

#: 3 days, in seconds.
DEFAULT_WINDOW_SECONDS = 259_200


@dataclass(frozen=True)
class FreshnessWindow:
    window_seconds: int = DEFAULT_WINDOW_SECONDS

    def __post_init__(self):
        if self.window_seconds <= 0:
            raise ConfigError(
                f"window_seconds must be positive, got {self.window_seconds}"
            )


DEFAULT_WINDOW = FreshnessWindow()


def is_fresh(doc_timestamp: int, query_time: int, window: FreshnessWindow = DEFAULT_WINDOW) -> bool:
    """True when the document's age at query time is within the window.

    The boundary is inclusive; future-dated documents (negative age) count
    as fresh rather than erroring, tolerating clock skew.
    """
    return query_time - doc_timestamp <= window.window_seconds


def derive_fresh_ranking(
    ranking: Ranking, query_time: int, window: FreshnessWindow = DEFAULT_WINDOW
) -> Ranking:
    """Drop stale entries, keep relative order, renumber ranks from 1."""
    kept = [e for e in ranking.entries if is_fresh(e.timestamp, query_time, window)]
    return Ranking(tuple(replace(e, rank=i + 1) for i, e in enumerate(kept)))


@dataclass(frozen=True)
class BurstProfile:
    """Per-query daily volume shares since each query's first day.

    `average[d]` is the mean share on day d+1 across all profiled queries,
    counting queries whose activity has already ended as zero share.
    """

    per_query: dict[str, np.ndarray]
    average: np.ndarray

    def shares(self, query_id: str) -> np.ndarray:
        if query_id not in self.per_query:
            raise UnknownQueryError(f"no burst data for query {query_id!r}")
        return self.per_query[query_id]


def burst_profile(log) -> BurstProfile:
    """Profile day-by-day volume shares from a query log.

    `log` holds (query_id, day_index) pairs or (query_id, day_index, count)
    triples; day indices are integers on any common scale.  Each query's
    shares cover day 1 (its first observed day) through its last observed
    day and sum to 1.
    """
    counts: dict[str, dict[int, float]] = {}
    for row in log:
        if len(row) == 2:
            qid, day = row
            count = 1
        else:
            qid, day, count = row
        if count < 0:
            raise ValidationError(f"negative count for query {qid!r}")
        counts.setdefault(qid, {}).setdefault(int(day), 0.0)
        counts[qid][int(day)] += count

    per_query: dict[str, np.ndarray] = {}
    max_days = 0
    for qid, by_day in counts.items():
        total = sum(by_day.values())
        if total <= 0:
            raise ValidationError(f"query {qid!r} has no volume in the log")
        first = min(by_day)
        last = max(by_day)
        span = last - first + 1
        shares = np.zeros(span, dtype=np.float64)
        for day, count in by_day.items():
            shares[day - first] = count / total
        per_query[qid] = shares
        max_days = max(max_days, span)

    if not per_query:
        return BurstProfile({}, np.zeros(0, dtype=np.float64))
    stacked = np.zeros((len(per_query), max_days), dtype=np.float64)
    for i, shares in enumerate(per_query.values()):
        stacked[i, : shares.size] = shares
    return BurstProfile(per_query, stacked.mean(axis=0))


def load_query_log(path: str) -> list[tuple[str, int, int]]:
    """Read a query log TSV: query_id<TAB>day_index<TAB>count."""
    rows: list[tuple[str, int, int]] = []
    with open(path, encoding="utf-8") as handle:
        for number, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ParseError(f"expected 3 fields, got {len(fields)}", path, number)
            try:
                day = int(fields[1])
                count = int(fields[2])
            except ValueError:
                raise ParseError("day_index and count must be integers", path, number) from None
            if count < 0:
                raise ParseError(f"negative count {count}", path, number)
            rows.append((fields[0], day, count))
    return rows


def write_burst_csv(profile: BurstProfile, path: str) -> None:
    """Emit the per-query shares as CSV rows query_id,day,share."""
    lines = ["# freshblend.burst.v1", "query_id,day,share"]
    for qid, shares in profile.per_query.items():
        for day, share in enumerate(shares, start=1):
            lines.append(f"{qid},{day},{fmt(share)}")
    atomic_write_text(path, "".join(line + "\n" for line in lines))
