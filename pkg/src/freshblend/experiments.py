"""Offline sweeps, the four-strategy bucket comparison, and a simulated
A/B test driven by a cascade click model with Mann-Whitney significance
testing.

Evaluation convention: pages are always scored against the corpus's
latent per-intent relevances under the query's true intent distribution
(p_fresh = true grade), regardless of what probability the blender was
given.  That separation is what the estimate sweep measures: how much
quality survives when the blending probability is wrong.

Every experiment is deterministic given (corpus seed, experiment seed).
Randomness is pre-drawn into arrays before entering the kernels, one
block per simulated impression, so per-query simulations are independent
and the result does not depend on the kernel backend.
"""

import enum
import json
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import kernels
from .calibration import (
    DEFAULT_PRIOR_TABLE,
    CalibratedCandidate,
    PositionPriorTable,
    build_candidates,
)
from .corpus import Corpus
from .errors import ValidationError
from .fileio import atomic_write_text, fmt
from .freshness import DEFAULT_WINDOW, FreshnessWindow, derive_fresh_ranking
from .metric import DEFAULT_METRIC_CONFIG, IntentDistribution, MetricConfig
from .diversifier import candidate_arrays
from .recency_classifier import GbrtHyperparams, predict_batch, train_gbrt

DEFAULT_SWEEP_GRID = tuple(round(0.05 * i, 2) for i in range(20))

STRATEGIES = ("ideal_diversified", "learned_diversified", "initial_only", "fresh_only")

METRIC_NAMES = (
    "abandonment_rate",
    "time_to_first_click",
    "ctr_position_1",
    "ctr_position_2",
    "first_click_position",
)

_CLICK_TIME_BASE_S = 2.0
_CLICK_TIME_PER_POSITION_S = 1.5
_CLICK_TIME_NOISE_CLIP_S = 1.5


class Bucket(enum.Enum):
    CONTROL = "control"
    TREATMENT = "treatment"


@dataclass(frozen=True)
class ClickLogRecord:
    bucket: Bucket
    query_id: str
    clicked_positions: tuple[int, ...]
    first_click_time_s: float | None
    abandoned: bool

    def __post_init__(self):
        if self.abandoned != (not self.clicked_positions):
            raise ValidationError("abandoned must mirror an empty click list")
        for pos in self.clicked_positions:
            if pos < 1:
                raise ValidationError(f"click position must be >= 1, got {pos}")


@dataclass(frozen=True)
class SweepCurve:
    true_grade: float
    points: tuple[tuple[float, float], ...]

    def best_p_hat(self) -> float:
        return max(self.points, key=lambda point: point[1])[0]

    def value_at(self, p_hat: float) -> float:
        for point, value in self.points:
            if point == p_hat:
                return value
        raise ValidationError(f"p_hat {p_hat!r} not on the sweep grid")


@dataclass(frozen=True)
class BucketRow:
    lo: float
    hi: float
    n: int
    means: dict[str, float | None]


@dataclass(frozen=True)
class BucketReport:
    rows: tuple[BucketRow, ...]


@dataclass(frozen=True)
class MetricComparison:
    control: float | None
    treatment: float | None
    u_statistic: float | None
    p_value: float | None


@dataclass(frozen=True)
class AbReport:
    n_queries: int
    metrics: dict[str, MetricComparison]


# ---------------------------------------------------------------------------
# per-query preparation shared by all experiments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PreparedQuery:
    """One query's candidate pool as kernel-ready arrays.

    cal_* hold the calibrated probabilities the blender sees; lat_* hold
    the latent ground truth used for evaluation and click simulation.
    initial_order / fresh_order index the candidates forming the
    unmodified ordinary page and the fresh-only page.
    """

    query_id: str
    true_grade: float | None
    volume: int
    candidates: tuple[CalibratedCandidate, ...]
    cal_fresh: np.ndarray
    cal_any: np.ndarray
    tie_rank: np.ndarray
    lat_fresh: np.ndarray
    lat_any: np.ndarray
    initial_order: np.ndarray
    fresh_order: np.ndarray

    def blend_order(self, p_fresh: float, config: MetricConfig) -> np.ndarray:
        dist = IntentDistribution.from_p_fresh(float(p_fresh))
        order, _ = kernels.greedy_blend(
            self.cal_fresh,
            self.cal_any,
            self.tie_rank,
            dist.p_fresh,
            dist.p_any,
            config.p_break,
            config.break_exponent.shift,
            config.depth,
        )
        return order


Policy = Callable[[PreparedQuery, MetricConfig], np.ndarray]


def prepare_queries(
    corpus: Corpus,
    metric_config: MetricConfig = DEFAULT_METRIC_CONFIG,
    window: FreshnessWindow = DEFAULT_WINDOW,
    table: PositionPriorTable = DEFAULT_PRIOR_TABLE,
    require_latents: bool = True,
) -> dict[str, PreparedQuery]:
    depth = metric_config.depth
    prepared: dict[str, PreparedQuery] = {}
    for qid, record in corpus.queries.items():
        ranking = corpus.rankings.get(qid)
        if ranking is None:
            raise ValidationError(f"query {qid!r} has no ranking")
        fresh = derive_fresh_ranking(ranking, record.issue_time, window)
        candidates = build_candidates(ranking, fresh, table, record.issue_time, window, depth)
        by_doc = {entry.doc_id: entry for entry in ranking.entries}

        m = len(candidates)
        lat_fresh = np.zeros(m, dtype=np.float64)
        lat_any = np.zeros(m, dtype=np.float64)
        for i, candidate in enumerate(candidates):
            entry = by_doc[candidate.doc_id]
            if entry.latent_rel_any is None:
                if require_latents:
                    raise ValidationError(
                        f"query {qid!r} doc {candidate.doc_id!r} lacks latent relevance; "
                        "experiments need latent ground truth"
                    )
            else:
                lat_any[i] = entry.latent_rel_any
            if entry.latent_rel_fresh is not None:
                lat_fresh[i] = entry.latent_rel_fresh

        cal_fresh, cal_any, tie_rank = candidate_arrays(candidates)
        n_initial = sum(1 for c in candidates if c.ordinary_rank is not None and c.ordinary_rank <= depth)
        index_by_doc = {c.doc_id: i for i, c in enumerate(candidates)}
        fresh_order = np.fromiter(
            (index_by_doc[e.doc_id] for e in fresh.entries[:depth]), dtype=np.int64
        )
        prepared[qid] = PreparedQuery(
            query_id=qid,
            true_grade=record.true_grade,
            volume=record.volume if record.volume is not None else 1,
            candidates=tuple(candidates),
            cal_fresh=cal_fresh,
            cal_any=cal_any,
            tie_rank=tie_rank,
            lat_fresh=lat_fresh,
            lat_any=lat_any,
            initial_order=np.arange(n_initial, dtype=np.int64),
            fresh_order=fresh_order,
        )
    return prepared


# ---------------------------------------------------------------------------
# result-page policies
# ---------------------------------------------------------------------------


def initial_ranking_policy() -> Policy:
    def policy(pq: PreparedQuery, config: MetricConfig) -> np.ndarray:
        return pq.initial_order[: config.depth]

    return policy


def fresh_only_policy() -> Policy:
    def policy(pq: PreparedQuery, config: MetricConfig) -> np.ndarray:
        return pq.fresh_order[: config.depth]

    return policy


def blend_policy(p_fresh_by_query: Mapping[str, float]) -> Policy:
    def policy(pq: PreparedQuery, config: MetricConfig) -> np.ndarray:
        if pq.query_id not in p_fresh_by_query:
            raise ValidationError(f"no recency-need estimate for query {pq.query_id!r}")
        return pq.blend_order(p_fresh_by_query[pq.query_id], config)

    return policy


def ideal_blend_policy() -> Policy:
    def policy(pq: PreparedQuery, config: MetricConfig) -> np.ndarray:
        if pq.true_grade is None:
            raise ValidationError(f"query {pq.query_id!r} has no true grade")
        return pq.blend_order(pq.true_grade, config)

    return policy


def _page_matrices(
    prepared: Sequence[PreparedQuery], orders: Sequence[np.ndarray], depth: int
) -> tuple[np.ndarray, np.ndarray]:
    n = len(prepared)
    lat_fresh = np.zeros((n, depth), dtype=np.float64)
    lat_any = np.zeros((n, depth), dtype=np.float64)
    for i, (pq, order) in enumerate(zip(prepared, orders)):
        k = min(order.size, depth)
        lat_fresh[i, :k] = pq.lat_fresh[order[:k]]
        lat_any[i, :k] = pq.lat_any[order[:k]]
    return lat_fresh, lat_any


def _true_err(
    prepared: Sequence[PreparedQuery],
    orders: Sequence[np.ndarray],
    config: MetricConfig,
) -> np.ndarray:
    lat_fresh, lat_any = _page_matrices(prepared, orders, config.depth)
    p_fresh = np.fromiter((pq.true_grade for pq in prepared), dtype=np.float64)
    return kernels.err_iaa_batch(
        lat_fresh, lat_any, p_fresh, 1.0 - p_fresh, config.p_break,
        config.break_exponent.shift,
    )


def _require_grades(prepared: dict[str, PreparedQuery]) -> None:
    for pq in prepared.values():
        if pq.true_grade is None:
            raise ValidationError(f"query {pq.query_id!r} has no true grade")


# ---------------------------------------------------------------------------
# estimate sweep
# ---------------------------------------------------------------------------


def sweep_estimate(
    corpus: Corpus,
    grid: Sequence[float] | None = None,
    metric_config: MetricConfig = DEFAULT_METRIC_CONFIG,
    window: FreshnessWindow = DEFAULT_WINDOW,
    table: PositionPriorTable = DEFAULT_PRIOR_TABLE,
) -> list[SweepCurve]:
    """Blend every query with each estimate on the grid and score the
    result under the true intent distribution.

    Returns one curve per true grade present in the corpus, each point
    the mean score of that grade's queries at one estimate.
    """
    grid = tuple(DEFAULT_SWEEP_GRID if grid is None else grid)
    for p_hat in grid:
        if not 0.0 <= p_hat <= 1.0:
            raise ValidationError(f"grid value out of [0,1]: {p_hat!r}")
    prepared = prepare_queries(corpus, metric_config, window, table)
    _require_grades(prepared)
    rows = list(prepared.values())
    grades = sorted({pq.true_grade for pq in rows})
    grade_masks = {g: np.asarray([pq.true_grade == g for pq in rows]) for g in grades}

    points: dict[float, list[tuple[float, float]]] = {g: [] for g in grades}
    for p_hat in grid:
        orders = [pq.blend_order(p_hat, metric_config) for pq in rows]
        errs = _true_err(rows, orders, metric_config)
        for g in grades:
            points[g].append((p_hat, float(errs[grade_masks[g]].mean())))
    return [SweepCurve(g, tuple(points[g])) for g in grades]


# ---------------------------------------------------------------------------
# four-strategy bucket comparison under two-fold cross-validation
# ---------------------------------------------------------------------------


def bucket_comparison(
    corpus: Corpus,
    hyperparams: GbrtHyperparams = GbrtHyperparams(),
    metric_config: MetricConfig = DEFAULT_METRIC_CONFIG,
    seed: int = 0,
    window: FreshnessWindow = DEFAULT_WINDOW,
    table: PositionPriorTable = DEFAULT_PRIOR_TABLE,
) -> BucketReport:
    """Bucket queries by true recency need (width 0.1) and average the
    true-distribution score of four pages per query: blend with the true
    grade, blend with the held-out classifier estimate, the unmodified
    initial page, and the fresh-only page.

    The classifier estimates come from two-fold cross-validation: the
    queries are split in half, each half is scored by a model trained on
    the other.
    """
    prepared = prepare_queries(corpus, metric_config, window, table)
    _require_grades(prepared)
    qids = list(prepared)
    if len(qids) < 2:
        raise ValidationError("bucket comparison needs at least 2 queries")
    for qid in qids:
        if qid not in corpus.judgments:
            raise ValidationError(f"query {qid!r} has no judgment to train on")
        if qid not in corpus.features.rows:
            raise ValidationError(f"query {qid!r} has no feature vector")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(qids))
    half = len(qids) // 2
    folds = (perm[:half], perm[half:])

    x = corpus.features.matrix(qids)
    y = np.asarray([corpus.judgments[qid].consensus_grade for qid in qids])
    p_hat = np.empty(len(qids), dtype=np.float64)
    for fold_index, test_idx in enumerate(folds):
        train_idx = folds[1 - fold_index]
        dataset = [(x[i], float(y[i])) for i in train_idx]
        model = train_gbrt(dataset, hyperparams, seed=seed + fold_index,
                           feature_names=corpus.features.names)
        p_hat[test_idx] = predict_batch(model, x[test_idx])

    rows = [prepared[qid] for qid in qids]
    orders = {
        "ideal_diversified": [pq.blend_order(pq.true_grade, metric_config) for pq in rows],
        "learned_diversified": [
            pq.blend_order(float(p_hat[i]), metric_config) for i, pq in enumerate(rows)
        ],
        "initial_only": [pq.initial_order for pq in rows],
        "fresh_only": [pq.fresh_order for pq in rows],
    }
    errs = {name: _true_err(rows, strategy_orders, metric_config)
            for name, strategy_orders in orders.items()}

    bucket_index = np.asarray([min(int(pq.true_grade * 10), 9) for pq in rows])
    report_rows = []
    for b in range(10):
        mask = bucket_index == b
        n = int(mask.sum())
        means: dict[str, float | None] = {}
        for name in STRATEGIES:
            means[name] = float(errs[name][mask].mean()) if n else None
        report_rows.append(BucketRow(lo=round(b / 10, 1), hi=round((b + 1) / 10, 1), n=n, means=means))
    return BucketReport(tuple(report_rows))


# ---------------------------------------------------------------------------
# cascade click simulation
# ---------------------------------------------------------------------------


def _page_vectors(page: Sequence[CalibratedCandidate], depth: int):
    lat_fresh = np.zeros(depth, dtype=np.float64)
    lat_any = np.zeros(depth, dtype=np.float64)
    k = min(len(page), depth)
    for i in range(k):
        lat_fresh[i] = page[i].r_fresh
        lat_any[i] = page[i].r_any
    return lat_fresh, lat_any


def simulate_clicks(
    page: Sequence[CalibratedCandidate],
    dist: IntentDistribution,
    config: MetricConfig = DEFAULT_METRIC_CONFIG,
    seed: int = 0,
    bucket: Bucket = Bucket.CONTROL,
    query_id: str = "",
) -> ClickLogRecord:
    """Simulate one user on a page whose candidates carry per-intent
    satisfaction probabilities.

    The user samples an intent from `dist`, scans top-down, may abandon
    before examining each position (matching the discount convention) and
    clicks-and-stops at an examined position with that position's
    probability.  The page's satisfaction probability under this model
    equals its metric score.
    """
    positions = simulate_clicks_many(page, dist, config, n=1, seed=seed)
    pos = int(positions[0])
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    noise = float(np.clip(rng.normal(0.0, 1.0), -_CLICK_TIME_NOISE_CLIP_S, _CLICK_TIME_NOISE_CLIP_S))
    if pos == 0:
        return ClickLogRecord(bucket, query_id, (), None, True)
    time_s = _CLICK_TIME_BASE_S + _CLICK_TIME_PER_POSITION_S * (pos - 1) + noise
    return ClickLogRecord(bucket, query_id, (pos,), time_s, False)


def simulate_clicks_many(
    page: Sequence[CalibratedCandidate],
    dist: IntentDistribution,
    config: MetricConfig = DEFAULT_METRIC_CONFIG,
    n: int = 1,
    seed: int = 0,
) -> np.ndarray:
    """Vectorized repetition of simulate_clicks; returns the 1-based click
    position per trial, 0 when the trial ended unclicked."""
    if not page:
        raise ValidationError("page must be non-empty")
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    depth = config.depth
    lat_fresh, lat_any = _page_vectors(page, depth)
    rng = np.random.default_rng(seed)
    u_intent = rng.random(n)
    u_cont = rng.random((n, depth))
    u_click = rng.random((n, depth))
    fresh_intent = u_intent < dist.p_fresh
    r_user = np.where(fresh_intent[:, None], lat_fresh[None, :], lat_any[None, :])
    return kernels.simulate_clicks_batch(
        r_user, u_cont, u_click, config.p_break, config.break_exponent.shift
    )


# ---------------------------------------------------------------------------
# A/B simulation
# ---------------------------------------------------------------------------


def ab_test(
    corpus: Corpus,
    control_policy: Policy,
    treatment_policy: Policy,
    n_queries: int,
    seed: int = 0,
    metric_config: MetricConfig = DEFAULT_METRIC_CONFIG,
    window: FreshnessWindow = DEFAULT_WINDOW,
    table: PositionPriorTable = DEFAULT_PRIOR_TABLE,
) -> AbReport:
    """Simulate `n_queries` impressions per bucket and compare the user
    behavior metrics with Mann-Whitney tests over per-impression
    observations.

    Impressions sample queries from the corpus proportionally to their
    volume; each bucket uses an independent child seed stream.  User
    intent is drawn from the query's true grade.
    """
    if n_queries < 2:
        raise ValidationError(f"n_queries must be >= 2, got {n_queries}")
    prepared = prepare_queries(corpus, metric_config, window, table)
    _require_grades(prepared)
    rows = list(prepared.values())
    depth = metric_config.depth
    grades = np.asarray([pq.true_grade for pq in rows])
    volumes = np.asarray([pq.volume for pq in rows], dtype=np.float64)
    weights = volumes / volumes.sum()

    children = np.random.SeedSequence(seed).spawn(2)
    samples: dict[Bucket, dict[str, np.ndarray]] = {}
    for bucket, policy, child in (
        (Bucket.CONTROL, control_policy, children[0]),
        (Bucket.TREATMENT, treatment_policy, children[1]),
    ):
        orders = [policy(pq, metric_config) for pq in rows]
        pages_fresh, pages_any = _page_matrices(rows, orders, depth)
        rng = np.random.default_rng(child)
        qidx = rng.choice(len(rows), size=n_queries, p=weights)
        u_intent = rng.random(n_queries)
        u_cont = rng.random((n_queries, depth))
        u_click = rng.random((n_queries, depth))
        noise = np.clip(
            rng.normal(0.0, 1.0, n_queries),
            -_CLICK_TIME_NOISE_CLIP_S,
            _CLICK_TIME_NOISE_CLIP_S,
        )
        fresh_intent = u_intent < grades[qidx]
        r_user = np.where(fresh_intent[:, None], pages_fresh[qidx], pages_any[qidx])
        pos = kernels.simulate_clicks_batch(
            r_user, u_cont, u_click, metric_config.p_break,
            metric_config.break_exponent.shift,
        )
        clicked = pos > 0
        samples[bucket] = {
            "abandoned": (~clicked).astype(np.float64),
            "ctr1": (pos == 1).astype(np.float64),
            "ctr2": (pos == 2).astype(np.float64),
            "positions": pos[clicked].astype(np.float64),
            "times": _CLICK_TIME_BASE_S
            + _CLICK_TIME_PER_POSITION_S * (pos[clicked] - 1.0)
            + noise[clicked],
        }

    def compare(key: str, percent: bool) -> MetricComparison:
        a = samples[Bucket.CONTROL][key]
        b = samples[Bucket.TREATMENT][key]
        if a.size == 0 or b.size == 0:
            return MetricComparison(
                control=float(a.mean()) if a.size else None,
                treatment=float(b.mean()) if b.size else None,
                u_statistic=None,
                p_value=None,
            )
        scale = 100.0 if percent else 1.0
        u, p = mann_whitney_u(a, b)
        return MetricComparison(float(a.mean() * scale), float(b.mean() * scale), u, p)

    metrics = {
        "abandonment_rate": compare("abandoned", percent=True),
        "time_to_first_click": compare("times", percent=False),
        "ctr_position_1": compare("ctr1", percent=True),
        "ctr_position_2": compare("ctr2", percent=True),
        "first_click_position": compare("positions", percent=False),
    }
    return AbReport(n_queries=n_queries, metrics=metrics)


# ---------------------------------------------------------------------------
# Mann-Whitney U with midranks, tie correction and continuity correction
# ---------------------------------------------------------------------------


def _midranks(values: np.ndarray) -> np.ndarray:
    n = values.size
    order = np.argsort(values, kind="mergesort")
    sorted_values = values[order]
    boundary = np.empty(n, dtype=bool)
    boundary[0] = True
    boundary[1:] = sorted_values[1:] != sorted_values[:-1]
    run_id = np.cumsum(boundary) - 1
    run_start = np.flatnonzero(boundary)
    run_end = np.append(run_start[1:], n)
    midrank = 0.5 * (run_start + run_end - 1) + 1.0
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = midrank[run_id]
    return ranks


def mann_whitney_u(sample_a, sample_b) -> tuple[float, float]:
    """U statistic of the first sample and a two-sided p-value from the
    normal approximation with tie and continuity corrections."""
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValidationError("both samples must be non-empty")
    n_a, n_b = a.size, b.size
    n = n_a + n_b
    combined = np.concatenate([a, b])
    ranks = _midranks(combined)
    rank_sum_a = float(ranks[:n_a].sum())
    u_a = rank_sum_a - n_a * (n_a + 1) / 2.0

    mean = n_a * n_b / 2.0
    _, counts = np.unique(combined, return_counts=True)
    tie_term = float((counts.astype(np.float64) ** 3 - counts).sum())
    if n < 2:
        variance = 0.0
    else:
        variance = n_a * n_b / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if variance <= 0.0:
        return u_a, 1.0
    z = max(0.0, abs(u_a - mean) - 0.5) / math.sqrt(variance)
    return u_a, min(1.0, math.erfc(z / math.sqrt(2.0)))


# ---------------------------------------------------------------------------
# report writers
# ---------------------------------------------------------------------------


def write_sweep_csv(curves: Sequence[SweepCurve], path: str) -> None:
    lines = ["# freshblend.sweep.v1", "true_grade,p_hat,err_iaa"]
    for curve in curves:
        for p_hat, value in curve.points:
            lines.append(f"{fmt(curve.true_grade)},{fmt(p_hat)},{fmt(value)}")
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def write_buckets_csv(report: BucketReport, path: str) -> None:
    lines = ["# freshblend.buckets.v1", "bucket_lo,bucket_hi,strategy,mean_err_iaa,n"]
    for row in report.rows:
        for strategy in STRATEGIES:
            mean = row.means.get(strategy)
            cell = "" if mean is None else fmt(mean)
            lines.append(f"{fmt(row.lo)},{fmt(row.hi)},{strategy},{cell},{row.n}")
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def write_ab_report(report: AbReport, path: str) -> None:
    metrics = {}
    for name in METRIC_NAMES:
        comparison = report.metrics[name]
        metrics[name] = {
            "control": comparison.control,
            "treatment": comparison.treatment,
            "u_statistic": comparison.u_statistic,
            "p_value": comparison.p_value,
        }
    document = {
        "schema_version": 1,
        "n_queries": report.n_queries,
        "metrics": metrics,
    }
    atomic_write_text(path, json.dumps(document, indent=2, sort_keys=True) + "\n")
