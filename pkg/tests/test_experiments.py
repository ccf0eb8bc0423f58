"""Experiment harness: sweep, bucket comparison, click simulation,
A/B test, and the Mann-Whitney implementation."""

import itertools

import numpy as np
import pytest
import scipy.stats

from freshblend.calibration import CalibratedCandidate
from freshblend.corpus import (
    DocEntry,
    GeneratorConfig,
    JUDGED_POOL_MIXTURE,
    Ranking,
    generate_corpus,
)
from freshblend.errors import ValidationError
from freshblend.experiments import (
    Bucket,
    ClickLogRecord,
    DEFAULT_SWEEP_GRID,
    STRATEGIES,
    ab_test,
    blend_policy,
    bucket_comparison,
    initial_ranking_policy,
    mann_whitney_u,
    simulate_clicks,
    simulate_clicks_many,
    sweep_estimate,
    write_ab_report,
    write_buckets_csv,
    write_sweep_csv,
)
from freshblend.metric import BreakExponent, IntentDistribution, MetricConfig, err_iaa


def page_of(pairs):
    return [
        CalibratedCandidate(f"d{i}", r_any, r_fresh, ordinary_rank=i + 1)
        for i, (r_any, r_fresh) in enumerate(pairs)
    ]


def small_corpus(seed=0, n=120, mixture=None):
    config = GeneratorConfig(
        n_queries=n,
        ranking_depth=15,
        grade_mixture=dict(JUDGED_POOL_MIXTURE if mixture is None else mixture),
    )
    return generate_corpus(config, seed=seed)


# ---------------------------------------------------------------------------
# Mann-Whitney
# ---------------------------------------------------------------------------


def _u_of(a, b):
    u = 0.0
    for x in a:
        for y in b:
            if x > y:
                u += 1.0
            elif x == y:
                u += 0.5
    return u


def exact_two_sided_p(a, b):
    """Enumerate every assignment of the pooled values to the two groups."""
    pooled = list(a) + list(b)
    n_a = len(a)
    u_obs = _u_of(a, b)
    us = []
    for subset in itertools.combinations(range(len(pooled)), n_a):
        chosen = set(subset)
        group_a = [pooled[i] for i in chosen]
        group_b = [pooled[i] for i in range(len(pooled)) if i not in chosen]
        us.append(_u_of(group_a, group_b))
    lower = sum(1 for u in us if u <= u_obs) / len(us)
    upper = sum(1 for u in us if u >= u_obs) / len(us)
    return min(1.0, 2.0 * min(lower, upper))


class TestMannWhitney:
    def test_separated_samples_fixture(self):
        u, _ = mann_whitney_u([1, 2, 3], [4, 5, 6])
        assert u == 0.0
        assert exact_two_sided_p([1, 2, 3], [4, 5, 6]) == pytest.approx(0.1, abs=1e-12)

    def test_identical_multisets(self):
        a = [1, 2, 2, 5]
        u, p = mann_whitney_u(a, a)
        assert u == len(a) ** 2 / 2
        assert p == 1.0

    def test_swapping_samples_mirrors_u_and_keeps_p(self):
        rng = np.random.default_rng(1)
        a = rng.integers(0, 5, 20).astype(float)
        b = rng.integers(0, 5, 30).astype(float)
        u_ab, p_ab = mann_whitney_u(a, b)
        u_ba, p_ba = mann_whitney_u(b, a)
        assert u_ab + u_ba == len(a) * len(b)
        assert p_ab == pytest.approx(p_ba, abs=1e-12)

    def test_matches_scipy_asymptotic_with_ties(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            a = rng.integers(0, 4, int(rng.integers(5, 40))).astype(float)
            b = rng.integers(0, 4, int(rng.integers(5, 40))).astype(float)
            u, p = mann_whitney_u(a, b)
            ref = scipy.stats.mannwhitneyu(a, b, alternative="two-sided",
                                           method="asymptotic", use_continuity=True)
            assert u == pytest.approx(float(ref.statistic), abs=1e-9)
            assert p == pytest.approx(float(ref.pvalue), abs=1e-9)

    def test_empty_sample_rejected(self):
        with pytest.raises(ValidationError):
            mann_whitney_u([], [1.0])


# ---------------------------------------------------------------------------
# click simulation
# ---------------------------------------------------------------------------


class TestSimulateClicks:
    def test_unsatisfiable_page_is_abandoned(self):
        page = page_of([(0.0, 0.0)] * 5)
        record = simulate_clicks(page, IntentDistribution(0.5, 0.5), seed=3)
        assert record.abandoned
        assert record.clicked_positions == ()
        assert record.first_click_time_s is None

    def test_certain_top_result_clicks_immediately_under_shifted_exponent(self):
        page = page_of([(1.0, 1.0), (0.5, 0.5)])
        config = MetricConfig(break_exponent=BreakExponent.POSITION_MINUS_ONE)
        for seed in range(25):
            record = simulate_clicks(page, IntentDistribution(0.5, 0.5), config, seed=seed)
            assert record.clicked_positions == (1,)
            assert record.first_click_time_s is not None
            assert record.first_click_time_s >= 0.5

    def test_record_invariant_enforced(self):
        with pytest.raises(ValidationError):
            ClickLogRecord(Bucket.CONTROL, "q", (), 1.0, abandoned=False)
        with pytest.raises(ValidationError):
            ClickLogRecord(Bucket.CONTROL, "q", (0,), 1.0, abandoned=False)

    def test_same_seed_reproduces_the_record(self):
        page = page_of([(0.5, 0.2), (0.4, 0.4), (0.1, 0.0)])
        a = simulate_clicks(page, IntentDistribution(0.3, 0.7), seed=11)
        b = simulate_clicks(page, IntentDistribution(0.3, 0.7), seed=11)
        assert a == b

    def test_satisfaction_frequency_tracks_the_metric(self):
        page = page_of([(0.6, 0.1), (0.3, 0.5), (0.2, 0.0), (0.1, 0.7)])
        dist = IntentDistribution.from_p_fresh(0.4)
        config = MetricConfig()
        n = 40_000
        positions = simulate_clicks_many(page, dist, config, n=n, seed=5)
        analytic = err_iaa(page, dist, config)
        frequency = float(np.mean(positions > 0))
        se = np.sqrt(analytic * (1 - analytic) / n)
        assert abs(frequency - analytic) <= 3 * se

    def test_abandonment_of_certain_click_page_reflects_continuation(self):
        # a certain first result under the unshifted exponent is reached
        # with probability p_break
        page = page_of([(1.0, 1.0)])
        config = MetricConfig(p_break=0.85)
        n = 40_000
        positions = simulate_clicks_many(page, IntentDistribution(0.0, 1.0), config, n=n, seed=6)
        abandonment = float(np.mean(positions == 0))
        se = np.sqrt(0.85 * 0.15 / n)
        assert abs(abandonment - 0.15) <= 3 * se

    def test_empty_page_rejected(self):
        with pytest.raises(ValidationError):
            simulate_clicks_many([], IntentDistribution(0.5, 0.5), n=10)


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


class TestSweep:
    def test_default_grid_matches_plot_abscissae(self):
        assert DEFAULT_SWEEP_GRID[0] == 0.0
        assert DEFAULT_SWEEP_GRID[-1] == 0.95
        assert len(DEFAULT_SWEEP_GRID) == 20
        steps = {round(b - a, 2) for a, b in zip(DEFAULT_SWEEP_GRID, DEFAULT_SWEEP_GRID[1:])}
        assert steps == {0.05}

    def test_zero_need_corpus_peaks_at_zero_estimate(self):
        corpus = small_corpus(seed=7, n=80, mixture={0.0: 1.0})
        curves = sweep_estimate(corpus, grid=(0.0, 0.3, 0.6, 0.9))
        assert len(curves) == 1
        assert curves[0].true_grade == 0.0
        assert curves[0].best_p_hat() == 0.0

    def test_refuses_a_corpus_without_latents(self):
        corpus = small_corpus(seed=8, n=5)
        bare = {
            qid: Ranking(tuple(
                DocEntry(e.doc_id, e.rank, e.timestamp) for e in ranking.entries
            ))
            for qid, ranking in corpus.rankings.items()
        }
        stripped = type(corpus)(corpus.queries, bare, corpus.judgments, corpus.features)
        with pytest.raises(ValidationError, match="latent"):
            sweep_estimate(stripped, grid=(0.0, 0.5))

    def test_true_estimate_sits_on_the_curve_plateau(self):
        # blending with the exact true probability must score within 0.02
        # of the best grid point of that grade's curve
        corpus = small_corpus(seed=19, n=600)
        for curve in sweep_estimate(corpus):
            values = dict(curve.points)
            best = max(values.values())
            assert best - values[curve.true_grade] <= 0.02

    def test_curves_cover_every_grade_present(self, tmp_path):
        corpus = small_corpus(seed=9, n=200)
        curves = sweep_estimate(corpus, grid=(0.0, 0.5, 0.95))
        grades = {q.true_grade for q in corpus.queries.values()}
        assert {c.true_grade for c in curves} == grades
        out = tmp_path / "sweep.csv"
        write_sweep_csv(curves, str(out))
        lines = out.read_text().splitlines()
        assert lines[0] == "# freshblend.sweep.v1"
        assert lines[1] == "true_grade,p_hat,err_iaa"
        assert len(lines) == 2 + 3 * len(curves)


# ---------------------------------------------------------------------------
# bucket comparison
# ---------------------------------------------------------------------------


class TestBucketComparison:
    def test_reports_all_strategies_and_partitions_unit_interval(self, tmp_path):
        corpus = small_corpus(seed=10, n=160)
        report = bucket_comparison(corpus, seed=3)
        assert len(report.rows) == 10
        assert report.rows[0].lo == 0.0
        assert report.rows[-1].hi == 1.0
        for row in report.rows:
            assert set(row.means) == set(STRATEGIES)
            if row.n == 0:
                assert all(mean is None for mean in row.means.values())
        populated = [row for row in report.rows if row.n]
        assert sum(row.n for row in populated) == len(corpus.queries)
        for row in populated:
            assert row.means["ideal_diversified"] >= row.means["learned_diversified"] - 0.01
        out = tmp_path / "buckets.csv"
        write_buckets_csv(report, str(out))
        lines = out.read_text().splitlines()
        assert lines[1] == "bucket_lo,bucket_hi,strategy,mean_err_iaa,n"
        assert len(lines) == 2 + 10 * len(STRATEGIES)

    def test_needs_at_least_two_queries(self):
        corpus = small_corpus(seed=11, n=1)
        with pytest.raises(ValidationError):
            bucket_comparison(corpus)

    def test_deterministic_in_seed(self):
        corpus = small_corpus(seed=12, n=100)
        a = bucket_comparison(corpus, seed=5)
        b = bucket_comparison(corpus, seed=5)
        assert a == b


# ---------------------------------------------------------------------------
# A/B test
# ---------------------------------------------------------------------------


class TestAbTest:
    def test_null_experiment_shows_no_significant_differences(self):
        corpus = small_corpus(seed=13, n=150)
        report = ab_test(corpus, initial_ranking_policy(), initial_ranking_policy(),
                         n_queries=4000, seed=17)
        for name, comparison in report.metrics.items():
            assert comparison.p_value is not None
            assert comparison.p_value > 0.01, name

    def test_metric_ranges(self):
        corpus = small_corpus(seed=14, n=150)
        grades = {qid: q.true_grade for qid, q in corpus.queries.items()}
        report = ab_test(corpus, initial_ranking_policy(), blend_policy(grades),
                         n_queries=4000, seed=18)
        for key in ("abandonment_rate", "ctr_position_1", "ctr_position_2"):
            for value in (report.metrics[key].control, report.metrics[key].treatment):
                assert 0.0 <= value <= 100.0
        assert report.metrics["first_click_position"].control >= 1.0
        assert report.metrics["first_click_position"].treatment >= 1.0

    def test_deterministic_in_seed(self):
        corpus = small_corpus(seed=15, n=100)
        grades = {qid: q.true_grade for qid, q in corpus.queries.items()}
        a = ab_test(corpus, initial_ranking_policy(), blend_policy(grades),
                    n_queries=2000, seed=4)
        b = ab_test(corpus, initial_ranking_policy(), blend_policy(grades),
                    n_queries=2000, seed=4)
        assert a == b

    def test_too_few_queries_rejected(self):
        corpus = small_corpus(seed=16, n=20)
        with pytest.raises(ValidationError):
            ab_test(corpus, initial_ranking_policy(), initial_ranking_policy(),
                    n_queries=1, seed=0)

    def test_missing_estimate_for_a_query_rejected(self):
        corpus = small_corpus(seed=17, n=20)
        with pytest.raises(ValidationError, match="estimate"):
            ab_test(corpus, initial_ranking_policy(), blend_policy({}),
                    n_queries=100, seed=0)

    def test_report_serializes_without_nan(self, tmp_path):
        corpus = small_corpus(seed=18, n=80)
        report = ab_test(corpus, initial_ranking_policy(), initial_ranking_policy(),
                         n_queries=500, seed=2)
        out = tmp_path / "abreport.json"
        write_ab_report(report, str(out))
        import json

        document = json.loads(out.read_text())
        assert document["schema_version"] == 1
        assert set(document["metrics"]) == {
            "abandonment_rate", "time_to_first_click", "ctr_position_1",
            "ctr_position_2", "first_click_position",
        }
