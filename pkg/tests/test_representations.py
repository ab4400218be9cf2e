import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dacglitch import (
    Basis,
    RepDistribution,
    TransitionModel,
    binary_basis,
    canonical_table,
    published_basis,
    thermometer_basis,
)
from dacglitch.errors import CoverageError, IncompleteTableError
from dacglitch.mappers import TableMapper, canonical_mapping, make_mapper, memoryless_solve
from dacglitch.representations import (
    RepIndex,
    append_csv,
    enumerate_reps,
    metric_complete,
    metric_monte_carlo,
    metric_overcomplete,
    rep_count_stats,
    rep_counts,
    thermometer_metric,
)
from oracles import best_next_metric, masks_decoding_to, table_metric

weights_st = st.lists(st.integers(1, 20), min_size=1, max_size=11)


@given(weights_st, st.data())
def test_enumeration_matches_full_scan(ws, data):
    b = Basis(tuple(ws), 5)
    x = data.draw(st.integers(0, b.max_code))
    assert sorted(enumerate_reps(x, b)) == masks_decoding_to(x, b.weights)


@given(weights_st)
def test_counts_sum_to_pattern_count_when_total_fits(ws):
    b = Basis(tuple(ws), 8)
    counts = rep_counts(b)
    if b.total <= b.max_code:
        assert sum(counts) == 1 << b.length
    else:
        assert sum(counts) <= 1 << b.length


def test_rep_index_groups_agree_with_enumeration():
    b = published_basis(11)
    idx = RepIndex(b)
    for x in (0, 1, 77, 128, 254, 255):
        assert list(idx.reps(x)) == list(enumerate_reps(x, b))
    assert idx.counts.sum() == 1 << b.length
    assert list(idx.canonical()) == canonical_table(b)


def test_rep_count_stats():
    s = rep_count_stats(binary_basis(8))
    assert (s.average, s.minimum, s.maximum) == (1.0, 1, 1)
    s = rep_count_stats(published_basis(13))
    assert s.average == pytest.approx(2 ** 13 / 256)
    assert s.minimum >= 1
    with pytest.raises(CoverageError):
        rep_count_stats(Basis((2, 4, 8), 4))


def test_enumerate_limit():
    b = published_basis(13)
    assert len(enumerate_reps(128, b, limit=3)) == 3


def test_thermometer_metric_closed_form():
    assert thermometer_metric(TransitionModel.uniform(8)) == 65535 / 6
    P = TransitionModel.uniform(8).joint()
    x = np.arange(256.0)
    assert (P * (x[:, None] - x[None, :]) ** 2).sum() == pytest.approx(65535 / 6, rel=1e-12)


def test_thermometer_normalized_metric_is_one():
    th = thermometer_basis(8)
    rep = metric_complete(th, canonical_table(th))
    assert rep.normalized_metric == pytest.approx(1.0, abs=1e-12)


@given(st.integers(0, 2**31))
def test_complete_metric_matches_double_loop(seed):
    rng = np.random.default_rng(seed)
    b = Basis((1, 1, 2, 3), 3)
    table = [int(rng.choice(masks_decoding_to(x, b.weights))) for x in range(8)]
    P = rng.random((8, 8))
    P /= P.sum()
    model = TransitionModel.from_joint(P)
    assert metric_complete(b, table, model).raw_metric == pytest.approx(
        table_metric(table, b.weights, P), rel=1e-12)


def test_overcomplete_metric_small_basis_uniform():
    b = Basis((1, 1, 2), 2)
    dist = RepDistribution.uniform(b)
    P = np.full((4, 4), 1 / 16)
    got = metric_overcomplete(b, dist).raw_metric
    assert got == pytest.approx(best_next_metric(b.weights, 4, dist.probs, P), rel=1e-12)


@given(st.integers(0, 2**31))
def test_overcomplete_metric_random_models(seed):
    rng = np.random.default_rng(seed)
    b = Basis((1, 1, 2, 2, 3), 3)
    probs = {}
    for x in range(8):
        reps = masks_decoding_to(x, b.weights)
        p = rng.random(len(reps))
        probs[x] = dict(zip(reps, p / p.sum()))
    P = rng.random((8, 8))
    P /= P.sum()
    got = metric_overcomplete(b, RepDistribution(b, probs), TransitionModel.from_joint(P)).raw_metric
    assert got == pytest.approx(best_next_metric(b.weights, 8, probs, P), rel=1e-10)


def test_complete_metric_rejects_bad_tables():
    b = binary_basis(3)
    with pytest.raises(IncompleteTableError):
        metric_complete(b, list(range(7)))
    with pytest.raises(IncompleteTableError):
        metric_complete(b, [0, 1, 2, 3, 4, 5, 6, 0])


def test_monte_carlo_agrees_with_analytic_table_metric():
    b = published_basis(10)
    table = memoryless_solve(b, restarts=2)
    exact = metric_complete(b, table)
    inside = 0
    for seed in range(20):
        mc = metric_monte_carlo(b, TableMapper(table), length=50_000, seed=seed)
        inside += abs(mc.raw_metric - exact.raw_metric) <= mc.ci_halfwidth
    # a 95% interval should cover the exact value in most of 20 independent runs
    assert inside >= 16
    # transitions are counted inside fixed-size blocks only
    assert mc.samples == 50_000 - 5


def test_monte_carlo_shard_and_worker_invariance():
    b = published_basis(9)
    m = make_mapper("viterbi", b)
    one = metric_monte_carlo(b, m, length=35_000, seed=5, shards=1)
    three = metric_monte_carlo(b, m, length=35_000, seed=5, shards=3)
    two_workers = metric_monte_carlo(b, m, length=35_000, seed=5, shards=2, workers=2)
    assert one.raw_metric == three.raw_metric == two_workers.raw_metric
    assert one.ci_halfwidth == three.ci_halfwidth


def test_monte_carlo_interval_shrinks_with_length():
    b = published_basis(9)
    m = TableMapper(canonical_mapping(b), "canonical")
    short = metric_monte_carlo(b, m, length=100_000, seed=1)
    long = metric_monte_carlo(b, m, length=400_000, seed=1)
    assert long.ci_halfwidth / short.ci_halfwidth == pytest.approx(0.5, rel=0.1)


def test_report_serialization(tmp_path):
    b = published_basis(9)
    rep = metric_complete(b, canonical_table(b), mapper="canonical")
    d = json.loads(rep.dumps())
    assert d["raw_metric"] == rep.raw_metric and d["basis"] == list(b.weights)
    path = tmp_path / "m.csv"
    append_csv(path, [rep])
    append_csv(path, [rep])
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == 2
    assert float(rows[0]["normalized"]) == rep.normalized_metric
    assert math.isfinite(float(rows[1]["raw"]))
