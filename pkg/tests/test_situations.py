import itertools
import logging
from fractions import Fraction

import numpy as np
import pytest
from sklearn.metrics import silhouette_score

from planopt.situations import (
    ContextRange,
    SituationModel,
    describe,
    detect_situation,
    extract_features,
    kmeans_fit,
    learn_situations,
    make_ranges,
    parse_ranges,
    select_clustering,
    silhouette_avg,
)
from planopt.space import CROWDNAV_SPACE
from planopt.surrogate import Context, ObservationSet

PLANTED_BOUNDS = [
    {(r.lower, r.upper) for r in make_ranges(100, 800, 50) if r.upper <= 500},
    {(r.lower, r.upper) for r in make_ranges(100, 800, 50) if 500 < r.upper <= 700},
    {(r.lower, r.upper) for r in make_ranges(100, 800, 50) if r.upper > 700},
]


def planted(groups, per_group, spread, rng, dim=2):
    centers = np.zeros((groups, dim))
    centers[:, 0] = 20.0 * np.arange(groups)
    pts = np.concatenate([c + spread * rng.normal(size=(per_group, dim)) for c in centers])
    return pts


class ConstantSystem:
    space = CROWDNAV_SPACE

    def evaluate(self, cfg, ctx, sample_count, seed):
        trips = np.full(sample_count, 1.5)
        costs = np.full(sample_count, 10, dtype=np.int64)
        return ObservationSet(trips, costs, tuple(cfg), ctx)


def test_describe_constant_data():
    f = describe([1, 1, 1, 1])
    assert f.mean == f.median == 1
    assert f.std == 0


def test_describe_linear_interpolation_quantiles():
    f = describe(range(1, 11))
    # rank-based linear interpolation: median between 5 and 6, p90 at rank 1 + 0.9*9 = 9.1
    assert f.median == pytest.approx(5.5)
    assert f.p90 == pytest.approx(9.1)
    assert f.p75 == pytest.approx(7.75)
    assert f.variance == pytest.approx(8.25)


def test_describe_variance_is_std_squared(rng):
    for _ in range(20):
        f = describe(rng.gamma(2.0, size=50))
        assert f.variance == pytest.approx(f.std**2, rel=1e-9)
        assert f.p75 <= f.p90


def test_describe_needs_two_samples():
    with pytest.raises(ValueError):
        describe([1.0])


def test_extract_features_order(mininav):
    obs = mininav.evaluate(CROWDNAV_SPACE.midpoint(), Context(300), 100, seed=0)
    both = extract_features(obs, ("trip_overhead", "routing_cost"))
    assert both.shape == (12,)
    assert both[0] == pytest.approx(obs.trip_overheads.mean())
    assert both[6] == pytest.approx(obs.routing_costs.mean())


def test_kmeans_two_points():
    c = kmeans_fit([[0.0, 0.0], [3.0, 4.0]], 2, seed=0)
    assert c.sse == 0
    assert sorted(c.labels.tolist()) == [0, 1]


def test_kmeans_k_equals_n(rng):
    pts = rng.normal(size=(7, 3))
    assert kmeans_fit(pts, 7, seed=1).sse == pytest.approx(0.0, abs=1e-12)


def test_kmeans_matches_brute_force_partition(rng):
    pts = np.concatenate([rng.normal(0, 0.1, size=(3, 2)), rng.normal(5, 0.1, size=(3, 2))])
    best_sse, best_part = np.inf, None
    for mask in itertools.product([0, 1], repeat=6):
        if len(set(mask)) < 2:
            continue
        labels = np.array(mask)
        sse = sum(((pts[labels == g] - pts[labels == g].mean(axis=0)) ** 2).sum() for g in (0, 1))
        if sse < best_sse - 1e-12:
            best_sse, best_part = sse, {frozenset(np.flatnonzero(labels == g)) for g in (0, 1)}
    c = kmeans_fit(pts, 2, restarts=10, seed=3)
    got = {frozenset(np.flatnonzero(c.labels == g)) for g in (0, 1)}
    assert got == best_part
    assert c.sse == pytest.approx(best_sse)


def test_kmeans_sse_never_increases(rng):
    for seed in range(20):
        pts = rng.normal(size=(40, 3))
        c = kmeans_fit(pts, 5, restarts=1, seed=seed)
        assert all(b <= a + 1e-12 for a, b in zip(c.sse_history, c.sse_history[1:]))
        assert len(set(c.labels.tolist())) == 5


def test_kmeans_duplicate_points_no_empty_cluster():
    pts = np.array([[0.0], [0.0], [0.0], [1.0]])
    c = kmeans_fit(pts, 3, restarts=3, seed=0)
    assert len(set(c.labels.tolist())) >= 2
    with pytest.raises(ValueError):
        kmeans_fit(pts, 5)


def test_silhouette_hand_computed_four_points():
    pts = np.array([[0.0], [1.0], [4.0], [6.0]])
    labels = [0, 0, 1, 1]
    expected = (Fraction(4, 5) + Fraction(3, 4) + Fraction(3, 7) + Fraction(7, 11)) / 4
    assert silhouette_avg(pts, labels) == pytest.approx(float(expected), abs=1e-12)


def test_silhouette_well_separated_is_close_to_one(rng):
    pts = np.concatenate([rng.normal(0, 1, size=(10, 2)), rng.normal(0, 1, size=(10, 2)) + [40, 0]])
    assert silhouette_avg(pts, [0] * 10 + [1] * 10) > 0.9


def test_silhouette_zero_when_a_equals_b():
    # vertices of a regular tetrahedron: every pairwise distance is equal
    pts = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    assert silhouette_avg(pts, [0, 0, 1, 1]) == pytest.approx(0.0, abs=1e-12)


def test_silhouette_singletons_and_errors():
    pts = np.array([[0.0], [1.0], [5.0]])
    # the lone point scores 0; the others (5-1)/5 and (4-1)/4
    assert silhouette_avg(pts, [0, 0, 1]) == pytest.approx((0.8 + 0.75) / 3)
    with pytest.raises(ValueError):
        silhouette_avg(pts, [0, 0, 0])


def test_silhouette_agrees_with_sklearn(rng):
    for _ in range(30):
        pts = rng.normal(size=(12, 3))
        labels = rng.integers(0, 3, size=12)
        if len(set(labels.tolist())) < 2:
            continue
        assert silhouette_avg(pts, labels) == pytest.approx(silhouette_score(pts, labels), abs=1e-12)


@pytest.mark.parametrize("groups", [2, 3])
def test_select_clustering_recovers_planted_groups(rng, groups):
    pts = planted(groups, 5, 1.0, rng)
    c = select_clustering(pts, range(2, 10), seed=0)
    assert c.k == groups
    # returned clustering is the argmax of the recomputed scores
    for k, score in c.candidate_scores.items():
        assert score <= c.avg_silhouette
        redo = kmeans_fit(pts, k, seed=(0, k))
        assert silhouette_avg(pts, redo.labels) == pytest.approx(score)


def test_select_clustering_single_candidate(rng):
    pts = rng.normal(size=(10, 2))
    assert select_clustering(pts, [2], seed=0).k == 2
    with pytest.raises(ValueError):
        select_clustering(pts, [1, 2])
    with pytest.raises(ValueError):
        select_clustering(pts, [])


def test_ranges():
    ranges = parse_ranges("100:800:50")
    assert len(ranges) == 14
    assert str(ranges[0]) == "[100,150]" and str(ranges[1]) == "(150,200]"
    assert ranges[0].contains(100) and not ranges[1].contains(150)
    assert [r.representative for r in ranges][-1] == 800
    with pytest.raises(ValueError):
        parse_ranges("100-800")


def test_learn_situations_recovers_three_regimes(learned_model):
    assert learned_model.k == 3
    assert learned_model.partition() == {frozenset(b) for b in PLANTED_BOUNDS}
    assert [s.representative for s in learned_model.situations] == [500, 700, 800]


def test_learn_situations_constant_system_single_situation():
    model = learn_situations(ConstantSystem(), make_ranges(100, 800, 50), samples_per_state=50)
    assert model.k == 1
    assert set(model.assignment) == {0}


def test_learn_situations_order_insensitive(mininav, learned_model):
    ranges = make_ranges(100, 800, 50)[::-1]
    shuffled = learn_situations(mininav, ranges, samples_per_state=1000, seed=0)
    assert shuffled.partition() == learned_model.partition()


def test_learn_situations_deterministic(mininav):
    a = learn_situations(mininav, make_ranges(100, 800, 50), samples_per_state=500, seed=4)
    b = learn_situations(mininav, make_ranges(100, 800, 50), samples_per_state=500, seed=4)
    assert a.to_json() == b.to_json()


def test_overlapping_ranges_rejected(mininav):
    with pytest.raises(ValueError):
        learn_situations(mininav, [ContextRange(100, 300), ContextRange(200, 400)])


def test_detect_situation(learned_model, caplog):
    low, _ = detect_situation(learned_model, Context(480))
    idx = next(i for i, r in enumerate(learned_model.ranges) if r.upper == 500)
    assert low == learned_model.assignment[idx]
    high, warned = detect_situation(learned_model, Context(701))
    assert high == 2 and not warned
    with caplog.at_level(logging.WARNING):
        far, warned = detect_situation(learned_model, Context(5000))
    assert far == high and warned
    assert "outside all ranges" in caplog.text


def test_model_json_round_trip(learned_model):
    again = SituationModel.from_json(learned_model.to_json())
    assert again.to_json() == learned_model.to_json()
    assert again.partition() == learned_model.partition()
    d = learned_model.to_dict()
    assert {"ranges", "k", "centroids", "feature_means", "feature_stds", "assignment"} <= set(d)
