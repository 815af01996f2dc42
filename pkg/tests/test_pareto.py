import numpy as np
import pytest
from hypothesis import given, strategies as st

from planopt.pareto import (
    curve_to_csv,
    dominates,
    front_to_csv,
    hypervolume_2d,
    hypervolume_contributions,
    hypervolume_evolution,
    pareto_front,
    reference_point,
)


def brute_front(points):
    return [p for p in points if not any(dominates(q, p) for q in points)]


def mc_hypervolume(points, ref, n, rng):
    pts = np.asarray(points, dtype=float)
    lo = pts.min(axis=0)
    box = np.prod(np.asarray(ref) - lo)
    samples = lo + rng.random((n, 2)) * (np.asarray(ref) - lo)
    covered = np.zeros(n, dtype=bool)
    for p in pts:
        covered |= (samples[:, 0] >= p[0]) & (samples[:, 1] >= p[1])
    return box * covered.mean()


points2d = st.lists(
    st.tuples(st.floats(1, 10, allow_nan=False), st.floats(1, 10, allow_nan=False)),
    min_size=1, max_size=30,
)


def test_dominates_examples():
    assert dominates((1.5, 10), (1.6, 12))
    assert not dominates((1.5, 10), (1.5, 10))
    assert not dominates((1.5, 12), (1.6, 10))
    assert not dominates((1.6, 10), (1.5, 12))


def test_pareto_front_examples():
    assert pareto_front([(1, 3), (2, 2), (3, 1), (3, 3)]) == [(1, 3), (2, 2), (3, 1)]
    assert pareto_front([(2, 2)]) == [(2, 2)]
    assert pareto_front([(1, 1), (2, 2), (3, 3)]) == [(1, 1)]
    assert pareto_front([]) == []


def test_pareto_front_keeps_first_duplicate():
    entries = [(("a",), (1.0, 2.0)), (("b",), (1.0, 2.0)), (("c",), (2.0, 1.0))]
    assert pareto_front(entries) == [entries[0], entries[2]]


def test_pareto_front_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(1, 201))
        pts = [tuple(p) for p in rng.integers(0, 15, size=(n, 2)).astype(float)]
        expected = sorted(set(brute_front(pts)))
        assert sorted(pareto_front(pts)) == expected


def test_hypervolume_examples():
    assert hypervolume_2d([(1, 1)], (2, 2)) == 1.0
    assert hypervolume_2d([(1, 3), (2, 2), (3, 1)], (4, 4)) == 6.0
    assert hypervolume_2d([(2, 2)], (2, 2)) == 0.0
    assert hypervolume_2d([], (2, 2)) == 0.0


def test_hypervolume_clips_points_beyond_reference():
    assert hypervolume_2d([(1, 5), (5, 1), (1, 1)], (4, 4)) == 9.0
    assert hypervolume_2d([(1, 5)], (4, 4)) == 0.0


def test_hypervolume_against_monte_carlo():
    rng = np.random.default_rng(1)
    for _ in range(20):
        pts = rng.random((int(rng.integers(1, 21)), 2)) * 5 + 1
        ref = (7.0, 7.0)
        exact = hypervolume_2d(pts, ref)
        assert mc_hypervolume(pts, ref, 200_000, rng) == pytest.approx(exact, rel=0.01)


@given(points2d, st.randoms(use_true_random=False))
def test_hypervolume_permutation_invariant(points, rnd):
    shuffled = list(points)
    rnd.shuffle(shuffled)
    assert hypervolume_2d(points, (11, 11)) == pytest.approx(hypervolume_2d(shuffled, (11, 11)))


@given(points2d)
def test_dominated_point_leaves_hypervolume_unchanged(points):
    front = pareto_front(points)
    p = front[0]
    worse = (p[0] + 0.5, p[1] + 0.5)
    assert hypervolume_2d(front + [worse], (11, 11)) == pytest.approx(hypervolume_2d(front, (11, 11)))


@given(points2d)
def test_nondominated_point_strictly_increases_hypervolume(points):
    front = pareto_front(points)
    best = (min(p[0] for p in front) - 0.5, min(p[1] for p in front) - 0.5)
    assert hypervolume_2d(front + [best], (11, 11)) > hypervolume_2d(front, (11, 11))


def test_hypervolume_evolution_examples():
    assert hypervolume_evolution([(3, 3), (1, 1)], (4, 4)) == [1.0, 9.0]
    assert hypervolume_evolution([(1, 1)], (2, 2)) == [1.0]


@given(points2d)
def test_hypervolume_evolution_is_monotone(points):
    curve = hypervolume_evolution(points, (11, 11))
    assert len(curve) == len(points)
    assert all(b >= a for a, b in zip(curve, curve[1:]))


@given(points2d, points2d)
def test_contributions_equal_hypervolume_differences(front, candidates):
    ref = (9.0, 9.5)
    base = hypervolume_2d(front, ref)
    got = hypervolume_contributions(front, candidates, ref)
    expected = [hypervolume_2d(list(front) + [c], ref) - base for c in candidates]
    assert np.allclose(got, expected, atol=1e-9)


def test_reference_point_scales_worst():
    ref = reference_point([(1.5, 10), (1.7, 20), (1.6, 30)])
    assert ref == pytest.approx((1.7 * 1.1, 33.0))


def test_csv_exports():
    front = [((0.1, 12), (1.6, 20.0)), ((0.2, 70), (1.7, 9.5))]
    text = front_to_csv(front, ["a", "freq"])
    assert text.splitlines() == [
        "a,freq,trip_overhead,routing_cost",
        "0.1,12,1.6,20.0",
        "0.2,70,1.7,9.5",
    ]
    assert curve_to_csv([0.0, 1.5]).splitlines() == ["eval_index,hypervolume", "0,0.0", "1,1.5"]
