import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from planopt.space import (
    CROWDNAV_SPACE,
    InvalidConfiguration,
    ParameterSpace,
    ParameterSpec,
    cardinality,
    crossover,
    mutate,
    sample_uniform,
    validate,
)

MID = (0.15, 0.15, 1.75, 1.75, 12, 400, 40)


def test_validate_interior_point_ok(space):
    assert validate(space, MID) == []


def test_validate_upper_bound_violation(space):
    cfg = (0.31,) + MID[1:]
    (v,) = validate(space, cfg)
    assert v.name == "route_randomization"
    assert v.kind == "upper"
    assert v.bound == 0.3


def test_validate_integrality(space):
    cfg = MID[:4] + (7.5,) + MID[5:]
    (v,) = validate(space, cfg)
    assert (v.name, v.kind) == ("exploration_weight", "integrality")


def test_validate_reports_every_violation(space):
    cfg = (-0.1, 0.5, 1.75, 1.75, 12, 400, 40)
    assert [v.name for v in validate(space, cfg)] == ["route_randomization", "exploration_percentage"]


def test_arity_mismatch_is_a_violation(space):
    (v,) = validate(space, MID[:3])
    assert v.kind == "arity"


def test_parameter_spec_invariants():
    with pytest.raises(ValueError):
        ParameterSpec("x", "continuous", 1.0, 1.0)
    with pytest.raises(ValueError):
        ParameterSpec("x", "integer", 0.5, 3)
    with pytest.raises(ValueError):
        ParameterSpace((ParameterSpec("x", "integer", 0, 3), ParameterSpec("x", "integer", 0, 3)))


def test_sample_uniform_is_deterministic(space):
    assert sample_uniform(space, 7) == sample_uniform(space, 7)
    assert sample_uniform(space, 7) != sample_uniform(space, 8)


def test_rerouting_frequency_mean(space):
    rng = np.random.default_rng(0)
    values = [sample_uniform(space, rng)[6] for _ in range(10_000)]
    # discrete uniform on [10, 70] has mean 40
    assert abs(np.mean(values) - 40) < 1.0
    assert min(values) == 10 and max(values) == 70


def test_closure_over_many_draws(space):
    rng = np.random.default_rng(1)
    prev = sample_uniform(space, rng)
    for _ in range(10_000):
        cfg = sample_uniform(space, rng)
        assert validate(space, cfg) == []
        m = mutate(space, cfg, 0.5, rng)
        assert validate(space, m) == []
        c1, c2 = crossover(space, cfg, prev, rng)
        assert validate(space, c1) == [] and validate(space, c2) == []
        prev = m


def test_mutate_rate_zero_is_identity(space):
    cfg = sample_uniform(space, 3)
    assert mutate(space, cfg, 0.0, 99) == cfg


def test_mutate_rate_one_changes_genes(space):
    cfg = sample_uniform(space, 3)
    out = mutate(space, cfg, 1.0, 5)
    assert validate(space, out) == []
    # continuous genes redrawn from a continuous uniform differ almost surely
    assert all(out[i] != cfg[i] for i in range(4))


def test_mutate_single_gene(space):
    cfg = sample_uniform(space, 3)
    out = mutate(space, cfg, 1.0, 5, genes=[2])
    assert [i for i in range(7) if out[i] != cfg[i]] == [2]


def test_mutate_rejects_invalid_input(space):
    with pytest.raises(InvalidConfiguration):
        mutate(space, (0.5,) + MID[1:], 0.3, 0)
    with pytest.raises(ValueError):
        mutate(space, MID, 1.5, 0)


def test_crossover_identical_parents(space):
    a = sample_uniform(space, 11)
    assert crossover(space, a, a, 0) == (a, a)


def test_crossover_explicit_cut(space):
    a, b = sample_uniform(space, 1), sample_uniform(space, 2)
    c1, c2 = crossover(space, a, b, cut=3)
    assert c1 == a[:3] + b[3:]
    assert c2 == b[:3] + a[3:]


def test_crossover_preserves_gene_multisets(space):
    rng = np.random.default_rng(4)
    cuts = set()
    for _ in range(100):
        a, b = sample_uniform(space, rng), sample_uniform(space, rng)
        c1, c2 = crossover(space, a, b, rng)
        for i in range(7):
            assert Counter([c1[i], c2[i]]) == Counter([a[i], b[i]])
        cuts.add(next((i for i in range(7) if c1[i] != a[i]), None))
    assert cuts - {None} <= set(range(1, 7))


def test_crossover_rejects_invalid_parent(space):
    with pytest.raises(InvalidConfiguration):
        crossover(space, MID, (0.15, 0.15, 1.75, 1.75, 12, 400, 71), 0)


def test_cardinality_crowdnav_space(space):
    # independent oracle: per-parameter counts written out by hand
    expected = (3 * 10**14 + 1) ** 2 * (15 * 10**14 + 1) ** 2 * 16 * 601 * 61
    assert cardinality(space, 15) == expected
    assert 10**65 <= expected < 10**66


def test_cardinality_small_cases():
    single = ParameterSpace((ParameterSpec("f", "integer", 10, 70),))
    assert cardinality(single, 15) == 61
    tiny = ParameterSpace((ParameterSpec("r", "continuous", 0.0, 0.3),))
    assert cardinality(tiny, 0) == 1
    assert cardinality(tiny, 1) == 4
    with pytest.raises(ValueError):
        cardinality(tiny, -1)


def test_space_json_round_trip(space):
    text = space.to_json()
    records = json.loads(text)
    assert records[4] == {"name": "exploration_weight", "kind": "integer", "lower": 5, "upper": 20}
    again = ParameterSpace.from_json(text)
    assert [(p.name, p.kind, p.lower, p.upper) for p in again] == [
        (p.name, p.kind, p.lower, p.upper) for p in space
    ]


def test_configuration_serializes_as_number_array(space):
    cfg = sample_uniform(space, 0)
    assert tuple(json.loads(json.dumps(list(cfg)))) == cfg


@given(seed=st.integers(0, 2**32 - 1), rate=st.floats(0, 1))
def test_variation_is_pure_in_seed(seed, rate):
    a = sample_uniform(CROWDNAV_SPACE, seed)
    b = sample_uniform(CROWDNAV_SPACE, seed + 1)
    assert mutate(CROWDNAV_SPACE, a, rate, seed) == mutate(CROWDNAV_SPACE, a, rate, seed)
    assert crossover(CROWDNAV_SPACE, a, b, seed) == crossover(CROWDNAV_SPACE, a, b, seed)
