"""MiniNav: a seeded, noisy stand-in for the CrowdNav router.

The model is analytic so tests can compare sampled outputs with exact means.
With ``u`` the configuration mapped into the unit cube and ``c`` the number
of cars::

    regime(c)   = 1.58 (c <= 500) | 1.76 (c <= 700) | 1.86 (otherwise)
    m_i(c)      = 0.5 + 0.4 sin(2.399 i + c / 150)              i = 1..7
    trip(u, c)  = regime(c) + 0.08/7 sum_i (u_i - m_i(c))^2
                  + 0.02 sin^2(3 pi u_1) + 0.02 sin^2(3 pi u_2)
    cost(x, c)  = (c / 500) * 600 / rerouting_frequency

Samples: ``max(1.0001, trip + 0.15 z)`` and
``max(1, rint(cost * (1 + 0.1 z')))`` with standard normal ``z, z'``.

Random numbers come from PCG64 seeded through numpy's ``SeedSequence``.
Uniform doubles are ``(next_uint64 >> 11) * 2**-53`` (numpy's ``random()``)
and normals use the cosine branch of Box-Muller,
``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)``, so every sample is reproducible from
the documented algorithm alone. The first ``2n`` uniforms feed the trip
overhead noise, the next ``2n`` the routing cost noise.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .pareto import pareto_front
from .space import CROWDNAV_SPACE, INTEGER, Configuration, ParameterSpace, check, coerce

TRIP_NOISE_SD = 0.15
COST_NOISE_SD = 0.1
TRIP_FLOOR = 1.0001


@dataclass(frozen=True)
class Context:
    number_of_cars: int

    def __post_init__(self):
        if int(self.number_of_cars) != self.number_of_cars or self.number_of_cars <= 0:
            raise ValueError("number_of_cars must be a positive integer")


@dataclass(frozen=True, eq=False)
class ObservationSet:
    trip_overheads: np.ndarray
    routing_costs: np.ndarray
    config: Configuration
    context: Context

    @property
    def sample_count(self) -> int:
        return len(self.trip_overheads)

    def output(self, name: str) -> np.ndarray:
        if name == "trip_overhead":
            return self.trip_overheads
        if name == "routing_cost":
            return self.routing_costs.astype(float)
        raise KeyError(name)

    def identical(self, other: "ObservationSet") -> bool:
        return (
            self.config == other.config
            and self.context == other.context
            and np.array_equal(self.trip_overheads, other.trip_overheads)
            and np.array_equal(self.routing_costs, other.routing_costs)
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["sample_index", "trip_overhead", "routing_cost"])
        for i, (t, r) in enumerate(zip(self.trip_overheads, self.routing_costs)):
            writer.writerow([i, repr(float(t)), int(r)])
        return buf.getvalue()

    def to_jsonl(self) -> str:
        lines = [
            json.dumps(
                {"sample_index": i, "trip_overhead": float(t), "routing_cost": int(r)}
            )
            for i, (t, r) in enumerate(zip(self.trip_overheads, self.routing_costs))
        ]
        return "\n".join(lines) + "\n"


class BlackBoxSystem(Protocol):
    space: ParameterSpace

    def evaluate(
        self, cfg: Sequence[float], ctx: Context, sample_count: int, seed
    ) -> ObservationSet: ...


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator from an int or a sequence of ints."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def box_muller(rng: np.random.Generator, n: int) -> np.ndarray:
    u = rng.random(2 * n)
    u1, u2 = u[0::2], u[1::2]
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


def regime_base(cars: int) -> float:
    if cars <= 500:
        return 1.58
    if cars <= 700:
        return 1.76
    return 1.86


def optimum_location(cars: int) -> np.ndarray:
    """Per-parameter optimum of the quadratic trip term, in unit coordinates."""
    i = np.arange(1, 8)
    return 0.5 + 0.4 * np.sin(2.399 * i + cars / 150.0)


def _trip_terms(u: np.ndarray, cars: int) -> np.ndarray:
    """Additive per-parameter trip overhead contributions (last axis = genes)."""
    u = np.asarray(u, dtype=float)
    terms = 0.08 / 7.0 * (u - optimum_location(cars)) ** 2
    terms[..., 0] += 0.02 * np.sin(3 * np.pi * u[..., 0]) ** 2
    terms[..., 1] += 0.02 * np.sin(3 * np.pi * u[..., 1]) ** 2
    return terms


class MiniNav:
    """Noisy analytic surrogate of the CrowdNav router (see module docstring)."""

    def __init__(self, space: ParameterSpace = CROWDNAV_SPACE):
        if len(space) != 7:
            raise ValueError("MiniNav needs the seven-parameter router space")
        self.space = space

    def true_mean(self, cfg: Sequence[float], ctx: Context) -> tuple[float, float]:
        check(self.space, cfg)
        u = self.space.normalize(cfg)
        c = ctx.number_of_cars
        trip = regime_base(c) + float(np.sum(_trip_terms(u, c)))
        cost = (c / 500.0) * (600.0 / float(cfg[6]))
        return trip, cost

    def evaluate(
        self, cfg: Sequence[float], ctx: Context, sample_count: int, seed
    ) -> ObservationSet:
        if sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        trip_mean, cost_mean = self.true_mean(cfg, ctx)
        rng = make_rng(seed)
        eps = box_muller(rng, sample_count)
        eta = box_muller(rng, sample_count)
        trips = np.maximum(TRIP_FLOOR, trip_mean + TRIP_NOISE_SD * eps)
        costs = np.maximum(1, np.rint(cost_mean * (1.0 + COST_NOISE_SD * eta))).astype(
            np.int64
        )
        return ObservationSet(trips, costs, coerce(self.space, cfg), ctx)

    def true_pareto_front(self, ctx: Context) -> list[tuple[Configuration, tuple[float, float]]]:
        """Exact noise-free pareto front, by separable per-parameter minimization.

        Routing cost depends only on the re-routing frequency, and the trip
        overhead is a sum of one-dimensional terms, so for each of its
        integer values the other six parameters are minimized independently.
        """
        c = ctx.number_of_cars
        m = optimum_location(c)
        best_u = np.zeros(7)
        for i, p in enumerate(self.space.params[:6]):
            if p.kind == INTEGER:
                grid = (np.arange(int(p.lower), int(p.upper) + 1) - p.lower) / p.span
            else:
                grid = np.linspace(0.0, 1.0, 20001)
            probe = np.tile(m, (len(grid), 1))
            probe[:, i] = grid
            vals = _trip_terms(probe, c)[:, i]
            j = int(np.argmin(vals))
            u_best = grid[j]
            if p.kind != INTEGER:
                lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, len(grid) - 1)]

                def f(t, i=i):
                    q = m.copy()
                    q[i] = t
                    return _trip_terms(q, c)[i]

                res = minimize_scalar(f, bounds=(lo, hi), method="bounded",
                                      options={"xatol": 1e-12})
                if res.fun <= vals[j]:
                    u_best = float(res.x)
            best_u[i] = u_best
        freq = self.space.params[6]
        points = []
        for x7 in range(int(freq.lower), int(freq.upper) + 1):
            u = best_u.copy()
            u[6] = (x7 - freq.lower) / freq.span
            cfg = self.space.denormalize(u)
            cfg = cfg[:6] + (x7,)
            points.append((cfg, self.true_mean(cfg, ctx)))
        return pareto_front(points)
