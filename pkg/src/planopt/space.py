"""Typed, bounded input parameters and the operations on configurations.

A configuration is a plain tuple aligned positionally with the parameter
space. Integer parameters hold Python ints, continuous ones floats.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

Configuration = tuple  # tuple[float | int, ...]

CONTINUOUS = "continuous"
INTEGER = "integer"


class InvalidConfiguration(ValueError):
    """Raised when a configuration does not satisfy its parameter space."""

    def __init__(self, violations: list["Violation"]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


@dataclass(frozen=True)
class Violation:
    name: str
    kind: str  # "lower" | "upper" | "integrality" | "arity" | "finite"
    bound: float | None = None
    value: float | None = None

    def __str__(self) -> str:
        if self.kind == "arity":
            return f"arity mismatch: expected {self.bound}, got {self.value}"
        if self.kind == "integrality":
            return f"{self.name}: {self.value} is not integral"
        if self.kind == "finite":
            return f"{self.name}: {self.value} is not finite"
        return f"{self.name}: {self.value} violates {self.kind} bound {self.bound}"


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    kind: str
    lower: float
    upper: float
    description: str = ""

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, INTEGER):
            raise ValueError(f"unknown parameter kind {self.kind!r}")
        if not self.lower < self.upper:
            raise ValueError(f"{self.name}: lower must be < upper")
        if self.kind == INTEGER and (
            int(self.lower) != self.lower or int(self.upper) != self.upper
        ):
            raise ValueError(f"{self.name}: integer parameter needs integral bounds")

    @property
    def span(self) -> float:
        return self.upper - self.lower

    def count(self, decimals: int) -> int:
        """Number of distinct values at the given float granularity."""
        if self.kind == INTEGER:
            return int(self.upper) - int(self.lower) + 1
        # Fractions from the decimal repr avoid binary float truncation (0.3e15 -> ...99.94).
        width = Fraction(repr(self.upper)) - Fraction(repr(self.lower))
        return math.floor(width * 10**decimals) + 1


@dataclass(frozen=True)
class ParameterSpace:
    params: tuple[ParameterSpec, ...]

    def __post_init__(self):
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")

    def __len__(self) -> int:
        return len(self.params)

    def __iter__(self):
        return iter(self.params)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    @property
    def lower(self) -> np.ndarray:
        return np.array([p.lower for p in self.params], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([p.upper for p in self.params], dtype=float)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def midpoint(self) -> Configuration:
        """Centre of every range; integer parameters round half down."""
        values = []
        for p in self.params:
            mid = (p.lower + p.upper) / 2
            values.append(int(math.floor(mid)) if p.kind == INTEGER else float(mid))
        return tuple(values)

    def normalize(self, cfg: Sequence[float]) -> np.ndarray:
        """Map a configuration (or a batch of them) into the unit cube."""
        x = np.asarray(cfg, dtype=float)
        return (x - self.lower) / (self.upper - self.lower)

    def denormalize(self, u: Sequence[float]) -> Configuration:
        """Inverse of :meth:`normalize` for one point, snapping integers."""
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        raw = self.lower + u * (self.upper - self.lower)
        return coerce(self, raw)

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(
            [
                {"name": p.name, "kind": p.kind, "lower": p.lower, "upper": p.upper}
                for p in self.params
            ],
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "ParameterSpace":
        return cls.from_records(json.loads(text))

    @classmethod
    def from_records(cls, records: Iterable[dict]) -> "ParameterSpace":
        specs = []
        for r in records:
            kind = r["kind"]
            lower, upper = r["lower"], r["upper"]
            if kind == INTEGER:
                lower, upper = int(lower), int(upper)
            specs.append(
                ParameterSpec(r["name"], kind, lower, upper, r.get("description", ""))
            )
        return cls(tuple(specs))


CROWDNAV_SPACE = ParameterSpace(
    (
        ParameterSpec("route_randomization", CONTINUOUS, 0.0, 0.3,
                      "random noise added to avoid giving the same routes"),
        ParameterSpec("exploration_percentage", CONTINUOUS, 0.0, 0.3,
                      "ratio of smart cars used as explorers"),
        ParameterSpec("static_info_weight", CONTINUOUS, 1.0, 2.5,
                      "importance of static information on routing"),
        ParameterSpec("dynamic_info_weight", CONTINUOUS, 1.0, 2.5,
                      "importance of observed traffic on routing"),
        ParameterSpec("exploration_weight", INTEGER, 5, 20,
                      "degree of exploration of the explorers"),
        ParameterSpec("data_freshness_threshold", INTEGER, 100, 700,
                      "age after which traffic data is considered stale"),
        ParameterSpec("rerouting_frequency", INTEGER, 10, 70,
                      "how often the router is invoked to re-route a car"),
    )
)


def coerce(space: ParameterSpace, values: Sequence[float]) -> Configuration:
    """Convert raw numbers to a configuration tuple, rounding integer genes."""
    out = []
    for p, v in zip(space.params, values):
        out.append(int(round(float(v))) if p.kind == INTEGER else float(v))
    return tuple(out)


def validate(space: ParameterSpace, cfg: Sequence[float]) -> list[Violation]:
    """Return every violation of ``cfg`` against ``space``; empty means ok."""
    if len(cfg) != len(space):
        return [Violation("", "arity", len(space), len(cfg))]
    violations = []
    for p, v in zip(space.params, cfg):
        v = float(v)
        if not math.isfinite(v):
            violations.append(Violation(p.name, "finite", None, v))
            continue
        if v < p.lower:
            violations.append(Violation(p.name, "lower", p.lower, v))
        if v > p.upper:
            violations.append(Violation(p.name, "upper", p.upper, v))
        if p.kind == INTEGER and v != int(v):
            violations.append(Violation(p.name, "integrality", None, v))
    return violations


def check(space: ParameterSpace, cfg: Sequence[float]) -> None:
    violations = validate(space, cfg)
    if violations:
        raise InvalidConfiguration(violations)


def _draw(p: ParameterSpec, rng: np.random.Generator):
    if p.kind == INTEGER:
        return int(rng.integers(int(p.lower), int(p.upper) + 1))
    return float(p.lower + (p.upper - p.lower) * rng.random())


def sample_uniform(space: ParameterSpace, seed=None) -> Configuration:
    """Draw one configuration uniformly from ``space``.

    ``seed`` may be an int, a seed sequence or an existing
    :class:`numpy.random.Generator` (which is advanced in place).
    """
    rng = np.random.default_rng(seed)
    return tuple(_draw(p, rng) for p in space.params)


def mutate(
    space: ParameterSpace,
    cfg: Sequence[float],
    mutation_rate: float,
    seed=None,
    genes: Sequence[int] | None = None,
) -> Configuration:
    """Redraw each selected gene uniformly over its range with ``mutation_rate``.

    ``genes`` restricts which positions are eligible (default: all of them).
    Passing a single index with rate 1 gives the one-parameter mutation used
    by the evolutionary optimizers.
    """
    if not 0.0 <= mutation_rate <= 1.0:
        raise ValueError("mutation_rate must be in [0, 1]")
    check(space, cfg)
    rng = np.random.default_rng(seed)
    out = list(coerce(space, cfg))
    for i in range(len(space)) if genes is None else genes:
        if rng.random() < mutation_rate:
            out[i] = _draw(space.params[i], rng)
    return tuple(out)


def crossover(
    space: ParameterSpace,
    a: Sequence[float],
    b: Sequence[float],
    seed=None,
    cut: int | None = None,
) -> tuple[Configuration, Configuration]:
    """Single-point crossover; the cut is uniform in ``1..len(space)-1``."""
    check(space, a)
    check(space, b)
    n = len(space)
    if cut is None:
        rng = np.random.default_rng(seed)
        cut = int(rng.integers(1, n))
    elif not 1 <= cut <= n - 1:
        raise ValueError(f"cut must be in [1, {n - 1}]")
    a, b = coerce(space, a), coerce(space, b)
    return a[:cut] + b[cut:], b[:cut] + a[cut:]


def cardinality(space: ParameterSpace, decimals_per_float: int) -> int:
    """Size of the discretized configuration space as an exact integer."""
    if decimals_per_float < 0:
        raise ValueError("decimals_per_float must be >= 0")
    total = 1
    for p in space.params:
        total *= p.count(decimals_per_float)
    return total
