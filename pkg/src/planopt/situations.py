"""Learning runtime situations by clustering output statistics over context states.

Each context range is represented by its upper bound. The system is run at
that context with a fixed baseline configuration, summary statistics of the
outputs become the state's feature vector, and k-means (with the cluster
count chosen by the average silhouette) groups states into situations.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .space import Configuration
from .surrogate import BlackBoxSystem, Context, ObservationSet, make_rng

log = logging.getLogger(__name__)

STATISTICS = ("mean", "median", "p75", "p90", "std", "variance")
DEFAULT_OUTPUTS = ("trip_overhead",)


class FeatureVector(NamedTuple):
    mean: float
    median: float
    p75: float
    p90: float
    std: float
    variance: float


def _stats(x: np.ndarray) -> np.ndarray:
    """The six statistics along the last axis (linear-interpolation quantiles)."""
    mean = x.mean(axis=-1)
    med, p75, p90 = np.percentile(x, [50, 75, 90], axis=-1)
    var = x.var(axis=-1)
    return np.stack([mean, med, p75, p90, np.sqrt(var), var], axis=-1)


def describe(samples: Sequence[float]) -> FeatureVector:
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two samples to compute features")
    return FeatureVector(*(float(v) for v in _stats(x)))


def extract_features(obs: ObservationSet, outputs: Sequence[str] = DEFAULT_OUTPUTS) -> np.ndarray:
    """Concatenated statistics of each named output, in ``outputs`` order."""
    if obs.sample_count < 2:
        raise ValueError("need at least two samples to compute features")
    return np.concatenate([_stats(obs.output(name)) for name in outputs])


def feature_names(outputs: Sequence[str] = DEFAULT_OUTPUTS) -> list[str]:
    return [f"{o}.{s}" for o in outputs for s in STATISTICS]


def bootstrap_feature_variance(
    obs: ObservationSet, outputs: Sequence[str], n_boot: int, rng: np.random.Generator
) -> np.ndarray:
    """Sampling variance of every feature, estimated by resampling the observations."""
    n = obs.sample_count
    idx = rng.integers(0, n, size=(n_boot, n))
    parts = [_stats(obs.output(name)[idx]).var(axis=0) for name in outputs]
    return np.concatenate(parts)


# -- k-means -----------------------------------------------------------------


@dataclass
class Clustering:
    k: int
    centroids: np.ndarray
    labels: np.ndarray
    sse: float
    sse_history: list[float] = field(default_factory=list)
    avg_silhouette: float | None = None
    candidate_scores: dict[int, float] = field(default_factory=dict)


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=-1)


def _seed_centroids(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding.

    The first centroid is a uniformly chosen point. Each further centroid is
    a point drawn with probability proportional to its squared distance to
    the nearest centroid chosen so far (uniformly if all distances are 0).
    """
    n = len(points)
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(points, points[chosen]).min(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            nxt = int(rng.integers(n))
        chosen.append(nxt)
        d2 = np.minimum(d2, _sq_dists(points, points[[nxt]])[:, 0])
    return points[chosen].astype(float)


def _lloyd(points: np.ndarray, centroids: np.ndarray, max_iter: int) -> Clustering:
    k = len(centroids)
    labels = None
    history = []
    for _ in range(max_iter):
        d2 = _sq_dists(points, centroids)
        new_labels = d2.argmin(axis=1)
        history.append(float(d2[np.arange(len(points)), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = points[labels == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
        for j in range(k):
            if not np.any(labels == j):
                # Re-seed an empty cluster with the point farthest from its centroid.
                far = _sq_dists(points, centroids)[np.arange(len(points)), labels]
                i = int(far.argmax())
                centroids[j] = points[i]
                labels = labels.copy()
                labels[i] = j
    d2 = _sq_dists(points, centroids)
    labels = d2.argmin(axis=1)
    sse = float(d2[np.arange(len(points)), labels].sum())
    return Clustering(k, centroids, labels, sse, history)


def kmeans_fit(points, k: int, restarts: int = 10, max_iter: int = 300, seed=0) -> Clustering:
    """Best of ``restarts`` Lloyd runs by within-cluster sum of squares."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    n = len(points)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must be between 1 and the number of points ({n})")
    rng = make_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        result = _lloyd(points, _seed_centroids(points, k, rng), max_iter)
        if best is None or result.sse < best.sse:
            best = result
    return best


# -- silhouette ----------------------------------------------------------------


def silhouette_samples(points, labels) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    labels = np.asarray(labels)
    clusters = np.unique(labels)
    if len(clusters) < 2:
        raise ValueError("silhouette is undefined for fewer than two clusters")
    dist = np.sqrt(_sq_dists(points, points))
    n = len(points)
    sc = np.zeros(n)
    for i in range(n):
        own = labels == labels[i]
        if own.sum() == 1:
            continue
        a = dist[i, own].sum() / (own.sum() - 1)
        b = min(dist[i, labels == c].mean() for c in clusters if c != labels[i])
        denom = max(a, b)
        sc[i] = 0.0 if denom == 0 else (b - a) / denom
    return sc


def silhouette_avg(points, labels) -> float:
    return float(silhouette_samples(points, labels).mean())


def select_clustering(
    points, k_candidates: Sequence[int], seed=0, restarts: int = 10
) -> Clustering:
    """k-means for every candidate k; keep the highest average silhouette.

    Ties go to the smaller k.
    """
    points = np.asarray(points, dtype=float)
    ks = sorted(set(int(k) for k in k_candidates))
    if not ks:
        raise ValueError("k_candidates must not be empty")
    if ks[0] < 2 or ks[-1] > len(points):
        raise ValueError("every candidate k must lie in [2, number of points]")
    best = None
    scores = {}
    for k in ks:
        clustering = kmeans_fit(points, k, restarts=restarts, seed=(_seed_int(seed), k))
        clustering.avg_silhouette = silhouette_avg(points, clustering.labels)
        scores[k] = clustering.avg_silhouette
        if best is None or clustering.avg_silhouette > best.avg_silhouette:
            best = clustering
    best.candidate_scores = scores
    return best


def _seed_int(seed) -> int:
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    return int(np.random.SeedSequence(seed).generate_state(1)[0])


# -- situation model -------------------------------------------------------------


@dataclass(frozen=True)
class ContextRange:
    lower: int
    upper: int
    lower_inclusive: bool = False

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError("range lower must be < upper")

    @property
    def representative(self) -> int:
        return self.upper

    def contains(self, cars: int) -> bool:
        above = cars >= self.lower if self.lower_inclusive else cars > self.lower
        return above and cars <= self.upper

    def distance(self, cars: int) -> float:
        if self.contains(cars):
            return 0.0
        return float(min(abs(cars - self.lower), abs(cars - self.upper)))

    def __str__(self) -> str:
        return f"{'[' if self.lower_inclusive else '('}{self.lower},{self.upper}]"


def make_ranges(start: int, stop: int, step: int) -> list[ContextRange]:
    """``[start, start+step], (start+step, start+2 step], ..., (stop-step, stop]``."""
    if step <= 0 or stop <= start:
        raise ValueError("need start < stop and a positive step")
    bounds = list(range(start, stop, step)) + [stop]
    return [
        ContextRange(lo, hi, lower_inclusive=(i == 0))
        for i, (lo, hi) in enumerate(zip(bounds[:-1], bounds[1:]))
    ]


def parse_ranges(text: str) -> list[ContextRange]:
    """Parse ``"start:stop:step"`` into consecutive ranges."""
    try:
        start, stop, step = (int(t) for t in text.split(":"))
    except ValueError as exc:
        raise ValueError(f"ranges must look like 100:800:50, got {text!r}") from exc
    return make_ranges(start, stop, step)


@dataclass(frozen=True)
class Situation:
    id: int
    ranges: tuple[int, ...]
    representative: int


@dataclass
class SituationModel:
    ranges: list[ContextRange]
    assignment: list[int]  # range index -> situation id
    situations: list[Situation]
    feature_names: list[str]
    feature_means: list[float]
    feature_stds: list[float]
    informative: list[bool]
    centroids: list[list[float]]
    avg_silhouette: float | None = None
    candidate_scores: dict[int, float] = field(default_factory=dict)

    @property
    def k(self) -> int:
        return len(self.situations)

    def situation(self, sid: int) -> Situation:
        return self.situations[sid]

    def partition(self) -> set[frozenset[tuple[int, int]]]:
        """Situations as sets of ``(lower, upper)`` bounds, independent of ids."""
        return {
            frozenset((self.ranges[i].lower, self.ranges[i].upper) for i in s.ranges)
            for s in self.situations
        }

    def to_dict(self) -> dict:
        return {
            "ranges": [
                {"lower": r.lower, "upper": r.upper, "lower_inclusive": r.lower_inclusive}
                for r in self.ranges
            ],
            "k": self.k,
            "centroids": self.centroids,
            "feature_names": self.feature_names,
            "feature_means": self.feature_means,
            "feature_stds": self.feature_stds,
            "informative": self.informative,
            "assignment": self.assignment,
            "avg_silhouette": self.avg_silhouette,
            "candidate_scores": {str(k): v for k, v in self.candidate_scores.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "SituationModel":
        ranges = [ContextRange(r["lower"], r["upper"], r.get("lower_inclusive", False))
                  for r in d["ranges"]]
        assignment = [int(a) for a in d["assignment"]]
        return cls(
            ranges=ranges,
            assignment=assignment,
            situations=_situations(ranges, assignment),
            feature_names=list(d.get("feature_names", [])),
            feature_means=list(d["feature_means"]),
            feature_stds=list(d["feature_stds"]),
            informative=list(d.get("informative", [True] * len(d["feature_means"]))),
            centroids=[list(c) for c in d["centroids"]],
            avg_silhouette=d.get("avg_silhouette"),
            candidate_scores={int(k): v for k, v in d.get("candidate_scores", {}).items()},
        )

    @classmethod
    def from_json(cls, text: str) -> "SituationModel":
        return cls.from_dict(json.loads(text))


def _situations(ranges: list[ContextRange], assignment: list[int]) -> list[Situation]:
    out = []
    for sid in sorted(set(assignment)):
        members = tuple(i for i, a in enumerate(assignment) if a == sid)
        out.append(Situation(sid, members, max(ranges[i].representative for i in members)))
    return out


def _relabel(ranges: list[ContextRange], labels: Sequence[int]) -> list[int]:
    """Number clusters by the smallest context they contain (low traffic first)."""
    first = {}
    for i in sorted(range(len(ranges)), key=lambda i: ranges[i].upper):
        first.setdefault(int(labels[i]), len(first))
    return [first[int(l)] for l in labels]


def learn_situations(
    system: BlackBoxSystem,
    ranges: Sequence[ContextRange],
    baseline_cfg: Configuration | None = None,
    samples_per_state: int = 1000,
    k_candidates: Sequence[int] = range(2, 10),
    seed=0,
    outputs: Sequence[str] = DEFAULT_OUTPUTS,
    restarts: int = 10,
    n_boot: int = 100,
    screen_ratio: float = 4.0,
) -> SituationModel:
    """Mode 1: group context ranges into situations.

    Before z-scoring, features whose spread across states is not at least
    ``screen_ratio`` times their bootstrap sampling variance are dropped;
    standardizing them would blow pure sampling noise up to the same scale
    as real context effects. If no feature survives, the context does not
    influence the outputs and a single situation is returned.
    """
    ranges = list(ranges)
    if not ranges:
        raise ValueError("need at least one context range")
    ordered = sorted(ranges, key=lambda r: r.upper)
    for a, b in zip(ordered, ordered[1:]):
        if b.lower < a.upper:
            raise ValueError(f"context ranges {a} and {b} overlap")
    if baseline_cfg is None:
        baseline_cfg = system.space.midpoint()
    base_seed = _seed_int(seed)
    names = feature_names(outputs)

    feats, noise = [], []
    boot_rng = make_rng((base_seed, 1))
    for r in ranges:
        obs = system.evaluate(baseline_cfg, Context(r.representative), samples_per_state,
                              seed=(base_seed, 0, r.representative))
        feats.append(extract_features(obs, outputs))
        noise.append(bootstrap_feature_variance(obs, outputs, n_boot, boot_rng))
    F = np.array(feats)
    spread = F.var(axis=0, ddof=1) if len(F) > 1 else np.zeros(F.shape[1])
    informative = spread > screen_ratio * np.mean(noise, axis=0)
    informative &= spread > 0
    means = F.mean(axis=0)
    stds = F.std(axis=0)

    ks = [k for k in k_candidates if 2 <= k <= len(ranges) - 1]
    if not informative.any() or not ks:
        log.info("no context effect detected; using a single situation")
        assignment = [0] * len(ranges)
        return SituationModel(
            ranges, assignment, _situations(ranges, assignment), names,
            means.tolist(), stds.tolist(), informative.tolist(),
            [np.zeros(int(informative.sum())).tolist()],
        )

    Z = (F[:, informative] - means[informative]) / stds[informative]
    clustering = select_clustering(Z, ks, seed=(base_seed, 2), restarts=restarts)
    assignment = _relabel(ranges, clustering.labels)
    order = {}
    for old, new in zip(clustering.labels, assignment):
        order[new] = int(old)
    centroids = [clustering.centroids[order[s]].tolist() for s in sorted(order)]
    return SituationModel(
        ranges, assignment, _situations(ranges, assignment), names,
        means.tolist(), stds.tolist(), informative.tolist(), centroids,
        clustering.avg_silhouette, clustering.candidate_scores,
    )


def detect_situation(model: SituationModel, ctx: Context | int) -> tuple[int, bool]:
    """Situation id for a context, plus whether it fell outside every range."""
    cars = ctx.number_of_cars if isinstance(ctx, Context) else int(ctx)
    for i, r in enumerate(model.ranges):
        if r.contains(cars):
            return model.assignment[i], False
    nearest = min(range(len(model.ranges)), key=lambda i: model.ranges[i].distance(cars))
    log.warning("context %d outside all ranges; using nearest range %s",
                cars, model.ranges[nearest])
    return model.assignment[nearest], True
