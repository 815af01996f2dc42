"""Dominance, pareto fronts and exact two-objective hypervolume.

Both objectives (trip overhead, routing cost) are minimized. Functions here
accept either bare objective pairs or ``(configuration, objectives)`` entries.
"""

from __future__ import annotations

import csv
import io
from typing import Iterable, NamedTuple, Sequence

import numpy as np


class ObjectiveVector(NamedTuple):
    trip_overhead: float
    routing_cost: float


class ReferencePoint(NamedTuple):
    trip_overhead: float
    routing_cost: float


def _objectives(points) -> np.ndarray:
    """Stack objectives of entries or bare pairs into an ``(n, 2)`` array."""
    rows = []
    for p in points:
        if len(p) == 2 and isinstance(p[0], (tuple, list)):
            p = p[1]
        rows.append((float(p[0]), float(p[1])))
    return np.array(rows, dtype=float).reshape(-1, 2)


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """True iff ``a`` is no worse than ``b`` everywhere and better somewhere."""
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def pareto_front(points: Iterable) -> list:
    """Non-dominated subset, sorted ascending by trip overhead.

    Of several entries with identical objectives only the first is kept.
    Input entries are returned unchanged (entries stay entries, pairs stay
    pairs).
    """
    points = list(points)
    if not points:
        return []
    objs = _objectives(points)
    # Lexicographic sort with the original index as the final key keeps the
    # first occurrence of duplicates.
    order = sorted(range(len(points)), key=lambda i: (objs[i, 0], objs[i, 1], i))
    front = []
    best_cost = np.inf
    for i in order:
        if objs[i, 1] < best_cost:
            front.append(points[i])
            best_cost = objs[i, 1]
    return front


def hypervolume_2d(front: Iterable, ref: Sequence[float]) -> float:
    """Area dominated by ``front`` and bounded by ``ref``.

    Points that are not strictly better than ``ref`` in both objectives add
    nothing. The input need not be non-dominated.
    """
    objs = _objectives(front)
    r1, r2 = float(ref[0]), float(ref[1])
    objs = objs[(objs[:, 0] < r1) & (objs[:, 1] < r2)]
    if len(objs) == 0:
        return 0.0
    objs = objs[np.lexsort((objs[:, 1], objs[:, 0]))]
    area = 0.0
    best = r2
    for to, rc in objs:
        if rc < best:
            area += (r1 - to) * (best - rc)
            best = rc
    return float(area)


def hypervolume_contributions(front: Iterable, candidates, ref: Sequence[float]) -> np.ndarray:
    """Exclusive hypervolume each candidate would add to ``front``.

    Equals ``hypervolume_2d(front + [c], ref) - hypervolume_2d(front, ref)``
    for every row ``c`` of ``candidates``, computed for all rows at once by
    integrating over the front's staircase.
    """
    cand = np.asarray(candidates, dtype=float).reshape(-1, 2)
    r1, r2 = float(ref[0]), float(ref[1])
    f = _objectives(pareto_front(_objectives(front)))
    f = f[(f[:, 0] < r1) & (f[:, 1] < r2)]
    starts = np.concatenate([[-np.inf], f[:, 0]])
    ends = np.concatenate([f[:, 0], [r1]])
    heights = np.concatenate([[r2], f[:, 1]])
    lo = np.maximum(starts[None, :], cand[:, [0]])
    hi = np.minimum(ends[None, :], r1)
    width = np.clip(hi - lo, 0.0, None)
    height = np.clip(heights[None, :] - cand[:, [1]], 0.0, None)
    return (width * height).sum(axis=1)


def hypervolume_evolution(history: Sequence, ref: Sequence[float]) -> list[float]:
    """Hypervolume of the best-so-far front after each evaluation."""
    objs = _objectives(history)
    curve = []
    front: list = []
    for p in objs:
        front = pareto_front(front + [tuple(p)])
        curve.append(hypervolume_2d(front, ref))
    return curve


def reference_point(points: Iterable, scale: float = 1.1) -> ReferencePoint:
    """Componentwise worst observed objective times ``scale``."""
    objs = _objectives(points)
    if len(objs) == 0:
        raise ValueError("need at least one point to derive a reference point")
    worst = objs.max(axis=0) * scale
    return ReferencePoint(float(worst[0]), float(worst[1]))


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def front_to_csv(front: Sequence, names: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(names) + ["trip_overhead", "routing_cost"])
    for cfg, obj in front:
        writer.writerow([_fmt(v) for v in cfg] + [_fmt(float(obj[0])), _fmt(float(obj[1]))])
    return buf.getvalue()


def curve_to_csv(curve: Sequence[float]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["eval_index", "hypervolume"])
    for i, hv in enumerate(curve):
        writer.writerow([i, repr(float(hv))])
    return buf.getvalue()
