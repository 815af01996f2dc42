"""The two-mode planning loop: learn situations, then optimize per situation on demand.

Mode 1 learns a :class:`~planopt.situations.SituationModel`. Mode 2 watches
the context: when the detected situation changes, the knowledge base is
asked for a configuration and, failing that, an optimizer is run to
completion for the situation's representative context and its result is
stored.
"""

from __future__ import annotations

import json
import logging
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .optimizers import OptimizationResult, OptimizerConfig, optimize, system_oracle
from .pareto import ObjectiveVector, hypervolume_2d, reference_point
from .situations import (
    ContextRange,
    SituationModel,
    detect_situation,
    learn_situations,
    make_ranges,
)
from .space import Configuration, check
from .surrogate import BlackBoxSystem, Context

log = logging.getLogger(__name__)

KB_VERSION = 1


# -- choosing one configuration from a front -------------------------------------


def _normalized(front) -> np.ndarray:
    objs = np.array([obj for _, obj in front], dtype=float)
    lo, hi = objs.min(axis=0), objs.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return (objs - lo) / span


def knee_point(front) -> int:
    """Index of the front member farthest below the chord between the extremes.

    Objectives are min-max normalized over the front, which puts the
    extremes at (0, 1) and (1, 0). Equal distances (e.g. collinear fronts)
    go to the member closest to the ideal point (0, 0), then the earliest.
    """
    z = _normalized(front)
    below = np.round((1.0 - z[:, 0] - z[:, 1]) / np.sqrt(2.0), 12)
    ideal = np.round(np.hypot(z[:, 0], z[:, 1]), 12)
    return min(range(len(front)), key=lambda i: (-below[i], ideal[i], i))


CHOOSERS: dict[str, Callable] = {
    "knee": knee_point,
    "min_trip_overhead": lambda front: min(range(len(front)), key=lambda i: (front[i][1][0], i)),
    "min_routing_cost": lambda front: min(range(len(front)), key=lambda i: (front[i][1][1], i)),
}


# -- knowledge base ---------------------------------------------------------------


@dataclass
class Record:
    front: list  # [(configuration, ObjectiveVector)]
    chosen: Configuration
    technique: str
    created_at: float
    budget_used: int

    def to_dict(self) -> dict:
        return {
            "front": [
                {"config": list(cfg), "trip_overhead": obj[0], "routing_cost": obj[1]}
                for cfg, obj in self.front
            ],
            "chosen": list(self.chosen),
            "technique": self.technique,
            "created_at": self.created_at,
            "budget_used": self.budget_used,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Record":
        front = [
            (tuple(e["config"]), ObjectiveVector(e["trip_overhead"], e["routing_cost"]))
            for e in d["front"]
        ]
        return cls(front, tuple(d["chosen"]), d["technique"], d["created_at"], d["budget_used"])


@dataclass
class KnowledgeBase:
    records: dict[int, Record] = field(default_factory=dict)
    ref_point: tuple[float, float] | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "version": KB_VERSION,
                "ref_point": None if self.ref_point is None else list(self.ref_point),
                "records": {str(k): r.to_dict() for k, r in sorted(self.records.items())},
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "KnowledgeBase":
        d = json.loads(text)
        if d.get("version") != KB_VERSION:
            raise ValueError(f"unsupported knowledge base version {d.get('version')!r}")
        ref = d.get("ref_point")
        return cls(
            {int(k): Record.from_dict(r) for k, r in d["records"].items()},
            None if ref is None else tuple(ref),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "KnowledgeBase":
        with open(path) as fh:
            return cls.from_json(fh.read())


def kb_store(kb: KnowledgeBase, situation: int, result: OptimizationResult,
             chooser: str | Callable = "knee", created_at: float | None = None) -> KnowledgeBase:
    """Store a result unless the situation already has a front with more hypervolume.

    Both fronts are measured against ``kb.ref_point`` or, when it is unset,
    against a reference point derived from the union of the two fronts.
    """
    if not result.front:
        raise ValueError("cannot store an empty front")
    choose = CHOOSERS[chooser] if isinstance(chooser, str) else chooser
    front = list(result.front)
    record = Record(
        front=front,
        chosen=tuple(front[choose(front)][0]),
        technique=result.technique,
        created_at=time.time() if created_at is None else created_at,
        budget_used=len(result.history),
    )
    old = kb.records.get(situation)
    if old is not None:
        ref = kb.ref_point or reference_point(old.front + front)
        if hypervolume_2d(front, ref) <= hypervolume_2d(old.front, ref):
            return kb
    kb.records[situation] = record
    return kb


def kb_lookup(kb: KnowledgeBase, situation: int) -> Record | None:
    return kb.records.get(situation)


# -- mode 2 -------------------------------------------------------------------------


@dataclass
class PlannerState:
    model: SituationModel
    kb: KnowledgeBase = field(default_factory=KnowledgeBase)
    current_situation: int | None = None
    active: str = "idle"  # "idle" | "optimizing"
    applied: Configuration | None = None


@dataclass(frozen=True)
class Action:
    kind: str  # "none" | "apply"
    situation: int
    config: Configuration | None = None
    source: str | None = None  # "cache" | "optimized"
    evaluations: int = 0
    out_of_range: bool = False


@dataclass
class PlannerSettings:
    optimizer: str = "nsga2"
    optimizer_config: OptimizerConfig = field(default_factory=OptimizerConfig)
    samples_per_eval: int = 200
    aggregation: str = "median"
    chooser: str = "knee"
    seed: int = 0


def planner_step(state: PlannerState, ctx: Context, system: BlackBoxSystem,
                 settings: PlannerSettings | None = None,
                 clock: Callable[[], float] = time.time) -> tuple[PlannerState, Action]:
    """Detect the situation for ``ctx`` and act on a change (see module docstring)."""
    settings = settings or PlannerSettings()
    sid, outside = detect_situation(state.model, ctx)
    if sid == state.current_situation:
        return state, Action("none", sid, out_of_range=outside)
    state.current_situation = sid
    record = kb_lookup(state.kb, sid)
    if record is not None:
        check(system.space, record.chosen)
        state.applied = record.chosen
        return state, Action("apply", sid, record.chosen, "cache", 0, outside)

    situation = state.model.situation(sid)
    oracle = system_oracle(system, Context(situation.representative),
                           settings.samples_per_eval, settings.aggregation,
                           seed=settings.seed * 1000 + sid)
    state.active = "optimizing"
    try:
        result = optimize(settings.optimizer, system.space, oracle, settings.optimizer_config)
    finally:
        state.active = "idle"
    kb_store(state.kb, sid, result, settings.chooser, created_at=clock())
    chosen = state.kb.records[sid].chosen
    check(system.space, chosen)
    state.applied = chosen
    return state, Action("apply", sid, chosen, "optimized", len(oracle.log), outside)


@dataclass
class Mode1Params:
    ranges: Sequence[ContextRange] = field(default_factory=lambda: make_ranges(100, 800, 50))
    samples_per_state: int = 1000
    k_candidates: Sequence[int] = tuple(range(2, 10))
    baseline_cfg: Configuration | None = None


@dataclass
class Transcript:
    events: list[dict] = field(default_factory=list)
    state: PlannerState | None = None

    def emit(self, timestamp, kind: str, situation, **details) -> None:
        self.events.append({"timestamp": timestamp, "event_kind": kind,
                            "situation": situation, "details": details})

    def count(self, kind: str) -> int:
        return sum(1 for e in self.events if e["event_kind"] == kind)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e) + "\n" for e in self.events)


def run_modes(system: BlackBoxSystem, mode1: Mode1Params, trace: Sequence[int],
              settings: PlannerSettings | None = None,
              model: SituationModel | None = None,
              kb: KnowledgeBase | None = None) -> Transcript:
    """Mode 1 (unless a model is given), then replay ``trace`` through Mode 2.

    Timestamps are logical: 0 for Mode 1, then the 1-based position in the
    trace. Contexts arriving while an optimization runs wait in a queue; the
    queue length at the start of each optimization is reported.
    """
    settings = settings or PlannerSettings()
    transcript = Transcript()
    if model is None:
        model = learn_situations(system, mode1.ranges, mode1.baseline_cfg,
                                 mode1.samples_per_state, mode1.k_candidates,
                                 seed=settings.seed)
    transcript.emit(0, "situations_learned", None, k=model.k,
                    situations=[[str(model.ranges[i]) for i in s.ranges]
                                for s in model.situations])
    state = PlannerState(model, kb or KnowledgeBase())
    pending = deque(enumerate(trace, start=1))
    while pending:
        t, cars = pending.popleft()
        ctx = Context(int(cars))
        previous = state.current_situation
        sid, _ = detect_situation(model, ctx)
        if sid != previous and kb_lookup(state.kb, sid) is None:
            transcript.emit(t, "optimization_started", sid, cars=int(cars),
                            representative=model.situation(sid).representative,
                            queued_contexts=len(pending))
        state, action = planner_step(state, ctx, system, settings, clock=lambda t=t: float(t))
        if action.out_of_range:
            transcript.emit(t, "out_of_range", sid, cars=int(cars))
        transcript.emit(t, "detected", sid, cars=int(cars), previous=previous)
        if action.kind == "none":
            continue
        if action.source == "cache":
            transcript.emit(t, "cache_hit", sid, evaluations=0)
        else:
            record = state.kb.records[sid]
            transcript.emit(t, "optimization", sid, technique=record.technique,
                            evaluations=action.evaluations, front_size=len(record.front))
        transcript.emit(t, "apply", sid, config=list(action.config))
    transcript.state = state
    return transcript
