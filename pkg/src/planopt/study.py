"""Replicated comparison of optimizers on MiniNav, with summaries and rank-sum tests."""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from scipy.stats import norm, rankdata

from .optimizers import TECHNIQUES, OptimizerConfig, evaluation_log_jsonl, optimize, system_oracle
from .pareto import (
    ReferencePoint,
    curve_to_csv,
    hypervolume_2d,
    hypervolume_evolution,
    pareto_front,
    reference_point,
)
from .surrogate import Context, MiniNav

log = logging.getLogger(__name__)

METRICS = ("min_trip_overhead", "min_routing_cost", "hypervolume")
EXACT_LIMIT = 16


class ConfigError(ValueError):
    """Invalid study plan or command-line configuration."""


# -- statistics -------------------------------------------------------------------


def mann_whitney_u(sample_a: Sequence[float], sample_b: Sequence[float]) -> tuple[float, float]:
    """Two-sided Wilcoxon-Mann-Whitney test with midranks for ties.

    ``U`` counts the pairs in which ``a`` beats (exceeds) ``b``, ties counting
    one half. Samples with ``n + m <= 16`` get the exact permutation p-value
    over the observed midranks; larger ones use the normal approximation with
    tie and continuity corrections.
    """
    n, m = len(sample_a), len(sample_b)
    if n == 0 or m == 0:
        raise ValueError("both samples must be non-empty")
    ranks = rankdata(list(sample_a) + list(sample_b))
    u = float(ranks[:n].sum() - n * (n + 1) / 2)
    center = n * m / 2
    observed = abs(u - center)
    if n + m <= EXACT_LIMIT:
        total = hits = 0
        offset = n * (n + 1) / 2
        for combo in itertools.combinations(range(n + m), n):
            total += 1
            uc = sum(ranks[i] for i in combo) - offset
            if abs(uc - center) >= observed - 1e-9:
                hits += 1
        return u, min(1.0, hits / total)
    N = n + m
    _, counts = _tie_counts(ranks)
    tie_term = sum(t**3 - t for t in counts) / (N * (N - 1))
    sigma = math.sqrt(n * m / 12 * ((N + 1) - tie_term))
    if sigma == 0:
        return u, 1.0
    z = max(observed - 0.5, 0.0) / sigma
    return u, min(1.0, 2.0 * float(norm.sf(z)))


def _tie_counts(ranks) -> tuple[list[float], list[int]]:
    values = sorted(ranks)
    groups = [(k, len(list(g))) for k, g in itertools.groupby(values)]
    return [k for k, _ in groups], [c for _, c in groups]


def summarize(rows: Iterable[dict], metrics: Sequence[str] = METRICS) -> list[dict]:
    """Average and median of every metric per (situation, technique)."""
    cells: dict[tuple, list[dict]] = {}
    for row in rows:
        cells.setdefault((row["situation"], row["technique"]), []).append(row)
    out = []
    for (situation, technique), members in cells.items():
        for metric in metrics:
            values = [r[metric] for r in members]
            out.append({
                "situation": situation,
                "technique": technique,
                "metric": metric,
                "average": statistics.fmean(values),
                "median": statistics.median(values),
            })
    return out


def significance(rows: Sequence[dict], metrics: Sequence[str] = METRICS) -> list[dict]:
    """U and p for every ordered technique pair, per situation and metric."""
    situations = list(dict.fromkeys(r["situation"] for r in rows))
    techniques = list(dict.fromkeys(r["technique"] for r in rows))
    out = []
    for s in situations:
        for metric in metrics:
            for a, b in itertools.permutations(techniques, 2):
                va = [r[metric] for r in rows if r["situation"] == s and r["technique"] == a]
                vb = [r[metric] for r in rows if r["situation"] == s and r["technique"] == b]
                u, p = mann_whitney_u(va, vb)
                out.append({"situation": s, "metric": metric, "tech_a": a, "tech_b": b,
                            "U": u, "p": p})
    return out


# -- plan and report -----------------------------------------------------------------


@dataclass
class StudyPlan:
    situations: tuple[int, ...] = (500, 700, 800)
    techniques: tuple[str, ...] = ("bogp", "nsga2", "novelty", "random")
    replicates: int = 10
    budget: int = 100
    samples_per_eval: int = 200
    seed: int = 0
    ref_policy: dict = field(default_factory=lambda: {"kind": "auto", "scale": 1.1})
    aggregation: str = "median"

    def __post_init__(self):
        self.situations = tuple(int(s) for s in self.situations)
        self.techniques = tuple(self.techniques)
        if isinstance(self.ref_policy, str):
            self.ref_policy = {"kind": self.ref_policy, "scale": 1.1}
        unknown = [t for t in self.techniques if t not in TECHNIQUES]
        if unknown:
            raise ConfigError(f"unknown techniques {unknown}; expected {TECHNIQUES}")
        if not self.situations or any(s <= 0 for s in self.situations):
            raise ConfigError("situations must be positive car counts")
        if self.replicates < 1 or self.budget < 1 or self.samples_per_eval < 1:
            raise ConfigError("replicates, budget and samples_per_eval must be >= 1")
        kind = self.ref_policy.get("kind", "auto")
        if kind == "fixed":
            points = self.ref_policy.get("points", {})
            if any(str(s) not in points for s in self.situations):
                raise ConfigError("fixed ref_policy needs a point for every situation")
        elif kind != "auto":
            raise ConfigError(f"unknown ref_policy kind {kind!r}")

    @classmethod
    def full_scale(cls, **overrides) -> "StudyPlan":
        return cls(**{"replicates": 30, "samples_per_eval": 5000, **overrides})

    @classmethod
    def from_dict(cls, d: dict) -> "StudyPlan":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown plan keys: {sorted(extra)}")
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        d = asdict(self)
        d["situations"] = list(self.situations)
        d["techniques"] = list(self.techniques)
        return d

    def reference(self, situation: int, objectives) -> ReferencePoint:
        if self.ref_policy.get("kind") == "fixed":
            return ReferencePoint(*self.ref_policy["points"][str(situation)])
        return reference_point(objectives, self.ref_policy.get("scale", 1.1))


@dataclass
class StudyReport:
    plan: StudyPlan
    refs: dict[int, ReferencePoint]
    rows: list[dict]
    curves: dict[tuple[int, str, int], list[float]]
    summary: list[dict]
    significance: list[dict]

    def cell_values(self, situation: int, technique: str, metric: str) -> list[float]:
        return [r[metric] for r in self.rows
                if r["situation"] == situation and r["technique"] == technique]

    def median(self, situation: int, technique: str, metric: str) -> float:
        return statistics.median(self.cell_values(situation, technique, metric))

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        (out / "curves").mkdir(parents=True, exist_ok=True)
        (out / "summary.csv").write_text(_csv(
            ["situation", "technique", "metric", "average", "median"], self.summary))
        (out / "significance.csv").write_text(_csv(
            ["situation", "metric", "tech_a", "tech_b", "U", "p"], self.significance))
        (out / "replicates.csv").write_text(_csv(
            ["situation", "technique", "replicate", *METRICS], self.rows))
        (out / "refs.csv").write_text(_csv(
            ["situation", "trip_overhead_ref", "routing_cost_ref"],
            [{"situation": s, "trip_overhead_ref": r[0], "routing_cost_ref": r[1]}
             for s, r in self.refs.items()]))
        for (s, t, rep), curve in self.curves.items():
            (out / "curves" / f"{s}_{t}_{rep:02d}.csv").write_text(curve_to_csv(curve))


def _csv(header: Sequence[str], rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(row[h]) for h in header])
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def build_report(plan: StudyPlan, histories: dict[tuple[int, str, int], list]) -> StudyReport:
    """Turn per-cell objective histories into metrics, curves and tests.

    ``histories`` maps ``(situation, technique, replicate)`` to the ordered
    list of ``(trip_overhead, routing_cost)`` pairs of that run. Everything
    in the report is a function of these histories and the plan only.
    """
    refs = {}
    for s in plan.situations:
        pooled = [p for (cs, _, _), h in sorted(histories.items()) if cs == s for p in h]
        refs[s] = plan.reference(s, pooled)
    rows, curves = [], {}
    for s in plan.situations:
        for t in plan.techniques:
            for rep in range(plan.replicates):
                history = histories[(s, t, rep)]
                front = pareto_front(history)
                rows.append({
                    "situation": s,
                    "technique": t,
                    "replicate": rep,
                    "min_trip_overhead": min(p[0] for p in history),
                    "min_routing_cost": min(p[1] for p in history),
                    "hypervolume": hypervolume_2d(front, refs[s]),
                })
                curves[(s, t, rep)] = hypervolume_evolution(history, refs[s])
    return StudyReport(plan, refs, rows, curves, summarize(rows), significance(rows))


def _log_name(situation: int, technique: str, replicate: int) -> str:
    return f"{situation}_{technique}_{replicate:02d}.jsonl"


def _run_cell(args) -> tuple[tuple[int, str, int], str, list]:
    plan, situation, technique, rep = args
    system = MiniNav()
    seed = plan.seed + rep
    oracle = system_oracle(system, Context(situation), plan.samples_per_eval,
                           plan.aggregation, seed=seed)
    result = optimize(technique, system.space, oracle,
                      OptimizerConfig(budget=plan.budget, seed=seed))
    text = evaluation_log_jsonl(result.history, technique, situation=situation,
                                replicate=rep)
    history = [tuple(e.objectives) for e in result.history]
    return (situation, technique, rep), text, history


def run_study(plan: StudyPlan, out_dir=None, workers: int = 1) -> StudyReport:
    """Run every (situation, technique, replicate) cell and assemble the report.

    Replicate ``r`` of every technique uses seed ``plan.seed + r`` for both the
    optimizer and the measurement noise. Logs are written as cells finish, so
    a failure leaves the completed cells on disk.
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        (out / "logs").mkdir(parents=True, exist_ok=True)
        (out / "plan.json").write_text(json.dumps(plan.to_dict(), indent=2) + "\n")
    jobs = [(plan, s, t, rep) for s in plan.situations for t in plan.techniques
            for rep in range(plan.replicates)]
    histories = {}
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = pool.map(_run_cell, jobs)
            for key, text, history in results:
                histories[key] = history
                if out is not None:
                    (out / "logs" / _log_name(*key)).write_text(text)
    else:
        for job in jobs:
            key, text, history = _run_cell(job)
            histories[key] = history
            if out is not None:
                (out / "logs" / _log_name(*key)).write_text(text)
    report = build_report(plan, histories)
    if out is not None:
        report.write(out)
    return report


def load_histories(log_dir) -> dict[tuple[int, str, int], list]:
    histories = {}
    for path in sorted(Path(log_dir).glob("*.jsonl")):
        records = [json.loads(line) for line in path.read_text().splitlines() if line]
        if not records:
            continue
        first = records[0]
        key = (int(first["situation"]), first["technique"], int(first["replicate"]))
        records.sort(key=lambda r: r["eval_index"])
        histories[key] = [(r["trip_overhead"], r["routing_cost"]) for r in records]
    return histories


def report_from_logs(study_dir, out_dir=None) -> StudyReport:
    """Recompute a study's report from its ``plan.json`` and ``logs/``."""
    study = Path(study_dir)
    plan = StudyPlan.from_dict(json.loads((study / "plan.json").read_text()))
    histories = load_histories(study / "logs")
    missing = [(s, t, r) for s in plan.situations for t in plan.techniques
               for r in range(plan.replicates) if (s, t, r) not in histories]
    if missing:
        raise ConfigError(f"missing logs for {len(missing)} cells, e.g. {missing[0]}")
    report = build_report(plan, histories)
    report.write(out_dir if out_dir is not None else study)
    return report


def oracle_hypervolume(situation: int, ref: Sequence[float], system: MiniNav | None = None) -> float:
    """Hypervolume of MiniNav's exact noise-free front at ``situation`` cars."""
    system = system or MiniNav()
    return hypervolume_2d(system.true_pareto_front(Context(situation)), ref)
