"""Command-line entry point: ``planopt {learn,optimize,plan,study,report}``.

Every option can also come from a JSON file given with ``--config``; keys
are the long option names with dashes replaced by underscores. Options on
the command line win over the file. Exit codes: 0 ok, 1 usage error,
2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .optimizers import TECHNIQUES, OptimizerConfig, optimize, system_oracle
from .pareto import curve_to_csv, front_to_csv, hypervolume_evolution, reference_point
from .planner import KnowledgeBase, Mode1Params, PlannerSettings, run_modes
from .situations import SituationModel, learn_situations, parse_ranges
from .study import ConfigError, StudyPlan, report_from_logs, run_study
from .surrogate import Context, MiniNav

EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 1, 2, 3

DEFAULTS = {
    "learn": {"ranges": "100:800:50", "samples": 1000, "k_min": 2, "k_max": 9,
              "out": "situations.json", "seed": 0},
    "optimize": {"technique": "nsga2", "cars": 500, "budget": 100, "samples": 200,
                 "aggregation": "median", "out": "run", "seed": 0},
    "plan": {"model": None, "ranges": "100:800:50", "samples_per_state": 1000,
             "trace": None, "technique": "nsga2", "budget": 100, "samples": 200,
             "chooser": "knee", "kb": None, "out": "planner", "seed": 0},
    "study": {"plan": None, "out": "results", "workers": 1, "replicates": None,
              "budget": None, "samples": None, "full_scale": False, "seed": None},
    "report": {"study": None, "out": None},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="planopt", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="JSON file with option values")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("learn", help="learn situations (Mode 1) into a model file")
    common(p)
    p.add_argument("--ranges", help="start:stop:step car-count ranges")
    p.add_argument("--samples", type=int, help="samples per context state")
    p.add_argument("--k-min", type=int)
    p.add_argument("--k-max", type=int)
    p.add_argument("--out")

    p = sub.add_parser("optimize", help="optimize one technique at one context")
    common(p)
    p.add_argument("--technique", choices=TECHNIQUES)
    p.add_argument("--cars", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--samples", type=int, help="samples per evaluation")
    p.add_argument("--aggregation", choices=("median", "mean"))
    p.add_argument("--out")

    p = sub.add_parser("plan", help="replay a context trace through the planner")
    common(p)
    p.add_argument("--model", help="situation model JSON (learned if omitted)")
    p.add_argument("--ranges")
    p.add_argument("--samples-per-state", type=int)
    p.add_argument("--trace", help="JSON list of car counts, or one count per line")
    p.add_argument("--technique", choices=TECHNIQUES)
    p.add_argument("--budget", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--chooser", choices=("knee", "min_trip_overhead", "min_routing_cost"))
    p.add_argument("--kb", help="knowledge base file to load (if present) and save")
    p.add_argument("--out")

    p = sub.add_parser("study", help="run the replicated optimizer comparison")
    common(p)
    p.add_argument("--plan", help="study plan JSON")
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--full-scale", action="store_true", default=None,
                   help="30 replicates and 5000 samples per evaluation")

    p = sub.add_parser("report", help="recompute summaries from a study's logs")
    common(p)
    p.add_argument("--study", help="study output directory")
    p.add_argument("--out", help="where to write (default: the study directory)")
    return parser


def _options(command: str, args: argparse.Namespace) -> dict:
    opts = dict(DEFAULTS[command])
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(loaded) - set(opts)
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")
        opts.update(loaded)
    for key in opts:
        value = getattr(args, key, None)
        if value is not None:
            opts[key] = value
    return opts


def _read_trace(path) -> list[int]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read trace {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        data = [line.strip() for line in text.splitlines() if line.strip()]
    try:
        return [int(v) for v in data]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"trace must list car counts: {exc}") from exc


def cmd_learn(o: dict) -> None:
    try:
        ranges = parse_ranges(o["ranges"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    model = learn_situations(MiniNav(), ranges, samples_per_state=o["samples"],
                             k_candidates=range(o["k_min"], o["k_max"] + 1), seed=o["seed"])
    out = Path(o["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(model.to_json() + "\n")
    for s in model.situations:
        members = ", ".join(str(model.ranges[i]) for i in s.ranges)
        print(f"situation {s.id}: {members}")


def _optimizer_config(o: dict) -> OptimizerConfig:
    if o["samples"] < 1:
        raise ConfigError("samples must be >= 1")
    try:
        return OptimizerConfig(budget=o["budget"], seed=o["seed"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_optimize(o: dict) -> None:
    cfg = _optimizer_config(o)
    system = MiniNav()
    oracle = system_oracle(system, Context(o["cars"]), o["samples"], o["aggregation"],
                           seed=o["seed"])
    result = optimize(o["technique"], system.space, oracle, cfg)
    out = Path(o["out"])
    out.mkdir(parents=True, exist_ok=True)
    objectives = result.objectives()
    ref = reference_point(objectives)
    (out / "front.csv").write_text(front_to_csv(result.front, system.space.names))
    (out / "curve.csv").write_text(curve_to_csv(hypervolume_evolution(objectives, ref)))
    (out / "log.jsonl").write_text(result.log_jsonl())
    summary = {"technique": result.technique, "cars": o["cars"], "budget": o["budget"],
               "seed": o["seed"], "evaluations": len(result.history),
               "ref_point": list(ref), "front_size": len(result.front)}
    (out / "result.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"{len(result.history)} evaluations, front of {len(result.front)} -> {out}")


def cmd_plan(o: dict) -> None:
    if not o["trace"]:
        raise ConfigError("plan needs --trace")
    trace = _read_trace(o["trace"])
    system = MiniNav()
    model = None
    if o["model"]:
        try:
            model = SituationModel.from_json(Path(o["model"]).read_text())
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot load situation model: {exc}") from exc
    kb = None
    if o["kb"] and Path(o["kb"]).exists():
        kb = KnowledgeBase.load(o["kb"])
    try:
        ranges = parse_ranges(o["ranges"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    mode1 = Mode1Params(ranges, o["samples_per_state"])
    settings = PlannerSettings(
        optimizer=o["technique"], optimizer_config=_optimizer_config(o),
        samples_per_eval=o["samples"], chooser=o["chooser"], seed=o["seed"])
    transcript = run_modes(system, mode1, trace, settings, model=model, kb=kb)
    out = Path(o["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "transcript.jsonl").write_text(transcript.to_jsonl())
    transcript.state.kb.save(o["kb"] or out / "kb.json")
    print(f"{transcript.count('optimization')} optimizations, "
          f"{transcript.count('cache_hit')} cache hits")


def cmd_study(o: dict) -> None:
    if o["plan"]:
        try:
            raw = json.loads(Path(o["plan"]).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read plan {o['plan']}: {exc}") from exc
    else:
        raw = {}
    if o["full_scale"]:
        raw = {"replicates": 30, "samples_per_eval": 5000, **raw}
    for key, target in (("replicates", "replicates"), ("budget", "budget"),
                        ("samples", "samples_per_eval"), ("seed", "seed")):
        if o[key] is not None:
            raw[target] = o[key]
    plan = StudyPlan.from_dict(raw)
    report = run_study(plan, o["out"], workers=o["workers"])
    print(f"{len(report.rows)} runs -> {o['out']}")


def cmd_report(o: dict) -> None:
    if not o["study"]:
        raise ConfigError("report needs --study")
    if not (Path(o["study"]) / "plan.json").exists():
        raise ConfigError(f"{o['study']} has no plan.json")
    report_from_logs(o["study"], o["out"])
    print(f"report recomputed from {o['study']}")


COMMANDS = {"learn": cmd_learn, "optimize": cmd_optimize, "plan": cmd_plan,
            "study": cmd_study, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("a subcommand is required")
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"planopt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](_options(args.command, args))
    except ConfigError as exc:
        print(f"planopt: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        logging.getLogger(__name__).debug("failure", exc_info=True)
        print(f"planopt: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
