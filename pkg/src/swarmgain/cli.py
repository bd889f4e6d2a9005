"""Command-line entry point.

Every command writes ``manifest.json`` next to its outputs. The manifest
holds the fully resolved configuration and SHA-256 digests of the input
files, and ``swarmgain replay --manifest PATH`` re-executes it.

Exit codes: 0 success, 1 runtime failure, 2 invalid input.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path
from typing import Any, Callable

from . import __version__, experiments, model, oracle
from .simulator import ConfigError, ScenarioConfig, run
from .trace import TraceError, parse_catalog, parse_trace, write_catalog, write_trace
from .workload import WorkloadError, WorkloadSpec, generate

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2

MANIFEST_NAME = "manifest.json"


class InputError(ValueError):
    """Bad command-line input; reported with exit code 2."""


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _read_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise InputError(f"{path}: expected a JSON object")
    return data


def _dump_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(out: Path, name: str, text: str) -> str:
    (out / name).write_text(text, encoding="utf-8", newline="\n")
    return name


def _parse_grid(text: str) -> list[float]:
    try:
        grid = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"--grid: cannot parse {text!r}") from None
    if not grid:
        raise InputError("--grid must list at least one value")
    return grid


# ---------------------------------------------------------------------------
# resolution: CLI args -> JSON-serialisable plan


def _scenario_from_args(args) -> dict:
    data = _read_json(args.scenario) if getattr(args, "scenario", None) else {}
    if getattr(args, "seed", None) is not None:
        data["rng_seed"] = args.seed
    return ScenarioConfig.from_dict(data).to_dict()


def _spec_from_args(args, required: bool) -> dict | None:
    if not getattr(args, "spec", None):
        if required:
            raise InputError("--spec is required")
        return None
    data = _read_json(args.spec)
    if getattr(args, "seed", None) is not None:
        data["rng_seed"] = args.seed
    return WorkloadSpec.from_dict(data).to_dict()


def _trace_inputs(args, required: bool) -> dict | None:
    if not args.trace and not args.catalog:
        if required:
            raise InputError("--trace and --catalog are required")
        return None
    if not (args.trace and args.catalog):
        raise InputError("--trace and --catalog must be given together")
    for p in (args.trace, args.catalog):
        if not Path(p).is_file():
            raise InputError(f"{p}: no such file")
    return {"trace": str(Path(args.trace).resolve()), "catalog": str(Path(args.catalog).resolve()),
            "lenient": bool(args.lenient)}


def resolve(args) -> dict:
    cmd = args.command
    plan: dict[str, Any] = {"command": cmd}
    if cmd == "generate":
        plan["spec"] = _spec_from_args(args, required=True)
    elif cmd == "simulate":
        plan["inputs"] = _trace_inputs(args, required=True)
        plan["scenario"] = _scenario_from_args(args)
    elif cmd == "analyze":
        plan["inputs"] = _trace_inputs(args, required=True)
        scen = _scenario_from_args(args)
        plan["m"] = int(args.m) if args.m is not None else scen["min_swarm_m"]
        plan["alpha"] = float(args.alpha) if args.alpha is not None else scen["participation_alpha"]
        plan["bitrate_split"] = scen["bitrate_split"]
        plan["ladder_kbps"] = scen["ladder_kbps"]
        model.ObstacleParams(plan["m"], plan["alpha"])
    elif cmd == "sweep":
        plan["axis"] = args.axis
        plan["grid"] = _parse_grid(args.grid)
        plan["scenario"] = _scenario_from_args(args)
        plan["inputs"] = _trace_inputs(args, required=False)
        plan["spec"] = _spec_from_args(args, required=plan["inputs"] is None or args.axis == "capacity")
    elif cmd == "bundle-scan":
        plan["inputs"] = _trace_inputs(args, required=False)
        plan["spec"] = _spec_from_args(args, required=plan["inputs"] is None)
        if plan["inputs"] is not None:
            plan["spec"] = None
        plan["k"] = int(args.k)
        plan["samples"] = int(args.samples)
        plan["seed"] = int(args.seed) if args.seed is not None else 0
        plan["m"] = int(args.m)
        if plan["k"] < 2:
            raise InputError("--k must be at least 2")
        if plan["samples"] < 1:
            raise InputError("--samples must be positive")
    elif cmd == "oracle":
        plan["u"], plan["r"], plan["m"] = float(args.u), float(args.r), int(args.m)
        plan["cycles"] = int(args.cycles)
        plan["seed"] = int(args.seed) if args.seed is not None else 0
        try:
            oracle.McConfig(plan["u"], plan["r"], plan["m"], plan["cycles"], plan["seed"])
        except ValueError as exc:
            raise InputError(str(exc)) from None
    else:  # pragma: no cover - argparse restricts choices
        raise InputError(f"unknown command {cmd!r}")
    return plan


# ---------------------------------------------------------------------------
# execution: plan -> output files


def _load_inputs(inputs: dict):
    catalog = parse_catalog(inputs["catalog"])
    records = parse_trace(inputs["trace"], catalog, lenient=inputs.get("lenient", False)).records
    return records, catalog


def _exec_generate(plan, out: Path, jobs: int) -> list[str]:
    catalog, records = generate(WorkloadSpec.from_dict(plan["spec"]))
    write_trace(records, out / "trace.csv")
    write_catalog(catalog, out / "catalog.csv")
    return ["trace.csv", "catalog.csv"]


def _exec_simulate(plan, out: Path, jobs: int) -> list[str]:
    records, catalog = _load_inputs(plan["inputs"])
    report = run(records, catalog, ScenarioConfig.from_dict(plan["scenario"]))
    return [_write(out, "report.json", report.to_json()), _write(out, "swarms.csv", report.swarms_csv())]


def _exec_analyze(plan, out: Path, jobs: int) -> list[str]:
    records, catalog = _load_inputs(plan["inputs"])
    ladder = None
    if plan.get("ladder_kbps"):
        ladder = ScenarioConfig(ladder_kbps=tuple(plan["ladder_kbps"])).ladder
    rows = experiments.analyze(records, catalog, plan["m"], plan["alpha"], plan["bitrate_split"], ladder)
    cols = ("day", "isp", "swarms", "sessions", "G_theo")
    return [_write(out, "analysis.csv", experiments.rows_to_csv(rows, cols))]


def _exec_sweep(plan, out: Path, jobs: int) -> list[str]:
    spec = WorkloadSpec.from_dict(plan["spec"]) if plan.get("spec") else None
    records = catalog = None
    if plan.get("inputs") and plan["axis"] != "capacity":
        records, catalog = _load_inputs(plan["inputs"])
    try:
        rows = experiments.sweep(plan["axis"], plan["grid"], ScenarioConfig.from_dict(plan["scenario"]),
                                 spec=spec, records=records, catalog=catalog, jobs=jobs)
    except (ConfigError, model.ModelDomainError):
        raise
    except ValueError as exc:
        raise InputError(str(exc)) from None
    return [_write(out, "sweep.csv", experiments.rows_to_csv(rows, ("x", "G_sim", "G_theo")))]


def _exec_bundle_scan(plan, out: Path, jobs: int) -> list[str]:
    if plan.get("inputs"):
        records, catalog = _load_inputs(plan["inputs"])
    else:
        catalog, records = generate(WorkloadSpec.from_dict(plan["spec"]))
    items = experiments.item_params(records, catalog)
    try:
        res = experiments.bundle_scan(items, plan["k"], plan["samples"], plan["seed"], plan["m"])
    except ValueError as exc:
        raise InputError(str(exc)) from None
    return [_write(out, "bundle_scan.json", _dump_json(res.summary())),
            _write(out, "samples.csv", res.samples_csv())]


def _exec_oracle(plan, out: Path, jobs: int) -> list[str]:
    cfg = oracle.McConfig(plan["u"], plan["r"], plan["m"], plan["cycles"], plan["seed"], jobs=1)
    busy, unavail, stats = oracle.mc_busy_and_unavailability(cfg)
    params = model.SwarmParams(plan["r"], plan["u"], 1.0, 1.0)
    closed_busy = model.expected_busy_period(plan["u"], plan["r"], plan["m"])
    closed_p = model.unavailability(params, plan["m"])

    def finite(x):
        return x if math.isfinite(x) else None

    result = {
        "u": plan["u"], "r": plan["r"], "m": plan["m"], "cycles": busy.cycles,
        "busy_period": {"estimate": finite(busy.estimate), "stderr": finite(busy.stderr),
                        "closed_form": finite(closed_busy)},
        "unavailability": {"estimate": finite(unavail.estimate), "stderr": finite(unavail.stderr),
                           "closed_form": closed_p},
    }
    print(f"busy period   MC {busy.estimate:.6g} +/- {busy.stderr:.3g}  closed form {closed_busy:.6g}")
    print(f"unavailability MC {unavail.estimate:.6g} +/- {unavail.stderr:.3g}  closed form {closed_p:.6g}")
    return [_write(out, "oracle.json", _dump_json(result))]


EXECUTORS: dict[str, Callable] = {
    "generate": _exec_generate,
    "simulate": _exec_simulate,
    "analyze": _exec_analyze,
    "sweep": _exec_sweep,
    "bundle-scan": _exec_bundle_scan,
    "oracle": _exec_oracle,
}


def _digests(plan: dict) -> dict[str, str]:
    inputs = plan.get("inputs") or {}
    return {k: sha256_file(inputs[k]) for k in ("trace", "catalog") if k in inputs}


def _seed_of(plan: dict):
    for key in ("scenario", "spec"):
        if plan.get(key):
            return plan[key]["rng_seed"]
    return plan.get("seed")


def execute(plan: dict, out: Path, jobs: int = 1) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    digests = _digests(plan)
    outputs = EXECUTORS[plan["command"]](plan, out, jobs)
    manifest = {
        "command": plan["command"],
        "config": plan,
        "input_digests": digests,
        "seed": _seed_of(plan),
        "tool_version": __version__,
        "outputs": {name: sha256_file(out / name) for name in outputs},
    }
    _write(out, MANIFEST_NAME, _dump_json(manifest))
    return manifest


def replay(manifest_path: str, out: str | None, jobs: int = 1) -> dict:
    manifest = _read_json(manifest_path)
    plan = manifest.get("config")
    if not isinstance(plan, dict) or plan.get("command") not in EXECUTORS:
        raise InputError(f"{manifest_path}: not a swarmgain manifest")
    for name, digest in manifest.get("input_digests", {}).items():
        path = plan["inputs"][name]
        if not Path(path).is_file() or sha256_file(path) != digest:
            raise InputError(f"input {path} is missing or changed since the manifest was written")
    target = Path(out) if out else Path(manifest_path).resolve().parent
    return execute(plan, target, jobs)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="swarmgain", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, trace=False, scenario=False, spec=False):
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the RNG seed")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes")
        if trace:
            sp.add_argument("--trace", help="session trace CSV")
            sp.add_argument("--catalog", help="content catalog CSV")
            sp.add_argument("--lenient", action="store_true",
                            help="drop rows with unknown content instead of failing")
        if scenario:
            sp.add_argument("--scenario", help="scenario JSON")
        if spec:
            sp.add_argument("--spec", help="workload spec JSON")

    common(sub.add_parser("generate", help="write a synthetic trace and catalog"), spec=True)
    common(sub.add_parser("simulate", help="replay a trace"), trace=True, scenario=True)

    sp = sub.add_parser("analyze", help="analytic gain per ISP and day")
    common(sp, trace=True, scenario=True)
    sp.add_argument("--m", type=int, default=None)
    sp.add_argument("--alpha", type=float, default=None)

    sp = sub.add_parser("sweep", help="simulated and analytic gain along one axis")
    common(sp, trace=True, scenario=True, spec=True)
    sp.add_argument("--axis", required=True, choices=experiments.SWEEP_AXES)
    sp.add_argument("--grid", required=True, help="comma-separated values")

    sp = sub.add_parser("bundle-scan", help="delta gain of random bundles")
    common(sp, trace=True, spec=True)
    sp.add_argument("--k", type=int, required=True, help="bundle size")
    sp.add_argument("--samples", type=int, default=100_000)
    sp.add_argument("--m", type=int, default=1)

    sp = sub.add_parser("oracle", help="Monte-Carlo check of the busy-period formulas")
    common(sp)
    sp.add_argument("--u", type=float, required=True, help="mean watch time (s)")
    sp.add_argument("--r", type=float, required=True, help="arrival rate (1/s)")
    sp.add_argument("--m", type=int, default=1)
    sp.add_argument("--cycles", type=int, default=100_000)

    sp = sub.add_parser("replay", help="re-run a manifest")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", default=None, help="output directory (default: the manifest's)")
    sp.add_argument("--jobs", type=int, default=1)
    return p


_INVALID = (InputError, TraceError, WorkloadError, ConfigError, model.ModelDomainError)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "replay":
            replay(args.manifest, args.out, max(1, args.jobs))
        else:
            plan = resolve(args)
            execute(plan, Path(args.out), max(1, args.jobs))
    except _INVALID as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
