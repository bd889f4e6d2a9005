"""Experiment drivers behind the CLI: analytic tables, sweeps, bundle scans."""

from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import model
from .simulator import ScenarioConfig, availability_window, run
from .trace import (
    DAY_SECONDS,
    ContentRecord,
    SessionRecord,
    SwarmEstimate,
    estimate_swarm_params,
    partition_days,
)
from .workload import WorkloadSpec, generate

__all__ = [
    "SWEEP_AXES",
    "estimates_to_params",
    "item_params",
    "analyze",
    "theory_gain",
    "sweep",
    "bundle_scan",
    "BundleScanResult",
]

SWEEP_AXES = ("capacity", "m", "alpha", "bandwidth", "cache_k")


def estimates_to_params(
    estimates: Iterable[SwarmEstimate], catalog: Mapping[str, ContentRecord]
) -> list[model.SwarmParams]:
    return [
        model.SwarmParams(
            arrival_rate_r=e.arrival_rate_r,
            mean_watch_u=e.mean_watch_u,
            content_length_l=catalog[e.key.content_id].length,
            bitrate_beta=e.mean_bitrate_kbps * 1000.0,
        )
        for e in estimates
    ]


def theory_gain(
    records: Sequence[SessionRecord],
    catalog: Mapping[str, ContentRecord],
    config: ScenarioConfig,
) -> float:
    """Corpus gain predicted from trace-estimated swarm parameters."""
    if config.availability_mode == "download":
        clipped = []
        for r in records:
            lo, hi = availability_window(r, catalog[r.content_id].length, "download",
                                         config.download_bandwidth_bps)
            clipped.append(replace(r, watch_duration=hi - lo))
        records = clipped
    est = estimate_swarm_params(records, catalog, config.isp_split, config.bitrate_split, config.ladder)
    params = estimates_to_params(est, catalog)
    return model.traffic_breakdown(params, config.min_swarm_m, config.participation_alpha).gain


def analyze(
    records: Sequence[SessionRecord],
    catalog: Mapping[str, ContentRecord],
    m: int = 1,
    alpha: float = 1.0,
    bitrate_split: bool = False,
    ladder=None,
) -> list[dict]:
    """Analytic corpus gain per (day, ISP), plus an all-ISP row per day.

    Swarms are always split by ISP here; ``bitrate_split`` adds the
    stratification by ladder rung.
    """
    kwargs = {} if ladder is None else {"ladder": ladder}
    est = estimate_swarm_params(partition_days(records), catalog, True, bitrate_split, **kwargs)
    groups: dict[tuple, list[SwarmEstimate]] = {}
    for e in est:
        groups.setdefault((e.day, e.key.isp_id), []).append(e)
        groups.setdefault((e.day, "*"), []).append(e)
    rows = []
    for (day, isp) in sorted(groups, key=lambda g: (g[0], g[1] == "*", g[1])):
        ests = groups[(day, isp)]
        bd = model.traffic_breakdown(estimates_to_params(ests, catalog), m, alpha)
        rows.append({
            "day": day.isoformat(),
            "isp": isp,
            "swarms": len(ests),
            "sessions": sum(e.session_count for e in ests),
            "G_theo": bd.gain,
        })
    return rows


def rows_to_csv(rows: Sequence[Mapping], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in (row[c] for c in columns)])
    return buf.getvalue()


def _capacity_point(spec: WorkloadSpec, config: ScenarioConfig, c: float) -> tuple[float, float]:
    spec = replace(spec, catalog_size=1, total_arrival_rate=c / spec.mean_watch)
    catalog, records = generate(spec)
    g_sim = run(records, catalog, config).gain
    # known generator parameters, split by the share maps when swarms are split
    isp = spec.isp_shares if config.isp_split else {None: 1.0}
    rungs = spec.ladder_shares if config.bitrate_split else {None: 1.0}
    mean_kbps = math.fsum(float(k) * v for k, v in spec.ladder_shares.items())
    length = next(iter(catalog.values())).length
    swarms = []
    for (_, s_isp), (rung, s_rung) in itertools.product(isp.items(), rungs.items()):
        rate = spec.total_arrival_rate * s_isp * s_rung
        if rate <= 0:
            continue
        kbps = mean_kbps if rung is None else float(rung)
        swarms.append(model.SwarmParams(rate, spec.mean_watch, length, kbps * 1000.0))
    g_theo = model.traffic_breakdown(swarms, config.min_swarm_m, config.participation_alpha).gain
    return g_sim, g_theo


def _axis_config(config: ScenarioConfig, axis: str, x: float) -> ScenarioConfig:
    if axis == "m":
        return replace(config, min_swarm_m=int(x))
    if axis == "alpha":
        return replace(config, participation_alpha=float(x))
    if axis == "bandwidth":
        return replace(config, availability_mode="download", download_bandwidth_bps=float(x))
    if axis == "cache_k":
        return replace(config, cache_size_k=int(x))
    raise ValueError(f"unknown sweep axis {axis!r}")


def _sweep_point(task) -> tuple[float, float]:
    axis, x, config, spec, records, catalog = task
    if axis == "capacity":
        return _capacity_point(spec, config, x)
    cfg = _axis_config(config, axis, x)
    g_sim = run(records, catalog, cfg).gain
    # the model has no notion of caches; its column stays at the base value
    theo_cfg = config if axis == "cache_k" else cfg
    return g_sim, theory_gain(records, catalog, theo_cfg)


def sweep(
    axis: str,
    grid: Sequence[float],
    config: ScenarioConfig,
    spec: WorkloadSpec | None = None,
    records: Sequence[SessionRecord] | None = None,
    catalog: Mapping[str, ContentRecord] | None = None,
    jobs: int = 1,
) -> list[dict]:
    """One ``(x, G_sim, G_theo)`` row per grid point, in grid order."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {', '.join(SWEEP_AXES)}")
    if not grid:
        raise ValueError("grid must not be empty")
    if axis == "capacity":
        if spec is None:
            raise ValueError("the capacity axis needs a workload spec")
        if any(not x > 0 for x in grid):
            raise ValueError("capacity grid values must be positive")
    elif records is None:
        if spec is None:
            raise ValueError("need a trace or a workload spec")
        catalog, records = generate(spec)
    for x in grid:
        if axis != "capacity":
            _axis_config(config, axis, x)  # validates the grid value
    tasks = [(axis, float(x), config, spec, records, catalog) for x in grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(t) for t in tasks]
    return [{"x": float(x), "G_sim": gs, "G_theo": gt} for x, (gs, gt) in zip(grid, results)]


def item_params(
    records: Sequence[SessionRecord], catalog: Mapping[str, ContentRecord]
) -> dict[str, model.SwarmParams]:
    """Per-item parameters pooled over the whole trace; rates use full days."""
    days = {d for d in partition_days(records)}
    span = max(len(days), 1) * DAY_SECONDS
    acc: dict[str, list[float]] = {}
    for r in records:
        a = acc.setdefault(r.content_id, [0, 0.0, 0.0])
        a[0] += 1
        a[1] += r.watch_duration
        a[2] += r.avg_bitrate
    return {
        cid: model.SwarmParams(n / span, w / n, catalog[cid].length, 1000.0 * b / n)
        for cid, (n, w, b) in sorted(acc.items())
    }


@dataclass
class BundleScanResult:
    k: int
    combinations: list[tuple[str, ...]]
    delta_gain: np.ndarray
    enumerated: bool

    @property
    def positive_share(self) -> float:
        return float(np.mean(self.delta_gain > 0)) if self.delta_gain.size else 0.0

    @property
    def mean_positive_delta_gain(self) -> float | None:
        pos = self.delta_gain[self.delta_gain > 0]
        return float(pos.mean()) if pos.size else None

    def summary(self) -> dict:
        return {
            "k": self.k,
            "samples": len(self.combinations),
            "enumerated": self.enumerated,
            "positive_share": self.positive_share,
            "mean_positive_delta_gain": self.mean_positive_delta_gain,
        }

    def samples_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("index", "items", "delta_gain"))
        for i, (combo, dg) in enumerate(zip(self.combinations, self.delta_gain)):
            w.writerow((i, ";".join(combo), repr(float(dg))))
        return buf.getvalue()


def bundle_scan(
    items: Mapping[str, model.SwarmParams],
    k: int,
    sample_count: int = 100_000,
    seed: int = 0,
    m: int = 1,
) -> BundleScanResult:
    """Delta gain of random size-``k`` bundles (all of them if few enough)."""
    ids = list(items)
    n = len(ids)
    if k < 2:
        raise ValueError("bundle size k must be at least 2")
    if k > n:
        raise ValueError(f"bundle size {k} exceeds the {n} available items")
    if sample_count < 1:
        raise ValueError("sample_count must be positive")
    params = [items[i] for i in ids]
    weight = np.array([p.weight for p in params])
    rate = np.array([p.arrival_rate_r for p in params])
    unavail = np.array([model.unavailability(p, m) for p in params])

    if math.comb(n, k) <= sample_count:
        idx = np.array(list(itertools.combinations(range(n), k)), dtype=np.int64)
        enumerated = True
    else:
        rng = np.random.default_rng(seed)
        idx = np.sort(np.array([rng.choice(n, size=k, replace=False) for _ in range(sample_count)]), axis=1)
        enumerated = False

    w, r, p = weight[idx], rate[idx], unavail[idx]
    useful = (w * r).sum(axis=1)
    separate = (w * r * p).sum(axis=1)
    bundled = w.sum(axis=1) * r.sum(axis=1) * p.prod(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        delta = np.where(useful > 0, (separate - bundled) / useful, 0.0)
    combos = [tuple(ids[j] for j in row) for row in idx]
    return BundleScanResult(k, combos, delta, enumerated)

