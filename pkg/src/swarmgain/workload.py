"""Seeded synthetic session traces.

Arrivals are homogeneous Poisson per item with Zipf-distributed rates and
exponential watch times, i.e. exactly the assumptions of the analytic
model. A configurable share of sessions comes from a fixed pool of
returning viewers so that caching has something to work with.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .trace import ContentRecord, SessionRecord

__all__ = ["WorkloadSpec", "WorkloadError", "zipf_rates", "generate", "load_spec"]


class WorkloadError(ValueError):
    """Invalid workload specification. ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class WorkloadSpec:
    catalog_size: int = 100
    zipf_exponent: float = 0.8
    total_arrival_rate: float = 0.1
    mean_watch: float = 1800.0
    content_length: float = 1800.0
    horizon: float = 86400.0
    isp_shares: Mapping[str, float] = field(default_factory=lambda: {"isp-1": 1.0})
    ladder_shares: Mapping[float, float] = field(default_factory=lambda: {1500.0: 1.0})
    repeat_viewer_fraction: float = 0.0
    repeat_pool_size: int = 1000
    rng_seed: int = 0
    content_lengths: Mapping[str, float] | None = None
    truncate_at_length: bool = False
    start_epoch: float = 0.0

    def __post_init__(self) -> None:
        if int(self.catalog_size) != self.catalog_size or self.catalog_size < 1:
            raise WorkloadError("catalog_size", "must be a positive integer")
        if not self.zipf_exponent >= 0:
            raise WorkloadError("zipf_exponent", "must be >= 0")
        for name in ("total_arrival_rate", "mean_watch", "content_length", "horizon"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise WorkloadError(name, "must be a positive finite number")
        for name in ("isp_shares", "ladder_shares"):
            shares = getattr(self, name)
            if not shares:
                raise WorkloadError(name, "must not be empty")
            if any(not (v >= 0) for v in shares.values()):
                raise WorkloadError(name, "shares must be nonnegative")
            if abs(math.fsum(shares.values()) - 1.0) > 1e-9:
                raise WorkloadError(name, "shares must sum to 1")
        if any(float(k) <= 0 for k in self.ladder_shares):
            raise WorkloadError("ladder_shares", "rungs must be positive kbps values")
        if not 0.0 <= self.repeat_viewer_fraction <= 1.0:
            raise WorkloadError("repeat_viewer_fraction", "must lie in [0, 1]")
        if self.repeat_pool_size < 1:
            raise WorkloadError("repeat_pool_size", "must be >= 1")
        if self.content_lengths:
            for cid, v in self.content_lengths.items():
                if not v > 0:
                    raise WorkloadError("content_lengths", f"length of {cid!r} must be > 0")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "WorkloadSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise WorkloadError(sorted(unknown)[0], "unknown field")
        data = dict(data)
        if "ladder_shares" in data:
            try:
                data["ladder_shares"] = {float(k): float(v) for k, v in data["ladder_shares"].items()}
            except (TypeError, ValueError, AttributeError):
                raise WorkloadError("ladder_shares", "must map kbps to fraction") from None
        if "isp_shares" in data:
            try:
                data["isp_shares"] = {str(k): float(v) for k, v in data["isp_shares"].items()}
            except (TypeError, ValueError, AttributeError):
                raise WorkloadError("isp_shares", "must map isp id to fraction") from None
        return cls(**data)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["isp_shares"] = dict(self.isp_shares)
        d["ladder_shares"] = {repr(float(k)): v for k, v in self.ladder_shares.items()}
        if self.content_lengths is not None:
            d["content_lengths"] = dict(self.content_lengths)
        return d


def load_spec(path: str | Path) -> WorkloadSpec:
    with open(path, encoding="utf-8") as fh:
        return WorkloadSpec.from_dict(json.load(fh))


def zipf_rates(n: int, s: float, total: float) -> np.ndarray:
    """Rates proportional to ``i**-s`` for ``i = 1..n``, summing to ``total``."""
    if n < 1 or s < 0 or total <= 0:
        raise ValueError("need n >= 1, s >= 0, total > 0")
    w = np.arange(1, n + 1, dtype=float) ** -float(s)
    return total * w / w.sum()


def _content_ids(n: int) -> list[str]:
    width = len(str(n - 1))
    return [f"c{i:0{width}d}" for i in range(n)]


def generate(spec: WorkloadSpec) -> tuple[dict[str, ContentRecord], list[SessionRecord]]:
    """Draw a catalog and a start-time-sorted session list from ``spec``."""
    rng = np.random.default_rng(spec.rng_seed)
    ids = _content_ids(spec.catalog_size)
    lengths = dict(spec.content_lengths or {})
    catalog = {
        cid: ContentRecord(cid, float(lengths.get(cid, spec.content_length)), spec.start_epoch)
        for cid in ids
    }
    rates = zipf_rates(spec.catalog_size, spec.zipf_exponent, spec.total_arrival_rate)

    # superposition of the per-item Poisson processes
    count = int(rng.poisson(spec.total_arrival_rate * spec.horizon))
    starts = np.sort(rng.uniform(0.0, spec.horizon, size=count)) + spec.start_epoch
    items = rng.choice(spec.catalog_size, size=count, p=rates / rates.sum())
    watch = rng.exponential(spec.mean_watch, size=count)
    # a zero draw is possible in principle; keep durations strictly positive
    watch = np.maximum(watch, np.finfo(float).tiny)

    isp_names = list(spec.isp_shares)
    isp_p = np.array([spec.isp_shares[k] for k in isp_names], dtype=float)
    isps = rng.choice(len(isp_names), size=count, p=isp_p / isp_p.sum())
    rungs = list(spec.ladder_shares)
    rung_p = np.array([spec.ladder_shares[k] for k in rungs], dtype=float)
    rung_idx = rng.choice(len(rungs), size=count, p=rung_p / rung_p.sum())

    repeat = rng.random(size=count) < spec.repeat_viewer_fraction
    pool_pick = rng.integers(0, spec.repeat_pool_size, size=count)
    pool_width = len(str(spec.repeat_pool_size - 1))
    once_width = len(str(max(count - 1, 0)))

    sessions: list[SessionRecord] = []
    for j in range(count):
        cid = ids[items[j]]
        dur = float(watch[j])
        if spec.truncate_at_length:
            dur = min(dur, catalog[cid].length)
        user = f"r{pool_pick[j]:0{pool_width}d}" if repeat[j] else f"o{j:0{once_width}d}"
        sessions.append(SessionRecord(
            user_id=user,
            content_id=cid,
            start_time=float(starts[j]),
            watch_duration=dur,
            isp_id=isp_names[isps[j]],
            avg_bitrate=float(rungs[rung_idx[j]]),
        ))
    return catalog, sessions
