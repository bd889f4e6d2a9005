"""Session traces: records, CSV I/O, bitrate ladder, day split, swarm estimates.

Trace CSV header::

    user_id,content_id,start_ts,duration_s,isp,avg_bitrate_kbps

Catalog CSV header (``release_ts`` optional)::

    content_id,length_s[,release_ts]
"""

from __future__ import annotations

import bisect
import csv
import io
import math
import sys
from collections import defaultdict
from dataclasses import dataclass
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence, TextIO

__all__ = [
    "SessionRecord",
    "ContentRecord",
    "BitrateLadder",
    "SwarmKey",
    "SwarmEstimate",
    "ParsedTrace",
    "TraceError",
    "DEFAULT_LADDER",
    "DAY_SECONDS",
    "TRACE_FIELDS",
    "CATALOG_FIELDS",
    "parse_trace",
    "parse_catalog",
    "write_trace",
    "write_catalog",
    "map_bitrate",
    "partition_days",
    "utc_day",
    "swarm_key",
    "estimate_swarm_params",
]

DAY_SECONDS = 86400.0

TRACE_FIELDS = ("user_id", "content_id", "start_ts", "duration_s", "isp", "avg_bitrate_kbps")
CATALOG_FIELDS = ("content_id", "length_s", "release_ts")


class TraceError(ValueError):
    """Malformed or invalid trace/catalog input.

    ``problems`` holds ``(line_number, message)`` pairs.
    """

    def __init__(self, message: str, problems: Sequence[tuple[int, str]] = ()):
        super().__init__(message)
        self.problems = list(problems)


@dataclass(frozen=True, slots=True)
class SessionRecord:
    user_id: str
    content_id: str
    start_time: float
    watch_duration: float
    isp_id: str
    avg_bitrate: float  # kbps

    def __post_init__(self) -> None:
        if not math.isfinite(self.start_time):
            raise ValueError("start_time must be finite")
        if not (self.watch_duration > 0 and math.isfinite(self.watch_duration)):
            raise ValueError(f"watch_duration must be > 0, got {self.watch_duration}")
        if not (self.avg_bitrate > 0 and math.isfinite(self.avg_bitrate)):
            raise ValueError(f"avg_bitrate must be > 0, got {self.avg_bitrate}")

    @property
    def end_time(self) -> float:
        return self.start_time + self.watch_duration


@dataclass(frozen=True, slots=True)
class ContentRecord:
    content_id: str
    length: float
    release_time: float | None = None

    def __post_init__(self) -> None:
        if not (self.length > 0 and math.isfinite(self.length)):
            raise ValueError(f"length must be > 0, got {self.length}")


@dataclass(frozen=True)
class BitrateLadder:
    """Encodings available to players, in kbps, strictly ascending."""

    rungs: tuple[float, ...]

    def __post_init__(self) -> None:
        rungs = tuple(float(x) for x in self.rungs)
        if not rungs:
            raise ValueError("ladder must have at least one rung")
        if any(b <= a for a, b in zip(rungs, rungs[1:])):
            raise ValueError("ladder rungs must be strictly ascending")
        object.__setattr__(self, "rungs", rungs)


# 762, 1500 and 2800 kbps are known encodings; the rest are configurable fillers.
DEFAULT_LADDER = BitrateLadder((150, 300, 500, 762, 1000, 1500, 1800, 2400, 2800))


@dataclass(frozen=True, order=True)
class SwarmKey:
    content_id: str
    isp_id: str | None = None
    ladder_rung: float | None = None

    def label(self) -> str:
        isp = "*" if self.isp_id is None else self.isp_id
        rung = "*" if self.ladder_rung is None else f"{self.ladder_rung:g}"
        return f"{self.content_id}/{isp}/{rung}"


@dataclass(frozen=True)
class SwarmEstimate:
    key: SwarmKey
    day: date
    arrival_rate_r: float
    mean_watch_u: float
    session_count: int
    mean_bitrate_kbps: float = 0.0


@dataclass
class ParsedTrace:
    records: list[SessionRecord]
    dropped_unknown: int = 0

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


def _open_text(source: str | Path | TextIO):
    if hasattr(source, "read"):
        return source, False
    return open(source, newline="", encoding="utf-8"), True


def _report(problems: Sequence[tuple[int, str]], what: str) -> None:
    for line, msg in problems[:50]:
        print(f"{what}:{line}: {msg}", file=sys.stderr)
    if len(problems) > 50:
        print(f"{what}: ... {len(problems) - 50} more", file=sys.stderr)


def parse_catalog(source: str | Path | TextIO) -> dict[str, ContentRecord]:
    fh, close = _open_text(source)
    try:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"content_id", "length_s"} <= set(reader.fieldnames):
            raise TraceError("catalog header must contain content_id,length_s")
        catalog: dict[str, ContentRecord] = {}
        problems: list[tuple[int, str]] = []
        for row in reader:
            line = reader.line_num
            try:
                cid = (row.get("content_id") or "").strip()
                if not cid:
                    raise ValueError("missing content_id")
                if cid in catalog:
                    raise ValueError(f"duplicate content_id {cid!r}")
                rel = (row.get("release_ts") or "").strip()
                catalog[cid] = ContentRecord(cid, float(row["length_s"]), float(rel) if rel else None)
            except (TypeError, ValueError) as exc:
                problems.append((line, str(exc)))
    finally:
        if close:
            fh.close()
    if problems:
        _report(problems, "catalog")
        raise TraceError(f"{len(problems)} invalid catalog rows; first at line {problems[0][0]}: "
                         f"{problems[0][1]}", problems)
    return catalog


def parse_trace(
    source: str | Path | TextIO,
    catalog: Mapping[str, ContentRecord],
    lenient: bool = False,
) -> ParsedTrace:
    """Read and validate a session trace.

    Rows referencing content missing from ``catalog`` are errors unless
    ``lenient`` is set, in which case they are dropped and counted. All
    other invalid rows are always errors. Problems are reported on stderr
    with their line numbers.
    """
    fh, close = _open_text(source)
    records: list[SessionRecord] = []
    problems: list[tuple[int, str]] = []
    dropped = 0
    try:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not set(TRACE_FIELDS) <= set(reader.fieldnames):
            raise TraceError("trace header must be " + ",".join(TRACE_FIELDS))
        for row in reader:
            line = reader.line_num
            try:
                vals = [row.get(f) for f in TRACE_FIELDS]
                if any(v is None or v.strip() == "" for v in vals):
                    missing = [f for f, v in zip(TRACE_FIELDS, vals) if v is None or not v.strip()]
                    raise ValueError("missing fields: " + ",".join(missing))
                uid, cid, start, dur, isp, kbps = (v.strip() for v in vals)
                rec = SessionRecord(uid, cid, float(start), float(dur), isp, float(kbps))
            except (TypeError, ValueError) as exc:
                problems.append((line, str(exc)))
                continue
            if rec.content_id not in catalog:
                if lenient:
                    dropped += 1
                    continue
                problems.append((line, f"unknown content_id {rec.content_id!r}"))
                continue
            records.append(rec)
    finally:
        if close:
            fh.close()
    if problems:
        _report(problems, "trace")
        raise TraceError(f"{len(problems)} invalid trace rows; first at line {problems[0][0]}: "
                         f"{problems[0][1]}", problems)
    if dropped:
        print(f"trace: dropped {dropped} rows with unknown content_id", file=sys.stderr)
    return ParsedTrace(records, dropped)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trace(records: Iterable[SessionRecord], dest: str | Path | TextIO) -> None:
    fh, close = (dest, False) if hasattr(dest, "write") else (open(dest, "w", newline="", encoding="utf-8"), True)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_FIELDS)
        for r in records:
            w.writerow([r.user_id, r.content_id, _fmt(r.start_time), _fmt(r.watch_duration),
                        r.isp_id, _fmt(r.avg_bitrate)])
    finally:
        if close:
            fh.close()


def write_catalog(catalog: Mapping[str, ContentRecord] | Iterable[ContentRecord],
                  dest: str | Path | TextIO) -> None:
    items = catalog.values() if isinstance(catalog, Mapping) else catalog
    fh, close = (dest, False) if hasattr(dest, "write") else (open(dest, "w", newline="", encoding="utf-8"), True)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CATALOG_FIELDS)
        for c in items:
            w.writerow([c.content_id, _fmt(c.length), "" if c.release_time is None else _fmt(c.release_time)])
    finally:
        if close:
            fh.close()


def map_bitrate(avg_bitrate: float, ladder: BitrateLadder = DEFAULT_LADDER) -> float:
    """Closest ladder rung to ``avg_bitrate``; ties go to the lower rung."""
    rungs = ladder.rungs
    i = bisect.bisect_left(rungs, avg_bitrate)
    if i == 0:
        return rungs[0]
    if i == len(rungs):
        return rungs[-1]
    lo, hi = rungs[i - 1], rungs[i]
    return hi if hi - avg_bitrate < avg_bitrate - lo else lo


def utc_day(ts: float) -> date:
    return datetime.fromtimestamp(ts, tz=timezone.utc).date()


def partition_days(records: Iterable[SessionRecord]) -> dict[date, list[SessionRecord]]:
    """Group records by the UTC date their session starts on (no clipping)."""
    days: dict[date, list[SessionRecord]] = defaultdict(list)
    for r in records:
        days[utc_day(r.start_time)].append(r)
    return dict(sorted(days.items()))


def swarm_key(
    content_id: str,
    isp_id: str,
    rung: float,
    isp_split: bool,
    bitrate_split: bool,
) -> SwarmKey:
    return SwarmKey(content_id, isp_id if isp_split else None, rung if bitrate_split else None)


def estimate_swarm_params(
    days: Mapping[date, Sequence[SessionRecord]] | Iterable[SessionRecord],
    catalog: Mapping[str, ContentRecord] | None = None,
    isp_split: bool = False,
    bitrate_split: bool = False,
    ladder: BitrateLadder = DEFAULT_LADDER,
) -> list[SwarmEstimate]:
    """Per-(swarm, day) arrival rate and mean watch time.

    The arrival rate always divides by a full day, even for partially
    covered days. Accepts either the output of :func:`partition_days` or a
    flat record iterable (which is partitioned here).
    """
    if not isinstance(days, Mapping):
        days = partition_days(days)
    out: list[SwarmEstimate] = []
    for day, recs in sorted(days.items()):
        groups: dict[SwarmKey, list[SessionRecord]] = defaultdict(list)
        for r in recs:
            if catalog is not None and r.content_id not in catalog:
                raise TraceError(f"unknown content_id {r.content_id!r}")
            rung = map_bitrate(r.avg_bitrate, ladder)
            groups[swarm_key(r.content_id, r.isp_id, rung, isp_split, bitrate_split)].append(r)
        for key in sorted(groups, key=_key_sort):
            g = groups[key]
            n = len(g)
            out.append(SwarmEstimate(
                key=key,
                day=day,
                arrival_rate_r=n / DAY_SECONDS,
                mean_watch_u=math.fsum(r.watch_duration for r in g) / n,
                session_count=n,
                mean_bitrate_kbps=math.fsum(r.avg_bitrate for r in g) / n,
            ))
    return out


def _key_sort(k: SwarmKey):
    return (k.content_id, k.isp_id or "", -1.0 if k.ladder_rung is None else k.ladder_rung)


def records_to_csv_text(records: Iterable[SessionRecord]) -> str:
    buf = io.StringIO()
    write_trace(records, buf)
    return buf.getvalue()
