"""Event-driven replay of a session trace under peer assistance.

Sessions are processed in start-time order. Each one is served by peers if,
at its start, its swarm holds at least ``min_swarm_m`` eligible uploaders
other than the requester; otherwise the server delivers it. The decision is
never revisited.

An uploader is eligible for a swarm if it participates and either

* has an open session of the item that has streamed for at least
  ``eligibility_fraction`` of the item length and is still inside its
  availability window, or
* holds the item in its historic cache and is currently online.

Each UTC day is replayed on its own; only the per-user caches carry over
from one day to the next.
"""

from __future__ import annotations

import csv
import hashlib
import heapq
import io
import json
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, fields
from datetime import date
from typing import Any, Iterable, Mapping, Sequence

from .trace import (
    DAY_SECONDS,
    DEFAULT_LADDER,
    BitrateLadder,
    ContentRecord,
    SessionRecord,
    SwarmKey,
    TraceError,
    map_bitrate,
    partition_days,
    swarm_key,
)

__all__ = [
    "ScenarioConfig",
    "ConfigError",
    "SimReport",
    "SwarmStats",
    "DayStats",
    "PeerCache",
    "apply_participation",
    "availability_window",
    "measure_capacity",
    "run",
]

SWARM_CSV_FIELDS = ("swarm_key", "day", "sessions", "served_by_peers", "capacity", "gain")

_END, _CACHE, _ACTIVATE = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    isp_split: bool = False
    bitrate_split: bool = False
    min_swarm_m: int = 1
    participation_alpha: float = 1.0
    availability_mode: str = "watch"
    download_bandwidth_bps: float | None = None
    cache_size_k: int = 0
    eligibility_fraction: float = 0.10
    rng_seed: int = 0
    ladder_kbps: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        m = self.min_swarm_m
        if isinstance(m, bool) or int(m) != m or m < 1:
            raise ConfigError("min_swarm_m must be a positive integer")
        if not 0.0 < self.participation_alpha <= 1.0:
            raise ConfigError("participation_alpha must lie in (0, 1]")
        if self.availability_mode not in ("watch", "download"):
            raise ConfigError("availability_mode must be 'watch' or 'download'")
        if self.availability_mode == "download":
            b = self.download_bandwidth_bps
            if b is None or not (b > 0 and math.isfinite(b)):
                raise ConfigError("download mode needs a positive download_bandwidth_bps")
        k = self.cache_size_k
        if isinstance(k, bool) or int(k) != k or k < 0:
            raise ConfigError("cache_size_k must be a nonnegative integer")
        if not 0.0 <= self.eligibility_fraction < 1.0:
            raise ConfigError("eligibility_fraction must lie in [0, 1)")
        if self.ladder_kbps is not None:
            try:
                object.__setattr__(self, "ladder_kbps", BitrateLadder(tuple(self.ladder_kbps)).rungs)
            except ValueError as exc:
                raise ConfigError(f"ladder_kbps: {exc}") from None

    @property
    def ladder(self) -> BitrateLadder:
        return DEFAULT_LADDER if self.ladder_kbps is None else BitrateLadder(self.ladder_kbps)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scenario field {sorted(unknown)[0]!r}")
        data = dict(data)
        if data.get("ladder_kbps") is not None:
            data["ladder_kbps"] = tuple(float(x) for x in data["ladder_kbps"])
        return cls(**data)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        if self.ladder_kbps is not None:
            d["ladder_kbps"] = list(self.ladder_kbps)
        return d


def apply_participation(user_id: str, alpha: float, seed: int) -> bool:
    """Whether ``user_id`` uploads; a fixed Bernoulli(alpha) draw per (seed, user)."""
    if alpha >= 1.0:
        return True
    digest = hashlib.blake2b(f"{seed}\x1f{user_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2.0**64 < alpha


def availability_window(
    session: SessionRecord,
    content_length: float,
    mode: str = "watch",
    bandwidth_bps: float | None = None,
) -> tuple[float, float]:
    """Half-open interval during which the session's peer can upload.

    In download mode the peer leaves once the whole item is fetched at
    ``bandwidth_bps``, i.e. after ``min(watch, bitrate * length / bandwidth)``.
    """
    if mode == "watch":
        return session.start_time, session.start_time + session.watch_duration
    if mode != "download":
        raise ConfigError(f"unknown availability mode {mode!r}")
    beta = session.avg_bitrate * 1000.0
    if bandwidth_bps is None or bandwidth_bps < beta:
        raise ConfigError(
            f"download bandwidth {bandwidth_bps} bps is below session bitrate {beta} bps"
        )
    return session.start_time, session.start_time + min(
        session.watch_duration, beta * content_length / bandwidth_bps
    )


class PeerCache:
    """Per-user store of the ``k`` most recently watched entries."""

    __slots__ = ("k", "_entries")

    def __init__(self, k: int):
        self.k = k
        self._entries: OrderedDict[tuple, None] = OrderedDict()

    def push(self, entry: tuple) -> tuple[bool, tuple | None]:
        """Record a finished view; return ``(newly_added, evicted_entry)``."""
        if entry in self._entries:
            self._entries.move_to_end(entry, last=False)
            return False, None
        self._entries[entry] = None
        self._entries.move_to_end(entry, last=False)
        evicted = None
        if len(self._entries) > self.k:
            evicted, _ = self._entries.popitem(last=True)
        return True, evicted

    def entries(self) -> list[tuple]:
        return list(self._entries)

    def __contains__(self, entry) -> bool:
        return entry in self._entries

    def __len__(self) -> int:
        return len(self._entries)


@dataclass
class SwarmStats:
    key: SwarmKey
    day: date
    sessions: int = 0
    served_by_peers: int = 0
    useful_bytes: float = 0.0
    server_bytes: float = 0.0
    peer_bytes: float = 0.0
    capacity: float = 0.0

    @property
    def gain(self) -> float:
        return self.peer_bytes / self.useful_bytes if self.useful_bytes > 0 else 0.0


@dataclass
class DayStats:
    day: date
    sessions: int = 0
    served_by_peers: int = 0
    useful_bytes: float = 0.0
    server_bytes: float = 0.0
    peer_bytes: float = 0.0

    @property
    def gain(self) -> float:
        return self.peer_bytes / self.useful_bytes if self.useful_bytes > 0 else 0.0


@dataclass
class SimReport:
    useful_bytes: float
    server_bytes: float
    peer_bytes: float
    sessions: int
    served_by_peers: int
    swarms: list[SwarmStats] = field(default_factory=list)
    days: list[DayStats] = field(default_factory=list)

    @property
    def gain(self) -> float:
        return self.peer_bytes / self.useful_bytes if self.useful_bytes > 0 else 0.0

    @property
    def mean_capacity(self) -> float:
        """Average capacity over the swarm-days that received requests."""
        if not self.swarms:
            return 0.0
        return math.fsum(s.capacity for s in self.swarms) / len(self.swarms)

    def to_dict(self) -> dict[str, Any]:
        return {
            "useful_bytes": self.useful_bytes,
            "server_bytes": self.server_bytes,
            "peer_bytes": self.peer_bytes,
            "gain": self.gain,
            "sessions": self.sessions,
            "served_by_peers": self.served_by_peers,
            "mean_capacity": self.mean_capacity,
            "days": [
                {
                    "day": d.day.isoformat(),
                    "sessions": d.sessions,
                    "served_by_peers": d.served_by_peers,
                    "useful_bytes": d.useful_bytes,
                    "server_bytes": d.server_bytes,
                    "gain": d.gain,
                }
                for d in self.days
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def swarms_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWARM_CSV_FIELDS)
        for s in self.swarms:
            w.writerow([s.key.label(), s.day.isoformat(), s.sessions, s.served_by_peers,
                        repr(s.capacity), repr(s.gain)])
        return buf.getvalue()


def measure_capacity(report: SimReport) -> dict[tuple[SwarmKey, date], float]:
    """Time-averaged count of eligible sources per swarm-day."""
    return {(s.key, s.day): s.capacity for s in report.swarms}


class _Swarm:
    __slots__ = ("sources", "last_t", "integral", "stats")

    def __init__(self):
        self.sources: dict[str, int] = {}
        self.last_t = 0.0
        self.integral = 0.0
        self.stats: SwarmStats | None = None

    def _accrue(self, t: float) -> None:
        if self.sources:
            self.integral += len(self.sources) * (t - self.last_t)
        self.last_t = t

    def add(self, user: str, t: float) -> None:
        self._accrue(t)
        self.sources[user] = self.sources.get(user, 0) + 1

    def remove(self, user: str, t: float) -> None:
        self._accrue(t)
        left = self.sources[user] - 1
        if left:
            self.sources[user] = left
        else:
            del self.sources[user]


class _Replay:
    """State shared across the day runs of one simulation."""

    def __init__(self, catalog: Mapping[str, ContentRecord], config: ScenarioConfig):
        self.catalog = catalog
        self.cfg = config
        self.ladder = config.ladder
        self.caches: dict[str, PeerCache] = {}
        self._participates: dict[str, bool] = {}
        self._rungs: dict[float, float] = {}

    def participates(self, user: str) -> bool:
        p = self._participates.get(user)
        if p is None:
            p = apply_participation(user, self.cfg.participation_alpha, self.cfg.rng_seed)
            self._participates[user] = p
        return p

    def rung(self, kbps: float) -> float:
        r = self._rungs.get(kbps)
        if r is None:
            r = self._rungs[kbps] = map_bitrate(kbps, self.ladder)
        return r

    def key_of(self, content_id: str, isp: str, rung: float) -> SwarmKey:
        return swarm_key(content_id, isp, rung, self.cfg.isp_split, self.cfg.bitrate_split)

    def run_day(self, day: date, records: Sequence[SessionRecord]) -> tuple[list[SwarmStats], DayStats]:
        cfg = self.cfg
        m = cfg.min_swarm_m
        k = cfg.cache_size_k
        frac = cfg.eligibility_fraction
        swarms: dict[SwarmKey, _Swarm] = {}
        online: dict[str, int] = {}
        heap: list = []
        seq = 0
        dstats = DayStats(day)

        def swarm(key: SwarmKey) -> _Swarm:
            sw = swarms.get(key)
            if sw is None:
                sw = swarms[key] = _Swarm()
            return sw

        def cache_sources(user: str, t: float, add: bool) -> None:
            cache = self.caches.get(user)
            if cache is None:
                return
            for cid, rung, isp in cache.entries():
                sw = swarm(self.key_of(cid, isp, rung))
                if add:
                    sw.add(user, t)
                else:
                    sw.remove(user, t)

        def handle(ev) -> None:
            t, kind, _, payload = ev
            if kind == _END:
                user, key, active = payload
                if active[0]:
                    swarms[key].remove(user, t)
                left = online[user] - 1
                if left:
                    online[user] = left
                else:
                    del online[user]
                    if k:
                        cache_sources(user, t, add=False)
            elif kind == _ACTIVATE:
                user, key, active = payload
                active[0] = True
                swarms[key].add(user, t)
            else:
                user, entry = payload
                cache = self.caches.get(user)
                if cache is None:
                    cache = self.caches[user] = PeerCache(k)
                added, evicted = cache.push(entry)
                if user in online:
                    if added:
                        swarm(self.key_of(entry[0], entry[2], entry[1])).add(user, t)
                    if evicted is not None:
                        swarm(self.key_of(evicted[0], evicted[2], evicted[1])).remove(user, t)

        ordered = sorted(records, key=lambda r: (r.start_time, r.user_id, r.content_id))
        for rec in ordered:
            t = rec.start_time
            while heap and heap[0][0] <= t:
                handle(heapq.heappop(heap))
            content = self.catalog.get(rec.content_id)
            if content is None:
                raise TraceError(f"unknown content_id {rec.content_id!r}")
            rung = self.rung(rec.avg_bitrate)
            key = self.key_of(rec.content_id, rec.isp_id, rung)
            sw = swarm(key)
            if sw.stats is None:
                sw.stats = SwarmStats(key, day)
            others = len(sw.sources) - (1 if rec.user_id in sw.sources else 0)
            peer = others >= m

            nbytes = rec.avg_bitrate * 1000.0 * rec.watch_duration / 8.0
            st = sw.stats
            st.sessions += 1
            st.useful_bytes += nbytes
            dstats.sessions += 1
            dstats.useful_bytes += nbytes
            if peer:
                st.served_by_peers += 1
                st.peer_bytes += nbytes
                dstats.served_by_peers += 1
                dstats.peer_bytes += nbytes
            else:
                st.server_bytes += nbytes
                dstats.server_bytes += nbytes

            _, wend = availability_window(rec, content.length, cfg.availability_mode,
                                          cfg.download_bandwidth_bps)
            if not self.participates(rec.user_id):
                continue
            user = rec.user_id
            if user in online:
                online[user] += 1
            else:
                online[user] = 1
                if k:
                    cache_sources(user, t, add=True)
            active = [False]
            t_act = t + frac * content.length
            if t_act < wend:
                heapq.heappush(heap, (t_act, _ACTIVATE, seq, (user, key, active)))
                seq += 1
            heapq.heappush(heap, (wend, _END, seq, (user, key, active)))
            seq += 1
            if k:
                heapq.heappush(heap, (rec.end_time, _CACHE, seq, (user, (rec.content_id, rung, rec.isp_id))))
                seq += 1
        while heap:
            handle(heapq.heappop(heap))

        out = []
        for sw in swarms.values():
            if sw.stats is not None:
                sw.stats.capacity = sw.integral / DAY_SECONDS
                out.append(sw.stats)
        out.sort(key=lambda s: s.key.label())
        return out, dstats


def run(
    records: Iterable[SessionRecord],
    catalog: Mapping[str, ContentRecord],
    config: ScenarioConfig = ScenarioConfig(),
) -> SimReport:
    """Replay ``records`` day by day and account server vs. peer traffic."""
    records = list(records)
    for r in records:
        if r.content_id not in catalog:
            raise TraceError(f"unknown content_id {r.content_id!r}")
    replay = _Replay(catalog, config)
    swarms: list[SwarmStats] = []
    days: list[DayStats] = []
    for day, recs in partition_days(records).items():
        s, d = replay.run_day(day, recs)
        swarms.extend(s)
        days.append(d)
    return SimReport(
        useful_bytes=math.fsum(d.useful_bytes for d in days),
        server_bytes=math.fsum(d.server_bytes for d in days),
        peer_bytes=math.fsum(d.peer_bytes for d in days),
        sessions=sum(d.sessions for d in days),
        served_by_peers=sum(d.served_by_peers for d in days),
        swarms=swarms,
        days=days,
    )
