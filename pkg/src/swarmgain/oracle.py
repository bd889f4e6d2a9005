"""Monte-Carlo estimators for M/M/inf swarm availability.

These simulate the swarm dynamics directly (Poisson arrivals, exponential
sojourns) and never evaluate the closed forms in :mod:`swarmgain.model`, so
they can be used to check them.

Two processes are simulated:

* the *regenerative* swarm used by the availability model: a busy cycle
  opens when occupancy rises from ``m-1`` to ``m`` and closes when it falls
  back below ``m``; while unavailable the swarm waits for the next arrival,
  which is server-served and reopens it.  :func:`mc_busy_period` and
  :func:`mc_unavailability` estimate the busy length and the fraction of
  arrivals that find it unavailable.
* the *free* M/M/inf queue with no floor, where an arrival finds fewer than
  ``m`` other peers with probability ``P(Poisson(c) < m)``.
  :func:`mc_arrival_shortfall` estimates that fraction, which is what a
  trace replay measures.

For ``m = 1`` the two processes coincide.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np

__all__ = [
    "McConfig",
    "McEstimate",
    "mc_busy_period",
    "mc_unavailability",
    "mc_arrival_shortfall",
    "run_cycles",
]


@dataclass(frozen=True)
class McConfig:
    u: float
    r: float
    m: int = 1
    cycle_count: int = 100_000
    rng_seed: int = 0
    max_jumps: int = 10**11
    jobs: int = 1

    def __post_init__(self) -> None:
        if not (self.u > 0 and self.r > 0):
            raise ValueError("u and r must be positive")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("m must be a positive integer")
        if self.cycle_count < 2:
            raise ValueError("cycle_count must be at least 2")


class McEstimate(NamedTuple):
    estimate: float
    stderr: float
    cycles: int


class CycleStats(NamedTuple):
    """Sums over completed busy cycles, mergeable across workers."""

    cycles: int
    jumps: int
    sum_b: float
    sum_b2: float
    sum_a: float
    sum_a2: float

    def merge(self, other: "CycleStats") -> "CycleStats":
        return CycleStats(*(x + y for x, y in zip(self, other)))


@numba.njit(cache=True)
def _cycle_kernel(u, r, m, cycles, max_jumps, rng):  # pragma: no cover - jitted
    mu = 1.0 / u
    done = 0
    jumps = 0
    sb = 0.0
    sb2 = 0.0
    sa = 0.0
    sa2 = 0.0
    while done < cycles:
        n = m
        t = 0.0
        a = 0
        while n >= m:
            rate = r + n * mu
            t += rng.standard_exponential() / rate
            if rng.random() * rate < r:
                n += 1
                a += 1
            else:
                n -= 1
            jumps += 1
            if jumps >= max_jumps:
                break
        if n >= m:
            break
        done += 1
        sb += t
        sb2 += t * t
        sa += a
        sa2 += a * a
    return done, jumps, sb, sb2, sa, sa2


def _run_worker(args) -> CycleStats:
    u, r, m, cycles, max_jumps, seed_seq = args
    rng = np.random.default_rng(seed_seq)
    return CycleStats(*_cycle_kernel(float(u), float(r), int(m), int(cycles), int(max_jumps), rng))


def run_cycles(cfg: McConfig) -> CycleStats:
    """Simulate ``cfg.cycle_count`` busy cycles of the regenerative swarm.

    Stops early (with fewer cycles) once ``cfg.max_jumps`` state changes
    have been simulated; the unfinished cycle is discarded.
    """
    jobs = max(1, int(cfg.jobs))
    seeds = np.random.SeedSequence(cfg.rng_seed).spawn(jobs)
    per = [cfg.cycle_count // jobs + (1 if i < cfg.cycle_count % jobs else 0) for i in range(jobs)]
    budget = [max(1, cfg.max_jumps // jobs)] * jobs
    tasks = [(cfg.u, cfg.r, cfg.m, per[i], budget[i], seeds[i]) for i in range(jobs)]
    if jobs == 1:
        results = [_run_worker(tasks[0])]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_worker, tasks))
    total = results[0]
    for res in results[1:]:
        total = total.merge(res)
    return total


def _busy_from_stats(st: CycleStats) -> McEstimate:
    n = st.cycles
    if n < 2:
        return McEstimate(math.nan, math.nan, n)
    mean = st.sum_b / n
    var = max(st.sum_b2 / n - mean * mean, 0.0) * n / (n - 1)
    return McEstimate(mean, math.sqrt(var / n), n)


def _unavail_from_stats(st: CycleStats) -> McEstimate:
    # one opening arrival per cycle plus the arrivals during the busy period
    n = st.cycles
    if n < 2:
        return McEstimate(math.nan, math.nan, n)
    mean_x = 1.0 + st.sum_a / n
    mean_a = st.sum_a / n
    var_a = max(st.sum_a2 / n - mean_a * mean_a, 0.0) * n / (n - 1)
    p = 1.0 / mean_x
    se = math.sqrt(var_a / n) / (mean_x * mean_x)
    return McEstimate(p, se, n)


def mc_busy_period(cfg: McConfig) -> McEstimate:
    """Mean busy-cycle length in seconds with its standard error."""
    return _busy_from_stats(run_cycles(cfg))


def mc_unavailability(cfg: McConfig) -> McEstimate:
    """Fraction of arrivals that find fewer than ``m`` peers online.

    Estimated by the regenerative ratio (opening arrivals over all arrivals
    per cycle), with a delta-method standard error.
    """
    return _unavail_from_stats(run_cycles(cfg))


def mc_busy_and_unavailability(cfg: McConfig) -> tuple[McEstimate, McEstimate, CycleStats]:
    """Both estimates from one shared simulation."""
    st = run_cycles(cfg)
    return _busy_from_stats(st), _unavail_from_stats(st), st


def mc_arrival_shortfall(
    u: float,
    r: float,
    m: int,
    horizon: float,
    rng_seed: int = 0,
    batches: int = 50,
) -> McEstimate:
    """Fraction of arrivals in a free M/M/inf queue finding fewer than ``m`` others.

    ``cycles`` in the result is the number of simulated arrivals.  The
    standard error comes from ``batches`` contiguous batch means.
    """
    rng = np.random.default_rng(rng_seed)
    count = rng.poisson(r * horizon)
    if count < batches:
        return McEstimate(math.nan, math.nan, int(count))
    arrivals = np.sort(rng.uniform(0.0, horizon, size=count))
    departures = np.sort(arrivals + rng.exponential(u, size=count))
    # every departure before t_i belongs to an earlier arrival
    others = np.arange(count) - np.searchsorted(departures, arrivals, side="right")
    # skip the warm-up from an empty start
    keep = arrivals > 10.0 * u
    short = (others[keep] < m).astype(float)
    if short.size < batches:
        return McEstimate(math.nan, math.nan, int(short.size))
    means = np.array([b.mean() for b in np.array_split(short, batches)])
    return McEstimate(float(short.mean()), float(means.std(ddof=1) / math.sqrt(batches)), int(short.size))
