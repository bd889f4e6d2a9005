"""Closed-form traffic-gain model for peer-assisted content swarms.

Each swarm is treated as an M/G/inf queue with exponential sojourns: users
arrive at rate ``r``, stay online for a mean ``u`` seconds while they watch,
and the swarm can serve a newcomer whenever at least ``m`` peers are present.

All functions are pure and operate on plain floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

__all__ = [
    "SwarmParams",
    "ObstacleParams",
    "BundleSpec",
    "GainBreakdown",
    "ModelDomainError",
    "capacity",
    "scaled_gamma_tail",
    "expected_busy_period",
    "unavailability",
    "single_swarm_gain",
    "server_traffic_rate",
    "useful_traffic_rate",
    "traffic_breakdown",
    "multi_swarm_gain",
    "partial_participation_gain",
    "bundle_server_traffic",
    "bundle_delta_gain",
]

#: Saturation value returned by :func:`scaled_gamma_tail` on overflow.
TAIL_CEILING = 1e300

_REL_TOL = 1e-16
_MAX_TERMS = 1_000_000


class ModelDomainError(ValueError):
    """An argument lies outside the domain of a model formula."""


def _check_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ModelDomainError(f"{name} must be finite, got {value!r}")
    return value


def _check_m(m: int) -> int:
    if isinstance(m, bool) or int(m) != m or m < 1:
        raise ModelDomainError(f"m must be a positive integer, got {m!r}")
    return int(m)


@dataclass(frozen=True)
class SwarmParams:
    """Analytic inputs of one swarm.

    ``mean_watch_u`` may exceed ``content_length_l`` (rewatching is allowed).
    """

    arrival_rate_r: float
    mean_watch_u: float
    content_length_l: float
    bitrate_beta: float

    def __post_init__(self) -> None:
        r = _check_finite("arrival_rate_r", self.arrival_rate_r)
        u = _check_finite("mean_watch_u", self.mean_watch_u)
        ln = _check_finite("content_length_l", self.content_length_l)
        b = _check_finite("bitrate_beta", self.bitrate_beta)
        if r < 0:
            raise ModelDomainError(f"arrival_rate_r must be >= 0, got {r}")
        if u <= 0 or ln <= 0 or b <= 0:
            raise ModelDomainError(
                "mean_watch_u, content_length_l and bitrate_beta must be > 0"
            )

    @property
    def capacity(self) -> float:
        return capacity(self.mean_watch_u, self.arrival_rate_r)

    @property
    def weight(self) -> float:
        """Bits in one full download of the item (beta * l)."""
        return self.bitrate_beta * self.content_length_l


@dataclass(frozen=True)
class ObstacleParams:
    min_swarm_m: int = 1
    participation_alpha: float = 1.0

    def __post_init__(self) -> None:
        _check_m(self.min_swarm_m)
        _check_alpha(self.participation_alpha)


@dataclass(frozen=True)
class BundleSpec:
    """Items distributed jointly as one unit. Each item may appear once."""

    items: tuple[SwarmParams, ...]

    def __init__(self, items: Iterable[SwarmParams]):
        items = tuple(items)
        if not items:
            raise ModelDomainError("a bundle needs at least one item")
        seen = set()
        for it in items:
            if id(it) in seen:
                raise ModelDomainError("an item may appear in a bundle only once")
            seen.add(id(it))
        object.__setattr__(self, "items", items)

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class GainBreakdown:
    useful_traffic_rate: float
    server_traffic_rate: float
    gain: float


def capacity(mean_watch_u: float, arrival_rate_r: float) -> float:
    """Mean number of concurrent users, by Little's law."""
    u = _check_finite("mean_watch_u", mean_watch_u)
    r = _check_finite("arrival_rate_r", arrival_rate_r)
    if u < 0 or r < 0:
        raise ModelDomainError("capacity inputs must be nonnegative")
    return u * r


def scaled_gamma_tail(m: int, x: float, ceiling: float = TAIL_CEILING) -> float:
    """Return ``e^x x^-m (m Gamma(m) - Gamma(1+m, x))`` for integer ``m``.

    For integer ``m`` this is ``m! * sum_{k>m} x^(k-m) / k!``, summed
    directly. Returns ``ceiling`` once the running sum exceeds it.
    """
    m = _check_m(m)
    x = _check_finite("x", x)
    if x < 0:
        raise ModelDomainError(f"x must be >= 0, got {x}")
    if x == 0.0:
        return 0.0
    # term_j = m! x^j / (m+j)!
    term = x / (m + 1)
    total = 0.0
    j = 1
    while j <= _MAX_TERMS:
        total += term
        if total > ceiling or math.isinf(total):
            return ceiling
        if term < _REL_TOL * total:
            break
        j += 1
        term *= x / (m + j)
    return total


def _availability_odds(c: float, m: int) -> float:
    """``E[B] * r`` written in terms of the capacity; inf when saturated."""
    if c == 0.0:
        return 0.0
    tail = scaled_gamma_tail(m, c)
    if tail >= TAIL_CEILING:
        return math.inf
    return c * (1.0 + tail) / m


def expected_busy_period(mean_watch_u: float, arrival_rate_r: float, m: int) -> float:
    """Mean length of a period during which at least ``m`` peers are online."""
    m = _check_m(m)
    u = _check_finite("mean_watch_u", mean_watch_u)
    r = _check_finite("arrival_rate_r", arrival_rate_r)
    if u <= 0:
        raise ModelDomainError(f"mean_watch_u must be > 0, got {u}")
    if r <= 0:
        raise ModelDomainError("busy period is undefined without arrivals (r <= 0)")
    tail = scaled_gamma_tail(m, u * r)
    if tail >= TAIL_CEILING:
        return math.inf
    return u * (1.0 + tail) / m


def unavailability(params: SwarmParams, m: int) -> float:
    """Probability that an arriving peer finds the swarm unable to serve it.

    Computed as the complement of the gain so that the two agree exactly in
    floating point; this costs relative accuracy only below about 1e-12.
    """
    return 1.0 - single_swarm_gain(params.mean_watch_u * params.arrival_rate_r, m)


def single_swarm_gain(c: float, m: int) -> float:
    """Traffic gain of one swarm with capacity ``c``."""
    m = _check_m(m)
    c = _check_finite("c", c)
    if c < 0:
        raise ModelDomainError(f"capacity must be >= 0, got {c}")
    return 1.0 - 1.0 / (_availability_odds(c, m) + 1.0)


def useful_traffic_rate(params: SwarmParams) -> float:
    return params.weight * params.arrival_rate_r


def server_traffic_rate(params: SwarmParams, m: int) -> float:
    """Bits per second the servers still deliver for this swarm."""
    return params.weight * params.arrival_rate_r * unavailability(params, m)


def _check_alpha(alpha: float) -> float:
    alpha = _check_finite("alpha", alpha)
    if not 0.0 < alpha <= 1.0:
        raise ModelDomainError(f"alpha must lie in (0, 1], got {alpha}")
    return alpha


def traffic_breakdown(
    swarms: Sequence[SwarmParams], m: int, alpha: float = 1.0
) -> GainBreakdown:
    """Aggregate useful and server traffic over several swarms.

    With ``alpha < 1`` only that fraction of peers uploads, which lowers the
    arrival rate seen by the availability formula but not the demand.
    """
    m = _check_m(m)
    alpha = _check_alpha(alpha)
    if len(swarms) == 0:
        raise ModelDomainError("need at least one swarm")
    useful = 0.0
    server = 0.0
    for p in swarms:
        demand = p.weight * p.arrival_rate_r
        useful += demand
        if p.arrival_rate_r == 0:
            continue
        c_up = p.mean_watch_u * (alpha * p.arrival_rate_r)
        server += demand / (_availability_odds(c_up, m) + 1.0)
    if useful <= 0:
        raise ModelDomainError("total useful traffic is zero")
    return GainBreakdown(useful, server, 1.0 - server / useful)


def multi_swarm_gain(swarms: Sequence[SwarmParams], m: int) -> float:
    """Traffic-weighted gain across swarms."""
    return traffic_breakdown(swarms, m, 1.0).gain


def partial_participation_gain(
    swarms: Sequence[SwarmParams], m: int, alpha: float
) -> float:
    return traffic_breakdown(swarms, m, alpha).gain


def _bundle_items(bundle: BundleSpec | Sequence[SwarmParams]) -> tuple[SwarmParams, ...]:
    items = bundle.items if isinstance(bundle, BundleSpec) else tuple(bundle)
    if not items:
        raise ModelDomainError("a bundle needs at least one item")
    return items


def bundle_server_traffic(bundle: BundleSpec | Sequence[SwarmParams], m: int) -> float:
    """Server traffic of a bundle: total weight x total rate x joint unavailability."""
    items = _bundle_items(bundle)
    weight = math.fsum(p.weight for p in items) if len(items) > 1 else items[0].weight
    rate = math.fsum(p.arrival_rate_r for p in items) if len(items) > 1 else items[0].arrival_rate_r
    joint = 1.0
    for p in items:
        joint *= unavailability(p, m)
    return weight * rate * joint


def bundle_delta_gain(bundle: BundleSpec | Sequence[SwarmParams], m: int) -> float:
    """Gain change from distributing the items as a bundle.

    Positive values mean the bundle saves server traffic; negative values
    mean the larger downloads cost more than the extra availability saves.
    """
    items = _bundle_items(bundle)
    if len(items) == 1:
        # exact cancellation
        if items[0].arrival_rate_r == 0:
            raise ModelDomainError("total useful traffic is zero")
        return 0.0
    useful = math.fsum(p.weight * p.arrival_rate_r for p in items)
    if useful <= 0:
        raise ModelDomainError("total useful traffic is zero")
    separate = math.fsum(server_traffic_rate(p, m) for p in items)
    return (separate - bundle_server_traffic(items, m)) / useful
