import math

import pytest
from scipy.stats import poisson

from swarmgain import model as M
from swarmgain import oracle as O
from swarmgain.oracle import McConfig


def params(u, r):
    return M.SwarmParams(arrival_rate_r=r, mean_watch_u=u, content_length_l=1.0, bitrate_beta=1.0)


def test_busy_period_examples():
    est = O.mc_busy_period(McConfig(100, 0.01, 1, cycle_count=200_000, rng_seed=1))
    assert est.estimate == pytest.approx(100 * (math.e - 1), rel=0.02)
    est = O.mc_busy_period(McConfig(100, 0.001, 1, cycle_count=200_000, rng_seed=2))
    assert est.estimate == pytest.approx(100 * math.expm1(0.1) / 0.1, rel=0.02)


@pytest.mark.parametrize("c,expected,tol", [(1.0, math.exp(-1), 0.01), (0.01, 0.990, 0.002), (5.0, math.exp(-5), 0.002)])
def test_unavailability_examples(c, expected, tol):
    est = O.mc_unavailability(McConfig(100, c / 100, 1, cycle_count=50_000, rng_seed=3))
    assert est.estimate == pytest.approx(expected, abs=tol)


@pytest.mark.parametrize("u,r,m", [(100, 0.01, 1), (100, 0.01, 2), (50, 0.01, 5), (500, 0.001, 2), (100, 0.03, 3)])
def test_agrees_with_model_within_3se(u, r, m):
    busy, unav, st = O.mc_busy_and_unavailability(McConfig(u, r, m, cycle_count=100_000, rng_seed=11))
    assert st.cycles == 100_000
    assert abs(busy.estimate - M.expected_busy_period(u, r, m)) < 3 * busy.stderr
    assert abs(unav.estimate - M.unavailability(params(u, r), m)) < 3 * unav.stderr


def test_seed_reproducible():
    cfg = McConfig(100, 0.01, 2, cycle_count=5_000, rng_seed=42)
    assert O.mc_busy_period(cfg) == O.mc_busy_period(cfg)
    assert O.mc_busy_period(cfg) != O.mc_busy_period(McConfig(100, 0.01, 2, cycle_count=5_000, rng_seed=43))


def test_frozen_values():
    # regression guard on the generator stream, not a statistical claim
    busy, unav, st = O.mc_busy_and_unavailability(McConfig(100, 0.01, 1, cycle_count=1_000, rng_seed=0))
    assert (st.cycles, st.jumps) == (1_000, 4674)
    assert busy.estimate == pytest.approx(179.20267957252346, rel=1e-12)
    assert unav.estimate == pytest.approx(0.3524850193866761, rel=1e-12)


def test_stderr_shrinks_tenfold():
    small = O.mc_busy_period(McConfig(100, 0.01, 1, cycle_count=2_000, rng_seed=5))
    big = O.mc_busy_period(McConfig(100, 0.01, 1, cycle_count=200_000, rng_seed=6))
    assert 7 < small.stderr / big.stderr < 14


def test_jump_budget_stops_early():
    st = O.run_cycles(McConfig(100, 0.05, 1, cycle_count=10**9, max_jumps=10_000))
    assert 0 < st.cycles < 10**9
    assert st.jumps <= 10_000


def test_parallel_workers_merge():
    st = O.run_cycles(McConfig(100, 0.01, 1, cycle_count=10_001, rng_seed=7, jobs=2))
    assert st.cycles == 10_001


@pytest.mark.parametrize("kw", [dict(u=0, r=0.1), dict(u=1, r=0), dict(u=1, r=1, m=0), dict(u=1, r=1, cycle_count=1)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        McConfig(**kw)


@pytest.mark.parametrize("m", [1, 2, 5])
def test_free_queue_shortfall(m):
    u, r = 100.0, 0.02
    est = O.mc_arrival_shortfall(u, r, m, horizon=2e6, rng_seed=9)
    assert abs(est.estimate - poisson.cdf(m - 1, u * r)) < 4 * est.stderr


def test_free_queue_matches_model_only_for_m1():
    u, r = 100.0, 0.01
    p1 = O.mc_arrival_shortfall(u, r, 1, horizon=2e6, rng_seed=1)
    assert abs(p1.estimate - M.unavailability(params(u, r), 1)) < 4 * p1.stderr
    p2 = O.mc_arrival_shortfall(u, r, 2, horizon=2e6, rng_seed=1)
    assert p2.estimate - M.unavailability(params(u, r), 2) > 0.1
