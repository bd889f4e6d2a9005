"""Acceptance criteria, one test each. Every test prints a single verdict line.

Criteria that are known not to hold for this implementation are left to
fail; the reasons are written next to the affected checks.
"""

import itertools
import json
import math
import time

import numpy as np
import pytest

from swarmgain import cli, experiments, model, oracle
from swarmgain.simulator import ScenarioConfig, run
from swarmgain.trace import ContentRecord, SessionRecord
from swarmgain.workload import WorkloadSpec, generate

pytestmark = pytest.mark.acceptance

# The fixed skewed corpus shared by criteria 6-8: one day of traffic, so the
# hottest item runs at c ~ 90 concurrent viewers.
CORPUS_SPEC = WorkloadSpec(
    catalog_size=1000,
    zipf_exponent=0.8,
    total_arrival_rate=1e5 / 86400.0,
    mean_watch=1200.0,
    content_length=1800.0,
    horizon=86400.0,
    isp_shares={"isp-a": 0.6, "isp-b": 0.4},
    ladder_shares={762.0: 0.3, 1500.0: 0.5, 2800.0: 0.2},
    repeat_viewer_fraction=0.5,
    repeat_pool_size=5000,
    rng_seed=2024,
)


@pytest.fixture(scope="module")
def corpus():
    catalog, records = generate(CORPUS_SPEC)
    assert abs(len(records) - 100_000) < 1500
    return catalog, records


def verdict(report_line, n, ok, detail):
    report_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    return ok


def test_c1_closed_form_identity(report_line):
    t0 = time.perf_counter()
    grid = np.linspace(0.0, 50.0, 500)
    worst = max(abs(model.single_swarm_gain(float(c), 1) - (1.0 - math.exp(-c))) for c in grid)
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-10 and elapsed < 1.0
    assert verdict(report_line, 1, ok, f"max |G - (1-e^-c)| = {worst:.2e} over 500 points in {elapsed * 1e3:.1f} ms")


# Simulated state changes allowed per grid point (about 15 minutes at the
# measured kernel speed). A pilot run projects the cost of 10^6 cycles.
CYCLES = 1_000_000
POINT_BUDGET = 6 * 10**10
PILOT_CYCLES = 2_000
PILOT_BUDGET = 10**8


def _oracle_point(u, r, m):
    pilot = oracle.run_cycles(oracle.McConfig(u, r, m, PILOT_CYCLES, rng_seed=17, max_jumps=PILOT_BUDGET))
    if pilot.cycles < PILOT_CYCLES:
        return None, f"pilot finished {pilot.cycles}/{PILOT_CYCLES} cycles in {PILOT_BUDGET:.0e} jumps"
    projected = pilot.jumps / pilot.cycles * CYCLES
    if projected > POINT_BUDGET:
        return None, f"projected {projected:.1e} jumps exceeds budget {POINT_BUDGET:.0e}"
    cfg = oracle.McConfig(u, r, m, CYCLES, rng_seed=1000 + m, max_jumps=POINT_BUDGET)
    busy, unav, st = oracle.mc_busy_and_unavailability(cfg)
    if st.cycles < CYCLES:
        return None, f"budget exhausted after {st.cycles} cycles"
    return (busy, unav), ""


def test_c2_oracle_equivalence(report_line):
    failures = []
    for u, r, m in itertools.product((50.0, 100.0, 500.0), (0.001, 0.01, 0.1), (1, 2, 5)):
        t0 = time.perf_counter()
        est, why = _oracle_point(u, r, m)
        tag = f"u={u:g} r={r:g} m={m} (c={u * r:g})"
        if est is None:
            failures.append(tag)
            print(f"  {tag}: infeasible, {why}")
            continue
        busy, unav = est
        eb = model.expected_busy_period(u, r, m)
        p = model.unavailability(model.SwarmParams(r, u, 1.0, 1.0), m)
        zb, zp = (busy.estimate - eb) / busy.stderr, (unav.estimate - p) / unav.stderr
        rb, rp = abs(busy.estimate / eb - 1), abs(unav.estimate / p - 1)
        ok = abs(zb) < 3 and abs(zp) < 3 and rb <= 0.02 and rp <= 0.02
        if not ok:
            failures.append(tag)
        print(f"  {tag}: E[B] z={zb:+.2f} rel={rb:.4f}  P z={zp:+.2f} rel={rp:.4f}  "
              f"{'ok' if ok else 'MISMATCH'}  [{time.perf_counter() - t0:.0f} s]")
    detail = f"{27 - len(failures)}/27 grid points agree"
    if failures:
        detail += "; failing: " + ", ".join(failures)
    assert verdict(report_line, 2, not failures, detail)


def test_c3_server_traffic_peak(report_line):
    cs = np.round(np.arange(0.05, 5.0 + 1e-9, 0.05), 10)
    ts = [model.server_traffic_rate(model.SwarmParams(c / 100.0, 100.0, 1800.0, 1.5e6), 1) for c in cs]
    peak = float(cs[int(np.argmax(ts))])
    assert verdict(report_line, 3, 0.9 <= peak <= 1.1, f"argmax of T_s at c = {peak:.2f}")


def _free_queue_gain(c, m):
    return 1.0 - math.fsum(math.exp(-c) * c**j / math.factorial(j) for j in range(m))


def test_c4_simulator_model_agreement(report_line):
    # Expected to fail for m > 1: a trace replay counts requests that find
    # fewer than m concurrent peers, i.e. P(N < m) of the free M/M/inf queue,
    # while the closed form gives P(N = m-1 | N >= m-1). They coincide at m=1.
    spec = WorkloadSpec(catalog_size=1, mean_watch=100.0, content_length=100.0, horizon=1e6, rng_seed=4)
    grid = [0.5, 1.0, 2.0, 5.0, 10.0, 20.0]
    worst, bad = 0.0, []
    for m, alpha in itertools.product((1, 2, 5), (0.3, 1.0)):
        cfg = ScenarioConfig(min_swarm_m=m, participation_alpha=alpha, eligibility_fraction=0.0, rng_seed=8)
        rows = experiments.sweep("capacity", grid, cfg, spec=spec)
        diffs = [row["G_sim"] - row["G_theo"] for row in rows]
        print(f"  m={m} alpha={alpha}: G_sim - G_theo " + " ".join(f"c={c:g}:{d:+.3f}" for c, d in zip(grid, diffs)))
        free = [row["G_sim"] - _free_queue_gain(alpha * c, m) for c, row in zip(grid, rows)]
        print(f"  {'':15} G_sim - P(Poisson(ac) >= m) " + " ".join(f"{d:+.3f}" for d in free))
        for c, d in zip(grid, diffs):
            worst = max(worst, abs(d))
            if abs(d) > 0.03:
                bad.append(f"(c={c:g},m={m},a={alpha})")
    detail = f"max |G_sim - G_theo| = {worst:.3f}, {36 - len(bad)}/36 points within 0.03"
    if bad:
        detail += "; outside: " + " ".join(bad)
    assert verdict(report_line, 4, not bad, detail)


def test_c5_micro_traces(report_line):
    cat = {"A": ContentRecord("A", 100.0)}

    def s(user, start, watch, isp="x"):
        return SessionRecord(user, "A", float(start), float(watch), isp, 1500.0)

    g1 = run([s("a", 0, 100), s("b", 20, 50)], cat).gain
    g2 = run([s("a", 0, 100), s("b", 5, 50)], cat).gain
    g3 = run([s("a", 0, 100), s("b", 20, 50, isp="y")], cat, ScenarioConfig(isp_split=True)).gain
    ok = g1 == 1 / 3 and g2 == 0.0 and g3 == 0.0
    assert verdict(report_line, 5, ok, f"gains {g1!r}, {g2!r}, {g3!r}")


def _nonincreasing(xs):
    return all(b <= a for a, b in zip(xs, xs[1:]))


def test_c6_monotonicity(report_line, corpus):
    cat, recs = corpus

    def gain(**kw):
        return run(recs, cat, ScenarioConfig(**kw)).gain

    g_m = [gain(min_swarm_m=m) for m in range(1, 11)]
    g_a = [gain(participation_alpha=a / 10) for a in range(1, 11)]
    g_k = [gain(cache_size_k=k) for k in range(0, 11)]
    base = g_m[0]
    g_isp, g_br = gain(isp_split=True), gain(bitrate_split=True)
    g_dl = [gain(availability_mode="download", download_bandwidth_bps=b) for b in (1e7, 5e7, 1e8)]
    checks = {
        "m": _nonincreasing(g_m),
        "alpha": _nonincreasing(g_a[::-1]),
        "cache_k": _nonincreasing(g_k[::-1]),
        "isp": g_isp <= base,
        "bitrate": g_br <= base,
        "download<=watch": all(g <= base for g in g_dl),
        "download order": _nonincreasing(g_dl),
    }
    print(f"  m 1..10: {np.round(g_m, 4).tolist()}")
    print(f"  alpha .1..1: {np.round(g_a, 4).tolist()}")
    print(f"  k 0..10: {np.round(g_k, 4).tolist()}")
    print(f"  base {base:.4f} isp {g_isp:.4f} bitrate {g_br:.4f} download 10/50/100 Mbps {np.round(g_dl, 4).tolist()}")
    failed = [k for k, v in checks.items() if not v]
    detail = f"{len(checks) - len(failed)}/{len(checks)} orderings hold" + (f"; broken: {failed}" if failed else "")
    assert verdict(report_line, 6, not failed, detail)


def test_c7_bundling(report_line, corpus):
    cat, recs = corpus
    items = experiments.item_params(recs, cat)
    singles_zero = all(model.bundle_delta_gain([p], 1) == 0.0 for p in items.values())
    shares = {}
    for k in range(2, 8):
        res = experiments.bundle_scan(items, k, sample_count=100_000, seed=k)
        shares[k] = res.positive_share
    minority = all(v < 0.5 for v in shares.values())
    detail = f"size-1 dG == 0: {singles_zero}; positive share " + " ".join(f"k={k}:{v:.3f}" for k, v in shares.items())
    assert verdict(report_line, 7, singles_zero and minority, detail)


def test_c8_caching(report_line, corpus):
    cat, recs = corpus
    off = run(recs, cat, ScenarioConfig(cache_size_k=0))
    on = run(recs, cat, ScenarioConfig(cache_size_k=10))
    margin = on.gain - off.gain
    # "positive margin" is read as at least one percentage point of gain
    ok = on.mean_capacity > off.mean_capacity and margin >= 0.01
    detail = (f"capacity {off.mean_capacity:.3f} -> {on.mean_capacity:.3f} "
              f"(x{on.mean_capacity / off.mean_capacity:.2f}); gain {off.gain:.4f} -> {on.gain:.4f} (+{margin:.4f})")
    assert verdict(report_line, 8, ok, detail)


def _tree(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


def test_c9_determinism(report_line, tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"catalog_size": 40, "total_arrival_rate": 0.05, "mean_watch": 900,
                                "isp_shares": {"a": 0.5, "b": 0.5}, "repeat_viewer_fraction": 0.5,
                                "repeat_pool_size": 50, "rng_seed": 12}))
    scen = tmp_path / "scen.json"
    scen.write_text(json.dumps({"isp_split": True, "cache_size_k": 3, "participation_alpha": 0.7}))
    assert cli.main(["generate", "--spec", str(spec), "--out", str(tmp_path / "generate")]) == 0
    tr = ["--trace", str(tmp_path / "generate" / "trace.csv"), "--catalog", str(tmp_path / "generate" / "catalog.csv")]
    commands = {
        "simulate": ["simulate", *tr, "--scenario", str(scen)],
        "analyze": ["analyze", *tr],
        "sweep": ["sweep", "--axis", "m", "--grid", "1,2,5", *tr, "--scenario", str(scen), "--jobs", "2"],
        "bundle-scan": ["bundle-scan", "--k", "4", "--samples", "500", *tr],
        "oracle": ["oracle", "--u", "100", "--r", "0.01", "--m", "2", "--cycles", "5000"],
    }
    for name, argv in commands.items():
        assert cli.main([*argv, "--out", str(tmp_path / name)]) == 0
    same = {}
    for name in ["generate", *commands]:
        again = tmp_path / f"{name}-replay"
        assert cli.main(["replay", "--manifest", str(tmp_path / name / "manifest.json"), "--out", str(again)]) == 0
        same[name] = _tree(tmp_path / name) == _tree(again)
    ok = all(same.values())
    assert verdict(report_line, 9, ok, "byte-identical replays: " + ", ".join(f"{k}={v}" for k, v in same.items()))
