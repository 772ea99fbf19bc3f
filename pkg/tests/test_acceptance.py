"""Acceptance gate: one test group per criterion, each recording a PASS/FAIL line.

Long simulations are cached for the session, so the whole file takes a few
minutes on one core. Criteria that are known not to hold are marked
``xfail(strict=True)``: they still run and assert the real condition, they
show up as FAIL in the summary, and they turn the suite red if they ever
start passing unnoticed.
"""

import csv
import io
import itertools
import time
from collections import defaultdict
from fractions import Fraction
from functools import cache

import numpy as np
import pytest
from scipy import stats

from swarmmap import cli
from swarmmap.binpack import brute_force_costs, optimal_cost, worst_cost
from swarmmap.classes import CLASS_ACCURACY, default_classes
from swarmmap.config import SimConfig
from swarmmap.ensemble import brute_force_ensemble, ensemble_accuracy
from swarmmap.mesh import wire
from swarmmap.mesh.tuples import MeshTuple, TupleValue
from swarmmap.metrics import bandwidth_per_agent
from swarmmap.sim import World, run_experiment

STEPS = 4000
SEEDS = range(10)
TREND_SEEDS = range(4)
MODEL = default_classes()


@cache
def simulate(n, v, seed):
    return World(SimConfig(n_agents=n, min_votes=v, seed=seed)).run(STEPS)


@cache
def summary(n, v, seed):
    r = simulate(n, v, seed)
    obs = [f.observed_coverage for f in r.frames]
    half = next((f.step for f in r.frames if f.observed_coverage >= 0.5), STEPS)
    acc = next((f.map_accuracy for f in reversed(r.frames) if f.map_accuracy is not None), None)
    return {
        "obs_half_step": half,
        "obs_mean": float(np.mean(obs)),
        "accuracy": acc,
        "cons_mean": float(np.mean([f.consolidation_coverage for f in r.frames])),
        "bytes": bandwidth_per_agent(r.frames, r.config.dt)["mean"],
    }


def medians(key, groups):
    return [float(np.median([summary(n, v, s)[key] for s in TREND_SEEDS])) for n, v in groups]


def _fmt(xs):
    return "[" + ", ".join(f"{x:.4g}" for x in xs) + "]"


# -- 1: ensemble formula against the brute-force oracle ---------------------------------


def test_c1_formula_matches_oracle(gate):
    start = time.perf_counter()
    worst = 0.0
    for n, c, k in itertools.product(range(1, 7), range(2, 14), range(10)):
        p = 0.05 + 0.1 * k
        worst = max(worst, abs(ensemble_accuracy(n, p, c) - brute_force_ensemble(n, p, c)))
    took = time.perf_counter() - start
    ok = gate(1, "", worst <= 1e-12 and took < 60, f"max |diff| {worst:.2e} over 720 cases in {took:.1f}s")
    assert ok


# -- 2: analytic identities --------------------------------------------------------------


def test_c2_identities_and_dominance(gate):
    exact = all(
        ensemble_accuracy(n, p, c) == p
        for n in (1, 2)
        for c in range(2, 14)
        for p in [Fraction(k, 20) for k in range(21)] + [Fraction(str(v)) for v in CLASS_ACCURACY.values()]
    )
    floats = all(
        abs(ensemble_accuracy(n, p, 13) - p) <= 1e-15 for n in (1, 2) for p in CLASS_ACCURACY.values()
    )
    mono, above = True, True
    for p in CLASS_ACCURACY.values():
        curve = [ensemble_accuracy(n, p, 13) for n in range(1, 13)]
        mono &= all(b >= a - 1e-15 for a, b in zip(curve, curve[1:]))
        above &= all(x >= p - 1e-15 for x in curve)
    ok = gate(2, "", exact and floats and mono and above,
              f"exact n=1,2 {exact}, float n=1,2 {floats}, nondecreasing to n=12 {mono}, >= p {above}")
    assert ok


# -- 3: per-class ensemble curves --------------------------------------------------------


def test_c3_ensemble_curves(gate, capsys):
    assert cli.main(["ensemble-table", "--n-max", "8"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    curves = defaultdict(list)
    for r in rows:
        curves[r["class"]].append((int(r["n"]), float(r["p_ens"])))
    shape = len(curves) == 13 and all([n for n, _ in c] == list(range(1, 9)) for c in curves.values())
    mono = all(b[1] >= a[1] - 1e-12 for c in curves.values() for a, b in zip(c, c[1:]))
    chair, bed = dict(curves["chair"]), dict(curves["bed"])
    dominates = all(chair[n] > bed[n] for n in range(1, 9))
    ok = gate(3, "", shape and mono and dominates,
              f"13 classes x n=1..8 {shape}, monotone {mono}, chair > bed at every n {dominates}")
    assert ok


# -- 4: simulated consolidations against the ensemble prediction ---------------------------


def test_c4_consolidation_accuracy_within_binomial_band(gate):
    cells = defaultdict(lambda: [0, 0])
    for seed in SEEDS:
        r = simulate(30, 3, seed)
        for c in r.consolidations:
            truth = r.scene.objects[r.scene.locate(*c.xy)].label
            cell = cells[(truth, len(c.votes))]
            cell[0] += 1
            cell[1] += c.label == truth
    bad = []
    expected = 0.0
    for (truth, n), (count, right) in sorted(cells.items()):
        p_ens = ensemble_accuracy(n, MODEL.p(truth), 13)
        expected += count * p_ens
        lo, hi = stats.binom.interval(0.99, count, p_ens)
        if not lo <= right <= hi:
            bad.append((MODEL.name(truth), n, right, count, round(p_ens, 3)))
    total = sum(c for c, _ in cells.values())
    right = sum(r for _, r in cells.values())
    ok = gate(4, "", total > 0 and not bad,
              f"{len(cells)} (class, n) cells, {len(bad)} outside band {bad[:3]}; "
              f"pooled {right}/{total} correct vs {expected:.1f} predicted")
    assert ok


# -- 5: qualitative trends -----------------------------------------------------------------


def test_c5a_coverage_rises_faster_with_more_agents(gate):
    groups = [(10, 3), (20, 3), (30, 3)]
    half = medians("obs_half_step", groups)
    mean = medians("obs_mean", groups)
    ok = half[0] > half[1] > half[2] and mean[0] < mean[1] < mean[2]
    gate(5, "a", ok, f"N=10,20,30: steps to half coverage {_fmt(half)}, mean coverage {_fmt(mean)}")
    assert ok


def test_c5b_votes_raise_accuracy_and_slow_consolidation(gate):
    groups = [(30, v) for v in (3, 4, 5, 6)]
    acc = medians("accuracy", groups)
    cons = medians("cons_mean", groups)
    # accuracy saturates at 1, so equal neighbours count as rising
    acc_ok = all(b >= a for a, b in zip(acc, acc[1:])) and acc[-1] > acc[0]
    cons_ok = all(b < a for a, b in zip(cons, cons[1:]))
    ok = acc_ok and cons_ok
    gate(5, "b", ok, f"V=3..6 at N=30: final accuracy {_fmt(acc)}, mean consolidation coverage {_fmt(cons)}")
    assert ok


def test_c5c_bandwidth_rises_with_votes(gate):
    groups = [(30, v) for v in (3, 4, 5, 6)]
    rate = medians("bytes", groups)
    ok = all(b > a for a, b in zip(rate, rate[1:]))
    gate(5, "c-votes", ok, f"bytes/s/agent for V=3..6 at N=30 {_fmt(rate)}")
    assert ok


@pytest.mark.xfail(strict=True, reason="per-step beacon headers make the per-agent rate grow with density")
def test_c5c_bandwidth_falls_with_more_agents(gate):
    groups = [(10, 6), (20, 6), (30, 6)]
    rate = medians("bytes", groups)
    ok = all(b < a for a, b in zip(rate, rate[1:]))
    gate(5, "c-agents", ok, f"bytes/s/agent for N=10,20,30 at V=6 {_fmt(rate)}")
    assert ok


# -- 6: storage cost sandwich --------------------------------------------------------------


@cache
def sandwich():
    below = above = frames = 0
    worst_gap = 0.0
    for seed in SEEDS:
        r = simulate(30, 3, seed)
        cap = r.config.storage_capacity
        for f in r.frames:
            items = sum(f.loads)
            lo = optimal_cost(items, f.neighbor_counts, cap)
            hi = worst_cost(items, f.neighbor_counts, cap)
            frames += 1
            below += lo > f.realized_cost + 1e-9
            if f.realized_cost > hi + 1e-9:
                above += 1
                worst_gap = max(worst_gap, f.realized_cost - hi)
    return frames, below, above, worst_gap


def test_c6_optimal_never_exceeds_realized(gate):
    frames, below, _, _ = sandwich()
    ok = gate(6, "-lower", below == 0, f"{below} of {frames} steps with optimal > realized")
    assert ok


@pytest.mark.xfail(strict=True, reason="the constructed worst case is not the maximum cost")
def test_c6_realized_never_exceeds_constructed_worst(gate):
    frames, _, above, gap = sandwich()
    ok = gate(6, "-upper", above == 0, f"{above} of {frames} steps with realized > worst (largest excess {gap:.3f})")
    assert ok


def test_c6_optimal_matches_enumeration(gate):
    checked = 0
    mismatch = []
    for nbins in range(1, 5):
        for counts in itertools.product(range(5), repeat=nbins):
            for cap in range(1, 5):
                for items in range(1, min(6, cap * nbins) + 1):
                    lo, _ = brute_force_costs(items, counts, cap)
                    if optimal_cost(items, counts, cap, method="partitions") != lo:
                        mismatch.append((items, counts, cap))
                    checked += 1
    ok = gate(6, "-oracle", not mismatch, f"{checked} instances (<=6 items, <=4 bins), {len(mismatch)} mismatches")
    assert ok


# -- 7: mesh conservation under disconnection ------------------------------------------------


def test_c7_conservation_over_long_disconnected_run(gate):
    # sparse swarm, random radio blackouts and small memories; the audit raises on any breach
    cfg = SimConfig(
        n_agents=8, seed=7, blackout_prob=0.05, audit=True,
        storage_capacity=5, routing_capacity=5, memory_capacity=10, store_ttl=20,
    )
    world = World(cfg)
    isolated = 0
    for _ in range(100_000):
        f = world.step()
        isolated += sum(c == 0 for c in f.neighbor_counts)
    fallbacks = sum(a.mesh.stats.ttl_fallbacks for a in world.agents)
    alive = len(world._alive)
    ok = isolated > 0 and len(world.holdings()) <= alive
    gate(7, "-audit", ok, f"100000 audited steps, {isolated} isolated agent-steps, {fallbacks} TTL fallbacks, "
         f"{alive} live tuples, no breach")
    assert ok


def _random_message(rng):
    def item():
        value = TupleValue(int(rng.integers(1, 14)), tuple(rng.uniform(-9, 9, 3)), float(rng.uniform(-3, 3)),
                           tuple(rng.uniform(-1, 1, 3)), bool(rng.integers(2)))
        return MeshTuple(int(rng.integers(0, 2**32)), int(rng.integers(0, 2**16)), value)

    u16, u32 = (lambda: int(rng.integers(0, 2**16))), (lambda: int(rng.integers(0, 2**32)))
    makers = (
        lambda: wire.StoreOffer(u16(), u32(), u16()),
        lambda: wire.StoreTransfer(u16(), u16(), item()),
        lambda: wire.GetRequest(u32(), u16(), *np.float32(rng.uniform(0, 9, 3)).tolist()),
        lambda: wire.EraseRequest(u32(), u16(), *np.float32(rng.uniform(0, 9, 3)).tolist(),
                                  tuple(u32() for _ in range(int(rng.integers(0, 4))))),
    )
    reqs = [makers[int(rng.integers(4))]() for _ in range(int(rng.integers(0, 6)))]
    reps = [
        wire.Reply(u32(), u16(), item()) if rng.integers(2) else wire.StoreAccept(u16(), u32())
        for _ in range(int(rng.integers(0, 6)))
    ]
    return wire.MeshMessage(u16(), u32(), reqs, reps)


def test_c7_wire_round_trip(gate):
    rng = np.random.default_rng(77)
    fails = 0
    for _ in range(10_000):
        msg = _random_message(rng)
        fails += wire.decode(wire.encode(msg)) != msg
    ok = gate(7, "-wire", fails == 0, f"{fails} of 10000 random messages failed to round-trip")
    assert ok


# -- 8: determinism ---------------------------------------------------------------------------


def test_c8_identical_runs_write_identical_files(gate, tmp_path):
    cfg = SimConfig(n_agents=12, min_votes=3, seed=21, audit=True)
    for name in "ab":
        run_experiment(cfg, 1500, tmp_path / name)
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files)
    ok = gate(8, "", same and "trace.csv" in files, f"{len(files)} files byte-identical: {same}")
    assert ok
