"""End-to-end acceptance checks, one or more tests per numbered criterion.

Each test prints a one-line verdict; the conftest summary groups them by criterion.
"""

import random
import time
from collections import Counter

import pytest

from amcast_lab import cli, metrics, verify
from amcast_lab.overlay import CDagOverlay
from amcast_lab.scenarios import BY_NAME, SCENARIOS, diff_orders, run_scenario
from amcast_lab.simnet import (
    Injection, LatencyMatrix, SimConfig, Simulation, default_matrix_path, simulate,
)
from amcast_lab.workload import (
    DEFAULT_MIX, KINDS, Workload, WorkloadConfig, cascade_probabilities, nearest_order,
)

from support import (
    drop_delivery, duplicate_delivery, fabricate_cycle, failed_checks, pooled_chisquare,
    random_run_config, run_random, swap_order,
)

PROTOCOLS = ("flexcast", "skeen", "hierarchical")


def verdict(label, ok, detail=""):
    print(f"[{'PASS' if ok else 'FAIL'}] {label} {detail}".rstrip())
    assert ok, detail


# 1 ---------------------------------------------------------------------------------

def test_c01_scenarios():
    t0 = time.perf_counter()
    diffs = {}
    for sc in SCENARIOS:
        observed, reports, _ = run_scenario(sc)
        problems = diff_orders(sc.expected, observed) + [str(r) for r in reports if not r.ok]
        if problems:
            diffs[sc.name] = problems
    elapsed = time.perf_counter() - t0
    c = {name: run_scenario(BY_NAME[name])[0]["C"] for name in ("histories", "acks", "notifs")}
    ordered = (c["histories"].index("m1") < c["histories"].index("m3")
               and c["acks"].index("m1") < c["acks"].index("m2")
               and c["notifs"].index("m1") < c["notifs"].index("m3"))
    verdict("1 scenarios", not diffs and ordered and elapsed < 1.0,
            f"{len(SCENARIOS)} scenarios in {elapsed:.3f}s {diffs or ''}")


def test_c01_scenarios_repeatable():
    first = [run_scenario(sc)[0] for sc in SCENARIOS]
    assert first == [run_scenario(sc)[0] for sc in SCENARIOS]


# 2 ---------------------------------------------------------------------------------

_SWEEP_SECONDS = {}


@pytest.mark.parametrize("protocol", PROTOCOLS)
def test_c02_property_sweep(protocol):
    t0 = time.perf_counter()
    failures = {}
    for seed in range(1000):
        cfg, inj = random_run_config(protocol, seed)
        bad = failed_checks(protocol, simulate(cfg, inj).trace)
        if bad:
            failures[seed] = bad
    _SWEEP_SECONDS[protocol] = time.perf_counter() - t0
    verdict(f"2 sweep {protocol}", not failures,
            f"1000 runs in {_SWEEP_SECONDS[protocol]:.1f}s, failing seeds {sorted(failures)[:5]}")


def test_c02_sweep_runtime():
    total = sum(_SWEEP_SECONDS.values())
    verdict("2 sweep runtime", len(_SWEEP_SECONDS) == 3 and total < 300, f"{total:.1f}s total")


# 3 ---------------------------------------------------------------------------------

@pytest.mark.parametrize("protocol", PROTOCOLS)
def test_c03_mutations(protocol):
    rng = random.Random(f"mutate-{protocol}")
    missed = Counter()
    tried = Counter()
    for seed in range(50):
        trace = run_random(protocol, seed, n_range=(3, 8), msg_range=(50, 200)).trace
        for name, mutate, checker in (
            ("drop", drop_delivery, verify.check_validity_agreement_integrity),
            ("dup", duplicate_delivery, verify.check_validity_agreement_integrity),
            ("swap", swap_order, verify.check_prefix_order),
            ("cycle", lambda t, r: fabricate_cycle(t), verify.check_acyclic_order),
        ):
            mutated = mutate(trace, rng)
            if mutated is None:
                continue
            tried[name] += 1
            if checker(mutated[0]).ok:
                missed[name] += 1
    verdict(f"3 mutations {protocol}", not missed and all(tried[k] for k in ("drop", "dup", "swap", "cycle")),
            f"tried {dict(tried)} missed {dict(missed)}")


# 4 ---------------------------------------------------------------------------------

@pytest.mark.parametrize("protocol", ["flexcast", "skeen"])
def test_c04_genuine_protocols_have_no_overhead(protocol):
    cfg = cli.RunConfig(protocol=protocol, overlay="o1", locality=0.9, clients=3, duration=2000)
    res = cli.run_seed(cfg, 4, keep_trace=True)
    ov = verify.overheads(res.trace, 12)
    verdict(f"4 overhead {protocol}", not res.failed and all(o == 0.0 for o in ov), f"max {max(ov):.4f}")


def test_c04_hierarchical_t1_overhead():
    cfg = cli.RunConfig(protocol="hierarchical", overlay="t1", locality=0.9, clients=5, duration=3000)
    tree = cli.build_world(cfg).overlay
    res = cli.run_seed(cfg, 1, keep_trace=True)
    ov = verify.overheads(res.trace, tree.n)
    inner = [ov[g] for g in tree.groups if not tree.is_leaf(g)]
    leaves = [ov[g] for g in tree.groups if tree.is_leaf(g)]
    mean = sum(inner) / len(inner)
    ok = 0.0 < mean <= 0.20 and max(inner) > mean and all(o == 0.0 for o in leaves) and not res.failed
    verdict("4 overhead hierarchical t1", ok,
            f"inner mean {mean:.4f} max {max(inner):.4f} leaves max {max(leaves):.4f}")


# 5 ---------------------------------------------------------------------------------

def _step_latencies(protocol):
    lm = LatencyMatrix.from_rows([[0, 100], [100, 0]], ["A", "B"])
    sim = Simulation(SimConfig(protocol, CDagOverlay(2, ("A", "B")), lm, client_link=1.0))
    once = iter([frozenset({0, 1})])
    sim.add_client(0, 0, lambda: next(once))
    res = sim.run(0.5)
    assert all(r.ok for r in verify.check_all(res.trace))
    return res.samples[0].latencies


def test_c05_hand_traced_latencies():
    flex, skeen = _step_latencies("flexcast"), _step_latencies("skeen")
    # skeen: A forwards its timestamp, B decides at 101 and answers A at 201
    verdict("5 hand trace", flex == (1.0, 101.0) and skeen == (101.0, 201.0), f"flexcast {flex} skeen {skeen}")


def test_c05_first_destination_gap_is_a_round_trip():
    flex, skeen = _step_latencies("flexcast"), _step_latencies("skeen")
    gap = skeen[0] - flex[0]
    verdict("5 round-trip gap", gap >= 200.0, f"gap {gap} ms, one round trip is 200 ms")


# 6 ---------------------------------------------------------------------------------

def _o1_p90(protocol):
    cfg = cli.RunConfig(protocol=protocol, overlay="o1", locality=0.99, clients=20, duration=3000,
                        verify=False)
    t0 = time.perf_counter()
    res = cli.run_seed(cfg, 1)
    return float(res.rows[0][5]), time.perf_counter() - t0


def test_c06_o1_flexcast_beats_skeen():
    flex, t_flex = _o1_p90("flexcast")
    skeen, t_skeen = _o1_p90("skeen")
    verdict("6 O1 p90", flex < skeen and t_flex < 120 and t_skeen < 120,
            f"flexcast {flex} ms ({t_flex:.0f}s) skeen {skeen} ms ({t_skeen:.0f}s)")


# 7 ---------------------------------------------------------------------------------

N_TX = 10 ** 6


def test_c07_mix():
    lm = LatencyMatrix.load(default_matrix_path())
    w = Workload(WorkloadConfig(12, locality=0.9, seed=7), lm)
    rng = w.client_rng(0)
    c = Counter(w.next_transaction(i % 12, rng).kind for i in range(N_TX))
    worst = max(abs(c[k] / N_TX - DEFAULT_MIX[k]) for k in KINDS)
    verdict("7 mix", worst <= 0.01, f"largest deviation {worst:.5f}")


def test_c07_cascade():
    lm = LatencyMatrix.load(default_matrix_path())
    w = Workload(WorkloadConfig(12, locality=0.9, seed=7), lm)
    rng = random.Random(7)
    c = Counter(w.choose_remote(3, rng) for _ in range(N_TX))
    near = nearest_order(lm, 3, 12)
    res = pooled_chisquare([c[g] for g in near], cascade_probabilities(11, 0.9), N_TX)
    verdict("7 cascade", res.pvalue > 0.01, f"chi-square p={res.pvalue:.3f}")


# 8 ---------------------------------------------------------------------------------

def test_c08_scalability():
    f = metrics.scalability_factor(100, 24, 174, 48)
    verdict("8 scalability", round(f, 2) == 0.87, f"factor {f:.4f}")


# 9 ---------------------------------------------------------------------------------

def _flush_run(total, n=8, seed=3):
    rng = random.Random(seed)
    lat = LatencyMatrix.random(n, rng, 1, 100)
    inj = [Injection(i * 1.0, i, frozenset(rng.sample(range(n), rng.choice((1, 2, 2, 3)))))
           for i in range(total)]
    return simulate(SimConfig("flexcast", CDagOverlay(n), lat, flush_every=100), inj)


def test_c09_history_bounded():
    small = _flush_run(2500)
    big = _flush_run(10_000)
    reports = verify.check_all(big.trace)
    ok = (big.peak_history() <= 1.1 * small.peak_history() and big.peak_history() < 5000
          and all(r.ok for r in reports))
    verdict("9 gc", ok, f"peak {small.peak_history()} at 2500, {big.peak_history()} at 10000, "
            f"checks {[str(r) for r in reports if not r.ok]}")


# 10 --------------------------------------------------------------------------------

@pytest.mark.parametrize("protocol", PROTOCOLS)
def test_c10_identical_outputs(protocol, tmp_path):
    overlay = "t1" if protocol == "hierarchical" else "o1"
    blobs = []
    for k in range(2):
        out, tr = tmp_path / f"{k}.csv", tmp_path / f"{k}.jsonl"
        cli.main(["run", "--protocol", protocol, "--overlay", overlay, "--seed", "7", "--clients", "2",
                  "--duration", "1500", "--jitter", "0.05", "--out", str(out), "--trace-out", str(tr)])
        blobs.append((out.read_bytes(), tr.read_bytes()))
    verdict(f"10 determinism {protocol}", blobs[0] == blobs[1] and len(blobs[0][1]) > 0,
            f"csv {len(blobs[0][0])} B trace {len(blobs[0][1])} B")
