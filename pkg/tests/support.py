"""Randomized run builders shared by the property tests and the acceptance suite."""

import random

from scipy.stats import chisquare

from amcast_lab import verify
from amcast_lab.history import MessageId
from amcast_lab.overlay import CDagOverlay, TreeOverlay
from amcast_lab.simnet import Injection, LatencyMatrix, SimConfig, simulate


def random_tree(n, rng):
    return TreeOverlay(tuple([None] + [rng.randrange(i) for i in range(1, n)]))


def random_run_config(protocol, seed, *, n_range=(3, 12), msg_range=(50, 500)):
    """One randomized open-loop run: groups, matrix, overlay and scripted multicasts."""
    rng = random.Random(seed)
    n = rng.randint(*n_range)
    lat = LatencyMatrix.random(n, rng, 1.0, 300.0)
    overlay = random_tree(n, rng) if protocol == "hierarchical" else CDagOverlay(n)
    count = rng.randint(*msg_range)
    span = rng.uniform(10.0, 2000.0)
    injections = []
    for i in range(count):
        k = min(rng.randint(1, 3), n)
        dst = frozenset(rng.sample(range(n), k))
        injections.append(Injection(rng.uniform(0.0, span), i, dst, rng.randrange(n)))
    return SimConfig(protocol, overlay, lat, seed=seed, client_link=0.0), injections


def run_random(protocol, seed, **kw):
    cfg, injections = random_run_config(protocol, seed, **kw)
    return simulate(cfg, injections)


def failed_checks(protocol, trace):
    """Names and details of failing checkers, minimality excused for the tree protocol."""
    reports = verify.check_all(trace) + [verify.check_fifo(trace)]
    return [str(r) for r in reports
            if not r.ok and not (protocol == "hierarchical" and r.name == "minimality")]


# -- trace mutations ---------------------------------------------------------------

def drop_delivery(trace, rng):
    idx = [i for i, e in enumerate(trace) if e.kind == verify.DELIVER]
    i = rng.choice(idx)
    return trace[:i] + trace[i + 1:], trace[i]


def duplicate_delivery(trace, rng):
    idx = [i for i, e in enumerate(trace) if e.kind == verify.DELIVER]
    i = rng.choice(idx)
    return trace[:i + 1] + [trace[i]] + trace[i + 1:], trace[i]


def swap_order(trace, rng):
    """Swap two consecutive deliveries at one group of messages sharing another
    destination. None if the trace has no such pair."""
    last = {}
    candidates = []
    for i, e in enumerate(trace):
        if e.kind != verify.DELIVER:
            continue
        j = last.get(e.node)
        if j is not None and len(set(trace[j].dst) & set(e.dst)) >= 2:
            candidates.append((j, i))
        last[e.node] = i
    if not candidates:
        return None
    j, i = rng.choice(candidates)
    out = list(trace)
    a, b = out[j], out[i]
    out[j], out[i] = b._replace(at=a.at), a._replace(at=b.at)
    return out, (a.msg, b.msg)


def fabricate_cycle(trace, groups=(0, 1, 2)):
    """Append three fresh multicasts, each to two of ``groups``, delivered so that
    m1 < m2 < m3 < m1 while no pair shares two destinations."""
    g0, g1, g2 = groups
    t = trace[-1].at + 1 if trace else 0.0
    ms = [MessageId(10_000 + k, 1) for k in range(3)]
    dsts = [(g0, g1), (g1, g2), (g0, g2)]
    extra = [verify.TraceEvent(t, verify.CLIENT_SEND, 10_000 + k, ms[k], dsts[k]) for k in range(3)]
    plan = [(g0, 2), (g0, 0), (g1, 0), (g1, 1), (g2, 1), (g2, 2)]
    extra += [verify.TraceEvent(t + 1, verify.DELIVER, g, ms[k], dsts[k]) for g, k in plan]
    return list(trace) + extra, ms


def pooled_chisquare(counts, probs, total, min_expected=5.0):
    """Chi-square with low-expectation tail cells pooled into one."""
    obs, exp = [], []
    acc_o = acc_e = 0.0
    for c, p in zip(counts, probs):
        acc_o += c
        acc_e += p * total
        if acc_e >= min_expected:
            obs.append(acc_o)
            exp.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e or acc_o:
        obs[-1] += acc_o
        exp[-1] += acc_e
    return chisquare(obs, exp)
