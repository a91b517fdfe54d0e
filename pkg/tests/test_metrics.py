import random

import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import spearmanr

from amcast_lab import metrics
from amcast_lab.history import MessageId
from amcast_lab.overlay import CDagOverlay
from amcast_lab.simnet import Injection, LatencyMatrix, LatencySample, SimConfig, Simulation, simulate


def sample(i, *lat, issued=None):
    return LatencySample(MessageId(i, 1), float(i if issued is None else issued), tuple(lat))


def test_percentile_single_sample():
    assert metrics.percentiles([sample(0, 100.0)], 1) == [100.0, 100.0, 100.0]


def test_percentile_nearest_rank():
    values = [float(v) for v in range(1, 101)]
    assert metrics.percentile(values, 90) == 90.0
    assert metrics.percentile(values, 99) == 99.0
    assert metrics.percentile(values, 100) == 100.0


def test_percentile_errors():
    with pytest.raises(ValueError, match="no samples"):
        metrics.percentile([], 90)
    with pytest.raises(ValueError, match="no samples"):
        metrics.percentiles([sample(0, 5.0)], 2)
    with pytest.raises(ValueError):
        metrics.percentile([1.0], 0)


@given(st.lists(st.floats(0, 1e4, allow_nan=False), min_size=1, max_size=200), st.randoms())
def test_percentiles_monotone_and_order_free(values, rnd):
    ps = [metrics.percentile(values, p) for p in (1, 25, 50, 90, 95, 99, 100)]
    assert ps == sorted(ps)
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert [metrics.percentile(shuffled, p) for p in (1, 25, 50, 90, 95, 99, 100)] == ps


def test_rank_latencies_skip_short_samples():
    s = [sample(0, 1.0), sample(1, 2.0, 5.0), sample(2, 3.0, 6.0, 9.0)]
    assert metrics.rank_latencies(s, 1) == [1.0, 2.0, 3.0]
    assert metrics.rank_latencies(s, 3) == [9.0]
    with pytest.raises(ValueError):
        metrics.rank_latencies(s, 0)


def test_trim():
    s = [sample(i, 1.0) for i in range(100)]
    kept = metrics.trim(list(reversed(s)))
    assert len(kept) == 80 and kept[0].issued == 10.0 and kept[-1].issued == 89.0
    assert len(metrics.trim(s[:9])) == 9
    assert metrics.trim(s, 0.0) == s
    with pytest.raises(ValueError):
        metrics.trim(s, 0.5)


def test_throughput():
    s = [sample(i, 10.0, issued=i * 100.0) for i in range(11)]   # 11 done in 1010 ms
    assert metrics.throughput(s) == pytest.approx(11 / 1.01)
    assert metrics.throughput([]) == 0.0


@pytest.mark.parametrize("args,expected", [
    ((100, 24, 200, 48), 1.0),
    ((100, 24, 174, 48), 0.87),
    ((100, 24, 100, 48), 0.5),
])
def test_scalability_factor(args, expected):
    assert metrics.scalability_factor(*args) == pytest.approx(expected)


def test_scalability_factor_rejects_zero():
    with pytest.raises(ValueError):
        metrics.scalability_factor(0, 24, 10, 48)


# -- byte accounting -------------------------------------------------------------

def test_bytes_without_traffic():
    assert metrics.byte_accounting([], 0) == metrics.ByteStats(0.0, 0.0, 0.0)


def _uniform_run(protocol, n=6, count=2000):
    rng = random.Random(1)
    inj = [Injection(i * 2.0, i, frozenset(rng.sample(range(n), rng.randint(1, 3)))) for i in range(count)]
    cfg = SimConfig(protocol, CDagOverlay(n), LatencyMatrix.uniform(n, 20.0), client_link=0.0)
    return simulate(cfg, inj).trace


def test_flexcast_message_size_grows_with_rank():
    trace = _uniform_run("flexcast")
    means = [metrics.byte_accounting(trace, g).mean_bytes for g in range(1, 6)]
    rho = spearmanr(range(1, 6), means).statistic
    assert rho > 0


def test_skeen_message_sizes_uniform():
    trace = _uniform_run("skeen")
    stats = [metrics.byte_accounting(trace, g) for g in range(6)]
    assert len({s.mean_bytes for s in stats}) == 1
    assert all(s.msgs_per_s > 0 and s.bytes_per_s == pytest.approx(s.msgs_per_s * s.mean_bytes) for s in stats)


def test_byte_rates_use_given_duration():
    trace = _uniform_run("skeen", count=200)
    a = metrics.byte_accounting(trace, 1, duration_ms=1000.0)
    b = metrics.byte_accounting(trace, 1, duration_ms=2000.0)
    assert a.msgs_per_s == pytest.approx(2 * b.msgs_per_s)
    assert a.mean_bytes == b.mean_bytes


# -- CSV ---------------------------------------------------------------------------

def test_csv_header_and_rows():
    header = metrics.csv_header(3)
    assert header[:9] == list(metrics.BASE_COLUMNS)
    assert header[9:] == ["overhead_0", "overhead_1", "overhead_2"]
    s = [sample(i, 10.0, 20.0, issued=i * 10.0) for i in range(10)]
    rows = metrics.result_rows("skeen", "o1", 0.99, 7, s, [0.0, 0.25, 0.0])
    assert [r[4] for r in rows] == [1, 2]               # no third rank
    assert rows[0][:8] == ["skeen", "o1", "0.99", 7, 1, "10.000", "10.000", "10.000"]
    assert rows[1][-2] == "0.250000"
    text = metrics.format_csv(header, rows)
    assert text.splitlines()[0] == ",".join(header)
    assert len(text.splitlines()) == 3


def _first_dest_p90(protocol):
    lm = LatencyMatrix.from_rows([[0, 100], [100, 0]], ["A", "B"])
    sim = Simulation(SimConfig(protocol, CDagOverlay(2, ("A", "B")), lm))
    sim.add_client(0, 0, lambda: frozenset({0, 1}))
    sim.add_client(1, 1, lambda: frozenset({0, 1}))
    return metrics.percentiles(sim.run(2000.0).samples, 1)[0]


def test_two_group_first_destination_p90():
    assert _first_dest_p90("flexcast") < _first_dest_p90("skeen")
