"""Latency percentiles, throughput, scalability and message-size accounting."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .protocol import REQ
from .simnet import LatencySample
from .verify import RECEIVE, TraceEvent

PERCENTILES = (90, 95, 99)


def percentile(values: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: the smallest value with at least p% of samples at or below it."""
    if not values:
        raise ValueError("no samples")
    if not 0 < p <= 100:
        raise ValueError(f"percentile {p} outside (0, 100]")
    ordered = sorted(values)
    return ordered[max(1, math.ceil(p / 100.0 * len(ordered))) - 1]


def percentiles(samples: Iterable[LatencySample], rank: int, ps: Sequence[float] = PERCENTILES) -> list[float]:
    """Percentiles of the reply latency from the ``rank``-th destination (1-based)."""
    values = rank_latencies(samples, rank)
    return [percentile(values, p) for p in ps]


def rank_latencies(samples: Iterable[LatencySample], rank: int) -> list[float]:
    if rank < 1:
        raise ValueError("ranks start at 1")
    return [s.latencies[rank - 1] for s in samples if len(s.latencies) >= rank]


def trim(samples: Sequence[LatencySample], fraction: float = 0.10) -> list[LatencySample]:
    """Drop the first and last floor(fraction * n) samples by issue time."""
    if not 0 <= fraction < 0.5:
        raise ValueError(f"trim fraction {fraction} outside [0, 0.5)")
    ordered = sorted(samples, key=lambda s: (s.issued, s.msg))
    k = math.floor(fraction * len(ordered))
    return ordered[k:len(ordered) - k]


def throughput(samples: Sequence[LatencySample]) -> float:
    """Completed transactions per second over the span the samples cover."""
    if not samples:
        return 0.0
    start = min(s.issued for s in samples)
    end = max(s.issued + (s.latencies[-1] if s.latencies else 0.0) for s in samples)
    span = end - start
    if span <= 0:
        return 0.0
    return len(samples) / (span / 1000.0)


def scalability_factor(mt_i: float, cf_i: float, mt_j: float, cf_j: float) -> float:
    """Measured throughput at configuration j relative to ideal linear scaling from i.

    1.0 means throughput grew in proportion to the client count.
    """
    if min(mt_i, cf_i, mt_j, cf_j) <= 0:
        raise ValueError("scalability factor needs positive throughputs and client counts")
    return (mt_j * cf_i) / (mt_i * cf_j)


@dataclass(frozen=True)
class ByteStats:
    msgs_per_s: float
    mean_bytes: float
    bytes_per_s: float


def byte_accounting(trace: Iterable[TraceEvent], group: int, duration_ms: float | None = None) -> ByteStats:
    """Protocol messages received by ``group`` from other groups (client requests excluded)."""
    count = total = 0
    first = last = None
    for ev in trace:
        if first is None:
            first = ev.at
        last = ev.at
        if ev.kind == RECEIVE and ev.node == group and ev.pkind != REQ:
            count += 1
            total += ev.nbytes
    if count == 0:
        return ByteStats(0.0, 0.0, 0.0)
    span = duration_ms if duration_ms is not None else (last - first)
    secs = span / 1000.0 if span and span > 0 else 0.0
    mean = total / count
    if secs == 0.0:
        return ByteStats(0.0, mean, 0.0)
    return ByteStats(count / secs, mean, total / secs)


# -- CSV -----------------------------------------------------------------------

BASE_COLUMNS = ("protocol", "overlay", "locality", "seed", "rank", "p90", "p95", "p99", "throughput")


def csv_header(n_groups: int) -> list[str]:
    """Fixed columns, then one overhead column per group in latency-matrix order."""
    return list(BASE_COLUMNS) + [f"overhead_{g}" for g in range(n_groups)]


def result_rows(protocol: str, overlay: str, locality: float, seed: int,
                samples: Sequence[LatencySample], overheads: Sequence[float],
                max_rank: int = 3) -> list[list]:
    tput = throughput(samples)
    rows = []
    for rank in range(1, max_rank + 1):
        values = rank_latencies(samples, rank)
        if not values:
            continue
        p90, p95, p99 = percentiles(samples, rank)
        rows.append([protocol, overlay, f"{locality:g}", seed, rank,
                     f"{p90:.3f}", f"{p95:.3f}", f"{p99:.3f}", f"{tput:.3f}",
                     *(f"{o:.6f}" for o in overheads)])
    return rows


def format_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return out.getvalue()
