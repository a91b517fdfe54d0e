"""Command-line experiment runner.

    amcast-lab run --protocol flexcast --overlay o1 --locality 0.99 --seed 7
    amcast-lab scenarios

Settings come from built-in defaults, then an optional ``--config`` file
(``[run]`` section, keys named like the long flags with dashes or
underscores), then the command line.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import metrics, verify
from .overlay import PRESET_NAMES, CDagOverlay, OverlayError, TreeOverlay, load_overlay, preset
from .scenarios import SCENARIOS, diff_orders, run_scenario
from .simnet import PROTOCOLS, LatencyMatrix, SimConfig, Simulation, default_matrix_path
from .workload import Workload, WorkloadConfig

log = logging.getLogger("amcast_lab")


class ConfigError(ValueError):
    """Bad run configuration; the message names the offending field."""


@dataclass
class RunConfig:
    protocol: str = "flexcast"
    overlay: str = "o1"
    matrix: str = ""
    clients: int = 1                 # per region
    locality: float = 0.99
    duration: float = 10_000.0       # ms of client activity
    seeds: list = field(default_factory=lambda: [0])
    trim: float = 0.10
    flush_every: int = 1000
    workload: str = "full"
    out: str = "-"
    trace_out: str = ""
    verify: bool = True
    jitter: float = 0.0
    client_link: float = 1.0
    reply: str = "instant"
    jobs: int = 1

    def validate(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol: expected one of {', '.join(PROTOCOLS)}, got {self.protocol!r}")
        if self.matrix and not Path(self.matrix).is_file():
            raise ConfigError(f"matrix: no such file {self.matrix!r}")
        if self.overlay.lower() not in PRESET_NAMES and not Path(self.overlay).is_file():
            raise ConfigError(f"overlay: not a preset ({', '.join(PRESET_NAMES)}) or a file: {self.overlay!r}")
        if not 0.0 <= self.locality <= 1.0:
            raise ConfigError(f"locality: must be in [0, 1], got {self.locality}")
        if self.clients < 0:
            raise ConfigError("clients: must be >= 0")
        if self.duration < 0:
            raise ConfigError("duration: must be >= 0")
        if not 0.0 <= self.trim < 0.5:
            raise ConfigError(f"trim: must be in [0, 0.5), got {self.trim}")
        if self.flush_every < 0:
            raise ConfigError("flush_every: must be >= 0")
        if self.workload not in ("full", "global"):
            raise ConfigError(f"workload: expected full or global, got {self.workload!r}")
        if self.reply not in ("instant", "matrix"):
            raise ConfigError(f"reply: expected instant or matrix, got {self.reply!r}")
        if not 0.0 <= self.jitter < 1.0:
            raise ConfigError("jitter: must be in [0, 1)")
        if not self.seeds:
            raise ConfigError("seeds: at least one seed is needed")


def parse_seeds(text: str) -> list[int]:
    """``7``, ``1,2,5`` or ``0-9``."""
    seeds: list[int] = []
    try:
        for part in str(text).split(","):
            part = part.strip()
            if not part:
                continue
            lo, dash, hi = part.partition("-")
            if dash and lo:
                seeds.extend(range(int(lo), int(hi) + 1))
            else:
                seeds.append(int(part))
    except ValueError:
        raise ConfigError(f"seeds: cannot parse {text!r}") from None
    return seeds


_CONVERT = {"clients": int, "locality": float, "duration": float, "trim": float, "flush_every": int,
            "jitter": float, "client_link": float, "jobs": int}


def _coerce(key: str, value):
    if key == "seeds":
        return parse_seeds(value) if isinstance(value, str) else list(value)
    if key == "verify" and isinstance(value, str):
        return value.strip().lower() in ("1", "yes", "true", "on")
    conv = _CONVERT.get(key)
    if conv is not None and isinstance(value, str):
        try:
            return conv(value)
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {value!r}") from None
    return value


def load_config_file(path: str) -> dict:
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise ConfigError(f"config: cannot read {path!r}")
    if not cp.has_section("run"):
        raise ConfigError(f"config: {path!r} has no [run] section")
    known = {f.name for f in fields(RunConfig)} | {"seed"}
    out = {}
    for key, value in cp.items("run"):
        key = key.replace("-", "_")
        if key not in known:
            raise ConfigError(f"config: unknown key {key!r}")
        out["seeds" if key == "seed" else key] = value
    return out


def build_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    env_seed = os.environ.get("AMCAST_LAB_SEED")
    if env_seed:
        values["seeds"] = env_seed
    if args.config:
        values.update(load_config_file(args.config))
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    if args.seed is not None:
        values["seeds"] = [args.seed]
    cfg = RunConfig(**{k: _coerce(k, v) for k, v in values.items()})
    cfg.validate()
    return cfg


# -- world building -------------------------------------------------------------

@dataclass
class World:
    """Overlay and matrix aligned on group ids, plus the region of each group."""

    overlay: CDagOverlay | TreeOverlay
    latency: LatencyMatrix
    region_of_group: tuple[str, ...]
    group_of_region: dict


def build_world(cfg: RunConfig) -> World:
    matrix = LatencyMatrix.load(cfg.matrix or default_matrix_path())
    name = cfg.overlay
    try:
        if name.lower() in PRESET_NAMES:
            ov = preset(name, matrix.regions, matrix.ms)
        else:
            ov = load_overlay(name, matrix.regions)
    except OverlayError as exc:
        raise ConfigError(f"overlay: {exc}") from None
    if cfg.protocol == "hierarchical" and not isinstance(ov, TreeOverlay):
        raise ConfigError(f"overlay: hierarchical needs a tree overlay, {name!r} is a C-DAG")
    if cfg.protocol == "flexcast" and not isinstance(ov, CDagOverlay):
        raise ConfigError(f"overlay: flexcast needs a C-DAG overlay, {name!r} is a tree")
    if cfg.protocol == "skeen" and isinstance(ov, TreeOverlay):
        ov = CDagOverlay(matrix.n, matrix.regions)   # skeen ignores overlays
    if set(ov.region_name) != set(matrix.regions):
        raise ConfigError("overlay: regions differ from the latency matrix regions")
    if isinstance(ov, CDagOverlay):
        latency = matrix.reorder(ov.region_name)
    else:
        latency = matrix
    return World(ov, latency, tuple(ov.region_name), {r: g for g, r in enumerate(ov.region_name)})


@dataclass
class SeedResult:
    seed: int
    rows: list
    reports: list
    trace: list
    failed: bool
    peak_history: int = 0


def run_seed(cfg: RunConfig, seed: int, *, keep_trace: bool = False) -> SeedResult:
    world = build_world(cfg)
    n = world.overlay.n
    sim = Simulation(SimConfig(cfg.protocol, world.overlay, world.latency, client_link=cfg.client_link,
                               jitter=cfg.jitter, seed=seed, reply_mode=cfg.reply,
                               flush_every=cfg.flush_every if cfg.protocol == "flexcast" else 0,
                               record_trace=True))
    wl = Workload(WorkloadConfig(n, cfg.locality, mode=cfg.workload, seed=seed), world.latency)
    for g in range(n):
        for k in range(cfg.clients):
            cid = g * cfg.clients + k
            sim.add_client(cid, g, wl.source(cid, g))
    result = sim.run(cfg.duration)
    reports = []
    failed = False
    if cfg.verify:
        reports = verify.check_all(result.trace) + [verify.check_fifo(result.trace)]
        for r in reports:
            if r.ok:
                continue
            if r.name == "minimality" and cfg.protocol == "hierarchical":
                r.info["expected"] = "non-genuine protocol"
                continue
            failed = True
    # overhead columns follow latency-matrix region order, not group ids
    matrix_regions = LatencyMatrix.load(cfg.matrix or default_matrix_path()).regions
    per_group = verify.overheads(result.trace, n)
    overheads = [per_group[world.group_of_region[r]] for r in matrix_regions]
    samples = metrics.trim(result.samples, cfg.trim)
    rows = metrics.result_rows(cfg.protocol, cfg.overlay, cfg.locality, seed, samples, overheads)
    return SeedResult(seed, rows, reports, result.trace if keep_trace else [], failed, result.peak_history())


def trace_path(template: str, seed: int, many: bool) -> str:
    if "{seed}" in template:
        return template.format(seed=seed)
    if not many:
        return template
    p = Path(template)
    return str(p.with_name(f"{p.stem}-{seed}{p.suffix}"))


def run_experiment(cfg: RunConfig) -> int:
    keep = bool(cfg.trace_out)
    if cfg.jobs > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            results = list(pool.map(_run_seed_job, [(cfg, s, keep) for s in cfg.seeds]))
    else:
        results = [run_seed(cfg, s, keep_trace=keep) for s in cfg.seeds]
    n = LatencyMatrix.load(cfg.matrix or default_matrix_path()).n
    rows = [row for r in results for row in r.rows]
    text = metrics.format_csv(metrics.csv_header(n), rows)
    if cfg.out == "-":
        sys.stdout.write(text)
    else:
        Path(cfg.out).write_text(text)
    status = 0
    for r in results:
        if keep:
            verify.write_trace(r.trace, trace_path(cfg.trace_out, r.seed, len(results) > 1))
        for rep in r.reports:
            if rep.ok:
                log.info("seed %d: %s", r.seed, rep)
            elif rep.info.get("expected"):
                log.warning("seed %d: %s (expected: %s)", r.seed, rep.name, rep.info["expected"])
            else:
                log.error("seed %d: %s", r.seed, rep)
        if r.failed:
            status = 1
    return status


def _run_seed_job(job) -> SeedResult:
    cfg, seed, keep = job
    return run_seed(cfg, seed, keep_trace=keep)


def run_scenarios(names: list[str] | None = None) -> int:
    status = 0
    for sc in SCENARIOS:
        if names and sc.name not in names:
            continue
        observed, reports, _ = run_scenario(sc)
        diff = diff_orders(sc.expected, observed)
        bad = [r for r in reports if not r.ok]
        if diff or bad:
            status = 1
            print(f"FAIL {sc.name}")
            for line in diff:
                print(line)
            for r in bad:
                print(f"  {r}")
        else:
            print(f"ok   {sc.name}: " + "; ".join(f"{g} {' '.join(o)}" for g, o in observed.items()))
    return status


# -- argument parsing --------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="amcast-lab", description="Atomic multicast experiments on a simulated WAN.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate, verify and write latency CSV")
    r.add_argument("--config", help="INI file with a [run] section")
    r.add_argument("--protocol", choices=PROTOCOLS)
    r.add_argument("--overlay", help=f"preset ({', '.join(PRESET_NAMES)}) or overlay file")
    r.add_argument("--matrix", help="latency matrix CSV (default: bundled 12-region AWS matrix)")
    r.add_argument("--clients", type=int, help="clients per region")
    r.add_argument("--locality", type=float)
    r.add_argument("--duration", type=float, help="ms of client activity")
    r.add_argument("--seed", type=int)
    r.add_argument("--seeds", help="list or range, e.g. 1,2,3 or 0-9")
    r.add_argument("--trim", type=float, help="fraction dropped at each end")
    r.add_argument("--flush-every", dest="flush_every", type=int, help="flexcast flush period in multicasts; 0 = off")
    r.add_argument("--workload", choices=("full", "global"))
    r.add_argument("--out", help="CSV path, '-' for stdout")
    r.add_argument("--trace-out", dest="trace_out", help="trace path; '{seed}' is replaced per seed")
    r.add_argument("--no-verify", dest="verify", action="store_const", const=False)
    r.add_argument("--jitter", type=float, help="uniform +-fraction on link latencies")
    r.add_argument("--client-link", dest="client_link", type=float, help="client to home-group ms")
    r.add_argument("--reply", choices=("instant", "matrix"), help="how replies reach clients")
    r.add_argument("--jobs", type=int, help="worker processes for seed sweeps")

    s = sub.add_parser("scenarios", help="replay the hand-checked executions")
    s.add_argument("names", nargs="*")
    return p


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(message)s")
    if args.command == "scenarios":
        return run_scenarios(args.names)
    try:
        cfg = build_config(args)
        return run_experiment(cfg)
    except ConfigError as exc:
        print(f"amcast-lab: config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
