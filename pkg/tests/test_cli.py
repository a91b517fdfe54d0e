import csv
import io

import pytest

from amcast_lab import cli, verify
from amcast_lab.metrics import BASE_COLUMNS


def test_parse_seeds():
    assert cli.parse_seeds("7") == [7]
    assert cli.parse_seeds("1,2,5") == [1, 2, 5]
    assert cli.parse_seeds("0-3, 9") == [0, 1, 2, 3, 9]
    with pytest.raises(cli.ConfigError, match="seeds"):
        cli.parse_seeds("x")


def _args(*argv):
    return cli.make_parser().parse_args(["run", *argv])


def test_config_file_then_flags(tmp_path, monkeypatch):
    monkeypatch.delenv("AMCAST_LAB_SEED", raising=False)
    ini = tmp_path / "run.ini"
    ini.write_text("[run]\nprotocol = skeen\nlocality = 0.5\nflush-every = 10\nseeds = 3-4\n")
    cfg = cli.build_config(_args("--config", str(ini), "--locality", "0.9"))
    assert cfg.protocol == "skeen" and cfg.locality == 0.9
    assert cfg.flush_every == 10 and cfg.seeds == [3, 4]


def test_env_seed_is_default(monkeypatch):
    monkeypatch.setenv("AMCAST_LAB_SEED", "42")
    assert cli.build_config(_args()).seeds == [42]
    assert cli.build_config(_args("--seed", "5")).seeds == [5]


def test_unknown_config_key(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[run]\ncolour = blue\n")
    with pytest.raises(cli.ConfigError, match="colour"):
        cli.load_config_file(str(ini))


@pytest.mark.parametrize("argv,field", [
    (["--locality", "1.5"], "locality"),
    (["--overlay", "nowhere.txt"], "overlay"),
    (["--matrix", "missing.csv"], "matrix"),
    (["--protocol", "hierarchical", "--overlay", "o1"], "overlay"),
    (["--trim", "0.7"], "trim"),
])
def test_config_errors_exit_two(argv, field, capsys):
    assert cli.main(["run", *argv, "--duration", "10"]) == 2
    assert f"config error: {field}" in capsys.readouterr().err


SMALL = ["--duration", "400", "--clients", "1"]


def test_run_writes_csv_to_stdout(capsys):
    assert cli.main(["run", "--protocol", "flexcast", "--overlay", "o1", "--locality", "0.99",
                     "--seed", "7", *SMALL]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0][:9] == list(BASE_COLUMNS) and len(rows[0]) == 9 + 12
    assert rows[1][:5] == ["flexcast", "o1", "0.99", "7", "1"]


def test_run_is_deterministic(tmp_path):
    outs = []
    for k in range(2):
        out, tr = tmp_path / f"r{k}.csv", tmp_path / f"t{k}.jsonl"
        assert cli.main(["run", "--protocol", "skeen", "--seed", "7", "--out", str(out),
                         "--trace-out", str(tr), *SMALL]) == 0
        outs.append((out.read_bytes(), tr.read_bytes()))
    assert outs[0] == outs[1]
    assert verify.read_trace(tmp_path / "t0.jsonl")


def test_trace_per_seed(tmp_path):
    tr = tmp_path / "trace-{seed}.jsonl"
    assert cli.main(["run", "--seeds", "1,2", "--out", str(tmp_path / "o.csv"),
                     "--trace-out", str(tr), *SMALL]) == 0
    assert (tmp_path / "trace-1.jsonl").exists() and (tmp_path / "trace-2.jsonl").exists()
    assert cli.trace_path("t.jsonl", 3, True) == "t-3.jsonl"
    assert cli.trace_path("t.jsonl", 3, False) == "t.jsonl"


def test_parallel_seeds_match_serial(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(["run", "--seeds", "1-2", "--out", str(a), *SMALL]) == 0
    assert cli.main(["run", "--seeds", "1-2", "--jobs", "2", "--out", str(b), *SMALL]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_hierarchical_t1_overhead_and_expected_minimality():
    cfg = cli.RunConfig(protocol="hierarchical", overlay="t1", locality=0.9, duration=1500, clients=2)
    res = cli.run_seed(cfg, 1)
    assert not res.failed
    mini = next(r for r in res.reports if r.name == "minimality")
    assert not mini.ok and mini.info["expected"] == "non-genuine protocol"
    overheads = [float(x) for x in res.rows[0][9:]]
    assert max(overheads) > 0


def test_scenarios_command(capsys):
    assert cli.main(["scenarios"]) == 0
    out = capsys.readouterr().out
    assert out.count("ok ") == 7
    assert cli.main(["scenarios", "acks"]) == 0
