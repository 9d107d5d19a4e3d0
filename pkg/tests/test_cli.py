import csv
import hashlib
import io
import json

import pytest

from slofetch import cli
from slofetch.config import ConfigError, build, parse_config_text, parse_overrides
from slofetch.sim import Variant

N = 4000


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def trace_file(tmp_path, capsys):
    path = tmp_path / "t.slof"
    code, _, _ = run(capsys, "generate", "--out", str(path), "--workload.record_count", str(N), "--seed", "3")
    assert code == 0
    return path


def test_generate_file_shape(trace_file):
    data = trace_file.read_bytes()
    assert data[:4] == b"SLOF" and data[4:8] == (1).to_bytes(4, "little")
    assert len(data) == 8 + 10 * N


def test_generate_same_seed_same_hash(tmp_path, capsys, trace_file):
    again = tmp_path / "again.slof"
    run(capsys, "generate", "--out", str(again), "--workload.record_count", str(N), "--seed", "3")
    assert hashlib.sha256(again.read_bytes()).digest() == hashlib.sha256(trace_file.read_bytes()).digest()


def test_generate_prints_stats(tmp_path, capsys):
    code, out, _ = run(capsys, "generate", "--out", str(tmp_path / "x.slof"), "--workload.record_count", "3000")
    assert code == 0 and "window8_fraction" in json.loads(out)


def test_budget_json(capsys):
    code, out, _ = run(capsys, "budget")
    b = json.loads(out)
    assert code == 0
    assert (b["history_bytes"], b["attached_bytes"], b["table_bytes"]) == (624, 2304, 22272)
    code, out, _ = run(capsys, "budget", "--eip.sets", "256")
    assert json.loads(out)["table_bytes"] == 44544


def test_run_report(trace_file, capsys, tmp_path):
    out = tmp_path / "r.json"
    code, _, _ = run(capsys, "run", "--trace.path", str(trace_file), "--variant", "CEIP", "--out", str(out))
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["variant"] == "CEIP" and rep["instructions"] > 0


def test_run_csv(trace_file, capsys):
    code, out, _ = run(capsys, "run", "--trace.path", str(trace_file), "--variant", "EIP", "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 1 and rows[0]["variant"] == "EIP"


def test_next_line_sequential_accuracy(tmp_path, capsys):
    from slofetch.trace import fetch, save_trace

    path = tmp_path / "seq.slof"
    save_trace(path, [fetch(x * 64) for x in range(3000) for _ in range(60)])
    code, out, _ = run(capsys, "run", "--trace.path", str(path), "--variant", "NextLineOnly")
    assert code == 0 and json.loads(out)["accuracy"] >= 0.95


def test_shadow_run_issues_only_next_line(trace_file, capsys, tmp_path):
    cal = tmp_path / "cal.csv"
    code, out, _ = run(
        capsys, "run", "--trace.path", str(trace_file), "--variant", "CHEIP+Controller",
        "--ctrl.shadow", "true", "--out.calibration", str(cal),
    )
    code2, base, _ = run(capsys, "run", "--trace.path", str(trace_file), "--variant", "NextLineOnly")
    assert code == code2 == 0
    assert json.loads(out)["issued"] == json.loads(base)["issued"]
    assert cal.read_text().startswith("cycle,source_line")


def test_compare_one_config(trace_file, capsys, tmp_path):
    cfg = tmp_path / "a.cfg"
    cfg.write_text(f"variant = CHEIP\ntrace.path = {trace_file}\n")
    code, out, _ = run(capsys, "compare", "--config", str(cfg))
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 1
    assert rows[0]["variant"] == "CHEIP"
    assert int(rows[0]["storage_bytes"]) == 624 + 2304 + 22272


def test_compare_variants(trace_file, capsys):
    code, out, _ = run(capsys, "compare", "--trace.path", str(trace_file), "--variants", "EIP,CEIP")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and [r["variant"] for r in rows] == ["CEIP", "EIP"]


def test_compare_mismatched_traces(tmp_path, capsys, trace_file):
    a = tmp_path / "a.cfg"
    b = tmp_path / "b.cfg"
    a.write_text(f"variant = EIP\ntrace.path = {trace_file}\n")
    b.write_text("variant = CEIP\nworkload.record_count = 3000\n")
    code, _, err = run(capsys, "compare", "--config", str(a), "--config", str(b))
    assert code == cli.EXIT_MISMATCH and err


def test_run_twice_identical(trace_file, capsys):
    args = ("run", "--trace.path", str(trace_file), "--variant", "CHEIP+Controller", "--seed", "5")
    assert run(capsys, *args)[1] == run(capsys, *args)[1]


@pytest.mark.parametrize(
    "argv, code",
    [
        (["frobnicate"], 2),
        (["run", "--variant", "Nope"], cli.EXIT_CONFIG),
        (["run", "--no.such.key", "1"], cli.EXIT_CONFIG),
        (["run", "--l1i.ways", "7"], cli.EXIT_CONFIG),
        (["run", "--l2.latency", "3"], cli.EXIT_CONFIG),
        (["run", "--workload.record_count", "2000", "--warmup_instructions", "999999"], cli.EXIT_CONFIG),
        (["run", "--trace.path", "/nonexistent/x.slof"], cli.EXIT_IO),
        (["generate", "--out", "/tmp/never.slof", "--workload.function_count", "0"], cli.EXIT_SPEC),
    ],
)
def test_exit_codes(argv, code, capsys):
    try:
        got = cli.main(argv)
    except SystemExit as e:
        got = e.code
    assert got == code


def test_bad_trace_exit(tmp_path, capsys):
    path = tmp_path / "bad.slof"
    path.write_bytes(b"JUNKJUNK")
    code, _, err = run(capsys, "run", "--trace.path", str(path))
    assert code == cli.EXIT_TRACE and "offset" in err


def test_config_text():
    vals = parse_config_text("# comment\nvariant = EIP\neip.sets = 256  # 4K entries\nctrl.shadow = yes\n")
    rc = build(vals)
    assert rc.sim.variant is Variant.EIP and rc.sim.table_entries == 4096 and rc.sim.controller.shadow
    with pytest.raises(ConfigError):
        parse_config_text("variant EIP")
    with pytest.raises(ConfigError):
        build({"eip.sets": 100})


def test_overrides():
    assert parse_overrides(["--seed", "4", "--ctrl.lr=0.5"]) == {"seed": 4, "ctrl.lr": 0.5}
    with pytest.raises(ConfigError):
        parse_overrides(["--seed"])
