"""Scenario files and the command-line runner."""
import csv
import io
import json
from pathlib import Path

import pytest

from rdcf import cli
from rdcf.analytic_model import ConvergenceError
from rdcf.config import ConfigError, dump_config, parse_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
TABLE2 = str(CONFIGS / "table2.json")
N50 = str(CONFIGS / "n50.json")


def write(tmp_path, data, name="c.json"):
    p = tmp_path / name
    p.write_text(data if isinstance(data, str) else json.dumps(data))
    return str(p)


def homog(sid, n, mode="basic", **kw):
    return {"id": sid, "access_mode": mode, "population": {"kind": "homogeneous", "n": n}, **kw}


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


# --- config -------------------------------------------------------------------

def test_defaults_reproduce_standard_setup():
    (sc,) = parse_config(json.dumps({"scenarios": [homog("a", 10)]}))
    assert sc.packet_bytes == 2312
    assert sc.backoff == {"cw_min": 16, "r": 2.0, "b": 6}
    assert sc.rates_mbps == [6, 9, 12, 18, 24, 36, 48, 54]
    assert sc.strategy == "rdcf" and sc.mini_slot_convention == "eq1"
    assert sc.population["dist"] == "equal"
    assert sc.timing().sigma == pytest.approx(72e-6)


def test_defaults_block_is_merged():
    text = json.dumps({"defaults": {"packet_bytes": 1028, "access_mode": "rts_cts"},
                       "scenarios": [homog("a", 10, mode="basic"), {"id": "b", "population": {"kind": "homogeneous", "n": 3}}]})
    a, b = parse_config(text)
    assert a.packet_bytes == b.packet_bytes == 1028
    assert (a.access_mode, b.access_mode) == ("basic", "rts_cts")


def test_round_trip():
    text = json.dumps({"scenarios": [
        homog("h", 7, backoff={"cw_min": 4}),
        {"id": "f", "population": {"kind": "fixed_rate", "group_sizes": [1, 0, 2, 0, 0, 0, 0, 3]}},
        {"id": "g", "population": {"kind": "general", "rows": [[1, 1, 0, 0, 0, 0, 0, 0], [0] * 7 + [2]]}},
        {"id": "p", "population": {"kind": "homogeneous", "n": 2, "probs": [0.5, 0.5]}, "rates_mbps": [6, 54]},
    ]})
    first = parse_config(text)
    again = parse_config(dump_config(first))
    assert first == again


@pytest.mark.parametrize("text, fragment", [
    ('{"scenarios": []}', "no scenarios"),
    ('{"scenarios": [\n {"id": 1,}\n]}', "line 2, column"),
    ('[]', "top level"),
    ('{"scenarios": [{"id": "x", "population": {"kind": "fixed_rate", "n": 10, '
     '"group_sizes": [1,1,1,1,1,1,1,1]}}]}', "does not match n=10"),
    ('{"scenarios": [{"id": "x", "population": {"kind": "fixed_rate", "group_sizes": [1,1]}}]}',
     "2 entries for 8 rates"),
    ('{"scenarios": [{"id": "x", "colour": 1, "population": {"kind": "homogeneous", "n": 2}}]}',
     "unknown field"),
    ('{"scenarios": [{"id": "x", "strategy": "aloha", "population": {"kind": "homogeneous", "n": 2}}]}',
     "x'.strategy"),
    ('{"scenarios": [{"id": "x", "population": {"kind": "ring"}}]}', "population.kind"),
    ('{"scenarios": [{"id": "x", "population": {"kind": "homogeneous"}}]}', "missing field 'n'"),
    ('{"scenarios": [{"id": "x", "backoff": {"cw_min": 0}, "population": {"kind": "homogeneous", "n": 2}}]}',
     "backoff"),
    ('{"scenarios": [{"population": {"kind": "homogeneous", "n": 2}}]}', "missing field 'id'"),
    ('{"scenarios": [{"id": "a", "population": {"kind": "homogeneous", "n": 2}},'
     '{"id": "a", "population": {"kind": "homogeneous", "n": 3}}]}', "duplicate"),
])
def test_config_errors(text, fragment):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert fragment in str(err.value)


# --- commands -----------------------------------------------------------------

def test_analyze_reference_row(capsys):
    code, out, _ = run_cli(capsys, "analyze", "--config", TABLE2)
    assert code == 0
    table = {r["scenario_id"]: r for r in rows(out)}
    assert len(table) == 20
    row = table["basic-n20"]
    assert row["source"] == "analytic" and row["relative_error"] == ""
    assert float(row["throughput_mbps"]) == pytest.approx(25.09, rel=0.02)


def test_analyze_text_format(tmp_path, capsys):
    cfg = write(tmp_path, {"scenarios": [homog("a", 5)]})
    code, out, _ = run_cli(capsys, "analyze", "--config", cfg, "--format", "text")
    assert code == 0 and "throughput_mbps" in out.splitlines()[0] and " a " in out


def test_input_errors_exit_2(tmp_path, capsys):
    code, _, err = run_cli(capsys, "analyze", "--config", str(tmp_path / "missing.json"))
    assert code == 2 and "error" in err
    code, _, err = run_cli(capsys, "analyze", "--config", write(tmp_path, '{"scenarios": []}'))
    assert code == 2 and "no scenarios" in err
    cfg = write(tmp_path, {"scenarios": [homog("a", 5, strategy="dcf")]})
    assert run_cli(capsys, "analyze", "--config", cfg)[0] == 2
    cfg = write(tmp_path, {"scenarios": [homog("a", 5)]})
    assert run_cli(capsys, "simulate", "--config", cfg, "--horizon", "0")[0] == 2


def test_non_convergence_exit_3(tmp_path, capsys, monkeypatch):
    def boom(*a, **k):
        raise ConvergenceError("no luck", 0.1, 10)
    monkeypatch.setattr(cli, "analyze", boom)
    cfg = write(tmp_path, {"scenarios": [homog("stuck", 5)]})
    code, _, err = run_cli(capsys, "analyze", "--config", cfg)
    assert code == 3 and "stuck" in err


def test_simulate_is_deterministic_and_ordered(tmp_path, capsys):
    cfg = write(tmp_path, {"defaults": {"horizon_slots": 10000},
                           "scenarios": [homog("a", 5), homog("b", 10, mode="rts_cts"), homog("c", 3)]})
    _, one, _ = run_cli(capsys, "simulate", "--config", cfg, "--seed", "4")
    _, two, _ = run_cli(capsys, "simulate", "--config", cfg, "--seed", "4", "--jobs", "2")
    assert one == two
    assert [r["scenario_id"] for r in rows(one)] == ["a", "b", "c"]
    _, other, _ = run_cli(capsys, "simulate", "--config", cfg, "--seed", "5")
    assert other != one


def test_out_flag_writes_file(tmp_path, capsys):
    cfg = write(tmp_path, {"scenarios": [homog("a", 5)]})
    out_path = tmp_path / "r.csv"
    code, out, _ = run_cli(capsys, "analyze", "--config", cfg, "--out", str(out_path))
    assert code == 0 and out == "" and out_path.read_text().startswith("scenario_id,")


def test_convention_override_changes_result(tmp_path, capsys):
    cfg = write(tmp_path, {"scenarios": [homog("a", 20)]})
    _, eq1, _ = run_cli(capsys, "analyze", "--config", cfg)
    _, eq11, _ = run_cli(capsys, "analyze", "--config", cfg, "--convention", "eq11")
    assert rows(eq1)[0]["throughput_mbps"] != rows(eq11)[0]["throughput_mbps"]


def test_validate_columns_are_self_consistent(tmp_path, capsys):
    cfg = write(tmp_path, {"defaults": {"horizon_slots": 20000},
                           "scenarios": [homog("a", 10), homog("b", 45, mode="rts_cts", gate=False)]})
    code, out, _ = run_cli(capsys, "validate", "--config", cfg, "--replicas", "3")
    assert code == 0
    for r in rows(out):
        S, A, E = float(r["S_mbps"]), float(r["A_mbps"]), float(r["E"])
        assert E == pytest.approx(abs(S - A) / A, rel=1e-5, abs=1e-12)
        assert float(r["S_spread_mbps"]) >= 0
    assert rows(out)[1]["gated"] == "false"


def test_validate_gate_failure_exit_1(tmp_path, capsys, monkeypatch):
    monkeypatch.setattr(cli, "GATE", 0.0)
    cfg = write(tmp_path, {"defaults": {"horizon_slots": 10000},
                           "scenarios": [homog("a", 10), homog("b", 20, gate=False)]})
    code, _, err = run_cli(capsys, "validate", "--config", cfg)
    assert code == 1 and "'a'" in err and "not gated" in err


def test_validate_ungated_failure_does_not_fail(tmp_path, capsys, monkeypatch):
    monkeypatch.setattr(cli, "GATE", 0.0)
    cfg = write(tmp_path, {"defaults": {"horizon_slots": 10000}, "scenarios": [homog("b", 20, gate=False)]})
    assert run_cli(capsys, "validate", "--config", cfg)[0] == 0


def test_optimize_single_row(tmp_path, capsys):
    cfg = write(tmp_path, {"scenarios": [homog("a", 50, packet_bytes=1028)]})
    code, out, err = run_cli(capsys, "optimize", "--config", cfg, "--no-sim")
    assert code == 0
    table = rows(out)
    assert len(table) == 1 and table[0]["cw_min"] == "2" and table[0]["r_app"] == "1.4"
    assert "s_max_mbps" in err


def test_optimize_offline_table_near_optimum(tmp_path, capsys):
    cfg = write(tmp_path, {"scenarios": [homog("a", 100, packet_bytes=1028, horizon_slots=100000)]})
    report = tmp_path / "cmp.csv"
    code, out, _ = run_cli(capsys, "optimize", "--config", cfg, "--n-range", "100", "--report", str(report))
    assert code == 0
    (r,) = rows(report.read_text())
    s_max, offline = float(r["s_max_mbps"]), float(r["offline_sim_mbps"])
    assert abs(offline - s_max) / s_max <= 0.03
    assert offline > float(r["standard_sim_mbps"]) > float(r["dcf_sim_mbps"])


def test_optimize_rejects_non_homogeneous(tmp_path, capsys):
    cfg = write(tmp_path, {"scenarios": [{"id": "f", "population": {"kind": "fixed_rate",
                                                                   "group_sizes": [1] * 8}}]})
    assert run_cli(capsys, "optimize", "--config", cfg)[0] == 2


def test_sweep_tau_interior_maximum(capsys):
    code, out, _ = run_cli(capsys, "sweep", "--config", N50, "--axis", "tau",
                           "--values", "0.01:1:0.01", "--sources", "analytic")
    assert code == 0
    basic = [(float(r["value"]), float(r["throughput_mbps"])) for r in rows(out)
             if r["scenario_id"] == "fig12-basic"]
    best = max(basic, key=lambda x: x[1])
    assert 0.05 < best[0] < 0.5
    assert best[1] > basic[0][1] and best[1] > basic[-1][1]


def test_sweep_strategy_ordering(tmp_path, capsys):
    cfg = write(tmp_path, {"scenarios": [homog("a", 5, horizon_slots=30000)]})
    code, out, _ = run_cli(capsys, "sweep", "--config", cfg, "--axis", "n", "--values", "20,35,50",
                           "--strategies", "rdcf,oar_txop,dcf", "--sources", "simulated")
    assert code == 0
    got = {(int(r["value"]), r["strategy"]): float(r["throughput_mbps"]) for r in rows(out)}
    for n in (20, 35, 50):
        assert got[n, "rdcf"] > got[n, "oar_txop"] > got[n, "dcf"]


def test_sweep_columns_and_sources(tmp_path, capsys):
    cfg = write(tmp_path, {"scenarios": [homog("a", 10, horizon_slots=10000)]})
    code, out, _ = run_cli(capsys, "sweep", "--config", cfg, "--axis", "cw_min", "--values", "4,16",
                           "--sources", "analytic,simulated,optimum")
    assert code == 0
    assert out.splitlines()[0] == ",".join(cli.SWEEP_HEADER)
    assert [(r["value"], r["source"]) for r in rows(out)] == [
        ("4", "analytic"), ("4", "simulated"), ("4", "optimum"),
        ("16", "analytic"), ("16", "simulated"), ("16", "optimum")]


@pytest.mark.parametrize("args", [
    ["--axis", "tau", "--values", "0.1"],
    ["--axis", "n", "--values", "5"],
    ["--axis", "cw_min", "--values", "8", "--sources", "optimum"],
    ["--axis", "cw_min", "--values", "x"],
])
def test_sweep_incompatible_axis(tmp_path, capsys, args):
    cfg = write(tmp_path, {"scenarios": [{"id": "f", "population": {"kind": "fixed_rate",
                                                                   "group_sizes": [1] * 8}}]})
    assert run_cli(capsys, "sweep", "--config", cfg, *args)[0] == 2


def test_parse_values():
    assert cli.parse_values("5:20:5") == [5, 10, 15, 20]
    assert cli.parse_values("0.1,0.5") == [0.1, 0.5]
    with pytest.raises(ConfigError):
        cli.parse_values("1:5:0")


def test_fmt_six_significant_digits():
    assert cli.fmt(25.0912345) == "25.0912"
    assert cli.fmt(None) == "" and cli.fmt(True) == "true" and cli.fmt(3) == "3"
