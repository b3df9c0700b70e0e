from __future__ import annotations

import json
import subprocess
import sys

import pytest

from zdet import __version__
from zdet.cli import main, run

MF = {"exp_multiplication": {"const": 0.2, "cos": {"1": 0.6}}}


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def _run(tmp_path, cfg, **kw):
    status, path = run(_write(tmp_path, cfg), tmp_path / "out", **kw)
    return status, (json.loads(path.read_text()) if path else None), path


def test_hardy_selftest(tmp_path):
    status, rep, path = _run(tmp_path, {"experiment": "hardy-selftest", "s_values": [0, 1, 3], "m_values": [1, 10, 500]})
    assert status == 0 and rep["status"] == "ok"
    assert rep["schema"] == "zdet/1" and rep["version"] == __version__
    assert rep["payload"]["max_faulhaber_rel_error"] <= 1e-9
    assert rep["payload"]["max_brute_abs_error"] <= 1e-12
    csv_text = (tmp_path / "out" / (path.stem + ".faulhaber.csv")).read_text()
    assert csv_text.splitlines()[0] == "s,m,depth,exact,formula,error"
    assert len(csv_text.splitlines()) == 1 + 9


def test_zeta_mf(tmp_path):
    status, rep, _ = _run(tmp_path, {"experiment": "zeta", "operator": MF, "zeta": {"n_outer": 120}})
    assert status == 0
    fp = rep["payload"]["w_Q"]["finite_part"]
    assert abs(fp[0] + 0.2) <= 1e-6 and abs(fp[1]) <= 1e-12


def test_zeta_trace_block(tmp_path):
    cfg = {"experiment": "zeta", "operator": {"terms": [{"shift": 0, "plus": [0, 1]}]},
           "zeta": {"n_outer": 200}, "trace": {"r": 2, "z": -2.5, "n": [100, 400]}}
    status, rep, _ = _run(tmp_path, cfg)
    assert status == 0
    assert rep["payload"]["trace"]["last_abs_error"] <= 1e-8


def test_szego(tmp_path):
    cfg = {"experiment": "szego", "log_symbol": {"cos": {"1": 0.6}}, "n_range": [40, 80]}
    status, rep, path = _run(tmp_path, cfg)
    assert status == 0
    assert rep["payload"]["max_residual"] <= 1e-8
    assert abs(rep["payload"]["b"][0] - 0.09) <= 1e-8
    assert (tmp_path / "out" / (path.stem + ".samples.csv")).exists()


def test_regshift(tmp_path):
    cfg = {"experiment": "regshift", "c": 2.0, "zeta": {"n_outer": 100},
           "operators": [MF, {"sum": [{"identity": True}, {"reciprocal": {"a": 1.0, "c": -0.3}}]}]}
    status, rep, _ = _run(tmp_path, cfg)
    assert status == 0
    reps = rep["payload"]["reports"]
    assert len(reps) == 2 and all(r["abs_error"] <= 1e-6 for r in reps)
    assert abs(reps[1]["rhs"][0]) > 0.1


def test_anomaly(tmp_path):
    A = {"sum": [{"identity": True}, {"random": {"seed": 4, "bandwidth": 1, "scale": 0.12}}]}
    B = {"sum": [{"identity": True}, {"random": {"seed": 5, "bandwidth": 2, "scale": 0.1}}]}
    cfg = {"experiment": "anomaly", "A": A, "B": B, "zeta": {"n_outer": 80},
           "perturbation": {"seed": 0, "amplitude": 0.01, "width": 4.0, "support": 15}}
    status, rep, _ = _run(tmp_path, cfg)
    assert status == 0
    p = rep["payload"]
    assert p["swap_identity_residual"] <= 1e-9
    assert p["locality"]["abs_error"] <= 1e-4


def test_cocycle_random_pairs(tmp_path):
    cfg = {"experiment": "cocycle", "random_pairs": 1, "zeta": {"n_outer": 100}, "doubling": False}
    status, rep, path = _run(tmp_path, cfg)
    assert status == 0
    r = rep["payload"]["reports"][0]
    assert r["label"] == "random[0]" and "pass" in r
    assert (tmp_path / "out" / (path.stem + ".summary.csv")).exists()


def test_symb2d(tmp_path):
    status, rep, _ = _run(tmp_path, {"experiment": "symb2d-verify", "grids": [16, 32]})
    assert status == 0
    g = rep["payload"]["grids"]
    assert [x["N"] for x in g] == [16, 32]
    assert g[1]["swap_difference"] == 0


def test_decomp(tmp_path):
    status, rep, _ = _run(tmp_path, {"experiment": "decomp-check", "count": 3, "n": 12})
    assert status == 0
    assert rep["payload"]["max_abs_error"] <= 1e-12


def test_compare(tmp_path):
    cfg = {"experiment": "compare", "operator": MF, "n_range": [60, 120], "zeta": {"n_outer": 100},
           "perturbations": [{"seed": 1, "amplitude": 0.01, "width": 4.0, "support": 20}]}
    status, rep, _ = _run(tmp_path, cfg)
    assert status == 0
    loc = rep["payload"]["locality"][0]
    assert loc["abs_error"] <= 1e-5
    assert min(loc["diagnostics"]["individual_moves"].values()) > 1e-3


@pytest.mark.parametrize("cfg, msg", [
    ({"experiment": "szego", "log_symbol": {"cos": {"1": 0.6}}, "n_range": [80, 40]}, "n_range"),
    ({"experiment": "szego", "log_symbol": {"cos": {"1": 0.6}}, "n_range": [40, 40]}, "n_range"),
    ({"experiment": "nope"}, "experiment"),
    ({"experiment": "zeta"}, "operator"),
    ({"experiment": "zeta", "operator": {"shift": {"shift": "x"}}}, "config.operator.shift.shift"),
    ({"experiment": "zeta", "operator": MF, "zeta": {"n_outer": "big"}}, "n_outer"),
    ({"experiment": "decomp-check", "n": 4, "bandwidth": 3}, "exceeds"),
    ({"experiment": "zeta", "operator": {"file": "missing.json"}}, "not found"),
])
def test_config_errors_write_nothing(tmp_path, capsys, cfg, msg):
    status, path = run(_write(tmp_path, cfg), tmp_path / "out")
    assert status == 2 and path is None
    assert msg in capsys.readouterr().err
    assert not (tmp_path / "out").exists() or not any((tmp_path / "out").iterdir())


def test_malformed_json_reports_position(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"experiment":\n "zeta",, }')
    status, _ = run(p, tmp_path / "out")
    assert status == 2
    assert "bad.json:2:9" in capsys.readouterr().err


def test_numeric_error_report(tmp_path):
    cfg = {"experiment": "zeta", "operator": {"sum": [{"identity": True}, {"shift": {"shift": 1, "c": 1.5}}]},
           "zeta": {"n_outer": 40}}
    status, rep, _ = _run(tmp_path, cfg)
    assert status == 3
    assert rep["status"] == "error" and rep["payload"]["error"] == "MatrixLogDomainError"


def test_append_only_versions(tmp_path):
    cfg = {"experiment": "decomp-check", "count": 1, "n": 8, "r_max": 2, "bandwidth": 2}
    paths = [_run(tmp_path, cfg)[2] for _ in range(3)]
    assert [p.stem.rsplit("-", 1)[1] for p in paths] == ["v001", "v002", "v003"]
    assert len({p.stem.rsplit("-", 1)[0] for p in paths}) == 1
    assert len(list((tmp_path / "out").glob("*.traces.csv"))) == 3


def test_seed_changes_hash(tmp_path):
    cfg = {"experiment": "decomp-check", "count": 1, "n": 8, "r_max": 2, "bandwidth": 2}
    _, a, _ = _run(tmp_path, cfg, seed=0)
    _, b, _ = _run(tmp_path, cfg, seed=1)
    assert a["config_hash"] != b["config_hash"]
    assert a["payload"] != b["payload"]


def test_cache_does_not_change_results(tmp_path):
    cfg = {"experiment": "compare", "operator": MF, "n_range": [30, 45], "zeta": {"n_outer": 60}}
    cache = str(tmp_path / "cache")
    _, cold, _ = _run(tmp_path, cfg, cache_dir=cache)
    _, warm, _ = _run(tmp_path, cfg, cache_dir=cache)
    _, none, _ = _run(tmp_path, cfg)
    assert cold["metadata"]["cache"]["hits"] == 0 and warm["metadata"]["cache"]["misses"] == 0
    assert warm["metadata"]["cache"]["hits"] > 0
    assert cold["payload"] == warm["payload"] == none["payload"]
    assert json.dumps(cold["payload"], sort_keys=True) == json.dumps(warm["payload"], sort_keys=True)


def test_threads_do_not_change_results(tmp_path):
    cfg = {"experiment": "szego", "log_symbol": {"cos": {"1": 0.4}}, "n_range": [20, 40]}
    _, a, _ = _run(tmp_path, cfg, threads=1)
    _, b, _ = _run(tmp_path, cfg, threads=3)
    assert a["payload"] == b["payload"]


def test_main_and_module_entry(tmp_path, monkeypatch):
    cfg = _write(tmp_path, {"experiment": "decomp-check", "count": 1, "n": 8, "r_max": 1, "bandwidth": 1})
    assert main(["--config", str(cfg), "--out", str(tmp_path / "o1")]) == 0
    monkeypatch.setenv("ZDET_CACHE", str(tmp_path / "envcache"))
    proc = subprocess.run([sys.executable, "-m", "zdet.cli", "--config", str(cfg), "--out", str(tmp_path / "o2")],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    rep = json.loads(open(proc.stdout.strip()).read())
    assert rep["metadata"]["cache"]["enabled"]
    with pytest.raises(SystemExit):
        main(["--config", str(cfg), "--threads", "0"])
