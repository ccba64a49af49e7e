import json

import numpy as np
import pytest

from vouest import io as vio
from vouest.cli import run_cli
from vouest.config import PRESETS, load_config, preset, save_config
from vouest.errors import ConfigError, UsageError
from vouest.kernels import Fractional, LogKernel
from vouest.simulate import VouParams, simulate_euler_batch


def test_default_preset_round_trip(tmp_path):
    cfg = preset("default")
    assert cfg.params == VouParams(1.2, -1.0, 0.3, 1.0)
    back = load_config(save_config(cfg, tmp_path / "c.json"))
    assert back.to_dict() == cfg.to_dict()


def test_dt_sweep_preset():
    cfg = preset("dt-sweep")
    assert cfg.kernel == Fractional(0.75)
    assert cfg.dts == [0.2, 0.5, 1.0]
    assert cfg.n_paths == 200


def test_preset_with_overrides(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"preset": "lln", "n_paths": 5, "kernel": {"kind": "log", "params": {}}}))
    cfg = load_config(p)
    assert cfg.experiment == "lln" and cfg.n_paths == 5 and cfg.kernel == LogKernel()


def test_missing_beta_names_field(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"params": {"b": 1.2, "sigma": 0.3, "x0": 1.0}}))
    with pytest.raises(ConfigError, match="beta"):
        load_config(p)


@pytest.mark.parametrize("params,word", [({"b": 1, "beta": 0.5, "sigma": 0.3, "x0": 1}, "beta"),
                                         ({"b": 1, "beta": -1, "sigma": 0.0, "x0": 1}, "sigma")])
def test_semantic_errors(tmp_path, params, word):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"params": params}))
    with pytest.raises(ConfigError, match=word):
        load_config(p)


def test_parse_error_has_position(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{\n  "n_paths": 5,\n  "seed": ,\n}')
    with pytest.raises(ConfigError, match=r"c\.json:3:\d+"):
        load_config(p)


def test_unknown_field_and_preset(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"n_path": 5}))
    with pytest.raises(ConfigError, match="n_path"):
        load_config(p)
    with pytest.raises(ConfigError, match="preset"):
        preset("no-such-preset")


def test_all_presets_validate():
    for name in PRESETS:
        preset(name)


def test_csv_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(1)
    t = np.arange(50) * 0.1
    x = rng.standard_normal(50) * 1e-7 + np.pi
    p = vio.write_path_csv(tmp_path / "p.csv", t, x)
    assert p.read_bytes().count(b"\r\n") == 51
    t2, x2 = vio.read_path_csv(p)
    assert t2.tobytes() == t.tobytes() and x2.tobytes() == x.tobytes()


def test_path_csv_rejects_bad_input(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("time,value\r\n0,1\r\n")
    with pytest.raises(UsageError):
        vio.read_path_csv(p)
    with pytest.raises(UsageError):
        vio.uniform_step(np.array([0.0, 0.1, 0.3]))


@pytest.mark.parametrize("noise", [False, True])
def test_binary_batch_round_trip(tmp_path, noise):
    b = simulate_euler_batch(Fractional(0.75), VouParams(), 30, 3.0, 4, 3, first=2, retain_noise=noise)
    back = vio.read_batch(vio.write_batch(tmp_path / "b.vpb", b))
    assert back.values.tobytes() == b.values.tobytes()
    assert back.kernel == b.kernel and back.params == b.params
    assert (back.seed, back.scheme, back.first, back.grid_step) == (4, "euler", 2, b.grid_step)
    if noise:
        assert back.noise.tobytes() == b.noise.tobytes()
    else:
        assert back.noise is None


def test_binary_layout(tmp_path):
    b = simulate_euler_batch(Fractional(0.75), VouParams(), 4, 1.0, 0, 1)
    raw = vio.write_batch(tmp_path / "b.vpb", b).read_bytes()
    assert raw[:8] == b"VOUPATH1"
    hlen = int.from_bytes(raw[8:12], "little")
    header = json.loads(raw[12:12 + hlen])
    assert header["n"] == 4 and header["n_paths"] == 1
    vals = np.frombuffer(raw[12 + hlen:], dtype="<f8")
    np.testing.assert_array_equal(vals, b.values.ravel())


def test_binary_bad_magic(tmp_path):
    p = tmp_path / "x.vpb"
    p.write_bytes(b"NOTAPATH" + b"\0" * 8)
    with pytest.raises(UsageError):
        vio.read_batch(p)


# --- command line -----------------------------------------------------------

def _run(tmp_path, *argv):
    out = tmp_path / "out"
    return run_cli(["--output-dir", str(out), *argv]), out


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_cli_kernel_info(tmp_path, capsys):
    code, out = _run(tmp_path, "kernel-info", "--kind", "fractional", "--alpha", "0.75")
    assert code == 0
    text = capsys.readouterr().out
    assert "alpha    0.75" in text and "gamma    0.25" in text
    assert "K(0+)    inf" in text and "||K||_1  inf" in text
    m = _manifest(out)
    assert [f["path"] for f in m["files"]] == ["kernel_info.json"]
    assert m["files"][0]["sha256"] == vio.sha256(out / "kernel_info.json")


def test_cli_simulate_estimate_round_trip(tmp_path, capsys):
    code, out = _run(tmp_path, "simulate", "--n", "200", "--T", "40", "--paths", "2", "--seed", "3")
    assert code == 0
    files = {f["path"] for f in _manifest(out)["files"]}
    assert files == {"path_00000.csv", "path_00001.csv"}
    code, _ = _run(tmp_path, "estimate", str(out / "path_00001.csv"), "--z-rule", "euler")
    assert code == 0
    assert "MLE: b_hat=" in capsys.readouterr().out


def test_cli_binary_estimate(tmp_path):
    code, out = _run(tmp_path, "simulate", "--n", "100", "--T", "20", "--paths", "3", "--format", "binary")
    assert code == 0
    code, out2 = _run(tmp_path, "estimate", str(out / "paths.vpb"), "--method", "known-b")
    header, rows = vio.read_csv(out2 / "estimates.csv")
    assert code == 0 and header == vio.ESTIMATE_COLUMNS and len(rows) == 3


def test_cli_degenerate_path_exit_2(tmp_path, capsys):
    p = vio.write_path_csv(tmp_path / "flat.csv", np.arange(11) * 0.1, np.ones(11))
    code, _ = _run(tmp_path, "estimate", str(p))
    assert code == 2
    assert "vanishes" in capsys.readouterr().err


def test_cli_bad_config_exit_1(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"params": {"b": 1.2, "sigma": 0.3, "x0": 1.0}}))
    code, _ = _run(tmp_path, "experiment", "--config", str(p))
    assert code == 1


def test_cli_reruns_reproduce_hashes(tmp_path):
    runs = []
    for name in ("a", "b"):
        code = run_cli(["--output-dir", str(tmp_path / name), "experiment", "--preset", "dt-sweep",
                        "--paths", "5"])
        assert code == 0
        runs.append({f["path"]: f["sha256"] for f in _manifest(tmp_path / name)["files"]})
    assert runs[0] == runs[1]


def test_cli_output_dir_from_environment(tmp_path, monkeypatch):
    target = tmp_path / "env-out"
    monkeypatch.setenv("VOUEST_OUTPUT_DIR", str(target))
    assert run_cli(["kernel-info", "--kind", "log"]) == 0
    assert (target / "manifest.json").exists()


def test_cli_acceptance_fast_writes_json(tmp_path):
    code, out = _run(tmp_path, "acceptance", "--suite", "fast")
    payload = json.loads((out / "acceptance_fast.json").read_text())
    assert [c["number"] for c in payload["criteria"]] == [1, 2, 3, 4, 5, 11]
    assert code == (0 if payload["passed"] else 3)


def test_cli_resolvent_short_horizon_reports_unconverged_tail(tmp_path, capsys):
    code, out = _run(tmp_path, "resolvent", "--beta", "-1", "--dt", "0.01", "--horizon", "2")
    assert code == 0
    assert "not converged" in capsys.readouterr().out
    summary = json.loads((out / "resolvent.json").read_text())
    assert summary["int_E_extrapolated"] is None
    assert 0.0 < summary["int_E_horizon"] < summary["int_E_target"] == 1.0


def test_cli_resolvent_exponential_kernel(tmp_path):
    # K = exp(-t), beta = -1: E = exp(-2t)
    code, out = _run(tmp_path, "resolvent", "--kind", "expsum", "--coefficients", "1", "--rates", "1",
                     "--beta", "-1", "--dt", "0.01", "--horizon", "20")
    summary = json.loads((out / "resolvent.json").read_text())
    assert code == 0 and summary["atom"] == 1.0
    assert summary["int_E_horizon"] == pytest.approx(0.5, abs=1e-5)
    assert summary["int_E2_horizon"] == pytest.approx(0.25, abs=1e-5)
