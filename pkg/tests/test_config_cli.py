"""Config parsing/validation, preset expansion, CLI behavior."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from uzawa_transport import config as cm
from uzawa_transport import presets
from uzawa_transport.errors import ConfigError

CLI = [sys.executable, "-m", "uzawa_transport"]

FAST_OVERRIDES = {
    "uzawa.n_outer": "2",
    "uzawa.n_inner": "10",
    "quadrature.n_spatial": "4",
    "quadrature.n_angular": "6",
    "quadrature.n_boundary_pos": "3",
    "quadrature.n_boundary_ang": "3",
    "lagrangian.batch_interior": "8",
    "network.widths": "4,8,1",
    "outputs.grid_n": "5",
}


def test_defaults_validate():
    cfg = cm.from_flat({})
    assert cfg.mode == "train"
    assert cfg["uzawa.rho"] == 1.0


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as err:
        cm.from_flat({"uzawa.momentum": "0.9"})
    assert "unknown configuration key" in str(err.value)


def test_all_violations_reported_together():
    with pytest.raises(ConfigError) as err:
        cm.from_flat({"uzawa.rho": "-1", "lagrangian.gamma": "-2", "bogus.key": "1"})
    text = str(err.value)
    assert "bogus.key" in text
    # semantic checks still run on the known keys
    with pytest.raises(ConfigError) as err2:
        cm.from_flat({"uzawa.rho": "-1", "lagrangian.gamma": "-2"})
    text2 = str(err2.value)
    assert "rho" in text2 and "gamma" in text2


def test_negative_rho_message_names_constraint():
    with pytest.raises(ConfigError) as err:
        cm.from_flat({"uzawa.rho": "-0.5"})
    assert "rho > 0" in str(err.value)


def test_parse_config_file_with_line_numbers(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("uzawa.rho = 1.0\nthis line has no equals\n")
    with pytest.raises(ConfigError) as err:
        cm.parse_config(path.as_posix())
    assert ":2:" in str(err.value)


def test_parse_config_roundtrip(tmp_path):
    cfg = presets.expand_preset("example5")
    path = tmp_path / "exp.cfg"
    lines = [f"{k} = {v}" for k, v in cfg.to_flat().items()]
    path.write_text("\n".join(lines) + "\n# trailing comment\n")
    again = cm.parse_config(path.as_posix())
    assert again == cfg


def test_preset_expansion_pure():
    a = presets.expand_preset("example2")
    b = presets.expand_preset("example2")
    assert a == b and a is not b


def test_preset_example2_obstacle_values():
    cfg = presets.expand_preset("example2")
    assert cfg["problem.sigma_a.kind"] == "ball-obstacle"
    assert cfg["problem.sigma_a.inside"] == 50.0
    assert cfg["problem.sigma_a.radius"] == 0.15
    assert cfg["problem.sigma_a.center"] == (0.5, 0.5)


def test_preset_example3_forward_values():
    cfg = presets.expand_preset("example3-forward")
    assert cfg["problem.sigma_a.value"] == 0.1
    assert cfg["problem.sigma_t"] == 9.9
    assert cfg["problem.kernel.kind"] == "forward-peaked"
    assert cfg["problem.inflow.kind"] == "constant"
    assert cfg["problem.inflow.value"] == 1.0
    problem, _ = cm.build_problem(cfg)
    g = problem.data.inflow(cm.build_quadrature_set(cfg).boundary)
    assert np.all(g == 1.0)


def test_preset_list_contains_exactly_eight():
    assert len(presets.PRESETS) == 8
    text = presets.list_presets_text()
    assert text == presets.list_presets_text()  # stable
    lines = text.splitlines()
    assert len(lines) == 8
    for line in lines:
        assert ("experiment" in line) or ("verification" in line)


def test_unknown_preset_rejected():
    with pytest.raises(ConfigError):
        presets.expand_preset("example99")


def test_manufactured_problem_consistency():
    # residual of the exact solution under the derived source is zero
    from uzawa_transport import kinetic_ops as ko

    cfg = presets.expand_preset("manufactured", overrides={"problem.sigma_t": "1.0"})
    problem, reference = cm.build_problem(cfg)
    quad = cm.build_quadrature_set(cfg)
    x = quad.interior.x[:50]
    theta = quad.interior.theta[:50]
    u = reference.value(x, theta)
    du = reference.directional(x, theta)
    # angle-independent solution: scattering contributes nothing
    resid = du + (problem.sigma_a(x) + problem.sigma_t) * u - problem.sigma_t * u
    resid -= problem.data.source(x, theta)
    assert np.abs(resid).max() <= 1e-12


def test_build_quadrature_and_network_from_config():
    cfg = cm.from_flat(FAST_OVERRIDES)
    quad = cm.build_quadrature_set(cfg)
    assert len(quad.angular) == 6
    params = cm.build_network(cfg)
    assert params.widths == (4, 8, 1)


# -- CLI ------------------------------------------------------------------------


def _run_cli(args, cwd=None, env=None):
    full_env = dict(os.environ)
    if env:
        full_env.update(env)
    return subprocess.run(
        CLI + args, capture_output=True, text=True, cwd=cwd, env=full_env, timeout=600
    )


def test_cli_list_presets():
    out = _run_cli(["list-presets"])
    assert out.returncode == 0
    assert len(out.stdout.strip().splitlines()) == 8
    assert "oracle-verify" in out.stdout


def test_cli_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("uzawa.rho = -3\n")
    out = _run_cli(["run", bad.as_posix()])
    assert out.returncode == 2
    assert "rho" in out.stderr


def test_cli_unknown_preset_exit_code():
    out = _run_cli(["preset", "nope"])
    assert out.returncode == 2


def test_cli_preset_run_emits_outputs(tmp_path):
    args = ["preset", "manufactured", "--out", tmp_path.as_posix(), "--threads", "1"]
    for key, value in FAST_OVERRIDES.items():
        args += ["--override", f"{key}={value}"]
    out = _run_cli(args)
    assert out.returncode == 0, out.stderr
    for name in ("manifest.json", "metrics.csv", "params.uzmlp", "flux.csv"):
        assert (tmp_path / name).exists()
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert "l2_error_rel" in manifest["final_metrics"]
    assert manifest["config"]["preset"] == "manufactured"


def test_cli_manifest_rerun_reproduces_metrics(tmp_path):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    args = ["preset", "example5", "--out", out_a.as_posix(), "--threads", "1"]
    for key, value in FAST_OVERRIDES.items():
        args += ["--override", f"{key}={value}"]
    first = _run_cli(args)
    assert first.returncode == 0, first.stderr
    second = _run_cli(
        ["run", (out_a / "manifest.json").as_posix(), "--out", out_b.as_posix(), "--threads", "1"]
    )
    assert second.returncode == 0, second.stderr
    assert (out_a / "metrics.csv").read_bytes() == (out_b / "metrics.csv").read_bytes()


def test_cli_env_var_output_dir(tmp_path):
    args = ["preset", "example1", "--threads", "1"]
    for key, value in FAST_OVERRIDES.items():
        args += ["--override", f"{key}={value}"]
    out = _run_cli(args, env={"UZAWA_TRANSPORT_OUT": tmp_path.as_posix()})
    assert out.returncode == 0, out.stderr
    assert (tmp_path / "example1" / "metrics.csv").exists()


def test_cli_verify_exit_zero(tmp_path):
    out = _run_cli(["verify", "--out", tmp_path.as_posix()])
    assert out.returncode == 0, out.stdout + out.stderr
    assert out.stdout.count("[PASS]") >= 10
    assert "[FAIL]" not in out.stdout


def test_cli_override_rejects_bad_shape():
    out = _run_cli(["preset", "example1", "--override", "uzawa.rho"])
    assert out.returncode == 2
