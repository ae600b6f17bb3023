import json
import math

import numpy as np
import pytest

from graphfpe import io
from graphfpe.cli import main
from graphfpe.scenario import (
    EXIT_INVARIANT,
    EXIT_OK,
    EXIT_USAGE,
    EXIT_VALIDATION,
    apply_override,
    load_scenario,
    run_scenario,
)

HEAT = """
seed = 0

[graph]
family = "path"
size = 2

[potential]
kind = "zero"

[initial]
kind = "file"
file = "rho0.json"

[integrator]
horizon = 10.0
record_every = 0.5

[output]
figures = true
"""


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


@pytest.fixture
def heat_config(tmp_path):
    (tmp_path / "rho0.json").write_text("[0.6, 0.4]\n")
    path = tmp_path / "heat.toml"
    path.write_text(HEAT)
    return path


def test_simulate_two_point_heat(tmp_path, heat_config, capsys):
    out = tmp_path / "run"
    code, summary = run(capsys, "simulate", "--config", heat_config, "--out", out)
    assert code == EXIT_OK
    assert summary["final_distances"]["l2_to_gibbs"] <= 1e-6
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["exit_code"] == 0 and manifest["violations"] == []
    assert set(manifest["files"]) == {
        "trajectory.csv", "diagnostics.csv", "gibbs.json", "distances.png", "energy.png", "snapshots.png"
    }
    header, body = io.read_csv(out / "diagnostics.csv")
    assert header[:3] == ["t", "mass_defect", "free_energy"]
    assert body.shape[0] == 21
    np.testing.assert_allclose(io.read_vertex_json(out / "gibbs.json"), [0.5, 0.5])
    t, states = io.read_trajectory_csv(out / "trajectory.csv")
    np.testing.assert_allclose(states[:, 0], 0.5 + 0.1 * np.exp(-2 * t), atol=1e-8)


def test_rerun_is_byte_identical(tmp_path, heat_config):
    s = load_scenario(heat_config)
    a = run_scenario(s, tmp_path / "a", base=tmp_path)
    b = run_scenario(s, tmp_path / "b", base=tmp_path)
    assert a.exit_code == b.exit_code == EXIT_OK
    assert a.files == b.files
    assert a.scenario_hash == b.scenario_hash


def test_stiff_underflow_exits_invariant(tmp_path, capsys):
    code, summary = run(
        capsys, "simulate", "path:5", "--potential", "linear:20", "--init", "uniform",
        "--dt-min", "0.5", "--horizon", "5", "--out", tmp_path / "stiff", "--no-figures",
    )
    assert code == EXIT_INVARIANT
    assert "StepSizeUnderflow" in summary["error"]
    manifest = json.loads((tmp_path / "stiff" / "manifest.json").read_text())
    assert manifest["exit_code"] == EXIT_INVARIANT


def test_gibbs_command(capsys):
    code, out = run(capsys, "gibbs", "path:3", "--potential", "linear:1")
    assert code == EXIT_OK
    np.testing.assert_allclose(out["rho"], [0.53444664538852302671, 0.19661193324148185254,
                                            0.072329488128513268211], rtol=1e-14)


def test_validate_reports_asymmetric_edge(tmp_path, capsys):
    p = tmp_path / "bad.txt"
    p.write_text("0 1 1.0\n1 2 1.0\n2 1 3.0\n")
    code = main(["validate", str(p)])
    err = capsys.readouterr().err
    assert code == EXIT_VALIDATION
    assert "1" in err and "2" in err and "AsymmetricWeight" in err


def test_validate_good_graph(tmp_path, capsys):
    code, out = run(capsys, "validate", "lattice:3:absorbing")
    assert code == EXIT_OK
    assert out["vertices"] == 7 and out["total_deficit"] == 2


def test_usage_errors(capsys):
    assert main(["simulate"]) == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == EXIT_USAGE
    assert main(["gibbs", "nonexistent_file.txt"]) == EXIT_USAGE


def test_analyze_round_trip(tmp_path, heat_config, capsys):
    s = load_scenario(heat_config)
    run_scenario(s, tmp_path / "run", base=tmp_path)
    code, out = run(
        capsys, "analyze", tmp_path / "run" / "trajectory.csv", "path:2", "--potential", "zero",
        "--partition", "--partition-index", "1", "--out", tmp_path / "an", "--no-figures",
    )
    assert code == EXIT_OK
    assert out["fitted_rates"]["l2_to_gibbs"] == pytest.approx(2.0, rel=1e-2)
    assert out["monotone"]["linf_to_gibbs"]
    part = out["partition"]["1"]
    assert part["total"] == pytest.approx(part["direct"], rel=1e-10)
    header, body = io.read_csv(tmp_path / "an" / "convergence.csv")
    assert header[0] == "t" and header[-1] == "d_linf_to_gibbs"
    assert math.isnan(body[-1, -1])


def test_w2_and_hodge_commands(tmp_path, capsys):
    (tmp_path / "a.json").write_text("[0.5, 0.5]")
    (tmp_path / "b.json").write_text("[0.6, 0.4]")
    code, out = run(capsys, "w2", "path:2", tmp_path / "a.json", tmp_path / "b.json",
                    "--segments", "32", "--path-csv", tmp_path / "path.csv")
    assert code == EXIT_OK and out["converged"]
    assert out["value"] == pytest.approx(0.14173959841015002023, abs=1e-4)
    assert io.read_trajectory_csv(tmp_path / "path.csv")[1].shape == (33, 2)

    (tmp_path / "rho.json").write_text("[0.2, 0.3, 0.5]")
    (tmp_path / "field.txt").write_text("0 1 1\n1 2 1\n2 0 1\n")
    (tmp_path / "tri.txt").write_text("0 1 1\n1 2 1\n2 0 1\n")
    code, out = run(capsys, "hodge", tmp_path / "tri.txt", tmp_path / "rho.json", tmp_path / "field.txt")
    assert code == EXIT_OK
    assert out["norm_v"] == pytest.approx(out["norm_grad_p"] + out["norm_u"], rel=1e-10)
    assert out["max_div_rho_u"] <= 1e-10


def test_exhaustion_command(tmp_path, capsys):
    code, out = run(capsys, "exhaustion", "--sizes", "2,4,8", "--horizon", "2", "--record-every", "1",
                    "--out", tmp_path / "ex")
    assert code == EXIT_OK and out["cauchy"]
    header, body = io.read_csv(tmp_path / "ex" / "exhaustion.csv")
    assert body.shape == (3, len(header))
    assert (tmp_path / "ex" / "exhaustion.png").stat().st_size > 0
    assert main(["exhaustion", "--sizes", "2,x"]) == EXIT_USAGE
    assert main(["exhaustion", "--family", "random", "--sizes", "4,6", "--out", str(tmp_path / "r")]) == EXIT_VALIDATION


def test_sweep_writes_one_manifest_per_point(tmp_path, capsys):
    (tmp_path / "rho0.json").write_text("[0.6, 0.4]\n")
    cfg = tmp_path / "heat.toml"
    cfg.write_text(HEAT.replace("horizon = 10.0", "horizon = 2.0"))
    code, out = run(capsys, "sweep", cfg, "--set", "integrator.rtol=1e-8,1e-9,1e-10",
                    "--jobs", "3", "--out", tmp_path / "sw")
    assert code == EXIT_OK
    assert len(out) == 3
    manifests = [json.loads((tmp_path / "sw" / name / "manifest.json").read_text()) for name in out]
    assert all(m["exit_code"] == 0 for m in manifests)
    assert len({m["scenario_hash"] for m in manifests}) == 3
    # the plots do not depend on thread interleaving
    serial = tmp_path / "serial"
    s = load_scenario(cfg)
    ref = run_scenario(apply_override(s, "integrator.rtol", 1e-9), serial, base=tmp_path)
    assert ref.files == json.loads((tmp_path / "sw" / "rtol=1e-09" / "manifest.json").read_text())["files"]
