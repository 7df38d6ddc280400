import csv
import json
import math

import numpy as np
import pytest

from atomarray.cli import main
from atomarray.experiments import (ConfigError, ExperimentConfig, ExperimentMismatch, UnknownExperiment,
                                   diff_reports, entropy_quench, input_hash, run_experiment, subsystems)
from atomarray.manybody import MappingErrorModel


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def outputs_except_manifest(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"}


@pytest.fixture(scope="module")
def surface_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("surface")
    runs = {}
    for label, seed, noise in (("a", 7, None), ("a2", 7, None), ("b", 8, None), ("zero", 7, "zero")):
        out = root / label
        argv = ["run", "surface-code-ed6", "--shots", "10000", "--seed", str(seed), "--out", str(out)]
        if noise:
            argv += ["--noise", noise]
        assert main(argv) == 0
        runs[label] = out
    return runs


def test_run_writes_report_and_manifest(surface_runs):
    out = surface_runs["a"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["outputs"]) == {"report.json", "shots_X.csv", "shots_Z.csv"}
    assert manifest["config"]["seed"] == 7 and manifest["config"]["shots"] == 10000
    for name, digest in manifest["outputs"].items():
        import hashlib
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    report = json.loads((out / "report.json").read_text())
    assert report["experiment"] == "surface-code-ed6"
    assert 0.3 < report["pass_fraction"]["X"]["mean"] < 0.5


def test_rerun_is_byte_identical(surface_runs):
    a, a2 = surface_runs["a"], surface_runs["a2"]
    assert outputs_except_manifest(a) == outputs_except_manifest(a2)
    ma, mb = (json.loads((d / "manifest.json").read_text()) for d in (a, a2))
    for m in (ma, mb):
        m.pop("started"), m.pop("finished")
    assert ma == mb


def test_identical_reports_give_empty_diff(surface_runs, capsys):
    report = surface_runs["a"] / "report.json"
    assert diff_reports(report, surface_runs["a2"] / "report.json") == []
    assert main(["diff", str(report), str(report)]) == 0
    assert capsys.readouterr().out == ""


def test_two_seeds_agree_within_three_sigma(surface_runs):
    deltas = diff_reports(surface_runs["a"] / "report.json", surface_runs["b"] / "report.json")
    flagged = [d for d in deltas if d.significant is not None]
    assert flagged
    assert not any(d.significant for d in flagged)


def test_zero_versus_noisy_pass_fraction(surface_runs, capsys):
    deltas = {d.key: d for d in diff_reports(surface_runs["zero"] / "report.json",
                                            surface_runs["a"] / "report.json")}
    d = deltas["pass_fraction.X"]
    assert d.a == 1.0
    assert d.delta == pytest.approx(-0.60, abs=0.03)
    assert d.significant
    assert main(["diff", str(surface_runs["zero"] / "report.json"), str(surface_runs["a"] / "report.json")]) == 0
    assert "pass_fraction.X:" in capsys.readouterr().out


def test_diff_rejects_different_experiments():
    with pytest.raises(ExperimentMismatch):
        diff_reports({"experiment": "a"}, {"experiment": "b"})
    assert main(["diff", "/nonexistent/a.json", "/nonexistent/b.json"]) == 2


def test_config_validation(tmp_path):
    with pytest.raises(UnknownExperiment):
        ExperimentConfig("no-such-run")
    with pytest.raises(ConfigError):
        ExperimentConfig("surface-code-ed6")
    with pytest.raises(ConfigError):
        ExperimentConfig("surface-code-ed6", shots=0, seed=1)
    ExperimentConfig("surface-code-ed6", noise="zero")
    ExperimentConfig("bell-transport-fig1d")


def test_input_hash_tracks_inputs(tmp_path):
    a = input_hash(ExperimentConfig("steane-fig2", 100, 1))
    assert a == input_hash(ExperimentConfig("steane-fig2", 100, 1, out=str(tmp_path)))
    assert a != input_hash(ExperimentConfig("steane-fig2", 100, 2))
    assert a != input_hash(ExperimentConfig("steane-fig2", 101, 1))


def test_exit_codes(tmp_path, capsys):
    assert main(["run", "surface-code-ed6", "--shots", "10", "--out", str(tmp_path)]) == 2
    assert main(["run", "nonexistent", "--seed", "1", "--out", str(tmp_path)]) == 2
    assert main(["run", "steane-fig2", "--seed", "1", "--shots", "10", "--noise", str(tmp_path / "missing.json"),
                 "--out", str(tmp_path)]) == 2
    assert main(["run", "entropy-fig4", "--seed", "1", "--shots", "10", "--noise", "ed6",
                 "--out", str(tmp_path)]) == 2
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert main(["run", "steane-fig2", "--seed", "1", "--shots", "10", "--noise", str(broken),
                 "--out", str(tmp_path)]) == 2
    capsys.readouterr()


def test_runtime_errors_exit_3(tmp_path, monkeypatch):
    import atomarray.experiments as ex

    def boom(cfg, out):
        raise ArithmeticError("norm drifted")

    monkeypatch.setitem(ex.PIPELINES, "scar-ed9", boom)
    assert main(["run", "scar-ed9", "--out", str(tmp_path)]) == 3


def test_cluster_zero_noise(tmp_path):
    assert main(["run", "cluster-fig2", "--noise", "zero", "--shots", "500", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert len(report["stabilizers"]) == 12
    assert all(v["mean"] == 1.0 for v in report["stabilizers"].values())


def test_bell_transport_run(tmp_path):
    assert main(["run", "bell-transport-fig1d", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["delta_n_55um_200us"] == pytest.approx(6, rel=0.1)
    rows = read_csv(tmp_path / "bell_transport.csv")
    assert len(rows) == 71


def test_scar_run(tmp_path):
    assert main(["run", "scar-ed9", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["chain_revival_us"] == pytest.approx(0.47, abs=0.03)
    assert report["middle_site_oscillation_correlation"] < -0.5
    assert read_csv(tmp_path / "pxp.csv")[0]["z2_fidelity"] == "1"


def test_transport_check_on_shipped_circuit(tmp_path, capsys):
    from atomarray.codes import shipped_circuit
    path = tmp_path / "steane.json"
    path.write_text(shipped_circuit("steane7", "X").to_json())
    assert main(["transport", "check", str(path)]) == 0
    out = capsys.readouterr().out
    assert "retention" in out and "violation" not in out
    assert main(["transport", "check", str(path), "--n-max", "0.5"]) == 2


def test_transport_check_reports_invalid_circuit(tmp_path, capsys):
    from atomarray.codes import shipped_circuit
    body = json.loads(shipped_circuit("steane7", "X").to_json())
    body["layers"].append(body["layers"][-1])  # a second measurement after the final one
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(body))
    assert main(["transport", "check", str(path)]) == 2
    assert "violation" in capsys.readouterr().out


def test_transport_plan(tmp_path, capsys):
    graph = tmp_path / "ring.json"
    graph.write_text(json.dumps({"vertices": list(range(6)),
                                 "edges": [[k, (k + 1) % 6] for k in range(6)]}))
    plan, table = tmp_path / "plan.json", tmp_path / "plan.csv"
    assert main(["transport", "plan", "--graph", str(graph), "--T", "200", "--seed", "3",
                 "--out", str(plan), "--csv", str(table)]) == 0
    body = json.loads(plan.read_text())
    assert body["plans"]
    rows = read_csv(table)
    assert set(rows[0]) == {"time_us", "tone", "position_um", "amplitude"}
    times = [float(r["time_us"]) for r in rows]
    assert times == sorted(times) or len({r["tone"] for r in rows}) > 1
    capsys.readouterr()
    odd = tmp_path / "triangle.json"
    odd.write_text(json.dumps({"vertices": [0, 1, 2], "edges": [[0, 1], [1, 2], [2, 0]]}))
    assert main(["transport", "plan", "--graph", str(odd), "--out", str(tmp_path / "x.json")]) == 2


def test_cz_verify(capsys):
    assert main(["cz-verify", "--omega-mhz", "3.6", "--blockade-mhz", "1800"]) == 0
    lines = dict(line.split(" ", 1) for line in capsys.readouterr().out.strip().splitlines())
    assert float(lines["fidelity"]) >= 0.999
    assert float(lines["leakage"]) <= 1e-3


def test_entropy_quench_cli(tmp_path):
    out = tmp_path / "ent.csv"
    assert main(["entropy-quench", "--initial", "z2", "--tmax", "0.2", "--dt", "0.1", "--shots", "300",
                 "--seed", "4", "--noise", "ed8", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert set(rows[0]) == {"t_us", "subsystem", "purity", "s2_raw", "s2_offset_subtracted", "stderr", "s2_model"}
    assert {r["t_us"] for r in rows} == {"0", "0.1", "0.2"}
    assert len(rows) == 3 * len(subsystems(8))
    again = tmp_path / "again.csv"
    main(["entropy-quench", "--initial", "z2", "--tmax", "0.2", "--dt", "0.1", "--shots", "300",
          "--seed", "4", "--noise", "ed8", "--out", str(again)])
    assert out.read_bytes() == again.read_bytes()


def test_offset_subtraction_is_zero_at_start():
    rows = entropy_quench("ground", np.array([0.0]), 20000, MappingErrorModel.ed8(), seed=11)
    for r in rows:
        assert abs(r["s2_offset_subtracted"]) < 3 * r["stderr"] + 1e-12
        # the offset model: pair purity 0.961 per site
        k = len(subsystems(8)[r["subsystem"]])
        assert r["s2_model"] == pytest.approx(-k * math.log2(0.961), rel=1e-9)
