import json
import math
import subprocess
import sys

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matedcrt import __version__
from matedcrt.cli import main
from matedcrt.errors import DomainError
from matedcrt.experiments import KINDS, ExperimentConfig, exit_code, run_experiment
from matedcrt.map_builder import load_graph
from matedcrt.walk_gen import load_walk


def test_config_roundtrip(tmp_path):
    cfg = ExperimentConfig("green-loglaw", gamma=math.sqrt(8 / 3), window_n=12345, radii=[4, 8, 16],
                           tau=1e-13, synthetic=True, seed=2**63 + 5)
    back = ExperimentConfig.from_ini(cfg.to_ini())
    assert back == cfg
    cfg.save(tmp_path / "c.ini")
    assert ExperimentConfig.load(tmp_path / "c.ini") == cfg


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(KINDS), st.floats(0.05, 1.95), st.integers(1, 10**7), st.integers(0, 2**64 - 1),
       st.floats(0, 0.999), st.lists(st.integers(1, 4096), min_size=1, max_size=8))
def test_config_roundtrip_property(kind, gamma, window, seed, tau, radii):
    cfg = ExperimentConfig(kind, gamma=gamma, window_n=window, seed=seed, tau=tau, radii=radii)
    assert ExperimentConfig.from_ini(cfg.to_ini()) == cfg


def test_config_sections_and_errors():
    text = "[experiment]\nkind = specdim\nn_max = 64\nfit_lo = 4\nfit_hi = 64\n[specdim]\ntau = 1e-12\n"
    cfg = ExperimentConfig.from_ini(text)
    assert cfg.tau == 1e-12 and cfg.n_max == 64
    with pytest.raises(DomainError):
        ExperimentConfig.from_ini("[experiment]\nkind = specdim\nbogus = 1\n")
    with pytest.raises(DomainError):
        ExperimentConfig("nonsense")
    with pytest.raises(DomainError):
        ExperimentConfig("specdim", fit_lo=100, fit_hi=50)
    with pytest.raises(DomainError):
        ExperimentConfig("volume", gamma=2.0)
    with pytest.raises(DomainError):
        ExperimentConfig.from_ini("[other]\nkind = volume\n")


def test_synthetic_specdim_report(tmp_path):
    rep = run_experiment(ExperimentConfig("specdim", synthetic=True), tmp_path)
    assert rep["passed"] and rep["samples"][0]["d_s"] == pytest.approx(2.0, abs=1e-12)
    on_disk = json.loads((tmp_path / "report.json").read_text())
    for key in ("tool", "tool_version", "report_version", "formats", "config", "threads", "error", "samples",
                "aggregate", "complete", "passed", "elapsed_seconds"):
        assert key in on_disk
    assert on_disk["tool_version"] == __version__
    assert ExperimentConfig.from_ini((tmp_path / "config.ini").read_text()) == ExperimentConfig("specdim", synthetic=True)
    assert exit_code(rep) == 0


def test_green_report_has_per_sample_fits(tmp_path):
    cfg = ExperimentConfig("green-loglaw", window_n=20000, samples=2, radii=[2, 4, 8, 16], seed=3)
    rep = run_experiment(cfg, tmp_path)
    assert len(rep["samples"]) == 2
    for s in rep["samples"]:
        assert "fit" in s and "contamination_radius" in s
        assert {p["status"] for p in s["points"]} <= {"ok", "contaminated"}
    if rep["aggregate"] is not None:
        assert 0 <= rep["aggregate"]["log_fit"]["r2"] <= 1
    assert (tmp_path / "green_loglaw.csv").exists()
    assert exit_code(rep) in (0, 2)


def test_rerun_is_byte_identical(tmp_path):
    cfg = ExperimentConfig("resistance-triple", instances=6, walkers=2000, seed=9)
    a = run_experiment(cfg, tmp_path / "a")
    b = run_experiment(cfg, tmp_path / "b")
    assert (tmp_path / "a" / "resistance_triple.csv").read_bytes() == (tmp_path / "b" / "resistance_triple.csv").read_bytes()
    strip = lambda r: {k: v for k, v in r.items() if k != "elapsed_seconds"}
    assert json.dumps(strip(a), sort_keys=True, default=str) == json.dumps(strip(b), sort_keys=True, default=str)


def test_contaminated_samples_are_recorded(tmp_path):
    cfg = ExperimentConfig("volume", window_n=2000, samples=1, r_max=512, seed=1)
    rep = run_experiment(cfg, tmp_path)
    assert rep["samples"][0]["status"] == "contaminated"
    assert not rep["complete"] and not rep["passed"]
    assert exit_code(rep) == 2


def test_cli_gen_build_report(tmp_path, capsys):
    walk, graph, edges = tmp_path / "w.bin", tmp_path / "g.bin", tmp_path / "e.txt"
    assert main(["gen", "--gamma", "sqrt(8/3)", "--window", "300", "--seed", "4", "--out", str(walk)]) == 0
    assert load_walk(walk).params.gamma == pytest.approx(math.sqrt(8 / 3))
    assert main(["build", "--walk", str(walk), "--out", str(graph), "--edges", str(edges), "--census"]) == 0
    out = capsys.readouterr().out
    assert "inner face degrees {3:" in out and "euler characteristic 2" in out
    assert load_graph(graph).n_vertices == 600
    assert edges.read_text().startswith("# vertices 600")
    assert main(["specdim", "--synthetic", "--nmax", "1024", "--out", str(tmp_path / "s")]) == 0
    assert main(["report", str(tmp_path / "s" / "report.json")]) == 0
    assert "specdim: PASS" in capsys.readouterr().out


def test_cli_errors(tmp_path, capsys):
    assert main(["gen", "--gamma", "3", "--out", str(tmp_path / "w")]) == 1
    (tmp_path / "bad.bin").write_bytes(b"garbage")
    assert main(["build", "--walk", str(tmp_path / "bad.bin"), "--out", str(tmp_path / "g")]) == 1
    assert "error:" in capsys.readouterr().err


def test_cli_flags_override_config(tmp_path):
    ExperimentConfig("transfer-sweep", instances=500).save(tmp_path / "c.ini")
    assert main(["transfer", "--config", str(tmp_path / "c.ini"), "--instances", "5", "--out", str(tmp_path / "t")]) == 0
    rep = json.loads((tmp_path / "t" / "report.json").read_text())
    assert rep["config"]["instances"] == 5 and len(rep["samples"]) == 5


def test_console_script_entry():
    r = subprocess.run([sys.executable, "-m", "matedcrt.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("gen", "build", "resist", "specdim", "displace", "volume", "transfer", "appendixa", "report"):
        assert cmd in r.stdout
