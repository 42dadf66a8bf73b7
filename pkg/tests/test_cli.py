import json
import os
import subprocess
import sys

import numpy as np
import pytest

from pdestride.cli import main
from pdestride.dictionary import DesignSystem, save_design
from pdestride.field import Field, load_field, save_field
from pdestride.stability import read_profile_csv


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("PDESTRIDE_THREADS", raising=False)
    return tmp_path


@pytest.fixture
def small_design(workdir, burgers_short):
    save_field(burgers_short, workdir / "b_u")
    assert main(["dictionary", "--fields", "b_u.json", "--target", "u", "--preset", "burgers-p11",
                 "--n", "120", "--seed", "1", "--sigma-used", "0", "--out", "des.json"]) == 0
    return workdir / "des.json"


def test_unknown_flag_is_usage_error(workdir, capsys):
    assert main(["simulate", "--model", "burgers", "--out", "b", "--bogus"]) == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_subcommand(workdir):
    assert main(["teleport"]) == 1


def test_seed_required_for_stride(small_design):
    assert main(["stride", "--design", "des.json", "--profile", "p.csv", "--model", "m.json"]) == 1


def test_solve_needs_lambda(small_design):
    assert main(["solve", "--design", "des.json", "--solver", "ihtd", "--out", "c.json"]) == 1


def test_corrupted_field_names_both_files(workdir, capsys):
    save_field(Field("u", np.ones((5, 5)), (1.0, 1.0)), workdir / "u")
    with open(workdir / "u.bin", "r+b") as fh:
        fh.truncate(16)
    assert main(["denoise", "--in", "u.json", "--out", "d"]) == 2
    err = capsys.readouterr().err
    assert "u.bin" in err and "u.json" in err


def test_corrupted_design_is_data_error(small_design):
    with open("des.bin", "ab") as fh:
        fh.write(b"\0" * 8)
    assert main(["stride", "--design", "des.json", "--seed", "0", "--profile", "p.csv", "--model", "m.json"]) == 2


def test_capacity_is_data_error(workdir, burgers_short):
    save_field(burgers_short, workdir / "u")
    code = main(["dictionary", "--fields", "u.json", "--target", "u", "--preset", "burgers-p11",
                 "--n", "100000000", "--seed", "0", "--out", "d.json"])
    assert code == 2


def test_numerical_failure_exit_code(workdir):
    rng = np.random.default_rng(0)
    design = DesignSystem(rng.standard_normal((20, 3)), np.zeros(20), ["a", "b", "c"])
    save_design(design, workdir / "zero.json")
    code = main(["stride", "--design", "zero.json", "--seed", "0", "--b", "2", "--profile", "p.csv", "--model", "m.json"])
    assert code == 3
    assert not (workdir / "p.manifest.json").exists()


def test_pipeline_chain_and_manifests(workdir):
    steps = [
        ["simulate", "--model", "burgers", "--steps", "199", "--out", "b"],
        ["noise", "--in", "b_u.json", "--sigma", "0.01", "--seed", "3", "--out", "bn"],
        ["denoise", "--in", "bn.json", "--out", "bd", "--report", "svd.json"],
        ["dictionary", "--fields", "bd.json", "--target", "u", "--preset", "burgers-p11",
         "--n", "150", "--seed", "2", "--sigma-used", "0.01", "--out", "des.json"],
        ["solve", "--design", "des.json", "--solver", "htp", "--k", "2", "--out", "coef.json"],
        ["stride", "--design", "des.json", "--seed", "5", "--b", "20", "--profile", "prof.csv", "--model", "model.json"],
    ]
    for argv in steps:
        assert main(argv) == 0, argv
    assert load_field("b_u").dims == (256, 200)
    for name in ("b_u", "bn", "bd", "des", "coef", "prof"):
        m = json.loads((workdir / f"{name}.manifest.json").read_text())
        assert {"argv", "config", "seeds", "artifacts", "version", "wall_time_s"} <= set(m)
        assert all(len(h) == 64 for h in m["artifacts"].values())
    report = json.loads((workdir / "svd.json").read_text())
    assert report["chosen_rank"] >= 1
    coef = json.loads((workdir / "coef.json").read_text())
    assert len(coef["support"]) == 2
    labels, lam, pi = read_profile_csv(workdir / "prof.csv")
    assert pi.shape == (20, len(labels))
    model = json.loads((workdir / "model.json").read_text())
    assert {"N", "p", "sigma", "solver", "params", "seed"} <= set(model["meta"])
    assert model["meta"]["sigma"] == 0.01


def test_replay_reproduces_model_bitwise(small_design):
    argv = ["stride", "--design", "des.json", "--seed", "7", "--b", "15", "--profile", "p.csv", "--model", "m.json"]
    assert main(argv) == 0
    first = open("m.json", "rb").read()
    os.remove("m.json")
    assert main(["replay", "p.manifest.json"]) == 0
    assert open("m.json", "rb").read() == first
    assert os.path.exists("p.replay.json")


def test_replay_detects_tampering(small_design):
    assert main(["stride", "--design", "des.json", "--seed", "7", "--b", "5", "--profile", "p.csv", "--model", "m.json"]) == 0
    m = json.loads(open("p.manifest.json").read())
    m["artifacts"]["m.json"] = "0" * 64
    open("p.manifest.json", "w").write(json.dumps(m))
    assert main(["replay", "p.manifest.json"]) == 2


@pytest.mark.parametrize("solver", ["ihtd", "rlasso"])
def test_threads_do_not_change_output(small_design, solver):
    for t in ("1", "4"):
        assert main(["stride", "--design", "des.json", "--solver", solver, "--seed", "3", "--b", "30",
                     "--threads", t, "--profile", f"p{t}.csv", "--model", f"m{t}.json"]) == 0
    assert open("p1.csv", "rb").read() == open("p4.csv", "rb").read()
    assert open("m1.json", "rb").read() == open("m4.json", "rb").read()


def test_env_thread_fallback(small_design, monkeypatch):
    monkeypatch.setenv("PDESTRIDE_THREADS", "2")
    assert main(["stride", "--design", "des.json", "--seed", "1", "--b", "4", "--profile", "p.csv", "--model", "m.json"]) == 0
    assert json.loads(open("p.manifest.json").read())["threads"] == 2


def test_convert_roundtrip_bitwise(workdir, burgers_short):
    save_field(Field("u", burgers_short.values[:, :30], burgers_short.spacing), workdir / "a")
    assert main(["convert", "--in", "a.json", "--out", "a.csv"]) == 0
    assert main(["convert", "--in", "a.csv", "--out", "b.json"]) == 0
    assert (workdir / "a.bin").read_bytes() == (workdir / "b.bin").read_bytes()


def test_achievability_csv(workdir):
    code = main(["achievability", "--preset-list", "p11", "--n-list", "60", "--sigma-list", "0",
                 "--reps", "2", "--mode", "solver_path", "--solver", "stridge", "--seed", "0", "--out", "t.csv"])
    assert code == 0
    lines = (workdir / "t.csv").read_text().splitlines()
    assert lines[0] == "model,p,sigma,n,reps,successes,frequency,variance"
    assert lines[1].startswith("burgers,11,0.0,60,2,")


def test_gray_scott_simulate(workdir):
    assert main(["simulate", "--model", "grayscott", "--dims", "2", "--grid", "16", "--steps", "20",
                 "--save-stride", "10", "--seed", "1", "--out", "g"]) == 0
    u, v = load_field("g_u"), load_field("g_v")
    assert u.dims == (16, 16, 3) and v.dims == (16, 16, 3)
    assert main(["simulate", "--model", "grayscott", "--dims", "2", "--grid", "16", "--steps", "20",
                 "--save-stride", "10", "--ic", "g_u.json", "g_v.json", "--out", "h"]) == 0


def test_console_script_entry_point(workdir):
    out = subprocess.run([sys.executable, "-m", "pdestride.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "pdestride" in out.stdout


def test_burgers_defaults_recover_truth(workdir):
    """simulate on defaults, then dictionary and stride with the default stability settings."""
    assert main(["simulate", "--model", "burgers", "--out", "b"]) == 0
    assert main(["dictionary", "--fields", "b_u.json", "--target", "u", "--preset", "burgers-p19",
                 "--n", "250", "--seed", "0", "--out", "des.json"]) == 0
    assert main(["stride", "--design", "des.json", "--seed", "0", "--profile", "p.csv", "--model", "m.json"]) == 0
    support = {s["label"] for s in json.loads(open("m.json").read())["support"]}
    print("recovered support:", sorted(support))
    assert support == {"u*u_x", "u_xx"}
