import json
import subprocess
import sys

import numpy as np
import pytest

from mippdpg import io as fio
from mippdpg.binning import UnfoldedIntensity
from mippdpg.cli import main
from mippdpg.model import build_group_wave_model


def write_config(path, text):
    path.write_text(text)
    return str(path)


SMALL = """
[model]
preset = "smooth"
n_nodes = 12

[simulate]
seeds = [3, 4]

[embed]
n_bins = 5
d = 2

[evaluate]
n_nodes = [30, 60]
n_bins = [5]
seeds = [0, 1]

[clt]
n_nodes = 30
n_bins = 4
seeds = [0]

[cluster]
k = 3
window = 3
"""


@pytest.fixture
def small_cfg(tmp_path):
    return write_config(tmp_path / "small.toml", SMALL)


def run(*argv):
    return main([str(a) for a in argv])


def test_simulate_default_config_format(tmp_path):
    out = tmp_path / "sim"
    assert run("simulate", "--config", "smooth", "--out", out) == 0
    files = sorted(p.name for p in out.iterdir())
    assert files == ["events_seed0.csv", "manifest.json"]
    with open(out / "events_seed0.csv") as fh:
        assert fh.readline().strip() == "src,dst,layer,time"
    man = json.loads((out / "manifest.json").read_text())
    assert man["files"]["events_seed0.csv"] == fio.sha256_file(out / "events_seed0.csv")
    assert man["n_nodes"] == 100 and man["event_counts"]["0"] > 0


def test_simulate_jsonl_and_seed_override(tmp_path, small_cfg):
    out = tmp_path / "sim"
    assert run("simulate", "--config", small_cfg, "--format", "jsonl", "--seed", 9, "--out", out) == 0
    assert (out / "events_seed9.jsonl").exists() and not (out / "events_seed3.jsonl").exists()


def test_config_errors(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.toml", "[simulate]\nseeds = []\n")
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 2
    cfg = write_config(tmp_path / "d.toml", "[simulate]\nseeds = [1, 1]\n")
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 2
    cfg = write_config(tmp_path / "e.toml", "[simulate\n")
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 2
    assert run("simulate", "--config", tmp_path / "missing.toml", "--out", tmp_path / "o") == 2
    assert run("embed", "--out", tmp_path / "o") == 2
    assert "error:" in capsys.readouterr().err
    with pytest.raises(SystemExit) as info:
        run("evaluate", "--mode", "sideways")
    assert info.value.code == 2


def test_model_validity_exit_code(tmp_path):
    cfg = write_config(tmp_path / "bad.toml",
                       '[model]\npreset = "smooth"\nn_nodes = 10\n[model.dynamic]\nc1 = [-40, -40, -40]\n')
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 3


def test_data_error_exit_code(tmp_path, capsys):
    ev = tmp_path / "ev.csv"
    ev.write_text("src,dst,layer,time\n0,1,0,0.5\n0,1,zero,0.2\n1,1,0,1.5\n")
    assert run("embed", "--input", ev, "--bins", 2, "--dim", 1, "--out", tmp_path / "o") == 4
    assert "[3, 4]" in capsys.readouterr().err


def test_numerical_error_exit_code(tmp_path):
    p = tmp_path / "zero.bin"
    fio.save_unfolded(p, UnfoldedIntensity(np.zeros((6, 4)), 2, 3, 2))
    assert run("embed", "--input", p, "--dim", 1, "--out", tmp_path / "o") == 5


def test_single_event_rank_one(tmp_path):
    ev = tmp_path / "ev.csv"
    ev.write_text("src,dst,layer,time\n0,1,0,0.3\n")
    out = tmp_path / "o"
    assert run("embed", "--input", ev, "--bins", 1, "--dim", 1, "--out", out) == 0
    left = fio.read_matrix_csv(out / "left.csv")
    right = fio.read_matrix_csv(out / "right.csv")
    counts = np.zeros((2, 2))
    counts[0, 1] = 1.0
    assert np.allclose(left @ right.T, counts, atol=1e-12)


def test_embed_round_trip_bit_exact(tmp_path, small_cfg):
    sim = tmp_path / "sim"
    assert run("simulate", "--config", small_cfg, "--seed", 0, "--out", sim) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("embed", "--config", small_cfg, "--input", sim / "events_seed0.csv", "--out", a) == 0
    assert run("embed", "--config", small_cfg, "--input", a / "unfolded.bin", "--out", b) == 0
    for name in ("left.csv", "right.csv", "embedding.bin", "spectrum.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_embed_auto_dimension(tmp_path, small_cfg):
    sim = tmp_path / "sim"
    run("simulate", "--config", small_cfg, "--seed", 0, "--out", sim)
    out = tmp_path / "e"
    assert run("embed", "--config", small_cfg, "--input", sim / "events_seed0.csv", "--dim", "auto",
               "--out", out) == 0
    spec = json.loads((out / "spectrum.json").read_text())
    assert spec["d"] == spec["spectrum"]["chosen_d"]
    assert fio.read_matrix_csv(out / "left.csv").shape == (60, spec["d"])


def test_evaluate_single_cell(tmp_path):
    cfg = write_config(tmp_path / "ev.toml",
                       '[model]\npreset = "smooth"\n[evaluate]\nn_nodes = [30]\nn_bins = [5]\nseeds = [0]\n')
    out = tmp_path / "o"
    assert run("evaluate", "--config", cfg, "--out", out) == 0
    lines = (out / "errors.csv").read_text().splitlines()
    assert len(lines) == 2 and lines[0].startswith("n_nodes,n_bins,seed,x_error")
    assert lines[1].endswith(",ok")


def test_evaluate_failed_cell_exit(tmp_path):
    # d larger than the matrix rank available at M=1 makes every cell fail
    cfg = write_config(tmp_path / "ev.toml", '[model]\npreset = "smooth"\n[evaluate]\n'
                       'n_nodes = [20]\nn_bins = [1]\nseeds = [0]\nd = 2\n')
    out = tmp_path / "o"
    code = run("evaluate", "--config", cfg, "--out", out)
    report = json.loads((out / "report.json").read_text())
    assert code != 0 and len(report["failed"]) == 1


def test_clt_noiseless_flag(tmp_path, small_cfg):
    out = tmp_path / "o"
    assert run("clt", "--config", small_cfg, "--noiseless", "--out", out) == 0
    rep = json.loads((out / "normality.json").read_text())
    assert rep["degenerate_residuals"] and rep["noiseless"]
    out = tmp_path / "p"
    assert run("clt", "--config", small_cfg, "--out", out) == 0
    assert not json.loads((out / "normality.json").read_text())["degenerate_residuals"]


def test_cluster_k_one(tmp_path, small_cfg):
    sim, emb, cl = tmp_path / "sim", tmp_path / "emb", tmp_path / "cl"
    run("simulate", "--config", small_cfg, "--seed", 0, "--out", sim)
    run("embed", "--config", small_cfg, "--input", sim / "events_seed0.csv", "--out", emb)
    assert run("cluster", "--config", small_cfg, "--input", emb / "embedding.bin", "--k", 1,
               "--out", cl) == 0
    labels = fio.read_matrix_csv(cl / "labels.csv")
    assert np.all(labels[:, 1] == 0) and labels.shape == (12, 2)
    kind, _, sec = fio.read_container(cl / "distances.bin")
    assert kind == "distance" and sec["distances"].shape == (12, 12)


def test_standin_pipeline(tmp_path):
    sim, emb, cl = tmp_path / "sim", tmp_path / "emb", tmp_path / "cl"
    assert run("simulate", "--config", "standin", "--out", sim) == 0
    assert sorted(p.name for p in sim.iterdir()) == ["events_seed0.csv", "layers.csv",
                                                      "manifest.json", "nodes.csv"]
    first = (sim / "events_seed0.csv").read_text().splitlines()[1].split(",")
    assert first[0].startswith("node") and first[2].startswith("layer") and float(first[3]) > 1
    assert run("embed", "--config", "standin", "--input", sim / "events_seed0.csv",
               "--node-table", sim / "nodes.csv", "--layer-table", sim / "layers.csv",
               "--out", emb) == 0
    n, L = 60, 10
    assert fio.read_matrix_csv(emb / "left.csv").shape == (28 * n, 10)
    assert fio.read_matrix_csv(emb / "right.csv").shape == (L * n, 10)
    man = json.loads((emb / "manifest.json").read_text())
    assert man["data"]["time_map"]["scale"] > 0
    truth = tmp_path / "truth.csv"
    groups = build_group_wave_model(n, n_layers=L, n_groups=6, dim=10, seed=7).groups
    fio.write_matrix_csv(truth, groups[:, None], ["label"])
    assert run("cluster", "--config", "standin", "--input", emb / "embedding.bin", "--truth", truth,
               "--out", cl) == 0
    summary = json.loads((cl / "summary.json").read_text())
    assert summary["k"] == 6 and summary["window"] == 5
    assert summary["ari"] >= 0.95


def test_threads_env_and_flag(tmp_path, small_cfg, monkeypatch):
    monkeypatch.setenv("MIPPDPG_THREADS", "0")
    assert run("simulate", "--config", small_cfg, "--out", tmp_path / "o") == 2
    monkeypatch.setenv("MIPPDPG_THREADS", "2")
    assert run("simulate", "--config", small_cfg, "--out", tmp_path / "o") == 0


def test_entry_point_subprocess(tmp_path):
    res = subprocess.run([sys.executable, "-m", "mippdpg.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "simulate" in res.stdout
    res = subprocess.run([sys.executable, "-m", "mippdpg.cli", "simulate", "--config",
                          str(tmp_path / "none.toml")], capture_output=True, text=True)
    assert res.returncode == 2
