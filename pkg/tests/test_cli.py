import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from kkno.cli import main
from kkno.experiments.config import ConfigError, load_config
from kkno.experiments.output import emit_csv, emit_plot, format_cell

CONVERGE = {"experiment": "converge", "kernel": {"variant": "cell_uniform", "dimension": 1},
            "function": "sin2pi", "n_list": [8, 16, 32, 64]}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def read_rows(path):
    lines = Path(path).read_text().splitlines()
    return lines[0], [line.split(",") for line in lines[1:]]


def test_converge_run(tmp_path):
    out = tmp_path / "out"
    assert main(["run", write(tmp_path, CONVERGE), "--out", str(out)]) == 0
    header, rows = read_rows(out / "converge.csv")
    assert header == "n,sup_error" and len(rows) == 4
    errors = [float(e) for _, e in rows]
    assert errors == sorted(errors, reverse=True)
    for (n, e) in rows:
        rho = math.sin(math.pi / int(n)) / (math.pi / int(n))
        assert abs(float(e) - (1 - rho)) < 1e-12
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["verdicts"].values()) == {"pass"}
    assert manifest["outputs"] == ["converge.csv", "bound.csv"]
    for key in ("config_hash", "tool_version", "duration_seconds", "experiment"):
        assert key in manifest


def test_unknown_variant_exit_2_names_field(tmp_path):
    cfg = dict(CONVERGE, kernel={"variant": "foo"})
    out = tmp_path / "out"
    res = subprocess.run([sys.executable, "-m", "kkno", "run", write(tmp_path, cfg), "--out", str(out)],
                         capture_output=True, text=True)
    assert res.returncode == 2
    assert "kernel.variant" in res.stderr and res.stdout == ""
    assert not out.exists()


@pytest.mark.parametrize("patch", [{"bogus": 1}, {"n_list": [16, 8, 32]}, {"function": "nope"},
                                   {"gamma": 3}, {"kernel": {"variant": "gaussian", "dimension": 2,
                                                             "matrix": [1, 2, 2, 1]}},
                                   {"experiment": "voronovskaya"}, {"n_list": [8, 16]}])
def test_invalid_configs_exit_2(tmp_path, patch):
    assert main(["run", write(tmp_path, dict(CONVERGE, **patch)), "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()


def test_unreadable_and_malformed_config(tmp_path):
    assert main(["run", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(bad)


def test_unwritable_output_exit_2(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", write(tmp_path, CONVERGE), "--out", str(blocker / "sub")]) == 2


def test_zero_constant_exit_1_with_artifacts(tmp_path):
    out = tmp_path / "out"
    assert main(["run", write(tmp_path, dict(CONVERGE, constant=0.0)), "--out", str(out)]) == 1
    header, rows = read_rows(out / "bound.csv")
    assert header == "n,sup_error,bound,margin"
    assert all(float(r[3]) < 0 for r in rows)
    assert json.loads((out / "manifest.json").read_text())["verdicts"]["bound"] == "fail"


def test_output_dir_precedence(tmp_path, monkeypatch):
    cfg = write(tmp_path, dict(CONVERGE, output_dir=str(tmp_path / "from_config")))
    monkeypatch.setenv("KKNO_OUTPUT_DIR", str(tmp_path / "from_env"))
    assert main(["run", cfg]) == 0
    assert (tmp_path / "from_env" / "manifest.json").exists()
    assert main(["run", cfg, "--out", str(tmp_path / "from_flag")]) == 0
    assert (tmp_path / "from_flag" / "manifest.json").exists()
    monkeypatch.delenv("KKNO_OUTPUT_DIR")
    assert main(["run", cfg]) == 0
    assert (tmp_path / "from_config" / "manifest.json").exists()


def test_manifest_hash_tracks_content(tmp_path):
    a = load_config(write(tmp_path, CONVERGE, "a.json"))[1]
    b = load_config(write(tmp_path, CONVERGE, "b.json"))[1]
    c = load_config(write(tmp_path, dict(CONVERGE, t=0.25), "c.json"))[1]
    assert a == b != c


def test_byte_identical_across_runs_and_threads(tmp_path):
    cfg = write(tmp_path, {"experiment": "compose", "kernel": {"variant": "gaussian", "dimension": 1},
                           "function": "sin2pi", "n_list": [4, 8], "t": 0.25, "resolution": 32})
    outs = []
    for i, threads in enumerate([1, 1, 4]):
        d = tmp_path / f"r{i}"
        assert main(["run", cfg, "--out", str(d), "--threads", str(threads)]) == 0
        outs.append((d / "compose.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]


@pytest.mark.parametrize("cfg,files", [
    ({"experiment": "moments", "kernel": {"variant": "gaussian", "dimension": 2, "matrix": [4, 0, 0, 1]},
      "n_list": [1, 4]}, ["moments.csv"]),
    ({"experiment": "admissible", "kernel": {"variant": "drifted", "dimension": 1, "base": "gaussian",
                                             "drift": [1.0], "decay": 1}}, ["admissible.csv"]),
    ({"experiment": "voronovskaya", "kernel": {"variant": "cell_uniform"}, "function": "sin2pi", "p": 2},
     ["voronovskaya.csv"]),
    ({"experiment": "korovkin", "kernel": {"variant": "cell_uniform", "dimension": 2}, "resolution": 8},
     ["korovkin.csv"]),
    ({"experiment": "rate", "kernel": {"variant": "cell_uniform"}, "function": "absdev", "expected_rate": 1.0},
     ["converge.csv", "rate.csv"]),
    ({"experiment": "pde-compare", "kernel": {"variant": "cell_uniform"}, "function": "sin2pi",
      "n_list": [8, 16], "t": 0.25, "resolution": 32}, ["pde_compare.csv"]),
])
def test_every_experiment_kind(tmp_path, cfg, files):
    out = tmp_path / "out"
    assert main(["run", write(tmp_path, cfg), "--out", str(out), "--plot"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["outputs"][:len(files)] == files
    assert all((out / f).exists() for f in manifest["outputs"])


def test_rate_mismatch_exit_1(tmp_path):
    cfg = {"experiment": "rate", "kernel": {"variant": "cell_uniform"}, "function": "sin2pi",
           "expected_rate": 1.0}
    assert main(["run", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 1


def test_single_row_plot_is_failed_check(tmp_path):
    cfg = {"experiment": "pde-compare", "kernel": {"variant": "cell_uniform"}, "function": "sin2pi",
           "n_list": [8], "t": 0.1, "resolution": 16}
    out = tmp_path / "o"
    assert main(["run", write(tmp_path, cfg), "--out", str(out), "--plot"]) == 1
    assert json.loads((out / "manifest.json").read_text())["verdicts"]["plot"] == "fail"


def test_emit_csv_formats(tmp_path):
    p = emit_csv(("n", "sup_error"), [], tmp_path / "empty.csv")
    assert p.read_bytes() == b"n,sup_error\n"
    p = emit_csv(("n", "sup_error"), [(8, 0.5), (16, 0.25)], tmp_path / "two.csv")
    assert p.read_bytes() == b"n,sup_error\n8,0.5\n16,0.25\n"
    assert format_cell(0.1) == "0.10000000000000001"
    assert format_cell(True) == "true"
    with pytest.raises(ValueError):
        emit_csv(("a", "b"), [(1,)], tmp_path / "bad.csv")


def test_emit_plot(tmp_path):
    series = {"error": [(n, n ** -2.0) for n in (4, 8, 16)], "bound": [(n, 2 * n ** -1.0) for n in (4, 8, 16)]}
    svg = emit_plot(series, tmp_path / "p.svg", title="t", xlabel="n", ylabel="e")
    text = Path(svg).read_text()
    assert text.startswith("<svg") and text.count("<polyline") == 2 and "bound" in text
    with pytest.raises(ValueError):
        emit_plot({"one": [(4, 0.1)]}, tmp_path / "q.svg")
    emit_plot({"z": [(1, 0.0), (2, 1.0)]}, tmp_path / "lin.svg")


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, CONVERGE)
    res = subprocess.run([sys.executable, "-m", "kkno", "run", cfg, "--out", str(tmp_path / "m")],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr


@pytest.mark.parametrize("path", sorted((Path(__file__).resolve().parents[1] / "configs").glob("*.json")),
                         ids=lambda p: p.name)
def test_shipped_configs_validate(path):
    cfg, digest = load_config(path)
    assert len(digest) == 64 and cfg.experiment
