import json
import os
import shutil
import subprocess
import sys

import pytest

from mvsde.cli import apply_override, load_config, main, parse_value, recipe_names
from mvsde.errors import ConfigError
from mvsde.experiments import EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_IO, EXIT_OK, ExperimentConfig


def _write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


SMALL_CONV = """
experiment = "convergence"
example = "ex2"
N = 40
seed = 7
levels = [2, 5]
schemes = ["scheme2", { kind = "tamed_euler", alpha = 1.0 }]
"""


def _csvs(d):
    return {f: open(os.path.join(d, f), "rb").read() for f in sorted(os.listdir(d)) if f.endswith(".csv")}


def test_parse_value():
    assert parse_value("3") == 3
    assert parse_value("0.5") == 0.5
    assert parse_value("[1, 2]") == [1, 2]
    assert parse_value("true") is True
    assert parse_value("scheme2") == "scheme2"


def test_apply_override_dotted():
    raw = {"params": {"sigma": 1.5}}
    apply_override(raw, "params.c=0.25")
    apply_override(raw, "N=12")
    assert raw == {"params": {"sigma": 1.5, "c": 0.25}, "N": 12}
    with pytest.raises(ConfigError):
        apply_override(raw, "novalue")


def test_recipes_listed(capsys):
    assert main(["recipes"]) == EXIT_OK
    names = capsys.readouterr().out.split()
    assert names == recipe_names()
    assert {"ex1_convergence", "ex4_corruption", "ex2_probe"} <= set(names)


@pytest.mark.parametrize("name", recipe_names())
def test_recipes_parse(name):
    cfg = load_config(name)
    assert isinstance(cfg, ExperimentConfig)
    cfg.validate()


def test_unknown_keys_rejected(tmp_path, capsys):
    path = _write(tmp_path, SMALL_CONV + 'colour = "red"\nshape = 3\n')
    assert main(["run", path, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    err = json.loads(capsys.readouterr().err)
    assert "colour" in err["message"] and "shape" in err["message"]


@pytest.mark.parametrize("text", [
    'experiment = "nope"\nexample = "ex2"\n',
    'experiment = "histogram"\nexample = "ex7"\n',
    'experiment = "histogram"\nexample = "ex2"\nT = -1.0\n',
    'experiment = "histogram"\nexample = "ex2"\nN = 0\n',
    'experiment = "histogram"\nexample = "ex2"\nparams = { bogus = 1 }\n',
    'experiment = "density"\nexample = "ex2"\n',
    'this is not toml',
])
def test_config_errors_exit_2(tmp_path, text):
    assert main(["run", _write(tmp_path, text), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_missing_file_is_config_error(tmp_path):
    assert main(["run", str(tmp_path / "absent.toml")]) in (EXIT_CONFIG, EXIT_IO)


def test_io_error_exit_4(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    path = _write(tmp_path, SMALL_CONV)
    assert main(["run", path, "--out", str(blocker / "sub")]) == EXIT_IO


def test_divergence_exit_3(tmp_path, capsys):
    text = ('experiment = "single_run"\nexample = "ex2"\nN = 5\nseed = 1\n'
            'params = { x0 = 1e40 }\nscheme = { kind = "uniform_euler", M = 2 }\n')
    out = tmp_path / "o"
    assert main(["run", _write(tmp_path, text), "--out", str(out)]) == EXIT_DIVERGENCE
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "divergence" and err["corrupted"] == 5
    meta = json.loads((out / "meta.json").read_text())
    assert meta["status"] == EXIT_DIVERGENCE and meta["failure"]["particle"] == 0


def test_expected_divergence_is_success(tmp_path):
    text = ('experiment = "single_run"\nexample = "ex2"\nN = 5\nseed = 1\nexpect_divergence = true\n'
            'params = { x0 = 1e40 }\nscheme = { kind = "uniform_euler", M = 2 }\n')
    assert main(["run", _write(tmp_path, text), "--out", str(tmp_path / "o")]) == EXIT_OK


def test_convergence_rerun_byte_identical(tmp_path):
    path = _write(tmp_path, SMALL_CONV)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", path, "--out", str(a)]) == EXIT_OK
    assert main(["run", path, "--out", str(b)]) == EXIT_OK
    ca = _csvs(a)
    assert list(ca) == ["convergence.csv"]
    assert ca == _csvs(b)
    meta = json.loads((a / "meta.json").read_text())
    for key in ("seed", "versions", "wall_time_s", "parameters", "resolved_params", "phi_log_base"):
        assert key in meta
    assert meta["resolved_params"] == {"sigma": 1.5, "c": 0.5, "x0": 1.0}


def test_worker_count_does_not_change_results(tmp_path):
    text = ('experiment = "poc_strong"\nexample = "ex1"\nseed = 3\nK = 3\n'
            'particle_levels = [3, 5]\nscheme = { kind = "tamed_euler", M = 32, alpha = 0.5 }\n')
    path = _write(tmp_path, text)
    a, b = tmp_path / "w1", tmp_path / "w4"
    assert main(["run", path, "--workers", "1", "--out", str(a)]) == EXIT_OK
    assert main(["run", path, "--workers", "4", "--out", str(b)]) == EXIT_OK
    assert _csvs(a) == _csvs(b)
    weak = text.replace("poc_strong", "poc_weak").replace("[3, 5]", "[3, 6]")
    path = _write(tmp_path, weak, "weak.toml")
    assert main(["run", path, "--workers", "1", "--out", str(a / "w")]) == EXIT_OK
    assert main(["run", path, "--workers", "4", "--out", str(b / "w")]) == EXIT_OK
    assert _csvs(a / "w") == _csvs(b / "w")


def test_seed_and_set_overrides(tmp_path):
    path = _write(tmp_path, SMALL_CONV)
    cfg = load_config(path, ["params.sigma=1.2", "N=10"], seed=99, out=str(tmp_path / "x"))
    assert cfg.seed == 99 and cfg.N == 10 and cfg.params == {"sigma": 1.2}
    assert cfg.output_dir == str(tmp_path / "x")


def test_probe_recipe(tmp_path):
    out = tmp_path / "probe"
    assert main(["run", "ex2_probe", "--out", str(out), "--set", "samples=2000"]) == EXIT_OK
    rows = (out / "probe.csv").read_text().splitlines()
    assert rows[0] == "probe,kappa,samples,violations,passed"
    assert len(rows) == 4


def test_histogram_recipe_small(tmp_path):
    out = tmp_path / "h"
    assert main(["run", "ex2_histogram_coarse", "--out", str(out), "--set", "N=200"]) == EXIT_OK
    lines = (out / "histogram.csv").read_text().splitlines()
    assert lines[0].startswith("bin_lo,bin_hi,count")
    assert sum(int(l.split(",")[2]) for l in lines[1:]) == 200


@pytest.mark.skipif(shutil.which("mvsde") is None, reason="console script not installed")
def test_console_script(tmp_path):
    res = subprocess.run(["mvsde", "recipes"], capture_output=True, text=True)
    assert res.returncode == 0 and "ex2_probe" in res.stdout
    res = subprocess.run([sys.executable, "-m", "mvsde.cli", "run", str(tmp_path / "none.toml")],
                         capture_output=True, text=True)
    assert res.returncode in (EXIT_CONFIG, EXIT_IO)
