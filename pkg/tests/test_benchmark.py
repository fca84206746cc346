import importlib.util
import os
import subprocess
import sys
from pathlib import Path

BENCH = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_brownian.py"


def test_benchmark_smoke(capsys):
    spec = importlib.util.spec_from_file_location("bench_brownian", BENCH)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    mod.main(["--paths", "20", "--repeat", "1"])
    out = capsys.readouterr().out
    for name in ("extend", "bridge", "scheme2"):
        assert name in out


def test_pure_python_switch():
    code = "from mvsde.randomness import default_backend; print(default_backend())"
    env = dict(os.environ, MVSDE_PURE_PYTHON="1")
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert res.stdout.strip() == "python"
    env["MVSDE_PURE_PYTHON"] = "0"
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert res.stdout.strip() == "cython"
