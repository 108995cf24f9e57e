import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np

from ngp import _kernels

ROOT = Path(__file__).resolve().parents[1]

SNIPPET = """
import json, numpy as np
from ngp import _kernels
from ngp.data import Dataset
from ngp.predictor import PredictorSpec, fit
g = np.random.default_rng(0)
X = g.standard_normal((90, 3)); t = X[:, 0] * X[:, 1]
m = fit(PredictorSpec(hidden_units=20, epochs=4), Dataset(X, t), (0, 1, 2), seed=1)
print(json.dumps({"numba": _kernels.USE_NUMBA, "W2": m.params["W2"].ravel().tolist()}))
"""


def _run(disable):
    env = dict(os.environ)
    env.pop("NGP_DISABLE_NUMBA", None)
    if disable:
        env["NGP_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", SNIPPET], env=env, check=True,
                         capture_output=True, text=True)
    return json.loads(out.stdout)


def test_env_flag_switches_backend_with_same_result():
    on, off = _run(False), _run(True)
    assert on["numba"] is True and off["numba"] is False
    np.testing.assert_allclose(on["W2"], off["W2"], rtol=1e-9, atol=1e-12)


def test_dispatch_matches_flag():
    expected = "numba" if _kernels.USE_NUMBA else "numpy"
    assert _kernels.train_mlp is _kernels.BACKENDS[expected]["train_mlp"]


def test_benchmark_smoke(capsys):
    sys.path.insert(0, str(ROOT / "benchmarks"))
    try:
        import bench_kernels
    finally:
        sys.path.pop(0)
    bench_kernels.main(["--quick", "--repeats", "1"])
    out = capsys.readouterr().out
    assert "mlp 10 epochs" in out and "lasso cd" in out and "speedup" in out
