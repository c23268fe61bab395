"""The numba and pure-numpy paths run the same kernel source and must agree."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from spcca import _backend
from spcca import _kernels as K
from spcca.engine import EngineConfig, fit
from spcca.synthetic import generate, planted_scenario

SCRIPT = """
import json, warnings
import numpy as np
warnings.simplefilter("ignore")
from spcca._backend import BACKEND
from spcca.engine import EngineConfig, fit
from spcca.synthetic import generate, planted_scenario
data, design, _ = generate(planted_scenario())
res = fit(data, design.matrix, EngineConfig((0.2, 0.2, 0.0)), 2)
print(json.dumps({"backend": BACKEND, "objectives": res.objectives,
                  "weights": [[w.tolist() for w in v.weights] for v in res.variables]}))
"""


def run_backend(disable):
    env = dict(os.environ)
    env.pop("SPCCA_DISABLE_NUMBA", None)
    if disable:
        env["SPCCA_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True,
                         check=True)
    return json.loads(out.stdout)


@pytest.mark.skipif(not _backend.HAVE_NUMBA, reason="numba not installed")
def test_numba_and_numpy_agree():
    a, b = run_backend(False), run_backend(True)
    assert a["backend"] == "numba" and b["backend"] == "numpy"
    np.testing.assert_allclose(a["objectives"], b["objectives"], rtol=0, atol=1e-10)
    for va, vb in zip(a["weights"], b["weights"]):
        for wa, wb in zip(va, vb):
            np.testing.assert_allclose(wa, wb, rtol=0, atol=1e-9)
            assert (np.asarray(wa) == 0).tolist() == (np.asarray(wb) == 0).tolist()


def test_threshold_kernel():
    v = np.array([0.5, -0.2, 0.3, -0.6])
    np.testing.assert_array_equal(K.threshold(v, 0.6, False), [0.5, 0.0, 0.0, -0.6])
    np.testing.assert_allclose(K.threshold(v, 0.6, True), [0.2, 0.0, 0.0, -0.3])


def test_pearson_kernel(rng):
    u, v = rng.standard_normal(20), rng.standard_normal(20)
    assert K.pearson(u, v) == pytest.approx(np.corrcoef(u, v)[0, 1], abs=1e-14)
    assert K.pearson(np.ones(5), u[:5]) == 0.0


def test_python_impl_matches(rng):
    u, v = rng.standard_normal(20), rng.standard_normal(20)
    assert _backend.python_impl(K.pearson)(u, v) == pytest.approx(K.pearson(u, v), abs=1e-14)


def test_backend_flag_values():
    assert _backend.BACKEND in ("numba", "numpy")
    assert _backend.USE_NUMBA == (_backend.BACKEND == "numba")
