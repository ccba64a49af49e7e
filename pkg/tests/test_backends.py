import json
import os
import subprocess
import sys

import numpy as np
import pytest
from scipy import linalg

from vouest import _accel, _loops

needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed or disabled")


def _toeplitz_case(n, seed):
    rng = np.random.default_rng(seed)
    a = np.concatenate([[1.0 + rng.random()], -rng.random(n - 1) / n])
    return a, rng.standard_normal(n)


@pytest.mark.parametrize("impl", [_loops.toeplitz_solve_numpy, _loops.toeplitz_solve_numba])
def test_toeplitz_against_dense_solve(impl):
    a, rhs = _toeplitz_case(200, 0)
    A = linalg.toeplitz(a, np.zeros_like(a))
    np.testing.assert_allclose(impl(a, rhs), linalg.solve_triangular(A, rhs, lower=True), rtol=1e-12, atol=1e-13)


@needs_numba
def test_toeplitz_backends_agree():
    a, rhs = _toeplitz_case(3000, 1)
    np.testing.assert_allclose(_loops.toeplitz_solve_numba(a, rhs), _loops.toeplitz_solve_numpy(a, rhs),
                               rtol=1e-12, atol=1e-14)


@needs_numba
def test_euler_backends_agree():
    rng = np.random.default_rng(2)
    n = 400
    kern = np.concatenate([[0.0], (np.arange(1, n + 1) * 0.05) ** -0.25])
    xi = rng.standard_normal((5, n))
    args = (kern, xi, 1.0, 1.2, -1.0, 0.3, 0.05)
    np.testing.assert_allclose(_loops.euler_batch_numba(*args), _loops.euler_batch_numpy(*args), rtol=1e-12, atol=1e-13)


def test_public_aliases_follow_backend():
    if _accel.HAVE_NUMBA:
        assert _loops.toeplitz_solve is _loops.toeplitz_solve_numba
        assert _accel.backend() == "numba"
    else:
        assert _loops.toeplitz_solve is _loops.toeplitz_solve_numpy
        assert _accel.backend() == "numpy"


_PROBE = """
import json
import numpy as np
from vouest import _accel
from vouest.kernels import LogKernel
from vouest.simulate import VouParams, simulate_euler_batch
from vouest.calculus import solve_second_kind
x = simulate_euler_batch(LogKernel(), VouParams(), 300, 30.0, 5, 2).values
e = solve_second_kind(LogKernel(), -1.0, 0.01, 5.0).values
print(json.dumps({"backend": _accel.backend(), "x": x.ravel().tolist(), "e": e.tolist()}))
"""


def _probe(disable):
    env = dict(os.environ)
    env.pop("VOUEST_DISABLE_NUMBA", None)
    if disable:
        env["VOUEST_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", _PROBE], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


@needs_numba
def test_env_flag_switches_backend_without_changing_numbers():
    fast, slow = _probe(False), _probe(True)
    assert fast["backend"] == "numba" and slow["backend"] == "numpy"
    np.testing.assert_allclose(fast["x"], slow["x"], rtol=1e-11, atol=1e-12)
    np.testing.assert_allclose(fast["e"], slow["e"], rtol=1e-11, atol=1e-12)


def test_set_threads_accepts_any_count():
    _accel.set_threads(1)
    _accel.set_threads(10 ** 6)
    _accel.set_threads(None)
