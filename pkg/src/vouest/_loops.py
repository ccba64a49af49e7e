"""Quadratic-cost inner loops, each with a numba and a numpy implementation.

The public names at the bottom of the module point at the numba versions when
numba is available and enabled, otherwise at the numpy versions.  Tests and
``benchmarks/bench_backends.py`` import both variants explicitly.
"""

import numpy as np

from ._accel import HAVE_NUMBA, njit, prange


# ---------------------------------------------------------------------------
# lower-triangular Toeplitz forward substitution
#     sum_{q=0}^{k} a[q] * x[k-q] = rhs[k],   k = 0..N-1
# ---------------------------------------------------------------------------

def toeplitz_solve_numpy(a, rhs):
    a = np.ascontiguousarray(a, dtype=np.float64)
    rhs = np.ascontiguousarray(rhs, dtype=np.float64)
    n = rhs.shape[0]
    x = np.empty(n)
    a0 = a[0]
    for k in range(n):
        acc = 0.0
        if k > 0:
            acc = np.dot(a[1:k + 1], x[k - 1::-1])
        x[k] = (rhs[k] - acc) / a0
    return x


@njit(cache=True)
def _toeplitz_solve_nb(a, rhs):
    n = rhs.shape[0]
    x = np.empty(n)
    a0 = a[0]
    for k in range(n):
        acc = 0.0
        for q in range(1, k + 1):
            acc += a[q] * x[k - q]
        x[k] = (rhs[k] - acc) / a0
    return x


def toeplitz_solve_numba(a, rhs):
    return _toeplitz_solve_nb(np.ascontiguousarray(a, dtype=np.float64),
                              np.ascontiguousarray(rhs, dtype=np.float64))


# ---------------------------------------------------------------------------
# Euler recursion for a batch of paths
#     X[p, k+1] = x0 + sum_{i=0}^{k} kern[k+1-i] * y[p, i]
#     y[p, i]   = dt * (b + beta * X[p, i]) + sigma * sqrt(dt) * xi[p, i]
# kern[0] is never read.
# ---------------------------------------------------------------------------

def euler_batch_numpy(kern, xi, x0, b, beta, sigma, dt):
    kern = np.ascontiguousarray(kern, dtype=np.float64)
    xi = np.ascontiguousarray(xi, dtype=np.float64)
    n_paths, n = xi.shape
    sq = sigma * np.sqrt(dt)
    X = np.empty((n_paths, n + 1))
    Y = np.empty((n_paths, n))
    X[:, 0] = x0
    for k in range(n):
        Y[:, k] = dt * (b + beta * X[:, k]) + sq * xi[:, k]
        X[:, k + 1] = x0 + Y[:, :k + 1] @ kern[k + 1:0:-1]
    return X


@njit(cache=True, parallel=True)
def _euler_batch_nb(kern, xi, x0, b, beta, sigma, dt):
    n_paths, n = xi.shape
    sq = sigma * np.sqrt(dt)
    X = np.empty((n_paths, n + 1))
    for p in prange(n_paths):
        y = np.empty(n)
        X[p, 0] = x0
        for k in range(n):
            y[k] = dt * (b + beta * X[p, k]) + sq * xi[p, k]
            acc = 0.0
            for i in range(k + 1):
                acc += kern[k + 1 - i] * y[i]
            X[p, k + 1] = x0 + acc
    return X


def euler_batch_numba(kern, xi, x0, b, beta, sigma, dt):
    return _euler_batch_nb(np.ascontiguousarray(kern, dtype=np.float64),
                           np.ascontiguousarray(xi, dtype=np.float64),
                           float(x0), float(b), float(beta), float(sigma), float(dt))


if HAVE_NUMBA:
    toeplitz_solve = toeplitz_solve_numba
    euler_batch = euler_batch_numba
else:
    toeplitz_solve = toeplitz_solve_numpy
    euler_batch = euler_batch_numpy
