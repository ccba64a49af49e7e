"""Sample paths of the Volterra Ornstein-Uhlenbeck process.

    X_t = x0 + int_0^t K(t-s) (b + beta X_s) ds + sigma int_0^t K(t-s) dB_s

Four schemes are available:

``euler``
    the explicit Volterra-Euler recursion on the observation grid,
    ``X_{k+1} = x0 + sum_{i<=k} K(t_{k+1}-t_i) [dt (b + beta X_i) + sigma sqrt(dt) xi_{i+1}]``.
    Cost O(n^2) per path.
``resolvent``
    variation of constants, ``X_t = (1 + beta int_0^t E) x0 + b int_0^t E + sigma int_0^t E(t-s) dB_s``.
    The stochastic convolution runs on a fine grid nesting the observation grid
    with weights ``sqrt(int_cell E^2 / h)``, so each marginal variance is exact
    for the piecewise model of ``E``.
``cholesky``
    exact Gaussian sampling from the covariance
    ``sigma^2 int_0^{s^t} E(|t-s|+r) E(r) dr`` (dense, n <= 2000).
``stationary``
    ``m1 + sigma int_{-T_b}^t E(t-s) dW_s`` with the past truncated at ``-T_b``.

Random numbers: path ``i`` of a batch with master seed ``s`` draws from
``Generator(PCG64(SeedSequence(s, spawn_key=(i,))))`` with numpy's ziggurat
``standard_normal``.  A path therefore does not depend on the batch size or on
which other paths are simulated alongside it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from . import _loops
from .calculus import SecondKindResolvent, PathOnGrid, solve_second_kind, stationary_mean
from .errors import DomainError, NumericalError, UsageError
from .kernels import KernelSpec

SCHEMES = ("euler", "resolvent", "cholesky", "stationary")
FINE_STEP_MAX = 0.02
CHOLESKY_MAX_N = 2000


@dataclass(frozen=True)
class VouParams:
    b: float = 1.2
    beta: float = -1.0
    sigma: float = 0.3
    x0: float = 1.0
    allow_zero_sigma: bool = field(default=False, compare=False)

    def __post_init__(self):
        if not self.beta < 0:
            raise DomainError(f"beta must be negative, got {self.beta}")
        if self.sigma < 0:
            raise DomainError("sigma must be non-negative")
        if self.sigma == 0 and not self.allow_zero_sigma:
            raise DomainError("sigma = 0 is only allowed with allow_zero_sigma=True")

    def to_dict(self) -> dict:
        return {"b": self.b, "beta": self.beta, "sigma": self.sigma, "x0": self.x0}


def path_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(index),))))


def draw_noise(seed: int, n: int, n_paths: int, first: int = 0) -> np.ndarray:
    out = np.empty((n_paths, n))
    for p in range(n_paths):
        out[p] = path_rng(seed, first + p).standard_normal(n)
    return out


@dataclass(frozen=True)
class SamplePath(PathOnGrid):
    seed: int = 0
    scheme: str = "euler"
    noise: np.ndarray | None = None
    index: int = 0


@dataclass
class PathBatch:
    """``values`` has shape (n_paths, n + 1); row p is path ``first + p``."""

    kernel: KernelSpec
    params: VouParams
    grid_step: float
    values: np.ndarray
    seed: int
    scheme: str
    first: int = 0
    noise: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1] - 1

    @property
    def horizon(self) -> float:
        return self.n * self.grid_step

    def times(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.grid_step

    def path(self, p: int) -> SamplePath:
        noise = None if self.noise is None else self.noise[p]
        return SamplePath(self.values[p], self.grid_step, self.params.x0, self.seed, self.scheme,
                          noise, self.first + p)


def _grid(n: int, T: float) -> float:
    n = int(n)
    if n < 2:
        raise DomainError("need at least 2 steps")
    if not T > 0:
        raise DomainError("horizon must be positive")
    return T / n


def _refinement(dt: float, h_max: float) -> int:
    return max(1, int(math.ceil(dt / h_max - 1e-9)))


# ---------------------------------------------------------------------------
# Euler
# ---------------------------------------------------------------------------

def simulate_euler_batch(kernel: KernelSpec, params: VouParams, n: int, T: float, seed: int,
                         n_paths: int = 1, first: int = 0, retain_noise: bool = False) -> PathBatch:
    dt = _grid(n, T)
    xi = draw_noise(seed, n, n_paths, first)
    kern = np.empty(n + 1)
    kern[0] = 0.0
    kern[1:] = kernel(np.arange(1, n + 1) * dt)
    X = _loops.euler_batch(kern, xi, params.x0, params.b, params.beta, params.sigma, dt)
    return PathBatch(kernel, params, dt, X, seed, "euler", first, xi if retain_noise else None)


def simulate_euler(kernel, params, n, T, seed, retain_noise=False, index=0) -> SamplePath:
    return simulate_euler_batch(kernel, params, n, T, seed, 1, index, retain_noise).path(0)


# ---------------------------------------------------------------------------
# resolvent (variation of constants)
# ---------------------------------------------------------------------------

def fine_resolvent(kernel: KernelSpec, beta: float, dt: float, horizon: float,
                   h_max: float = FINE_STEP_MAX) -> tuple[SecondKindResolvent, int]:
    """E_beta on a grid of step dt / r (r >= 1 minimal with dt / r <= h_max)."""
    r = _refinement(dt, h_max)
    n_fine = int(round(horizon / dt)) * r
    return solve_second_kind(kernel, beta, dt / r, n_fine * dt / r), r


def _check_nesting(res: SecondKindResolvent, dt: float, T: float) -> int:
    ratio = dt / res.grid_step
    r = int(round(ratio))
    if r < 1 or abs(ratio - r) > 1e-9 * ratio:
        raise UsageError("resolvent grid does not nest the path grid")
    if res.horizon < T * (1 - 1e-12):
        raise UsageError("resolvent horizon is shorter than the path horizon")
    return r


def simulate_resolvent_batch(kernel: KernelSpec, params: VouParams, n: int, T: float, seed: int,
                             n_paths: int = 1, first: int = 0, res: SecondKindResolvent | None = None,
                             retain_noise: bool = False) -> PathBatch:
    dt = _grid(n, T)
    if res is None:
        res, r = fine_resolvent(kernel, params.beta, dt, T)
    else:
        if res.kernel != kernel or res.beta != params.beta:
            raise UsageError("resolvent was built for a different kernel or beta")
        r = _check_nesting(res, dt, T)
    nf = n * r
    h = res.grid_step
    cumE = res.cumulative_integral()[: nf + 1 : r]
    mean = (1.0 + params.beta * cumE) * params.x0 + params.b * cumE
    w = np.sqrt(res.cell_square_integrals()[:nf] / h) * math.sqrt(h) * params.sigma
    xi = draw_noise(seed, nf, n_paths, first)
    stoch = fftconvolve(xi, w[None, :], axes=1)[:, :nf]
    X = np.empty((n_paths, n + 1))
    X[:, 0] = params.x0
    X[:, 1:] = mean[None, 1:] + stoch[:, r - 1::r]
    meta = {"fine_step": h, "refinement": r}
    return PathBatch(kernel, params, dt, X, seed, "resolvent", first, xi if retain_noise else None, meta)


def simulate_resolvent(kernel, params, n, T, seed, res=None, retain_noise=False, index=0) -> SamplePath:
    return simulate_resolvent_batch(kernel, params, n, T, seed, 1, index, res, retain_noise).path(0)


def resolvent_mean(res: SecondKindResolvent, params: VouParams) -> np.ndarray:
    """E[X_t] on the resolvent grid."""
    c = res.cumulative_integral()
    return (1.0 + params.beta * c) * params.x0 + params.b * c


# ---------------------------------------------------------------------------
# exact Gaussian sampling
# ---------------------------------------------------------------------------

def lag_covariances(res: SecondKindResolvent, r: int, n: int, sigma: float) -> np.ndarray:
    """``C[q, j] = cov(X_{t_j}, X_{t_{j+q}})`` for the grid t_j = j r h, 1 <= j <= n - q.

    Product rule on the fine grid: ``int_cell E(r)`` is exact, the smooth
    factor ``E(qdt + r)`` is averaged over the cell's endpoints.  Entry
    ``C[q, j]`` is stored at column ``j - 1``.
    """
    nf = n * r
    cellE = res.cell_integrals()[:nf]
    sq = res.cell_square_integrals()[:nf]
    E = res.values
    out = np.zeros((n, n))
    for q in range(n):
        s = q * r
        m = nf - s
        if q == 0:
            prod = sq
        else:
            prod = cellE[:m] * 0.5 * (E[s:s + m] + E[s + 1:s + m + 1])
        cum = np.cumsum(prod)
        out[q, : n - q] = sigma ** 2 * cum[r - 1::r][: n - q]
    return out


def covariance_matrix(res: SecondKindResolvent, r: int, n: int, sigma: float) -> np.ndarray:
    lags = lag_covariances(res, r, n, sigma)
    C = np.empty((n, n))
    for q in range(n):
        idx = np.arange(n - q)
        C[idx, idx + q] = lags[q, : n - q]
        C[idx + q, idx] = lags[q, : n - q]
    return C


def _cholesky(C: np.ndarray, max_jitter: float = 1e-10) -> tuple[np.ndarray, float]:
    scale = float(np.max(np.diag(C)))
    jitter = 0.0
    while True:
        try:
            return np.linalg.cholesky(C + jitter * scale * np.eye(C.shape[0])), jitter * scale
        except np.linalg.LinAlgError:
            jitter = 1e-16 if jitter == 0.0 else jitter * 10.0
            if jitter > max_jitter * (1 + 1e-9):
                raise NumericalError("covariance matrix is not positive definite within the jitter budget")


def simulate_cholesky_batch(kernel: KernelSpec, params: VouParams, n: int, T: float, seed: int,
                            n_paths: int = 1, first: int = 0, h_max: float = FINE_STEP_MAX,
                            retain_noise: bool = False) -> PathBatch:
    dt = _grid(n, T)
    if n > CHOLESKY_MAX_N:
        raise DomainError(f"exact sampling is limited to n <= {CHOLESKY_MAX_N}")
    res, r = fine_resolvent(kernel, params.beta, dt, T, h_max)
    mean = resolvent_mean(res, params)[::r]
    C = covariance_matrix(res, r, n, params.sigma)
    chol, jitter = _cholesky(C)
    xi = draw_noise(seed, n, n_paths, first)
    X = np.empty((n_paths, n + 1))
    X[:, 0] = params.x0
    X[:, 1:] = mean[None, 1:] + xi @ chol.T
    meta = {"fine_step": res.grid_step, "refinement": r, "jitter": jitter}
    return PathBatch(kernel, params, dt, X, seed, "cholesky", first, xi if retain_noise else None, meta)


def simulate_exact_cholesky(kernel, params, n, T, seed, retain_noise=False, index=0) -> SamplePath:
    return simulate_cholesky_batch(kernel, params, n, T, seed, 1, index, retain_noise=retain_noise).path(0)


# ---------------------------------------------------------------------------
# stationary process
# ---------------------------------------------------------------------------

def choose_burn_in(kernel: KernelSpec, beta: float, rel_tol: float = 1e-6, h: float = FINE_STEP_MAX,
                   max_burn_in: float | None = None) -> tuple[float, dict]:
    """Smallest T_b on a probing grid with int_{T_b}^inf E^2 <= rel_tol * int_0^inf E^2."""
    lam = abs(beta)
    if kernel.kind == "expsum":
        return 50.0 / lam, {"burn_in_rule": "default 50/|beta|", "burn_in_ok": True}
    if max_burn_in is None:
        max_burn_in = 4000.0 / lam
    horizon = 100.0 / lam
    while True:
        res = solve_second_kind(kernel, beta, max(h, horizon / 20000), horizon)
        tails = res.tail_estimates()
        sq = np.cumsum(res.cell_square_integrals())
        total = sq[-1] + tails["tail_E2"]
        remaining = total - sq
        hit = np.nonzero(remaining <= rel_tol * total)[0]
        if hit.size and tails["converged"]:
            tb = (hit[0] + 1) * res.grid_step
            return float(tb), {"burn_in_rule": "tail criterion", "burn_in_ok": True,
                               "tail_fraction": float(remaining[hit[0]] / total)}
        if horizon >= max_burn_in:
            frac = float(tails["tail_E2"] / total) if np.isfinite(total) else float("nan")
            return float(max_burn_in), {"burn_in_rule": "capped", "burn_in_ok": False, "tail_fraction": frac}
        horizon = min(2.0 * horizon, max_burn_in)


def simulate_stationary_batch(kernel: KernelSpec, params: VouParams, n: int, T: float, seed: int,
                              n_paths: int = 1, first: int = 0, burn_in: float | None = None,
                              h_max: float = FINE_STEP_MAX, retain_noise: bool = False) -> PathBatch:
    dt = _grid(n, T)
    r = _refinement(dt, h_max)
    h = dt / r
    meta: dict = {}
    if burn_in is None:
        burn_in, meta = choose_burn_in(kernel, params.beta)
    nb = int(math.ceil(burn_in / h - 1e-9))
    nf = n * r
    res = solve_second_kind(kernel, params.beta, h, (nb + nf) * h)
    m1 = stationary_mean(kernel, params.b, params.beta, params.x0)
    w = np.sqrt(res.cell_square_integrals() / h) * math.sqrt(h) * params.sigma
    xi = draw_noise(seed, nb + nf, n_paths, first)
    conv = fftconvolve(xi, w[None, :], axes=1)[:, : nb + nf]
    X = np.empty((n_paths, n + 1))
    # value at time t_k uses the noise on (-T_b, t_k], i.e. the first nb + k r fine cells
    X[:, 0] = m1 + conv[:, nb - 1] if nb > 0 else m1
    X[:, 1:] = m1 + conv[:, nb - 1 + r::r][:, :n]
    meta.update({"burn_in": nb * h, "fine_step": h, "refinement": r})
    return PathBatch(kernel, params, dt, X, seed, "stationary", first, xi if retain_noise else None, meta)


def simulate_stationary(kernel, params, n, T, seed, burn_in=None, retain_noise=False, index=0) -> SamplePath:
    return simulate_stationary_batch(kernel, params, n, T, seed, 1, index, burn_in,
                                     retain_noise=retain_noise).path(0)


def simulate_batch(scheme: str, kernel: KernelSpec, params: VouParams, n: int, T: float, seed: int,
                   n_paths: int = 1, first: int = 0, **kwargs) -> PathBatch:
    if scheme == "euler":
        return simulate_euler_batch(kernel, params, n, T, seed, n_paths, first, **kwargs)
    if scheme == "resolvent":
        return simulate_resolvent_batch(kernel, params, n, T, seed, n_paths, first, **kwargs)
    if scheme == "cholesky":
        return simulate_cholesky_batch(kernel, params, n, T, seed, n_paths, first, **kwargs)
    if scheme == "stationary":
        return simulate_stationary_batch(kernel, params, n, T, seed, n_paths, first, **kwargs)
    raise UsageError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
