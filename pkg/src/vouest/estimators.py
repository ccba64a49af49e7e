"""Drift estimators for discretely observed Volterra OU paths.

Notation for a path observed at ``t_k = k dt``, k = 0..n, with ``T = n dt``::

    S1 = dt sum_{k<n} X_k          S2 = dt sum_{k<n} X_k^2
    SZ = sum_{k<n} X_k (Z_{k+1} - Z_k)            F = T S2 - S1^2

The joint maximum likelihood estimator is

    b_hat    = (Z_T S2 - S1 SZ) / F
    beta_hat = (T SZ - Z_T S1) / F

``Z`` is the Z transform of the path computed on a (possibly finer) nested
grid; see :func:`z_on_fine_grid`.  Stochastic integrals are left-endpoint
(Ito) sums.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .calculus import PathOnGrid, StationaryMoments, c_alpha, z_values
from .errors import DegeneratePathError, DomainError, PlanningError, UsageError
from .kernels import FirstKindResolvent, Fractional, KernelSpec, first_kind_resolvent

DEGENERACY_RTOL = 1e-12


@dataclass(frozen=True)
class DriftEstimate:
    b_hat: float
    beta_hat: float
    method: str
    T: float
    n: int
    m: int | None = None
    f_denominator: float = float("nan")
    seed: int | None = None

    def row(self) -> dict:
        return asdict(self)


def _values(obj) -> np.ndarray:
    if isinstance(obj, PathOnGrid):
        return obj.values
    return np.asarray(obj, dtype=np.float64)


def _step(path, dt) -> float:
    if dt is None:
        if isinstance(path, PathOnGrid):
            return path.grid_step
        raise UsageError("grid step required for raw arrays")
    return float(dt)


def _sums(x: np.ndarray, z: np.ndarray, dt: float):
    if x.shape != z.shape:
        raise UsageError(f"path and Z must have the same samples, got {x.shape} and {z.shape}")
    xl = x[..., :-1]
    dz = np.diff(z, axis=-1)
    n = x.shape[-1] - 1
    T = n * dt
    S1 = dt * np.sum(xl, axis=-1)
    S2 = dt * np.sum(xl * xl, axis=-1)
    SZ = np.sum(xl * dz, axis=-1)
    return n, T, S1, S2, SZ


def z_on_fine_grid(path: PathOnGrid, L: FirstKindResolvent, ratio: int) -> np.ndarray:
    """Z of a path sampled on the fine grid, returned at every ``ratio``-th point.

    ``path`` lives on the fine partition (step ``dt / ratio``); the result has
    one value per coarse grid point.
    """
    ratio = int(ratio)
    if ratio < 1:
        raise UsageError("refinement ratio must be a positive integer")
    if abs(path.grid_step - L.grid_step) > 1e-12 * L.grid_step:
        raise UsageError("resolvent must be tabulated on the path's (fine) grid")
    if path.n % ratio:
        raise UsageError(f"fine grid with {path.n} cells does not nest a coarse grid of ratio {ratio}")
    return z_values(path.values, path.start_value, L)[..., ::ratio]


def mle_discrete(path, z, dt: float | None = None, z_terminal=None, m: int | None = None,
                 seed: int | None = None) -> DriftEstimate:
    """Joint discrete MLE of (b, beta).

    ``z`` holds Z at the coarse points (computed on the fine grid).  The
    terminal value ``Z_T`` in the numerators can be taken from a separate
    coarse-grid computation through ``z_terminal``; by default the last entry
    of ``z`` is used.
    """
    x, zz = _values(path), _values(z)
    dt = _step(path, dt)
    n, T, S1, S2, SZ = _sums(x, zz, dt)
    zT = zz[-1] - zz[0] if z_terminal is None else float(z_terminal)
    F = T * S2 - S1 * S1
    if not F > DEGENERACY_RTOL * T * S2:
        raise DegeneratePathError(f"denominator F = {F:.3e} vanishes (constant path?)")
    b_hat = (zT * S2 - S1 * SZ) / F
    beta_hat = (T * SZ - zT * S1) / F
    return DriftEstimate(float(b_hat), float(beta_hat), "MLE", T, n, m, float(F), seed)


def mle_batch(x: np.ndarray, z: np.ndarray, dt: float, z_terminal=None):
    """Vectorized joint MLE over rows; returns (b_hat, beta_hat, F) with NaN where degenerate."""
    n, T, S1, S2, SZ = _sums(x, z, dt)
    zT = (z[:, -1] - z[:, 0]) if z_terminal is None else np.asarray(z_terminal, dtype=np.float64)
    F = T * S2 - S1 * S1
    ok = F > DEGENERACY_RTOL * T * S2
    with np.errstate(divide="ignore", invalid="ignore"):
        b_hat = np.where(ok, (zT * S2 - S1 * SZ) / F, np.nan)
        beta_hat = np.where(ok, (T * SZ - zT * S1) / F, np.nan)
    return b_hat, beta_hat, F


def mle_known_beta(path, z, beta: float, dt: float | None = None, m: int | None = None,
                   seed: int | None = None) -> DriftEstimate:
    """b_hat = Z_T / T - beta S1 / T."""
    x, zz = _values(path), _values(z)
    dt = _step(path, dt)
    n, T, S1, _, _ = _sums(x, zz, dt)
    b_hat = (zz[-1] - zz[0]) / T - beta * S1 / T
    return DriftEstimate(float(b_hat), float(beta), "MLE_known_beta", T, n, m, float("nan"), seed)


def mle_known_b(path, z, b: float, dt: float | None = None, m: int | None = None,
                seed: int | None = None) -> DriftEstimate:
    """beta_hat = (SZ - b S1) / S2."""
    x, zz = _values(path), _values(z)
    dt = _step(path, dt)
    n, T, S1, S2, SZ = _sums(x, zz, dt)
    if not S2 > np.finfo(float).tiny:
        raise DegeneratePathError("sum of squares vanishes (zero path)")
    beta_hat = (SZ - b * S1) / S2
    return DriftEstimate(float(b), float(beta_hat), "MLE_known_b", T, n, m, float(S2), seed)


def time_moments(x: np.ndarray) -> tuple:
    """Left-endpoint time averages m1(T), m2(T) over the last axis."""
    xl = np.asarray(x, dtype=np.float64)[..., :-1]
    return np.mean(xl, axis=-1), np.mean(xl * xl, axis=-1)


def mom_from_moments(m1, m2, alpha: float, sigma: float):
    """Invert the stationary moment equations of the fractional kernel."""
    m1 = np.asarray(m1, dtype=np.float64)
    var = np.asarray(m2, dtype=np.float64) - m1 * m1
    if np.any(~(var > 0)):
        raise DegeneratePathError("central moment m2 - m1^2 must be positive")
    power = (c_alpha(alpha) * sigma ** 2 / var) ** (alpha / (2.0 * alpha - 1.0))
    return m1 * power, -power


def method_of_moments(path, alpha: float, sigma: float, dt: float | None = None,
                      seed: int | None = None) -> DriftEstimate:
    x = _values(path)
    dt = _step(path, dt)
    if not (0.5 < alpha <= 1.0):
        raise DomainError("method of moments needs a fractional kernel with alpha in (1/2, 1]")
    m1, m2 = time_moments(x)
    b_hat, beta_hat = mom_from_moments(m1, m2, alpha, sigma)
    n = x.shape[-1] - 1
    return DriftEstimate(float(b_hat), float(beta_hat), "MoM", n * dt, n, None, float(m2 - m1 * m1), seed)


def mom_error_predictor(alpha: float, m1: float, m2: float, delta: float) -> float:
    """First-order relative error of beta_hat caused by an error ``delta`` in m2."""
    var = m2 - m1 * m1
    if not var > 0:
        raise DomainError("m2 must exceed m1^2")
    return alpha / (2.0 * alpha - 1.0) * delta / var


def log_likelihood(b: float, beta: float, path, z, sigma: float, dt: float | None = None) -> float:
    """Discrete log-likelihood against the zero-drift reference measure."""
    x, zz = _values(path), _values(z)
    dt = _step(path, dt)
    drift = b + beta * x[:-1]
    return float((np.dot(drift, np.diff(zz)) - 0.5 * dt * np.dot(drift, drift)) / sigma ** 2)


@dataclass(frozen=True)
class FisherInfo:
    matrix: np.ndarray
    det: float
    inverse: np.ndarray
    asymptotic_cov: np.ndarray
    sqrt: np.ndarray


def sqrtm_2x2(M: np.ndarray) -> np.ndarray:
    """Symmetric square root of a 2x2 positive definite matrix, in closed form."""
    M = np.asarray(M, dtype=np.float64)
    s = math.sqrt(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0])
    t = math.sqrt(M[0, 0] + M[1, 1] + 2.0 * s)
    return (M + s * np.eye(2)) / t


def fisher_information(moments: StationaryMoments, sigma: float = 1.0) -> FisherInfo:
    """I = [[1, m1], [m1, m2]] and the asymptotic covariance sigma^2 I^-1."""
    m1, m2 = moments.m1, moments.m2
    det = m2 - m1 * m1
    if not det > 0:
        raise DomainError("Fisher matrix is singular (m_var <= 0)")
    I = np.array([[1.0, m1], [m1, m2]])
    inv = np.array([[m2, -m1], [-m1, 1.0]]) / det
    return FisherInfo(I, det, inv, sigma ** 2 * inv, sqrtm_2x2(I))


# ---------------------------------------------------------------------------
# partition planning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PartitionPlan:
    n: int
    m: int
    T: float
    mesh: float
    gamma: float
    alpha: float
    threshold: float
    coarse_condition: float
    fine_condition: float
    resolvent_mass: float
    feasible: bool = True
    notes: list = field(default_factory=list)

    @property
    def ratio(self) -> int:
        return self.m // self.n


def resolvent_mass(kernel: KernelSpec, T: float, dt: float | None = None) -> float:
    """L((0, T]) without the atom at 0."""
    if isinstance(kernel, Fractional):
        if kernel.alpha == 1.0:
            return 0.0
        return T ** (1.0 - kernel.alpha) / math.gamma(2.0 - kernel.alpha)
    dt = min(T / 100.0, 0.01) if dt is None else dt
    n = int(math.ceil(T / dt))
    return float(np.sum(first_kind_resolvent(kernel, T / n, T).masses))


def plan_partition(kernel: KernelSpec, T: float, n: int, gamma: float | None = None,
                   threshold: float = 0.1, m_max: float = 1e8, strict: bool = True) -> PartitionPlan:
    """Choose the fine partition size m for a coarse partition of n cells.

    Conditions (both must fall below ``threshold``)::

        sqrt(T) (T/n)^gamma                        (coarse mesh)
        n L((0,T]) / sqrt(T) (T/m)^gamma           (fine mesh used by Z)

    ``m`` is the smallest multiple of ``n`` satisfying the second.  With
    ``strict=False`` an infeasible request returns the best effort plan
    (``feasible=False``) instead of raising.
    """
    if not T > 0 or n < 1:
        raise DomainError("need T > 0 and n >= 1")
    g = kernel.gamma if gamma is None else float(gamma)
    if not (0 < g <= 1):
        raise DomainError("gamma must lie in (0, 1]")
    notes = []
    mass = resolvent_mass(kernel, T)
    mesh = T / n
    cond1 = math.sqrt(T) * mesh ** g
    feasible = True
    if not threshold > 0:
        if strict:
            raise PlanningError("threshold must be positive; the limits cannot vanish at finite n")
        feasible = False
        notes.append("non-positive threshold")
    if cond1 >= threshold:
        feasible = False
        needed = math.ceil(T / (threshold / math.sqrt(T)) ** (1.0 / g)) if threshold > 0 else math.inf
        notes.append(f"coarse condition sqrt(T)(T/n)^gamma = {cond1:.4g} >= {threshold}; needs n >= {needed}")
    if mass == 0.0:
        m = n
        cond2 = 0.0
    else:
        c = n * mass / math.sqrt(T)
        if threshold > 0:
            m_req = T * (c / threshold) ** (1.0 / g)
            k = max(1, math.floor(m_req / n) + 1)
            m_cand = k * n
        else:
            m_cand = math.inf
        if m_cand > m_max:
            feasible = False
            notes.append(f"fine condition needs m ~ {m_cand:.3g} > {m_max:.3g}")
            m = int(max(n, (m_max // n) * n))
        else:
            m = int(m_cand)
        cond2 = c * (T / m) ** g
    if not feasible and strict:
        raise PlanningError("no admissible partition: " + "; ".join(notes))
    return PartitionPlan(n, m, T, mesh, g, kernel.alpha, threshold, cond1, cond2, mass, feasible, notes)
