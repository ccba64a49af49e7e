"""Resolvent of the second kind, stationary moments and the Z / Gamma transforms.

``E_beta`` solves ``E = K + beta * K * E``.  Writing ``E = K + R`` gives

    R = beta * (K * K) + beta * (K * R),

whose solution ``R`` is bounded near 0 and is represented as a continuous
piecewise-linear function on the grid with ``R(0) = 0``.  The convolution
``K * R`` is evaluated with the hat-function cell weights of
:func:`vouest.kernels.cell_integrals`, so the singular part of ``E`` is never
sampled at a grid node.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.signal import fftconvolve

from . import _loops
from .errors import DomainError, UsageError
from .kernels import CellIntegrals, FirstKindResolvent, Fractional, KernelSpec, cell_integrals


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not beta < 0:
        raise DomainError(f"beta must be negative (ergodic regime), got {beta}")
    return beta


@dataclass(frozen=True)
class SecondKindResolvent:
    """``E_beta`` on the grid ``t_k = k * grid_step``, k = 0..n.

    ``values[0]`` is ``K(0+)`` (``inf`` for singular kernels).  ``remainder``
    holds the nodal values of ``R = E - K`` and ``cells`` the kernel cell
    integrals, which together give exact integrals of the piecewise model.
    """

    kernel: KernelSpec
    beta: float
    grid_step: float
    values: np.ndarray
    remainder: np.ndarray
    cells: CellIntegrals = field(repr=False)

    @property
    def n(self) -> int:
        return self.values.shape[0] - 1

    @property
    def horizon(self) -> float:
        return self.n * self.grid_step

    def times(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.grid_step

    def cell_integrals(self) -> np.ndarray:
        """int of E over each cell ((m-1)dt, m dt], m = 1..n."""
        R = self.remainder
        return self.cells.m0 + 0.5 * self.grid_step * (R[:-1] + R[1:])

    def cell_square_integrals(self) -> np.ndarray:
        """int of E^2 over each cell."""
        c, R, dt = self.cells, self.remainder, self.grid_step
        r0, r1 = R[:-1], R[1:]
        return (c.sq + 2.0 * (r0 * c.lower + r1 * c.upper)
                + dt * (r0 * r0 + r0 * r1 + r1 * r1) / 3.0)

    def cumulative_integral(self) -> np.ndarray:
        """int_0^{t_k} E for k = 0..n."""
        return np.concatenate([[0.0], np.cumsum(self.cell_integrals())])

    def residual(self) -> np.ndarray:
        """``E(t_k) - K(t_k) - beta (K*E)(t_k)``, k = 1..n, relative to the size of the terms.

        ``K*E`` is evaluated as ``K*K + K*R`` with the product rule, directly
        rather than through the recursion.
        """
        n, dt = self.n, self.grid_step
        t = np.arange(1, n + 1) * dt
        c = self.cells
        R = self.remainder
        # (K*R)(t_k) = sum_m lower_m R_{k-m+1} + upper_m R_{k-m}
        conv = fftconvolve(c.lower, R[1:])[:n] + np.concatenate([[0.0], fftconvolve(c.upper, R[1:])[:n - 1]])
        kk = self.kernel.self_convolution(t)
        E = self.values[1:]
        K = self.kernel(t)
        KE = self.beta * (kk + conv)
        return (E - K - KE) / (np.abs(E) + np.abs(K) + np.abs(KE))

    def tail_fit(self, decade: float = 10.0) -> tuple[float, float]:
        """Fit ``E(t) ~ A t^-p`` on the last decade of the grid; return (A, p)."""
        t = self.times()[1:]
        E = self.values[1:]
        sel = (t >= self.horizon / decade) & (E > 0)
        if np.count_nonzero(sel) < 3:
            return float("nan"), float("nan")
        slope, icept = np.polyfit(np.log(t[sel]), np.log(E[sel]), 1)
        return float(math.exp(icept)), float(-slope)

    def tail_estimates(self) -> dict:
        """Power-law extrapolation of the integrals of E and E^2 beyond the horizon."""
        T = self.horizon
        E_T = float(self.values[-1])
        _, p = self.tail_fit()
        out = {"power": p, "tail_E": 0.0, "tail_E2": 0.0, "converged": True}
        if not np.isfinite(p) or p <= 1.0:
            out["converged"] = False
            out["tail_E"] = math.inf
        else:
            out["tail_E"] = E_T * T / (p - 1.0)
        if np.isfinite(p) and p > 0.5:
            out["tail_E2"] = E_T * E_T * T / (2.0 * p - 1.0)
        else:
            out["converged"] = False
            out["tail_E2"] = math.inf
        if self.kernel.kind == "log":
            # E decays like 1/(t log^2 t); a power fit underestimates the tail
            out["log_tail"] = True
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "E_beta"])
            for t, e in zip(self.times(), self.values):
                w.writerow([repr(float(t)), repr(float(e))])


def solve_second_kind(kernel: KernelSpec, beta: float, grid_step: float, horizon: float) -> SecondKindResolvent:
    beta = _check_beta(beta)
    dt = float(grid_step)
    if not dt > 0:
        raise DomainError("grid step must be positive")
    n = int(round(horizon / dt))
    if n < 1:
        raise DomainError("horizon must be at least one grid step")
    c = cell_integrals(kernel, dt, n)
    t = np.arange(1, n + 1) * dt
    # omega_q = lower_{q+1} + upper_q  (upper_0 = 0)
    omega = c.lower.copy()
    omega[1:] += c.upper[:-1]
    a = -beta * omega
    a[0] += 1.0
    rhs = beta * kernel.self_convolution(t)
    R = np.concatenate([[0.0], _loops.toeplitz_solve(a, rhs)])
    E = np.empty(n + 1)
    E[0] = kernel.k_zero_plus
    E[1:] = kernel(t) + R[1:]
    return SecondKindResolvent(kernel, beta, dt, E, R, c)


def e_beta_tail_integrals(res: SecondKindResolvent, extrapolate: bool = False) -> tuple[float, float]:
    """Return (int_0^T E, int_0^T E^2); with ``extrapolate`` add power-law tails."""
    i1 = float(np.sum(res.cell_integrals()))
    i2 = float(np.sum(res.cell_square_integrals()))
    if extrapolate:
        tails = res.tail_estimates()
        i1 += tails["tail_E"]
        i2 += tails["tail_E2"]
    return i1, i2


def e_beta_integral_target(kernel: KernelSpec, beta: float) -> float:
    """int_0^inf E_beta = 1 / (1/||K|| + |beta|)."""
    beta = _check_beta(beta)
    norm = kernel.l1_norm()
    inv = 0.0 if math.isinf(norm) else 1.0 / norm
    return 1.0 / (inv + abs(beta))


def c_alpha(alpha: float) -> float:
    """(1/pi) int_0^inf du / (1 + 2 u^a cos(pi a / 2) + u^(2a)).

    The range is split at 1 and the tail mapped through u = 1/v.  ``alpha = 1``
    returns the classical value 1/2.
    """
    a = float(alpha)
    if not (0.5 < a <= 1.0):
        raise DomainError(f"C_alpha needs alpha in (1/2, 1], got {a}")
    c = math.cos(math.pi * a / 2.0)
    head, _ = integrate.quad(lambda u: 1.0 / (1.0 + 2.0 * u ** a * c + u ** (2 * a)), 0.0, 1.0,
                             epsabs=0.0, epsrel=1e-12, limit=200)
    # u = 1/v: du/(...) = dv / (v^2 + 2 v^(2-a) c + v^(2-2a))
    tail, _ = integrate.quad(lambda v: 1.0 / (v * v + 2.0 * v ** (2 - a) * c + v ** (2 - 2 * a)), 0.0, 1.0,
                             epsabs=0.0, epsrel=1e-12, limit=200)
    return (head + tail) / math.pi


def stationary_mean(kernel: KernelSpec, b: float, beta: float, x0: float = 0.0) -> float:
    norm = kernel.l1_norm()
    integral = e_beta_integral_target(kernel, beta)
    x0_weight = 0.0 if math.isinf(norm) else 1.0 / (1.0 + norm * abs(beta))
    return x0 * x0_weight + b * integral


@dataclass(frozen=True)
class StationaryMoments:
    m1: float
    m2: float
    m_var: float
    c_alpha: float | None = None


def stationary_moments(kernel: KernelSpec, b: float, beta: float, sigma: float, x0: float = 0.0,
                       res: SecondKindResolvent | None = None, grid_step: float = 0.01,
                       horizon: float | None = None) -> StationaryMoments:
    """Limits of E[X_t] and Var[X_t] as t -> inf.

    The mean is ``(1 + beta I) x0 + b I`` with ``I = int_0^inf E_beta``, i.e.
    ``x0 / (1 + ||K|| |beta|) + b / (1/||K|| + |beta|)``.  The variance uses the
    closed form ``C_alpha sigma^2 |beta|^(1/alpha - 2)`` for fractional kernels and
    a grid integral of ``E_beta^2`` (with tail extrapolation) otherwise.
    """
    beta = _check_beta(beta)
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    m1 = stationary_mean(kernel, b, beta, x0)
    ca = None
    if isinstance(kernel, Fractional):
        ca = c_alpha(kernel.alpha)
        m_var = ca * sigma ** 2 * abs(beta) ** (1.0 / kernel.alpha - 2.0)
    else:
        if res is None:
            if horizon is None:
                horizon = 60.0 / abs(beta) if kernel.kind == "expsum" else 400.0 / abs(beta)
            res = solve_second_kind(kernel, beta, grid_step, horizon)
        _, i2 = e_beta_tail_integrals(res, extrapolate=True)
        m_var = sigma ** 2 * i2
    return StationaryMoments(m1, m1 * m1 + m_var, m_var, ca)


# ---------------------------------------------------------------------------
# path transforms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PathOnGrid:
    values: np.ndarray
    grid_step: float
    start_value: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.shape[0] < 2:
            raise UsageError("a path needs at least two samples")
        if not np.all(np.isfinite(v)):
            raise UsageError("path contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0] - 1

    def times(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.grid_step


def _same_step(a: float, b: float) -> bool:
    return abs(a - b) <= 1e-12 * max(abs(a), abs(b))


def z_values(values: np.ndarray, x0: float, L: FirstKindResolvent) -> np.ndarray:
    """Z transform of sampled values (last axis is time, index 0 is t = 0)."""
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[-1] - 1
    if L.n < n:
        raise UsageError(f"resolvent covers {L.n} cells, path has {n}")
    dx = values[..., 1:] - x0
    masses = L.masses[:n]
    if values.ndim == 1:
        conv = fftconvolve(dx, masses)[:n]
    else:
        conv = fftconvolve(dx, masses[None, :], axes=-1)[..., :n]
    z = np.zeros_like(values)
    z[..., 1:] = conv + L.atom * dx
    return z


def z_transform(path: PathOnGrid, L: FirstKindResolvent) -> PathOnGrid:
    """Z_k = sum_{i=1}^k (X_i - x0) L((t_{k-i}, t_{k-i+1}]) + (X_k - x0) / K(0+)."""
    if not _same_step(path.grid_step, L.grid_step):
        raise UsageError("path and resolvent must share the grid step; use z_on_fine_grid for nested grids")
    return PathOnGrid(z_values(path.values, path.start_value, L), path.grid_step, 0.0)


def gamma_values(z: np.ndarray, kernel: KernelSpec, grid_step: float,
                 cells: CellIntegrals | None = None) -> np.ndarray:
    """Gamma transform of sampled ``z`` (z[0] must be 0).

    ``z`` is taken piecewise linear.  Integrating the ``K'`` form by parts on
    every cell, the boundary terms telescope against ``K(t) z_t`` and leave

        Gamma_k = sum_{j=1}^k (z_j - z_{j-1}) / dt * int_{cell k-j+1} K,

    so the kernel is only needed through its exact cell integrals.
    """
    z = np.asarray(z, dtype=np.float64)
    n = z.shape[-1] - 1
    if np.any(np.abs(z[..., 0]) > 0):
        raise UsageError("Gamma transform needs z_0 = 0")
    if cells is None:
        cells = cell_integrals(kernel, grid_step, n)
    w = cells.m0[:n] / grid_step
    out = np.zeros_like(z)
    dz = np.diff(z, axis=-1)
    if z.ndim == 1:
        out[1:] = fftconvolve(dz, w)[:n]
    else:
        out[..., 1:] = fftconvolve(dz, w[None, :], axes=-1)[..., :n]
    return out


def gamma_transform(z: PathOnGrid, kernel: KernelSpec) -> PathOnGrid:
    return PathOnGrid(gamma_values(z.values, kernel, z.grid_step), z.grid_step, 0.0)
