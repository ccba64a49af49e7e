"""Completely monotone Volterra kernels and their resolvents of the first kind.

Four kernel families are supported:

``Fractional(alpha)``
    ``K(t) = t**(alpha-1) / Gamma(alpha)``, ``alpha`` in (1/2, 1].  ``alpha = 1``
    is the constant kernel ``K = 1`` (classical Ornstein-Uhlenbeck).
``LogKernel(alpha, gamma)``
    ``K(t) = log(1 + 1/t)``.  The exponents are not determined by the kernel;
    any ``alpha`` in (1/2, 1] and ``gamma`` in (0, 1/2) are admissible.
``ExpSum(coefficients, rates)``
    ``K(t) = sum_i c_i exp(-lambda_i t)``, ``c_i > 0``, ``lambda_i >= 0``.
``DampedFractional(alpha, rate)``
    ``K(t) = t**(alpha-1) exp(-rate t) / Gamma(alpha)``.

JSON form (see :func:`kernel_to_dict`)::

    {"kind": "fractional",        "params": {"alpha": 0.75}}
    {"kind": "log",               "params": {"alpha": 0.99, "gamma": 0.49}}
    {"kind": "expsum",            "params": {"coefficients": [1, 2], "rates": [1, 2]}}
    {"kind": "damped_fractional", "params": {"alpha": 0.75, "rate": 1.0}}

All convolutions against a kernel on a uniform grid go through
:func:`cell_integrals`: the first cell ``(0, dt]`` is integrated in closed form
(or by graded quadrature for the log kernel), every other cell by 16-point
Gauss-Legendre.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np
from scipy import special

from . import _loops
from .errors import DomainError, NumericalError, UsageError

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)

NEGATIVE_MASS_TOL = 1e-10


def _as_time(t) -> np.ndarray:
    arr = np.asarray(t, dtype=np.float64)
    if np.any(~(arr > 0)):
        raise DomainError("kernel evaluation requires t > 0")
    return arr


def graded_integral(func, upper, n_panels: int = 48, chunk: int = 1024) -> np.ndarray:
    """Integrate ``func(s, upper)`` over ``(0, upper)`` for each entry of ``upper``.

    Panels shrink geometrically towards 0 (ratio 1/2), each with 16-point
    Gauss-Legendre, which resolves integrable power and log singularities at
    the origin to near machine precision.  ``func`` receives arrays of shape
    ``(m, n_panels, 16)`` for ``s`` and ``(m, 1, 1)`` for ``upper``.
    """
    upper = np.atleast_1d(np.asarray(upper, dtype=np.float64))
    out = np.empty(upper.shape[0])
    scale = 0.5 ** np.arange(n_panels)
    for start in range(0, upper.shape[0], chunk):
        u = upper[start:start + chunk, None]
        hi = u * scale
        lo = hi * 0.5
        lo[:, -1] = 0.0
        mid = 0.5 * (hi + lo)
        half = 0.5 * (hi - lo)
        s = mid[..., None] + half[..., None] * _GL_X
        vals = func(s, u[..., None])
        out[start:start + chunk] = np.sum(np.sum(vals * _GL_W, axis=-1) * half, axis=-1)
    return out


@dataclass(frozen=True)
class KernelSpec:
    """Base class.  Subclasses implement the closed forms."""

    kind: ClassVar[str] = ""

    # --- metadata ---------------------------------------------------------
    @property
    def alpha(self) -> float:
        raise NotImplementedError

    @property
    def gamma(self) -> float:
        raise NotImplementedError

    @property
    def k_zero_plus(self) -> float:
        raise NotImplementedError

    @property
    def singular(self) -> bool:
        return math.isinf(self.k_zero_plus)

    def l1_norm(self) -> float:
        raise NotImplementedError

    # --- evaluation ---------------------------------------------------------
    def __call__(self, t):
        return self._eval(_as_time(t))

    def derivative(self, t):
        return self._deriv(_as_time(t))

    def _eval(self, t):
        raise NotImplementedError

    def _deriv(self, t):
        raise NotImplementedError

    # --- integrals used by the product rules -------------------------------
    def first_cell(self, dt: float) -> tuple[float, float, float]:
        """Return (int_0^dt K, int_0^dt s K(s) ds, int_0^dt K^2)."""
        raise NotImplementedError

    def self_convolution(self, t) -> np.ndarray:
        """(K * K)(t) for t > 0."""
        t = _as_time(t)
        half = np.atleast_1d(t) / 2.0

        def f(s, u):
            return self._eval(2.0 * u - s) * self._eval(s)

        return (2.0 * graded_integral(f, half)).reshape(np.shape(t))

    # --- serialization ------------------------------------------------------
    def params(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params()}

    def describe(self) -> str:
        inner = ", ".join(f"{k}={v}" for k, v in self.params().items())
        return f"{type(self).__name__}({inner})"


@dataclass(frozen=True)
class Fractional(KernelSpec):
    alpha_: float = 0.75
    kind: ClassVar[str] = "fractional"

    def __post_init__(self):
        a = float(self.alpha_)
        if not (0.5 < a <= 1.0):
            raise DomainError(f"fractional kernel needs alpha in (1/2, 1], got {a}")
        object.__setattr__(self, "alpha_", a)

    @property
    def alpha(self) -> float:
        return self.alpha_

    @property
    def gamma(self) -> float:
        return 0.5 if self.alpha_ == 1.0 else self.alpha_ - 0.5

    @property
    def k_zero_plus(self) -> float:
        return 1.0 if self.alpha_ == 1.0 else math.inf

    def l1_norm(self) -> float:
        return math.inf

    def _eval(self, t):
        a = self.alpha_
        if a == 1.0:
            return np.ones_like(t)
        return t ** (a - 1.0) / special.gamma(a)

    def _deriv(self, t):
        a = self.alpha_
        if a == 1.0:
            return np.zeros_like(t)
        return (a - 1.0) * t ** (a - 2.0) / special.gamma(a)

    def first_cell(self, dt):
        a = self.alpha_
        g = special.gamma(a)
        return (dt ** a / (g * a),
                dt ** (a + 1.0) / (g * (a + 1.0)),
                dt ** (2 * a - 1.0) / ((2 * a - 1.0) * g * g))

    def self_convolution(self, t):
        t = _as_time(t)
        a = self.alpha_
        return t ** (2 * a - 1.0) / special.gamma(2 * a)

    def params(self):
        return {"alpha": self.alpha_}


@dataclass(frozen=True)
class LogKernel(KernelSpec):
    alpha_: float = 0.99
    gamma_: float = 0.49
    kind: ClassVar[str] = "log"

    def __post_init__(self):
        a, g = float(self.alpha_), float(self.gamma_)
        if not (0.5 < a <= 1.0):
            raise DomainError(f"log kernel needs alpha in (1/2, 1], got {a}")
        if not (0.0 < g < 0.5):
            raise DomainError(f"log kernel needs gamma in (0, 1/2), got {g}")
        object.__setattr__(self, "alpha_", a)
        object.__setattr__(self, "gamma_", g)

    @property
    def alpha(self):
        return self.alpha_

    @property
    def gamma(self):
        return self.gamma_

    @property
    def k_zero_plus(self):
        return math.inf

    def l1_norm(self):
        # log(1 + 1/t) ~ 1/t at infinity
        return math.inf

    def _eval(self, t):
        return np.log1p(1.0 / t)

    def _deriv(self, t):
        return -1.0 / (t * (1.0 + t))

    def first_cell(self, dt):
        l = math.log1p(1.0 / dt)
        f0 = dt * l + math.log1p(dt)
        f1 = 0.5 * dt * dt * l + 0.5 * dt - 0.5 * math.log1p(dt)
        f2 = float(graded_integral(lambda s, u: np.log1p(1.0 / s) ** 2, dt)[0])
        return f0, f1, f2

    def params(self):
        return {"alpha": self.alpha_, "gamma": self.gamma_}


def _phi1(x):
    """(1 - e^{-x}) / x, equal to 1 at x = 0."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 0.1
    safe = np.where(small, 1.0, x)
    series = sum((-x) ** k / math.factorial(k + 1) for k in range(10))
    out = np.where(small, series, -np.expm1(-safe) / safe)
    return out if out.ndim else float(out)


def _phi2(x):
    """(1 - e^{-x} - x e^{-x}) / x^2, equal to 1/2 at x = 0."""
    x = float(x)
    if abs(x) < 0.1:
        return sum((-x) ** (k - 2) * (k - 1) / math.factorial(k) for k in range(2, 12))
    return (-math.expm1(-x) - x * math.exp(-x)) / (x * x)


@dataclass(frozen=True)
class ExpSum(KernelSpec):
    coefficients: tuple = (1.0,)
    rates: tuple = (0.0,)
    kind: ClassVar[str] = "expsum"

    def __post_init__(self):
        c = tuple(float(x) for x in np.atleast_1d(self.coefficients))
        lam = tuple(float(x) for x in np.atleast_1d(self.rates))
        if len(c) == 0 or len(c) != len(lam):
            raise DomainError("expsum needs equally many coefficients and rates (at least one)")
        if any(x <= 0 for x in c):
            raise DomainError("expsum coefficients must be > 0")
        if any(x < 0 for x in lam):
            raise DomainError("expsum rates must be >= 0")
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "rates", lam)

    @property
    def _c(self):
        return np.array(self.coefficients)

    @property
    def _lam(self):
        return np.array(self.rates)

    @property
    def alpha(self):
        return 1.0

    @property
    def gamma(self):
        return 0.5

    @property
    def k_zero_plus(self):
        return float(sum(self.coefficients))

    def l1_norm(self):
        if any(r == 0 for r in self.rates):
            return math.inf
        return float(sum(c / r for c, r in zip(self.coefficients, self.rates)))

    def _eval(self, t):
        t = np.asarray(t)
        return np.exp(-np.multiply.outer(t, self._lam)) @ self._c

    def _deriv(self, t):
        t = np.asarray(t)
        return -(np.exp(-np.multiply.outer(t, self._lam)) @ (self._c * self._lam))

    def first_cell(self, dt):
        f0 = f1 = f2 = 0.0
        for c, lam in zip(self.coefficients, self.rates):
            x = lam * dt
            f0 += c * dt * _phi1(x)
            f1 += c * dt * dt * _phi2(x)
        for ci, li in zip(self.coefficients, self.rates):
            for cj, lj in zip(self.coefficients, self.rates):
                f2 += ci * cj * dt * _phi1((li + lj) * dt)
        return f0, f1, f2

    def self_convolution(self, t):
        t = _as_time(t)
        out = np.zeros_like(t)
        for ci, li in zip(self.coefficients, self.rates):
            for cj, lj in zip(self.coefficients, self.rates):
                # (e^{-li t} - e^{-lj t}) / (lj - li), written stably
                lo, hi = min(li, lj), max(li, lj)
                out = out + ci * cj * t * np.exp(-lo * t) * _phi1((hi - lo) * t)
        return out

    def params(self):
        return {"coefficients": list(self.coefficients), "rates": list(self.rates)}


@dataclass(frozen=True)
class DampedFractional(KernelSpec):
    alpha_: float = 0.75
    rate: float = 1.0
    kind: ClassVar[str] = "damped_fractional"

    def __post_init__(self):
        a, lam = float(self.alpha_), float(self.rate)
        if not (0.5 < a < 1.0):
            raise DomainError(f"damped fractional kernel needs alpha in (1/2, 1), got {a}")
        if not lam > 0:
            raise DomainError("damped fractional kernel needs rate > 0")
        object.__setattr__(self, "alpha_", a)
        object.__setattr__(self, "rate", lam)

    @property
    def alpha(self):
        return self.alpha_

    @property
    def gamma(self):
        return self.alpha_ - 0.5

    @property
    def k_zero_plus(self):
        return math.inf

    def l1_norm(self):
        return self.rate ** (-self.alpha_)

    def _eval(self, t):
        a = self.alpha_
        return t ** (a - 1.0) * np.exp(-self.rate * t) / special.gamma(a)

    def _deriv(self, t):
        return self._eval(t) * ((self.alpha_ - 1.0) / t - self.rate)

    def first_cell(self, dt):
        a, lam = self.alpha_, self.rate
        g = special.gamma(a)
        f0 = lam ** (-a) * special.gammainc(a, lam * dt)
        f1 = a * lam ** (-a - 1.0) * special.gammainc(a + 1.0, lam * dt)
        f2 = ((2 * lam) ** (1.0 - 2 * a) * special.gamma(2 * a - 1.0)
              * special.gammainc(2 * a - 1.0, 2 * lam * dt) / g ** 2)
        return float(f0), float(f1), float(f2)

    def self_convolution(self, t):
        t = _as_time(t)
        a = self.alpha_
        return np.exp(-self.rate * t) * t ** (2 * a - 1.0) / special.gamma(2 * a)

    def params(self):
        return {"alpha": self.alpha_, "rate": self.rate}


def constant_kernel() -> Fractional:
    """K = 1, the classical Ornstein-Uhlenbeck case."""
    return Fractional(1.0)


def bundled_kernels() -> list[KernelSpec]:
    return [Fractional(0.55), Fractional(0.75), Fractional(0.95), LogKernel(),
            ExpSum((1.0, 2.0), (1.0, 2.0)), DampedFractional(0.75, 1.0)]


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------

def eval_kernel(spec: KernelSpec, t):
    return spec(t)


def eval_kernel_derivative(spec: KernelSpec, t):
    return spec.derivative(t)


def l1_norm(spec: KernelSpec) -> float:
    return spec.l1_norm()


def kernel_to_dict(spec: KernelSpec) -> dict:
    return spec.to_dict()


_KINDS = {"fractional": Fractional, "log": LogKernel, "expsum": ExpSum,
          "damped_fractional": DampedFractional}


def kernel_from_dict(obj: dict) -> KernelSpec:
    try:
        kind = obj["kind"]
        params = dict(obj.get("params", {}))
    except (KeyError, TypeError) as exc:
        raise UsageError(f"kernel object needs 'kind' and 'params': {obj!r}") from exc
    if kind not in _KINDS:
        raise UsageError(f"unknown kernel kind {kind!r}; expected one of {sorted(_KINDS)}")
    try:
        if kind == "fractional":
            return Fractional(params["alpha"])
        if kind == "log":
            return LogKernel(params.get("alpha", 0.99), params.get("gamma", 0.49))
        if kind == "expsum":
            return ExpSum(tuple(params["coefficients"]), tuple(params["rates"]))
        return DampedFractional(params["alpha"], params["rate"])
    except KeyError as exc:
        raise UsageError(f"kernel {kind!r} is missing parameter {exc.args[0]!r}") from exc


def kernel_to_json(spec: KernelSpec) -> str:
    return json.dumps(spec.to_dict(), sort_keys=True)


def kernel_from_json(text: str) -> KernelSpec:
    return kernel_from_dict(json.loads(text))


@dataclass(frozen=True)
class CellIntegrals:
    """Per-cell integrals of K on the cells ``((m-1)dt, m dt]``, m = 1..n.

    ``m0[m-1] = int K``; ``upper[m-1] = int K(r) (r - (m-1)dt)/dt dr`` and
    ``lower = m0 - upper`` are the hat-function weights for a co-factor that is
    linear on the cell; ``sq[m-1] = int K^2``.
    """

    dt: float
    m0: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    sq: np.ndarray


def cell_integrals(spec: KernelSpec, dt: float, n: int) -> CellIntegrals:
    if dt <= 0:
        raise DomainError("grid step must be positive")
    n = int(n)
    m0 = np.empty(n)
    up = np.empty(n)
    sq = np.empty(n)
    f0, f1, f2 = spec.first_cell(dt)
    m0[0], up[0], sq[0] = f0, f1 / dt, f2
    if n > 1:
        left = np.arange(1, n) * dt
        r = left[:, None] + 0.5 * dt * (1.0 + _GL_X)
        k = spec._eval(r)
        w = 0.5 * dt * _GL_W
        m0[1:] = k @ w
        up[1:] = (k * (0.5 * (1.0 + _GL_X))) @ w
        sq[1:] = (k * k) @ w
    return CellIntegrals(dt=float(dt), m0=m0, upper=up, lower=m0 - up, sq=sq)


# ---------------------------------------------------------------------------
# resolvent of the first kind
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FirstKindResolvent:
    """Discretized resolvent of the first kind ``L = atom * delta_0 + L0 ds``.

    ``masses[k-1] = L((t_{k-1}, t_k])`` for k = 1..n.

    ``rule`` records how the masses were obtained:

    * ``"product"`` -- masses of the continuous resolvent (analytic for the
      fractional kernel, product-integration deconvolution otherwise).
    * ``"euler"``   -- discrete inverse of the right-endpoint kernel samples
      ``K(m dt)`` used by the Euler scheme, so that the Z transform of an
      Euler path returns its driving increments exactly.
    """

    kernel: KernelSpec
    atom: float
    masses: np.ndarray
    grid_step: float
    rule: str = "product"
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.masses.shape[0]

    @property
    def horizon(self) -> float:
        return self.n * self.grid_step

    def times(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.grid_step

    def cumulative(self) -> np.ndarray:
        """L((0, t_k]) for k = 0..n (atom excluded)."""
        return np.concatenate([[0.0], np.cumsum(self.masses)])


def _check_masses(masses: np.ndarray) -> np.ndarray:
    worst = float(masses.min()) if masses.size else 0.0
    if worst < -NEGATIVE_MASS_TOL:
        k = int(np.argmin(masses))
        raise NumericalError(
            f"first-kind resolvent produced negative mass {worst:.3e} in cell {k + 1}; "
            "the discretization violates complete monotonicity")
    return np.where(masses < 0, 0.0, masses)


def first_kind_resolvent(spec: KernelSpec, grid_step: float, horizon: float,
                         rule: str = "product") -> FirstKindResolvent:
    dt = float(grid_step)
    if not dt > 0:
        raise DomainError("grid step must be positive")
    if horizon < dt * (1 - 1e-12):
        raise DomainError("horizon must be at least one grid step")
    n = int(round(horizon / dt))
    t = np.arange(1, n + 1) * dt

    if rule == "euler":
        masses = _loops.toeplitz_solve(spec(t), np.ones(n))
        return FirstKindResolvent(spec, 0.0, _check_masses(masses), dt, "euler")
    if rule != "product":
        raise UsageError(f"unknown resolvent rule {rule!r}")

    atom = 0.0 if spec.singular else 1.0 / spec.k_zero_plus
    if isinstance(spec, Fractional):
        a = spec.alpha
        if a == 1.0:
            masses = np.zeros(n)
        else:
            edges = np.arange(n + 1) * dt
            masses = np.diff(edges ** (1.0 - a)) / special.gamma(2.0 - a)
        return FirstKindResolvent(spec, atom, masses, dt, "product", {"method": "analytic"})

    ci = cell_integrals(spec, dt, n)
    rhs = 1.0 - atom * spec(t)
    masses = _loops.toeplitz_solve(ci.m0 / dt, rhs)
    return FirstKindResolvent(spec, atom, _check_masses(masses), dt, "product",
                              {"method": "deconvolution"})


def _jacobi(n, a, b):
    # a + b near -1 trips a harmless 0/0 inside scipy's recurrence setup
    with np.errstate(invalid="ignore", divide="ignore"):
        return special.roots_jacobi(n, a, b)


def _fractional_pair_integral(alpha, tk, lo, hi, n_nodes=24):
    """int_lo^hi K(tk - s) L0(s) ds for the fractional kernel, by Gauss-Jacobi.

    Independent of the closed-form masses: it integrates the density
    s^-alpha / Gamma(1-alpha) against the kernel cell by cell.
    """
    if alpha == 1.0:
        # the density vanishes; the resolvent is the unit atom
        return 0.0
    c = 1.0 / (special.gamma(alpha) * special.gamma(1.0 - alpha))
    total = 0.0
    n_cells = lo.shape[0]
    # generic cells
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    s = mid[:, None] + half[:, None] * x
    inner = slice(1, n_cells - 1)
    if n_cells > 2:
        vals = (tk - s[inner]) ** (alpha - 1.0) * s[inner] ** (-alpha)
        total += float(np.sum((vals @ w) * half[inner]))
    if n_cells == 1:
        # (tk - s)^(alpha-1) s^(-alpha) on (0, tk): weight (1-x)^(alpha-1) (1+x)^(-alpha)
        # the powers of the half-width cancel
        _, wj = _jacobi(n_nodes, alpha - 1.0, -alpha)
        return c * float(np.sum(wj))
    # first cell: singular s^-alpha at lo = 0
    xj, wj = _jacobi(n_nodes, 0.0, -alpha)
    sj = mid[0] + half[0] * xj
    total += float(np.sum(wj * (tk - sj) ** (alpha - 1.0))) * half[0] ** (1.0 - alpha)
    # last cell: singular (tk - s)^(alpha-1) at hi = tk
    xj, wj = _jacobi(n_nodes, alpha - 1.0, 0.0)
    sj = mid[-1] + half[-1] * xj
    total += float(np.sum(wj * sj ** (-alpha))) * half[-1] ** alpha
    return c * total


def identity_residual(res: FirstKindResolvent, points=None) -> np.ndarray:
    """Evaluate ``(K * L)(t_k) - 1`` independently of how the masses were built.

    For lag-invariant rules (deconvolved masses, Euler rule) all grid points are
    covered by one FFT convolution of the masses with the cell weights.  The
    analytic fractional resolvent is checked by Gauss-Jacobi integration of its
    density against the kernel at the grid indices ``points`` (default: the
    first 40 points plus 80 log-spaced ones).
    """
    from scipy.signal import fftconvolve

    spec, dt, n = res.kernel, res.grid_step, res.n
    t = np.arange(1, n + 1) * dt
    if res.rule == "euler":
        conv = fftconvolve(spec(t), res.masses)[:n]
        return conv - 1.0
    if res.meta.get("method") == "analytic":
        a = spec.alpha
        if a == 1.0:
            return res.atom * spec(t) - 1.0
        if points is None:
            points = np.unique(np.concatenate([
                np.arange(1, min(n, 40) + 1),
                np.unique(np.geomspace(1, n, 80).round().astype(int))]))
        points = np.asarray(points, dtype=int)
        out = np.empty(points.shape[0])
        for i, k in enumerate(points):
            edges = np.arange(k + 1) * dt
            out[i] = res.atom * spec(k * dt) + _fractional_pair_integral(a, k * dt, edges[:-1], edges[1:]) - 1.0
        return out
    ci = cell_integrals(spec, dt, n)
    conv = fftconvolve(ci.m0 / dt, res.masses)[:n]
    return res.atom * spec(t) + conv - 1.0


@dataclass
class GrowthReport:
    times: np.ndarray
    cumulative: np.ndarray
    ratio_inverse_kernel: np.ndarray
    ratio_power: np.ndarray | None
    violations: int

    @property
    def ok(self) -> bool:
        return self.violations == 0


def resolvent_growth_check(spec: KernelSpec, res: FirstKindResolvent, t_min: float = 1.0,
                           tol: float = 1e-9) -> GrowthReport:
    """Compare L((0,t]) with the bounds 1/K(t) and, for fractional kernels, t^(1-alpha)."""
    t = res.times()
    cum = res.cumulative()
    sel = t >= t_min * (1 - 1e-12)
    if not np.any(sel):
        raise UsageError("resolvent grid must reach t >= t_min")
    ts, cs = t[sel], cum[sel]
    ratio = cs * spec(ts)
    power = None
    if isinstance(spec, Fractional) and spec.alpha < 1.0:
        power = cs / ts ** (1.0 - spec.alpha)
    return GrowthReport(ts, cs, ratio, power, int(np.sum(ratio > 1.0 + tol)))
