"""Independent reference implementations used by the test suite.

Nothing here is on the main computational path.
"""

import math

import numpy as np
from scipy import special


def mittag_leffler(z, a: float, b: float, tol: float = 1e-16, max_terms: int = 2000):
    """Two-parameter Mittag-Leffler function by its power series (|z| <= 4)."""
    z = np.asarray(z, dtype=np.float64)
    if np.any(np.abs(z) > 4.0 + 1e-12):
        raise ValueError("power series oracle is limited to |z| <= 4")
    total = np.zeros_like(z)
    zk = np.ones_like(z)
    for k in range(max_terms):
        term = zk / special.gamma(a * k + b)
        total = total + term
        if k > 5 and np.all(np.abs(term) < tol * np.maximum(1.0, np.abs(total))):
            break
        zk = zk * z
    return total


def fractional_e_beta(t, alpha: float, beta: float):
    """E_beta(t) = t^(alpha-1) E_{alpha,alpha}(beta t^alpha) for the fractional kernel."""
    t = np.asarray(t, dtype=np.float64)
    return t ** (alpha - 1.0) * mittag_leffler(beta * t ** alpha, alpha, alpha)


def ou_mle(x, dt: float):
    """Textbook discrete MLE for dX = (b + beta X) dt + sigma dW.

    Weighted least squares of the increments on (1, X_left); the weight
    sqrt(dt) makes the normal equations coincide with the Ito-sum likelihood.
    """
    x = np.asarray(x, dtype=np.float64)
    dx = np.diff(x)
    xl = x[:-1]
    s = math.sqrt(dt)
    design = np.column_stack([np.full_like(xl, s), xl * s])
    coef, *_ = np.linalg.lstsq(design, dx / s, rcond=None)
    return float(coef[0]), float(coef[1])


def ou_known_beta(x, dt: float, beta: float) -> float:
    x = np.asarray(x, dtype=np.float64)
    T = dt * (x.shape[0] - 1)
    return float((x[-1] - x[0] - beta * dt * np.sum(x[:-1])) / T)


def ou_known_b(x, dt: float, b: float) -> float:
    x = np.asarray(x, dtype=np.float64)
    xl = x[:-1]
    return float((np.dot(xl, np.diff(x)) - b * dt * np.sum(xl)) / (dt * np.dot(xl, xl)))


def ou_covariance(s, t, beta: float, sigma: float):
    """Cov(X_s, X_t) of the classical OU process started at a deterministic point."""
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    lam = -beta
    lo = np.minimum(s, t)
    return sigma ** 2 * np.exp(-lam * np.abs(t - s)) * (-np.expm1(-2.0 * lam * lo)) / (2.0 * lam)


def fractional_integral_identity(t, alpha: float):
    """Z_t for the path X_t = t under the fractional kernel: t^(2-a) / Gamma(3-a)."""
    t = np.asarray(t, dtype=np.float64)
    return t ** (2.0 - alpha) / special.gamma(3.0 - alpha)
