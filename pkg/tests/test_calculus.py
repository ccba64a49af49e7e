import math

import numpy as np
import pytest
from scipy import integrate, special

from vouest.calculus import (PathOnGrid, c_alpha, e_beta_integral_target, e_beta_tail_integrals,
                             gamma_transform, gamma_values, solve_second_kind, stationary_mean,
                             stationary_moments, z_transform, z_values)
from vouest.errors import DomainError, UsageError
from vouest.kernels import ExpSum, Fractional, bundled_kernels, constant_kernel, first_kind_resolvent
from vouest.oracles import fractional_e_beta, fractional_integral_identity


def test_constant_kernel_e_beta_is_exponential():
    res = solve_second_kind(constant_kernel(), -1.0, 1e-3, 5.0)
    t = res.times()
    assert np.max(np.abs(res.values - np.exp(-t))) <= 1e-4


@pytest.mark.parametrize("alpha", [0.6, 0.75, 0.9])
def test_fractional_e_beta_against_mittag_leffler(alpha):
    res = solve_second_kind(Fractional(alpha), -1.0, 1e-3, 2.0)
    t = res.times()[10:]
    ref = fractional_e_beta(t, alpha, -1.0)
    assert np.max(np.abs(res.values[10:] / ref - 1.0)) <= 1e-3


def test_mittag_leffler_oracle_special_cases():
    from vouest.oracles import mittag_leffler

    z = np.linspace(-2.0, 2.0, 11)
    np.testing.assert_allclose(mittag_leffler(z, 1.0, 1.0), np.exp(z), rtol=1e-13)
    np.testing.assert_allclose(mittag_leffler(-z * z, 2.0, 1.0), np.cos(z), atol=1e-12)


@pytest.mark.parametrize("beta", [-0.5, -1.0, -2.0])
@pytest.mark.parametrize("k", bundled_kernels(), ids=lambda k: k.describe())
def test_second_kind_residual(k, beta):
    res = solve_second_kind(k, beta, 1e-2, 10.0)
    assert np.max(np.abs(res.residual())) <= 1e-8


@pytest.mark.parametrize("k", bundled_kernels(), ids=lambda k: k.describe())
def test_monotone_in_beta(k):
    e = [solve_second_kind(k, b, 1e-2, 10.0).values[1:] for b in (-2.0, -1.0, -0.5)]
    assert np.all(e[0] <= e[1] + 1e-12)
    assert np.all(e[1] <= e[2] + 1e-12)


def test_singular_kernel_e_beta_tracks_kernel_near_zero():
    k = Fractional(0.75)
    res = solve_second_kind(k, -1.0, 1e-4, 0.01)
    t = res.times()[1:]
    # 0 <= K - E = |beta| K*E <= |beta| K*K, which vanishes at 0 while K blows up
    gap = k(t) - res.values[1:]
    assert np.all(gap >= 0)
    assert np.all(gap <= k.self_convolution(t) * (1 + 1e-6))
    assert res.values[1] > 0.99 * k(1e-4)


def test_nonnegative_beta_rejected():
    with pytest.raises(DomainError):
        solve_second_kind(Fractional(0.75), 0.0, 0.01, 1.0)


def test_integral_targets():
    assert e_beta_integral_target(constant_kernel(), -1.0) == 1.0
    assert e_beta_integral_target(ExpSum((1.0, 2.0), (1.0, 2.0)), -1.0) == pytest.approx(2.0 / 3.0)


def test_integral_constant_kernel():
    res = solve_second_kind(constant_kernel(), -1.0, 1e-3, 40.0)
    i1, i2 = e_beta_tail_integrals(res)
    assert i1 == pytest.approx(1.0, abs=1e-6)
    assert i2 == pytest.approx(0.5, abs=1e-6)


def test_integral_expsum():
    res = solve_second_kind(ExpSum((1.0, 2.0), (1.0, 2.0)), -1.0, 1e-3, 60.0)
    i1, _ = e_beta_tail_integrals(res)
    assert i1 == pytest.approx(2.0 / 3.0, abs=1e-4)


def test_integral_fractional_with_extrapolation():
    res = solve_second_kind(Fractional(0.75), -1.0, 1e-2, 200.0)
    i1, _ = e_beta_tail_integrals(res, extrapolate=True)
    assert i1 == pytest.approx(1.0, rel=2e-2)


def test_c_alpha_limit_and_quadrature():
    assert c_alpha(1.0) == pytest.approx(0.5, abs=1e-12)
    a = 0.75
    f = lambda u: 1.0 / (1.0 + 2.0 * u ** a * math.cos(math.pi * a / 2) + u ** (2 * a))
    ref = (integrate.quad(f, 0, 1, epsabs=0, epsrel=1e-13)[0]
           + integrate.quad(f, 1, np.inf, epsabs=0, epsrel=1e-13)[0]) / math.pi
    assert c_alpha(a) == pytest.approx(ref, rel=1e-8)
    with pytest.raises(DomainError):
        c_alpha(0.5)


@pytest.mark.parametrize("alpha,tol", [(0.75, 1e-2), (0.55, 2e-2)])
def test_c_alpha_against_e_beta_square_integral(alpha, tol):
    res = solve_second_kind(Fractional(alpha), -1.0, 1e-2, 400.0)
    _, i2 = e_beta_tail_integrals(res, extrapolate=True)
    assert i2 == pytest.approx(c_alpha(alpha), rel=tol)


@pytest.mark.parametrize("beta", [-0.5, -2.0])
def test_variance_closed_form_vs_grid(beta):
    k = Fractional(0.8)
    closed = stationary_moments(k, 1.2, beta, 0.3)
    res = solve_second_kind(k, beta, 1e-2, 400.0)
    _, i2 = e_beta_tail_integrals(res, extrapolate=True)
    assert closed.m_var == pytest.approx(0.09 * i2, rel=1e-2)


def test_stationary_moments_reference_point():
    m = stationary_moments(Fractional(0.75), 1.2, -1.0, 0.3, x0=1.0)
    assert m.m1 == pytest.approx(1.2)
    assert m.m_var == pytest.approx(c_alpha(0.75) * 0.09)
    assert m.m2 == pytest.approx(1.44 + m.m_var)


def test_stationary_mean_finite_norm():
    assert stationary_mean(ExpSum((1.0,), (1.0,)), 0.0, -1.0, x0=1.0) == pytest.approx(0.5)


def test_stationary_moments_expsum_grid():
    k = ExpSum((1.0,), (1.0,))
    m = stationary_moments(k, 0.0, -1.0, 0.3, x0=1.0)
    # E(t) = exp(-2t) for K = exp(-t), beta = -1, so int E^2 = 1/4
    assert m.m_var == pytest.approx(0.09 / 4.0, rel=1e-4)


def test_z_constant_kernel_is_increment():
    x = np.array([1.0, 1.3, 0.7, 2.0])
    L = first_kind_resolvent(constant_kernel(), 0.1, 0.3)
    z = z_transform(PathOnGrid(x, 0.1, 1.0), L)
    np.testing.assert_allclose(z.values, x - 1.0, atol=1e-15)


def test_z_of_constant_path_is_zero():
    L = first_kind_resolvent(Fractional(0.75), 0.1, 2.0)
    z = z_values(np.full(21, 0.4), 0.4, L)
    assert np.all(z == 0.0)


def test_z_of_identity_path():
    dt = 1e-3
    t = np.arange(0, 2001) * dt
    L = first_kind_resolvent(Fractional(0.75), dt, 2.0)
    z = z_values(t, 0.0, L)
    ref = t ** 1.25 / (1.25 * 0.25 * special.gamma(0.25))
    np.testing.assert_allclose(ref, fractional_integral_identity(t, 0.75), rtol=1e-14)
    assert np.max(np.abs(z - ref)) <= dt ** 0.25


def test_z_grid_mismatch():
    L = first_kind_resolvent(Fractional(0.75), 0.1, 2.0)
    with pytest.raises(UsageError):
        z_transform(PathOnGrid(np.zeros(11), 0.2, 0.0), L)


def test_gamma_constant_kernel_identity():
    z = np.array([0.0, 0.3, -0.2, 1.0])
    np.testing.assert_allclose(gamma_values(z, constant_kernel(), 0.1), z, atol=1e-15)


def test_gamma_of_zero():
    assert np.all(gamma_values(np.zeros(50), Fractional(0.75), 0.1) == 0.0)


def test_gamma_requires_zero_start():
    with pytest.raises(UsageError):
        gamma_transform(PathOnGrid(np.ones(5), 0.1, 1.0), Fractional(0.75))


def _gamma_by_parts(z, k, dt):
    # K(t) z_t + int_0^t K'(t-s)(z_s - z_t) ds with z piecewise linear, via scipy quad
    t_grid = np.arange(len(z)) * dt
    out = np.zeros(len(z))
    for j in range(1, len(z)):
        t = t_grid[j]
        f = lambda s: k.derivative(t - s) * (np.interp(s, t_grid, z) - z[j])
        val = sum(integrate.quad(f, t_grid[i], t_grid[i + 1], epsabs=0, epsrel=1e-10, limit=200)[0]
                  for i in range(j))
        out[j] = k(t) * z[j] + val
    return out


def test_gamma_matches_derivative_form():
    k = Fractional(0.75)
    dt = 0.05
    t = np.arange(0, 21) * dt
    z = np.sin(2 * t) + t * t
    np.testing.assert_allclose(gamma_values(z, k, dt), _gamma_by_parts(z, k, dt), rtol=1e-6, atol=1e-8)


def _round_trip_error(dt, k=Fractional(0.75)):
    n = int(round(1.0 / dt))
    t = np.arange(n + 1) * dt
    x = np.sin(t) + 1.0
    L = first_kind_resolvent(k, dt, n * dt)
    z = z_values(x, 1.0, L)
    return np.max(np.abs(gamma_values(z, k, dt) - (x - 1.0)))


def test_round_trip_gamma_of_z():
    errs = [_round_trip_error(dt) for dt in (4e-3, 2e-3, 1e-3)]
    assert errs[-1] <= 1e-2
    slope = np.polyfit(np.log([4e-3, 2e-3, 1e-3]), np.log(errs), 1)[0]
    assert slope >= 0.8 * 0.25


def test_round_trip_z_of_gamma():
    k = Fractional(0.75)
    dt = 1e-3
    t = np.arange(1001) * dt
    z = t * np.cos(t)
    L = first_kind_resolvent(k, dt, 1.0)
    back = z_values(gamma_values(z, k, dt), 0.0, L)
    assert np.max(np.abs(back - z)) <= 1e-2


def test_second_kind_csv(tmp_path):
    res = solve_second_kind(ExpSum((1.0,), (1.0,)), -1.0, 0.1, 1.0)
    p = tmp_path / "e.csv"
    res.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "t,E_beta"
    assert len(lines) == res.n + 2
