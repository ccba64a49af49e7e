import math

import numpy as np
import pytest
from scipy import integrate, special

from vouest.errors import DomainError, NumericalError
from vouest.kernels import (DampedFractional, ExpSum, Fractional, LogKernel, bundled_kernels,
                            cell_integrals, constant_kernel, eval_kernel, eval_kernel_derivative,
                            first_kind_resolvent, identity_residual, kernel_from_dict,
                            kernel_from_json, kernel_to_json, l1_norm, resolvent_growth_check)


def test_constant_kernel_value():
    assert eval_kernel(Fractional(1.0), 7.3) == 1.0


def test_fractional_value_at_one():
    assert eval_kernel(Fractional(0.75), 1.0) == pytest.approx(1.0 / math.gamma(0.75), rel=1e-14)
    assert eval_kernel(Fractional(0.75), 1.0) == pytest.approx(0.8160489390, rel=1e-9)


def test_expsum_value_at_zero_plus():
    k = ExpSum((1.0, 2.0), (1.0, 2.0))
    assert k.k_zero_plus == 3.0
    assert k(1e-14) == pytest.approx(3.0, rel=1e-12)


def test_derivatives():
    assert eval_kernel_derivative(Fractional(1.0), 2.0) == 0.0
    assert eval_kernel_derivative(Fractional(0.75), 1.0) == pytest.approx(-0.25 / math.gamma(0.75), rel=1e-14)
    assert eval_kernel_derivative(ExpSum((1.0,), (2.0,)), 0.5) == pytest.approx(-2.0 * math.exp(-1.0), rel=1e-14)


@pytest.mark.parametrize("k", bundled_kernels(), ids=lambda k: k.describe())
def test_derivative_matches_finite_difference(k):
    t = np.array([0.3, 1.0, 4.0])
    h = 1e-6 * t
    fd = (k(t + h) - k(t - h)) / (2 * h)
    np.testing.assert_allclose(k.derivative(t), fd, rtol=1e-6)


@pytest.mark.parametrize("t", [0.0, -1.0])
def test_nonpositive_time_rejected(t):
    with pytest.raises(DomainError):
        Fractional(0.75)(t)
    with pytest.raises(DomainError):
        LogKernel().derivative(t)


@pytest.mark.parametrize("bad", [
    lambda: Fractional(0.5), lambda: Fractional(1.2), lambda: LogKernel(0.99, 0.5),
    lambda: ExpSum((1.0, -1.0), (1.0, 2.0)), lambda: ExpSum((1.0,), (-1.0,)),
    lambda: DampedFractional(0.75, -1.0),
])
def test_invalid_parameters(bad):
    with pytest.raises(ValueError):
        bad()


def test_l1_norms():
    assert l1_norm(Fractional(0.75)) == math.inf
    assert l1_norm(LogKernel()) == math.inf
    assert l1_norm(ExpSum((1.0, 2.0), (1.0, 2.0))) == 2.0
    assert l1_norm(ExpSum((1.0, 2.0), (0.0, 2.0))) == math.inf
    assert l1_norm(DampedFractional(0.75, 1.0)) == pytest.approx(1.0, rel=1e-14)
    val, _ = integrate.quad(lambda t: DampedFractional(0.75, 2.0)(t), 0, np.inf)
    assert l1_norm(DampedFractional(0.75, 2.0)) == pytest.approx(val, rel=1e-7)


@pytest.mark.parametrize("k", bundled_kernels(), ids=lambda k: k.describe())
def test_complete_monotonicity_spot_check(k):
    t = np.geomspace(1e-4, 50.0, 400)
    v = k(t)
    assert np.all(v >= 0)
    assert np.all(np.diff(v) <= 0)
    assert np.all(k.derivative(t) <= 0)


@pytest.mark.parametrize("k", [k for k in bundled_kernels() if not isinstance(k, LogKernel)],
                         ids=lambda k: k.describe())
def test_regularity_bound_stable_under_refinement(k):
    a = k.alpha

    def sup(dt):
        t = np.arange(1, int(10 / dt) + 1) * dt
        return np.max(t ** (1 - a) * k(t) + t ** (2 - a) * np.abs(k.derivative(t)))

    s1, s2 = sup(1e-3), sup(5e-4)
    assert np.isfinite(s1)
    assert abs(s2 - s1) / s1 < 1e-2


def test_log_kernel_regularity_bound_finite():
    # t^(1-a) log(1/t) peaks at t = exp(-1/(1-a)), far below any grid, so check the analytic sup
    k = LogKernel()
    a = k.alpha
    t = np.geomspace(1e-300, 1e3, 20000)
    vals = t ** (1 - a) * k(t) + t ** (2 - a) * np.abs(k.derivative(t))
    assert np.max(vals) <= 1.0 / ((1 - a) * math.e) + 2.0


@pytest.mark.parametrize("k", bundled_kernels(), ids=lambda k: k.describe())
def test_json_round_trip(k):
    assert kernel_from_json(kernel_to_json(k)) == k
    assert kernel_from_dict(k.to_dict()) == k


def test_json_errors_name_the_problem():
    with pytest.raises(ValueError, match="kind"):
        kernel_from_dict({"kind": "gaussian", "params": {}})
    with pytest.raises(ValueError):
        kernel_from_dict({"kind": "fractional", "params": {"alpha": 0.3}})


@pytest.mark.parametrize("k", bundled_kernels(), ids=lambda k: k.describe())
def test_cell_integrals_against_quad(k):
    dt, n = 0.05, 12
    c = cell_integrals(k, dt, n)
    for m in range(n):
        lo, hi = m * dt, (m + 1) * dt
        opts = dict(epsabs=0, epsrel=1e-12, limit=200)
        ref0, _ = integrate.quad(lambda r: k(r), lo, hi, **opts)
        ref1, _ = integrate.quad(lambda r: k(r) * (r - lo) / dt, lo, hi, **opts)
        ref2, _ = integrate.quad(lambda r: k(r) ** 2, lo, hi, **opts)
        assert c.m0[m] == pytest.approx(ref0, rel=1e-9)
        assert c.upper[m] == pytest.approx(ref1, rel=1e-9)
        assert c.sq[m] == pytest.approx(ref2, rel=1e-8)
    np.testing.assert_allclose(c.lower, c.m0 - c.upper)


@pytest.mark.parametrize("k", bundled_kernels(), ids=lambda k: k.describe())
def test_self_convolution_against_quad(k):
    for t in (0.1, 1.0, 3.0):
        ref, _ = integrate.quad(lambda s: k(t - s) * k(s), 0, t, epsabs=0, epsrel=1e-11, limit=400,
                                points=[t / 2])
        assert k.self_convolution(t) == pytest.approx(ref, rel=1e-7)


def test_constant_kernel_resolvent_is_unit_atom():
    for k in (constant_kernel(), ExpSum((1.0,), (0.0,))):
        L = first_kind_resolvent(k, 0.01, 1.0)
        assert L.atom == pytest.approx(1.0)
        assert np.all(L.masses == 0.0)


def test_fractional_resolvent_cumulative_mass():
    L = first_kind_resolvent(Fractional(0.75), 1e-3, 1.0)
    assert L.atom == 0.0
    assert L.cumulative()[-1] == pytest.approx(1.0 / special.gamma(1.25), rel=1e-12)
    assert L.cumulative()[-1] == pytest.approx(1.103262, abs=1e-6)


def test_expsum_resolvent_atom():
    L = first_kind_resolvent(ExpSum((1.0, 2.0), (1.0, 2.0)), 0.01, 2.0)
    assert L.atom == pytest.approx(1.0 / 3.0)


@pytest.mark.parametrize("k", bundled_kernels(), ids=lambda k: k.describe())
def test_identity_coarse_grid(k):
    L = first_kind_resolvent(k, 1e-2, 3.0)
    assert np.max(np.abs(identity_residual(L))) <= 1e-6
    assert np.all(L.masses >= 0)


def test_log_kernel_identity_by_direct_convolution():
    # independent check: convolve the masses with cell integrals computed by scipy quad
    k = LogKernel()
    dt, T = 0.05, 1.0
    L = first_kind_resolvent(k, dt, T)
    n = L.n
    for j in (1, n // 2, n):
        t = j * dt
        total = L.atom * k(t)
        for i, mass in enumerate(L.masses[:j]):
            lo, hi = i * dt, (i + 1) * dt
            avg, _ = integrate.quad(lambda s: k(t - s), lo, hi, epsabs=0, epsrel=1e-12, limit=200)
            total += mass * avg / dt
        assert total == pytest.approx(1.0, abs=1e-6)


def test_euler_rule_resolvent_identity():
    k = Fractional(0.75)
    dt = 0.1
    L = first_kind_resolvent(k, dt, 5.0, rule="euler")
    kv = k(np.arange(1, L.n + 1) * dt)
    conv = np.convolve(kv, L.masses)[: L.n]
    np.testing.assert_allclose(conv, 1.0, atol=1e-12)


@pytest.mark.parametrize("step", [0.0, -0.1])
def test_nonpositive_step_rejected(step):
    with pytest.raises(DomainError):
        first_kind_resolvent(Fractional(0.75), step, 1.0)


def test_growth_fractional_ratio_constant():
    k = Fractional(0.75)
    L = first_kind_resolvent(k, 1e-2, 10.0)
    rep = resolvent_growth_check(k, L)
    np.testing.assert_allclose(rep.ratio_power, 1.0 / special.gamma(1.25), rtol=1e-10)
    assert rep.ok


def test_growth_constant_kernel_zero():
    L = first_kind_resolvent(constant_kernel(), 1e-2, 10.0)
    rep = resolvent_growth_check(constant_kernel(), L)
    assert np.all(rep.ratio_inverse_kernel == 0.0)
    assert rep.ok


@pytest.mark.parametrize("k", bundled_kernels(), ids=lambda k: k.describe())
def test_growth_inverse_kernel_bound(k):
    L = first_kind_resolvent(k, 1e-2, 10.0)
    rep = resolvent_growth_check(k, L, t_min=1e-2)
    assert rep.ok
    assert np.all(rep.ratio_inverse_kernel <= 1.0 + 1e-9)


def test_negative_mass_detected():
    # a kernel that increases is not completely monotone; its deconvolution goes negative
    class Rising(ExpSum):
        def _eval(self, t):
            return 1.0 + t

    with pytest.raises(NumericalError):
        first_kind_resolvent(Rising((1.0,), (1.0,)), 0.1, 5.0)
