import math

import numpy as np
import pytest
from scipy import integrate

from stochwishart import quadrature as q
from stochwishart._backend import HAVE_NUMBA


def test_gk_rule_is_exact_for_degree_22_and_gauss_for_13():
    x = q.NODES
    for deg in range(0, 23):
        exact = (1 - (-1) ** (deg + 1)) / (deg + 1)
        assert math.isclose(np.dot(q.KRONROD_WEIGHTS, x**deg), exact, abs_tol=1e-14)
        if deg <= 13:
            assert math.isclose(np.dot(q.GAUSS_WEIGHTS, x**deg), exact, abs_tol=1e-14)


def test_adaptive_smooth_integrals():
    value, err = q.adaptive_gk(np.exp, 0.0, 1.0, 1e-12)
    assert abs(value - (math.e - 1)) < 1e-12
    value, _ = q.adaptive_gk(lambda x: np.sin(x) ** 2, 0.0, math.pi, 1e-12)
    assert abs(value - math.pi / 2) < 1e-12


def test_adaptive_log_singularity():
    # int_0^1 log(x) dx = -1, integrable endpoint singularity
    f = lambda x: np.where(x > 0, np.log(np.where(x > 0, x, 1.0)), 0.0)
    value, _ = q.adaptive_gk(f, 0.0, 1.0, 1e-10)
    assert abs(value + 1) < 1e-10


def test_breakpoint_interior_singularity():
    f = lambda x: np.log(np.abs(x - 0.3) + (x == 0.3))
    exact = 0.3 * math.log(0.3) - 0.3 + 0.7 * math.log(0.7) - 0.7
    value, _ = q.adaptive_gk(f, 0.0, 1.0, 1e-10, breakpoints=(0.3,))
    assert abs(value - exact) < 1e-10


def test_budget_exhaustion_raises():
    with pytest.raises(q.QuadratureError):
        q.adaptive_gk(lambda x: np.sin(1.0 / (x + 1e-3)), 0.0, 1.0, 1e-14, max_refinements=5)
    with pytest.raises(ValueError):
        q.adaptive_gk(np.exp, 0.0, 1.0, 0.0)


def test_log_ratio_kernel_closed_form():
    phi_i, phi_j, a = 0.7, 1.9, 0.4
    direct = math.log(abs(1 - a * np.exp(1j * (phi_i + phi_j))) / abs(1 - a * np.exp(1j * (phi_i - phi_j))))
    assert math.isclose(q.log_ratio_kernel(phi_i, phi_j, a), direct, rel_tol=1e-13)
    # singular point is masked rather than producing inf
    assert q.log_ratio_kernel(1.0, 1.0, 1.0) == 0.0


@pytest.mark.parametrize("a", [0.3, 0.9, 1.0])
@pytest.mark.parametrize("power", [1, 3])
def test_inner_matches_scipy(a, power):
    big_a, r = 3.0, math.sqrt(2.0)
    phis = np.array([0.2, 1.1, 2.9])
    ours = q.log_kernel_inner(phis, a, big_a, r, power, 1e-11, backend="numpy")
    for phi_i, val in zip(phis, ours):
        f = lambda t: (big_a + 2 * r * math.cos(t)) ** (power - 1) * math.sin(t) * float(q.log_ratio_kernel(phi_i, t, a))
        ref, _ = integrate.quad(f, 0, math.pi, points=[phi_i], epsabs=1e-12, limit=500)
        assert abs(val - ref) < 1e-9


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")
@pytest.mark.parametrize("a", [0.5, 1.0])
def test_inner_backends_agree(a):
    phis = np.linspace(0.05, 3.1, 7)
    x = q.log_kernel_inner(phis, a, 3.0, math.sqrt(2.0), 2, 1e-10, backend="numpy")
    y = q.log_kernel_inner(phis, a, 3.0, math.sqrt(2.0), 2, 1e-10, backend="numba")
    np.testing.assert_allclose(x, y, rtol=0, atol=1e-12)


@pytest.mark.parametrize("backend", ["numpy"] + (["numba"] if HAVE_NUMBA else []))
def test_inner_budget_error(backend):
    with pytest.raises(q.QuadratureError):
        q.log_kernel_inner([1.0], 1.0, 3.0, 1.0, 1, 1e-15, max_refinements=2, backend=backend)
