"""Adaptive Gauss-Kronrod (7/15) quadrature with a hard refinement budget.

The generic integrator :func:`adaptive_gk` is globally adaptive: it keeps
bisecting the panel with the largest ``|K15 - G7|`` until the summed estimate
meets the tolerance.  Panels whose estimate is at roundoff level, or which are
too narrow to split, are settled.  The kernel :func:`log_kernel_inner`
integrates the log-ratio kernel of the semicircle covariance formula over the
second angle, with the interval split at the point where the kernel can be
singular.  It exists in a numba and a numpy flavour.
"""

import heapq
import math

import numpy as np

from . import _backend


class QuadratureError(ArithmeticError):
    """Adaptive refinement exhausted its budget before meeting the tolerance."""


# 15-point Kronrod abscissae on [-1, 1] (non-negative half, descending) and weights.
XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
# 7-point Gauss weights; Gauss nodes are XGK[1], XGK[3], XGK[5], XGK[7].
WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

NODES = np.concatenate([-XGK[:-1], XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([WGK[:-1], WGK[::-1]])
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[[1, 3, 5]] = WG[:3]
GAUSS_WEIGHTS[[13, 11, 9]] = WG[:3]
GAUSS_WEIGHTS[7] = WG[3]

_EPS = np.finfo(float).eps
_ROUNDOFF = 50.0 * _EPS


def gk15(f, a, b):
    """One Gauss-Kronrod panel: ``(kronrod, |kronrod - gauss|, integral of |f|)``.

    ``f`` must accept and return numpy arrays.
    """
    half = 0.5 * (b - a)
    center = 0.5 * (a + b)
    fx = np.asarray(f(center + half * NODES), dtype=float)
    k = half * np.dot(KRONROD_WEIGHTS, fx)
    g = half * np.dot(GAUSS_WEIGHTS, fx)
    return k, abs(k - g), abs(half) * np.dot(KRONROD_WEIGHTS, np.abs(fx))


def _converged(err, absval, lo, hi):
    # below roundoff, or the panel cannot be bisected further
    return err <= _ROUNDOFF * absval or hi - lo <= 64 * _EPS * max(1.0, abs(lo))


def adaptive_gk(f, a, b, tol, max_refinements=2000, breakpoints=()):
    """Integrate a vectorized ``f`` over ``[a, b]`` to absolute tolerance ``tol``.

    Globally adaptive: the panel with the largest error estimate is bisected
    until the summed estimate drops below ``tol``.  Returns
    ``(value, error_estimate)``; raises :class:`QuadratureError` when more than
    ``max_refinements`` bisections would be required.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if a == b:
        return 0.0, 0.0
    edges = [a] + sorted(x for x in breakpoints if a < x < b) + [b]
    heap = []
    settled_value = 0.0
    settled_err = 0.0
    open_err = 0.0

    def push(lo, hi):
        nonlocal settled_value, settled_err, open_err
        value, err, absval = gk15(f, lo, hi)
        if _converged(err, absval, lo, hi):
            settled_value += value
            settled_err += err
        else:
            heapq.heappush(heap, (-err, lo, hi, value))
            open_err += err

    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi > lo:
            push(lo, hi)
    refinements = 0
    while heap and open_err > tol:
        refinements += 1
        if refinements > max_refinements:
            neg_err, lo, hi, _ = heap[0]
            raise QuadratureError(
                f"adaptive quadrature on [{a}, {b}] exceeded {max_refinements} refinements "
                f"(tol={tol:g}, error estimate {open_err:.3g}, worst panel [{lo:.3g}, {hi:.3g}])"
            )
        neg_err, lo, hi, _ = heapq.heappop(heap)
        open_err += neg_err
        mid = 0.5 * (lo + hi)
        push(lo, mid)
        push(mid, hi)
        if not heap:
            open_err = 0.0
    # sum open panels in position order so the result does not depend on heap layout
    total = settled_value + math.fsum(v for _, _, _, v in sorted(heap, key=lambda item: item[1]))
    return total, settled_err + max(open_err, 0.0)


# --------------------------------------------------------------------------
# log-ratio kernel
# --------------------------------------------------------------------------
#
#   K(phi_i, phi) = log |1 - a e^{i(phi_i + phi)}| - log |1 - a e^{i(phi_i - phi)}|
#
# with a = theta * r_i * r_j <= 1, and
#   |1 - a e^{i x}|^2 = (1 - a)^2 + 4 a sin^2(x / 2),
# which stays accurate as a -> 1 and x -> 0.


def log_ratio_kernel(phi_i, phi_j, a):
    """Log of ``|1 - a e^{i(phi_i+phi_j)}| / |1 - a e^{i(phi_i-phi_j)}|``."""
    base = (1.0 - a) ** 2
    plus = base + 4.0 * a * np.sin(0.5 * (phi_i + phi_j)) ** 2
    minus = base + 4.0 * a * np.sin(0.5 * (phi_i - phi_j)) ** 2
    # a node can land on the (measure-zero) singular point once panels are tiny
    singular = (plus <= 0.0) | (minus <= 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = 0.5 * (np.log(plus) - np.log(minus))
    return np.where(singular, 0.0, value)


def _inner_numpy(phi_i, a, big_a, r, pm1, tol, max_refinements):
    def g(phi):
        return (big_a + 2.0 * r * np.cos(phi)) ** pm1 * np.sin(phi) * log_ratio_kernel(phi_i, phi, a)

    value, _ = adaptive_gk(g, 0.0, math.pi, tol, max_refinements, breakpoints=(phi_i,))
    return value


@_backend.njit
def _gk15_log_panel(lo, hi, phi_i, a, big_a, r, pm1):
    xgk = (
        0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
        0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
        0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
        0.207784955007898467600689403773245, 0.0,
    )
    wgk = (
        0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
        0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
        0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
        0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
    )
    wg = (
        0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
        0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
    )
    base = (1.0 - a) * (1.0 - a)
    half = 0.5 * (hi - lo)
    center = 0.5 * (hi + lo)
    resk = 0.0
    resg = 0.0
    resabs = 0.0
    for m in range(8):
        w_k = wgk[m]
        for sign in (-1.0, 1.0):
            if m == 7 and sign > 0:
                break
            x = center + sign * half * xgk[m]
            plus = base + 4.0 * a * np.sin(0.5 * (phi_i + x)) ** 2
            minus = base + 4.0 * a * np.sin(0.5 * (phi_i - x)) ** 2
            if plus <= 0.0 or minus <= 0.0:
                fx = 0.0
            else:
                fx = (big_a + 2.0 * r * np.cos(x)) ** pm1 * np.sin(x) * 0.5 * (np.log(plus) - np.log(minus))
            resk += w_k * fx
            resabs += w_k * abs(fx)
            if m % 2 == 1:
                resg += wg[m // 2] * fx
            elif m == 7:
                resg += wg[3] * fx
    resk *= half
    resg *= half
    resabs *= half
    return resk, abs(resk - resg), resabs


@_backend.njit
def _inner_numba(phi_i, a, big_a, r, pm1, tol, max_refinements):
    # Same algorithm as adaptive_gk, specialised to the log kernel.
    eps = 2.220446049250313e-16
    roundoff = 50.0 * eps
    cap = 2 * max_refinements + 4
    los = np.empty(cap)
    his = np.empty(cap)
    vals = np.empty(cap)
    errs = np.empty(cap)
    n = 0
    settled = 0.0
    open_err = 0.0
    edges = (0.0, phi_i, np.pi) if 0.0 < phi_i < np.pi else (0.0, np.pi, np.pi)
    for e in range(2):
        lo = edges[e]
        hi = edges[e + 1]
        if hi <= lo:
            continue
        v, err, absval = _gk15_log_panel(lo, hi, phi_i, a, big_a, r, pm1)
        if err <= roundoff * absval or hi - lo <= 64 * eps * max(1.0, abs(lo)):
            settled += v
        else:
            los[n] = lo
            his[n] = hi
            vals[n] = v
            errs[n] = err
            open_err += err
            n += 1
    refinements = 0
    while n > 0 and open_err > tol:
        refinements += 1
        if refinements > max_refinements:
            return 0.0, False
        worst = 0
        for q in range(1, n):
            if errs[q] > errs[worst]:
                worst = q
        lo = los[worst]
        hi = his[worst]
        open_err -= errs[worst]
        n -= 1
        los[worst] = los[n]
        his[worst] = his[n]
        vals[worst] = vals[n]
        errs[worst] = errs[n]
        mid = 0.5 * (lo + hi)
        for side in range(2):
            plo = lo if side == 0 else mid
            phi = mid if side == 0 else hi
            v, err, absval = _gk15_log_panel(plo, phi, phi_i, a, big_a, r, pm1)
            if err <= roundoff * absval or phi - plo <= 64 * eps * max(1.0, abs(plo)):
                settled += v
            else:
                los[n] = plo
                his[n] = phi
                vals[n] = v
                errs[n] = err
                open_err += err
                n += 1
        if n == 0:
            open_err = 0.0
    total = settled
    for q in range(n):
        total += vals[q]
    return total, True


@_backend.njit
def _inner_many_numba(phis, a, big_a, r, pm1, tol, max_refinements):
    out = np.empty(phis.shape[0])
    for m in range(phis.shape[0]):
        value, ok = _inner_numba(phis[m], a, big_a, r, pm1, tol, max_refinements)
        if not ok:
            return out, m
        out[m] = value
    return out, -1


def log_kernel_inner(phis, a, big_a, r, power, tol, max_refinements=2000, backend=None):
    """Inner integrals over ``phi_j`` in ``(0, pi)`` for each outer angle in ``phis``.

    Integrand: ``(A + 2 r cos phi_j)^(power-1) * sin(phi_j) * K(phi_i, phi_j)``.
    """
    phis = np.atleast_1d(np.asarray(phis, dtype=float))
    pm1 = float(power - 1)
    if backend is None:
        backend = _backend.backend_name()
    if backend == "numba":
        out, failed = _inner_many_numba(phis, float(a), float(big_a), float(r), pm1, float(tol), int(max_refinements))
        if failed >= 0:
            raise QuadratureError(
                f"inner integral at phi_i={phis[failed]:.17g} exceeded {max_refinements} refinements (tol={tol:g})"
            )
        return out
    if backend == "numpy":
        return np.array([_inner_numpy(p, a, big_a, r, pm1, tol, max_refinements) for p in phis])
    raise ValueError(f"unknown backend {backend!r}")
