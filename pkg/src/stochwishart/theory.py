"""Limiting covariance of centred trace powers of overlapping Wishart blocks.

For a pair of observables with powers ``p_i, p_j``, scaled sizes
``(mu, nu)``, overlap ``theta`` and two-time entry moments ``c1, c2``, the
limit covariance is a main term (log-ratio kernel, proportional to ``c1``)
plus an error term proportional to

    C = c2 - 1 - (2/beta) c1  (<= 0 for Gaussian families).

Two independent evaluators are provided:

* :func:`covariance_quadrature` integrates over semicircles of radius
  ``r = sqrt(mu nu)`` after the substitution ``zeta = r e^{i phi}``;
* :func:`covariance_exact` evaluates the full-circle form by residues, which
  terminates after ``min(p_i, p_j)`` terms::

      main  = (2 c1 theta / beta) * sum_k (k+1) theta^k C_k(p_i) C_k(p_j)
      error = 4 C theta p_i p_j * J(p_i) J(p_j)

  where ``C_k(p) = [zeta^(-1-k)] (A + zeta + r^2/zeta)^p`` with ``A = mu + nu``
  and ``J(p) = (1/pi) r^2 int_0^pi sin^2(phi) (A + 2 r cos phi)^(p-1) dphi``.

The exact route only uses ``+ - * /`` on its inputs, so it runs unchanged on
``fractions.Fraction`` (or sympy) values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import quadrature
from .ensemble import ExperimentGeometry, overlap
from .entry_process import c1 as entry_c1
from .entry_process import c2 as entry_c2

# theta * r_i * r_j may exceed 1 by this much from rounding alone
_SINGULARITY_SLACK = 1e-12


class CovariancePSDError(ValueError):
    """The assembled covariance matrix has a clearly negative eigenvalue."""

    def __init__(self, eigenvalue, matrix):
        super().__init__(f"covariance matrix is not positive semi-definite: eigenvalue {eigenvalue:.6g}")
        self.eigenvalue = eigenvalue
        self.matrix = matrix


@dataclass(frozen=True)
class CovarianceParams:
    p_i: int
    p_j: int
    mu_i: float
    nu_i: float
    mu_j: float
    nu_j: float
    theta: float
    beta: int
    c1: float
    c2: float

    def __post_init__(self):
        if self.beta not in (1, 2, 4):
            raise ValueError(f"beta must be 1, 2 or 4, got {self.beta}")
        for name in ("p_i", "p_j"):
            p = getattr(self, name)
            if int(p) != p or p < 1:
                raise ValueError(f"{name} must be a positive integer")
        if min(self.mu_i, self.nu_i, self.mu_j, self.nu_j) <= 0:
            raise ValueError("mu and nu must be positive")
        if self.theta < 0:
            raise ValueError("theta must be non-negative")
        reach = float(self.theta) * math.sqrt(float(self.mu_i * self.nu_i * self.mu_j * self.nu_j))
        if reach > 1 + _SINGULARITY_SLACK:
            raise ValueError(f"theta * r_i * r_j = {reach:.6g} > 1: overlap larger than either block")
        if not -1 <= self.c1 <= 1:
            raise ValueError("c1 must lie in [-1, 1]")

    @property
    def error_coefficient(self):
        """``C = c2 - 1 - (2/beta) c1``."""
        return self.c2 - 1 - Fraction(2, self.beta) * self.c1

    def swapped(self) -> "CovarianceParams":
        return CovarianceParams(
            self.p_j, self.p_i, self.mu_j, self.nu_j, self.mu_i, self.nu_i, self.theta, self.beta, self.c1, self.c2
        )


# --------------------------------------------------------------------------
# exact evaluation
# --------------------------------------------------------------------------


def laurent_coefficient(p, k, big_a, r2):
    """Coefficient of ``zeta^(-1-k)`` in ``(A + zeta + r2/zeta)^p``.

    Zero for ``k >= p``.  Exact for integer/Fraction inputs.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    total = 0
    # a + b + c = p and b - c = -1 - k
    b = 0
    while True:
        c = b + 1 + k
        a = p - b - c
        if a < 0:
            break
        coef = math.factorial(p) // (math.factorial(a) * math.factorial(b) * math.factorial(c))
        total = total + coef * big_a**a * r2**c
        b += 1
    return total


def wallis_sin2_cos(m) -> Fraction:
    """``(1/pi) int_0^pi sin^2(phi) cos^m(phi) dphi`` as an exact fraction."""
    if m % 2:
        return Fraction(0)
    num = math.prod(range(m - 1, 0, -2)) if m > 1 else 1
    den = math.prod(range(m + 2, 0, -2))
    return Fraction(num, den)


def sin2_moment(p, big_a, r2):
    """``J(p) = (r^2/pi) int_0^pi sin^2(phi) (A + 2 r cos phi)^(p-1) dphi``.

    Only even powers of ``cos`` survive, so only ``r2 = r^2`` enters.
    """
    total = 0
    for m in range(0, p, 2):
        total = total + math.comb(p - 1, m) * big_a ** (p - 1 - m) * 4 ** (m // 2) * r2 ** (m // 2) * wallis_sin2_cos(m)
    return r2 * total


def covariance_terms_exact(params: CovarianceParams):
    """``(main, error)`` parts of the exact covariance."""
    pr = params
    a_i, r2_i = pr.mu_i + pr.nu_i, pr.mu_i * pr.nu_i
    a_j, r2_j = pr.mu_j + pr.nu_j, pr.mu_j * pr.nu_j
    theta = pr.theta
    series = 0
    for k in range(min(pr.p_i, pr.p_j)):
        series = series + (k + 1) * theta**k * laurent_coefficient(pr.p_i, k, a_i, r2_i) * laurent_coefficient(
            pr.p_j, k, a_j, r2_j
        )
    main = 2 * pr.c1 * theta * series / pr.beta
    error = 4 * pr.error_coefficient * theta * pr.p_i * pr.p_j * sin2_moment(pr.p_i, a_i, r2_i) * sin2_moment(
        pr.p_j, a_j, r2_j
    )
    return main, error


def covariance_exact(params: CovarianceParams):
    """Exact limiting covariance as a finite residue sum."""
    main, error = covariance_terms_exact(params)
    return main + error


def covariance_theta_slope(params: CovarianceParams):
    """``d/dtheta`` of the covariance at ``theta = 0`` (the ``k = 0`` term)."""
    pr = params
    a_i, r2_i = pr.mu_i + pr.nu_i, pr.mu_i * pr.nu_i
    a_j, r2_j = pr.mu_j + pr.nu_j, pr.mu_j * pr.nu_j
    main = 2 * pr.c1 * laurent_coefficient(pr.p_i, 0, a_i, r2_i) * laurent_coefficient(pr.p_j, 0, a_j, r2_j) / pr.beta
    error = 4 * pr.error_coefficient * pr.p_i * pr.p_j * sin2_moment(pr.p_i, a_i, r2_i) * sin2_moment(pr.p_j, a_j, r2_j)
    return main + error


def covariance_closed_form_p1(params: CovarianceParams):
    """Printed ``p_i = p_j = 1`` formula."""
    pr = params
    if pr.p_i != 1 or pr.p_j != 1:
        raise ValueError("closed form p=1 needs p_i = p_j = 1")
    prod = pr.mu_i * pr.nu_i * pr.mu_j * pr.nu_j
    return 2 * pr.c1 * pr.theta * prod / pr.beta + pr.theta * prod * (pr.c2 - 1 - 2 * pr.c1 / pr.beta)


def covariance_closed_form_p2(params: CovarianceParams):
    """Printed ``p_i = p_j = 2`` formula, with ``1/beta`` on the ``c1`` term."""
    pr = params
    if pr.p_i != 2 or pr.p_j != 2:
        raise ValueError("closed form p=2 needs p_i = p_j = 2")
    prod = pr.mu_i * pr.nu_i * pr.mu_j * pr.nu_j
    sums = (pr.mu_i + pr.nu_i) * (pr.mu_j + pr.nu_j)
    main = 2 * pr.c1 * pr.theta * prod * (4 * sums + 2 * pr.theta * prod) / pr.beta
    error = (pr.c2 - 1 - 2 * pr.c1 / pr.beta) * pr.theta * prod * 4 * sums
    return main + error


# --------------------------------------------------------------------------
# quadrature on semicircles
# --------------------------------------------------------------------------


def _integral_f_sin(p, big_a, r):
    # int_0^pi (A + 2 r cos phi)^(p-1) sin(phi) dphi; the base is >= 0 on the contour
    return ((big_a + 2 * r) ** p - (big_a - 2 * r) ** p) / (2 * r * p)


def covariance_quadrature(params: CovarianceParams, abs_tol=1e-7, max_refinements=2000, backend=None, return_terms=False):
    """Limiting covariance by 2-D adaptive quadrature over the two semicircles.

    Main term::

        4 c1 p_i p_j r_i r_j / (beta pi^2)
            * int int F_i F_j log|(1/theta - r_i r_j e^{i(phi_i+phi_j)})
                                 / (1/theta - r_i r_j e^{i(phi_i-phi_j)})|
              sin(phi_i) sin(phi_j) dphi_i dphi_j

    with ``F = (A + 2 r cos phi)^(p-1)``; error term::

        4 C theta p_i p_j / pi^2 * I_i I_j,   I = r^2 int sin^2(phi) F dphi.

    The outer integral is adaptive in ``phi_i``; every outer node runs its
    own adaptive inner integral, split at ``phi_j = phi_i`` where the kernel
    is logarithmically singular when ``theta r_i r_j = 1``.

    Raises :class:`stochwishart.quadrature.QuadratureError` when a refinement
    budget is exhausted.
    """
    pr = params
    if abs_tol <= 0:
        raise ValueError("abs_tol must be positive")
    theta = float(pr.theta)
    if theta == 0.0:
        return (0.0, 0.0) if return_terms else 0.0
    c1, c2 = float(pr.c1), float(pr.c2)
    r_i = math.sqrt(float(pr.mu_i * pr.nu_i))
    r_j = math.sqrt(float(pr.mu_j * pr.nu_j))
    a_i = float(pr.mu_i + pr.nu_i)
    a_j = float(pr.mu_j + pr.nu_j)
    reach = min(theta * r_i * r_j, 1.0)
    beta = pr.beta
    budget = abs_tol / 2

    main = 0.0
    pref_main = 4.0 * c1 * pr.p_i * pr.p_j * r_i * r_j / (beta * math.pi**2)
    if pref_main != 0.0:
        raw_tol = budget / abs(pref_main)
        weight = _integral_f_sin(pr.p_i, a_i, r_i)
        inner_tol = raw_tol / (2.0 * max(weight, 1e-300))

        def outer(phis):
            inner = quadrature.log_kernel_inner(phis, reach, a_j, r_j, pr.p_j, inner_tol, max_refinements, backend)
            return (a_i + 2.0 * r_i * np.cos(phis)) ** (pr.p_i - 1) * np.sin(phis) * inner

        raw, _ = quadrature.adaptive_gk(outer, 0.0, math.pi, raw_tol / 2, max_refinements)
        main = pref_main * raw

    error = 0.0
    coef = float(c2 - 1 - 2 * c1 / beta)
    pref_err = 4.0 * coef * theta * pr.p_i * pr.p_j / math.pi**2
    if pref_err != 0.0:
        bound_i = r_i**2 * math.pi * (a_i + 2 * r_i) ** (pr.p_i - 1)
        bound_j = r_j**2 * math.pi * (a_j + 2 * r_j) ** (pr.p_j - 1)
        tol_i = budget / (2 * abs(pref_err) * bound_j)
        tol_j = budget / (2 * abs(pref_err) * (bound_i + tol_i))

        def sin2_integral(p, big_a, r, tol):
            value, _ = quadrature.adaptive_gk(
                lambda phi: r * r * np.sin(phi) ** 2 * (big_a + 2 * r * np.cos(phi)) ** (p - 1),
                0.0,
                math.pi,
                tol,
                max_refinements,
            )
            return value

        error = pref_err * sin2_integral(pr.p_i, a_i, r_i, tol_i) * sin2_integral(pr.p_j, a_j, r_j, tol_j)
    if return_terms:
        return main, error
    return main + error


# --------------------------------------------------------------------------
# geometry -> matrix
# --------------------------------------------------------------------------


def pair_params(geom: ExperimentGeometry, i: int, j: int) -> CovarianceParams:
    """Covariance parameters of observables ``i, j`` at the geometry's finite ``L``."""
    bi, bj = geom.block(i), geom.block(j)
    ov = overlap(geom, i, j)
    L = geom.L
    s = geom.grid[bi.time_index]
    t = geom.grid[bj.time_index]
    return CovarianceParams(
        p_i=bi.power,
        p_j=bj.power,
        mu_i=bi.m / L,
        nu_i=bi.n / L,
        mu_j=bj.m / L,
        nu_j=bj.n / L,
        theta=ov.theta,
        beta=geom.process.beta,
        c1=entry_c1(geom.process, s, t),
        c2=entry_c2(geom.process, s, t),
    )


def covariance_matrix(geom: ExperimentGeometry, psd_tol=1e-8, evaluator=covariance_exact) -> np.ndarray:
    """``k x k`` limiting covariance of the trace statistics of ``geom``.

    Raises :class:`CovariancePSDError` if an eigenvalue is below
    ``-psd_tol * max(1, largest |eigenvalue|)``.
    """
    k = len(geom)
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(i, k):
            out[i, j] = out[j, i] = float(evaluator(pair_params(geom, i, j)))
    eig = np.linalg.eigvalsh(out)
    scale = max(1.0, float(np.abs(eig).max()))
    if eig[0] < -psd_tol * scale:
        raise CovariancePSDError(float(eig[0]), out)
    return out
