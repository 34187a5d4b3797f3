"""Finite-L realisation of the overlapping Wishart model.

Observables are rectangular windows of the virtual array, placed by scaled
offsets and extents (units of ``L``) and read at one grid time.  A replica
draws every needed entry path once, so entries shared by several windows
carry identical values; that sharing is the whole source of the
cross-covariance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .entry_process import EntryProcessSpec, TimeGrid, build_paths, component_scale, step_correlations

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ObservableSpec:
    mu: float
    nu: float
    power: int = 1
    time_index: int = 0
    row_offset: float = 0.0
    col_offset: float = 0.0

    def __post_init__(self):
        if not (self.mu > 0 and self.nu > 0):
            raise ValueError("mu and nu must be positive")
        if self.row_offset < 0 or self.col_offset < 0:
            raise ValueError("offsets must be non-negative")
        if int(self.power) != self.power or self.power < 1:
            raise ValueError("power must be a positive integer")
        if int(self.time_index) != self.time_index or self.time_index < 0:
            raise ValueError("time_index must be a non-negative integer")
        object.__setattr__(self, "power", int(self.power))
        object.__setattr__(self, "time_index", int(self.time_index))


@dataclass(frozen=True)
class Block:
    """Integer placement of an observable at a given ``L``: half-open ranges."""

    row0: int
    m: int
    col0: int
    n: int
    power: int
    time_index: int

    @property
    def row1(self):
        return self.row0 + self.m

    @property
    def col1(self):
        return self.col0 + self.n


def _scaled_to_int(value, L, what):
    x = value * L
    k = int(round(x))
    if abs(x - k) > 1e-9 * max(1.0, abs(x)):
        log.warning("%s = %g * L = %g is not integral at L=%d; rounded to %d", what, value, x, L, k)
    return k


@dataclass(frozen=True)
class ExperimentGeometry:
    L: int
    grid: TimeGrid
    observables: tuple[ObservableSpec, ...]
    process: EntryProcessSpec

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1:
            raise ValueError("L must be a positive integer")
        object.__setattr__(self, "observables", tuple(self.observables))
        if not self.observables:
            raise ValueError("at least one observable is required")
        for i, obs in enumerate(self.observables):
            if obs.time_index >= len(self.grid):
                raise ValueError(f"observable {i}: time_index {obs.time_index} outside the time grid")
            b = self.block(i)
            if b.m < 1 or b.n < 1:
                raise ValueError(f"observable {i}: rounded size {b.m}x{b.n} at L={self.L} is empty")

    def block(self, i) -> Block:
        obs = self.observables[i]
        L = self.L
        return Block(
            row0=_scaled_to_int(obs.row_offset, L, f"observable {i} row_offset"),
            m=_scaled_to_int(obs.mu, L, f"observable {i} mu"),
            col0=_scaled_to_int(obs.col_offset, L, f"observable {i} col_offset"),
            n=_scaled_to_int(obs.nu, L, f"observable {i} nu"),
            power=obs.power,
            time_index=obs.time_index,
        )

    def blocks(self) -> list[Block]:
        return [self.block(i) for i in range(len(self.observables))]

    def __len__(self):
        return len(self.observables)

    def with_scale(self, L) -> "ExperimentGeometry":
        return ExperimentGeometry(L, self.grid, self.observables, self.process)


@dataclass(frozen=True)
class OverlapStats:
    m_ij: int
    n_ij: int
    mu_ij: float
    nu_ij: float
    theta: float


def _intersection(a0, a1, b0, b1):
    return max(0, min(a1, b1) - max(a0, b0))


def overlap(geom: ExperimentGeometry, i: int, j: int) -> OverlapStats:
    """Shared rows/columns of observables ``i`` and ``j`` and ``theta_ij``."""
    bi, bj = geom.block(i), geom.block(j)
    m_ij = _intersection(bi.row0, bi.row1, bj.row0, bj.row1)
    n_ij = _intersection(bi.col0, bi.col1, bj.col0, bj.col1)
    L = geom.L
    theta = (m_ij * n_ij * L * L) / (bi.m * bi.n * bj.m * bj.n)
    return OverlapStats(m_ij, n_ij, m_ij / L, n_ij / L, theta)


# --------------------------------------------------------------------------
# matrices and traces
# --------------------------------------------------------------------------


def trace_power(w: np.ndarray, p: int) -> float:
    """``Tr(W^p)`` for a square matrix using at most ``ceil(p/2)`` products.

    Uses ``Tr(X Y) = sum(X * Y^T)`` with ``X = W^ceil(p/2)``, ``Y = W^floor(p/2)``.
    """
    w = np.asarray(w)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"trace_power needs a square matrix, got shape {w.shape}")
    if int(p) != p or p < 1:
        raise ValueError("p must be a positive integer")
    if p == 1:
        return float(np.real(np.trace(w)))
    lo = p // 2
    y = w
    for _ in range(lo - 1):
        y = y @ w
    x = y @ w if p - lo > lo else y
    return float(np.real(np.sum(x * y.T)))


def quaternion_embedding(q: np.ndarray) -> np.ndarray:
    """Complex ``2m x 2n`` image of an ``m x n`` quaternion matrix.

    ``q`` has shape ``(4, m, n)`` holding the (1, i, j, k) components; the
    quaternion ``alpha + beta j`` with ``alpha = a + b i``, ``beta = c + d i``
    maps to ``[[alpha, beta], [-conj(beta), conj(alpha)]]``.
    """
    a, b, c, d = q
    alpha = a + 1j * b
    beta = c + 1j * d
    m, n = a.shape
    out = np.empty((2 * m, 2 * n), dtype=complex)
    out[0::2, 0::2] = alpha
    out[0::2, 1::2] = beta
    out[1::2, 0::2] = -np.conj(beta)
    out[1::2, 1::2] = np.conj(alpha)
    return out


def as_matrix(components: np.ndarray, beta: int) -> np.ndarray:
    """Matrix ``B`` from its ``(beta, m, n)`` real components (complex embedding for beta=4)."""
    if beta == 1:
        return components[0]
    if beta == 2:
        return components[0] + 1j * components[1]
    if beta == 4:
        return quaternion_embedding(components)
    raise ValueError(f"beta must be 1, 2 or 4, got {beta}")


def wishart_trace(components: np.ndarray, beta: int, L: int, p: int) -> float:
    """``Tr(W^p)`` for ``W = B* B / L`` with ``B`` given by real components.

    For quaternions the trace is half the trace of the complex embedding.
    """
    if p == 1:
        return float(np.einsum("cij,cij->", components, components)) / L
    b = as_matrix(components, beta)
    # Tr((B*B)^p) = Tr((BB*)^p): use the smaller Gram matrix
    gram = b.conj().T @ b if b.shape[1] <= b.shape[0] else b @ b.conj().T
    value = trace_power(gram, p) / L**p
    return value / 2 if beta == 4 else value


# --------------------------------------------------------------------------
# replicas
# --------------------------------------------------------------------------


def _bounding_box(blocks):
    return (
        min(b.row0 for b in blocks),
        max(b.row1 for b in blocks),
        min(b.col0 for b in blocks),
        max(b.col1 for b in blocks),
    )


def sample_entries(geom: ExperimentGeometry, seed: int, replica: int):
    """Entry paths needed by one replica.

    Returns ``(z, box)`` with ``z`` of shape ``(T, beta, rows, cols)`` over the
    bounding box ``box = (row0, row1, col0, col1)``.  The time step ``k`` is
    only filled inside the bounding box of observables read at time ``>= k``;
    elsewhere it is left as NaN.
    """
    blocks = geom.blocks()
    beta = geom.process.beta
    ntimes = max(b.time_index for b in blocks) + 1
    r0, r1, c0, c1 = _bounding_box(blocks)
    rhos = step_correlations(geom.process, geom.grid)
    z = np.full((ntimes, beta, r1 - r0, c1 - c0), np.nan)
    # regions shrink with k: region k+1 is inside region k
    prev = None
    for k in range(ntimes):
        live = [b for b in blocks if b.time_index >= k]
        br0, br1, bc0, bc1 = _bounding_box(live)
        xi = rng.normal_block(seed, replica, br0, br1 - br0, bc0, bc1 - bc0, 1, beta, time0=k)[0] * component_scale(beta)
        window = (slice(None), slice(br0 - r0, br1 - r0), slice(bc0 - c0, bc1 - c0))
        if k == 0:
            z[0][window] = xi
        else:
            rho = float(rhos[k - 1])
            before = prev[window]
            if rho == 1.0:
                z[k][window] = before
            elif rho == 0.0:
                z[k][window] = xi
            else:
                z[k][window] = rho * before + math.sqrt(1.0 - rho * rho) * xi
        prev = z[k]
    return z, (r0, r1, c0, c1)


def sample_replica(geom: ExperimentGeometry, seed: int, replica: int) -> np.ndarray:
    """Trace statistics ``Tr(W_i^{p_i}(s_i))`` of one replica, one per observable."""
    z, (r0, _, c0, _) = sample_entries(geom, seed, replica)
    beta = geom.process.beta
    out = np.empty(len(geom))
    for i, b in enumerate(geom.blocks()):
        comps = z[b.time_index, :, b.row0 - r0 : b.row1 - r0, b.col0 - c0 : b.col1 - c0]
        out[i] = wishart_trace(comps, beta, geom.L, b.power)
    return out


def submatrix_components(geom: ExperimentGeometry, seed: int, replica: int, i: int) -> np.ndarray:
    """Real components ``(beta, m_i, n_i)`` of ``B_i`` in one replica."""
    z, (r0, _, c0, _) = sample_entries(geom, seed, replica)
    b = geom.block(i)
    return z[b.time_index, :, b.row0 - r0 : b.row1 - r0, b.col0 - c0 : b.col1 - c0].copy()


__all__ = [
    "Block",
    "ExperimentGeometry",
    "ObservableSpec",
    "OverlapStats",
    "as_matrix",
    "build_paths",
    "overlap",
    "quaternion_embedding",
    "sample_entries",
    "sample_replica",
    "submatrix_components",
    "trace_power",
    "wishart_trace",
]
