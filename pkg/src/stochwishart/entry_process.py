"""Entry processes Z(t) of the virtual array.

A scalar of field ``beta`` is stored as ``beta`` real components (1, i, j, k),
each with variance ``1/beta``, so that ``E|Z|^2 = 1`` and
``E|Z|^4 = 1 + 2/beta``.  All built-in families are stationary Gaussian
Markov processes; a path on a time grid is generated by the exact transition

    Z(t_k) = rho_k Z(t_{k-1}) + sqrt(1 - rho_k^2) xi_k,   rho_k = c1(t_{k-1}, t_k),

applied component-wise, with the innovations ``xi_k`` drawn from the
counter-based stream of :mod:`stochwishart.rng`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng


class ScalarField(enum.IntEnum):
    REAL = 1
    COMPLEX = 2
    QUATERNION = 4

    @property
    def beta(self) -> int:
        return int(self)

    @property
    def fourth_moment(self) -> float:
        return 1.0 + 2.0 / self.beta


class Family(str, enum.Enum):
    OU = "ou"
    FROZEN = "frozen"
    REFRESH = "refresh"


@dataclass(frozen=True)
class EntryProcessSpec:
    """Law of one entry process.

    ``rate`` is the OU mean-reversion rate per unit model time, so that
    ``c1(s, t) = exp(-rate |t - s|)``; it is ignored by the other families.
    """

    field: ScalarField = ScalarField.REAL
    family: Family = Family.OU
    rate: float = math.log(2.0)

    def __post_init__(self):
        object.__setattr__(self, "field", ScalarField(self.field))
        object.__setattr__(self, "family", Family(self.family))
        if self.family is Family.OU and not (self.rate > 0 and math.isfinite(self.rate)):
            raise ValueError(f"OU rate must be a positive finite number, got {self.rate!r}")

    @property
    def beta(self) -> int:
        return self.field.beta


@dataclass(frozen=True)
class TimeGrid:
    times: tuple[float, ...]

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if not times:
            raise ValueError("time grid must be nonempty")
        if any(not math.isfinite(t) or t < 0 for t in times):
            raise ValueError("times must be finite and non-negative")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", times)

    def __len__(self):
        return len(self.times)

    def __getitem__(self, k):
        return self.times[k]


@dataclass(frozen=True)
class Stream:
    """Address of a counter-based substream: a 64-bit seed and a replica index."""

    seed: int
    replica: int = 0


def c1(spec: EntryProcessSpec, s: float, t: float) -> float:
    """Two-time correlation ``E[Z(s) conj(Z(t))]``."""
    if s < 0 or t < 0:
        raise ValueError("times must be non-negative")
    if spec.family is Family.FROZEN:
        return 1.0
    if spec.family is Family.REFRESH:
        return 1.0 if s == t else 0.0
    return math.exp(-spec.rate * abs(t - s))


def c2(spec: EntryProcessSpec, s: float, t: float) -> float:
    """``E|Z(s)|^2 |Z(t)|^2``; for Gaussian families ``1 + (2/beta) c1^2``."""
    rho = c1(spec, s, t)
    return 1.0 + 2.0 / spec.beta * rho * rho


def step_correlations(spec: EntryProcessSpec, grid: TimeGrid) -> np.ndarray:
    """``rho_k = c1(t_{k-1}, t_k)`` for ``k = 1 .. len(grid) - 1``."""
    return np.array([c1(spec, a, b) for a, b in zip(grid.times, grid.times[1:])])


def component_scale(beta: int) -> float:
    """Standard deviation ``1/sqrt(beta)`` of one real component."""
    return 1.0 / math.sqrt(beta)


def build_paths(innovations: np.ndarray, rhos: np.ndarray, beta: int) -> np.ndarray:
    """Turn i.i.d. N(0,1) innovations of shape ``(T, ...)`` into component paths.

    Works in place on a copy; the result has variance ``1/beta`` per component.
    """
    z = innovations * component_scale(beta)
    for k in range(1, z.shape[0]):
        rho = float(rhos[k - 1])
        if rho == 1.0:
            z[k] = z[k - 1]
        elif rho == 0.0:
            pass
        else:
            z[k] = rho * z[k - 1] + math.sqrt(1.0 - rho * rho) * z[k]
    return z


def sample_entry_path(spec: EntryProcessSpec, grid: TimeGrid, stream: Stream, row: int = 0, col: int = 0):
    """One joint sample ``(Z(t_1), ..., Z(t_m))`` of the entry at ``(row, col)``.

    Returns an array of shape ``(len(grid), beta)`` of real components.  The
    same ``(spec, grid, stream, row, col)`` always yields the same bits.
    """
    xi = rng.normal_block(stream.seed, stream.replica, row, 1, col, 1, len(grid), spec.beta)
    return build_paths(xi, step_correlations(spec, grid), spec.beta)[:, :, 0, 0]


def sample_entry_paths(spec: EntryProcessSpec, grid: TimeGrid, stream: Stream, draws: int) -> np.ndarray:
    """``draws`` independent paths (entries ``(0..draws-1, 0)`` of the stream).

    Shape ``(len(grid), beta, draws)``.
    """
    xi = rng.normal_block(stream.seed, stream.replica, 0, draws, 0, 1, len(grid), spec.beta)
    return build_paths(xi, step_correlations(spec, grid), spec.beta)[:, :, :, 0]


# --------------------------------------------------------------------------
# moment validation
# --------------------------------------------------------------------------


@dataclass
class MomentCheck:
    name: str
    times: tuple[int, ...]
    estimate: float
    se: float
    expected: float
    threshold: float = 4.0

    @property
    def z(self) -> float:
        diff = self.estimate - self.expected
        if self.se == 0.0:
            return 0.0 if abs(diff) <= 1e-12 * max(1.0, abs(self.expected)) else math.copysign(math.inf, diff)
        return diff / self.se

    @property
    def flagged(self) -> bool:
        return abs(self.z) > self.threshold


@dataclass
class MomentReport:
    spec: EntryProcessSpec
    grid: TimeGrid
    draws: int
    checks: list[MomentCheck] = field(default_factory=list)

    @property
    def flagged(self) -> list[MomentCheck]:
        return [c for c in self.checks if c.flagged]

    @property
    def ok(self) -> bool:
        return not self.flagged


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def validate_moments(
    spec: EntryProcessSpec, grid: TimeGrid, draws: int, stream: Stream, threshold: float = 4.0
) -> MomentReport:
    """Empirical one- and two-time moments against their analytic values.

    Checks, per time: the mean of every component, ``E|Z|^2`` and ``E|Z|^4``;
    per pair of times: ``c1``, ``c2`` and every cross-component covariance
    (which must vanish).  A check is flagged when it deviates by more than
    ``threshold`` standard errors.
    """
    if draws < 10_000:
        raise ValueError("validate_moments needs at least 10^4 draws")
    z = sample_entry_paths(spec, grid, stream, draws)
    beta = spec.beta
    report = MomentReport(spec, grid, draws)

    def add(name, times, values, expected):
        est, se = _mean_se(values)
        report.checks.append(MomentCheck(name, times, est, se, expected, threshold))

    sq = (z * z).sum(axis=1)
    for k in range(len(grid)):
        for comp in range(beta):
            add(f"mean[{comp}]", (k,), z[k, comp], 0.0)
        add("E|Z|^2", (k,), sq[k], 1.0)
        add("E|Z|^4", (k,), sq[k] ** 2, spec.field.fourth_moment)
    for a in range(len(grid)):
        for b in range(a, len(grid)):
            s, t = grid[a], grid[b]
            if a < b:
                add("c1", (a, b), (z[a] * z[b]).sum(axis=0), c1(spec, s, t))
                add("c2", (a, b), sq[a] * sq[b], c2(spec, s, t))
            for ca in range(beta):
                for cb in range(beta):
                    if ca != cb and (a < b or ca < cb):
                        add(f"cross[{ca},{cb}]", (a, b), z[a, ca] * z[b, cb], 0.0)
    return report
