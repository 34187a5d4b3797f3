"""Replica-parallel Monte Carlo estimation of the trace-statistic covariance.

Replicas are cut into consecutive batches.  Each batch accumulates power sums
of the shifted trace vector ``x - shift`` (the shift is replica 0's vector)
as exact floating-point expansions, so merging batches is exact and the final
estimate does not depend on how many workers ran them or in which order they
finished.  Standard errors come from the dispersion of per-batch covariances.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from threadpoolctl import threadpool_limits

from . import _backend
from .ensemble import ExperimentGeometry, sample_replica

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class McRunError(RuntimeError):
    """A worker failed; carries how far the run got."""

    def __init__(self, message, completed_batches, total_batches, checkpoint=None):
        super().__init__(message)
        self.completed_batches = completed_batches
        self.total_batches = total_batches
        self.checkpoint = checkpoint


class CheckpointMismatch(RuntimeError):
    pass


# --------------------------------------------------------------------------
# exact accumulation
# --------------------------------------------------------------------------


class ExactSum:
    """Sum of floats kept as a non-overlapping expansion (Shewchuk partials)."""

    __slots__ = ("partials",)

    def __init__(self, partials=()):
        self.partials = list(partials)

    def add(self, x):
        partials = self.partials
        i = 0
        x = float(x)
        for y in partials:
            if abs(x) < abs(y):
                x, y = y, x
            hi = x + y
            lo = y - (hi - x)
            if lo:
                partials[i] = lo
                i += 1
            x = hi
        partials[i:] = [x]

    def add_many(self, values):
        for x in values:
            self.add(x)

    def merge(self, other: "ExactSum"):
        self.add_many(other.partials)
        return self

    def copy(self):
        return ExactSum(self.partials)

    def value(self) -> float:
        return math.fsum(self.partials)


class MomentAccumulator:
    """Power sums of ``x - shift`` for a stream of k-vectors.

    Keeps first and second mixed moments jointly, third and fourth per
    coordinate only.
    """

    def __init__(self, shift):
        self.shift = np.array(shift, dtype=float)
        k = self.shift.size
        self.count = 0
        self.s1 = [ExactSum() for _ in range(k)]
        self.s2 = [[ExactSum() for _ in range(k)] for _ in range(k)]
        self.s3 = [ExactSum() for _ in range(k)]
        self.s4 = [ExactSum() for _ in range(k)]

    @property
    def k(self):
        return self.shift.size

    def add(self, x):
        d = np.asarray(x, dtype=float) - self.shift
        if d.shape != self.shift.shape:
            raise ValueError(f"expected a vector of length {self.k}")
        self.count += 1
        k = self.k
        for a in range(k):
            da = float(d[a])
            sq = da * da
            self.s1[a].add(da)
            self.s3[a].add(sq * da)
            self.s4[a].add(sq * sq)
            for b in range(a, k):
                self.s2[a][b].add(da * float(d[b]))

    def add_rows(self, rows):
        for x in np.asarray(rows, dtype=float).reshape(-1, self.k):
            self.add(x)

    def merge(self, other: "MomentAccumulator"):
        if other.k != self.k or not np.array_equal(other.shift, self.shift):
            raise ValueError("cannot merge accumulators with different shifts")
        self.count += other.count
        for a in range(self.k):
            self.s1[a].merge(other.s1[a])
            self.s3[a].merge(other.s3[a])
            self.s4[a].merge(other.s4[a])
            for b in range(a, self.k):
                self.s2[a][b].merge(other.s2[a][b])
        return self

    def copy(self):
        out = MomentAccumulator(self.shift)
        out.merge(self)
        return out

    def sums(self):
        k = self.k
        s1 = np.array([s.value() for s in self.s1])
        s2 = np.zeros((k, k))
        for a in range(k):
            for b in range(a, k):
                s2[a, b] = s2[b, a] = self.s2[a][b].value()
        s3 = np.array([s.value() for s in self.s3])
        s4 = np.array([s.value() for s in self.s4])
        return s1, s2, s3, s4

    def covariance(self):
        """Unbiased sample covariance (NaN with fewer than two samples)."""
        n = self.count
        if n < 2:
            return np.full((self.k, self.k), np.nan)
        s1, s2, _, _ = self.sums()
        return (s2 - np.outer(s1, s1) / n) / (n - 1)

    def to_state(self):
        return {
            "shift": [float(x) for x in self.shift],
            "count": self.count,
            "s1": [s.partials for s in self.s1],
            "s2": [[self.s2[a][b].partials for b in range(a, self.k)] for a in range(self.k)],
            "s3": [s.partials for s in self.s3],
            "s4": [s.partials for s in self.s4],
        }

    @classmethod
    def from_state(cls, state):
        acc = cls(state["shift"])
        acc.count = int(state["count"])
        acc.s1 = [ExactSum(p) for p in state["s1"]]
        acc.s3 = [ExactSum(p) for p in state["s3"]]
        acc.s4 = [ExactSum(p) for p in state["s4"]]
        for a, row in enumerate(state["s2"]):
            for off, p in enumerate(row):
                acc.s2[a][a + off] = ExactSum(p)
        return acc


# --------------------------------------------------------------------------
# estimates
# --------------------------------------------------------------------------


@dataclass
class McEstimate:
    mean: np.ndarray
    cov: np.ndarray
    se_cov: np.ndarray
    skewness: np.ndarray
    excess_kurtosis: np.ndarray
    replicas_used: int
    batches: int

    def same_as(self, other: "McEstimate") -> bool:
        """Bitwise equality of every field."""
        return (
            self.replicas_used == other.replicas_used
            and self.batches == other.batches
            and all(
                np.array_equal(getattr(self, f), getattr(other, f), equal_nan=True)
                for f in ("mean", "cov", "se_cov", "skewness", "excess_kurtosis")
            )
        )


def estimate_from_batches(batches) -> McEstimate:
    """Combine batch accumulators, in the given order, into an estimate."""
    batches = list(batches)
    if not batches:
        raise ValueError("no batches")
    total = batches[0].copy()
    for b in batches[1:]:
        total.merge(b)
    n = total.count
    if n < 2:
        raise ValueError("need at least two replicas")
    s1, s2, s3, s4 = total.sums()
    d = s1 / n
    cov = (s2 - np.outer(s1, s1) / n) / (n - 1)
    # population central moments of each coordinate from shifted raw sums
    r2 = np.diag(s2) / n
    r3 = s3 / n
    r4 = s4 / n
    m2 = r2 - d * d
    m3 = r3 - 3 * d * r2 + 2 * d**3
    m4 = r4 - 4 * d * r3 + 6 * d * d * r2 - 3 * d**4
    with np.errstate(divide="ignore", invalid="ignore"):
        skew = np.where(m2 > 0, m3 / m2**1.5, np.nan)
        kurt = np.where(m2 > 0, m4 / m2**2 - 3.0, np.nan)

    usable = [b for b in batches if b.count >= 2]
    if len(usable) >= 2:
        sizes = np.array([b.count for b in usable], dtype=float)
        covs = np.array([b.covariance() for b in usable])
        centre = np.tensordot(sizes, covs, axes=1) / sizes.sum()
        tau2 = np.tensordot(sizes, (covs - centre) ** 2, axes=1) / (len(usable) - 1)
        se = np.sqrt(tau2 / sizes.sum())
    else:
        se = np.full_like(cov, np.nan)
    return McEstimate(
        mean=total.shift + d,
        cov=cov,
        se_cov=se,
        skewness=skew,
        excess_kurtosis=kurt,
        replicas_used=n,
        batches=len(batches),
    )


def estimate_from_samples(x, batch_size) -> McEstimate:
    """Estimate from an in-memory ``(R, k)`` sample, using the same accumulators."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    shift = x[0]
    batches = []
    for start in range(0, x.shape[0], batch_size):
        acc = MomentAccumulator(shift)
        acc.add_rows(x[start : start + batch_size])
        batches.append(acc)
    return estimate_from_batches(batches)


@dataclass
class GaussianityReport:
    skewness: np.ndarray
    excess_kurtosis: np.ndarray
    z_skewness: np.ndarray
    z_kurtosis: np.ndarray
    replicas: int

    def passes(self, threshold):
        return bool(np.all(np.abs(self.z_skewness) < threshold) and np.all(np.abs(self.z_kurtosis) < threshold))


def gaussianity_report(est: McEstimate) -> GaussianityReport:
    """z-scores of sample skewness and excess kurtosis under a Gaussian null.

    Null standard errors are ``sqrt(6/R)`` and ``sqrt(24/R)``.
    """
    r = est.replicas_used
    if r < 1000:
        raise ValueError("gaussianity_report needs at least 1000 replicas")
    return GaussianityReport(
        skewness=est.skewness,
        excess_kurtosis=est.excess_kurtosis,
        z_skewness=est.skewness / math.sqrt(6.0 / r),
        z_kurtosis=est.excess_kurtosis / math.sqrt(24.0 / r),
        replicas=r,
    )


# --------------------------------------------------------------------------
# running replicas
# --------------------------------------------------------------------------


@dataclass
class McConfig:
    replicas: int
    seed: int = 0
    workers: Union[int, str] = 1
    batch_size: int = 500
    checkpoint: Optional[str] = None
    checkpoint_every: int = 10

    def __post_init__(self):
        if int(self.replicas) != self.replicas or self.replicas < 2:
            raise ValueError("replicas must be an integer >= 2")
        if int(self.batch_size) != self.batch_size or not 1 <= self.batch_size <= self.replicas:
            raise ValueError("batch_size must be an integer in [1, replicas]")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.workers != "auto" and (int(self.workers) != self.workers or self.workers < 1):
            raise ValueError("workers must be a positive integer or 'auto'")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be positive")

    def resolved_workers(self) -> int:
        if self.workers == "auto":
            return os.cpu_count() or 1
        return int(self.workers)

    def batch_ranges(self):
        return [(s, min(s + self.batch_size, self.replicas)) for s in range(0, self.replicas, self.batch_size)]


def config_hash(geom: ExperimentGeometry, mc: McConfig) -> str:
    """Identity of a run for checkpoint purposes (worker count excluded)."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "backend": _backend.backend_name(),
        "geometry": asdict(geom),
        "replicas": mc.replicas,
        "seed": int(mc.seed),
        "batch_size": mc.batch_size,
    }
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def _run_batch(geom, seed, start, stop, shift):
    with threadpool_limits(limits=1):
        acc = MomentAccumulator(shift)
        for replica in range(start, stop):
            acc.add(sample_replica(geom, seed, replica))
    return acc.to_state()


def _write_checkpoint(path, digest, shift, done):
    tmp = Path(str(path) + ".tmp")
    payload = {
        "version": CHECKPOINT_VERSION,
        "config_hash": digest,
        "shift": [float(x) for x in shift],
        "batches": {str(b): state for b, state in sorted(done.items())},
    }
    tmp.write_text(json.dumps(payload))
    os.replace(tmp, path)


def load_checkpoint(path, digest):
    payload = json.loads(Path(path).read_text())
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointMismatch(f"checkpoint {path} has unsupported version {payload.get('version')!r}")
    if payload.get("config_hash") != digest:
        raise CheckpointMismatch(f"checkpoint {path} was written for a different configuration")
    return np.array(payload["shift"]), {int(b): s for b, s in payload["batches"].items()}


def run(geom: ExperimentGeometry, mc: McConfig, progress=None) -> McEstimate:
    """Run ``mc.replicas`` replicas of ``geom`` and return the estimate.

    ``progress``, if given, is called as ``progress(done_batches, total_batches)``.
    """
    ranges = mc.batch_ranges()
    digest = config_hash(geom, mc)
    done = {}
    with threadpool_limits(limits=1):
        shift = sample_replica(geom, int(mc.seed), 0)
    if mc.checkpoint and Path(mc.checkpoint).exists():
        saved_shift, done = load_checkpoint(mc.checkpoint, digest)
        if not np.array_equal(saved_shift, shift):
            raise CheckpointMismatch("checkpoint shift does not match replica 0 of this run")
        log.info("resuming from %s: %d/%d batches done", mc.checkpoint, len(done), len(ranges))
    todo = [b for b in range(len(ranges)) if b not in done]
    since_save = 0

    def record(b, state):
        nonlocal since_save
        done[b] = state
        since_save += 1
        if mc.checkpoint and since_save >= mc.checkpoint_every:
            _write_checkpoint(mc.checkpoint, digest, shift, done)
            since_save = 0
        if progress is not None:
            progress(len(done), len(ranges))

    workers = mc.resolved_workers()
    try:
        if workers == 1 or len(todo) <= 1:
            for b in todo:
                start, stop = ranges[b]
                record(b, _run_batch(geom, int(mc.seed), start, stop, shift))
        else:
            ctx = multiprocessing.get_context("spawn")
            with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
                futures = {b: pool.submit(_run_batch, geom, int(mc.seed), *ranges[b], shift) for b in todo}
                for b in todo:
                    record(b, futures[b].result())
    except Exception as exc:
        if mc.checkpoint and done:
            _write_checkpoint(mc.checkpoint, digest, shift, done)
        raise McRunError(
            f"Monte Carlo run aborted after {len(done)}/{len(ranges)} batches: {exc!r}",
            len(done),
            len(ranges),
            mc.checkpoint,
        ) from exc
    if mc.checkpoint and since_save:
        _write_checkpoint(mc.checkpoint, digest, shift, done)
    return estimate_from_batches(MomentAccumulator.from_state(done[b]) for b in range(len(ranges)))
