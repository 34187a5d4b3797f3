import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import example1, example2
from stochwishart.ensemble import (
    ExperimentGeometry,
    ObservableSpec,
    as_matrix,
    overlap,
    quaternion_embedding,
    sample_entries,
    sample_replica,
    submatrix_components,
    trace_power,
    wishart_trace,
)
from stochwishart.entry_process import EntryProcessSpec, Family, ScalarField, TimeGrid


def _geom(observables, L=10, family=Family.OU, field=ScalarField.REAL, times=(0.0, 1.0)):
    return ExperimentGeometry(L, TimeGrid(times), tuple(observables), EntryProcessSpec(field, family, math.log(2)))


def test_theta_examples():
    assert overlap(example1(100), 0, 1).theta == pytest.approx(1 / 8, rel=1e-15)
    assert overlap(example2(100), 0, 1).theta == pytest.approx(1 / 10, rel=1e-15)
    assert overlap(example2(100, corner=True), 0, 1).theta == pytest.approx(1 / 30, rel=1e-15)
    disjoint = _geom([ObservableSpec(1, 1), ObservableSpec(1, 1, row_offset=1, col_offset=1)])
    assert overlap(disjoint, 0, 1).theta == 0.0
    st_ = overlap(example2(100), 0, 1)
    assert (st_.m_ij, st_.n_ij, st_.mu_ij, st_.nu_ij) == (300, 100, 3.0, 1.0)


def test_self_overlap_is_inverse_area():
    g = _geom([ObservableSpec(2.5, 0.4)])
    assert overlap(g, 0, 0).theta == pytest.approx(1 / (2.5 * 0.4))


@pytest.mark.parametrize("L", [10, 20, 40, 100])
def test_theta_scale_invariant(L):
    g = _geom([ObservableSpec(2, 1.5), ObservableSpec(1, 1, row_offset=0.5, col_offset=0.5)], L=L)
    assert overlap(g, 0, 1).theta == pytest.approx(overlap(g.with_scale(20), 0, 1).theta, rel=1e-14)


def test_non_integral_extent_warns(caplog):
    with caplog.at_level(logging.WARNING, logger="stochwishart.ensemble"):
        _geom([ObservableSpec(1.05, 1)], L=10)
    assert "not integral" in caplog.text


def test_geometry_validation():
    with pytest.raises(ValueError):
        _geom([ObservableSpec(1, 1, time_index=5)])
    with pytest.raises(ValueError):
        _geom([ObservableSpec(0.01, 1)], L=10)
    with pytest.raises(ValueError):
        _geom([])
    with pytest.raises(ValueError):
        ObservableSpec(1, 1, power=0)


def _naive_trace_power(w, p):
    n = w.shape[0]
    m = np.eye(n, dtype=w.dtype)
    for _ in range(p):
        out = np.zeros_like(m)
        for a in range(n):
            for b in range(n):
                for c in range(n):
                    out[a, b] += m[a, c] * w[c, b]
        m = out
    return sum(m[a, a] for a in range(n)).real


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 5), p=st.integers(1, 6), seed=st.integers(0, 2**32 - 1))
def test_trace_power_matches_naive(n, p, seed):
    w = np.random.default_rng(seed).standard_normal((n, n))
    assert trace_power(w, p) == pytest.approx(_naive_trace_power(w, p), rel=1e-10, abs=1e-10)


@pytest.mark.parametrize("beta", [1, 2, 4])
@pytest.mark.parametrize("p", [1, 2, 3, 4])
def test_wishart_trace_matches_eigenvalues(beta, p):
    rng = np.random.default_rng(beta * 10 + p)
    comps = rng.standard_normal((beta, 6, 4)) / math.sqrt(beta)
    b = as_matrix(comps, beta)
    eig = np.linalg.eigvalsh(b.conj().T @ b / 7)
    assert eig.min() > -1e-12  # W is positive semi-definite
    expected = np.sum(eig**p) / (2 if beta == 4 else 1)
    assert wishart_trace(comps, beta, 7, p) == pytest.approx(expected, rel=1e-11)
    # wide blocks go through the other Gram matrix
    comps_t = np.ascontiguousarray(np.swapaxes(comps, 1, 2))
    bt = as_matrix(comps_t, beta)
    eig_t = np.linalg.eigvalsh(bt.conj().T @ bt / 7)
    assert wishart_trace(comps_t, beta, 7, p) == pytest.approx(np.sum(eig_t**p) / (2 if beta == 4 else 1), rel=1e-11)


def _qmul(x, y):
    a1, b1, c1, d1 = x
    a2, b2, c2, d2 = y
    return (
        a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
        a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
        a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
        a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
    )


def test_quaternion_embedding_is_a_homomorphism():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((4, 3, 2))
    y = rng.standard_normal((4, 2, 3))
    prod = np.zeros((4, 3, 3))
    for i in range(3):
        for j in range(3):
            for k in range(2):
                prod[:, i, j] += _qmul(x[:, i, k], y[:, k, j])
    np.testing.assert_allclose(quaternion_embedding(x) @ quaternion_embedding(y), quaternion_embedding(prod), atol=1e-13)
    # conjugate transpose commutes with the embedding
    conj = x.copy()
    conj[1:] *= -1
    np.testing.assert_allclose(quaternion_embedding(x).conj().T, quaternion_embedding(np.swapaxes(conj, 1, 2)), atol=0)


def test_shared_entries_are_identical():
    g = _geom(
        [ObservableSpec(2, 2, time_index=0), ObservableSpec(1, 1, row_offset=1, col_offset=1, time_index=0)],
        family=Family.OU,
    )
    big = submatrix_components(g, 3, 11, 0)
    small = submatrix_components(g, 3, 11, 1)
    assert np.array_equal(big[:, 10:20, 10:20], small)


def test_frozen_process_shares_across_times():
    g = _geom(
        [ObservableSpec(2, 1, time_index=0), ObservableSpec(1, 1, time_index=1)],
        family=Family.FROZEN,
        field=ScalarField.COMPLEX,
    )
    a = submatrix_components(g, 1, 0, 0)
    b = submatrix_components(g, 1, 0, 1)
    assert np.array_equal(a[:, :10, :10], b)


def test_sample_entries_lazy_regions():
    g = example1(10)
    z, box = sample_entries(g, 0, 0)
    assert box == (0, 40, 0, 20)
    assert not np.isnan(z[0]).any()
    assert not np.isnan(z[1, :, :10, :10]).any()
    assert np.isnan(z[1, :, 10:, :]).all()


def test_sample_replica_is_deterministic():
    g = example2(10)
    a = sample_replica(g, 42, 3)
    assert np.array_equal(a, sample_replica(g, 42, 3))
    assert not np.array_equal(a, sample_replica(g, 42, 4))
    assert a.shape == (2,) and (a > 0).all()


def test_duplicate_observables_give_equal_statistics():
    g = _geom([ObservableSpec(1, 2, power=3), ObservableSpec(1, 2, power=3)], family=Family.FROZEN)
    x = sample_replica(g, 0, 0)
    assert x[0] == x[1]


@pytest.mark.parametrize("beta", [1, 2, 4])
def test_trace_mean_matches_wishart_moment(beta):
    # E Tr(W) = m n / L exactly
    g = _geom([ObservableSpec(1, 1)], L=6, field=ScalarField(beta), times=(0.0,))
    x = np.array([sample_replica(g, 9, r)[0] for r in range(3000)])
    assert abs(x.mean() - 6.0) < 4 * x.std() / math.sqrt(x.size)
