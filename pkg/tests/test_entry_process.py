import math

import numpy as np
import pytest

from stochwishart.entry_process import (
    EntryProcessSpec,
    Family,
    MomentCheck,
    ScalarField,
    Stream,
    TimeGrid,
    build_paths,
    c1,
    c2,
    sample_entry_path,
    sample_entry_paths,
    validate_moments,
)

LN2 = math.log(2.0)
OU = EntryProcessSpec(ScalarField.REAL, Family.OU, LN2)


def test_c1_examples():
    assert math.isclose(c1(OU, 0.0, 1.0), 0.5, rel_tol=1e-15)
    assert c1(OU, 2.5, 2.5) == 1.0
    assert c1(EntryProcessSpec(family=Family.REFRESH), 0.0, 1.0) == 0.0
    assert c1(EntryProcessSpec(family=Family.FROZEN), 0.0, 7.0) == 1.0
    assert c1(OU, 0.3, 1.8) == c1(OU, 1.8, 0.3)
    with pytest.raises(ValueError):
        c1(OU, -1.0, 0.0)


def test_c2_examples():
    assert math.isclose(c2(OU, 0.0, 1.0), 1.5, rel_tol=1e-15)
    assert c2(EntryProcessSpec(ScalarField.COMPLEX), 1.0, 1.0) == 2.0
    quat = EntryProcessSpec(ScalarField.QUATERNION, Family.OU, LN2)
    assert math.isclose(c2(quat, 0.0, 1.0), 9 / 8, rel_tol=1e-15)
    for field in ScalarField:
        spec = EntryProcessSpec(field, Family.OU, 0.3)
        for t in (0.0, 0.5, 4.0):
            assert 1.0 <= c2(spec, 0.0, t) <= 1 + 2 / field.beta


def test_spec_and_grid_validation():
    with pytest.raises(ValueError):
        EntryProcessSpec(ScalarField.REAL, Family.OU, 0.0)
    with pytest.raises(ValueError):
        EntryProcessSpec(3)
    with pytest.raises(ValueError):
        TimeGrid(())
    with pytest.raises(ValueError):
        TimeGrid((0.0, 0.0))
    with pytest.raises(ValueError):
        TimeGrid((-1.0,))
    assert len(TimeGrid((0, 1, 2))) == 3


def test_build_paths_special_rhos():
    xi = np.arange(6, dtype=float).reshape(3, 1, 2)
    z = build_paths(xi, np.array([1.0, 0.0]), 1)
    assert np.array_equal(z[1], z[0]) and np.array_equal(z[2], xi[2])
    assert not np.shares_memory(z, xi)


def test_sample_entry_path_deterministic_and_shaped():
    grid = TimeGrid((0.0, 1.0, 2.0))
    spec = EntryProcessSpec(ScalarField.QUATERNION, Family.OU, 1.0)
    a = sample_entry_path(spec, grid, Stream(17, 2), row=5, col=3)
    b = sample_entry_path(spec, grid, Stream(17, 2), row=5, col=3)
    assert a.shape == (3, 4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_entry_path(spec, grid, Stream(17, 3), row=5, col=3))


def test_frozen_and_refresh_paths():
    grid = TimeGrid((0.0, 1.0))
    frozen = sample_entry_paths(EntryProcessSpec(family=Family.FROZEN), grid, Stream(1), 100)
    assert np.array_equal(frozen[0], frozen[1])
    refresh = sample_entry_paths(EntryProcessSpec(family=Family.REFRESH), grid, Stream(1), 20000)
    assert abs(np.mean(refresh[0] * refresh[1])) < 4 / math.sqrt(20000)


@pytest.mark.parametrize("field", list(ScalarField))
def test_validate_moments_passes(field):
    spec = EntryProcessSpec(field, Family.OU, LN2)
    rep = validate_moments(spec, TimeGrid((0.0, 1.0)), 100_000, Stream(5))
    assert rep.ok, [(c.name, c.z) for c in rep.flagged]
    names = {c.name for c in rep.checks}
    assert {"E|Z|^2", "E|Z|^4", "c1", "c2"} <= names


def test_quaternion_c2_matches_isserlis_by_mc():
    spec = EntryProcessSpec(ScalarField.QUATERNION, Family.OU, LN2)
    rep = validate_moments(spec, TimeGrid((0.0, 1.0)), 200_000, Stream(8))
    check = next(c for c in rep.checks if c.name == "c2")
    assert check.expected == pytest.approx(9 / 8)
    assert abs(check.z) < 3


def test_validate_detects_wrong_expectation():
    z = sample_entry_paths(OU, TimeGrid((0.0, 1.0)), Stream(5), 100_000)
    est = float(np.mean(z[0, 0] * z[1, 0]))
    se = float(np.std(z[0, 0] * z[1, 0]) / math.sqrt(z.shape[2]))
    # the process really has c1 = 1/2; a claimed 0.45 must be flagged
    assert MomentCheck("c1", (0, 1), est, se, 0.45).flagged
    assert not MomentCheck("c1", (0, 1), est, se, 0.5).flagged


def test_validate_requires_enough_draws():
    with pytest.raises(ValueError):
        validate_moments(OU, TimeGrid((0.0,)), 100, Stream(0))
