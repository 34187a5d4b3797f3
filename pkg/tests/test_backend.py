import os
import subprocess
import sys

import pytest

SNIPPET = "from stochwishart import backend_name; print(backend_name())"


def _backend_with(flag):
    env = dict(os.environ)
    env.pop("STOCHWISHART_DISABLE_NUMBA", None)
    if flag is not None:
        env["STOCHWISHART_DISABLE_NUMBA"] = flag
    return subprocess.run([sys.executable, "-c", SNIPPET], env=env, capture_output=True, text=True, check=True).stdout.strip()


@pytest.mark.parametrize("flag", ["1", "true", "YES", "on"])
def test_flag_selects_numpy(flag):
    assert _backend_with(flag) == "numpy"


def test_default_prefers_numba():
    pytest.importorskip("numba")
    assert _backend_with(None) == "numba"
    assert _backend_with("0") == "numba"


def test_numpy_backend_theory_still_exact():
    env = dict(os.environ, STOCHWISHART_DISABLE_NUMBA="1")
    code = (
        "from stochwishart.theory import CovarianceParams, covariance_quadrature;"
        "print(covariance_quadrature(CovarianceParams(1,1,4,2,1,1,0.125,1,0.5,1.5)))"
    )
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True).stdout
    assert abs(float(out) - 0.5) < 1e-7
