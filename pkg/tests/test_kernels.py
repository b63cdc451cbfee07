import numpy as np
import pytest

from rbfglobal import _kernels


@pytest.fixture
def arrays():
    rng = np.random.default_rng(42)
    a = rng.uniform(size=(40, 5))
    b = rng.uniform(size=(17, 5))
    return a, b


def test_pairwise_matches_numpy(arrays):
    a, b = arrays
    got = _kernels.pairwise_dist(a, b)
    want = _kernels.numpy_backend["pairwise_dist"](a, b)
    assert np.allclose(got, want, atol=1e-12)


def test_min_dist_matches_numpy(arrays):
    a, b = arrays
    got = _kernels.min_dist(a, b)
    want = _kernels.numpy_backend["min_dist"](a, b)
    assert np.allclose(got, want, atol=1e-12)


@pytest.mark.parametrize("code", range(5))
def test_phi_matches_numpy(code, arrays):
    a, b = arrays
    r = _kernels.pairwise_dist(a, b)
    got = _kernels.phi(code, 0.7, r)
    want = _kernels.numpy_backend["phi"](code, 0.7, r)
    assert np.allclose(got, want, atol=1e-12)


def test_phi_thin_plate_zero_at_origin():
    r = np.array([[0.0, 1.0, 2.0]])
    out = _kernels.phi(_kernels.THIN_PLATE_SPLINE, 1.0, r)
    assert out[0, 0] == 0.0
    assert out[0, 1] == 0.0  # 1^2 log 1
    assert out[0, 2] == pytest.approx(4.0 * np.log(2.0))


def test_predict_matches_numpy(arrays):
    a, b = arrays
    rng = np.random.default_rng(3)
    lam = rng.normal(size=b.shape[0])
    alin = rng.normal(size=a.shape[1])
    got = _kernels.predict(a, b, lam, alin, 0.25, _kernels.CUBIC, 1.0)
    want = _kernels.numpy_backend["predict"](a, b, lam, alin, 0.25, _kernels.CUBIC, 1.0)
    assert np.allclose(got, want, atol=1e-9)


def test_env_flag_selects_numpy_backend():
    import importlib
    import os
    import subprocess
    import sys

    code = (
        "import rbfglobal._kernels as K; print(K.USING_NUMBA)"
    )
    out = subprocess.run(
        [sys.executable, "-c", code],
        env=dict(os.environ, RBFGLOBAL_NUMBA="0"),
        capture_output=True,
        text=True,
    )
    assert out.stdout.strip() == "False"
