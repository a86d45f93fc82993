"""Tests for centered-kernel disparity."""

import numpy as np
import pytest

from obsgrass.ckd import cka, ckd, hsic
from obsgrass.errors import DegenerateKernelError, ShapeMismatchError


def _rand(m, p, seed):
    return np.random.default_rng(seed).normal(size=(m, p))


def test_ckd_self_is_zero():
    x = _rand(40, 7, 0)
    assert abs(ckd(x, x)) < 1e-10


def test_ckd_scale_invariant():
    x = _rand(40, 7, 1)
    assert abs(ckd(x, 3.7 * x)) < 1e-10
    assert abs(ckd(x, -0.2 * x)) < 1e-10


def test_ckd_rotation_invariant():
    x = _rand(50, 6, 2)
    q, _ = np.linalg.qr(_rand(6, 6, 3))
    assert abs(ckd(x, x @ q)) < 1e-10


def test_ckd_range():
    rng = np.random.default_rng(4)
    for _ in range(30):
        x = rng.normal(size=(25, 5))
        y = rng.normal(size=(25, 8))
        d = ckd(x, y)
        assert -1e-12 <= d <= 1.0 + 1e-12


def test_ckd_symmetry():
    x = _rand(30, 4, 5)
    y = _rand(30, 9, 6)
    assert ckd(x, y) == pytest.approx(ckd(y, x), abs=1e-12)


def test_independent_reps_high_disparity():
    # Uncorrelated wide-sample representations should be nearly maximally
    # disparate (CKA near 0).
    x = _rand(2000, 3, 7)
    y = _rand(2000, 3, 8)
    assert ckd(x, y) > 0.9


def test_hsic_matches_cross_covariance_identity():
    # For linear kernels, trace(Kc Lc) = ||Xc^T Yc||_F^2 with Xc, Yc the
    # column-centered representations.
    x = _rand(60, 5, 9)
    y = _rand(60, 11, 10)
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    m = x.shape[0]
    expected = np.sum((xc.T @ yc) ** 2) / (m - 1) ** 2
    assert hsic(x, y) == pytest.approx(expected, rel=1e-12)


def test_cka_known_linear_relation():
    # y = x A makes the kernels identical up to A's action; with A orthogonal
    # CKA is exactly 1.
    x = _rand(45, 6, 11)
    q, _ = np.linalg.qr(_rand(6, 6, 12))
    assert cka(x, x @ q) == pytest.approx(1.0, abs=1e-12)


def test_constant_representation_raises():
    x = np.ones((20, 4))
    y = _rand(20, 4, 13)
    with pytest.raises(DegenerateKernelError):
        ckd(x, y)
    with pytest.raises(DegenerateKernelError):
        ckd(y, x)


def test_shape_validation():
    with pytest.raises(ShapeMismatchError):
        ckd(_rand(20, 4, 14), _rand(21, 4, 15))
    with pytest.raises(ShapeMismatchError):
        ckd(np.zeros(5), _rand(5, 2, 16))
    with pytest.raises(ShapeMismatchError):
        hsic(np.ones((1, 3)), np.ones((1, 3)))
    bad = np.ones((5, 2))
    bad[0, 0] = np.nan
    with pytest.raises(ShapeMismatchError):
        ckd(bad, _rand(5, 2, 17))
