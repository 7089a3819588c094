import numpy as np
import pytest
from hypothesis import given, strategies as st

from heisrect import core

RNG = np.random.default_rng(11)

coord = st.floats(-10, 10, allow_nan=False)


def rand_points(n, scale=10.0, rng=RNG):
    return rng.uniform(-scale, scale, (n, 3))


def test_product_example():
    assert np.allclose(core.mul([1, 0, 0], [0, 1, 0]), [1, 1, 0.5])


def test_identity_and_inverse():
    p = core.as_point(1.0, 2.0, 3.0)
    assert np.allclose(core.mul(p, core.identity()), p)
    assert np.allclose(core.inv(p), [-1, -2, -3])
    assert np.allclose(core.mul(p, core.inv(p)), core.identity())


@given(coord, coord, coord)
def test_inverse_is_involution(x, y, t):
    p = core.as_point(x, y, t)
    assert np.allclose(core.inv(core.inv(p)), p)


def test_norm_examples():
    assert core.norm(core.as_point(3, 4, 0)) == 5
    assert core.norm(core.as_point(0, 0, 4)) == 2
    assert core.norm(core.identity()) == 0


def test_dist_examples():
    p = core.as_point(0.3, -1.2, 0.7)
    assert core.dist(p, p) == 0
    assert core.dist(core.identity(), core.as_point(0, 0, 4)) == 2


def test_associativity():
    p, q, r = (rand_points(2000) for _ in range(3))
    lhs = core.mul(core.mul(p, q), r)
    rhs = core.mul(p, core.mul(q, r))
    scale = 1 + np.abs(np.concatenate([p, q, r])).max()
    assert np.abs(lhs - rhs).max() <= 1e-12 * scale


def test_left_invariance():
    g, p, q = (rand_points(2000) for _ in range(3))
    d0 = core.dist(p, q)
    d1 = core.dist(core.mul(g, p), core.mul(g, q))
    assert np.max(np.abs(d1 - d0) / np.maximum(d0, 1e-30)) <= 1e-9


def test_dilation_examples():
    assert np.allclose(core.dilate(2, [1, 1, 1]), [2, 2, 4])
    p = rand_points(5)
    assert np.allclose(core.dilate(1, p), p)
    with pytest.raises(ValueError):
        core.dilate(-1.0, p)


def test_dilation_semigroup_and_homogeneity():
    p, q = rand_points(2000), rand_points(2000)
    r = RNG.uniform(1e-3, 1e3, 2000)
    assert np.allclose(core.dilate(2.0, core.dilate(3.0, p)),
                       core.dilate(6.0, p))
    d = core.dist(core.dilate(r, p), core.dilate(r, q))
    assert np.max(np.abs(d - r * core.dist(p, q))
                  / np.maximum(d, 1e-30)) <= 1e-9


def test_rotation_examples():
    assert np.allclose(core.rotate(np.pi / 2, [1, 0, 0]), [0, 1, 0],
                       atol=1e-15)
    p = rand_points(5)
    assert np.allclose(core.rotate(0.0, p), p)


def test_rotation_isometry_and_homomorphism():
    p, q = rand_points(2000), rand_points(2000)
    th = RNG.uniform(0, 2 * np.pi, 2000)
    assert np.max(np.abs(core.dist(core.rotate(th, p), core.rotate(th, q))
                         - core.dist(p, q))) <= 1e-9 * 20
    lhs = core.rotate(th, core.mul(p, q))
    rhs = core.mul(core.rotate(th, p), core.rotate(th, q))
    assert np.abs(lhs - rhs).max() <= 1e-12 * 200


def test_triangle_inequality():
    p, q, r = (rand_points(5000) for _ in range(3))
    assert np.all(core.dist(p, r) <= core.dist(p, q) + core.dist(q, r) + 1e-12)


def test_angle_normalization_idempotent():
    for th in [-5.0, -np.pi, 0.0, 1.0, np.pi, 7.1]:
        a = core.normalize_angle(th)
        assert 0 <= a < np.pi
        assert core.normalize_angle(a) == a
