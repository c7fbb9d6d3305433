import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ttoi.linalg import (
    DENSE_CUTOFF,
    NumericError,
    OrthonormalFrame,
    fix_signs,
    sin_theta,
    smallest_singular_value,
    svd_left,
    svd_right,
)

from oracles import sin_theta_ref, svd_frame


def _orth(p, r, seed):
    q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((p, r)))
    return q


def _gapped(m, n, r, seed, gap=10.0):
    """Random matrix whose r-th spectral gap is comfortably large."""
    rng = np.random.default_rng(seed)
    u = _orth(m, min(m, n), seed)
    v = _orth(n, min(m, n), seed + 1)
    s = np.sort(rng.uniform(0.1, 1.0, min(m, n)))[::-1]
    s[:r] += gap
    return (u * s) @ v.T


class TestSvdLeft:
    def test_diagonal(self):
        f = svd_left(np.diag([3.0, 2.0, 1.0]), 2)
        np.testing.assert_allclose(f.matrix, np.eye(3)[:, :2], atol=1e-15)
        np.testing.assert_allclose(f.singular_values, [3.0, 2.0])

    def test_orthonormal_input(self):
        q = _orth(6, 3, 0)
        f = svd_left(q, 3)
        assert sin_theta(f, q) <= 1e-12

    @pytest.mark.parametrize("shape,r", [((8, 6), 3), ((5, 9), 2), ((20, 400), 4)])
    def test_dense_against_full_svd(self, shape, r):
        a = np.random.default_rng(1).standard_normal(shape)
        ref, s = svd_frame(a, r)
        assert s[r - 1] - s[r] >= 1e-8 * s[0]
        assert sin_theta(svd_left(a, r), ref) <= 1e-8

    @pytest.mark.parametrize("shape,r", [((100, 80), 3), ((90, 300), 2)])
    def test_block_power_against_full_svd(self, shape, r):
        assert min(shape) > DENSE_CUTOFF
        a = _gapped(*shape, r, seed=2)
        ref, _ = svd_frame(a, r)
        f = svd_left(a, r)
        assert sin_theta(f, ref) <= 1e-8
        np.testing.assert_allclose(f.matrix.T @ f.matrix, np.eye(r), atol=1e-10)

    def test_sign_convention(self):
        a = np.random.default_rng(3).standard_normal((7, 5))
        m = svd_left(a, 3).matrix
        idx = np.argmax(np.abs(m), axis=0)
        assert np.all(m[idx, np.arange(3)] > 0)

    def test_deterministic(self):
        a = np.random.default_rng(4).standard_normal((100, 90))
        np.testing.assert_array_equal(svd_left(a, 3, seed=5).matrix, svd_left(a, 3, seed=5).matrix)

    def test_rank_out_of_range(self):
        with pytest.raises(ValueError):
            svd_left(np.ones((3, 2)), 3)
        with pytest.raises(ValueError):
            svd_left(np.ones((3, 2)), 0)

    def test_non_finite(self):
        a = np.ones((3, 3))
        a[1, 1] = np.nan
        with pytest.raises(NumericError):
            svd_left(a, 1)

    def test_padding_beyond_numerical_rank(self):
        a = np.outer(np.arange(1.0, 6.0), np.ones(4))
        f = svd_left(a, 3)
        assert f.padded
        np.testing.assert_allclose(f.matrix.T @ f.matrix, np.eye(3), atol=1e-12)
        assert sin_theta(f.matrix[:, :1], np.arange(1.0, 6.0)[:, None] / np.linalg.norm(np.arange(1.0, 6.0))) < 1e-12

    def test_degenerate_gap_flag(self):
        f = svd_left(np.diag([2.0, 1.0, 1.0]), 2)
        assert f.gap_degenerate
        assert not svd_left(np.diag([3.0, 2.0, 1.0]), 2).gap_degenerate


class TestSvdRight:
    def test_diagonal(self):
        f = svd_right(np.diag([3.0, 2.0, 1.0]), 1)
        np.testing.assert_allclose(f.matrix, [[1.0], [0.0], [0.0]], atol=1e-15)
        assert f.side == "right"

    def test_transpose_symmetry(self):
        a = np.random.default_rng(5).standard_normal((6, 4))
        np.testing.assert_array_equal(svd_right(a, 2).matrix, svd_left(a.T, 2).matrix)

    def test_against_full_svd(self):
        a = np.random.default_rng(6).standard_normal((5, 9))
        ref, _ = svd_frame(a, 2, side="right")
        assert sin_theta(svd_right(a, 2), ref) <= 1e-8


class TestSinTheta:
    def test_identical(self):
        q = _orth(5, 2, 0)
        assert sin_theta(q, q) <= 1e-14

    def test_orthogonal_complements(self):
        e = np.eye(4)
        assert sin_theta(e[:, :2], e[:, 2:]) == pytest.approx(1.0)

    @pytest.mark.parametrize("theta", [0.0, 0.3, 1.2, -0.7, np.pi / 2])
    def test_angle(self, theta):
        u = np.array([[1.0], [0.0]])
        v = np.array([[np.cos(theta)], [np.sin(theta)]])
        assert sin_theta(u, v) == pytest.approx(abs(np.sin(theta)), abs=1e-15)

    def test_against_definition(self):
        u, v = _orth(9, 3, 1), _orth(9, 3, 2)
        assert sin_theta(u, v) == pytest.approx(sin_theta_ref(u, v), rel=1e-10)

    def test_symmetric_and_rotation_invariant(self):
        u, v = _orth(8, 3, 3), _orth(8, 3, 4)
        rot = _orth(3, 3, 5)
        assert sin_theta(u, v) == pytest.approx(sin_theta(v, u), abs=1e-10)
        assert sin_theta(u @ rot, v) == pytest.approx(sin_theta(u, v), abs=1e-10)

    def test_accepts_frames(self):
        f = OrthonormalFrame(np.eye(3)[:, :1])
        assert sin_theta(f, f) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            sin_theta(np.eye(3)[:, :1], np.eye(3)[:, :2])


class TestSmallestSingularValue:
    def test_identity(self):
        assert smallest_singular_value(np.eye(4)) == pytest.approx(1.0)

    def test_rank_deficient(self):
        assert smallest_singular_value(np.outer(np.ones(3), np.arange(3.0))) <= 1e-10

    def test_against_full_svd(self):
        a = np.random.default_rng(7).standard_normal((6, 4))
        ref = np.linalg.svd(a, compute_uv=False)[-1]
        assert smallest_singular_value(a) == pytest.approx(ref, rel=1e-10)

    def test_non_finite(self):
        with pytest.raises(NumericError):
            smallest_singular_value(np.array([[np.inf]]))


class TestFrameProperties:
    def test_projector_idempotent(self):
        f = svd_left(np.random.default_rng(8).standard_normal((7, 5)), 3)
        p = f.projector()
        np.testing.assert_allclose(p @ p, p, atol=1e-10)

    def test_maximizes_captured_energy(self):
        rng = np.random.default_rng(9)
        a = rng.standard_normal((10, 8))
        best = np.linalg.norm(svd_left(a, 3).matrix.T @ a)
        for seed in range(100):
            q = _orth(10, 3, 100 + seed)
            assert np.linalg.norm(q.T @ a) < best

    def test_fix_signs_ties_to_first_index(self):
        q = np.array([[-0.5], [0.5]])
        np.testing.assert_array_equal(fix_signs(q), [[0.5], [-0.5]])


class TestSinThetaProperties:
    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 8), st.data())
    def test_bounds_and_symmetry(self, p, data):
        r = data.draw(st.integers(1, p))
        u = _orth(p, r, data.draw(st.integers(0, 10**6)))
        v = _orth(p, r, data.draw(st.integers(0, 10**6)))
        s = sin_theta(u, v)
        assert -1e-15 <= s <= 1.0 + 1e-12
        assert s == pytest.approx(sin_theta(v, u), abs=1e-10)
        assert s == pytest.approx(sin_theta_ref(u, v), abs=1e-7)
        if r == p:
            assert s <= 1e-7
