"""Truncated SVD frames and subspace distances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DENSE_CUTOFF = 64
POWER_TOL = 1e-10
POWER_MAXITER = 300
GAP_TOL = 1e-12


class NumericError(ArithmeticError):
    """Raised on non-finite input to a spectral routine."""


@dataclass(frozen=True)
class OrthonormalFrame:
    """A ``p x r`` matrix with orthonormal columns plus provenance flags.

    ``padded`` marks frames whose trailing columns complete a numerically
    rank-deficient input; ``gap_degenerate`` marks a tie between the r-th
    and (r+1)-th singular values, where the subspace is not unique.
    """

    matrix: np.ndarray
    side: str = "left"
    singular_values: np.ndarray | None = None
    gap_degenerate: bool = False
    padded: bool = False

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def rank(self) -> int:
        return self.matrix.shape[1]

    def projector(self) -> np.ndarray:
        return self.matrix @ self.matrix.T


def _check(a: np.ndarray, r: int) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {a.shape}")
    if not 1 <= r <= min(a.shape):
        raise ValueError(f"rank {r} out of range for a {a.shape[0]}x{a.shape[1]} matrix")
    if not np.all(np.isfinite(a)):
        raise NumericError("matrix has non-finite entries")
    return a


def fix_signs(q: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude entry is positive.

    Ties go to the lowest row index (``argmax`` returns the first hit).
    """
    if q.size == 0:
        return q
    idx = np.argmax(np.abs(q), axis=0)
    signs = np.sign(q[idx, np.arange(q.shape[1])])
    signs[signs == 0] = 1.0
    return q * signs


def _dense_left(a: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray]:
    m, n = a.shape
    if n >= 4 * m:
        # A = R^T Q^T: the left frame of a wide matrix is that of R^T
        tri = np.linalg.qr(a.T, mode="r")
        u, s, _ = np.linalg.svd(tri.T)
    else:
        u, s, _ = np.linalg.svd(a, full_matrices=False)
    return u[:, :r], s


def _block_power_left(a: np.ndarray, r: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Leading left singular frame by orthogonal iteration on ``A A^T``.

    A few extra columns beyond ``r`` speed up convergence; the stop rule is
    a sinΘ change of at most ``POWER_TOL`` between sweeps.
    """
    m, n = a.shape
    block = min(r + 8, m, n)
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(a @ rng.standard_normal((n, block)))
    for _ in range(POWER_MAXITER):
        q_new, _ = np.linalg.qr(a @ (a.T @ q))
        # Rayleigh-Ritz to order the block by singular value
        small = q_new.T @ a
        w, s, _ = np.linalg.svd(small, full_matrices=False)
        q_new = q_new @ w
        change = sin_theta_matrix(q[:, :r], q_new[:, :r])
        q = q_new
        if change <= POWER_TOL:
            break
    return q[:, :r], s


def _numerical_rank(s: np.ndarray, shape) -> int:
    if s.size == 0 or s[0] == 0.0:
        return 0
    tol = max(shape) * np.finfo(float).eps * s[0]
    return int(np.sum(s > tol))


def left_factorization(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All left singular vectors and values of a matrix with min-dim <= 64.

    :func:`svd_left` on the dense path is a truncation of this, so callers
    may factor once and cut frames of several widths with
    :func:`frame_from_factorization`.
    """
    a = _check(a, 1)
    if min(a.shape) > DENSE_CUTOFF:
        raise ValueError("left_factorization is for the dense path only")
    return _dense_left(a, min(a.shape))


def frame_from_factorization(u: np.ndarray, s: np.ndarray, r: int) -> OrthonormalFrame:
    if not 1 <= r <= u.shape[1]:
        raise ValueError(f"rank {r} out of range for a factorization of width {u.shape[1]}")
    return _finish(u[:, :r], s, r, u.shape[0])


def _finish(q: np.ndarray, s: np.ndarray, r: int, rows: int) -> OrthonormalFrame:
    numrank = _numerical_rank(s, (rows, s.size))
    padded = r > numrank
    if padded:
        # complete the range with an orthonormal basis of its complement
        base = q[:, :numrank]
        comp = np.eye(rows) - base @ base.T
        extra, _, _ = np.linalg.svd(comp, full_matrices=False)
        q = np.concatenate([base, extra[:, : r - numrank]], axis=1)
    degenerate = False
    if r < s.size and s[0] > 0:
        degenerate = bool(abs(s[r - 1] - s[r]) <= GAP_TOL * s[0])
    return OrthonormalFrame(
        fix_signs(q), "left", s[: min(r, s.size)].copy(), degenerate, padded
    )


def svd_left(a: np.ndarray, r: int, seed: int = 0) -> OrthonormalFrame:
    """Leading ``r`` left singular vectors of ``a`` as an orthonormal frame."""
    a = _check(a, r)
    if min(a.shape) <= DENSE_CUTOFF:
        q, s = _dense_left(a, r)
    else:
        q, s = _block_power_left(a, r, seed)
    return _finish(q, s, r, a.shape[0])


def svd_right(a: np.ndarray, r: int, seed: int = 0) -> OrthonormalFrame:
    """Leading ``r`` right singular vectors, via the transpose."""
    a = _check(a, r)
    f = svd_left(a.T, r, seed)
    return OrthonormalFrame(f.matrix, "right", f.singular_values, f.gap_degenerate, f.padded)


def sin_theta_matrix(u: np.ndarray, v: np.ndarray) -> float:
    if u.shape != v.shape:
        raise ValueError(f"frame shapes differ: {u.shape} vs {v.shape}")
    # ||(I - V V^T) U||_2 equals sqrt(1 - s_min^2) without cancellation
    resid = u - v @ (v.T @ u)
    s = np.linalg.svd(resid, compute_uv=False)
    return float(min(s[0], 1.0)) if s.size else 0.0


def sin_theta(u, v) -> float:
    """``sqrt(1 - s_r^2)`` with ``s_r`` the least singular value of ``U^T V``.

    Evaluated as the spectral norm of ``(I - V V^T) U`` so that nearly equal
    subspaces keep full relative accuracy.
    """
    u = u.matrix if isinstance(u, OrthonormalFrame) else np.asarray(u, dtype=np.float64)
    v = v.matrix if isinstance(v, OrthonormalFrame) else np.asarray(v, dtype=np.float64)
    return sin_theta_matrix(u, v)


def smallest_singular_value(a: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise NumericError("matrix has non-finite entries")
    return float(np.linalg.svd(a, compute_uv=False)[-1])
