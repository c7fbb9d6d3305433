"""Dense tensors and the sequential matricization algebra.

All index maps are column-major: the first mode varies fastest. With this
convention the sequential unfolding ``[X]_k`` of a tensor is a plain
Fortran-order reshape of its buffer, and ``Reshape(A, q1*q2, q3)`` of a
``q1 x (q2*q3)`` matrix is a Fortran-order reshape of the matrix. Matrices
are ordinary 2-D ``numpy`` arrays.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

_INT64_MAX = np.iinfo(np.int64).max


def checked_prod(values: Sequence[int]) -> int:
    """Product of dimensions, raising ``OverflowError`` past int64."""
    out = 1
    for v in values:
        out *= int(v)
        if out > _INT64_MAX:
            raise OverflowError(f"dimension product {tuple(values)} exceeds int64")
    return out


class DenseTensor:
    """Order-d real tensor stored as a flat float64 buffer in vec order.

    ``data`` is exactly ``vec(X)``: entry ``(i_1, ..., i_d)`` (0-based) lives
    at ``i_1 + p_1*i_2 + p_1*p_2*i_3 + ...``.
    """

    __slots__ = ("_dims", "_data", "_memo")

    def __init__(self, dims: Sequence[int], data):
        dims = tuple(int(p) for p in dims)
        if len(dims) < 1:
            raise ValueError("a tensor needs at least one mode")
        if any(p < 1 for p in dims):
            raise ValueError(f"dimensions must be positive, got {dims}")
        size = checked_prod(dims)
        buf = np.array(data, dtype=np.float64, copy=True).reshape(-1, order="F")
        if buf.size != size:
            raise ValueError(f"data has {buf.size} entries, dims {dims} need {size}")
        buf.setflags(write=False)
        self._dims = dims
        self._data = buf
        self._memo = {}

    def memo(self, key, compute):
        """Cache a value derived from this (immutable) tensor."""
        if key not in self._memo:
            self._memo[key] = compute()
        return self._memo[key]

    @classmethod
    def from_array(cls, arr) -> "DenseTensor":
        arr = np.asarray(arr, dtype=np.float64)
        return cls(arr.shape, arr.reshape(-1, order="F"))

    @classmethod
    def zeros(cls, dims: Sequence[int]) -> "DenseTensor":
        return cls(dims, np.zeros(checked_prod(dims)))

    @property
    def dims(self) -> tuple[int, ...]:
        return self._dims

    @property
    def order(self) -> int:
        return len(self._dims)

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def size(self) -> int:
        return self._data.size

    def to_array(self) -> np.ndarray:
        """Read-only ``numpy`` view with ``arr[i1, ..., id]`` indexing."""
        return self._data.reshape(self._dims, order="F")

    def __getitem__(self, index):
        return self.to_array()[index]

    def norm(self) -> float:
        return float(np.linalg.norm(self._data))

    def __add__(self, other: "DenseTensor") -> "DenseTensor":
        _same_dims(self, other)
        return DenseTensor(self._dims, self._data + other._data)

    def __sub__(self, other: "DenseTensor") -> "DenseTensor":
        _same_dims(self, other)
        return DenseTensor(self._dims, self._data - other._data)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DenseTensor):
            return NotImplemented
        return self._dims == other._dims and np.array_equal(self._data, other._data)

    __hash__ = None

    def __repr__(self) -> str:
        return f"DenseTensor(dims={self._dims})"


def _same_dims(a: DenseTensor, b: DenseTensor) -> None:
    if a.dims != b.dims:
        raise ValueError(f"dimension mismatch: {a.dims} vs {b.dims}")


def vectorize(t: DenseTensor) -> np.ndarray:
    return t.data.copy()


def sequential_unfold(t: DenseTensor, k: int) -> np.ndarray:
    """The ``(p_1...p_k) x (p_{k+1}...p_d)`` sequential unfolding ``[X]_k``.

    ``k`` counts modes from 1 and must satisfy ``1 <= k <= d - 1``. The
    result is a read-only view of the buffer.
    """
    d = t.order
    if not 1 <= k <= d - 1:
        raise ValueError(f"unfolding index k={k} out of range for order {d}")
    rows = checked_prod(t.dims[:k])
    return t.data.reshape(rows, -1, order="F")


def fold(m: np.ndarray, dims: Sequence[int], k: int) -> DenseTensor:
    """Inverse of :func:`sequential_unfold`."""
    m = np.asarray(m, dtype=np.float64)
    dims = tuple(int(p) for p in dims)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if len(dims) == 1:
        if m.size != dims[0]:
            raise ValueError(f"matrix of shape {m.shape} cannot fold to {dims}")
        return DenseTensor(dims, m.reshape(-1, order="F"))
    if not 1 <= k <= len(dims):
        raise ValueError(f"fold index k={k} out of range for order {len(dims)}")
    expect = (checked_prod(dims[:k]), checked_prod(dims[k:]))
    if m.shape != expect:
        raise ValueError(f"matrix of shape {m.shape} does not match unfolding {expect}")
    return DenseTensor(dims, m.reshape(-1, order="F"))


def reshape_matrix(a: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Column-major reshape between ``q1 x (q2 q3)`` and ``(q1 q2) x q3``.

    Realizes ``Ã[(i2-1)q1 + i1, i3] = A[i1, (i3-1)q2 + i2]`` in both
    directions; the target shape must keep the element count.
    """
    a = np.asarray(a, dtype=np.float64)
    if rows < 1 or cols < 1 or rows * cols != a.size:
        raise ValueError(f"cannot reshape {a.shape} into ({rows}, {cols})")
    r0, c0 = a.shape
    if rows % r0 and r0 % rows:
        raise ValueError(f"row counts {r0} and {rows} do not factor")
    return a.reshape(rows, cols, order="F")


def kronecker(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Dense Kronecker product. Intended for oracles and tests only."""
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    checked_prod(u.shape + v.shape)
    return np.kron(u, v)


def realignment_matrix(i: int, j: int) -> np.ndarray:
    """The ``(i^2 j) x j`` 0/1 matrix ``A^{(i,j)}`` of canonical basis blocks.

    Block row ``a`` of column ``l`` is ``e_{i(l-1)+a}`` in ``R^{ij}``, so
    ``[T]_j = (I ⊗ [T]_i) A`` for consecutive sequential unfoldings.
    """
    if i < 1 or j < 1:
        raise ValueError("realignment sizes must be positive")
    rows = checked_prod((i, i, j))
    if rows * j > 2**31:
        raise MemoryError(f"realignment matrix {rows}x{j} is too large")
    out = np.zeros((rows, j))
    block = i * j
    for col in range(j):
        for a in range(i):
            out[a * block + i * col + a, col] = 1.0
    return out


def _mode_sizes(dims: Sequence[int], kind: str, factors) -> list[int]:
    """Validate a factor chain and return the ranks r_0..r_d."""
    d = len(dims)
    if len(factors) != d - 1:
        raise ValueError(f"expected {d - 1} factors, got {len(factors)}")
    ranks = [1] * (d + 1)
    if kind == "forward":
        for k, m in enumerate(factors, start=1):
            if m.ndim != 2 or m.shape[0] != ranks[k - 1] * dims[k - 1]:
                raise ValueError(
                    f"factor {k} has shape {m.shape}, needs {ranks[k - 1] * dims[k - 1]} rows"
                )
            ranks[k] = m.shape[1]
    else:
        # factors are B_2..B_d; B_k is (p_k r_k) x r_{k-1}
        for k in range(d, 1, -1):
            b = factors[k - 2]
            if b.ndim != 2 or b.shape[0] != dims[k - 1] * ranks[k]:
                raise ValueError(
                    f"factor {k} has shape {b.shape}, needs {dims[k - 1] * ranks[k]} rows"
                )
            ranks[k - 1] = b.shape[1]
    return ranks


def forward_sequential_multiply(t: DenseTensor, factors) -> list[tuple[np.ndarray, np.ndarray]]:
    """Forward recurrence ``S~_k = M_k^T S_k``, ``S_{k+1} = Reshape(S~_k, ...)``.

    ``factors`` are ``M_1..M_{d-1}`` with ``M_k`` of shape
    ``(r_{k-1} p_k) x r_k``. Returns ``[(S_1, S~_1), ..., (S_{d-1}, S~_{d-1})]``.
    """
    factors = [np.asarray(m, dtype=np.float64) for m in factors]
    dims = t.dims
    d = len(dims)
    ranks = _mode_sizes(dims, "forward", factors)
    out = []
    s = sequential_unfold(t, 1)
    for k in range(1, d):
        s_tilde = factors[k - 1].T @ s
        out.append((s, s_tilde))
        if k < d - 1:
            s = s_tilde.reshape(ranks[k] * dims[k], -1, order="F")
    return out


def backward_sequential_multiply(t: DenseTensor, factors) -> list[tuple[np.ndarray, np.ndarray]]:
    """Backward recurrence ``W~_k = W_k B_{k+1}``, ``W_{k-1} = Reshape(W~_k, ...)``.

    ``factors`` are ``B_2..B_d`` with ``B_k`` of shape ``(p_k r_k) x r_{k-1}``.
    Returns ``[(W_1, W~_1), ..., (W_{d-1}, W~_{d-1})]`` in increasing ``k``.
    """
    factors = [np.asarray(b, dtype=np.float64) for b in factors]
    dims = t.dims
    d = len(dims)
    _mode_sizes(dims, "backward", factors)
    out = []
    w = sequential_unfold(t, d - 1)
    for k in range(d - 1, 0, -1):
        w_tilde = w @ factors[k - 1]
        out.append((w, w_tilde))
        if k > 1:
            w = w_tilde.reshape(checked_prod(dims[: k - 1]), -1, order="F")
    out.reverse()
    return out
